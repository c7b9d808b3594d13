#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capri/causal/engine.hpp"
#include "capri/dataset/catalog.hpp"

namespace capri::causal {

/// One scenario row. The selector is either an explicit record id or the
/// factual (voltage, current, agent) levels; do_* fields left empty mean no
/// assignment to that parameter.
struct Scenario {
  std::optional<std::size_t> record_id;
  std::string voltage;
  std::string current;
  std::string agent;
  std::string do_voltage;
  std::string do_current;
  std::string do_agent;
};

/// Columns: voltage,current,agent,do_voltage,do_current,do_agent with an
/// optional record_id column. Throws Error(MalformedScenario).
std::vector<Scenario> parse_scenarios(std::string_view csv_text);
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);
void write_scenarios(std::ostream& out, const std::vector<Scenario>& scenarios);

/// The twelve built-in interventions.
std::string_view default_scenarios_csv();
std::vector<Scenario> default_scenarios();

/// Thread-safe cache of preprocessed record images.
class ImageCache {
 public:
  ImageCache(const data::ScanCatalog& catalog, int input_size);

  /// Throws Error(RecordNotFound).
  std::shared_ptr<const data::ImageTensor> get(std::size_t record_id) const;
  const data::ScanCatalog& catalog() const noexcept { return catalog_; }
  int input_size() const noexcept { return input_size_; }

 private:
  const data::ScanCatalog& catalog_;
  int input_size_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::size_t, std::shared_ptr<const data::ImageTensor>> images_;
};

/// Factual params of a catalog record encoded in a model's vocabulary.
/// Throws Error(RecordNotFound) or Error(UnknownLevel).
data::AcquisitionParams factual_params(const train::TrainedModel& model, const data::ScanCatalog& catalog,
                                       std::size_t record_id);

/// Record ids matching a scenario selector. Throws Error(RecordNotFound).
std::vector<std::size_t> select_records(const Scenario& scenario, const data::ScanCatalog& catalog);

/// Assignments of a scenario, resolved against a vocab.
std::vector<DoAssignment> scenario_assignments(const Scenario& scenario, const data::Vocab& vocab);

struct ScenarioResult {
  std::string v, t, a;     // factual levels of the selector
  std::string scenario;    // "do(a=Iodine)"
  WhatIfResult result;     // averaged over the matched records
  double snr_label = 0.0;  // mean observed label of the matched records
  std::size_t n_records = 0;
};

/// Per scenario: every model computes obs/i/cf for each matched record and
/// averages over the records; the ensemble mode then reports the mean and
/// population std over members. With a single record the result is
/// identical to what_if on that record.
std::vector<ScenarioResult> run_scenarios(const train::Ensemble& models, EnsembleMode mode,
                                          const ImageCache& images, const std::vector<Scenario>& scenarios,
                                          const Abduction& abduction = {});

/// Header: v,t,a,snr_obs,scenario,snr_i,snr_cf,snr_label,n_records,std_obs,std_i,std_cf.
/// The std columns are empty without an ensemble.
void write_results_csv(std::ostream& out, const std::vector<ScenarioResult>& results);

}  // namespace capri::causal
