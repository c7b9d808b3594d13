#include "capri/causal/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "capri/dataset/image.hpp"
#include "capri/error.hpp"
#include "capri/util/csv.hpp"

namespace capri::causal {
namespace {

constexpr std::string_view kDefaultScenarios =
    "voltage,current,agent,do_voltage,do_current,do_agent\n"
    "100,215,BiNPs 50nm,,,Iodine\n"
    "100,215,BiNPs 50nm,,,BiNPs 100nm\n"
    "80,215,Iodine,100,,\n"
    "80,215,Iodine,120,,\n"
    "80,215,Iodine,140,,\n"
    "120,430,BiNPs 100nm,,215,Iodine\n"
    "140,430,Iodine,,,BiNPs 100nm\n"
    "140,430,Iodine,,,BiNPs 50nm\n"
    "100,430,BiNPs 100nm,80,,\n"
    "100,430,BiNPs 100nm,120,,\n"
    "100,430,BiNPs 100nm,140,,\n"
    "100,430,BiNPs 100nm,,215,\n";

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Scenario> parse_scenarios(std::string_view csv_text) {
  const auto table = csv::parse(csv_text);
  if (table.header.empty()) return {};
  const auto col = [&](std::string_view name) { return table.column(name); };
  const auto id = col("record_id");
  const auto v = col("voltage"), t = col("current"), a = col("agent");
  const auto dv = col("do_voltage"), dt = col("do_current"), da = col("do_agent");
  if (!id && !(v && t && a)) {
    throw Error(ErrorCode::MalformedScenario,
                "scenario file needs voltage,current,agent columns or a record_id column");
  }
  if (!dv && !dt && !da) {
    throw Error(ErrorCode::MalformedScenario, "scenario file has no do_voltage/do_current/do_agent column");
  }
  std::vector<Scenario> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto get = [&](const std::optional<std::size_t>& c) {
      return c && *c < row.size() ? trim(row[*c]) : std::string{};
    };
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedScenario, "row " + std::to_string(r) + ": expected " +
                                                    std::to_string(table.header.size()) + " fields, got " +
                                                    std::to_string(row.size()));
    }
    Scenario s;
    if (const auto text = get(id); !text.empty()) {
      std::size_t value = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || p != text.data() + text.size()) {
        throw Error(ErrorCode::MalformedScenario, "row " + std::to_string(r) + ": bad record_id '" + text + "'");
      }
      s.record_id = value;
    }
    s.voltage = get(v);
    s.current = get(t);
    s.agent = get(a);
    if (!s.record_id && (s.voltage.empty() || s.current.empty() || s.agent.empty())) {
      throw Error(ErrorCode::MalformedScenario,
                  "row " + std::to_string(r) + ": selector needs voltage, current and agent");
    }
    s.do_voltage = get(dv);
    s.do_current = get(dt);
    s.do_agent = get(da);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenarios(buf.str());
}

void write_scenarios(std::ostream& out, const std::vector<Scenario>& scenarios) {
  csv::write_row(out, {"record_id", "voltage", "current", "agent", "do_voltage", "do_current", "do_agent"});
  for (const auto& s : scenarios) {
    csv::write_row(out, {s.record_id ? std::to_string(*s.record_id) : std::string{}, s.voltage, s.current,
                         s.agent, s.do_voltage, s.do_current, s.do_agent});
  }
}

std::string_view default_scenarios_csv() { return kDefaultScenarios; }

std::vector<Scenario> default_scenarios() { return parse_scenarios(kDefaultScenarios); }

ImageCache::ImageCache(const data::ScanCatalog& catalog, int input_size)
    : catalog_(catalog), input_size_(input_size) {}

std::shared_ptr<const data::ImageTensor> ImageCache::get(std::size_t record_id) const {
  if (record_id >= catalog_.records.size()) {
    throw Error(ErrorCode::RecordNotFound, "record " + std::to_string(record_id) + " not found");
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = images_.find(record_id); it != images_.end()) return it->second;
  }
  auto image = std::make_shared<const data::ImageTensor>(
      data::preprocess(catalog_.resolve(catalog_.records[record_id]), input_size_));
  std::lock_guard lock(mutex_);
  return images_.emplace(record_id, std::move(image)).first->second;
}

data::AcquisitionParams factual_params(const train::TrainedModel& model, const data::ScanCatalog& catalog,
                                       std::size_t record_id) {
  if (record_id >= catalog.records.size()) {
    throw Error(ErrorCode::RecordNotFound, "record " + std::to_string(record_id) + " not found");
  }
  data::AcquisitionParams p;
  try {
    p = model.vocab.encode(catalog.records[record_id]);
  } catch (const Error& e) {
    throw Error(ErrorCode::UnknownLevel, "record " + std::to_string(record_id) + ": " + e.what());
  }
  p.noise = data::inert_noise_level(record_id, model.net.config().n_noise);
  return p;
}

std::vector<std::size_t> select_records(const Scenario& s, const data::ScanCatalog& catalog) {
  if (s.record_id) {
    if (*s.record_id >= catalog.records.size()) {
      throw Error(ErrorCode::RecordNotFound, "record " + std::to_string(*s.record_id) + " not found");
    }
    return {*s.record_id};
  }
  const auto& vocab = catalog.vocab;
  const auto v = vocab.index_of(data::Field::Voltage, s.voltage);
  const auto t = vocab.index_of(data::Field::Current, s.current);
  const auto a = vocab.index_of(data::Field::Agent, s.agent);
  std::vector<std::size_t> out;
  if (v && t && a) {
    for (std::size_t i = 0; i < catalog.records.size(); ++i) {
      const auto p = vocab.encode(catalog.records[i]);
      if (p.voltage == *v && p.current == *t && p.agent == *a) out.push_back(i);
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::RecordNotFound,
                "no record with voltage=" + s.voltage + " current=" + s.current + " agent=" + s.agent);
  }
  return out;
}

std::vector<DoAssignment> scenario_assignments(const Scenario& s, const data::Vocab& vocab) {
  std::vector<DoAssignment> out;
  if (!s.do_voltage.empty()) out.push_back(make_assignment(vocab, data::Field::Voltage, s.do_voltage));
  if (!s.do_current.empty()) out.push_back(make_assignment(vocab, data::Field::Current, s.do_current));
  if (!s.do_agent.empty()) out.push_back(make_assignment(vocab, data::Field::Agent, s.do_agent));
  return out;
}

std::vector<ScenarioResult> run_scenarios(const train::Ensemble& models, EnsembleMode mode,
                                          const ImageCache& images, const std::vector<Scenario>& scenarios,
                                          const Abduction& abduction) {
  if (models.members.empty()) throw Error(ErrorCode::InvalidArgument, "no models loaded");
  const auto& catalog = images.catalog();
  std::vector<const train::TrainedModel*> active;
  if (mode == EnsembleMode::BestMember) {
    active.push_back(&models.best());
  } else {
    for (const auto& m : models.members) active.push_back(&m);
  }

  std::vector<ScenarioResult> out;
  out.reserve(scenarios.size());
  for (const auto& s : scenarios) {
    const auto ids = select_records(s, catalog);
    ScenarioResult res;
    res.n_records = ids.size();
    const auto& first = catalog.records[ids.front()];
    res.v = std::to_string(first.voltage_kvp);
    res.t = std::to_string(first.current_mas);
    res.a = first.agent;
    double label_sum = 0.0;
    for (std::size_t id : ids) label_sum += catalog.records[id].snr;
    res.snr_label = label_sum / static_cast<double>(ids.size());

    std::vector<std::vector<double>> per_model;
    for (const auto* model : active) {
      const auto assignments = scenario_assignments(s, model->vocab);
      double sum[3] = {0.0, 0.0, 0.0};
      for (std::size_t id : ids) {
        const auto one = what_if(model->net, model->vocab, *images.get(id), factual_params(*model, catalog, id),
                                 assignments, abduction);
        sum[0] += one.snr_obs;
        sum[1] += one.snr_i;
        sum[2] += one.snr_cf;
        res.result.assignments = one.assignments;
      }
      const double n = static_cast<double>(ids.size());
      per_model.push_back({sum[0] / n, sum[1] / n, sum[2] / n});
    }
    if (mode == EnsembleMode::BestMember) {
      res.result.snr_obs = per_model[0][0];
      res.result.snr_i = per_model[0][1];
      res.result.snr_cf = per_model[0][2];
    } else {
      std::vector<double> mean, std;
      train::mean_and_std(per_model, mean, std);
      res.result.snr_obs = mean[0];
      res.result.snr_i = mean[1];
      res.result.snr_cf = mean[2];
      res.result.uncertainty = Uncertainty{std[0], std[1], std[2]};
    }
    res.scenario = describe(res.result.assignments, active.front()->vocab);
    out.push_back(std::move(res));
  }
  return out;
}

void write_results_csv(std::ostream& out, const std::vector<ScenarioResult>& results) {
  csv::write_row(out, {"v", "t", "a", "snr_obs", "scenario", "snr_i", "snr_cf", "snr_label", "n_records",
                       "std_obs", "std_i", "std_cf"});
  for (const auto& r : results) {
    const auto& u = r.result.uncertainty;
    csv::write_row(out, {r.v, r.t, r.a, fmt(r.result.snr_obs), r.scenario, fmt(r.result.snr_i),
                         fmt(r.result.snr_cf), fmt(r.snr_label), std::to_string(r.n_records),
                         u ? fmt(u->std_obs) : "", u ? fmt(u->std_i) : "", u ? fmt(u->std_cf) : ""});
  }
}

}  // namespace capri::causal
