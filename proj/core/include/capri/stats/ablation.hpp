#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "capri/model/config.hpp"
#include "capri/train/trainer.hpp"

namespace capri::stats {

/// A model variant; the image is always an input.
struct AblationVariant {
  std::string name;
  model::FieldSet fields;
};

/// Full model, full plus the inert noise field, then v/t/a dropped one at a
/// time and the image-only model, in this row order:
/// (v,t,a), (v,t,a,noise), (v,a), (t,a), image only, (v,t).
std::vector<AblationVariant> default_ablation_variants();

/// Parses names such as "full", "noise", "image", "drop_v", or a field list
/// like "v,a" / "v,t,a,noise". Throws Error(InvalidArgument).
AblationVariant parse_variant(const std::string& text);

struct AblationRow {
  AblationVariant variant;
  train::Metrics metrics;
  int best_epoch = 0;
  std::size_t parameter_count = 0;
};

/// Trains one model per variant with the same seed and config; excluded
/// fields are removed from the architecture. Variants run on up to
/// `max_parallel` threads; results do not depend on it.
/// Throws Error(InvalidArgument) for an empty list or duplicate names.
std::vector<AblationRow> run_ablation(std::span<const AblationVariant> variants, const train::SampleSet& train,
                                      const train::SampleSet& val, const data::Vocab& vocab,
                                      const model::ModelConfig& base, const train::TrainConfig& config,
                                      int max_parallel = 1);

/// Row label, e.g. "Image (i) + metadata (v, a)".
std::string variant_label(const AblationVariant& variant);

/// Fixed-width table with columns: variant, MAE, RMSE, R².
void write_ablation_table(std::ostream& out, std::span<const AblationRow> rows);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace capri::stats
