#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "capri/train/trainer.hpp"

namespace capri::train {

struct Ensemble {
  std::vector<TrainedModel> members;
  std::size_t best_index = 0;

  const TrainedModel& best() const { return members.at(best_index); }
};

/// Index of the member with the highest validation R²; ties go to the lowest
/// index and members with undefined R² rank last.
std::size_t select_best(std::span<const Metrics> metrics);

/// Trains one member per seed (seeds must be distinct and non-empty).
/// Members run on up to `max_parallel` threads; results do not depend on it.
/// A failing member aborts the ensemble with an error naming its seed.
Ensemble train_ensemble(const SampleSet& train, const SampleSet& val,
                        const model::ModelConfig& model_config, const data::Vocab& vocab,
                        const TrainConfig& base_config, std::span<const std::uint64_t> seeds,
                        int max_parallel = 1, const EpochCallback& on_epoch = {});

struct Aggregate {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation across members
  Metrics pooled;           // metrics of the mean prediction
};

Aggregate aggregate(const Ensemble& ensemble, const SampleSet& samples);

/// Per-record mean and population std of member predictions
/// (rows = members).
void mean_and_std(const std::vector<std::vector<double>>& member_predictions,
                  std::vector<double>& mean, std::vector<double>& std);

}  // namespace capri::train
