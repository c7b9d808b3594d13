#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "capri/dataset/catalog.hpp"
#include "capri/dataset/split.hpp"
#include "capri/model/vae.hpp"
#include "capri/train/metrics.hpp"
#include "capri/train/samples.hpp"

namespace capri::train {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 3e-4;
  std::string optimizer = "adam";
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  double kl_beta = 1e-3;
  /// Fraction of the planned optimizer steps over which the KL weight ramps
  /// linearly from 0 to kl_beta.
  double kl_warmup_fraction = 0.1;
  /// Fraction of the planned optimizer steps over which the learning rate
  /// ramps linearly up to learning_rate.
  double lr_warmup_fraction = 0.1;
  bool augment = true;
  /// Extreme-SNR weighting for the sampler (only the extreme_* fields are used).
  data::SplitSpec sampling;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  std::optional<double> val_r2;
};

/// A frozen model plus everything needed to interpret and reproduce it.
struct TrainedModel {
  model::VaeModel<float> net;
  data::Vocab vocab;
  TrainConfig train;
  Metrics val_metrics;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains one model with Adam on weighted-sampler minibatches.
///
/// Each epoch draws as many samples as the expanded weighted index holds,
/// with replacement and probability proportional to weight; training images
/// are augmented when enabled. After every epoch the model is evaluated on
/// `val` and the weights with the best validation R² are kept (RMSE decides
/// when R² is undefined). Training stops as soon as more than
/// `early_stop_patience` consecutive epochs fail to improve, so a patience of
/// 0 stops at the first non-improving epoch.
///
/// The seed determines initialization, data order, augmentation, dropout and
/// reparameterization noise. Throws Error(EmptyDataset) and
/// Error(NonFiniteLoss).
TrainedModel train_model(const SampleSet& train, const SampleSet& val,
                         const model::ModelConfig& model_config, const data::Vocab& vocab,
                         const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Deterministic predictions, evaluated in batches.
std::vector<double> predict(const model::VaeModel<float>& net, const SampleSet& samples,
                            int batch_size = 32);

/// Throws Error(EmptyDataset).
Metrics evaluate(const model::VaeModel<float>& net, const SampleSet& samples);

/// One JSON object per line: epoch, train_loss, val_mae, val_rmse, val_r2.
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);

/// Model config sized to a vocabulary.
model::ModelConfig model_config_for(const data::Vocab& vocab, model::ModelConfig base = {});

}  // namespace capri::train
