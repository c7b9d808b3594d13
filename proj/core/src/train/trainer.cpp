#include "capri/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "capri/error.hpp"
#include "capri/util/hash.hpp"

namespace capri::train {
namespace {

class Adam {
 public:
  Adam(const model::VaeModel<float>& net, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& p : net.parameters()) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  void step(model::VaeModel<float>& net, double lr_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    const float lr = static_cast<float>(lr_scale * cfg_.learning_rate * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(cfg_.adam_beta1);
    const float b2 = static_cast<float>(cfg_.adam_beta2);
    const float eps = static_cast<float>(cfg_.adam_eps * std::sqrt(c2));
    auto& params = net.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      float* m = m_[k].data();
      float* v = v_[k].data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const float g = p.grad[i];
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        p.value[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<std::vector<float>> m_, v_;
  long long t_ = 0;
};

bool improves(const Metrics& candidate, const std::optional<Metrics>& best) {
  if (!best) return true;
  if (candidate.r2 && best->r2) return *candidate.r2 > *best->r2;
  return candidate.rmse < best->rmse;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (epochs <= 0) fail("epochs must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (optimizer != "adam") fail("only the adam optimizer is supported");
  if (early_stop_patience < 0) fail("early_stop_patience must be non-negative");
  if (!(kl_beta >= 0.0)) fail("kl_beta must be non-negative");
  if (!(kl_warmup_fraction >= 0.0 && kl_warmup_fraction <= 1.0)) fail("kl_warmup_fraction must be in [0,1]");
  if (!(lr_warmup_fraction >= 0.0 && lr_warmup_fraction <= 1.0)) fail("lr_warmup_fraction must be in [0,1]");
}

model::ModelConfig model_config_for(const data::Vocab& vocab, model::ModelConfig base) {
  base.n_voltage = static_cast<int>(vocab.size(data::Field::Voltage));
  base.n_current = static_cast<int>(vocab.size(data::Field::Current));
  base.n_agent = static_cast<int>(vocab.size(data::Field::Agent));
  return base;
}

std::vector<double> predict(const model::VaeModel<float>& net, const SampleSet& samples,
                            int batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<const data::ImageTensor*> images;
  std::vector<data::AcquisitionParams> params;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    images.clear();
    params.clear();
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&samples[i].image);
      params.push_back(samples[i].params);
    }
    const auto batch = net.predict_batch(images, params);
    out.insert(out.end(), batch.begin(), batch.end());
  }
  return out;
}

Metrics evaluate(const model::VaeModel<float>& net, const SampleSet& samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "empty evaluation set");
  const auto y_hat = predict(net, samples);
  const auto y = targets(samples);
  return compute_metrics(y, y_hat);
}

TrainedModel train_model(const SampleSet& train, const SampleSet& val,
                         const model::ModelConfig& model_config, const data::Vocab& vocab,
                         const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "empty training set");
  if (val.empty()) throw Error(ErrorCode::EmptyDataset, "empty validation set");

  model::VaeModel<float> net(model_config, mix_seed(config.seed, 1));
  {
    const auto y = targets(train);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / y.size());
    net.set_target_normalization(mean, sd > 0.0 ? sd : 1.0);
  }

  const auto weighted = data::sample_weights(targets(train), config.sampling);
  std::discrete_distribution<std::size_t> sampler(weighted.weights.begin(), weighted.weights.end());
  const std::size_t epoch_size = weighted.indices.size();
  const std::size_t steps_per_epoch = (epoch_size + config.batch_size - 1) / config.batch_size;
  const double planned_steps = static_cast<double>(steps_per_epoch) * config.epochs;
  const double warmup_steps = config.kl_warmup_fraction * planned_steps;
  const double lr_warmup_steps = config.lr_warmup_fraction * planned_steps;

  std::mt19937_64 order_rng(mix_seed(config.seed, 2));
  Adam adam(net, config);
  TrainedModel result{net, vocab, config, {}, {}, 0};
  std::optional<Metrics> best;
  int stale = 0;
  long long step = 0;

  std::vector<data::ImageTensor> augmented;
  model::TrainBatch batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> draws(epoch_size);
    for (auto& d : draws) d = weighted.indices[sampler(order_rng)];

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < epoch_size; start += config.batch_size) {
      const std::size_t end = std::min(epoch_size, start + static_cast<std::size_t>(config.batch_size));
      augmented.clear();
      augmented.reserve(end - start);
      batch.images.clear();
      batch.params.clear();
      batch.targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train[draws[i]];
        if (config.augment) {
          augmented.push_back(data::augment(s.image, mix_seed(config.seed, 0x1000000ULL + step * 4096 + (i - start))));
        } else {
          augmented.push_back(s.image);
        }
        batch.params.push_back(s.params);
        batch.targets.push_back(s.snr);
      }
      for (const auto& img : augmented) batch.images.push_back(&img);

      const double beta = warmup_steps > 0.0
                              ? config.kl_beta * std::min(1.0, static_cast<double>(step) / warmup_steps)
                              : config.kl_beta;
      const auto lb = net.train_step(batch, beta, mix_seed(config.seed, 0x100000000ULL + step));
      adam.step(net, lr_warmup_steps > 0.0 ? std::min(1.0, (step + 1) / lr_warmup_steps) : 1.0);
      loss_sum += lb.total * static_cast<double>(end - start);
      ++step;
    }

    const Metrics vm = evaluate(net, val);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(epoch_size), vm.mae, vm.rmse, vm.r2};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (improves(vm, best)) {
      best = vm;
      result.net = net;
      result.val_metrics = vm;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale > config.early_stop_patience) {
      break;
    }
  }
  return result;
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& r : history) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"val_mae", r.val_mae},
                     {"val_rmse", r.val_rmse},
                     {"val_r2", r.val_r2 ? nlohmann::json(*r.val_r2) : nlohmann::json(nullptr)}};
    out << j.dump() << '\n';
  }
}

}  // namespace capri::train
