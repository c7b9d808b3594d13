#include "capri/train/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "capri/error.hpp"

namespace capri::train {

std::size_t select_best(std::span<const Metrics> metrics) {
  if (metrics.empty()) throw Error(ErrorCode::InvalidArgument, "no members to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    const auto& cand = metrics[i].r2;
    const auto& cur = metrics[best].r2;
    if (cand && (!cur || *cand > *cur)) best = i;
  }
  return best;
}

Ensemble train_ensemble(const SampleSet& train, const SampleSet& val,
                        const model::ModelConfig& model_config, const data::Vocab& vocab,
                        const TrainConfig& base_config, std::span<const std::uint64_t> seeds,
                        int max_parallel, const EpochCallback& on_epoch) {
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw Error(ErrorCode::InvalidArgument, "ensemble seeds must be distinct");
  }

  std::vector<std::optional<TrainedModel>> slots(seeds.size());
  std::vector<std::exception_ptr> failures(seeds.size());
  std::mutex callback_mutex;
  auto run = [&](std::size_t k) {
    try {
      TrainConfig cfg = base_config;
      cfg.seed = seeds[k];
      EpochCallback cb;
      if (on_epoch) {
        cb = [&](const EpochRecord& r) {
          std::lock_guard lock(callback_mutex);
          on_epoch(r);
        };
      }
      slots[k] = train_model(train, val, model_config, vocab, cfg, cb);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  };

  const std::size_t width = static_cast<std::size_t>(std::max(1, max_parallel));
  for (std::size_t start = 0; start < seeds.size(); start += width) {
    const std::size_t end = std::min(seeds.size(), start + width);
    if (end - start == 1) {
      run(start);
      continue;
    }
    std::vector<std::thread> workers;
    for (std::size_t k = start; k < end; ++k) workers.emplace_back(run, k);
    for (auto& w : workers) w.join();
  }

  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (!failures[k]) continue;
    try {
      std::rethrow_exception(failures[k]);
    } catch (const Error& e) {
      throw Error(e.code(), "ensemble member with seed " + std::to_string(seeds[k]) +
                                " failed: " + e.what());
    }
  }

  Ensemble ens;
  std::vector<Metrics> metrics;
  for (auto& slot : slots) {
    metrics.push_back(slot->val_metrics);
    ens.members.push_back(std::move(*slot));
  }
  ens.best_index = select_best(metrics);
  return ens;
}

void mean_and_std(const std::vector<std::vector<double>>& member_predictions,
                  std::vector<double>& mean, std::vector<double>& std) {
  const std::size_t k = member_predictions.size();
  const std::size_t n = k ? member_predictions.front().size() : 0;
  mean.assign(n, 0.0);
  std.assign(n, 0.0);
  if (k == 0) return;
  for (const auto& row : member_predictions) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m /= static_cast<double>(k);
  for (const auto& row : member_predictions) {
    for (std::size_t i = 0; i < n; ++i) std[i] += (row[i] - mean[i]) * (row[i] - mean[i]);
  }
  for (auto& s : std) s = std::sqrt(s / static_cast<double>(k));
}

Aggregate aggregate(const Ensemble& ensemble, const SampleSet& samples) {
  if (ensemble.members.empty()) throw Error(ErrorCode::InvalidArgument, "empty ensemble");
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "empty evaluation set");
  std::vector<std::vector<double>> preds;
  for (const auto& m : ensemble.members) preds.push_back(predict(m.net, samples));
  Aggregate agg;
  mean_and_std(preds, agg.mean, agg.std);
  agg.pooled = compute_metrics(targets(samples), agg.mean);
  return agg;
}

}  // namespace capri::train
