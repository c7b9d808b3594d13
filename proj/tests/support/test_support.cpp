#include "test_support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>
#include <unistd.h>

#include "capri/dataset/split.hpp"
#include "capri/dataset/synth.hpp"
#include "capri/train/samples.hpp"
#include "capri/util/hash.hpp"

namespace capri::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

const data::ScanCatalog& synth_catalog(std::size_t n_records, int image_size) {
  static std::mutex mu;
  static std::vector<std::pair<std::pair<std::size_t, int>, std::unique_ptr<data::ScanCatalog>>> cache;
  static TempDir dir("capri-synth");
  std::lock_guard lock(mu);
  for (const auto& [key, cat] : cache) {
    if (key.first == n_records && key.second == image_size) return *cat;
  }
  data::SynthConfig config;
  config.n_records = n_records;
  config.image_size = image_size;
  const auto out = dir / (std::to_string(n_records) + "_" + std::to_string(image_size));
  cache.emplace_back(std::make_pair(n_records, image_size),
                     std::make_unique<data::ScanCatalog>(data::synth_generate(config, out)));
  return *cache.back().second;
}

model::ModelConfig tiny_config(const data::Vocab& vocab, int input_size, int latent) {
  model::ModelConfig base;
  base.input_size = input_size;
  base.latent_dim = latent;
  return train::model_config_for(vocab, base);
}

data::ImageTensor random_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  data::ImageTensor img(size, size);
  for (auto& v : img.values) v = u(rng);
  return img;
}

namespace {

train::TrainedModel train_tiny(std::uint64_t seed) {
  const auto& catalog = synth_catalog();
  const auto split = data::stratified_split(catalog, {});
  const auto config = tiny_config(catalog.vocab);
  const auto tr = train::load_samples(catalog, split.train, config.input_size);
  const auto va = train::load_samples(catalog, split.val, config.input_size);
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.seed = seed;
  return train::train_model(tr, va, config, catalog.vocab, tc);
}

}  // namespace

const train::TrainedModel& tiny_trained_model() {
  static const train::TrainedModel model = train_tiny(11);
  return model;
}

const std::vector<train::TrainedModel>& tiny_members() {
  static const std::vector<train::TrainedModel> members = [] {
    std::vector<train::TrainedModel> out;
    out.push_back(train_tiny(21));
    out.push_back(train_tiny(22));
    return out;
  }();
  return members;
}

}  // namespace capri::testing

namespace capri::testing {

std::vector<GradientProbe> gradient_check(std::size_t per_tensor, std::size_t total, double h,
                                          std::uint64_t seed) {
  model::ModelConfig config;
  config.input_size = 16;
  config.latent_dim = 4;
  config.fields.noise = true;
  model::VaeModel<double> net(config, seed);
  net.set_target_normalization(5.0, 3.0);
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::normal_distribution<double> normal;
  // A non-trivial posterior variance so the logvar path carries gradient.
  for (auto& p : net.parameters()) {
    if (p.name.rfind("head_logvar", 0) == 0) {
      for (auto& v : p.value) v = 0.01 * normal(rng);
    }
  }

  std::vector<data::ImageTensor> images;
  model::TrainBatch batch;
  for (int i = 0; i < 4; ++i) images.push_back(random_image(16, mix_seed(seed, 10 + i)));
  for (const auto& img : images) batch.images.push_back(&img);
  batch.params = {{0, 0, 0, 0}, {1, 1, 2, 3}, {3, 0, 1, 2}, {2, 1, 2, 1}};
  batch.targets = {2.0, 9.0, -1.0, 4.0};
  const double beta = 0.1;
  const std::uint64_t noise_seed = mix_seed(seed, 2);

  net.train_step(batch, beta, noise_seed, true, false);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  auto& params = net.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::uniform_int_distribution<std::size_t> pick(0, params[t].size() - 1);
    for (std::size_t k = 0; k < per_tensor; ++k) picks.emplace_back(t, pick(rng));
  }
  std::size_t n_total = 0;
  for (const auto& p : params) n_total += p.size();
  std::uniform_int_distribution<std::size_t> any(0, n_total - 1);
  while (picks.size() < total) {
    std::size_t flat = any(rng), t = 0;
    while (flat >= params[t].size()) flat -= params[t++].size();
    picks.emplace_back(t, flat);
  }

  std::vector<GradientProbe> out;
  for (const auto& [t, i] : picks) {
    auto& value = params[t].value[i];
    const double saved = value;
    value = saved + h;
    const double up = net.train_step(batch, beta, noise_seed, false, false).total;
    value = saved - h;
    const double down = net.train_step(batch, beta, noise_seed, false, false).total;
    value = saved;
    GradientProbe probe;
    probe.tensor = params[t].name;
    probe.index = i;
    probe.analytic = params[t].grad[i];
    probe.numeric = (up - down) / (2.0 * h);
    probe.rel_error = std::abs(probe.analytic - probe.numeric) /
                      std::max({std::abs(probe.analytic), std::abs(probe.numeric), 1e-8});
    out.push_back(probe);
  }
  return out;
}

}  // namespace capri::testing
