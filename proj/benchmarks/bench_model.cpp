#include <benchmark/benchmark.h>

#include <random>

#include "capri/model/vae.hpp"

namespace {

using capri::data::AcquisitionParams;
using capri::data::ImageTensor;
using capri::model::ModelConfig;
using capri::model::VaeModel;

ModelConfig config_for(int input) {
  ModelConfig c;
  c.input_size = input;
  return c;
}

ImageTensor image_of(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageTensor img(size, size);
  for (auto& p : img.values) p = u(rng);
  return img;
}

AcquisitionParams params_of(int i) { return {i % 4, i % 2, i % 3, 0}; }

void BM_Forward(benchmark::State& state) {
  const int input = static_cast<int>(state.range(0));
  const VaeModel<float> net(config_for(input), 1);
  const auto img = image_of(input, 2);
  const auto p = params_of(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(img, p, capri::model::ForwardMode::Deterministic));
  }
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  const int input = static_cast<int>(state.range(0));
  VaeModel<float> net(config_for(input), 1);
  std::vector<ImageTensor> images;
  capri::model::TrainBatch batch;
  for (int i = 0; i < 32; ++i) images.push_back(image_of(input, i));
  for (int i = 0; i < 32; ++i) {
    batch.images.push_back(&images[i]);
    batch.params.push_back(params_of(i));
    batch.targets.push_back(0.1 * i);
  }
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.train_step(batch, 1e-3, ++seed));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
