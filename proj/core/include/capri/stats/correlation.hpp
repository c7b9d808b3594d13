#pragma once

#include <optional>
#include <span>
#include <vector>

#include "capri/dataset/catalog.hpp"
#include "capri/model/vae.hpp"
#include "capri/train/samples.hpp"

namespace capri::stats {

/// Pearson r; empty when either input is constant.
/// Throws Error(InvalidArgument) for mismatched or too-short inputs.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Correlation ratio η = sqrt(SS_between / SS_total) of y grouped by a
/// categorical code; empty when y is constant.
std::optional<double> correlation_ratio(std::span<const int> groups, std::span<const double> y);

struct LatentEntry {
  int dim = 0;
  std::optional<double> r;  // empty for a constant latent dimension
};

struct ParameterAssociation {
  data::Field field = data::Field::Voltage;
  std::optional<double> eta;
};

struct LatentCorrelation {
  std::vector<LatentEntry> latents;  // sorted by |r| descending, absent entries last
  std::vector<ParameterAssociation> parameters;
};

/// Correlates the posterior means of every sample with its observed SNR.
/// Throws Error(EmptyDataset) below 3 samples and Error(ConstantColumn)
/// when the SNR itself is constant.
LatentCorrelation latent_correlation(const model::VaeModel<float>& net, const train::SampleSet& samples);

}  // namespace capri::stats
