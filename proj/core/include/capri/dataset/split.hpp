#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "capri/dataset/catalog.hpp"

namespace capri::data {

struct SplitSpec {
  double train_fraction = 0.8;
  int n_quantiles = 10;
  std::uint64_t seed = 0;
  double extreme_quantile = 0.05;
  int extreme_dup_factor = 2;
  double extreme_weight_boost = 2.0;

  /// Throws Error(InvalidArgument) on out-of-range fields.
  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Stratified train/validation split by SNR quantile bins.
///
/// Records are ordered by SNR (ties by index) and cut into `n_quantiles`
/// contiguous bins of near-equal size. The overall train count is
/// round(train_fraction · N); each bin receives floor(train_fraction · n_bin)
/// and the remaining slots go to the bins with the largest fractional
/// remainders (ties to the lower bin). Bin members are shuffled with the seed
/// before being assigned. Both index lists are returned sorted.
///
/// Throws Error(TooFewRecords) when the catalog is empty or smaller than
/// n_quantiles.
Split stratified_split(std::span<const double> snr, const SplitSpec& spec);
Split stratified_split(const ScanCatalog& catalog, const SplitSpec& spec);

/// Expanded index list for the weighted sampler. Positions in `indices`
/// refer to the input span; an extreme record appears extreme_dup_factor
/// times, each copy carrying weight extreme_weight_boost.
struct WeightedIndex {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

/// Records strictly below the extreme_quantile quantile or strictly above the
/// (1 − extreme_quantile) quantile of `snr` are extreme. Quantiles use linear
/// interpolation between order statistics.
WeightedIndex sample_weights(std::span<const double> snr, const SplitSpec& spec);

/// Linear-interpolation quantile (R type 7) of unsorted data.
double quantile(std::span<const double> values, double q);

}  // namespace capri::data
