#include "capri/dataset/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "capri/error.hpp"
#include "capri/util/hash.hpp"

namespace capri::data {

void SplitSpec::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must be in (0,1)");
  if (n_quantiles <= 0) fail("n_quantiles must be positive");
  if (!(extreme_quantile > 0.0 && extreme_quantile < 0.5)) fail("extreme_quantile must be in (0,0.5)");
  if (extreme_dup_factor <= 0) fail("extreme_dup_factor must be positive");
  if (!(extreme_weight_boost > 0.0)) fail("extreme_weight_boost must be positive");
}

Split stratified_split(std::span<const double> snr, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = snr.size();
  const std::size_t q = static_cast<std::size_t>(spec.n_quantiles);
  if (n == 0 || q > n) {
    throw Error(ErrorCode::TooFewRecords, std::to_string(n) + " records for " +
                                              std::to_string(q) + " quantile bins");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return snr[a] < snr[b]; });

  std::vector<std::size_t> bin_start(q + 1);
  for (std::size_t b = 0; b <= q; ++b) bin_start[b] = b * n / q;

  const auto total_train = static_cast<std::size_t>(
      std::clamp(std::llround(spec.train_fraction * static_cast<double>(n)), 0LL,
                 static_cast<long long>(n)));
  std::vector<std::size_t> quota(q);
  std::vector<double> remainder(q);
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < q; ++b) {
    const double exact = spec.train_fraction * static_cast<double>(bin_start[b + 1] - bin_start[b]);
    quota[b] = static_cast<std::size_t>(std::floor(exact));
    remainder[b] = exact - std::floor(exact);
    assigned += quota[b];
  }
  std::vector<std::size_t> by_remainder(q);
  std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total_train && i < q; ++i) {
    const std::size_t b = by_remainder[i];
    if (quota[b] < bin_start[b + 1] - bin_start[b]) {
      ++quota[b];
      ++assigned;
    }
  }

  Split split;
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5b11));
  for (std::size_t b = 0; b < q; ++b) {
    std::vector<std::size_t> members(order.begin() + bin_start[b], order.begin() + bin_start[b + 1]);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < quota[b] ? split.train : split.val).push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

Split stratified_split(const ScanCatalog& catalog, const SplitSpec& spec) {
  const auto snr = catalog.snr_values();
  return stratified_split(snr, spec);
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty data");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

WeightedIndex sample_weights(std::span<const double> snr, const SplitSpec& spec) {
  spec.validate();
  if (snr.empty()) throw Error(ErrorCode::EmptyDataset, "no training records to weight");
  const double lo = quantile(snr, spec.extreme_quantile);
  const double hi = quantile(snr, 1.0 - spec.extreme_quantile);
  WeightedIndex out;
  for (std::size_t i = 0; i < snr.size(); ++i) {
    const bool extreme = snr[i] < lo || snr[i] > hi;
    const int copies = extreme ? spec.extreme_dup_factor : 1;
    for (int c = 0; c < copies; ++c) {
      out.indices.push_back(i);
      out.weights.push_back(extreme ? spec.extreme_weight_boost : 1.0);
    }
  }
  return out;
}

}  // namespace capri::data
