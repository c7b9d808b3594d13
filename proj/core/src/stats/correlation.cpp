#include "capri/stats/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "capri/error.hpp"

namespace capri::stats {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "pearson needs two samples of equal length >= 2");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> correlation_ratio(std::span<const int> groups, std::span<const double> y) {
  if (groups.size() != y.size() || y.empty()) {
    throw Error(ErrorCode::InvalidArgument, "correlation ratio needs equal, non-empty inputs");
  }
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  std::map<int, std::pair<double, int>> by_group;
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& g = by_group[groups[i]];
    g.first += y[i];
    ++g.second;
    total += (y[i] - mean) * (y[i] - mean);
  }
  if (total == 0.0) return std::nullopt;
  double between = 0.0;
  for (const auto& [_, g] : by_group) {
    const double gm = g.first / g.second;
    between += g.second * (gm - mean) * (gm - mean);
  }
  return std::sqrt(std::clamp(between / total, 0.0, 1.0));
}

LatentCorrelation latent_correlation(const model::VaeModel<float>& net, const train::SampleSet& samples) {
  if (samples.size() < 3) throw Error(ErrorCode::EmptyDataset, "latent correlation needs at least 3 records");
  const auto snr = train::targets(samples);
  if (std::all_of(snr.begin(), snr.end(), [&](double v) { return v == snr.front(); })) {
    throw Error(ErrorCode::ConstantColumn, "observed SNR is constant");
  }
  const int latent = net.config().latent_dim;
  std::vector<std::vector<double>> columns(latent, std::vector<double>(samples.size()));
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < samples.size(); start += kBatch) {
    const std::size_t end = std::min(samples.size(), start + kBatch);
    std::vector<const data::ImageTensor*> images;
    std::vector<data::AcquisitionParams> params;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&samples[i].image);
      params.push_back(samples[i].params);
    }
    const auto posts = net.encode_batch(images, params);
    for (std::size_t i = start; i < end; ++i) {
      for (int d = 0; d < latent; ++d) columns[d][i] = posts[i - start].mu[d];
    }
  }

  LatentCorrelation out;
  for (int d = 0; d < latent; ++d) out.latents.push_back({d, pearson(columns[d], snr)});
  std::stable_sort(out.latents.begin(), out.latents.end(), [](const LatentEntry& x, const LatentEntry& y) {
    if (x.r.has_value() != y.r.has_value()) return x.r.has_value();
    return x.r && std::abs(*x.r) > std::abs(*y.r);
  });
  for (auto field : {data::Field::Voltage, data::Field::Current, data::Field::Agent}) {
    std::vector<int> codes;
    for (const auto& s : samples) codes.push_back(s.params.get(field));
    out.parameters.push_back({field, correlation_ratio(codes, snr)});
  }
  return out;
}

}  // namespace capri::stats
