#include "capri/train/metrics.hpp"

#include <cmath>

#include "capri/error.hpp"

namespace capri::train {

double Metrics::r2_or_throw() const {
  if (!r2) throw Error(ErrorCode::ConstantTargets, "R^2 undefined for constant targets");
  return *r2;
}

Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw Error(ErrorCode::ShapeMismatch, "prediction count mismatch");
  if (y.empty()) throw Error(ErrorCode::EmptyDataset, "no samples to evaluate");
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;

  double abs_sum = 0.0, sq_sum = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    tot += (y[i] - mean) * (y[i] - mean);
  }
  Metrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (tot > 0.0) m.r2 = 1.0 - sq_sum / tot;
  return m;
}

}  // namespace capri::train
