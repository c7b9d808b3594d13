#pragma once

#include <optional>
#include <span>

namespace capri::train {

/// MAE, RMSE and the coefficient of determination. r2 is empty when the
/// targets are constant (the denominator vanishes).
struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;

  /// Throws Error(ConstantTargets) when r2 is undefined.
  double r2_or_throw() const;
};

/// Throws Error(EmptyDataset) on empty input, Error(ShapeMismatch) when the
/// spans differ in length.
Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat);

}  // namespace capri::train
