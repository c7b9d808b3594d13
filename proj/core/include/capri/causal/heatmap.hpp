#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "capri/causal/scenario.hpp"

namespace capri::causal {

/// Rows are scenarios, columns are (snr_obs, snr_i, snr_cf).
struct Heatmap {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;

  bool operator==(const Heatmap&) const = default;
};

/// Throws Error(InvalidArgument) on an empty table.
Heatmap make_heatmap(const std::vector<ScenarioResult>& results);

/// CSV with a leading "scenario" column; values printed with 17 significant digits.
void write_heatmap_csv(const Heatmap& heatmap, const std::filesystem::path& path);
Heatmap read_heatmap_csv(const std::filesystem::path& path);

/// Blue-white-red image, one block of `cell` pixels per entry, colour scaled
/// by the signed log magnitude so large and small SNRs stay distinguishable.
void write_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path, int cell = 24);

}  // namespace capri::causal
