#include "capri/causal/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "capri/dataset/image.hpp"
#include "capri/error.hpp"
#include "capri/util/csv.hpp"

namespace capri::causal {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double signed_log(double x) { return std::copysign(std::log1p(std::abs(x)), x); }

}  // namespace

Heatmap make_heatmap(const std::vector<ScenarioResult>& results) {
  if (results.empty()) throw Error(ErrorCode::InvalidArgument, "heatmap needs at least one scenario");
  Heatmap h;
  h.col_labels = {"snr_obs", "snr_i", "snr_cf"};
  for (const auto& r : results) {
    h.row_labels.push_back(r.v + "/" + r.t + "/" + r.a + " " + r.scenario);
    h.values.push_back({r.result.snr_obs, r.result.snr_i, r.result.snr_cf});
  }
  return h;
}

void write_heatmap_csv(const Heatmap& heatmap, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  csv::Row header{"scenario"};
  header.insert(header.end(), heatmap.col_labels.begin(), heatmap.col_labels.end());
  csv::write_row(out, header);
  for (std::size_t r = 0; r < heatmap.values.size(); ++r) {
    csv::Row row{heatmap.row_labels[r]};
    for (double v : heatmap.values[r]) row.push_back(fmt(v));
    csv::write_row(out, row);
  }
}

Heatmap read_heatmap_csv(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  if (table.header.size() < 2) throw Error(ErrorCode::MalformedRow, path.string() + ": no value columns");
  Heatmap h;
  h.col_labels.assign(table.header.begin() + 1, table.header.end());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRow, "row " + std::to_string(r) + ": wrong field count");
    }
    h.row_labels.push_back(row[0]);
    std::vector<double> values;
    for (std::size_t c = 1; c < row.size(); ++c) {
      char* end = nullptr;
      values.push_back(std::strtod(row[c].c_str(), &end));
      if (end == row[c].c_str() || *end != '\0') {
        throw Error(ErrorCode::MalformedRow, "row " + std::to_string(r) + ": bad number '" + row[c] + "'");
      }
    }
    h.values.push_back(std::move(values));
  }
  return h;
}

void write_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path, int cell) {
  const int rows = static_cast<int>(heatmap.values.size());
  const int cols = rows ? static_cast<int>(heatmap.values.front().size()) : 0;
  if (rows == 0 || cols == 0 || cell <= 0) throw Error(ErrorCode::InvalidArgument, "empty heatmap");
  double limit = 0.0;
  for (const auto& row : heatmap.values) {
    for (double v : row) {
      if (std::isfinite(v)) limit = std::max(limit, std::abs(signed_log(v)));
    }
  }
  if (limit == 0.0) limit = 1.0;
  const int width = cols * cell;
  const int height = rows * cell;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = heatmap.values[r][c];
      std::uint8_t px[3] = {128, 128, 128};
      if (std::isfinite(v)) {
        const double s = std::clamp(signed_log(v) / limit, -1.0, 1.0);
        const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(s))));
        if (s >= 0) {
          px[0] = 255, px[1] = fade, px[2] = fade;
        } else {
          px[0] = fade, px[1] = fade, px[2] = 255;
        }
      }
      for (int y = r * cell; y < (r + 1) * cell; ++y) {
        for (int x = c * cell; x < (c + 1) * cell; ++x) {
          // one-pixel grid line between cells
          const bool edge = (x % cell == cell - 1) || (y % cell == cell - 1);
          auto* dst = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
          for (int k = 0; k < 3; ++k) dst[k] = edge ? 64 : px[k];
        }
      }
    }
  }
  data::write_png_rgb(path, width, height, rgb);
}

}  // namespace capri::causal
