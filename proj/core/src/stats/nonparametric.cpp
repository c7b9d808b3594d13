#include "capri/stats/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "capri/error.hpp"
#include "capri/stats/special.hpp"
#include "capri/util/csv.hpp"

namespace capri::stats {

ScoreMatrix read_score_matrix(const std::filesystem::path& path, bool lower_is_better) {
  const auto table = csv::read_file(path);
  std::size_t first = 0;
  if (!table.header.empty()) {
    std::string h = table.header[0];
    std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
    if (h == "subject" || h == "fold") first = 1;
  }
  ScoreMatrix m;
  m.lower_is_better = lower_is_better;
  m.treatments.assign(table.header.begin() + static_cast<std::ptrdiff_t>(first), table.header.end());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRow, "row " + std::to_string(r) + ": wrong field count");
    }
    std::vector<double> values;
    for (std::size_t c = first; c < row.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(row[c].c_str(), &end);
      if (row[c].empty() || *end != '\0') {
        throw Error(ErrorCode::MalformedRow, "row " + std::to_string(r) + ": bad score '" + row[c] + "'");
      }
      values.push_back(v);
    }
    m.rows.push_back(std::move(values));
  }
  return m;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

FriedmanResult friedman_test(const ScoreMatrix& scores) {
  const std::size_t n = scores.rows.size();
  const std::size_t k = n ? scores.rows.front().size() : 0;
  if (n < 2 || k < 2) {
    throw Error(ErrorCode::DegenerateMatrix, "need at least 2 subjects and 2 treatments, got " +
                                                 std::to_string(n) + "x" + std::to_string(k));
  }
  std::vector<double> rank_sum(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = scores.rows[r];
    if (row.size() != k) throw Error(ErrorCode::DegenerateMatrix, "row " + std::to_string(r) + " is ragged");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateMatrix, "non-finite score in row " + std::to_string(r));
    }
    std::vector<double> oriented(row);
    if (!scores.lower_is_better) {
      for (auto& v : oriented) v = -v;
    }
    const auto ranks = average_ranks(oriented);
    for (std::size_t j = 0; j < k; ++j) rank_sum[j] += ranks[j];
  }
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  double sq = 0.0;
  for (double r : rank_sum) sq += r * r;
  FriedmanResult res;
  res.chi2 = 12.0 * sq / (nn * kk * (kk + 1.0)) - 3.0 * nn * (kk + 1.0);
  if (std::abs(res.chi2) < 1e-12 * nn * kk) res.chi2 = 0.0;
  res.dof = static_cast<int>(k) - 1;
  res.p = chi2_sf(res.chi2, res.dof);
  for (double r : rank_sum) res.mean_ranks.push_back(r / nn);
  return res;
}

std::vector<double> wilcoxon_null_distribution(std::span<const double> ranks) {
  std::vector<int> doubled;
  int total = 0;
  for (double r : ranks) {
    doubled.push_back(static_cast<int>(std::lround(2.0 * r)));
    total += doubled.back();
  }
  std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
  dist[0] = 1.0;
  int reach = 0;
  for (int d : doubled) {
    for (int s = reach; s >= 0; --s) {
      if (dist[s] != 0.0) dist[s + d] += dist[s];
    }
    reach += d;
  }
  const double scale = std::ldexp(1.0, -static_cast<int>(doubled.size()));
  for (auto& p : dist) p *= scale;
  return dist;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::InvalidArgument, "wilcoxon needs two non-empty samples of equal length");
  }
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw Error(ErrorCode::InvalidArgument, "non-finite difference at " + std::to_string(i));
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw Error(ErrorCode::AllZeroDifferences, "all paired differences are zero");

  std::vector<double> mags;
  for (double d : diffs) mags.push_back(std::abs(d));
  const auto ranks = average_ranks(mags);
  WilcoxonResult res;
  res.n = static_cast<int>(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? res.w_plus : res.w_minus) += ranks[i];
  res.statistic = std::min(res.w_plus, res.w_minus);

  double p_le = 0.0, p_ge = 0.0;  // P(W+ ≤ observed), P(W+ ≥ observed)
  if (res.n <= kWilcoxonExactMax) {
    res.exact = true;
    const auto dist = wilcoxon_null_distribution(ranks);
    const auto obs = static_cast<std::size_t>(std::lround(2.0 * res.w_plus));
    for (std::size_t s = 0; s < dist.size(); ++s) {
      if (s <= obs) p_le += dist[s];
      if (s >= obs) p_ge += dist[s];
    }
  } else {
    res.exact = false;
    const double n = res.n;
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    std::vector<double> sorted(ranks);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      var -= (t * t * t - t) / 48.0;
      i = j;
    }
    const double sd = std::sqrt(var);
    p_ge = normal_sf((res.w_plus - 0.5 - mean) / sd);
    p_le = 1.0 - normal_sf((res.w_plus + 0.5 - mean) / sd);
  }
  switch (alternative) {
    case Alternative::Greater: res.p = p_ge; break;
    case Alternative::Less: res.p = p_le; break;
    case Alternative::TwoSided: res.p = std::min(1.0, 2.0 * std::min(p_le, p_ge)); break;
  }
  res.p = std::clamp(res.p, 0.0, 1.0);
  return res;
}

}  // namespace capri::stats
