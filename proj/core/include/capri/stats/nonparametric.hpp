#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace capri::stats {

/// Rows are subjects (folds, records), columns are treatments (methods).
struct ScoreMatrix {
  std::vector<std::string> treatments;
  std::vector<std::vector<double>> rows;
  bool lower_is_better = true;
};

/// CSV with a header of treatment names; an optional first column named
/// "subject" (or "fold") is skipped. Throws Error(DegenerateMatrix) or
/// Error(MalformedRow).
ScoreMatrix read_score_matrix(const std::filesystem::path& path, bool lower_is_better = true);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct FriedmanResult {
  double chi2 = 0.0;
  double p = 1.0;
  int dof = 0;
  std::vector<double> mean_ranks;  // rank 1 = best under the matrix orientation
};

/// χ² = 12/(n·k·(k+1)) · Σ_j R_j² − 3·n·(k+1) with R_j the column rank sums,
/// p from the chi-square upper tail with k − 1 dof. No tie correction.
/// Throws Error(DegenerateMatrix).
FriedmanResult friedman_test(const ScoreMatrix& scores);

enum class Alternative {
  TwoSided,
  Less,     // a tends to be smaller than b
  Greater,  // a tends to be larger than b
};

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W−)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p = 1.0;
  int n = 0;  // non-zero differences
  bool exact = true;
};

inline constexpr int kWilcoxonExactMax = 20;

/// Signed-rank test on d = a − b. Zero differences are dropped and tied
/// |d| get average ranks. Exact null distribution for n ≤ 20, normal
/// approximation with continuity and tie correction above.
/// Throws Error(AllZeroDifferences), Error(InvalidArgument) for unequal or
/// empty inputs.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::TwoSided);

/// Null distribution of W+ for the given ranks: entry s is the probability
/// that W+ equals s / 2 (ranks are doubled so average ties stay integral).
std::vector<double> wilcoxon_null_distribution(std::span<const double> ranks);

}  // namespace capri::stats
