#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "capri/dataset/split.hpp"
#include "capri/dataset/synth.hpp"
#include "capri/stats/ablation.hpp"
#include "capri/stats/correlation.hpp"
#include "capri/stats/nonparametric.hpp"
#include "capri/stats/special.hpp"
#include "capri/train/samples.hpp"
#include "test_support.hpp"

namespace capri::stats {
namespace {

using capri::testing::error_code_of;

// Closed-form chi-square tails used as oracles.
double chi2_sf_even(double x, int dof) {
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < dof / 2; ++k) {
    term *= (x / 2.0) / k;
    sum += term;
  }
  return std::exp(-x / 2.0) * sum;
}

double chi2_sf_3(double x) {
  return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / M_PI) * std::exp(-x / 2.0);
}

void expect_rel(double got, double want, double tol) {
  EXPECT_LE(std::abs(got - want), tol * std::abs(want)) << "got " << got << " want " << want;
}

TEST(Special, ChiSquareTails) {
  for (double x : {0.01, 0.5, 1.0, 3.0, 7.81, 15.0, 40.0, 90.0}) {
    expect_rel(chi2_sf(x, 2), chi2_sf_even(x, 2), 1e-10);
    expect_rel(chi2_sf(x, 4), chi2_sf_even(x, 4), 1e-10);
    expect_rel(chi2_sf(x, 10), chi2_sf_even(x, 10), 1e-10);
    expect_rel(chi2_sf(x, 3), chi2_sf_3(x), 1e-10);
  }
  EXPECT_EQ(chi2_sf(0.0, 3), 1.0);
}

TEST(Special, IncompleteGamma) {
  for (double x : {0.001, 0.3, 1.0, 2.5, 10.0, 30.0}) {
    expect_rel(gamma_p(0.5, x), std::erf(std::sqrt(x)), 1e-10);
    expect_rel(gamma_q(0.5, x), std::erfc(std::sqrt(x)), 1e-10);
    for (double a : {0.7, 3.0, 12.5}) EXPECT_NEAR(gamma_p(a, x) + gamma_q(a, x), 1.0, 1e-13);
  }
  EXPECT_EQ(gamma_p(2.0, 0.0), 0.0);
  EXPECT_EQ(error_code_of([] { gamma_p(0.0, 1.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code_of([] { gamma_q(1.0, -1.0); }), ErrorCode::InvalidArgument);
}

TEST(Special, NormalTail) {
  for (double z : {-3.0, -1.0, 0.0, 0.5, 1.96, 4.0, 8.0}) {
    expect_rel(normal_sf(z), 0.5 * std::erfc(z / std::sqrt(2.0)), 1e-12);
  }
}

TEST(Ranks, AverageTies) {
  const std::vector<double> v{10, 20, 10, 5, 20, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2.5, 5.0, 2.5, 1.0, 5.0, 5.0}));
}

ScoreMatrix matrix(std::vector<std::vector<double>> rows, bool lower = true) {
  ScoreMatrix m;
  for (std::size_t j = 0; j < rows.front().size(); ++j) m.treatments.push_back("m" + std::to_string(j));
  m.rows = std::move(rows);
  m.lower_is_better = lower;
  return m;
}

TEST(Friedman, PerfectRankingIsFifteen) {
  std::vector<std::vector<double>> rows(5, {1.0, 2.0, 3.0, 4.0});
  const auto r = friedman_test(matrix(rows));
  // R_j = 5j: 12/(5·4·5)·(25+100+225+400) − 3·5·5 = 90 − 75.
  EXPECT_EQ(r.chi2, 15.0);
  EXPECT_EQ(r.dof, 3);
  expect_rel(r.p, chi2_sf_3(15.0), 1e-10);
  EXPECT_EQ(r.mean_ranks, (std::vector<double>{1, 2, 3, 4}));
  const auto hi = friedman_test(matrix(rows, false));
  EXPECT_EQ(hi.chi2, 15.0);
  EXPECT_EQ(hi.mean_ranks, (std::vector<double>{4, 3, 2, 1}));
}

TEST(Friedman, IdenticalColumnsGiveZero) {
  const auto r = friedman_test(matrix({{3, 3}, {1, 1}, {7, 7}}));
  EXPECT_EQ(r.chi2, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Friedman, MatchesFormulaAndMonotoneInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 8, k = 2 + rng() % 5;
    std::vector<std::vector<double>> rows(n, std::vector<double>(k));
    for (auto& row : rows)
      for (auto& v : row) v = std::round(u(rng));  // integer scores produce ties
    const auto r = friedman_test(matrix(rows));

    std::vector<double> rank_sum(k, 0.0);
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < k; ++j) {
        double less = 0, equal = 0;
        for (double o : row) less += o < row[j], equal += o == row[j];
        rank_sum[j] += less + (equal + 1) / 2.0;
      }
    }
    double ss = 0;
    for (double s : rank_sum) ss += s * s;
    const double want = 12.0 / (n * k * (k + 1.0)) * ss - 3.0 * n * (k + 1.0);
    EXPECT_NEAR(r.chi2, want, 1e-9 * (1 + std::abs(want)));

    auto transformed = rows;
    for (auto& row : transformed) {
      const int kind = static_cast<int>(rng() % 3);
      for (auto& v : row) v = kind == 0 ? std::exp(v) : kind == 1 ? v * v * v : 4.0 * v - 2.0;
    }
    EXPECT_EQ(friedman_test(matrix(transformed)).chi2, r.chi2);
  }
}

TEST(Friedman, DegenerateMatrices) {
  EXPECT_EQ(error_code_of([] { friedman_test(matrix({{1, 2, 3}})); }), ErrorCode::DegenerateMatrix);
  EXPECT_EQ(error_code_of([] { friedman_test(matrix({{1}, {2}})); }), ErrorCode::DegenerateMatrix);
  EXPECT_EQ(error_code_of([] { friedman_test(matrix({{1, 2}, {2}})); }), ErrorCode::DegenerateMatrix);
}

TEST(Friedman, ReadsScoreCsv) {
  capri::testing::TempDir dir;
  std::ofstream(dir / "s.csv") << "fold,ours,baseA,baseB\n1,1.0,2.0,3.0\n2,1.5,2.5,2.0\n3,0.9,3.1,3.2\n";
  const auto m = read_score_matrix(dir / "s.csv");
  EXPECT_EQ(m.treatments, (std::vector<std::string>{"ours", "baseA", "baseB"}));
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[1][2], 2.0);
  std::ofstream(dir / "bad.csv") << "a,b\n1,x\n";
  EXPECT_EQ(error_code_of([&] { read_score_matrix(dir / "bad.csv"); }), ErrorCode::MalformedRow);
}

TEST(Wilcoxon, FiveAllPositive) {
  const std::vector<double> a{5.1, 6.2, 7.3, 8.4, 9.5}, b{1, 2, 3, 4, 5};
  const auto g = wilcoxon_signed_rank(a, b, Alternative::Greater);
  EXPECT_EQ(g.statistic, 0.0);
  EXPECT_EQ(g.w_plus, 15.0);
  EXPECT_EQ(g.n, 5);
  EXPECT_TRUE(g.exact);
  EXPECT_EQ(g.p, 1.0 / 32.0);
  EXPECT_EQ(wilcoxon_signed_rank(b, a, Alternative::Less).p, 1.0 / 32.0);
  EXPECT_EQ(wilcoxon_signed_rank(a, b, Alternative::TwoSided).p, 1.0 / 16.0);
  EXPECT_EQ(wilcoxon_signed_rank(a, b, Alternative::Less).p, 1.0);
}

TEST(Wilcoxon, SinglePairAndErrors) {
  const std::vector<double> a{2.0}, b{1.0};
  EXPECT_EQ(wilcoxon_signed_rank(a, b, Alternative::Greater).p, 0.5);
  EXPECT_EQ(error_code_of([&] { wilcoxon_signed_rank(a, a); }), ErrorCode::AllZeroDifferences);
  EXPECT_EQ(error_code_of([&] { wilcoxon_signed_rank(a, std::vector<double>{1, 2}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code_of([] { wilcoxon_signed_rank(std::vector<double>{}, std::vector<double>{}); }),
            ErrorCode::InvalidArgument);
}

TEST(Wilcoxon, ExactMatchesSignEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> mag(-6, 6);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<double> a(n), b(n, 0.0);
    for (auto& v : a) {
      do v = mag(rng); while (v == 0);
    }
    // Oracle: enumerate every sign pattern over the average ranks of |d|.
    std::vector<double> abs_d(n);
    for (int i = 0; i < n; ++i) abs_d[i] = std::abs(a[i]);
    const auto ranks = average_ranks(abs_d);
    double observed = 0;
    for (int i = 0; i < n; ++i) observed += a[i] > 0 ? ranks[i] : 0;
    int ge = 0, le = 0;
    for (int mask = 0; mask < (1 << n); ++mask) {
      double w = 0;
      for (int i = 0; i < n; ++i) w += (mask >> i & 1) ? ranks[i] : 0;
      ge += w >= observed - 1e-9;
      le += w <= observed + 1e-9;
    }
    const double total = std::ldexp(1.0, n);
    const auto g = wilcoxon_signed_rank(a, b, Alternative::Greater);
    const auto l = wilcoxon_signed_rank(a, b, Alternative::Less);
    const auto t = wilcoxon_signed_rank(a, b, Alternative::TwoSided);
    EXPECT_NEAR(g.p, ge / total, 1e-12);
    EXPECT_NEAR(l.p, le / total, 1e-12);
    EXPECT_NEAR(t.p, std::min(1.0, 2.0 * std::min(ge, le) / total), 1e-12);
    EXPECT_EQ(g.w_plus, observed);
    EXPECT_EQ(g.w_plus + g.w_minus, n * (n + 1) / 2.0);
  }
}

TEST(Wilcoxon, NullDistributionSumsToOne) {
  for (int n = 1; n <= kWilcoxonExactMax; ++n) {
    std::vector<double> ranks(n);
    std::iota(ranks.begin(), ranks.end(), 1.0);
    const auto dist = wilcoxon_null_distribution(ranks);
    EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-12) << n;
    EXPECT_EQ(dist.size(), static_cast<std::size_t>(n * (n + 1) + 1));
    for (std::size_t s = 0; s < dist.size(); ++s) EXPECT_NEAR(dist[s], dist[dist.size() - 1 - s], 1e-15);
  }
  const std::vector<double> tied{1.5, 1.5, 3.0};
  const auto d = wilcoxon_null_distribution(tied);
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-15);
  EXPECT_EQ(d[0], 1.0 / 8.0);   // W+ = 0
  EXPECT_EQ(d[3], 2.0 / 8.0);   // W+ = 1.5
}

TEST(Wilcoxon, NormalApproximationAboveTwenty) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  const int n = 30;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = n01(rng) + 0.4;
    b[i] = n01(rng);
  }
  const auto r = wilcoxon_signed_rank(a, b, Alternative::Greater);
  EXPECT_FALSE(r.exact);
  std::vector<double> d(n), abs_d(n);
  for (int i = 0; i < n; ++i) d[i] = a[i] - b[i], abs_d[i] = std::abs(d[i]);
  const auto ranks = average_ranks(abs_d);
  double w = 0;
  for (int i = 0; i < n; ++i) w += d[i] > 0 ? ranks[i] : 0;
  const double mean = n * (n + 1) / 4.0;
  const double sd = std::sqrt(n * (n + 1) * (2.0 * n + 1) / 24.0);  // continuous data: no ties
  const double z = (w - mean - 0.5) / sd;
  EXPECT_NEAR(r.p, 0.5 * std::erfc(z / std::sqrt(2.0)), 1e-12);
}

TEST(Correlation, Pearson) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 5, 4, 5};
  EXPECT_NEAR(*pearson(x, x), 1.0, 1e-15);
  const std::vector<double> neg{5, 4, 3, 2, 1};
  EXPECT_NEAR(*pearson(x, neg), -1.0, 1e-15);
  // Hand value: sxy = 6, sxx = 10, syy = 6.
  EXPECT_NEAR(*pearson(x, y), 6.0 / std::sqrt(10.0 * 6.0), 1e-14);
  const std::vector<double> c(5, 3.0);
  EXPECT_FALSE(pearson(x, c).has_value());
  EXPECT_EQ(error_code_of([&] { pearson(x, std::vector<double>{1, 2}); }), ErrorCode::InvalidArgument);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(10), q(10);
    for (auto& v : p) v = n01(rng);
    for (auto& v : q) v = n01(rng);
    const double r = *pearson(p, q);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Correlation, Ratio) {
  const std::vector<int> g{0, 0, 1, 1, 2, 2};
  const std::vector<double> y{1, 1, 5, 5, 9, 9};
  EXPECT_NEAR(*correlation_ratio(g, y), 1.0, 1e-15);
  const std::vector<double> y2{1, 3, 1, 3, 1, 3};
  EXPECT_NEAR(*correlation_ratio(g, y2), 0.0, 1e-15);
  const std::vector<double> y3{1, 2, 4, 6, 7, 9};
  // Group means 1.5, 5, 8; grand mean 29/6. Between = 2·Σ(m−ȳ)², total = Σ(y−ȳ)².
  const double gm = 29.0 / 6.0;
  const double between = 2 * (std::pow(1.5 - gm, 2) + std::pow(5 - gm, 2) + std::pow(8 - gm, 2));
  double total = 0;
  for (double v : y3) total += (v - gm) * (v - gm);
  EXPECT_NEAR(*correlation_ratio(g, y3), std::sqrt(between / total), 1e-14);
  EXPECT_FALSE(correlation_ratio(g, std::vector<double>(6, 2.0)).has_value());
}

TEST(Correlation, LatentEqualToSnrHasUnitR) {
  const auto& cat = capri::testing::synth_catalog();
  std::vector<std::size_t> ids(48);
  std::iota(ids.begin(), ids.end(), 0);
  const auto samples = train::load_samples(cat, ids, 16);
  auto config = capri::testing::tiny_config(cat.vocab);
  model::VaeModel<float> net(config, 3);

  // Embedding coordinate 0 of each table carries that field's additive term
  // of the synthetic mechanism; latent 0 sums them, latent 1 is constant.
  auto find = [&](const std::string& name) -> model::Tensor<float>& {
    for (auto& p : net.parameters())
      if (p.name == name) return p;
    throw std::runtime_error(name);
  };
  const auto& vocab = cat.vocab;
  auto& ev = find("embed.voltage").value;
  for (std::size_t i = 0; i < vocab.voltages().size(); ++i)
    ev[i * config.voltage_embed] = static_cast<float>(data::synth_mechanism(vocab.voltages()[i], 215, "Iodine") -
                                                      data::synth_mechanism(80, 215, "Iodine"));
  auto& et = find("embed.current").value;
  for (std::size_t i = 0; i < vocab.currents().size(); ++i)
    et[i * config.current_embed] = static_cast<float>(data::synth_mechanism(80, vocab.currents()[i], "Iodine") -
                                                      data::synth_mechanism(80, 215, "Iodine"));
  auto& ea = find("embed.agent").value;
  for (std::size_t i = 0; i < vocab.agents().size(); ++i)
    ea[i * config.agent_embed] = static_cast<float>(data::synth_mechanism(80, 215, vocab.agents()[i]));
  auto& w = find("head_mu.weight").value;
  std::fill(w.begin(), w.end(), 0.0f);
  const std::size_t fused = config.flat_features() + config.embed_dim();
  const std::size_t e0 = config.flat_features();
  w[e0] = 1.0f;
  w[e0 + config.voltage_embed] = 1.0f;
  w[e0 + config.voltage_embed + config.current_embed] = 1.0f;
  auto& b = find("head_mu.bias").value;
  std::fill(b.begin(), b.end(), 0.0f);
  b[1] = 2.0f;
  // Latents 2 and 3 read random image features.
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n01;
  for (std::size_t j = 0; j < e0; ++j) w[2 * fused + j] = 0.01f * n01(rng), w[3 * fused + j] = 0.01f * n01(rng);

  const auto lc = latent_correlation(net, samples);
  ASSERT_EQ(lc.latents.size(), 4u);
  EXPECT_EQ(lc.latents[0].dim, 0);
  EXPECT_NEAR(*lc.latents[0].r, 1.0, 1e-6);
  EXPECT_EQ(lc.latents[3].dim, 1);
  EXPECT_FALSE(lc.latents[3].r.has_value());
  ASSERT_EQ(lc.parameters.size(), 3u);
  EXPECT_EQ(lc.parameters[2].field, data::Field::Agent);
  EXPECT_GT(*lc.parameters[2].eta, *lc.parameters[0].eta);
  EXPECT_GT(*lc.parameters[2].eta, *lc.parameters[1].eta);

  train::SampleSet two(samples.begin(), samples.begin() + 2);
  EXPECT_EQ(error_code_of([&] { latent_correlation(net, two); }), ErrorCode::EmptyDataset);
  auto flat = samples;
  for (auto& s : flat) s.snr = 1.0;
  EXPECT_EQ(error_code_of([&] { latent_correlation(net, flat); }), ErrorCode::ConstantColumn);
}

TEST(Ablation, VariantsAndLabels) {
  const auto v = default_ablation_variants();
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(variant_label(v[0]), "Image (i) + metadata (v, t, a)");
  EXPECT_EQ(variant_label(v[1]), "Image (i) + metadata (v, t, a, noise)");
  EXPECT_EQ(variant_label(v[2]), "Image (i) + metadata (v, a)");
  EXPECT_EQ(variant_label(v[3]), "Image (i) + metadata (t, a)");
  EXPECT_EQ(variant_label(v[4]), "Image (i) only");
  EXPECT_EQ(variant_label(v[5]), "Image (i) + metadata (v, t)");
  EXPECT_EQ(parse_variant("drop_v").fields, v[3].fields);
  EXPECT_EQ(parse_variant("v, a").fields, v[2].fields);
  EXPECT_EQ(parse_variant("v,t,a,noise").fields, v[1].fields);
  EXPECT_EQ(error_code_of([] { parse_variant("v,x"); }), ErrorCode::InvalidArgument);
}

TEST(Ablation, ReproducibleAndParallelSafe) {
  const auto& cat = capri::testing::synth_catalog();
  const auto split = data::stratified_split(cat, {});
  const auto tr = train::load_samples(cat, split.train, 16);
  const auto va = train::load_samples(cat, split.val, 16);
  model::ModelConfig base;
  base.input_size = 16;
  base.latent_dim = 4;
  train::TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 5;
  const std::vector<AblationVariant> variants{parse_variant("full"), parse_variant("image"), parse_variant("noise")};
  const auto serial = run_ablation(variants, tr, va, cat.vocab, base, tc, 1);
  const auto parallel = run_ablation(variants, tr, va, cat.vocab, base, tc, 3);
  ASSERT_EQ(serial.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial[i].variant.name, variants[i].name);
    EXPECT_EQ(serial[i].metrics.mae, parallel[i].metrics.mae);
    EXPECT_EQ(serial[i].metrics.r2, parallel[i].metrics.r2);
    auto cfg = train::model_config_for(cat.vocab, base);
    cfg.fields = variants[i].fields;
    EXPECT_EQ(serial[i].parameter_count, cfg.parameter_count());
  }
  EXPECT_LT(serial[1].parameter_count, serial[0].parameter_count);
  EXPECT_GT(serial[2].parameter_count, serial[0].parameter_count);

  std::ostringstream table, csv_out;
  write_ablation_table(table, serial);
  write_ablation_csv(csv_out, serial);
  EXPECT_NE(table.str().find("Image (i) only"), std::string::npos);
  EXPECT_EQ(csv_out.str().rfind("variant,fields,mae,rmse,r2,best_epoch,parameters\n", 0), 0u);

  const std::vector<AblationVariant> dup{variants[0], variants[0]};
  EXPECT_EQ(error_code_of([&] { run_ablation(dup, tr, va, cat.vocab, base, tc); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code_of([&] { run_ablation({}, tr, va, cat.vocab, base, tc); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace capri::stats
