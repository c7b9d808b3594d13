#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "capri/dataset/catalog.hpp"
#include "capri/dataset/image.hpp"
#include "capri/dataset/split.hpp"
#include "capri/dataset/synth.hpp"
#include "capri/util/hash.hpp"
#include "test_support.hpp"

namespace capri::data {
namespace {

using capri::testing::error_code_of;
using capri::testing::TempDir;

void write_gray(const std::filesystem::path& path, int size, std::uint16_t value, int depth = 8) {
  RawImage img{size, size, depth, std::vector<std::uint16_t>(static_cast<std::size_t>(size) * size, value)};
  write_png(path, img);
}

// Vocab and catalog

TEST(Vocab, SortedContiguousLevels) {
  std::vector<ScanRecord> recs{{"a", 140, 430, "Iodine", 1.0},
                               {"b", 80, 215, "BiNPs 50nm", 2.0},
                               {"c", 140, 215, "Iodine", 3.0}};
  const auto vocab = Vocab::from_records(recs);
  EXPECT_EQ(vocab.voltages(), (std::vector<int>{80, 140}));
  EXPECT_EQ(vocab.currents(), (std::vector<int>{215, 430}));
  EXPECT_EQ(vocab.agents(), (std::vector<std::string>{"BiNPs 50nm", "Iodine"}));
  for (const auto& r : recs) {
    const auto p = vocab.encode(r);
    EXPECT_GE(p.voltage, 0);
    EXPECT_EQ(vocab.voltages()[p.voltage], r.voltage_kvp);
    EXPECT_EQ(vocab.agents()[p.agent], r.agent);
    EXPECT_EQ(p.noise, -1);
  }
  EXPECT_EQ(vocab.index_of(Field::Voltage, "140kVp"), 1);
  EXPECT_EQ(vocab.index_of(Field::Voltage, "140"), 1);
  EXPECT_EQ(vocab.index_of(Field::Voltage, "120"), std::nullopt);
  EXPECT_EQ(vocab.index_of(Field::Agent, "Iodine"), 1);
  EXPECT_EQ(error_code_of([&] { vocab.encode({"x", 100, 215, "Iodine", 0}); }), ErrorCode::IndexOutOfVocab);
}

TEST(Field, NamesRoundTrip) {
  for (Field f : {Field::Voltage, Field::Current, Field::Agent}) {
    EXPECT_EQ(parse_field(field_name(f)), f);
    EXPECT_EQ(parse_field(field_symbol(f)), f);
  }
  EXPECT_EQ(parse_field("noise"), std::nullopt);
}

TEST(Catalog, EmptyMetadataIsEmptyCatalog) {
  TempDir dir;
  std::ofstream(dir / "metadata.csv") << "";
  EXPECT_EQ(error_code_of([&] { load_catalog(dir.path(), dir / "metadata.csv"); }), ErrorCode::EmptyCatalog);
  std::ofstream(dir / "header.csv") << "filename,voltage,current,agent,snr\n";
  EXPECT_EQ(error_code_of([&] { load_catalog(dir.path(), dir / "header.csv"); }), ErrorCode::EmptyCatalog);
}

TEST(Catalog, AbsentImageIsMissingImage) {
  TempDir dir;
  std::ofstream(dir / "metadata.csv") << "filename,voltage,current,agent,snr\nnope.png,80,215,Iodine,1.5\n";
  EXPECT_EQ(error_code_of([&] { load_catalog(dir.path(), dir / "metadata.csv"); }), ErrorCode::MissingImage);
}

TEST(Catalog, MalformedRowNamesRow) {
  TempDir dir;
  write_gray(dir / "a.png", 4, 10);
  std::ofstream(dir / "metadata.csv") << "filename,voltage,current,agent,snr\na.png,80,215,Iodine,1\na.png,abc,215,Iodine,2\n";
  try {
    load_catalog(dir.path(), dir / "metadata.csv");
    FAIL() << "expected MalformedRow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Catalog, AliasesAndRoundTrip) {
  TempDir dir;
  write_gray(dir / "a.png", 4, 10);
  write_gray(dir / "b.png", 4, 20);
  std::ofstream(dir / "raw.csv") << "Image,kVp,mAs,Contrast,SNR\na.png,120kVp,430mAs,Iodine,-3.5\nb.png,80,215,\"BiNPs 50nm\",12\n";
  const auto cat = load_catalog(dir.path(), dir / "raw.csv");
  ASSERT_EQ(cat.records.size(), 2u);
  EXPECT_EQ(cat.records[0].voltage_kvp, 120);
  EXPECT_EQ(cat.records[0].current_mas, 430);
  EXPECT_EQ(cat.records[1].agent, "BiNPs 50nm");
  EXPECT_DOUBLE_EQ(cat.records[0].snr, -3.5);
  EXPECT_EQ(cat.provenance.content_hash, hash_file(dir / "raw.csv"));

  write_catalog(cat, dir / "metadata.csv");
  const auto again = load_catalog(dir.path(), dir / "metadata.csv");
  ASSERT_EQ(again.records.size(), cat.records.size());
  for (std::size_t i = 0; i < cat.records.size(); ++i) {
    EXPECT_EQ(again.records[i].image_path, cat.records[i].image_path);
    EXPECT_EQ(again.records[i].voltage_kvp, cat.records[i].voltage_kvp);
    EXPECT_EQ(again.records[i].agent, cat.records[i].agent);
    EXPECT_EQ(again.records[i].snr, cat.records[i].snr);
  }
  EXPECT_EQ(again.vocab, cat.vocab);
}

TEST(Catalog, InertNoiseLevelInRange) {
  std::map<int, int> counts;
  for (std::size_t i = 0; i < 4000; ++i) {
    const int l = inert_noise_level(i, 4);
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 4);
    ++counts[l];
  }
  for (const auto& [level, n] : counts) EXPECT_NEAR(n, 1000, 150) << level;
  EXPECT_EQ(inert_noise_level(5, 0), -1);
}

// Split

std::vector<double> ramp(std::size_t n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(3));
  return v;
}

void expect_partition(const Split& s, std::size_t n) {
  std::vector<std::size_t> all(s.train);
  all.insert(all.end(), s.val.begin(), s.val.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), n);
  for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
  EXPECT_TRUE(std::is_sorted(s.val.begin(), s.val.end()));
}

TEST(Split, HundredRecordsFourBins) {
  const auto snr = ramp(100);
  SplitSpec spec;
  spec.n_quantiles = 4;
  const auto s = stratified_split(snr, spec);
  expect_partition(s, 100);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 20u);
  // Bins by sorted SNR: values 0-24, 25-49, 50-74, 75-99.
  std::array<int, 4> per_bin{};
  for (auto i : s.val) ++per_bin[static_cast<int>(snr[i]) / 25];
  for (int c : per_bin) EXPECT_EQ(c, 5);
}

TEST(Split, OneRecordPerBinStaysInTrain) {
  const auto snr = ramp(10);
  SplitSpec spec;
  spec.n_quantiles = 10;
  spec.train_fraction = 0.999;
  const auto s = stratified_split(snr, spec);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_TRUE(s.val.empty());
}

TEST(Split, SameSeedSameSplit) {
  const auto snr = ramp(57);
  SplitSpec spec;
  spec.seed = 9;
  const auto a = stratified_split(snr, spec);
  const auto b = stratified_split(snr, spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  spec.seed = 10;
  EXPECT_NE(stratified_split(snr, spec).train, a.train);
}

TEST(Split, PropertyPartitionAndBinProportion) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 10 + rng() % 300;
    const int q = 1 + static_cast<int>(rng() % 10);
    std::vector<double> snr(n);
    std::uniform_int_distribution<int> coarse(0, 20);
    for (auto& v : snr) v = coarse(rng);  // plenty of ties
    SplitSpec spec;
    spec.n_quantiles = q;
    spec.seed = rng();
    spec.train_fraction = std::uniform_real_distribution<double>(0.5, 0.95)(rng);
    const auto s = stratified_split(snr, spec);
    expect_partition(s, n);
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::llround(spec.train_fraction * n)));

    // Oracle bins: order by (snr, index), contiguous near-equal chunks.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return snr[a] < snr[b]; });
    std::vector<int> bin_of(n);
    for (int b = 0; b < q; ++b) {
      const std::size_t lo = n * b / q, hi = n * (b + 1) / q;
      for (std::size_t k = lo; k < hi; ++k) bin_of[order[k]] = b;
    }
    std::vector<int> size(q), train(q);
    for (std::size_t i = 0; i < n; ++i) ++size[bin_of[i]];
    for (auto i : s.train) ++train[bin_of[i]];
    for (int b = 0; b < q; ++b) {
      EXPECT_LE(std::abs(train[b] - spec.train_fraction * size[b]), 1.0) << "bin " << b;
    }
  }
}

TEST(Split, TooFewRecords) {
  std::vector<double> snr{1, 2, 3};
  EXPECT_EQ(error_code_of([&] { stratified_split(snr, SplitSpec{}); }), ErrorCode::TooFewRecords);
  EXPECT_EQ(error_code_of([&] { stratified_split(std::span<const double>{}, SplitSpec{}); }),
            ErrorCode::TooFewRecords);
}

TEST(Split, InvalidSpec) {
  SplitSpec spec;
  spec.train_fraction = 1.5;
  EXPECT_EQ(error_code_of([&] { spec.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Quantile, Type7Oracle) {
  std::vector<double> v{7, 1, 3, 5};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 4.0);
  // h = (n-1)q = 0.75 → 1 + 0.75·(3-1)
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 2.5);
}

TEST(Weights, NeutralParametersAreIdentity) {
  const auto snr = ramp(50);
  SplitSpec spec;
  spec.extreme_dup_factor = 1;
  spec.extreme_weight_boost = 1.0;
  const auto w = sample_weights(snr, spec);
  ASSERT_EQ(w.indices.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(w.indices[i], i);
    EXPECT_EQ(w.weights[i], 1.0);
  }
}

TEST(Weights, OuterTailsDuplicated) {
  const auto snr = ramp(100);
  const SplitSpec spec;
  const auto w = sample_weights(snr, spec);
  // Oracle: sorted values 0..99, q05 = 4.95, q95 = 94.05.
  std::size_t extremes = 0;
  for (double v : snr) extremes += (v < 4.95 || v > 94.05);
  EXPECT_EQ(extremes, 10u);
  EXPECT_EQ(w.indices.size(), 100u + extremes);
  std::map<std::size_t, int> mult;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    ++mult[w.indices[k]];
    const bool extreme = snr[w.indices[k]] < 4.95 || snr[w.indices[k]] > 94.05;
    EXPECT_EQ(w.weights[k], extreme ? 2.0 : 1.0);
  }
  for (const auto& [i, m] : mult) {
    EXPECT_EQ(m, (snr[i] < 4.95 || snr[i] > 94.05) ? 2 : 1);
  }
}

TEST(Weights, ConstantSnrHasNoExtremes) {
  std::vector<double> snr(40, 3.0);
  const auto w = sample_weights(snr, SplitSpec{});
  EXPECT_EQ(w.indices.size(), 40u);
  for (double x : w.weights) EXPECT_EQ(x, 1.0);
}

// Images

ImageTensor pattern(int h, int w) {
  ImageTensor img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>((y * 31 + x * 7) % 17) / 16.0f;
  return img;
}

TEST(Augment, GroupLaws) {
  const auto img = pattern(6, 9);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_vertical(flip_vertical(img)), img);
  EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1), img);
  EXPECT_EQ(rotate90(img, 4), img);
  EXPECT_EQ(rotate90(img, 2), flip_vertical(flip_horizontal(img)));
  const auto r = rotate90(img, 1);
  EXPECT_EQ(r.height, 9);
  EXPECT_EQ(r.width, 6);
  // Counter-clockwise: the top-right corner moves to the top-left.
  EXPECT_EQ(r.at(0, 0), img.at(0, 8));
}

TEST(Augment, IdentitySeedReturnsInput) {
  const auto img = pattern(8, 8);
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    if (sample_augmentation(seed).is_identity()) {
      EXPECT_EQ(augment(img, seed), img);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Augment, PreservesShapeAndValues) {
  const auto img = pattern(8, 8);
  auto sorted = img.values;
  std::sort(sorted.begin(), sorted.end());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = augment(img, seed);
    EXPECT_EQ(out.height, 8);
    EXPECT_EQ(out.width, 8);
    auto s = out.values;
    std::sort(s.begin(), s.end());
    EXPECT_EQ(s, sorted);
  }
}

TEST(Image, ConstantImageStaysConstant) {
  TempDir dir;
  write_gray(dir / "c.png", 512, 51);
  const auto t = preprocess(dir / "c.png");
  EXPECT_EQ(t.height, 128);
  EXPECT_EQ(t.width, 128);
  for (float v : t.values) EXPECT_FLOAT_EQ(v, 51.0f / 255.0f);

  write_gray(dir / "c16.png", 64, 1000, 16);
  const auto raw = read_png(dir / "c16.png");
  EXPECT_EQ(raw.bit_depth, 16);
  EXPECT_EQ(raw.max_value(), 65535u);
  const auto t16 = preprocess(dir / "c16.png", 32);
  for (float v : t16.values) EXPECT_FLOAT_EQ(v, 1000.0f / 65535.0f);
}

TEST(Image, RampStaysRamp) {
  ImageTensor img(512, 512);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) img.at(y, x) = static_cast<float>(x) / 511.0f;
  const auto out = resize_bilinear(img, 128, 128);
  ASSERT_EQ(out.height, 128);
  ASSERT_EQ(out.width, 128);
  // Output column x samples source coordinate 4x + 1.5.
  for (int y : {0, 64, 127})
    for (int x = 0; x < 128; ++x) EXPECT_NEAR(out.at(y, x), (4.0 * x + 1.5) / 511.0, 1e-6);
}

TEST(Image, CorruptFileIsUndecodable) {
  TempDir dir;
  std::ofstream(dir / "bad.png", std::ios::binary) << "not a png at all";
  EXPECT_EQ(error_code_of([&] { read_png(dir / "bad.png"); }), ErrorCode::UndecodableImage);
  const std::vector<std::uint8_t> junk{1, 2, 3};
  EXPECT_EQ(error_code_of([&] { decode_png(junk); }), ErrorCode::UndecodableImage);
}

TEST(Image, DecodeFromMemoryMatchesFile) {
  TempDir dir;
  RawImage img{5, 7, 8, {}};
  for (int i = 0; i < 35; ++i) img.pixels.push_back(static_cast<std::uint16_t>(i * 7));
  write_png(dir / "p.png", img);
  std::ifstream in(dir / "p.png", std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto mem = decode_png(bytes);
  const auto file = read_png(dir / "p.png");
  EXPECT_EQ(mem.pixels, img.pixels);
  EXPECT_EQ(file.pixels, img.pixels);
  EXPECT_EQ(mem.width, 7);
  EXPECT_EQ(mem.height, 5);
}

// Synthetic data

TEST(Synth, MechanismValues) {
  EXPECT_DOUBLE_EQ(synth_mechanism(80, 215, "BiNPs 50nm"), -80 - 15 - 11);
  EXPECT_DOUBLE_EQ(synth_mechanism(140, 430, "BiNPs 100nm"), 60 + 15 + 11);
  EXPECT_DOUBLE_EQ(synth_mechanism(100, 430, "Iodine"), 15 - 5 + 11);
  EXPECT_EQ(error_code_of([] { synth_mechanism(90, 215, "Iodine"); }), ErrorCode::InvalidArgument);
  EXPECT_GT(synth_hole_intensity(80), synth_hole_intensity(140));
}

TEST(Synth, NoiselessLabelsAndCellCoverage) {
  TempDir dir;
  SynthConfig config;
  config.n_records = 48;
  config.image_size = 32;
  const auto cat = synth_generate(config, dir / "d");
  ASSERT_EQ(cat.records.size(), 48u);
  std::set<std::tuple<int, int, std::string>> cells;
  for (const auto& r : cat.records) {
    EXPECT_EQ(r.snr, synth_mechanism(r.voltage_kvp, r.current_mas, r.agent));
    cells.emplace(r.voltage_kvp, r.current_mas, r.agent);
  }
  EXPECT_EQ(cells.size(), kSynthCells);
  EXPECT_EQ(cat.vocab.size(Field::Voltage), 4u);
  EXPECT_EQ(cat.vocab.size(Field::Current), 2u);
  EXPECT_EQ(cat.vocab.size(Field::Agent), 3u);
  const auto raw = read_png(cat.resolve(cat.records[0]));
  EXPECT_EQ(raw.width, 32);
}

TEST(Synth, DeterministicBytes) {
  TempDir dir;
  SynthConfig config;
  config.n_records = 30;
  config.image_size = 48;
  config.noise_level = 0.05;
  const auto a = synth_generate(config, dir / "a");
  const auto b = synth_generate(config, dir / "b");
  EXPECT_EQ(hash_file(dir / "a" / "metadata.csv"), hash_file(dir / "b" / "metadata.csv"));
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(hash_file(a.resolve(a.records[i])), hash_file(b.resolve(b.records[i])));
  }
}

TEST(Synth, NoisyLabelsTrackMechanism) {
  TempDir dir;
  SynthConfig config;
  config.n_records = 240;
  config.image_size = 16;
  config.noise_level = 0.05;
  const auto cat = synth_generate(config, dir / "d");
  std::vector<double> g, y;
  for (const auto& r : cat.records) {
    g.push_back(synth_mechanism(r.voltage_kvp, r.current_mas, r.agent));
    y.push_back(r.snr);
  }
  const double n = static_cast<double>(g.size());
  const double mg = std::accumulate(g.begin(), g.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sgy = 0, sgg = 0, syy = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    sgy += (g[i] - mg) * (y[i] - my);
    sgg += (g[i] - mg) * (g[i] - mg);
    syy += (y[i] - my) * (y[i] - my);
  }
  EXPECT_GE(sgy / std::sqrt(sgg * syy), 0.99);
}

}  // namespace
}  // namespace capri::data
