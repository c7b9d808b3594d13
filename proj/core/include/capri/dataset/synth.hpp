#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "capri/dataset/catalog.hpp"

namespace capri::data {

// Synthetic phantom dataset with a known causal mechanism.
//
// Labels follow an additive mechanism g(v, t, a) = A(a) + B(v) + C(t):
//
//   A: BiNPs 100nm = +60, BiNPs 50nm = -80, Iodine = +15
//   B: 80 kVp = -15, 100 kVp = -5, 120 kVp = +5, 140 kVp = +15
//   C: 215 mAs = -11, 430 mAs = +11
//
// Over a balanced design the agent term carries ~93% of the label variance,
// voltage ~3.4% and current ~3.3%. The rendered image depends on voltage
// only (hole intensity falls linearly with kVp); current and agent are not
// visible in the pixels, so any skill beyond the voltage share has to come
// from the parameter embeddings.
//
// Images are a square phantom body holding a grid×grid array of circular
// holes on a dark background. Each record gets a small random whole-phantom
// offset plus Gaussian pixel noise of standard deviation `noise_level`.
// Labels receive bounded uniform noise of amplitude 10 · noise_level.

inline constexpr std::array<int, 4> kSynthVoltages{80, 100, 120, 140};
inline constexpr std::array<int, 2> kSynthCurrents{215, 430};
inline constexpr std::array<std::string_view, 3> kSynthAgents{"BiNPs 100nm", "BiNPs 50nm", "Iodine"};
inline constexpr std::size_t kSynthCells =
    kSynthVoltages.size() * kSynthCurrents.size() * kSynthAgents.size();

struct SynthConfig {
  std::size_t n_records = 240;
  int grid = 13;
  double noise_level = 0.0;
  std::uint64_t seed = 7;
  int image_size = 512;
};

/// The ground-truth mechanism g(v, t, a). Throws Error(InvalidArgument) for
/// levels outside the synthetic design.
double synth_mechanism(int voltage_kvp, int current_mas, std::string_view agent);

/// Hole intensity in [0,1] rendered for a voltage level.
double synth_hole_intensity(int voltage_kvp);

/// Parameter cell of record i; cycles through all 24 (v, t, a) cells.
struct SynthCell {
  int voltage_kvp;
  int current_mas;
  std::string_view agent;
};
SynthCell synth_cell(std::size_t record_index) noexcept;

/// Writes out_dir/metadata.csv and out_dir/images/*.png and returns the
/// loaded catalog. Output bytes depend only on the config.
ScanCatalog synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace capri::data
