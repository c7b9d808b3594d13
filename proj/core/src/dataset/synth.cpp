#include "capri/dataset/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "capri/dataset/image.hpp"
#include "capri/error.hpp"
#include "capri/util/hash.hpp"

namespace capri::data {
namespace {

constexpr double kBackground = 0.05;
constexpr double kBody = 0.30;
constexpr double kLabelNoiseScale = 10.0;

RawImage render(const SynthConfig& config, int voltage_kvp, std::mt19937_64& rng) {
  const int size = config.image_size;
  const double s = static_cast<double>(size);
  std::uniform_real_distribution<double> jitter(-0.01 * s, 0.01 * s);
  const double dx = jitter(rng);
  const double dy = jitter(rng);
  const double body_lo = 0.1 * s;
  const double body_hi = 0.9 * s;
  const double pitch = (body_hi - body_lo) / config.grid;
  const double hole = synth_hole_intensity(voltage_kvp);
  std::normal_distribution<double> noise(0.0, config.noise_level);

  RawImage img{size, size, 16, std::vector<std::uint16_t>(static_cast<std::size_t>(size) * size)};
  for (int y = 0; y < size; ++y) {
    const double py = y + 0.5 - dy;
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5 - dx;
      double value = kBackground;
      if (px >= body_lo && px < body_hi && py >= body_lo && py < body_hi) {
        value = kBody;
        const int col = std::min(static_cast<int>((px - body_lo) / pitch), config.grid - 1);
        const int row = std::min(static_cast<int>((py - body_lo) / pitch), config.grid - 1);
        const double cx = body_lo + (col + 0.5) * pitch;
        const double cy = body_lo + (row + 0.5) * pitch;
        // Hole diameters vary across columns, mirroring a 4-7 mm spread.
        const double radius = pitch * (0.22 + 0.06 * (col % 4));
        if ((px - cx) * (px - cx) + (py - cy) * (py - cy) <= radius * radius) value = hole;
      }
      if (config.noise_level > 0.0) value += noise(rng);
      value = std::clamp(value, 0.0, 1.0);
      img.pixels[static_cast<std::size_t>(y) * size + x] =
          static_cast<std::uint16_t>(std::lround(value * 65535.0));
    }
  }
  return img;
}

}  // namespace

double synth_mechanism(int voltage_kvp, int current_mas, std::string_view agent) {
  double a_term;
  if (agent == "BiNPs 100nm") a_term = 60.0;
  else if (agent == "BiNPs 50nm") a_term = -80.0;
  else if (agent == "Iodine") a_term = 15.0;
  else throw Error(ErrorCode::InvalidArgument, "agent outside synthetic design: " + std::string(agent));

  double v_term;
  switch (voltage_kvp) {
    case 80: v_term = -15.0; break;
    case 100: v_term = -5.0; break;
    case 120: v_term = 5.0; break;
    case 140: v_term = 15.0; break;
    default: throw Error(ErrorCode::InvalidArgument, "voltage outside synthetic design");
  }

  double t_term;
  switch (current_mas) {
    case 215: t_term = -11.0; break;
    case 430: t_term = 11.0; break;
    default: throw Error(ErrorCode::InvalidArgument, "current outside synthetic design");
  }
  return a_term + v_term + t_term;
}

double synth_hole_intensity(int voltage_kvp) { return 0.95 - 0.004 * (voltage_kvp - 80); }

SynthCell synth_cell(std::size_t record_index) noexcept {
  const std::size_t cell = record_index % kSynthCells;
  const std::size_t a = cell % kSynthAgents.size();
  const std::size_t v = (cell / kSynthAgents.size()) % kSynthVoltages.size();
  const std::size_t t = cell / (kSynthAgents.size() * kSynthVoltages.size());
  return {kSynthVoltages[v], kSynthCurrents[t], kSynthAgents[a]};
}

ScanCatalog synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  if (config.n_records == 0 || config.grid <= 0 || config.image_size < 8 ||
      !(config.noise_level >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid synth config");
  }
  std::filesystem::create_directories(out_dir / "images");

  ScanCatalog catalog;
  catalog.root = out_dir;
  std::uniform_real_distribution<double> label_noise(-1.0, 1.0);
  for (std::size_t i = 0; i < config.n_records; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, i));
    const SynthCell cell = synth_cell(i);
    char name[32];
    std::snprintf(name, sizeof name, "images/synth_%05zu.png", i);
    write_png(out_dir / name, render(config, cell.voltage_kvp, rng));

    double snr = synth_mechanism(cell.voltage_kvp, cell.current_mas, cell.agent);
    if (config.noise_level > 0.0) snr += kLabelNoiseScale * config.noise_level * label_noise(rng);
    catalog.records.push_back({name, cell.voltage_kvp, cell.current_mas, std::string(cell.agent), snr});
  }
  catalog.vocab = Vocab::from_records(catalog.records);
  write_catalog(catalog, out_dir / "metadata.csv");
  return load_catalog(out_dir, out_dir / "metadata.csv");
}

}  // namespace capri::data
