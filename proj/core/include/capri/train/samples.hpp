#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "capri/dataset/catalog.hpp"
#include "capri/dataset/image.hpp"

namespace capri::train {

/// A preprocessed record ready for the network.
struct Sample {
  data::ImageTensor image;
  data::AcquisitionParams params;
  double snr = 0.0;
  std::size_t record_id = 0;
};

using SampleSet = std::vector<Sample>;

inline constexpr int kDefaultNoiseLevels = 4;

/// Preprocesses the selected catalog records to input_size². The inert
/// noise field is always populated; models that do not use it ignore it.
SampleSet load_samples(const data::ScanCatalog& catalog, std::span<const std::size_t> indices,
                       int input_size, int noise_levels = kDefaultNoiseLevels);

/// Params for one record of the catalog (vocab encoding plus noise level).
data::AcquisitionParams record_params(const data::ScanCatalog& catalog, std::size_t record_id,
                                      int noise_levels = kDefaultNoiseLevels);

std::vector<double> targets(const SampleSet& samples);

}  // namespace capri::train
