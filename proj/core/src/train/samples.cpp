#include "capri/train/samples.hpp"

#include "capri/error.hpp"

namespace capri::train {

data::AcquisitionParams record_params(const data::ScanCatalog& catalog, std::size_t record_id,
                                      int noise_levels) {
  if (record_id >= catalog.records.size()) {
    throw Error(ErrorCode::RecordNotFound, "record " + std::to_string(record_id));
  }
  data::AcquisitionParams p = catalog.vocab.encode(catalog.records[record_id]);
  p.noise = data::inert_noise_level(record_id, noise_levels);
  return p;
}

SampleSet load_samples(const data::ScanCatalog& catalog, std::span<const std::size_t> indices,
                       int input_size, int noise_levels) {
  SampleSet out;
  out.reserve(indices.size());
  for (std::size_t id : indices) {
    if (id >= catalog.records.size()) {
      throw Error(ErrorCode::RecordNotFound, "record " + std::to_string(id));
    }
    const auto& rec = catalog.records[id];
    out.push_back(Sample{data::preprocess(catalog.resolve(rec), input_size),
                         record_params(catalog, id, noise_levels), rec.snr, id});
  }
  return out;
}

std::vector<double> targets(const SampleSet& samples) {
  std::vector<double> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.snr);
  return y;
}

}  // namespace capri::train
