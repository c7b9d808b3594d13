#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capri::data {

/// The three acquisition parameters that act as causal treatments.
enum class Field { Voltage, Current, Agent };

std::string_view field_name(Field f) noexcept;        // "voltage", ...
std::string_view field_symbol(Field f) noexcept;      // "v", "t", "a"
std::optional<Field> parse_field(std::string_view name) noexcept;

/// Dense vocabulary indices for one record. -1 marks a field that is absent
/// (ablation variants drop fields; `noise` is only set for the inert-noise
/// variant).
struct AcquisitionParams {
  int voltage = -1;
  int current = -1;
  int agent = -1;
  int noise = -1;

  int get(Field f) const noexcept;
  void set(Field f, int index) noexcept;
  bool operator==(const AcquisitionParams&) const = default;
};

struct ScanRecord {
  std::filesystem::path image_path;
  int voltage_kvp = 0;
  int current_mas = 0;
  std::string agent;
  double snr = 0.0;
};

/// Per-field mapping from raw level to a contiguous index. Levels are the
/// sorted unique values observed in the data.
class Vocab {
 public:
  Vocab() = default;
  Vocab(std::vector<int> voltages, std::vector<int> currents, std::vector<std::string> agents);

  static Vocab from_records(std::span<const ScanRecord> records);

  const std::vector<int>& voltages() const noexcept { return voltages_; }
  const std::vector<int>& currents() const noexcept { return currents_; }
  const std::vector<std::string>& agents() const noexcept { return agents_; }

  std::size_t size(Field f) const noexcept;
  std::vector<std::string> labels(Field f) const;
  std::string label(Field f, int index) const;

  /// Index of a level given its textual label ("120", "120kVp", "Iodine").
  std::optional<int> index_of(Field f, std::string_view label) const;

  /// Throws Error(IndexOutOfVocab) when a record value is not in the vocab.
  AcquisitionParams encode(const ScanRecord& record) const;

  bool operator==(const Vocab&) const = default;

 private:
  std::vector<int> voltages_;
  std::vector<int> currents_;
  std::vector<std::string> agents_;
};

struct Provenance {
  std::string source;
  std::string content_hash;
};

struct ScanCatalog {
  std::filesystem::path root;
  std::vector<ScanRecord> records;
  Vocab vocab;
  Provenance provenance;

  std::filesystem::path resolve(const ScanRecord& record) const;
  std::vector<double> snr_values() const;
};

/// Loads a metadata CSV with columns (filename, voltage, current, agent, snr).
/// Header names are matched case-insensitively; common aliases such as
/// "kvp", "mas", "contrast" and "image" are accepted.
///
/// Errors: MissingImage, MalformedRow (message carries the 0-based data row),
/// EmptyCatalog.
ScanCatalog load_catalog(const std::filesystem::path& root,
                         const std::filesystem::path& metadata_file);

/// Writes the normalized metadata CSV (filename,voltage,current,agent,snr).
void write_catalog(const ScanCatalog& catalog, const std::filesystem::path& metadata_file);

/// Level of the causally inert random field used by the noise ablation. A
/// fixed hash of the record index, independent of every other field.
int inert_noise_level(std::size_t record_index, int n_levels) noexcept;

}  // namespace capri::data
