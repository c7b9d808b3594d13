#include "capri/dataset/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "capri/error.hpp"
#include "capri/util/csv.hpp"
#include "capri/util/hash.hpp"

namespace capri::data {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

// Integer level with an optional unit suffix ("120", "120kVp", "215 mAs").
std::optional<int> parse_level(std::string_view text) {
  text = trim(text);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr == text.data()) return std::nullopt;
  std::string_view rest = trim(std::string_view(ptr, text.data() + text.size() - ptr));
  if (rest.empty() || iequals(rest, "kvp") || iequals(rest, "kv") || iequals(rest, "mas") ||
      iequals(rest, "ma")) {
    return value;
  }
  return std::nullopt;
}

std::optional<double> parse_real(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  std::string owned(text);
  char* end = nullptr;
  const double v = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::size_t require_column(const csv::Table& table, std::initializer_list<std::string_view> names) {
  for (auto n : names) {
    if (auto idx = table.column(n)) return *idx;
  }
  throw Error(ErrorCode::MalformedRow,
              "metadata header lacks column '" + std::string(*names.begin()) + "'");
}

template <typename T>
std::optional<int> find_index(const std::vector<T>& levels, const T& value) {
  auto it = std::lower_bound(levels.begin(), levels.end(), value);
  if (it == levels.end() || !(*it == value)) return std::nullopt;
  return static_cast<int>(it - levels.begin());
}

}  // namespace

std::string_view field_name(Field f) noexcept {
  switch (f) {
    case Field::Voltage: return "voltage";
    case Field::Current: return "current";
    case Field::Agent: return "agent";
  }
  return "";
}

std::string_view field_symbol(Field f) noexcept {
  switch (f) {
    case Field::Voltage: return "v";
    case Field::Current: return "t";
    case Field::Agent: return "a";
  }
  return "";
}

std::optional<Field> parse_field(std::string_view name) noexcept {
  for (Field f : {Field::Voltage, Field::Current, Field::Agent}) {
    if (iequals(name, field_name(f)) || iequals(name, field_symbol(f))) return f;
  }
  return std::nullopt;
}

int AcquisitionParams::get(Field f) const noexcept {
  switch (f) {
    case Field::Voltage: return voltage;
    case Field::Current: return current;
    case Field::Agent: return agent;
  }
  return -1;
}

void AcquisitionParams::set(Field f, int index) noexcept {
  switch (f) {
    case Field::Voltage: voltage = index; break;
    case Field::Current: current = index; break;
    case Field::Agent: agent = index; break;
  }
}

Vocab::Vocab(std::vector<int> voltages, std::vector<int> currents, std::vector<std::string> agents)
    : voltages_(std::move(voltages)), currents_(std::move(currents)), agents_(std::move(agents)) {
  std::sort(voltages_.begin(), voltages_.end());
  voltages_.erase(std::unique(voltages_.begin(), voltages_.end()), voltages_.end());
  std::sort(currents_.begin(), currents_.end());
  currents_.erase(std::unique(currents_.begin(), currents_.end()), currents_.end());
  std::sort(agents_.begin(), agents_.end());
  agents_.erase(std::unique(agents_.begin(), agents_.end()), agents_.end());
}

Vocab Vocab::from_records(std::span<const ScanRecord> records) {
  std::vector<int> v, t;
  std::vector<std::string> a;
  for (const auto& r : records) {
    v.push_back(r.voltage_kvp);
    t.push_back(r.current_mas);
    a.push_back(r.agent);
  }
  return Vocab(std::move(v), std::move(t), std::move(a));
}

std::size_t Vocab::size(Field f) const noexcept {
  switch (f) {
    case Field::Voltage: return voltages_.size();
    case Field::Current: return currents_.size();
    case Field::Agent: return agents_.size();
  }
  return 0;
}

std::vector<std::string> Vocab::labels(Field f) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < size(f); ++i) out.push_back(label(f, static_cast<int>(i)));
  return out;
}

std::string Vocab::label(Field f, int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= size(f)) {
    throw Error(ErrorCode::IndexOutOfVocab, std::string(field_name(f)) + " index " +
                                                std::to_string(index) + " out of vocab");
  }
  switch (f) {
    case Field::Voltage: return std::to_string(voltages_[index]);
    case Field::Current: return std::to_string(currents_[index]);
    case Field::Agent: return agents_[index];
  }
  return {};
}

std::optional<int> Vocab::index_of(Field f, std::string_view label) const {
  switch (f) {
    case Field::Voltage:
      if (auto v = parse_level(label)) return find_index(voltages_, *v);
      return std::nullopt;
    case Field::Current:
      if (auto t = parse_level(label)) return find_index(currents_, *t);
      return std::nullopt;
    case Field::Agent: {
      const auto key = trim(label);
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        if (agents_[i] == key) return static_cast<int>(i);
      }
      // Fall back to a case-insensitive match so "iodine" resolves.
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        if (iequals(agents_[i], key)) return static_cast<int>(i);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

AcquisitionParams Vocab::encode(const ScanRecord& record) const {
  AcquisitionParams p;
  auto v = find_index(voltages_, record.voltage_kvp);
  auto t = find_index(currents_, record.current_mas);
  auto a = find_index(agents_, record.agent);
  if (!v || !t || !a) {
    throw Error(ErrorCode::IndexOutOfVocab,
                "record (" + std::to_string(record.voltage_kvp) + "," +
                    std::to_string(record.current_mas) + "," + record.agent +
                    ") not covered by vocab");
  }
  p.voltage = *v;
  p.current = *t;
  p.agent = *a;
  return p;
}

std::filesystem::path ScanCatalog::resolve(const ScanRecord& record) const {
  if (record.image_path.is_absolute()) return record.image_path;
  return root / record.image_path;
}

std::vector<double> ScanCatalog::snr_values() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.snr);
  return out;
}

ScanCatalog load_catalog(const std::filesystem::path& root,
                         const std::filesystem::path& metadata_file) {
  const csv::Table table = csv::read_file(metadata_file);
  if (table.rows.empty()) {
    throw Error(ErrorCode::EmptyCatalog, "no records in " + metadata_file.string());
  }
  const std::size_t c_file = require_column(table, {"filename", "file", "image", "path"});
  const std::size_t c_v = require_column(table, {"voltage", "kvp", "tube_voltage", "v"});
  const std::size_t c_t = require_column(table, {"current", "mas", "tube_current", "t"});
  const std::size_t c_a = require_column(table, {"agent", "contrast", "contrast_agent", "a"});
  const std::size_t c_snr = require_column(table, {"snr"});
  const std::size_t width = std::max({c_file, c_v, c_t, c_a, c_snr}) + 1;

  ScanCatalog catalog;
  catalog.root = root;
  catalog.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    auto malformed = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRow, "row " + std::to_string(i) + ": " + why);
    };
    if (row.size() < width) throw malformed("expected at least " + std::to_string(width) + " fields");
    auto v = parse_level(row[c_v]);
    auto t = parse_level(row[c_t]);
    auto snr = parse_real(row[c_snr]);
    const auto agent = trim(row[c_a]);
    const auto file = trim(row[c_file]);
    if (!v) throw malformed("unparseable voltage '" + row[c_v] + "'");
    if (!t) throw malformed("unparseable current '" + row[c_t] + "'");
    if (!snr) throw malformed("unparseable snr '" + row[c_snr] + "'");
    if (agent.empty()) throw malformed("empty agent");
    if (file.empty()) throw malformed("empty filename");

    ScanRecord rec{std::filesystem::path(std::string(file)), *v, *t, std::string(agent), *snr};
    if (!std::filesystem::exists(catalog.resolve(rec))) {
      throw Error(ErrorCode::MissingImage, catalog.resolve(rec).string());
    }
    catalog.records.push_back(std::move(rec));
  }
  catalog.vocab = Vocab::from_records(catalog.records);
  catalog.provenance = {std::filesystem::absolute(metadata_file).string(), hash_file(metadata_file)};
  return catalog;
}

void write_catalog(const ScanCatalog& catalog, const std::filesystem::path& metadata_file) {
  std::ofstream out(metadata_file, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + metadata_file.string());
  csv::write_row(out, {"filename", "voltage", "current", "agent", "snr"});
  char snr[64];
  for (const auto& r : catalog.records) {
    std::snprintf(snr, sizeof snr, "%.17g", r.snr);
    csv::write_row(out, {r.image_path.generic_string(), std::to_string(r.voltage_kvp),
                         std::to_string(r.current_mas), r.agent, snr});
  }
}

int inert_noise_level(std::size_t record_index, int n_levels) noexcept {
  if (n_levels <= 0) return -1;
  return static_cast<int>(mix_seed(0x6e6f697365ULL, record_index) % static_cast<std::uint64_t>(n_levels));
}

}  // namespace capri::data
