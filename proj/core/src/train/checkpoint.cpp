#include "capri/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "capri/error.hpp"
#include "capri/util/hash.hpp"

namespace capri::train {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "CAPRI-CKPT";

json config_to_json(const model::ModelConfig& c) {
  return json{{"input_size", c.input_size},
              {"latent_dim", c.latent_dim},
              {"conv_channels", c.conv_channels},
              {"embed_dims", {c.voltage_embed, c.current_embed, c.agent_embed, c.noise_embed}},
              {"decoder_hidden", c.decoder_hidden},
              {"dropout_rate", c.dropout_rate},
              {"bn_momentum", c.bn_momentum},
              {"bn_eps", c.bn_eps},
              {"fields", {c.fields.voltage, c.fields.current, c.fields.agent, c.fields.noise}},
              {"vocab_sizes", {c.n_voltage, c.n_current, c.n_agent, c.n_noise}}};
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  c.input_size = j.at("input_size");
  c.latent_dim = j.at("latent_dim");
  c.conv_channels = j.at("conv_channels");
  const auto& e = j.at("embed_dims");
  c.voltage_embed = e.at(0);
  c.current_embed = e.at(1);
  c.agent_embed = e.at(2);
  c.noise_embed = e.at(3);
  c.decoder_hidden = j.at("decoder_hidden");
  c.dropout_rate = j.at("dropout_rate");
  c.bn_momentum = j.at("bn_momentum");
  c.bn_eps = j.at("bn_eps");
  const auto& f = j.at("fields");
  c.fields = {f.at(0), f.at(1), f.at(2), f.at(3)};
  const auto& v = j.at("vocab_sizes");
  c.n_voltage = v.at(0);
  c.n_current = v.at(1);
  c.n_agent = v.at(2);
  c.n_noise = v.at(3);
  return c;
}

json train_to_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"optimizer", t.optimizer},
              {"adam", {t.adam_beta1, t.adam_beta2, t.adam_eps}},
              {"early_stop_patience", t.early_stop_patience},
              {"seed", t.seed},
              {"kl_beta", t.kl_beta},
              {"kl_warmup_fraction", t.kl_warmup_fraction},
              {"lr_warmup_fraction", t.lr_warmup_fraction},
              {"augment", t.augment},
              {"sampling",
               {{"train_fraction", t.sampling.train_fraction},
                {"n_quantiles", t.sampling.n_quantiles},
                {"seed", t.sampling.seed},
                {"extreme_quantile", t.sampling.extreme_quantile},
                {"extreme_dup_factor", t.sampling.extreme_dup_factor},
                {"extreme_weight_boost", t.sampling.extreme_weight_boost}}}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs");
  t.batch_size = j.at("batch_size");
  t.learning_rate = j.at("learning_rate");
  t.optimizer = j.at("optimizer");
  t.adam_beta1 = j.at("adam").at(0);
  t.adam_beta2 = j.at("adam").at(1);
  t.adam_eps = j.at("adam").at(2);
  t.early_stop_patience = j.at("early_stop_patience");
  t.seed = j.at("seed");
  t.kl_beta = j.at("kl_beta");
  t.kl_warmup_fraction = j.at("kl_warmup_fraction");
  t.lr_warmup_fraction = j.at("lr_warmup_fraction");
  t.augment = j.at("augment");
  const auto& s = j.at("sampling");
  t.sampling.train_fraction = s.at("train_fraction");
  t.sampling.n_quantiles = s.at("n_quantiles");
  t.sampling.seed = s.at("seed");
  t.sampling.extreme_quantile = s.at("extreme_quantile");
  t.sampling.extreme_dup_factor = s.at("extreme_dup_factor");
  t.sampling.extreme_weight_boost = s.at("extreme_weight_boost");
  return t;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_empty(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

void append_floats(std::string& payload, const std::vector<float>& values) {
  const std::size_t base = payload.size();
  payload.resize(base + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(&payload[base + 4 * i], &bits, 4);
  }
}

void read_floats(std::string_view payload, std::size_t offset, std::vector<float>& out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, payload.data() + offset + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": " + why);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  std::string payload;
  json tensors = json::array();
  auto add = [&](const auto& list, const char* kind) {
    for (const auto& t : list) {
      tensors.push_back({{"name", t.name},
                         {"shape", t.shape},
                         {"kind", kind},
                         {"offset", payload.size()},
                         {"count", t.size()}});
      append_floats(payload, t.value);
    }
  };
  add(m.net.parameters(), "param");
  add(m.net.buffers(), "buffer");

  json history = json::array();
  for (const auto& r : m.history) {
    history.push_back({r.epoch, r.train_loss, r.val_mae, r.val_rmse, optional_number(r.val_r2)});
  }
  const json manifest{
      {"format", "capri-ckpt"},
      {"version", kCheckpointFormatVersion},
      {"config", config_to_json(m.net.config())},
      {"target", {{"shift", m.net.target_shift()}, {"scale", m.net.target_scale()}}},
      {"vocab",
       {{"voltage", m.vocab.voltages()}, {"current", m.vocab.currents()}, {"agent", m.vocab.agents()}}},
      {"train", train_to_json(m.train)},
      {"metrics",
       {{"mae", m.val_metrics.mae}, {"rmse", m.val_metrics.rmse}, {"r2", optional_number(m.val_metrics.r2)}}},
      {"best_epoch", m.best_epoch},
      {"history", history},
      {"tensors", tensors}};
  const std::string text = manifest.dump(1);

  Fnv1a64 h;
  h.update(text);
  h.update(payload);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << kMagic << "\nformat " << kCheckpointFormatVersion << "\nmanifest " << text.size()
      << "\npayload " << payload.size() << "\nfnv1a64 " << h.hex() << "\n\n";
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  std::istringstream head(bytes);
  std::string magic, key;
  long long version = -1;
  std::size_t manifest_size = 0, payload_size = 0;
  std::string digest;
  if (!std::getline(head, magic) || magic != kMagic) corrupt(path, "bad magic");
  if (!(head >> key >> version) || key != "format") corrupt(path, "missing format tag");
  if (version != kCheckpointFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch,
                path.string() + ": format " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointFormatVersion));
  }
  if (!(head >> key >> manifest_size) || key != "manifest") corrupt(path, "missing manifest size");
  if (!(head >> key >> payload_size) || key != "payload") corrupt(path, "missing payload size");
  if (!(head >> key >> digest) || key != "fnv1a64") corrupt(path, "missing checksum");
  const std::size_t body = bytes.find("\n\n");
  if (body == std::string::npos) corrupt(path, "truncated header");
  const std::size_t start = body + 2;
  if (bytes.size() != start + manifest_size + payload_size) corrupt(path, "truncated or padded body");

  const std::string_view text(bytes.data() + start, manifest_size);
  const std::string_view payload(bytes.data() + start + manifest_size, payload_size);
  Fnv1a64 h;
  h.update(text);
  h.update(payload);
  if (h.hex() != digest) corrupt(path, "checksum mismatch");

  try {
    const json manifest = json::parse(text);
    if (manifest.at("version").get<int>() != kCheckpointFormatVersion) {
      throw Error(ErrorCode::FormatVersionMismatch, path.string() + ": manifest version differs");
    }
    const auto config = config_from_json(manifest.at("config"));
    TrainedModel m{model::VaeModel<float>(config, 0), {}, {}, {}, {}, 0};
    m.net.set_target_normalization(manifest.at("target").at("shift"), manifest.at("target").at("scale"));
    m.vocab = data::Vocab(manifest.at("vocab").at("voltage"), manifest.at("vocab").at("current"),
                          manifest.at("vocab").at("agent"));
    m.train = train_from_json(manifest.at("train"));
    const auto& mt = manifest.at("metrics");
    m.val_metrics = Metrics{mt.at("mae"), mt.at("rmse"), number_or_empty(mt.at("r2"))};
    m.best_epoch = manifest.at("best_epoch");
    for (const auto& r : manifest.at("history")) {
      m.history.push_back({r.at(0), r.at(1), r.at(2), r.at(3), number_or_empty(r.at(4))});
    }

    std::size_t filled = 0;
    for (const auto& t : manifest.at("tensors")) {
      const std::string name = t.at("name");
      auto& list = t.at("kind") == "param" ? m.net.parameters() : m.net.buffers();
      auto it = std::find_if(list.begin(), list.end(), [&](const auto& x) { return x.name == name; });
      if (it == list.end()) corrupt(path, "unexpected tensor " + name);
      const std::vector<int> shape = t.at("shape");
      const std::size_t offset = t.at("offset");
      const std::size_t count = t.at("count");
      if (shape != it->shape || count != it->size() || offset + 4 * count > payload.size()) {
        corrupt(path, "tensor " + name + " does not match the model config");
      }
      read_floats(payload, offset, it->value);
      ++filled;
    }
    if (filled != m.net.parameters().size() + m.net.buffers().size()) {
      corrupt(path, "manifest is missing tensors");
    }
    return m;
  } catch (const json::exception& e) {
    corrupt(path, std::string("bad manifest: ") + e.what());
  }
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json members = json::array();
  json seeds = json::array();
  for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%02zu.ckpt", k);
    save_checkpoint(ensemble.members[k], dir / name);
    members.push_back(name);
    seeds.push_back(ensemble.members[k].train.seed);
  }
  const json index{{"format", "capri-ensemble"},
                   {"version", kCheckpointFormatVersion},
                   {"members", members},
                   {"seeds", seeds},
                   {"best_index", ensemble.best_index}};
  std::ofstream out(dir / "ensemble.json");
  if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / "ensemble.json").string());
  out << index.dump(2) << '\n';
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
  const auto index_path = dir / "ensemble.json";
  json index;
  try {
    index = json::parse(read_all(index_path));
  } catch (const json::exception& e) {
    corrupt(index_path, e.what());
  }
  if (index.value("version", -1) != kCheckpointFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch, index_path.string());
  }
  Ensemble ens;
  for (const auto& name : index.at("members")) {
    ens.members.push_back(load_checkpoint(dir / name.get<std::string>()));
  }
  ens.best_index = index.at("best_index");
  if (ens.members.empty() || ens.best_index >= ens.members.size()) {
    corrupt(index_path, "best_index out of range");
  }
  return ens;
}

Ensemble load_models(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_ensemble(path);
  Ensemble ens;
  ens.members.push_back(load_checkpoint(path));
  return ens;
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return hash_file(path);
  Fnv1a64 h;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    h.update(f.filename().string());
    h.update(hash_file(f));
  }
  return h.hex();
}

}  // namespace capri::train
