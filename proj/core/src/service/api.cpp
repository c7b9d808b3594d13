#include "capri/service/api.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <json.hpp>

#include "capri/dataset/image.hpp"
#include "capri/error.hpp"
#include "capri/train/checkpoint.hpp"

namespace capri::service {
namespace {

using nlohmann::json;

// An error with the HTTP status it maps to.
struct HttpError {
  int status;
  std::string message;
};

Response reply(int status, json body, const std::string& hash) {
  body["checkpoint_hash"] = hash;
  return Response{status, body.dump(), "application/json"};
}

json num(double v) { return std::isfinite(v) ? json(round_sig6(v)) : json(nullptr); }

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::RecordNotFound:
    case ErrorCode::UnknownLevel:
    case ErrorCode::IndexOutOfVocab:
      return 404;
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedScenario:
    case ErrorCode::UndecodableImage:
    case ErrorCode::ShapeMismatch:
      return 400;
    default:
      return 500;
  }
}

json parse_body(const Request& req) {
  if (req.body.empty()) throw HttpError{400, "request body must be a JSON object"};
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw HttpError{400, "request body must be a JSON object"};
  return body;
}

std::size_t parse_record_id(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end()) throw HttpError{400, std::string("field '") + key + "' is required"};
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw HttpError{400, std::string("field '") + key + "' must be a non-negative integer"};
  }
  return it->get<std::size_t>();
}

std::string level_text(const json& value, const std::string& field) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  throw HttpError{400, "field '" + field + "' must be a string or integer level"};
}

// Reads {v?, t?, a?} (long names accepted) into textual levels.
std::map<data::Field, std::string> parse_levels(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw HttpError{400, "field '" + where + "' must be an object"};
  std::map<data::Field, std::string> out;
  for (const auto& [key, value] : obj.items()) {
    std::optional<data::Field> f = data::parse_field(key);
    if (!f) {
      if (key == "v") f = data::Field::Voltage;
      else if (key == "t") f = data::Field::Current;
      else if (key == "a") f = data::Field::Agent;
    }
    if (!f) throw HttpError{400, "field '" + where + "." + key + "' is not one of v, t, a"};
    if (out.count(*f)) throw HttpError{400, "field '" + where + "' assigns " + key + " twice"};
    out[*f] = level_text(value, where + "." + key);
  }
  return out;
}

std::size_t parse_size(const std::map<std::string, std::string>& query, const std::string& key,
                       std::size_t fallback) {
  const auto it = query.find(key);
  if (it == query.end() || it->second.empty()) return fallback;
  std::size_t value = 0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw HttpError{400, "query parameter '" + key + "' must be a non-negative integer"};
  }
  return value;
}

const char* mode_name(causal::EnsembleMode mode) {
  return mode == causal::EnsembleMode::Ensemble ? "ensemble" : "best";
}

}  // namespace

double round_sig6(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return std::strtod(buf, nullptr);
}

void ServiceConfig::apply_env() {
  const auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  const auto to_int = [](const std::string& s, const char* name) {
    int value = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be an integer, got '" + s + "'");
    }
    return value;
  };
  if (auto v = env("CAPRI_CHECKPOINT")) checkpoint = *v;
  if (auto v = env("CAPRI_HOST")) host = *v;
  if (auto v = env("CAPRI_PORT")) port = to_int(*v, "CAPRI_PORT");
  if (auto v = env("CAPRI_DATA_ROOT")) data_root = *v;
  if (auto v = env("CAPRI_MAX_CONCURRENCY")) max_concurrency = to_int(*v, "CAPRI_MAX_CONCURRENCY");
  if (auto v = env("CAPRI_STATIC_DIR")) static_dir = *v;
  if (auto v = env("CAPRI_ENSEMBLE_MODE")) {
    if (*v == "best") {
      mode = causal::EnsembleMode::BestMember;
    } else if (*v == "ensemble") {
      mode = causal::EnsembleMode::Ensemble;
    } else {
      throw Error(ErrorCode::InvalidArgument, "CAPRI_ENSEMBLE_MODE must be best or ensemble, got '" + *v + "'");
    }
  }
}

void ServiceConfig::validate() const {
  if (checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "no checkpoint configured");
  if (data_root.empty()) throw Error(ErrorCode::InvalidArgument, "no data root configured");
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range");
  if (max_concurrency < 1) throw Error(ErrorCode::InvalidArgument, "max_concurrency must be >= 1");
}

Api::Api(std::shared_ptr<const train::Ensemble> models, std::string checkpoint_hash,
         std::shared_ptr<const data::ScanCatalog> catalog, causal::EnsembleMode mode)
    : models_(std::move(models)), hash_(std::move(checkpoint_hash)), catalog_(std::move(catalog)), mode_(mode) {
  if (models_ && !models_->members.empty() && catalog_) {
    images_ = std::make_unique<causal::ImageCache>(*catalog_, models_->best().net.config().input_size);
  }
}

Response Api::handle(const Request& req) const {
  try {
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";
    if (req.path == "/health" && get) return health();
    const bool known = req.path == "/vocab" || req.path == "/records" || req.path == "/predict" ||
                       req.path == "/predict/upload" || req.path == "/whatif" || req.path == "/scenarios";
    if (!known) throw HttpError{404, "no route for " + req.method + " " + req.path};
    if (!images_) throw HttpError{503, "model not loaded"};
    if (req.path == "/vocab" && get) return vocab();
    if (req.path == "/records" && get) return records(req);
    if (req.path == "/scenarios" && get) return scenarios();
    if (req.path == "/predict" && post) return predict(req);
    if (req.path == "/predict/upload" && post) return predict_upload(req);
    if (req.path == "/whatif" && post) return whatif(req);
    throw HttpError{405, "method " + req.method + " not allowed on " + req.path};
  } catch (const HttpError& e) {
    return reply(e.status, {{"error", e.message}}, hash_);
  } catch (const Error& e) {
    return reply(status_for(e.code()), {{"error", e.what()}, {"code", std::string(to_string(e.code()))}}, hash_);
  } catch (const std::exception& e) {
    return reply(500, {{"error", e.what()}}, hash_);
  }
}

Response Api::health() const {
  if (!images_) return reply(503, {{"status", "unavailable"}, {"model_version", nullptr}}, hash_);
  return reply(200,
               {{"status", "ok"},
                {"model_version", hash_},
                {"members", models_->members.size()},
                {"best_index", models_->best_index},
                {"mode", mode_name(mode_)},
                {"records", catalog_->records.size()}},
               hash_);
}

Response Api::vocab() const {
  const auto& v = models_->best().vocab;
  return reply(200,
               {{"voltage", v.voltages()}, {"current", v.currents()}, {"agent", v.agents()}},
               hash_);
}

Response Api::records(const Request& req) const {
  const std::size_t total = catalog_->records.size();
  const std::size_t limit = std::min<std::size_t>(parse_size(req.query, "limit", 50), 1000);
  const std::size_t offset = parse_size(req.query, "offset", 0);
  json list = json::array();
  for (std::size_t i = offset; i < total && i < offset + limit; ++i) {
    const auto& r = catalog_->records[i];
    list.push_back({{"id", i}, {"v", r.voltage_kvp}, {"t", r.current_mas}, {"a", r.agent}, {"snr_obs", num(r.snr)}});
  }
  return reply(200, {{"total", total}, {"offset", offset}, {"limit", limit}, {"records", list}}, hash_);
}

Response Api::predict(const Request& req) const {
  const json body = parse_body(req);
  const bool by_record = body.contains("record_id");
  const std::size_t image_id = parse_record_id(body, by_record ? "record_id" : "image_id");
  const auto image = images_->get(image_id);

  std::vector<std::vector<double>> rows;
  const auto run = [&](const train::TrainedModel& m) {
    auto params = causal::factual_params(m, *catalog_, image_id);
    if (!by_record && body.contains("params")) {
      for (const auto& [field, level] : parse_levels(body.at("params"), "params")) {
        params.set(field, causal::make_assignment(m.vocab, field, level).index);
      }
    }
    rows.push_back({causal::predict_observational(m.net, *image, params)});
  };
  if (mode_ == causal::EnsembleMode::BestMember) {
    run(models_->best());
  } else {
    for (const auto& m : models_->members) run(m);
  }
  std::vector<double> mean, std;
  train::mean_and_std(rows, mean, std);
  json out{{"snr_hat", num(mean[0])}};
  if (mode_ == causal::EnsembleMode::Ensemble) out["std"] = num(std[0]);
  out[by_record ? "record_id" : "image_id"] = image_id;
  return reply(200, out, hash_);
}

Response Api::predict_upload(const Request& req) const {
  const auto& best = models_->best();
  std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
  const auto raw = data::decode_png(bytes);
  const int size = best.net.config().input_size;
  const auto image = data::resize_bilinear(data::to_tensor(raw), size, size);

  std::map<data::Field, std::string> levels;
  for (const auto& [key, value] : req.query) {
    auto f = data::parse_field(key);
    if (!f && key == "v") f = data::Field::Voltage;
    if (!f && key == "t") f = data::Field::Current;
    if (!f && key == "a") f = data::Field::Agent;
    if (f) levels[*f] = value;
  }
  for (auto f : {data::Field::Voltage, data::Field::Current, data::Field::Agent}) {
    if (!levels.count(f)) {
      throw HttpError{400, "query parameter '" + std::string(data::field_symbol(f)) + "' is required"};
    }
  }
  std::vector<std::vector<double>> rows;
  const auto run = [&](const train::TrainedModel& m) {
    data::AcquisitionParams p;
    for (const auto& [field, level] : levels) p.set(field, causal::make_assignment(m.vocab, field, level).index);
    p.noise = 0;
    rows.push_back({causal::predict_observational(m.net, image, p)});
  };
  if (mode_ == causal::EnsembleMode::BestMember) {
    run(best);
  } else {
    for (const auto& m : models_->members) run(m);
  }
  std::vector<double> mean, std;
  train::mean_and_std(rows, mean, std);
  json out{{"snr_hat", num(mean[0])}};
  if (mode_ == causal::EnsembleMode::Ensemble) out["std"] = num(std[0]);
  return reply(200, out, hash_);
}

Response Api::whatif(const Request& req) const {
  const json body = parse_body(req);
  causal::Scenario s;
  s.record_id = parse_record_id(body, "record_id");
  if (body.contains("do")) {
    for (const auto& [field, level] : parse_levels(body.at("do"), "do")) {
      switch (field) {
        case data::Field::Voltage: s.do_voltage = level; break;
        case data::Field::Current: s.do_current = level; break;
        case data::Field::Agent: s.do_agent = level; break;
      }
    }
  }
  const auto results = causal::run_scenarios(*models_, mode_, *images_, {s});
  const auto& r = results.front();
  json assignments = json::array();
  const auto& vocab = models_->best().vocab;
  for (const auto& a : r.result.assignments) {
    assignments.push_back({{"target", data::field_symbol(a.target)}, {"value", vocab.label(a.target, a.index)}});
  }
  json uncertainty = nullptr;
  if (r.result.uncertainty) {
    uncertainty = {{"std_obs", num(r.result.uncertainty->std_obs)},
                   {"std_i", num(r.result.uncertainty->std_i)},
                   {"std_cf", num(r.result.uncertainty->std_cf)}};
  }
  return reply(200,
               {{"record_id", *s.record_id},
                {"v", r.v},
                {"t", r.t},
                {"a", r.a},
                {"scenario", r.scenario},
                {"assignments", assignments},
                {"snr_label", num(r.snr_label)},
                {"snr_obs", num(r.result.snr_obs)},
                {"snr_i", num(r.result.snr_i)},
                {"snr_cf", num(r.result.snr_cf)},
                {"uncertainty", uncertainty}},
               hash_);
}

Response Api::scenarios() const {
  json list = json::array();
  for (const auto& s : causal::default_scenarios()) {
    json assign = json::object();
    if (!s.do_voltage.empty()) assign["v"] = s.do_voltage;
    if (!s.do_current.empty()) assign["t"] = s.do_current;
    if (!s.do_agent.empty()) assign["a"] = s.do_agent;
    json entry{{"v", s.voltage}, {"t", s.current}, {"a", s.agent}, {"do", assign}};
    try {
      entry["record_ids"] = causal::select_records(s, *catalog_);
    } catch (const Error&) {
      entry["record_ids"] = json::array();
    }
    list.push_back(std::move(entry));
  }
  return reply(200, {{"scenarios", list}}, hash_);
}

std::shared_ptr<Api> load_api(const ServiceConfig& config) {
  config.validate();
  auto models = std::make_shared<const train::Ensemble>(train::load_models(config.checkpoint));
  auto hash = train::checkpoint_hash(config.checkpoint);
  auto catalog = std::make_shared<const data::ScanCatalog>(
      data::load_catalog(config.data_root, config.data_root / config.metadata_file));
  return std::make_shared<Api>(std::move(models), std::move(hash), std::move(catalog), config.mode);
}

}  // namespace capri::service
