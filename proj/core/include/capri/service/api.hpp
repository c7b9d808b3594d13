#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "capri/causal/engine.hpp"
#include "capri/causal/scenario.hpp"
#include "capri/dataset/catalog.hpp"
#include "capri/train/ensemble.hpp"

namespace capri::service {

/// Each field can be overridden by the environment variable in brackets.
struct ServiceConfig {
  std::filesystem::path checkpoint;         // [CAPRI_CHECKPOINT] file or ensemble directory
  std::string host = "127.0.0.1";           // [CAPRI_HOST]
  int port = 8080;                          // [CAPRI_PORT]
  std::filesystem::path data_root;          // [CAPRI_DATA_ROOT] directory with metadata.csv
  std::string metadata_file = "metadata.csv";
  int max_concurrency = 4;                  // [CAPRI_MAX_CONCURRENCY]
  std::filesystem::path static_dir;         // [CAPRI_STATIC_DIR] built UI assets, optional
  causal::EnsembleMode mode = causal::EnsembleMode::BestMember;  // [CAPRI_ENSEMBLE_MODE] best|ensemble

  /// Throws Error(InvalidArgument) for unparsable values.
  void apply_env();
  void validate() const;
};

struct Request {
  std::string method;  // "GET" or "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Rounds to 6 significant digits, the precision of every JSON number.
double round_sig6(double value);

/// Transport-independent request handler over a frozen model and catalog.
///
/// GET  /health                 {status, model_version, members, mode}
/// GET  /vocab                  {voltage, current, agent}
/// GET  /records?limit&offset   {total, offset, limit, records: [{id, v, t, a, snr_obs}]}
/// POST /predict                {record_id} or {image_id, params: {v, t, a}} → {snr_hat, std?}
/// POST /predict/upload?v&t&a   PNG body → {snr_hat, std?}
/// POST /whatif                 {record_id, do: {v?, t?, a?}} → {snr_obs, snr_i, snr_cf, uncertainty, ...}
/// GET  /scenarios              {scenarios: [...]} default scenario list
///
/// Every JSON body carries "checkpoint_hash". Errors: 400 malformed body
/// (field named), 404 unknown route, record or level (value echoed),
/// 503 when no model is loaded.
class Api {
 public:
  Api(std::shared_ptr<const train::Ensemble> models, std::string checkpoint_hash,
      std::shared_ptr<const data::ScanCatalog> catalog, causal::EnsembleMode mode);

  Response handle(const Request& request) const;

  const std::string& checkpoint_hash() const noexcept { return hash_; }

 private:
  Response health() const;
  Response vocab() const;
  Response records(const Request& request) const;
  Response predict(const Request& request) const;
  Response predict_upload(const Request& request) const;
  Response whatif(const Request& request) const;
  Response scenarios() const;

  std::shared_ptr<const train::Ensemble> models_;
  std::string hash_;
  std::shared_ptr<const data::ScanCatalog> catalog_;
  causal::EnsembleMode mode_;
  std::unique_ptr<causal::ImageCache> images_;
};

/// Loads the checkpoint and catalog named by the config. Throws on failure
/// so the service refuses to start without a model.
std::shared_ptr<Api> load_api(const ServiceConfig& config);

}  // namespace capri::service
