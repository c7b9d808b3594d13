// capri: command-line front end for ingest, synth, train, evaluate, ablate,
// whatif, stats and serve.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>

#include "capri/causal/heatmap.hpp"
#include "capri/causal/scenario.hpp"
#include "capri/dataset/split.hpp"
#include "capri/dataset/synth.hpp"
#include "capri/error.hpp"
#include "capri/service/server.hpp"
#include "capri/stats/ablation.hpp"
#include "capri/stats/correlation.hpp"
#include "capri/stats/nonparametric.hpp"
#include "capri/train/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace capri;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct DataOpts {
  fs::path root;
  std::string metadata = "metadata.csv";

  void add(CLI::App* app) {
    app->add_option("--data-root", root, "Dataset directory")->required();
    app->add_option("--metadata", metadata, "Metadata CSV relative to the data root");
  }
  data::ScanCatalog load() const { return data::load_catalog(root, root / metadata); }
};

struct SplitOpts {
  data::SplitSpec spec;

  void add(CLI::App* app) {
    app->add_option("--train-fraction", spec.train_fraction, "Training share of the split");
    app->add_option("--quantiles", spec.n_quantiles, "SNR strata for the split");
    app->add_option("--split-seed", spec.seed, "Split shuffle seed");
  }
};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string r2_text(const train::Metrics& m) { return m.r2 ? fmt(*m.r2, "%.4f") : "n/a"; }

void print_metrics(std::ostream& out, const std::string& label, const train::Metrics& m) {
  out << label << "  MAE " << fmt(m.mae, "%.4f") << "  RMSE " << fmt(m.rmse, "%.4f") << "  R2 " << r2_text(m)
      << '\n';
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

// Samples whose params are encoded in the model's own vocabulary.
train::SampleSet samples_for(const train::TrainedModel& model, const data::ScanCatalog& catalog,
                             std::span<const std::size_t> ids) {
  auto set = train::load_samples(catalog, ids, model.net.config().input_size, model.net.config().n_noise);
  for (auto& s : set) s.params = causal::factual_params(model, catalog, s.record_id);
  return set;
}

// ---- ingest ---------------------------------------------------------------

struct IngestCmd {
  DataOpts data;
  fs::path out;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("ingest", "Validate a dataset and write a normalized catalog");
    data.add(app);
    app->add_option("--out", out, "Normalized metadata CSV to write");
    app->callback([this] { run(); });
  }
  void run() {
    const auto catalog = data.load();
    std::cout << "records   " << catalog.records.size() << '\n';
    for (auto f : {data::Field::Voltage, data::Field::Current, data::Field::Agent}) {
      std::cout << data::field_name(f) << "   ";
      for (const auto& l : catalog.vocab.labels(f)) std::cout << " [" << l << "]";
      std::cout << '\n';
    }
    std::cout << "hash      " << catalog.provenance.content_hash << '\n';
    if (!out.empty()) {
      data::write_catalog(catalog, out);
      std::cout << "wrote " << out.string() << '\n';
    }
  }
};

// ---- synth ----------------------------------------------------------------

struct SynthCmd {
  data::SynthConfig config;
  fs::path out;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("synth", "Write the synthetic phantom dataset");
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--records", config.n_records, "Number of records");
    app->add_option("--grid", config.grid, "Holes per side of the phantom");
    app->add_option("--noise", config.noise_level, "Pixel noise std and label noise scale");
    app->add_option("--seed", config.seed, "Generator seed");
    app->add_option("--image-size", config.image_size, "Image side in pixels");
    app->callback([this] { run(); });
  }
  void run() {
    const auto catalog = data::synth_generate(config, out);
    std::cout << "wrote " << catalog.records.size() << " records to " << out.string() << '\n';
  }
};

// ---- train ----------------------------------------------------------------

struct TrainCmd {
  DataOpts data;
  SplitOpts split;
  fs::path out;
  train::TrainConfig tc;
  model::ModelConfig mc;
  int members = 5;
  std::vector<std::uint64_t> seeds;
  int threads = 1;
  bool no_augment = false;
  bool quiet = false;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("train", "Train a seed-varied ensemble and write checkpoints");
    data.add(app);
    split.add(app);
    app->add_option("--out", out, "Ensemble output directory")->required();
    app->add_option("--members", members, "Ensemble size when --seeds is not given");
    app->add_option("--seed", tc.seed, "First member seed");
    app->add_option("--seeds", seeds, "Explicit member seeds")->delimiter(',');
    app->add_option("--epochs", tc.epochs, "Maximum epochs");
    app->add_option("--batch-size", tc.batch_size, "Minibatch size");
    app->add_option("--lr", tc.learning_rate, "Adam learning rate");
    app->add_option("--patience", tc.early_stop_patience, "Early-stopping patience in epochs");
    app->add_option("--kl-beta", tc.kl_beta, "KL weight after warm-up");
    app->add_option("--input-size", mc.input_size, "Network input side");
    app->add_option("--latent", mc.latent_dim, "Latent dimension");
    app->add_option("--threads", threads, "Members trained in parallel");
    app->add_flag("--no-augment", no_augment, "Disable rotation/flip augmentation");
    app->add_flag("--quiet", quiet, "No per-epoch progress");
    app->callback([this] { run(); });
  }
  void run() {
    const auto catalog = data.load();
    const auto sp = data::stratified_split(catalog, split.spec);
    const auto config = train::model_config_for(catalog.vocab, mc);
    config.validate();
    tc.augment = !no_augment;
    tc.sampling.train_fraction = split.spec.train_fraction;
    tc.sampling.n_quantiles = split.spec.n_quantiles;
    tc.sampling.seed = split.spec.seed;
    tc.validate();
    if (seeds.empty()) {
      if (members < 1) throw Error(ErrorCode::InvalidArgument, "--members must be >= 1");
      for (int k = 0; k < members; ++k) seeds.push_back(tc.seed + static_cast<std::uint64_t>(k));
    }
    std::cerr << "train " << sp.train.size() << " / val " << sp.val.size() << " records, input " << config.input_size
              << ", " << seeds.size() << " member(s)\n";
    const auto train_set = train::load_samples(catalog, sp.train, config.input_size, config.n_noise);
    const auto val_set = train::load_samples(catalog, sp.val, config.input_size, config.n_noise);
    std::mutex mu;
    const auto progress = [&](const train::EpochRecord& r) {
      if (quiet) return;
      std::lock_guard lock(mu);
      std::cerr << "  epoch " << r.epoch << "  loss " << fmt(r.train_loss, "%.5f") << "  val MAE "
                << fmt(r.val_mae, "%.4f") << "  R2 " << (r.val_r2 ? fmt(*r.val_r2, "%.4f") : "n/a") << '\n';
    };
    const auto ensemble =
        train::train_ensemble(train_set, val_set, config, catalog.vocab, tc, seeds, threads, progress);
    train::save_ensemble(ensemble, out);
    for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
      const auto& m = ensemble.members[k];
      char name[32];
      std::snprintf(name, sizeof name, "history_%02zu.ndjson", k);
      std::ofstream hist(out / name);
      train::write_history(hist, m.history);
      print_metrics(std::cout, "member " + std::to_string(k) + " seed " + std::to_string(m.train.seed) +
                                   " best epoch " + std::to_string(m.best_epoch),
                    m.val_metrics);
    }
    std::cout << "best member " << ensemble.best_index << '\n';
    print_metrics(std::cout, "ensemble mean", train::aggregate(ensemble, val_set).pooled);
    std::cout << "wrote " << out.string() << " (" << train::checkpoint_hash(out) << ")\n";
  }
};

// ---- evaluate -------------------------------------------------------------

struct EvaluateCmd {
  DataOpts data;
  fs::path checkpoint;
  std::string which = "val";

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("evaluate", "Print MAE, RMSE and R2 for a checkpoint");
    data.add(app);
    app->add_option("--checkpoint", checkpoint, "Checkpoint file or ensemble directory")->required();
    app->add_option("--split", which, "Records to score")->check(CLI::IsMember({"val", "train", "all"}));
    app->callback([this] { run(); });
  }
  void run() {
    const auto ensemble = train::load_models(checkpoint);
    const auto catalog = data.load();
    const auto& best = ensemble.best();
    std::vector<std::size_t> ids;
    if (which == "all") {
      ids = all_indices(catalog.records.size());
    } else {
      const auto sp = data::stratified_split(catalog, best.train.sampling);
      ids = which == "val" ? sp.val : sp.train;
    }
    const auto samples = samples_for(best, catalog, ids);
    std::cout << "records " << samples.size() << " (" << which << ")\n";
    for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
      print_metrics(std::cout, "member " + std::to_string(k) + (k == ensemble.best_index ? "*" : " "),
                    train::evaluate(ensemble.members[k].net, samples));
    }
    if (ensemble.members.size() > 1) {
      print_metrics(std::cout, "ensemble", train::aggregate(ensemble, samples).pooled);
    }
  }
};

// ---- ablate ---------------------------------------------------------------

struct AblateCmd {
  DataOpts data;
  SplitOpts split;
  train::TrainConfig tc;
  model::ModelConfig mc;
  std::vector<std::string> variants;
  fs::path out;
  int threads = 1;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("ablate", "Train the ablation variants and report their metrics");
    data.add(app);
    split.add(app);
    app->add_option("--variants", variants,
                    "Variant names (full, noise, drop_v, drop_t, drop_a, image) or field lists such as v,a")
        ->delimiter(';');
    app->add_option("--seed", tc.seed, "Seed shared by every variant");
    app->add_option("--epochs", tc.epochs, "Maximum epochs");
    app->add_option("--patience", tc.early_stop_patience, "Early-stopping patience");
    app->add_option("--input-size", mc.input_size, "Network input side");
    app->add_option("--latent", mc.latent_dim, "Latent dimension");
    app->add_option("--threads", threads, "Variants trained in parallel");
    app->add_option("--out", out, "CSV report");
    app->callback([this] { run(); });
  }
  void run() {
    const auto catalog = data.load();
    const auto sp = data::stratified_split(catalog, split.spec);
    tc.sampling.train_fraction = split.spec.train_fraction;
    tc.sampling.n_quantiles = split.spec.n_quantiles;
    tc.sampling.seed = split.spec.seed;
    tc.validate();
    std::vector<stats::AblationVariant> list;
    if (variants.empty()) {
      list = stats::default_ablation_variants();
    } else {
      for (const auto& v : variants) list.push_back(stats::parse_variant(v));
    }
    const auto train_set = train::load_samples(catalog, sp.train, mc.input_size);
    const auto val_set = train::load_samples(catalog, sp.val, mc.input_size);
    const auto rows = stats::run_ablation(list, train_set, val_set, catalog.vocab, mc, tc, threads);
    stats::write_ablation_table(std::cout, rows);
    if (!out.empty()) {
      std::ofstream f(out);
      stats::write_ablation_csv(f, rows);
    }
  }
};

// ---- whatif ---------------------------------------------------------------

struct WhatifCmd {
  DataOpts data;
  fs::path checkpoint;
  std::string scenarios = "default";
  fs::path out;
  fs::path heatmap;
  bool ensemble = false;
  bool sample = false;
  std::uint64_t abduction_seed = 0;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("whatif", "Run interventional and counterfactual scenarios");
    data.add(app);
    app->add_option("--checkpoint", checkpoint, "Checkpoint file or ensemble directory")->required();
    app->add_option("--scenarios", scenarios, "Scenario CSV, or 'default' for the built-in table");
    app->add_option("--out", out, "Result CSV (stdout when omitted)");
    app->add_option("--heatmap", heatmap, "Heatmap prefix; writes <prefix>.csv and <prefix>.png");
    app->add_flag("--ensemble", ensemble, "Average over all members and report their std");
    app->add_flag("--sample-abduction", sample, "Draw the counterfactual latent from the posterior");
    app->add_option("--abduction-seed", abduction_seed, "Seed for --sample-abduction");
    app->callback([this] { run(); });
  }
  void run() {
    const auto models = train::load_models(checkpoint);
    const auto catalog = data.load();
    const auto list = scenarios == "default" ? causal::default_scenarios() : causal::load_scenarios(scenarios);
    const causal::ImageCache images(catalog, models.best().net.config().input_size);
    const auto mode = ensemble ? causal::EnsembleMode::Ensemble : causal::EnsembleMode::BestMember;
    const auto results = causal::run_scenarios(models, mode, images, list, {sample, abduction_seed});
    if (out.empty()) {
      causal::write_results_csv(std::cout, results);
    } else {
      std::ofstream f(out);
      if (!f) throw Error(ErrorCode::Io, "cannot write " + out.string());
      causal::write_results_csv(f, results);
    }
    if (!heatmap.empty() && !results.empty()) {
      const auto h = causal::make_heatmap(results);
      causal::write_heatmap_csv(h, fs::path(heatmap.string() + ".csv"));
      causal::write_heatmap_png(h, fs::path(heatmap.string() + ".png"));
    }
  }
};

// ---- stats ----------------------------------------------------------------

struct StatsCmd {
  fs::path scores;
  bool higher = false;
  std::string col_a, col_b;
  std::string alternative = "two-sided";
  DataOpts data;
  fs::path checkpoint;

  void add(CLI::App& parent) {
    auto* app = parent.add_subcommand("stats", "Friedman and Wilcoxon tests, latent correlation");
    app->require_subcommand(1);

    auto* fr = app->add_subcommand("friedman", "Friedman test over a score matrix");
    fr->add_option("--scores", scores, "Score matrix CSV (rows = subjects, cols = methods)")->required();
    fr->add_flag("--higher-is-better", higher, "Scores where larger is better (e.g. R2)");
    fr->callback([this] { friedman(); });

    auto* wx = app->add_subcommand("wilcoxon", "Wilcoxon signed-rank test between two columns");
    wx->add_option("--scores", scores, "Score matrix CSV")->required();
    wx->add_option("--a", col_a, "First column")->required();
    wx->add_option("--b", col_b, "Second column")->required();
    wx->add_option("--alternative", alternative, "two-sided, less (a < b) or greater (a > b)")
        ->check(CLI::IsMember({"two-sided", "less", "greater"}));
    wx->callback([this] { wilcoxon(); });

    auto* lc = app->add_subcommand("latent", "Correlate latent means and parameters with SNR");
    data.add(lc);
    lc->add_option("--checkpoint", checkpoint, "Checkpoint file or ensemble directory")->required();
    lc->callback([this] { latent(); });
  }

  void friedman() {
    const auto m = stats::read_score_matrix(scores, !higher);
    const auto r = stats::friedman_test(m);
    std::cout << "chi2 " << fmt(r.chi2, "%.6f") << "  dof " << r.dof << "  p " << fmt(r.p, "%.6g") << '\n';
    for (std::size_t j = 0; j < m.treatments.size(); ++j) {
      std::cout << "  " << m.treatments[j] << "  mean rank " << fmt(r.mean_ranks[j], "%.4f") << '\n';
    }
  }

  void wilcoxon() {
    const auto m = stats::read_score_matrix(scores);
    const auto column = [&](const std::string& name) {
      const auto it = std::find(m.treatments.begin(), m.treatments.end(), name);
      if (it == m.treatments.end()) throw Error(ErrorCode::InvalidArgument, "no column '" + name + "'");
      const auto j = static_cast<std::size_t>(it - m.treatments.begin());
      std::vector<double> v;
      for (const auto& row : m.rows) v.push_back(row[j]);
      return v;
    };
    const auto alt = alternative == "less"      ? stats::Alternative::Less
                     : alternative == "greater" ? stats::Alternative::Greater
                                                : stats::Alternative::TwoSided;
    const auto r = stats::wilcoxon_signed_rank(column(col_a), column(col_b), alt);
    std::cout << "statistic " << fmt(r.statistic) << "  W+ " << fmt(r.w_plus) << "  W- " << fmt(r.w_minus)
              << "  n " << r.n << "  p " << fmt(r.p, "%.6g") << (r.exact ? " (exact)" : " (normal approx)")
              << '\n';
  }

  void latent() {
    const auto models = train::load_models(checkpoint);
    const auto catalog = data.load();
    const auto& best = models.best();
    const auto samples = samples_for(best, catalog, all_indices(catalog.records.size()));
    const auto r = stats::latent_correlation(best.net, samples);
    std::cout << "dim,r\n";
    for (const auto& e : r.latents) std::cout << e.dim << ',' << (e.r ? fmt(*e.r, "%.6f") : "") << '\n';
    std::cout << "parameter,eta\n";
    for (const auto& p : r.parameters) {
      std::cout << data::field_name(p.field) << ',' << (p.eta ? fmt(*p.eta, "%.6f") : "") << '\n';
    }
  }
};

// ---- serve ----------------------------------------------------------------

service::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeCmd {
  service::ServiceConfig config;
  CLI::App* app = nullptr;
  std::string checkpoint, data_root, host, static_dir;
  int port = 0, threads = 0;
  bool ensemble = false;

  void add(CLI::App& parent) {
    app = parent.add_subcommand("serve", "Start the HTTP service");
    app->add_option("--checkpoint", checkpoint, "Checkpoint file or ensemble directory [CAPRI_CHECKPOINT]");
    app->add_option("--data-root", data_root, "Dataset directory [CAPRI_DATA_ROOT]");
    app->add_option("--metadata", config.metadata_file, "Metadata CSV relative to the data root");
    app->add_option("--host", host, "Bind address [CAPRI_HOST]");
    app->add_option("--port", port, "Port, 0 for any free port [CAPRI_PORT]");
    app->add_option("--threads", threads, "Concurrent requests [CAPRI_MAX_CONCURRENCY]");
    app->add_option("--static", static_dir, "Directory of UI assets [CAPRI_STATIC_DIR]");
    app->add_flag("--ensemble", ensemble, "Answer with the ensemble mean and std [CAPRI_ENSEMBLE_MODE]");
    app->callback([this] { run(); });
  }
  void run() {
    config.apply_env();
    if (app->count("--checkpoint")) config.checkpoint = checkpoint;
    if (app->count("--data-root")) config.data_root = data_root;
    if (app->count("--host")) config.host = host;
    if (app->count("--port")) config.port = port;
    if (app->count("--threads")) config.max_concurrency = threads;
    if (app->count("--static")) config.static_dir = static_dir;
    if (ensemble) config.mode = causal::EnsembleMode::Ensemble;
    auto api = service::load_api(config);
    service::HttpServer server(api, config);
    const int bound = server.bind();
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "serving " << config.checkpoint.string() << " (" << api->checkpoint_hash() << ") on http://"
              << config.host << ':' << bound << std::endl;
    server.listen();
    g_server = nullptr;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capri: causal-aware CT SNR regression and what-if analysis"};
  app.require_subcommand(1);
  IngestCmd ingest;
  SynthCmd synth;
  TrainCmd train_cmd;
  EvaluateCmd evaluate;
  AblateCmd ablate;
  WhatifCmd whatif;
  StatsCmd stats_cmd;
  ServeCmd serve;
  ingest.add(app);
  synth.add(app);
  train_cmd.add(app);
  evaluate.add(app);
  ablate.add(app);
  whatif.add(app);
  stats_cmd.add(app);
  serve.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (argc < 2) std::cerr << app.help();
    app.exit(e);
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: code=" << to_string(e.code()) << " message=" << e.what() << '\n';
    return is_data_error(e.code()) ? kData : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: code=Runtime message=" << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
