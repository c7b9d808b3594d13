#include "capri/stats/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include "capri/error.hpp"
#include "capri/util/csv.hpp"

namespace capri::stats {
namespace {

std::string field_list(const model::FieldSet& f) {
  std::string s;
  const auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ", ";
    s += name;
  };
  add(f.voltage, "v");
  add(f.current, "t");
  add(f.agent, "a");
  add(f.noise, "noise");
  return s;
}

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::vector<AblationVariant> default_ablation_variants() {
  return {
      {"full", {true, true, true, false}},    {"noise", {true, true, true, true}},
      {"drop_t", {true, false, true, false}}, {"drop_v", {false, true, true, false}},
      {"image", {false, false, false, false}}, {"drop_a", {true, true, false, false}},
  };
}

AblationVariant parse_variant(const std::string& text) {
  for (const auto& v : default_ablation_variants()) {
    if (v.name == text) return v;
  }
  AblationVariant out{text, {false, false, false, false}};
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    std::string token = text.substr(start, comma - start);
    token.erase(0, token.find_first_not_of(' '));
    token.erase(token.find_last_not_of(' ') + 1);
    if (token == "v") {
      out.fields.voltage = true;
    } else if (token == "t") {
      out.fields.current = true;
    } else if (token == "a") {
      out.fields.agent = true;
    } else if (token == "noise") {
      out.fields.noise = true;
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + text + "'");
    }
    start = comma + 1;
  }
  return out;
}

std::vector<AblationRow> run_ablation(std::span<const AblationVariant> variants, const train::SampleSet& train,
                                      const train::SampleSet& val, const data::Vocab& vocab,
                                      const model::ModelConfig& base, const train::TrainConfig& config,
                                      int max_parallel) {
  if (variants.empty()) throw Error(ErrorCode::InvalidArgument, "no ablation variants");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (!names.insert(v.name).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate ablation variant '" + v.name + "'");
    }
  }
  std::vector<std::optional<AblationRow>> rows(variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next++) < variants.size();) {
      try {
        auto mc = train::model_config_for(vocab, base);
        mc.fields = variants[i].fields;
        auto trained = train::train_model(train, val, mc, vocab, config);
        rows[i] = AblationRow{variants[i], trained.val_metrics, trained.best_epoch,
                              trained.net.parameter_count()};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(max_parallel, 1, static_cast<int>(variants.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<AblationRow> out;
  for (auto& r : rows) out.push_back(std::move(*r));
  return out;
}

std::string variant_label(const AblationVariant& variant) {
  const auto fields = field_list(variant.fields);
  return fields.empty() ? "Image (i) only" : "Image (i) + metadata (" + fields + ")";
}

void write_ablation_table(std::ostream& out, std::span<const AblationRow> rows) {
  std::size_t width = 24;
  for (const auto& r : rows) width = std::max(width, variant_label(r.variant).size());
  const auto pad = [&](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  out << pad("Model variant", width) << "  " << pad("MAE", 10) << "  " << pad("RMSE", 10) << "  R2\n";
  out << std::string(width + 36, '-') << '\n';
  for (const auto& r : rows) {
    out << pad(variant_label(r.variant), width) << "  " << pad(fmt(r.metrics.mae, "%.3f"), 10) << "  "
        << pad(fmt(r.metrics.rmse, "%.3f"), 10) << "  "
        << (r.metrics.r2 ? fmt(*r.metrics.r2, "%.3f") : std::string("n/a")) << '\n';
  }
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  csv::write_row(out, {"variant", "fields", "mae", "rmse", "r2", "best_epoch", "parameters"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.variant.name, field_list(r.variant.fields), fmt(r.metrics.mae, "%.17g"),
                         fmt(r.metrics.rmse, "%.17g"), r.metrics.r2 ? fmt(*r.metrics.r2, "%.17g") : "",
                         std::to_string(r.best_epoch), std::to_string(r.parameter_count)});
  }
}

}  // namespace capri::stats
