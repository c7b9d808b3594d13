#include "capri/causal/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "capri/error.hpp"
#include "capri/util/hash.hpp"

namespace capri::causal {
namespace {

std::vector<DoAssignment> canonical(std::span<const DoAssignment> assignments) {
  std::vector<DoAssignment> out(assignments.begin(), assignments.end());
  std::sort(out.begin(), out.end(), [](const DoAssignment& x, const DoAssignment& y) {
    return static_cast<int>(x.target) < static_cast<int>(y.target);
  });
  return out;
}

}  // namespace

DoAssignment make_assignment(const data::Vocab& vocab, data::Field target, std::string_view level) {
  const auto index = vocab.index_of(target, level);
  if (!index) {
    throw Error(ErrorCode::UnknownLevel, "unknown " + std::string(data::field_name(target)) +
                                             " level '" + std::string(level) + "'");
  }
  return {target, *index};
}

void validate_assignments(std::span<const DoAssignment> assignments, const data::Vocab& vocab) {
  bool seen[3] = {false, false, false};
  for (const auto& a : assignments) {
    const int f = static_cast<int>(a.target);
    if (seen[f]) {
      throw Error(ErrorCode::InvalidArgument,
                  "more than one assignment to " + std::string(data::field_name(a.target)));
    }
    seen[f] = true;
    if (a.index < 0 || static_cast<std::size_t>(a.index) >= vocab.size(a.target)) {
      throw Error(ErrorCode::UnknownLevel, "level index " + std::to_string(a.index) + " out of range for " +
                                               std::string(data::field_name(a.target)));
    }
  }
}

data::AcquisitionParams apply(data::AcquisitionParams params, std::span<const DoAssignment> assignments) {
  for (const auto& a : assignments) params.set(a.target, a.index);
  return params;
}

std::string describe(std::span<const DoAssignment> assignments, const data::Vocab& vocab) {
  if (assignments.empty()) return "none";
  std::string out = "do(";
  bool first = true;
  for (const auto& a : canonical(assignments)) {
    if (!first) out += ", ";
    first = false;
    out += std::string(data::field_symbol(a.target)) + "=" + vocab.label(a.target, a.index);
  }
  return out + ")";
}

double predict_observational(const Net& net, const data::ImageTensor& image,
                             const data::AcquisitionParams& factual) {
  return net.forward(image, factual, model::ForwardMode::Deterministic).snr_hat;
}

double intervene(const Net& net, const data::ImageTensor& image, const data::AcquisitionParams& factual,
                 std::span<const DoAssignment> assignments) {
  return net.forward(image, apply(factual, assignments), model::ForwardMode::Deterministic).snr_hat;
}

std::vector<double> abduce(const Net& net, const data::ImageTensor& image,
                           const data::AcquisitionParams& factual, const Abduction& abduction) {
  auto posterior = net.encode(image, factual);
  if (!abduction.sample) return std::move(posterior.mu);
  std::mt19937_64 rng(mix_seed(abduction.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(posterior.mu.size());
  for (auto& e : eps) e = normal(rng);
  return model::reparameterize(posterior, eps);
}

double counterfactual(const Net& net, const data::ImageTensor& image,
                      const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                      const Abduction& abduction) {
  const auto z = abduce(net, image, factual, abduction);
  return net.decode(z, apply(factual, assignments));
}

WhatIfResult what_if(const Net& net, const data::Vocab& vocab, const data::ImageTensor& image,
                     const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                     const Abduction& abduction) {
  validate_assignments(assignments, vocab);
  WhatIfResult r;
  r.assignments = canonical(assignments);
  r.snr_obs = predict_observational(net, image, factual);
  r.snr_i = intervene(net, image, factual, r.assignments);
  r.snr_cf = counterfactual(net, image, factual, r.assignments, abduction);
  return r;
}

WhatIfResult what_if(const train::Ensemble& models, EnsembleMode mode, const data::ImageTensor& image,
                     const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                     const Abduction& abduction) {
  if (models.members.empty()) throw Error(ErrorCode::InvalidArgument, "no models loaded");
  const auto& best = models.best();
  if (mode == EnsembleMode::BestMember) {
    return what_if(best.net, best.vocab, image, factual, assignments, abduction);
  }
  const std::size_t k = models.members.size();
  std::vector<std::vector<double>> rows(k, std::vector<double>(3));
  WhatIfResult r;
  for (std::size_t m = 0; m < k; ++m) {
    const auto& member = models.members[m];
    const auto one = what_if(member.net, member.vocab, image, factual, assignments, abduction);
    rows[m] = {one.snr_obs, one.snr_i, one.snr_cf};
    r.assignments = one.assignments;
  }
  std::vector<double> mean, std;
  train::mean_and_std(rows, mean, std);
  r.snr_obs = mean[0];
  r.snr_i = mean[1];
  r.snr_cf = mean[2];
  r.uncertainty = Uncertainty{std[0], std[1], std[2]};
  return r;
}

}  // namespace capri::causal
