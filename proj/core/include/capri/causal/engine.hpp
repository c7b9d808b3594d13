#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capri/dataset/catalog.hpp"
#include "capri/dataset/image.hpp"
#include "capri/model/vae.hpp"
#include "capri/train/ensemble.hpp"

namespace capri::causal {

using Net = model::VaeModel<float>;

/// do(target = level), with the level stored as a vocab index.
struct DoAssignment {
  data::Field target = data::Field::Voltage;
  int index = 0;

  bool operator==(const DoAssignment&) const = default;
};

/// Resolves a textual level. Throws Error(UnknownLevel) naming the value.
DoAssignment make_assignment(const data::Vocab& vocab, data::Field target, std::string_view level);

/// Checks indices against the vocab and rejects a repeated target.
/// Throws Error(UnknownLevel) or Error(InvalidArgument).
void validate_assignments(std::span<const DoAssignment> assignments, const data::Vocab& vocab);

/// Factual params with the assigned fields overridden.
data::AcquisitionParams apply(data::AcquisitionParams params, std::span<const DoAssignment> assignments);

/// "do(t=215, a=Iodine)", fields in (v, t, a) order; "none" when empty.
std::string describe(std::span<const DoAssignment> assignments, const data::Vocab& vocab);

/// Deterministic forward pass on the factual inputs.
double predict_observational(const Net& net, const data::ImageTensor& image,
                             const data::AcquisitionParams& factual);

/// Forward pass with the encoder and decoder both seeing the intervened params.
double intervene(const Net& net, const data::ImageTensor& image, const data::AcquisitionParams& factual,
                 std::span<const DoAssignment> assignments);

/// How the factual latent is inferred for counterfactuals.
struct Abduction {
  bool sample = false;  // draw z from the factual posterior instead of using its mean
  std::uint64_t seed = 0;
};

/// z is inferred from the factual image and params, then decoded under the
/// intervened params.
double counterfactual(const Net& net, const data::ImageTensor& image,
                      const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                      const Abduction& abduction = {});

/// The latent the counterfactual decodes from.
std::vector<double> abduce(const Net& net, const data::ImageTensor& image,
                           const data::AcquisitionParams& factual, const Abduction& abduction = {});

struct Uncertainty {
  double std_obs = 0.0;
  double std_i = 0.0;
  double std_cf = 0.0;
};

struct WhatIfResult {
  double snr_obs = 0.0;
  double snr_i = 0.0;
  double snr_cf = 0.0;
  std::vector<DoAssignment> assignments;
  std::optional<Uncertainty> uncertainty;
};

/// Which models answer a query.
enum class EnsembleMode {
  BestMember,  // the member with the highest validation R²; no uncertainty
  Ensemble,    // mean over members with population std
};

/// All three quantities for one record. Assignments are validated against
/// the vocab of the best member and stored in (v, t, a) order.
WhatIfResult what_if(const train::Ensemble& models, EnsembleMode mode, const data::ImageTensor& image,
                     const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                     const Abduction& abduction = {});

WhatIfResult what_if(const Net& net, const data::Vocab& vocab, const data::ImageTensor& image,
                     const data::AcquisitionParams& factual, std::span<const DoAssignment> assignments,
                     const Abduction& abduction = {});

}  // namespace capri::causal
