#pragma once

#include <array>
#include <cstddef>

namespace capri::model {

/// Which acquisition fields feed the network. The image is always used.
struct FieldSet {
  bool voltage = true;
  bool current = true;
  bool agent = true;
  bool noise = false;  // inert random field, ablation only

  bool operator==(const FieldSet&) const = default;
};

struct ModelConfig {
  int input_size = 128;
  int latent_dim = 32;
  std::array<int, 3> conv_channels{32, 64, 128};
  int voltage_embed = 16;
  int current_embed = 8;
  int agent_embed = 12;
  int noise_embed = 8;
  std::array<int, 2> decoder_hidden{128, 64};
  double dropout_rate = 0.2;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  FieldSet fields;

  // Vocabulary sizes (rows of each embedding table).
  int n_voltage = 4;
  int n_current = 2;
  int n_agent = 3;
  int n_noise = 4;

  /// Throws Error(InvalidArgument).
  void validate() const;

  /// Width of the concatenated parameter embedding (36 with v, t, a).
  int embed_dim() const noexcept;
  /// Spatial side after the two stride-2 convolutions.
  int feature_side() const noexcept;
  int flat_features() const noexcept;

  /// Number of trainable scalars:
  ///   conv    9·(1·c1 + c1·c2 + c2·c3)          (no conv bias; BN follows)
  ///   bn      2·(c1 + c2 + c3)
  ///   embed   Σ_field n_levels·dim
  ///   heads   2·(L·(F + E) + L)                 F = c3·(S/4)², E = embed_dim
  ///   decoder (L + E)·h1 + h1 + h1·h2 + h2 + h2 + 1
  std::size_t parameter_count() const noexcept;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace capri::model
