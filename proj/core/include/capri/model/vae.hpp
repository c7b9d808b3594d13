#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "capri/dataset/catalog.hpp"
#include "capri/dataset/image.hpp"
#include "capri/model/config.hpp"

namespace capri::model {

struct LatentPosterior {
  std::vector<double> mu;
  std::vector<double> log_var;
};

struct Prediction {
  double snr_hat = 0.0;
  LatentPosterior posterior;
  std::vector<double> z_used;
};

/// total = regression_term + beta · kl_term.
struct LossBreakdown {
  double regression_term = 0.0;
  double kl_term = 0.0;
  double beta = 0.0;
  double total = 0.0;
};

enum class ForwardMode { Stochastic, Deterministic };

/// z = μ + exp(log_var / 2) ⊙ eps. Throws Error(ShapeMismatch).
std::vector<double> reparameterize(const LatentPosterior& posterior, std::span<const double> eps);

/// KL(N(μ, σ²) ‖ N(0, I)) = −½ Σ_d (1 + log σ²_d − μ_d² − σ²_d).
double kl_to_standard_normal(const LatentPosterior& posterior);

/// Squared error (in units of target_scale) plus beta-weighted KL.
/// Throws Error(NonFiniteLoss).
LossBreakdown loss(const Prediction& pred, double target_snr, double beta,
                   double target_scale = 1.0);

/// A named parameter or buffer tensor; `grad` is empty for buffers.
template <typename T>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const noexcept { return value.size(); }
};

/// One minibatch for a training-mode pass. Images must be input_size².
struct TrainBatch {
  std::vector<const data::ImageTensor*> images;
  std::vector<data::AcquisitionParams> params;
  std::vector<double> targets;
};

/// The convolutional VAE regressor.
///
/// Encoder: three 3×3 conv layers (stride 2, 2, 1) each followed by batch
/// norm and ReLU, dropout, flatten, concatenation with the parameter
/// embedding, then affine heads for μ and log σ². Decoder: [z, embedding] →
/// two ReLU hidden layers → scalar. The decoder output is in standardized
/// target units; snr_hat = output · target_scale + target_shift.
///
/// Const member functions run in inference mode (running batch-norm
/// statistics, no dropout) and are safe to call concurrently.
template <typename T>
class VaeModel {
 public:
  VaeModel(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const noexcept { return config_; }

  void set_target_normalization(double shift, double scale);
  double target_shift() const noexcept { return target_shift_; }
  double target_scale() const noexcept { return target_scale_; }

  std::vector<Tensor<T>>& parameters() noexcept { return params_; }
  const std::vector<Tensor<T>>& parameters() const noexcept { return params_; }
  std::vector<Tensor<T>>& buffers() noexcept { return buffers_; }
  const std::vector<Tensor<T>>& buffers() const noexcept { return buffers_; }
  std::size_t parameter_count() const noexcept;

  /// Concatenated embedding rows in (v, t, a[, noise]) order.
  /// Throws Error(IndexOutOfVocab).
  std::vector<double> embed_params(const data::AcquisitionParams& params) const;

  LatentPosterior encode(const data::ImageTensor& image, const data::AcquisitionParams& params) const;
  std::vector<LatentPosterior> encode_batch(std::span<const data::ImageTensor* const> images,
                                            std::span<const data::AcquisitionParams> params) const;

  double decode(std::span<const double> z, const data::AcquisitionParams& params) const;

  /// Deterministic mode uses z = μ; stochastic mode draws eps ~ N(0, I)
  /// from `rng` (required).
  Prediction forward(const data::ImageTensor& image, const data::AcquisitionParams& params,
                     ForwardMode mode, std::mt19937_64* rng = nullptr) const;

  /// Deterministic snr_hat for a batch.
  std::vector<double> predict_batch(std::span<const data::ImageTensor* const> images,
                                    std::span<const data::AcquisitionParams> params) const;

  /// Training-mode pass: batch statistics in batch norm, dropout and eps
  /// drawn from `noise_seed`. Returns the mean loss over the batch. With
  /// compute_grad, every parameter's grad is overwritten.
  LossBreakdown train_step(const TrainBatch& batch, double beta, std::uint64_t noise_seed,
                           bool compute_grad = true, bool update_running_stats = true);

 private:
  struct Workspace;
  int add_param(const std::string& name, std::vector<int> shape);
  int add_buffer(const std::string& name, std::vector<int> shape, T fill);
  void check_params(const data::AcquisitionParams& p) const;
  void gather_embeddings(std::span<const data::AcquisitionParams> params, T* out,
                         std::size_t stride) const;
  void encode_features(std::span<const data::ImageTensor* const> images, Workspace& ws) const;
  void heads_forward(std::span<const data::AcquisitionParams> params, Workspace& ws) const;
  void decoder_forward(std::span<const data::AcquisitionParams> params, const T* z,
                       Workspace& ws) const;

  ModelConfig config_;
  double target_shift_ = 0.0;
  double target_scale_ = 1.0;
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> buffers_;

  // Indices into params_ / buffers_ (-1 when a field is disabled).
  int conv_[3]{}, bn_gamma_[3]{}, bn_beta_[3]{}, bn_mean_[3]{}, bn_var_[3]{};
  int embed_v_ = -1, embed_t_ = -1, embed_a_ = -1, embed_n_ = -1;
  int mu_w_ = -1, mu_b_ = -1, lv_w_ = -1, lv_b_ = -1;
  int dec_w_[3]{}, dec_b_[3]{};
};

/// Copies weights, buffers and normalization between scalar types.
template <typename To, typename From>
VaeModel<To> convert_model(const VaeModel<From>& model);

extern template class VaeModel<float>;
extern template class VaeModel<double>;

}  // namespace capri::model
