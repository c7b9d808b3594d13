#include "capri/model/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capri/error.hpp"
#include "model/kernels.hpp"

namespace capri::model {

using kernels::ConstMapMat;
using kernels::ConvGeom;
using kernels::MapMat;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (input_size < 4 || input_size % 4 != 0) fail("input_size must be a positive multiple of 4");
  if (latent_dim <= 0) fail("latent_dim must be positive");
  for (int c : conv_channels) {
    if (c <= 0) fail("conv channels must be positive");
  }
  for (int h : decoder_hidden) {
    if (h <= 0) fail("decoder widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0,1)");
  if (fields.voltage && (n_voltage <= 0 || voltage_embed <= 0)) fail("voltage vocab/embed empty");
  if (fields.current && (n_current <= 0 || current_embed <= 0)) fail("current vocab/embed empty");
  if (fields.agent && (n_agent <= 0 || agent_embed <= 0)) fail("agent vocab/embed empty");
  if (fields.noise && (n_noise <= 0 || noise_embed <= 0)) fail("noise vocab/embed empty");
}

int ModelConfig::embed_dim() const noexcept {
  return (fields.voltage ? voltage_embed : 0) + (fields.current ? current_embed : 0) +
         (fields.agent ? agent_embed : 0) + (fields.noise ? noise_embed : 0);
}

int ModelConfig::feature_side() const noexcept { return input_size / 4; }

int ModelConfig::flat_features() const noexcept {
  return conv_channels[2] * feature_side() * feature_side();
}

std::size_t ModelConfig::parameter_count() const noexcept {
  const std::size_t c1 = conv_channels[0], c2 = conv_channels[1], c3 = conv_channels[2];
  const std::size_t e = embed_dim();
  const std::size_t f = flat_features();
  const std::size_t l = latent_dim;
  const std::size_t h1 = decoder_hidden[0], h2 = decoder_hidden[1];
  std::size_t n = 9 * (c1 + c1 * c2 + c2 * c3) + 2 * (c1 + c2 + c3);
  if (fields.voltage) n += static_cast<std::size_t>(n_voltage) * voltage_embed;
  if (fields.current) n += static_cast<std::size_t>(n_current) * current_embed;
  if (fields.agent) n += static_cast<std::size_t>(n_agent) * agent_embed;
  if (fields.noise) n += static_cast<std::size_t>(n_noise) * noise_embed;
  n += 2 * (l * (f + e) + l);
  n += (l + e) * h1 + h1 + h1 * h2 + h2 + h2 + 1;
  return n;
}

std::vector<double> reparameterize(const LatentPosterior& posterior, std::span<const double> eps) {
  if (eps.size() != posterior.mu.size() || posterior.log_var.size() != posterior.mu.size()) {
    throw Error(ErrorCode::ShapeMismatch, "eps length must equal latent_dim");
  }
  std::vector<double> z(eps.size());
  for (std::size_t d = 0; d < z.size(); ++d) {
    z[d] = posterior.mu[d] + std::exp(0.5 * posterior.log_var[d]) * eps[d];
  }
  return z;
}

double kl_to_standard_normal(const LatentPosterior& posterior) {
  double kl = 0.0;
  for (std::size_t d = 0; d < posterior.mu.size(); ++d) {
    const double lv = posterior.log_var[d];
    kl += 1.0 + lv - posterior.mu[d] * posterior.mu[d] - std::exp(lv);
  }
  return -0.5 * kl;
}

LossBreakdown loss(const Prediction& pred, double target_snr, double beta, double target_scale) {
  LossBreakdown out;
  const double err = (pred.snr_hat - target_snr) / target_scale;
  out.regression_term = err * err;
  out.kl_term = std::max(0.0, kl_to_standard_normal(pred.posterior));
  out.beta = beta;
  out.total = out.regression_term + beta * out.kl_term;
  if (!std::isfinite(out.total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  return out;
}

template <typename T>
struct VaeModel<T>::Workspace {
  int batch = 0;
  bool training = false;
  std::mt19937_64* rng = nullptr;
  ConvGeom geom[3];
  std::vector<T> input;
  std::vector<T> cols[3];
  std::vector<T> act[3];
  std::vector<T> xhat[3];
  kernels::BatchNormCache bn[3];
  std::vector<T> drop_mask;
  std::vector<T> fused;
  std::vector<T> mu, lv, eps, z;
  std::vector<T> dec_in, h1, h2, out;
};

namespace {

template <typename T>
std::vector<T> init_uniform(std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

template <typename T>
std::vector<T> init_normal(std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

// Y[b, out] = X[b, in] · Wᵀ + bias
template <typename T>
void linear_forward(const T* x, const T* w, const T* bias, int batch, int in, int out, T* y) {
  ConstMapMat<T> xm(x, batch, in);
  ConstMapMat<T> wm(w, out, in);
  MapMat<T> ym(y, batch, out);
  ym.noalias() = xm * wm.transpose();
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < out; ++o) ym(b, o) += bias[o];
  }
}

// dW += dYᵀ X; db += Σ_b dY; dX = dY · W (when dx != nullptr)
template <typename T>
void linear_backward(const T* dy, const T* x, const T* w, int batch, int in, int out, T* dw, T* db,
                     T* dx) {
  ConstMapMat<T> dym(dy, batch, out);
  ConstMapMat<T> xm(x, batch, in);
  MapMat<T> dwm(dw, out, in);
  dwm.noalias() += dym.transpose() * xm;
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < out; ++o) db[o] += dym(b, o);
  }
  if (dx) {
    ConstMapMat<T> wm(w, out, in);
    MapMat<T> dxm(dx, batch, in);
    dxm.noalias() = dym * wm;
  }
}

}  // namespace

template <typename T>
int VaeModel<T>::add_param(const std::string& name, std::vector<int> shape) {
  Tensor<T> t{name, shape, std::vector<T>(product(shape)), std::vector<T>(product(shape))};
  params_.push_back(std::move(t));
  return static_cast<int>(params_.size() - 1);
}

template <typename T>
int VaeModel<T>::add_buffer(const std::string& name, std::vector<int> shape, T fill) {
  buffers_.push_back(Tensor<T>{name, shape, std::vector<T>(product(shape), fill), {}});
  return static_cast<int>(buffers_.size() - 1);
}

template <typename T>
VaeModel<T>::VaeModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const auto& ch = config_.conv_channels;
  int cin = 1;
  for (int l = 0; l < 3; ++l) {
    const std::string id = std::to_string(l + 1);
    conv_[l] = add_param("conv" + id + ".weight", {ch[l], cin, 3, 3});
    params_[conv_[l]].value = init_normal<T>(params_[conv_[l]].size(), std::sqrt(2.0 / (cin * 9)), rng);
    bn_gamma_[l] = add_param("bn" + id + ".gamma", {ch[l]});
    std::fill(params_[bn_gamma_[l]].value.begin(), params_[bn_gamma_[l]].value.end(), T(1));
    bn_beta_[l] = add_param("bn" + id + ".beta", {ch[l]});
    bn_mean_[l] = add_buffer("bn" + id + ".running_mean", {ch[l]}, T(0));
    bn_var_[l] = add_buffer("bn" + id + ".running_var", {ch[l]}, T(1));
    cin = ch[l];
  }

  auto embedding = [&](const char* name, int rows, int dim) {
    const int idx = add_param(name, {rows, dim});
    params_[idx].value = init_normal<T>(params_[idx].size(), 1.0, rng);
    return idx;
  };
  if (config_.fields.voltage) embed_v_ = embedding("embed.voltage", config_.n_voltage, config_.voltage_embed);
  if (config_.fields.current) embed_t_ = embedding("embed.current", config_.n_current, config_.current_embed);
  if (config_.fields.agent) embed_a_ = embedding("embed.agent", config_.n_agent, config_.agent_embed);
  if (config_.fields.noise) embed_n_ = embedding("embed.noise", config_.n_noise, config_.noise_embed);

  auto affine = [&](const std::string& name, int out, int in, int& w, int& b) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w = add_param(name + ".weight", {out, in});
    params_[w].value = init_uniform<T>(params_[w].size(), bound, rng);
    b = add_param(name + ".bias", {out});
    params_[b].value = init_uniform<T>(params_[b].size(), bound, rng);
  };
  const int fused = config_.flat_features() + config_.embed_dim();
  affine("head_mu", config_.latent_dim, fused, mu_w_, mu_b_);
  affine("head_logvar", config_.latent_dim, fused, lv_w_, lv_b_);
  // The posterior starts at unit variance.
  std::fill(params_[lv_w_].value.begin(), params_[lv_w_].value.end(), T(0));
  std::fill(params_[lv_b_].value.begin(), params_[lv_b_].value.end(), T(0));
  const int dec_in = config_.latent_dim + config_.embed_dim();
  affine("dec1", config_.decoder_hidden[0], dec_in, dec_w_[0], dec_b_[0]);
  affine("dec2", config_.decoder_hidden[1], config_.decoder_hidden[0], dec_w_[1], dec_b_[1]);
  affine("out", 1, config_.decoder_hidden[1], dec_w_[2], dec_b_[2]);
}

template <typename T>
void VaeModel<T>::set_target_normalization(double shift, double scale) {
  if (!(scale > 0.0) || !std::isfinite(shift) || !std::isfinite(scale)) {
    throw Error(ErrorCode::InvalidArgument, "target scale must be positive and finite");
  }
  target_shift_ = shift;
  target_scale_ = scale;
}

template <typename T>
std::size_t VaeModel<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
void VaeModel<T>::check_params(const data::AcquisitionParams& p) const {
  auto check = [](bool enabled, int index, int n, const char* field) {
    if (enabled && (index < 0 || index >= n)) {
      throw Error(ErrorCode::IndexOutOfVocab,
                  std::string(field) + " index " + std::to_string(index) + " outside [0," +
                      std::to_string(n) + ")");
    }
  };
  check(config_.fields.voltage, p.voltage, config_.n_voltage, "voltage");
  check(config_.fields.current, p.current, config_.n_current, "current");
  check(config_.fields.agent, p.agent, config_.n_agent, "agent");
  check(config_.fields.noise, p.noise, config_.n_noise, "noise");
}

template <typename T>
void VaeModel<T>::gather_embeddings(std::span<const data::AcquisitionParams> params, T* out,
                                    std::size_t stride) const {
  for (std::size_t b = 0; b < params.size(); ++b) {
    check_params(params[b]);
    T* dst = out + b * stride;
    auto copy_row = [&](int table, int index, int dim) {
      if (table < 0) return;
      const T* row = params_[table].value.data() + static_cast<std::size_t>(index) * dim;
      dst = std::copy(row, row + dim, dst);
    };
    copy_row(embed_v_, params[b].voltage, config_.voltage_embed);
    copy_row(embed_t_, params[b].current, config_.current_embed);
    copy_row(embed_a_, params[b].agent, config_.agent_embed);
    copy_row(embed_n_, params[b].noise, config_.noise_embed);
  }
}

template <typename T>
std::vector<double> VaeModel<T>::embed_params(const data::AcquisitionParams& params) const {
  std::vector<T> e(config_.embed_dim());
  gather_embeddings(std::span(&params, 1), e.data(), e.size());
  return std::vector<double>(e.begin(), e.end());
}

// Runs the conv stack and fills ws.fused[:, :F]. In training mode batch
// statistics are used; running statistics are blended into the provided
// arrays when they are non-null.
template <typename T>
void VaeModel<T>::encode_features(std::span<const data::ImageTensor* const> images,
                                  Workspace& ws) const {
  const int batch = static_cast<int>(images.size());
  const int side = config_.input_size;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  ws.batch = batch;
  ws.input.resize(plane * batch);
  for (int b = 0; b < batch; ++b) {
    const auto* img = images[b];
    if (img->height != side || img->width != side || img->values.size() != plane) {
      throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(img->height) + "x" +
                                                std::to_string(img->width) + ", model expects " +
                                                std::to_string(side) + "x" + std::to_string(side));
    }
    std::copy(img->values.begin(), img->values.end(), ws.input.begin() + plane * b);
  }

  const int strides[3] = {2, 2, 1};
  const T* x = ws.input.data();
  int cin = 1, h = side, w = side;
  for (int l = 0; l < 3; ++l) {
    ConvGeom& g = ws.geom[l];
    g = ConvGeom{cin, config_.conv_channels[l], batch, h, w, strides[l]};
    ws.cols[l].resize(g.patch() * g.out_cols());
    ws.act[l].resize(static_cast<std::size_t>(g.cout) * g.out_cols());
    kernels::conv_forward(x, params_[conv_[l]].value.data(), g, ws.cols[l].data(), ws.act[l].data());
    const T* gamma = params_[bn_gamma_[l]].value.data();
    const T* beta = params_[bn_beta_[l]].value.data();
    if (ws.training) {
      ws.xhat[l].resize(ws.act[l].size());
      kernels::batchnorm_train(ws.act[l].data(), g.cout, g.out_cols(), gamma, beta, config_.bn_eps,
                               ws.xhat[l].data(), ws.bn[l]);
    } else {
      kernels::batchnorm_infer(ws.act[l].data(), g.cout, g.out_cols(), gamma, beta,
                               buffers_[bn_mean_[l]].value.data(), buffers_[bn_var_[l]].value.data(),
                               config_.bn_eps);
    }
    kernels::relu(ws.act[l].data(), ws.act[l].size());
    x = ws.act[l].data();
    cin = g.cout;
    h = g.out_height();
    w = g.out_width();
  }

  const int c3 = config_.conv_channels[2];
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t feat = static_cast<std::size_t>(config_.flat_features());
  const std::size_t fused_width = feat + config_.embed_dim();
  ws.fused.resize(fused_width * batch);
  const std::vector<T>& a3 = ws.act[2];
  if (ws.training && config_.dropout_rate > 0.0) {
    const double keep = 1.0 - config_.dropout_rate;
    const T scale = static_cast<T>(1.0 / keep);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ws.drop_mask.resize(a3.size());
    for (auto& m : ws.drop_mask) m = u(*ws.rng) < keep ? scale : T(0);
  } else {
    ws.drop_mask.assign(a3.size(), T(1));
  }
  for (int b = 0; b < batch; ++b) {
    T* dst = ws.fused.data() + fused_width * b;
    for (int c = 0; c < c3; ++c) {
      const std::size_t base = (static_cast<std::size_t>(c) * batch + b) * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[c * hw + p] = a3[base + p] * ws.drop_mask[base + p];
    }
  }
}

template <typename T>
void VaeModel<T>::heads_forward(std::span<const data::AcquisitionParams> params,
                                Workspace& ws) const {
  const int batch = ws.batch;
  const int feat = config_.flat_features();
  const int fused_width = feat + config_.embed_dim();
  gather_embeddings(params, ws.fused.data() + feat, fused_width);
  const int latent = config_.latent_dim;
  ws.mu.resize(static_cast<std::size_t>(batch) * latent);
  ws.lv.resize(ws.mu.size());
  linear_forward(ws.fused.data(), params_[mu_w_].value.data(), params_[mu_b_].value.data(), batch,
                 fused_width, latent, ws.mu.data());
  linear_forward(ws.fused.data(), params_[lv_w_].value.data(), params_[lv_b_].value.data(), batch,
                 fused_width, latent, ws.lv.data());
}

template <typename T>
void VaeModel<T>::decoder_forward(std::span<const data::AcquisitionParams> params, const T* z,
                                  Workspace& ws) const {
  const int batch = static_cast<int>(params.size());
  const int latent = config_.latent_dim;
  const int e = config_.embed_dim();
  const int in = latent + e;
  const int h1 = config_.decoder_hidden[0];
  const int h2 = config_.decoder_hidden[1];
  ws.dec_in.resize(static_cast<std::size_t>(batch) * in);
  for (int b = 0; b < batch; ++b) {
    std::copy(z + static_cast<std::size_t>(b) * latent, z + static_cast<std::size_t>(b + 1) * latent,
              ws.dec_in.begin() + static_cast<std::size_t>(b) * in);
  }
  gather_embeddings(params, ws.dec_in.data() + latent, in);
  ws.h1.resize(static_cast<std::size_t>(batch) * h1);
  ws.h2.resize(static_cast<std::size_t>(batch) * h2);
  ws.out.resize(batch);
  linear_forward(ws.dec_in.data(), params_[dec_w_[0]].value.data(), params_[dec_b_[0]].value.data(),
                 batch, in, h1, ws.h1.data());
  kernels::relu(ws.h1.data(), ws.h1.size());
  linear_forward(ws.h1.data(), params_[dec_w_[1]].value.data(), params_[dec_b_[1]].value.data(),
                 batch, h1, h2, ws.h2.data());
  kernels::relu(ws.h2.data(), ws.h2.size());
  linear_forward(ws.h2.data(), params_[dec_w_[2]].value.data(), params_[dec_b_[2]].value.data(),
                 batch, h2, 1, ws.out.data());
}

template <typename T>
std::vector<LatentPosterior> VaeModel<T>::encode_batch(
    std::span<const data::ImageTensor* const> images,
    std::span<const data::AcquisitionParams> params) const {
  if (images.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "images and params differ in length");
  }
  std::vector<LatentPosterior> out(images.size());
  if (images.empty()) return out;
  thread_local Workspace ws;
  ws.training = false;
  ws.rng = nullptr;
  // One record at a time so results never depend on batch composition.
  for (std::size_t b = 0; b < images.size(); ++b) {
    encode_features(images.subspan(b, 1), ws);
    heads_forward(params.subspan(b, 1), ws);
    out[b].mu.assign(ws.mu.begin(), ws.mu.end());
    out[b].log_var.assign(ws.lv.begin(), ws.lv.end());
  }
  return out;
}

template <typename T>
LatentPosterior VaeModel<T>::encode(const data::ImageTensor& image,
                                    const data::AcquisitionParams& params) const {
  const data::ImageTensor* ptr = &image;
  return std::move(encode_batch(std::span(&ptr, 1), std::span(&params, 1)).front());
}

template <typename T>
double VaeModel<T>::decode(std::span<const double> z, const data::AcquisitionParams& params) const {
  if (z.size() != static_cast<std::size_t>(config_.latent_dim)) {
    throw Error(ErrorCode::ShapeMismatch, "z has length " + std::to_string(z.size()) +
                                              ", latent_dim is " +
                                              std::to_string(config_.latent_dim));
  }
  Workspace ws;
  std::vector<T> zt(z.begin(), z.end());
  decoder_forward(std::span(&params, 1), zt.data(), ws);
  return static_cast<double>(ws.out[0]) * target_scale_ + target_shift_;
}

template <typename T>
Prediction VaeModel<T>::forward(const data::ImageTensor& image, const data::AcquisitionParams& params,
                                ForwardMode mode, std::mt19937_64* rng) const {
  Prediction pred;
  pred.posterior = encode(image, params);
  if (mode == ForwardMode::Deterministic) {
    pred.z_used = pred.posterior.mu;
  } else {
    if (!rng) throw Error(ErrorCode::InvalidArgument, "stochastic forward needs an rng");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(config_.latent_dim);
    for (auto& e : eps) e = normal(*rng);
    pred.z_used = reparameterize(pred.posterior, eps);
  }
  pred.snr_hat = decode(pred.z_used, params);
  return pred;
}

template <typename T>
std::vector<double> VaeModel<T>::predict_batch(std::span<const data::ImageTensor* const> images,
                                               std::span<const data::AcquisitionParams> params) const {
  if (images.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "images and params differ in length");
  }
  std::vector<double> out(images.size());
  if (images.empty()) return out;
  thread_local Workspace ws;
  ws.training = false;
  ws.rng = nullptr;
  for (std::size_t b = 0; b < out.size(); ++b) {
    encode_features(images.subspan(b, 1), ws);
    heads_forward(params.subspan(b, 1), ws);
    decoder_forward(params.subspan(b, 1), ws.mu.data(), ws);
    out[b] = static_cast<double>(ws.out[0]) * target_scale_ + target_shift_;
  }
  return out;
}

template <typename T>
LossBreakdown VaeModel<T>::train_step(const TrainBatch& batch, double beta,
                                      std::uint64_t noise_seed, bool compute_grad,
                                      bool update_running_stats) {
  const int bsz = static_cast<int>(batch.images.size());
  if (bsz == 0) throw Error(ErrorCode::EmptyDataset, "empty minibatch");
  if (batch.params.size() != batch.images.size() || batch.targets.size() != batch.images.size()) {
    throw Error(ErrorCode::ShapeMismatch, "minibatch fields differ in length");
  }
  std::mt19937_64 rng(noise_seed);
  thread_local Workspace ws;
  ws.training = true;
  ws.rng = &rng;
  encode_features(batch.images, ws);
  heads_forward(batch.params, ws);

  const int latent = config_.latent_dim;
  const std::size_t nl = static_cast<std::size_t>(bsz) * latent;
  std::normal_distribution<double> normal(0.0, 1.0);
  ws.eps.resize(nl);
  ws.z.resize(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    ws.eps[i] = static_cast<T>(normal(rng));
    ws.z[i] = ws.mu[i] + std::exp(ws.lv[i] / T(2)) * ws.eps[i];
  }
  decoder_forward(batch.params, ws.z.data(), ws);

  LossBreakdown lb;
  lb.beta = beta;
  std::vector<T> dout(bsz);
  for (int b = 0; b < bsz; ++b) {
    const double target = (batch.targets[b] - target_shift_) / target_scale_;
    const double err = static_cast<double>(ws.out[b]) - target;
    lb.regression_term += err * err;
    dout[b] = static_cast<T>(2.0 * err / bsz);
    double kl = 0.0;
    for (int d = 0; d < latent; ++d) {
      const double m = ws.mu[b * latent + d];
      const double lv = ws.lv[b * latent + d];
      kl += 1.0 + lv - m * m - std::exp(lv);
    }
    lb.kl_term += -0.5 * kl;
  }
  lb.regression_term /= bsz;
  lb.kl_term /= bsz;
  lb.total = lb.regression_term + beta * lb.kl_term;
  if (!std::isfinite(lb.total)) throw Error(ErrorCode::NonFiniteLoss, "training loss is not finite");

  if (update_running_stats) {
    const double m = config_.bn_momentum;
    for (int l = 0; l < 3; ++l) {
      const std::size_t n = ws.geom[l].out_cols();
      T* rm = buffers_[bn_mean_[l]].value.data();
      T* rv = buffers_[bn_var_[l]].value.data();
      for (int c = 0; c < ws.geom[l].cout; ++c) {
        const double unbiased = n > 1 ? ws.bn[l].var[c] * n / (n - 1) : ws.bn[l].var[c];
        rm[c] = static_cast<T>((1.0 - m) * rm[c] + m * ws.bn[l].mean[c]);
        rv[c] = static_cast<T>((1.0 - m) * rv[c] + m * unbiased);
      }
    }
  }
  if (!compute_grad) return lb;

  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));

  // Decoder.
  const int e = config_.embed_dim();
  const int dec_in = latent + e;
  const int h1 = config_.decoder_hidden[0];
  const int h2 = config_.decoder_hidden[1];
  std::vector<T> dh2(static_cast<std::size_t>(bsz) * h2);
  linear_backward(dout.data(), ws.h2.data(), params_[dec_w_[2]].value.data(), bsz, h2, 1,
                  params_[dec_w_[2]].grad.data(), params_[dec_b_[2]].grad.data(), dh2.data());
  kernels::relu_backward(dh2.data(), ws.h2.data(), dh2.size());
  std::vector<T> dh1(static_cast<std::size_t>(bsz) * h1);
  linear_backward(dh2.data(), ws.h1.data(), params_[dec_w_[1]].value.data(), bsz, h1, h2,
                  params_[dec_w_[1]].grad.data(), params_[dec_b_[1]].grad.data(), dh1.data());
  kernels::relu_backward(dh1.data(), ws.h1.data(), dh1.size());
  std::vector<T> ddec(static_cast<std::size_t>(bsz) * dec_in);
  linear_backward(dh1.data(), ws.dec_in.data(), params_[dec_w_[0]].value.data(), bsz, dec_in, h1,
                  params_[dec_w_[0]].grad.data(), params_[dec_b_[0]].grad.data(), ddec.data());

  // Reparameterization and KL.
  std::vector<T> dmu(nl), dlv(nl);
  const T kl_scale = static_cast<T>(beta / bsz);
  for (int b = 0; b < bsz; ++b) {
    for (int d = 0; d < latent; ++d) {
      const std::size_t i = static_cast<std::size_t>(b) * latent + d;
      const T dz = ddec[static_cast<std::size_t>(b) * dec_in + d];
      const T sigma = std::exp(ws.lv[i] / T(2));
      dmu[i] = dz + kl_scale * ws.mu[i];
      dlv[i] = dz * ws.eps[i] * sigma / T(2) + kl_scale * (std::exp(ws.lv[i]) - T(1)) / T(2);
    }
  }

  // Heads.
  const int feat = config_.flat_features();
  const int fused_width = feat + e;
  std::vector<T> dfused(static_cast<std::size_t>(bsz) * fused_width);
  std::vector<T> dfused_lv(dfused.size());
  linear_backward(dmu.data(), ws.fused.data(), params_[mu_w_].value.data(), bsz, fused_width,
                  latent, params_[mu_w_].grad.data(), params_[mu_b_].grad.data(), dfused.data());
  linear_backward(dlv.data(), ws.fused.data(), params_[lv_w_].value.data(), bsz, fused_width,
                  latent, params_[lv_w_].grad.data(), params_[lv_b_].grad.data(), dfused_lv.data());
  for (std::size_t i = 0; i < dfused.size(); ++i) dfused[i] += dfused_lv[i];

  // Embeddings receive gradient from both the encoder fusion and the decoder.
  for (int b = 0; b < bsz; ++b) {
    const T* from_enc = dfused.data() + static_cast<std::size_t>(b) * fused_width + feat;
    const T* from_dec = ddec.data() + static_cast<std::size_t>(b) * dec_in + latent;
    int offset = 0;
    auto scatter = [&](int table, int index, int dim) {
      if (table < 0) return;
      T* g = params_[table].grad.data() + static_cast<std::size_t>(index) * dim;
      for (int j = 0; j < dim; ++j) g[j] += from_enc[offset + j] + from_dec[offset + j];
      offset += dim;
    };
    scatter(embed_v_, batch.params[b].voltage, config_.voltage_embed);
    scatter(embed_t_, batch.params[b].current, config_.current_embed);
    scatter(embed_a_, batch.params[b].agent, config_.agent_embed);
    scatter(embed_n_, batch.params[b].noise, config_.noise_embed);
  }

  // Unflatten into the channel-major layout of the last conv block.
  const ConvGeom& g3 = ws.geom[2];
  const std::size_t hw = static_cast<std::size_t>(g3.out_height()) * g3.out_width();
  std::vector<T> dact(ws.act[2].size());
  for (int b = 0; b < bsz; ++b) {
    const T* src = dfused.data() + static_cast<std::size_t>(b) * fused_width;
    for (int c = 0; c < g3.cout; ++c) {
      const std::size_t base = (static_cast<std::size_t>(c) * bsz + b) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        dact[base + p] = src[c * hw + p] * ws.drop_mask[base + p];
      }
    }
  }

  std::vector<T> scratch;
  std::vector<T> dprev;
  for (int l = 2; l >= 0; --l) {
    const ConvGeom& g = ws.geom[l];
    kernels::relu_backward(dact.data(), ws.act[l].data(), dact.size());
    kernels::batchnorm_backward(dact.data(), g.cout, g.out_cols(), params_[bn_gamma_[l]].value.data(),
                                ws.xhat[l].data(), ws.bn[l], params_[bn_gamma_[l]].grad.data(),
                                params_[bn_beta_[l]].grad.data());
    const bool need_dx = l > 0;
    if (need_dx) {
      scratch.resize(g.patch() * g.out_cols());
      dprev.resize(static_cast<std::size_t>(g.cin) * g.in_cols());
    }
    kernels::conv_backward(dact.data(), ws.cols[l].data(), params_[conv_[l]].value.data(), g,
                           params_[conv_[l]].grad.data(), need_dx ? scratch.data() : nullptr,
                           need_dx ? dprev.data() : nullptr);
    if (need_dx) std::swap(dact, dprev);
  }
  return lb;
}

template <typename To, typename From>
VaeModel<To> convert_model(const VaeModel<From>& model) {
  VaeModel<To> out(model.config(), 0);
  out.set_target_normalization(model.target_shift(), model.target_scale());
  auto copy = [](const auto& src, auto& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i].value.assign(src[i].value.begin(), src[i].value.end());
    }
  };
  copy(model.parameters(), out.parameters());
  copy(model.buffers(), out.buffers());
  return out;
}

template class VaeModel<float>;
template class VaeModel<double>;
template VaeModel<double> convert_model<double, float>(const VaeModel<float>&);
template VaeModel<float> convert_model<float, double>(const VaeModel<double>&);
template VaeModel<float> convert_model<float, float>(const VaeModel<float>&);
template VaeModel<double> convert_model<double, double>(const VaeModel<double>&);

}  // namespace capri::model
