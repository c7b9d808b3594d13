#pragma once

// Dense kernels shared by the VAE forward and backward passes. Activations
// use a channel-major layout [C, B, H, W] so a whole minibatch maps onto a
// single GEMM per convolution and per-channel statistics are matrix rows.

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace capri::model::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// 3×3 convolution, padding 1.
struct ConvGeom {
  int cin = 1;
  int cout = 1;
  int batch = 1;
  int height = 1;
  int width = 1;
  int stride = 1;

  int out_height() const noexcept { return (height - 1) / stride + 1; }
  int out_width() const noexcept { return (width - 1) / stride + 1; }
  std::size_t patch() const noexcept { return static_cast<std::size_t>(cin) * 9; }
  std::size_t in_cols() const noexcept {
    return static_cast<std::size_t>(batch) * height * width;
  }
  std::size_t out_cols() const noexcept {
    return static_cast<std::size_t>(batch) * out_height() * out_width();
  }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols);

/// Accumulates columns back into dx (dx must be zeroed by the caller).
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx);

/// y[cout, out_cols] = w[cout, patch] · im2col(x). `cols` receives the
/// unfolded input and must hold patch()·out_cols() values.
template <typename T>
void conv_forward(const T* x, const T* w, const ConvGeom& g, T* cols, T* y);

/// dw += dy · colsᵀ; if dx is non-null, dx = col2im(wᵀ · dy) using
/// `scratch` (patch()·out_cols() values).
template <typename T>
void conv_backward(const T* dy, const T* cols, const T* w, const ConvGeom& g, T* dw, T* scratch,
                   T* dx);

/// Batch moments of one training-mode pass (biased variance).
struct BatchNormCache {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
};

/// Training-mode batch norm over rows of x[channels, n], in place. xhat
/// receives the normalized input.
template <typename T>
void batchnorm_train(T* x, int channels, std::size_t n, const T* gamma, const T* beta, double eps,
                     T* xhat, BatchNormCache& cache);

/// dy is overwritten with dx; dgamma and dbeta accumulate.
template <typename T>
void batchnorm_backward(T* dy, int channels, std::size_t n, const T* gamma, const T* xhat,
                        const BatchNormCache& cache, T* dgamma, T* dbeta);

template <typename T>
void batchnorm_infer(T* x, int channels, std::size_t n, const T* gamma, const T* beta,
                     const T* running_mean, const T* running_var, double eps);

template <typename T>
void relu(T* x, std::size_t n);

/// dy[i] = 0 wherever y[i] <= 0.
template <typename T>
void relu_backward(T* dy, const T* y, std::size_t n);

}  // namespace capri::model::kernels
