#include "model/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace capri::model::kernels {

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const std::size_t plane_in = static_cast<std::size_t>(g.height) * g.width;
  T* out = cols;
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        for (int b = 0; b < g.batch; ++b) {
          const T* src = x + (static_cast<std::size_t>(c) * g.batch + b) * plane_in;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride + ky - 1;
            if (iy < 0 || iy >= g.height) {
              std::fill(out, out + wo, T(0));
              out += wo;
              continue;
            }
            const T* row = src + static_cast<std::size_t>(iy) * g.width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride + kx - 1;
              *out++ = (ix >= 0 && ix < g.width) ? row[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
  const int ho = g.out_height();
  const int wo = g.out_width();
  const std::size_t plane_in = static_cast<std::size_t>(g.height) * g.width;
  const T* in = cols;
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        for (int b = 0; b < g.batch; ++b) {
          T* dst = dx + (static_cast<std::size_t>(c) * g.batch + b) * plane_in;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride + ky - 1;
            if (iy < 0 || iy >= g.height) {
              in += wo;
              continue;
            }
            T* row = dst + static_cast<std::size_t>(iy) * g.width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride + kx - 1;
              if (ix >= 0 && ix < g.width) row[ix] += *in;
              ++in;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const T* x, const T* w, const ConvGeom& g, T* cols, T* y) {
  im2col(x, g, cols);
  const auto k = static_cast<Eigen::Index>(g.patch());
  const auto n = static_cast<Eigen::Index>(g.out_cols());
  ConstMapMat<T> wm(w, g.cout, k);
  ConstMapMat<T> cm(cols, k, n);
  MapMat<T> ym(y, g.cout, n);
  ym.noalias() = wm * cm;
}

template <typename T>
void conv_backward(const T* dy, const T* cols, const T* w, const ConvGeom& g, T* dw, T* scratch,
                   T* dx) {
  const auto k = static_cast<Eigen::Index>(g.patch());
  const auto n = static_cast<Eigen::Index>(g.out_cols());
  ConstMapMat<T> dym(dy, g.cout, n);
  ConstMapMat<T> cm(cols, k, n);
  MapMat<T> dwm(dw, g.cout, k);
  dwm.noalias() += dym * cm.transpose();
  if (dx) {
    ConstMapMat<T> wm(w, g.cout, k);
    MapMat<T> sm(scratch, k, n);
    sm.noalias() = wm.transpose() * dym;
    std::fill(dx, dx + static_cast<std::size_t>(g.cin) * g.in_cols(), T(0));
    col2im(scratch, g, dx);
  }
}

template <typename T>
void batchnorm_train(T* x, int channels, std::size_t n, const T* gamma, const T* beta, double eps,
                     T* xhat, BatchNormCache& cache) {
  cache.mean.assign(channels, 0.0);
  cache.var.assign(channels, 0.0);
  cache.inv_std.assign(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    T* row = x + static_cast<std::size_t>(c) * n;
    T* hat = xhat + static_cast<std::size_t>(c) * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += row[i];
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = row[i] - mean;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    cache.mean[c] = mean;
    cache.var[c] = var;
    cache.inv_std[c] = inv_std;
    const T tm = static_cast<T>(mean);
    const T ti = static_cast<T>(inv_std);
    for (std::size_t i = 0; i < n; ++i) {
      hat[i] = (row[i] - tm) * ti;
      row[i] = gamma[c] * hat[i] + beta[c];
    }
  }
}

template <typename T>
void batchnorm_backward(T* dy, int channels, std::size_t n, const T* gamma, const T* xhat,
                        const BatchNormCache& cache, T* dgamma, T* dbeta) {
  for (int c = 0; c < channels; ++c) {
    T* d = dy + static_cast<std::size_t>(c) * n;
    const T* hat = xhat + static_cast<std::size_t>(c) * n;
    double sum_dy = 0.0;
    double sum_dy_hat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += d[i];
      sum_dy_hat += static_cast<double>(d[i]) * hat[i];
    }
    dgamma[c] += static_cast<T>(sum_dy_hat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double g = gamma[c];
    const double scale = g * cache.inv_std[c] / static_cast<double>(n);
    const double mean_term = sum_dy;
    const double hat_term = sum_dy_hat;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = static_cast<T>(scale * (static_cast<double>(n) * d[i] - mean_term - hat[i] * hat_term));
    }
  }
}

template <typename T>
void batchnorm_infer(T* x, int channels, std::size_t n, const T* gamma, const T* beta,
                     const T* running_mean, const T* running_var, double eps) {
  for (int c = 0; c < channels; ++c) {
    T* row = x + static_cast<std::size_t>(c) * n;
    const T scale = static_cast<T>(gamma[c] / std::sqrt(static_cast<double>(running_var[c]) + eps));
    const T shift = beta[c] - running_mean[c] * scale;
    for (std::size_t i = 0; i < n; ++i) row[i] = row[i] * scale + shift;
  }
}

template <typename T>
void relu(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(T* dy, const T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > T(0))) dy[i] = T(0);
  }
}

#define CAPRI_INSTANTIATE(T)                                                                   \
  template void im2col<T>(const T*, const ConvGeom&, T*);                                      \
  template void col2im<T>(const T*, const ConvGeom&, T*);                                      \
  template void conv_forward<T>(const T*, const T*, const ConvGeom&, T*, T*);                  \
  template void conv_backward<T>(const T*, const T*, const T*, const ConvGeom&, T*, T*, T*);   \
  template void batchnorm_train<T>(T*, int, std::size_t, const T*, const T*, double, T*,      \
                                   BatchNormCache&);                                           \
  template void batchnorm_backward<T>(T*, int, std::size_t, const T*, const T*,                \
                                      const BatchNormCache&, T*, T*);                          \
  template void batchnorm_infer<T>(T*, int, std::size_t, const T*, const T*, const T*,         \
                                   const T*, double);                                          \
  template void relu<T>(T*, std::size_t);                                                      \
  template void relu_backward<T>(T*, const T*, std::size_t);

CAPRI_INSTANTIATE(float)
CAPRI_INSTANTIATE(double)
#undef CAPRI_INSTANTIATE

}  // namespace capri::model::kernels
