#include "coronary/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <new>
#include <sstream>

#include <Eigen/Core>

#include "coronary/errors.hpp"

namespace coronary::nn {

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void im2col(const T* x, Shape4 xs, T* col) {
  const int od = xs.d - 2, oh = xs.h - 2, ow = xs.w - 2;
  const std::size_t p = static_cast<std::size_t>(od) * oh * ow;
  for (int c = 0; c < xs.c; ++c)
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = col + static_cast<std::size_t>(((c * 3 + kz) * 3 + ky) * 3 + kx) * p;
          for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y) {
              const T* src = x + (static_cast<std::size_t>(c * xs.d + z + kz) * xs.h + y + ky) * xs.w + kx;
              std::copy(src, src + ow, dst);
              dst += ow;
            }
        }
}

template <typename T>
void col2im_add(const T* col, Shape4 xs, T* x) {
  const int od = xs.d - 2, oh = xs.h - 2, ow = xs.w - 2;
  const std::size_t p = static_cast<std::size_t>(od) * oh * ow;
  for (int c = 0; c < xs.c; ++c)
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T* src = col + static_cast<std::size_t>(((c * 3 + kz) * 3 + ky) * 3 + kx) * p;
          for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y) {
              T* dst = x + (static_cast<std::size_t>(c * xs.d + z + kz) * xs.h + y + ky) * xs.w + kx;
              for (int i = 0; i < ow; ++i) dst[i] += src[i];
              src += ow;
            }
        }
}

}  // namespace

template <typename T>
void conv3d_forward(std::span<const T> x, Shape4 xs, std::span<const T> weight,
                    std::span<const T> bias, int c_out, std::span<T> y, std::vector<T>& scratch) {
  const int k = xs.c * 27;
  const int p = (xs.d - 2) * (xs.h - 2) * (xs.w - 2);
  scratch.resize(static_cast<std::size_t>(k) * p);
  im2col(x.data(), xs, scratch.data());
  Eigen::Map<const MatR<T>> w(weight.data(), c_out, k);
  Eigen::Map<const MatR<T>> col(scratch.data(), k, p);
  Eigen::Map<MatR<T>> out(y.data(), c_out, p);
  out.noalias() = w * col;
  for (int o = 0; o < c_out; ++o) out.row(o).array() += bias[static_cast<std::size_t>(o)];
}

template <typename T>
void conv3d_backward(std::span<const T> x, Shape4 xs, std::span<const T> weight, int c_out,
                     std::span<const T> dy, std::span<T> dweight, std::span<T> dbias,
                     std::span<T> dx, std::vector<T>& scratch) {
  const int k = xs.c * 27;
  const int p = (xs.d - 2) * (xs.h - 2) * (xs.w - 2);
  const std::size_t kp = static_cast<std::size_t>(k) * p;
  scratch.resize(dx.empty() ? kp : 2 * kp);
  im2col(x.data(), xs, scratch.data());
  Eigen::Map<const MatR<T>> col(scratch.data(), k, p);
  Eigen::Map<const MatR<T>> g(dy.data(), c_out, p);
  Eigen::Map<MatR<T>> dw(dweight.data(), c_out, k);
  dw.noalias() += g * col.transpose();
  for (int o = 0; o < c_out; ++o) dbias[static_cast<std::size_t>(o)] += g.row(o).sum();
  if (!dx.empty()) {
    Eigen::Map<const MatR<T>> w(weight.data(), c_out, k);
    Eigen::Map<MatR<T>> dcol(scratch.data() + kp, k, p);
    dcol.noalias() = w.transpose() * g;
    col2im_add(scratch.data() + kp, xs, dx.data());
  }
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 4) throw UsageError("conv3d input must be [C,D,H,W], got " + shape_string(x.shape));
  if (weight.rank() != 5 || weight.dim(2) != 3 || weight.dim(3) != 3 || weight.dim(4) != 3) {
    throw UsageError("conv3d weight must be [Cout,Cin,3,3,3], got " + shape_string(weight.shape));
  }
  if (weight.dim(1) != x.dim(0)) {
    throw UsageError("conv3d channel mismatch: input has " + std::to_string(x.dim(0)) +
                     " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.size() != static_cast<std::size_t>(weight.dim(0))) {
    throw UsageError("conv3d bias length must equal output channels");
  }
  if (x.dim(1) < 3 || x.dim(2) < 3 || x.dim(3) < 3) {
    throw UsageError("conv3d spatial dims must be >= 3, got " + shape_string(x.shape));
  }
  const Shape4 xs{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  const int c_out = weight.dim(0);
  Tensor<T> y({c_out, xs.d - 2, xs.h - 2, xs.w - 2});
  std::vector<T> scratch;
  conv3d_forward<T>(x.span(), xs, weight.span(), bias.span(), c_out, y.span(), scratch);
  return y;
}

Shape4 pooled_shape(Shape4 xs) { return {xs.c, xs.d / 2, xs.h / 2, xs.w / 2}; }

template <typename T>
void maxpool3d_forward(std::span<const T> x, Shape4 xs, std::span<T> y, std::span<int> argmax) {
  const Shape4 ys = pooled_shape(xs);
  std::size_t o = 0;
  for (int c = 0; c < ys.c; ++c)
    for (int z = 0; z < ys.d; ++z)
      for (int yy = 0; yy < ys.h; ++yy)
        for (int xx = 0; xx < ys.w; ++xx, ++o) {
          int best = -1;
          T best_v{};
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int i = ((c * xs.d + 2 * z + dz) * xs.h + 2 * yy + dy) * xs.w + 2 * xx + dx;
                const T v = x[static_cast<std::size_t>(i)];
                if (best < 0 || v > best_v) {
                  best = i;
                  best_v = v;
                }
              }
          y[o] = best_v;
          argmax[o] = best;
        }
}

template <typename T>
void maxpool3d_backward(std::span<const T> dy, std::span<const int> argmax, std::span<T> dx) {
  for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(argmax[o])] += dy[o];
}

template <typename T>
PoolResult<T> maxpool3d(const Tensor<T>& x) {
  if (x.rank() != 4) throw UsageError("maxpool3d input must be [C,D,H,W]");
  const Shape4 xs{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  const Shape4 ys = pooled_shape(xs);
  PoolResult<T> r{Tensor<T>({ys.c, ys.d, ys.h, ys.w}), std::vector<int>(static_cast<std::size_t>(ys.count()))};
  maxpool3d_forward<T>(x.span(), xs, r.y.span(), r.argmax);
  return r;
}

template <typename T>
void batchnorm_forward(std::span<const T> x, int n, int c, int s, std::span<const T> gamma,
                       std::span<const T> beta, std::span<T> running_mean,
                       std::span<T> running_var, bool train, bool update_running,
                       std::span<T> y, BatchNormCache<T>* cache) {
  const double m = static_cast<double>(n) * s;
  if (cache) {
    cache->xhat.resize(x.size());
    cache->inv_std.assign(static_cast<std::size_t>(c), 0.0);
  }
  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (train) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * s;
        for (int k = 0; k < s; ++k) sum += p[k];
      }
      mean = sum / m;
      double sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * c + ch) * s;
        for (int k = 0; k < s; ++k) sq += (p[k] - mean) * (p[k] - mean);
      }
      var = sq / m;
      if (update_running) {
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running_mean[ch] = static_cast<T>(kBatchNormMomentum * running_mean[ch] + (1 - kBatchNormMomentum) * mean);
        running_var[ch] = static_cast<T>(kBatchNormMomentum * running_var[ch] + (1 - kBatchNormMomentum) * unbiased);
      }
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
    const double g = gamma[ch];
    const double b = beta[ch];
    if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = inv_std;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * s;
      for (int k = 0; k < s; ++k) {
        const double xh = (x[off + k] - mean) * inv_std;
        if (cache) cache->xhat[off + k] = static_cast<T>(xh);
        y[off + k] = static_cast<T>(g * xh + b);
      }
    }
  }
}

template <typename T>
void batchnorm_backward(std::span<const T> dy, int n, int c, int s, std::span<const T> gamma,
                        const BatchNormCache<T>& cache, bool train, std::span<T> dx,
                        std::span<T> dgamma, std::span<T> dbeta) {
  const double m = static_cast<double>(n) * s;
  for (int ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * s;
      for (int k = 0; k < s; ++k) {
        sum_dy += dy[off + k];
        sum_dy_xhat += static_cast<double>(dy[off + k]) * cache.xhat[off + k];
      }
    }
    dgamma[ch] += static_cast<T>(sum_dy_xhat);
    dbeta[ch] += static_cast<T>(sum_dy);
    const double scale = gamma[ch] * cache.inv_std[static_cast<std::size_t>(ch)];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * s;
      for (int k = 0; k < s; ++k) {
        dx[off + k] = train ? static_cast<T>(scale * (dy[off + k] - sum_dy / m - cache.xhat[off + k] * sum_dy_xhat / m))
                            : static_cast<T>(scale * dy[off + k]);
      }
    }
  }
}

template <typename T>
void linear_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b, int out,
                    std::span<T> y) {
  const int in = static_cast<int>(x.size());
  Eigen::Map<const MatR<T>> wm(w.data(), out, in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data(), in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(b.data(), out);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.data(), out);
  yv.noalias() = wm * xv + bv;
}

template <typename T>
void linear_backward(std::span<const T> x, std::span<const T> w, int out, std::span<const T> dy,
                     std::span<T> dw, std::span<T> db, std::span<T> dx) {
  const int in = static_cast<int>(x.size());
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const MatR<T>> wm(w.data(), out, in);
  Eigen::Map<const Vec> xv(x.data(), in);
  Eigen::Map<const Vec> g(dy.data(), out);
  Eigen::Map<MatR<T>> dwm(dw.data(), out, in);
  dwm.noalias() += g * xv.transpose();
  Eigen::Map<Vec>(db.data(), out) += g;
  if (!dx.empty()) Eigen::Map<Vec>(dx.data(), in).noalias() += wm.transpose() * g;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

#define CORONARY_INSTANTIATE(T)                                                                   \
  template void conv3d_forward<T>(std::span<const T>, Shape4, std::span<const T>,                 \
                                  std::span<const T>, int, std::span<T>, std::vector<T>&);        \
  template void conv3d_backward<T>(std::span<const T>, Shape4, std::span<const T>, int,           \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>,  \
                                   std::vector<T>&);                                              \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template void maxpool3d_forward<T>(std::span<const T>, Shape4, std::span<T>, std::span<int>);   \
  template void maxpool3d_backward<T>(std::span<const T>, std::span<const int>, std::span<T>);    \
  template PoolResult<T> maxpool3d<T>(const Tensor<T>&);                                          \
  template void batchnorm_forward<T>(std::span<const T>, int, int, int, std::span<const T>,       \
                                     std::span<const T>, std::span<T>, std::span<T>, bool, bool,  \
                                     std::span<T>, BatchNormCache<T>*);                           \
  template void batchnorm_backward<T>(std::span<const T>, int, int, int, std::span<const T>,      \
                                      const BatchNormCache<T>&, bool, std::span<T>, std::span<T>, \
                                      std::span<T>);                                              \
  template void linear_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,     \
                                  int, std::span<T>);                                             \
  template void linear_backward<T>(std::span<const T>, std::span<const T>, int,                   \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);

CORONARY_INSTANTIATE(float)
CORONARY_INSTANTIATE(double)

#undef CORONARY_INSTANTIATE

}  // namespace coronary::nn

// Eigen's vectorized reductions peel scalars up to the first aligned element,
// so sums depend on where a buffer lands. Aligning every heap block to the
// widest packet keeps repeated runs bit-identical.
void* operator new(std::size_t n) {
  constexpr std::size_t kAlign = 64;
  const std::size_t size = ((n == 0 ? 1 : n) + kAlign - 1) & ~(kAlign - 1);
  for (;;) {
    if (void* p = std::aligned_alloc(kAlign, size)) return p;
    std::new_handler h = std::get_new_handler();
    if (!h) throw std::bad_alloc();
    h();
  }
}

void* operator new[](std::size_t n) { return ::operator new(n); }

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
