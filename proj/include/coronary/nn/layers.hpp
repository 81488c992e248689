#pragma once

#include <span>
#include <vector>

#include "coronary/nn/tensor.hpp"

namespace coronary::nn {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Channel-major 3D feature map shape.
struct Shape4 {
  int c, d, h, w;
  int spatial() const { return d * h * w; }
  int count() const { return c * d * h * w; }
};

// ---- valid 3x3x3 convolution, stride 1 -------------------------------------
// weight: [c_out, c_in*27] (c_in, kz, ky, kx), bias: [c_out].

template <typename T>
void conv3d_forward(std::span<const T> x, Shape4 xs, std::span<const T> weight,
                    std::span<const T> bias, int c_out, std::span<T> y, std::vector<T>& scratch);

/// Accumulates into dweight/dbias; writes dx unless it is empty.
template <typename T>
void conv3d_backward(std::span<const T> x, Shape4 xs, std::span<const T> weight, int c_out,
                     std::span<const T> dy, std::span<T> dweight, std::span<T> dbias,
                     std::span<T> dx, std::vector<T>& scratch);

/// x: [c_in, D, H, W], weight: [c_out, c_in, 3, 3, 3], bias: [c_out].
/// Throws UsageError on channel mismatch or spatial dims < 3.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---- 2x2x2 max pooling, stride 2, floor on odd dims -------------------------

Shape4 pooled_shape(Shape4 xs);

/// argmax receives the flat input index of each window maximum (first in scan
/// order on ties).
template <typename T>
void maxpool3d_forward(std::span<const T> x, Shape4 xs, std::span<T> y, std::span<int> argmax);

/// dx must be zeroed by the caller; gradients are added at argmax positions.
template <typename T>
void maxpool3d_backward(std::span<const T> dy, std::span<const int> argmax, std::span<T> dx);

template <typename T>
struct PoolResult {
  Tensor<T> y;
  std::vector<int> argmax;
};
template <typename T>
PoolResult<T> maxpool3d(const Tensor<T>& x);

// ---- batch normalization over [N, C, S] ---------------------------------------

template <typename T>
struct BatchNormCache {
  std::vector<T> xhat;           // [N, C, S]
  std::vector<double> inv_std;   // [C]
};

/// Train mode: batch statistics, running stats updated with momentum 0.9
/// (running = 0.9 * running + 0.1 * batch, unbiased variance). Eval mode:
/// running statistics. `cache` may be null in eval mode.
template <typename T>
void batchnorm_forward(std::span<const T> x, int n, int c, int s, std::span<const T> gamma,
                       std::span<const T> beta, std::span<T> running_mean,
                       std::span<T> running_var, bool train, bool update_running,
                       std::span<T> y, BatchNormCache<T>* cache);

template <typename T>
void batchnorm_backward(std::span<const T> dy, int n, int c, int s, std::span<const T> gamma,
                        const BatchNormCache<T>& cache, bool train, std::span<T> dx,
                        std::span<T> dgamma, std::span<T> dbeta);

// ---- dense ----------------------------------------------------------------------

/// y = W x + b with W: [out, in].
template <typename T>
void linear_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b, int out,
                    std::span<T> y);
template <typename T>
void linear_backward(std::span<const T> x, std::span<const T> w, int out, std::span<const T> dy,
                     std::span<T> dw, std::span<T> db, std::span<T> dx);

/// Numerically stable softmax evaluated in double.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace coronary::nn
