#include "coronary/nn/gru.hpp"

#include <cmath>

#include <Eigen/Core>

namespace coronary::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
void gru_forward(std::span<const T> x, int steps, const GruWeights<T>& w, std::span<T> out,
                 GruCache<T>* cache) {
  const int n = w.units;
  Eigen::Map<const MatR<T>> xm(x.data(), steps, w.in);
  Eigen::Map<const MatR<T>> kernel(w.kernel.data(), w.in, 3 * n);
  Eigen::Map<const MatR<T>> rec(w.recurrent.data(), n, 3 * n);
  Eigen::Map<const RowVec<T>> bias(w.bias.data(), 3 * n);

  MatR<T> xw = xm * kernel;
  xw.rowwise() += bias;

  if (cache) {
    cache->steps = steps;
    cache->x.assign(x.begin(), x.end());
    cache->h.assign(static_cast<std::size_t>(steps + 1) * n, T(0));
    cache->z.resize(static_cast<std::size_t>(steps) * n);
    cache->r.resize(static_cast<std::size_t>(steps) * n);
    cache->c.resize(static_cast<std::size_t>(steps) * n);
  }

  RowVec<T> h = RowVec<T>::Zero(n);
  RowVec<T> z(n), r(n), c(n);
  for (int t = 0; t < steps; ++t) {
    const RowVec<T> hu = h * rec.leftCols(2 * n);
    for (int j = 0; j < n; ++j) {
      z[j] = sigmoid(xw(t, j) + hu[j]);
      r[j] = sigmoid(xw(t, n + j) + hu[n + j]);
    }
    const RowVec<T> rh = r.cwiseProduct(h);
    const RowVec<T> cu = rh * rec.rightCols(n);
    for (int j = 0; j < n; ++j) c[j] = std::tanh(xw(t, 2 * n + j) + cu[j]);
    if (cache) {
      const std::size_t off = static_cast<std::size_t>(t) * n;
      std::copy(z.data(), z.data() + n, cache->z.begin() + off);
      std::copy(r.data(), r.data() + n, cache->r.begin() + off);
      std::copy(c.data(), c.data() + n, cache->c.begin() + off);
    }
    h = z.cwiseProduct(h) + (RowVec<T>::Ones(n) - z).cwiseProduct(c);
    std::copy(h.data(), h.data() + n, out.begin() + static_cast<std::ptrdiff_t>(t) * n);
    if (cache) std::copy(h.data(), h.data() + n, cache->h.begin() + static_cast<std::ptrdiff_t>(t + 1) * n);
  }
}

template <typename T>
void gru_backward(const GruCache<T>& cache, const GruWeights<T>& w, std::span<const T> dout,
                  std::span<T> dkernel, std::span<T> drecurrent, std::span<T> dbias,
                  std::span<T> dx) {
  const int n = w.units;
  const int steps = cache.steps;
  Eigen::Map<const MatR<T>> kernel(w.kernel.data(), w.in, 3 * n);
  Eigen::Map<const MatR<T>> rec(w.recurrent.data(), n, 3 * n);
  Eigen::Map<MatR<T>> drec(drecurrent.data(), n, 3 * n);

  MatR<T> da(steps, 3 * n);  // pre-activation gradients per step
  RowVec<T> dh_next = RowVec<T>::Zero(n);
  for (int t = steps - 1; t >= 0; --t) {
    const std::size_t off = static_cast<std::size_t>(t) * n;
    Eigen::Map<const RowVec<T>> h(cache.h.data() + off, n);
    Eigen::Map<const RowVec<T>> z(cache.z.data() + off, n);
    Eigen::Map<const RowVec<T>> r(cache.r.data() + off, n);
    Eigen::Map<const RowVec<T>> c(cache.c.data() + off, n);
    Eigen::Map<const RowVec<T>> g(dout.data() + off, n);

    const RowVec<T> dh_out = g + dh_next;
    RowVec<T> da_z(n), da_r(n), da_c(n);
    for (int j = 0; j < n; ++j) {
      const T dz = dh_out[j] * (h[j] - c[j]);
      const T dc = dh_out[j] * (T(1) - z[j]);
      da_z[j] = dz * z[j] * (T(1) - z[j]);
      da_c[j] = dc * (T(1) - c[j] * c[j]);
    }
    const RowVec<T> rh = r.cwiseProduct(h);
    drec.rightCols(n).noalias() += rh.transpose() * da_c;
    const RowVec<T> drh = da_c * rec.rightCols(n).transpose();
    for (int j = 0; j < n; ++j) da_r[j] = drh[j] * h[j] * r[j] * (T(1) - r[j]);

    drec.leftCols(n).noalias() += h.transpose() * da_z;
    drec.middleCols(n, n).noalias() += h.transpose() * da_r;

    dh_next = dh_out.cwiseProduct(z) + drh.cwiseProduct(r) + da_z * rec.leftCols(n).transpose() +
              da_r * rec.middleCols(n, n).transpose();

    da.block(t, 0, 1, n) = da_z;
    da.block(t, n, 1, n) = da_r;
    da.block(t, 2 * n, 1, n) = da_c;
  }

  Eigen::Map<const MatR<T>> xm(cache.x.data(), steps, w.in);
  Eigen::Map<MatR<T>>(dkernel.data(), w.in, 3 * n).noalias() += xm.transpose() * da;
  Eigen::Map<RowVec<T>>(dbias.data(), 3 * n) += da.colwise().sum();
  if (!dx.empty()) Eigen::Map<MatR<T>>(dx.data(), steps, w.in).noalias() = da * kernel.transpose();
}

template void gru_forward<float>(std::span<const float>, int, const GruWeights<float>&,
                                 std::span<float>, GruCache<float>*);
template void gru_forward<double>(std::span<const double>, int, const GruWeights<double>&,
                                  std::span<double>, GruCache<double>*);
template void gru_backward<float>(const GruCache<float>&, const GruWeights<float>&,
                                  std::span<const float>, std::span<float>, std::span<float>,
                                  std::span<float>, std::span<float>);
template void gru_backward<double>(const GruCache<double>&, const GruWeights<double>&,
                                   std::span<const double>, std::span<double>, std::span<double>,
                                   std::span<double>, std::span<double>);

}  // namespace coronary::nn
