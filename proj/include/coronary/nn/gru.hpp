#pragma once

#include <span>
#include <vector>

namespace coronary::nn {

/// GRU with one bias per gate, gate blocks ordered [update | reset | candidate]:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wc + (r * h) Uc + bc)
///   h' = z * h + (1 - z) * c
template <typename T>
struct GruWeights {
  std::span<const T> kernel;     // [in, 3*units]
  std::span<const T> recurrent;  // [units, 3*units]
  std::span<const T> bias;       // [3*units]
  int in = 0;
  int units = 0;
};

constexpr long gru_param_count(long in, long units) { return 3 * ((in + units) * units + units); }

template <typename T>
struct GruCache {
  int steps = 0;
  std::vector<T> x;   // [steps, in]
  std::vector<T> h;   // [steps + 1, units], row 0 is h0
  std::vector<T> z;   // [steps, units]
  std::vector<T> r;
  std::vector<T> c;
};

/// x: [steps, in] -> out: [steps, units], starting from h0 = 0.
template <typename T>
void gru_forward(std::span<const T> x, int steps, const GruWeights<T>& w, std::span<T> out,
                 GruCache<T>* cache);

/// Backpropagation through time. Gradients are accumulated; dx is written
/// (skipped when empty).
template <typename T>
void gru_backward(const GruCache<T>& cache, const GruWeights<T>& w, std::span<const T> dout,
                  std::span<T> dkernel, std::span<T> drecurrent, std::span<T> dbias,
                  std::span<T> dx);

}  // namespace coronary::nn
