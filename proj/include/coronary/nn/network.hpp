#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coronary/labels.hpp"
#include "coronary/nn/gru.hpp"
#include "coronary/nn/layers.hpp"
#include "coronary/nn/tensor.hpp"
#include "coronary/rng.hpp"
#include "coronary/sampler.hpp"

namespace coronary::nn {

enum class ModelKind { Rcnn, Cnn, RcnnSingle, CnnSingle };

std::string_view kind_name(ModelKind k);
/// Accepts "rcnn", "cnn", "rcnn-single", "cnn-single".
ModelKind parse_kind(std::string_view s);

/// Layer widths. Defaults are the published network; tests shrink them.
struct Architecture {
  ModelKind kind = ModelKind::Rcnn;
  int conv1 = 32;
  int conv2 = 64;
  int conv3 = 128;
  int gru_units = 64;
  int fc_units = 192;
  int cube = kCubeSize;

  bool recurrent() const { return kind == ModelKind::Rcnn || kind == ModelKind::RcnnSingle; }
  bool single_task() const { return kind == ModelKind::RcnnSingle || kind == ModelKind::CnnSingle; }
  /// Spatial edge after each conv/pool stage: cube -> ... -> final.
  std::array<int, 3> conv_out() const;
  std::array<int, 3> pool_out() const;
  int feature_dim() const;
  int trunk_dim() const { return recurrent() ? gru_units : fc_units; }
};

/// Closed-form trainable parameter count.
long parameter_count(const Architecture& a);

enum class Mode { Train, Eval };

/// Softmax outputs of one sequence. Single-task models also carry the 7-way
/// joint distribution; the per-task vectors are then its marginals.
struct HeadOutput {
  std::array<double, kPlaqueClasses> p_plaque{};
  std::array<double, kStenosisClasses> p_stenosis{};
  std::optional<std::array<double, kJointClasses>> p_joint;

  /// Argmax with ties to the lowest index; joint-decoded for single-task.
  int plaque_label() const;
  int stenosis_label() const;
};

template <typename T>
struct Logits {
  std::vector<T> plaque;    // dual-head models
  std::vector<T> stenosis;
  std::vector<T> joint;     // single-task models
};

HeadOutput to_head_output(const Logits<double>& l);

struct PassOptions {
  Mode mode = Mode::Train;
  bool update_running_stats = true;
  double dropout = 0.5;
};

template <typename T>
class Network {
 public:
  explicit Network(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::size_t parameter_count() const;
  Param<T>& param(std::string_view name);
  const Param<T>& param(std::string_view name) const;

  /// BN running statistics, [mean, var] per conv stage.
  std::array<Tensor<T>, 3>& running_mean() { return running_mean_; }
  std::array<Tensor<T>, 3>& running_var() { return running_var_; }
  const std::array<Tensor<T>, 3>& running_mean() const { return running_mean_; }
  const std::array<Tensor<T>, 3>& running_var() const { return running_var_; }

  /// Fan-in scaled uniform weights, zero biases, BN gamma = 1 / beta = 0,
  /// running mean 0 / var 1.
  void init(std::uint64_t seed);
  void zero_grad();

  /// Batched forward pass that keeps activations for backward(). In train
  /// mode BN uses statistics over every cube of the batch and dropout masks
  /// are drawn from `rng`.
  std::vector<Logits<T>> forward(std::span<const CubeSequence* const> batch,
                                 const PassOptions& opts, Rng& rng);
  /// Accumulates parameter gradients for the most recent forward().
  void backward(std::span<const Logits<T>> dlogits);

  // Eval-mode inference; const and safe to call concurrently.
  /// Per-cube CNN features, one row of feature_dim() per cube.
  std::vector<T> features(std::span<const Cube* const> cubes) const;
  /// Recurrent/FC trunk and heads on `len` consecutive feature rows.
  Logits<T> head(std::span<const T> feature_rows, int len) const;
  HeadOutput predict(const CubeSequence& seq) const;

  /// Hash of the piecewise-linear decisions of the last forward() (ReLU
  /// signs, pooling argmax, sequence max indices). Finite differences are only
  /// meaningful while it stays fixed.
  std::uint64_t kink_signature() const;

 private:
  struct StageCache {
    Shape4 in_shape{};
    std::vector<T> input;  // stage 0 only
    std::vector<T> pooled;
    std::vector<int> argmax;
    BatchNormCache<T> bn;
    std::vector<T> out;
  };
  struct SeqCache {
    int first_row = 0;
    int len = 0;
    GruCache<T> g1, g2;
    std::vector<T> mask1, mask2;
    std::vector<int> max_t;
    std::vector<T> pooled, a1, a2;
    std::vector<T> trunk;
  };

  int add_param(std::string name, std::vector<int> shape);
  void cnn_forward(std::span<const Cube* const> cubes, bool train, bool update_running,
                   std::vector<T>& features, std::vector<StageCache>* cache) const;
  Logits<T> sequence_forward(std::span<const T> rows, int len, bool train, double dropout,
                             Rng* rng, SeqCache* cache) const;
  void sequence_backward(const SeqCache& c, const Logits<T>& dl, std::span<T> dfeatures);

  std::span<const T> value(int i) const { return params_[static_cast<std::size_t>(i)].value.span(); }
  std::span<T> grad(int i) { return params_[static_cast<std::size_t>(i)].grad.span(); }

  Architecture arch_;
  std::vector<Param<T>> params_;
  std::array<Tensor<T>, 3> running_mean_;
  std::array<Tensor<T>, 3> running_var_;

  // Parameter indices.
  std::array<int, 3> conv_w_{}, conv_b_{}, bn_g_{}, bn_b_{};
  std::array<int, 2> gru_k_{}, gru_r_{}, gru_b_{};
  std::array<int, 2> fc_w_{}, fc_b_{};
  int plaque_w_ = -1, plaque_b_ = -1, stenosis_w_ = -1, stenosis_b_ = -1;
  int joint_w_ = -1, joint_b_ = -1;

  // State of the last forward().
  bool train_pass_ = false;
  std::vector<StageCache> stage_cache_;
  std::vector<SeqCache> seq_cache_;
  std::vector<const Cube*> cube_refs_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace coronary::nn
