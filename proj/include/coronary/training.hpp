#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coronary/nn/checkpoint.hpp"
#include "coronary/nn/network.hpp"
#include "coronary/sampler.hpp"
#include "json.hpp"

namespace coronary {

struct LossSpec {
  double gamma = 0.001;  // L2 coefficient
};

struct LossTerms {
  double plaque_ce = 0.0;
  double stenosis_ce = 0.0;
  double l2 = 0.0;
  double total() const { return 0.5 * (plaque_ce + stenosis_ce) + l2; }
};

/// Cross-entropy with the log clamped at 1e-12. `one_hot` must contain a
/// single 1 and zeros elsewhere.
double cross_entropy(std::span<const double> p, std::span<const double> one_hot);

/// Multi-task loss for one sample: (CE_plaque + CE_stenosis) / 2 + gamma/2 * sum_sq.
LossTerms multitask_loss_terms(const nn::HeadOutput& out, std::span<const double> y_plaque,
                               std::span<const double> y_stenosis, double sum_sq_weights,
                               const LossSpec& spec);
double multitask_loss(const nn::HeadOutput& out, std::span<const double> y_plaque,
                      std::span<const double> y_stenosis, double sum_sq_weights, const LossSpec& spec);

template <typename T>
double sum_squared_weights(const std::vector<nn::Param<T>>& params);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void reset(const std::vector<nn::Param<T>>& params);
};

/// One bias-corrected Adam update from the accumulated gradients.
template <typename T>
void adam_step(std::vector<nn::Param<T>>& params, AdamState<T>& state, const AdamConfig& cfg);

struct TrainConfig {
  std::string model = "rcnn";
  long iterations = 2000;
  int batch_size = kBatchSize;
  double lr = 0.001;
  double dropout = 0.5;
  double gamma = 0.001;
  std::uint64_t seed = 1;
  bool augment = true;
  int log_every = 100;
  int val_segments = 200;  // size of the fixed validation subset
  int threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct CurvePoint {
  long iter = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_plaque_acc = 0.0;
  double val_stenosis_acc = 0.0;
};

struct LearningCurve {
  std::vector<CurvePoint> points;

  void write_csv(const std::filesystem::path& path) const;
  static LearningCurve read_csv(const std::filesystem::path& path);
};

struct BatchStats {
  double loss = 0.0;       // mean data term + L2 term
  double data_loss = 0.0;  // mean data term
  int plaque_correct = 0;
  int stenosis_correct = 0;
  int count = 0;
};

/// Forward pass over a batch, loss evaluation and (optionally) zeroing and
/// accumulating parameter gradients. Multi-task models use the two-head loss, single-task
/// models the 7-class cross-entropy plus the same L2 term.
template <typename T>
BatchStats batch_step(nn::Network<T>& net, const Batch& batch, const LossSpec& spec,
                      const nn::PassOptions& opts, Rng& rng, bool backward);

struct TrainResult {
  nn::Network<float> net;
  AdamState<float> adam;
  LearningCurve curve;
};

/// Two stratified mini-batches and two Adam steps per iteration; the curve is
/// logged every `log_every` iterations and at the last one.
TrainResult train(const nn::Architecture& arch, std::span<const TrainingSegment> train_set,
                  std::span<const TrainingSegment> val_set, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

/// Network snapshot plus optimizer state under "adam/".
nn::Checkpoint to_checkpoint(const TrainResult& r);

/// Segment-level accuracy of sequence predictions, no augmentation.
struct SegmentAccuracy {
  double plaque = 0.0;
  double stenosis = 0.0;
  double loss = 0.0;
};
SegmentAccuracy evaluate_segments(const nn::Network<float>& net, std::span<const TrainingSegment> segs,
                                  const LossSpec& spec);

}  // namespace coronary
