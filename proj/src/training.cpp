#include "coronary/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "coronary/errors.hpp"

namespace coronary {

using nn::HeadOutput;
using nn::Logits;
using nn::Network;
using nn::Param;

namespace {

constexpr double kLogFloor = 1e-12;

void check_one_hot(std::span<const double> y, std::size_t k, const char* what) {
  if (y.size() != k) throw UsageError(std::string(what) + " target must have " + std::to_string(k) + " entries");
  int ones = 0;
  for (double v : y) {
    if (v == 1.0) ++ones;
    else if (v != 0.0) throw UsageError(std::string(what) + " target is not one-hot");
  }
  if (ones != 1) throw UsageError(std::string(what) + " target is not one-hot");
}

}  // namespace

double cross_entropy(std::span<const double> p, std::span<const double> y) {
  double ce = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) ce -= y[i] * std::log(std::max(p[i], kLogFloor));
  }
  return ce;
}

LossTerms multitask_loss_terms(const HeadOutput& out, std::span<const double> y_p, std::span<const double> y_s,
                               double sum_sq, const LossSpec& spec) {
  if (spec.gamma < 0.0) throw UsageError("gamma must be non-negative");
  check_one_hot(y_p, kPlaqueClasses, "plaque");
  check_one_hot(y_s, kStenosisClasses, "stenosis");
  LossTerms t;
  t.plaque_ce = cross_entropy(out.p_plaque, y_p);
  t.stenosis_ce = cross_entropy(out.p_stenosis, y_s);
  t.l2 = 0.5 * spec.gamma * sum_sq;
  return t;
}

double multitask_loss(const HeadOutput& out, std::span<const double> y_p, std::span<const double> y_s,
                      double sum_sq, const LossSpec& spec) {
  return multitask_loss_terms(out, y_p, y_s, sum_sq, spec).total();
}

template <typename T>
double sum_squared_weights(const std::vector<Param<T>>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (T v : p.value.data) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return s;
}

template <typename T>
void AdamState<T>::reset(const std::vector<Param<T>>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.value.size(), T(0));
    v.emplace_back(p.value.size(), T(0));
  }
}

template <typename T>
void adam_step(std::vector<Param<T>>& params, AdamState<T>& st, const AdamConfig& cfg) {
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw UsageError("Adam state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (st.m[i].size() != params[i].value.size() || st.v[i].size() != params[i].value.size() ||
        params[i].grad.size() != params[i].value.size()) {
      throw UsageError("Adam state shape mismatch for " + params[i].name);
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.data;
    const auto& g = params[i].grad.data;
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - cfg.lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

void TrainConfig::validate() const {
  nn::parse_kind(model);
  if (iterations < 0) throw UsageError("iterations must be >= 0");
  if (batch_size <= 0 || batch_size % 4 != 0 || batch_size % 3 != 0) {
    throw UsageError("batch_size must be a positive multiple of 12");
  }
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
  if (gamma < 0.0) throw UsageError("gamma must be non-negative");
  if (log_every <= 0) throw UsageError("log_every must be positive");
  if (val_segments <= 0) throw UsageError("val_segments must be positive");
  if (threads <= 0) throw UsageError("threads must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},       {"iterations", c.iterations}, {"batch_size", c.batch_size},
                     {"lr", c.lr},             {"dropout", c.dropout},       {"gamma", c.gamma},
                     {"seed", c.seed},         {"augment", c.augment},       {"log_every", c.log_every},
                     {"val_segments", c.val_segments}, {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw UsageError("training config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "model") c.model = v.get<std::string>();
    else if (key == "iterations") c.iterations = v.get<long>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "lr") c.lr = v.get<double>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "augment") c.augment = v.get<bool>();
    else if (key == "log_every") c.log_every = v.get<int>();
    else if (key == "val_segments") c.val_segments = v.get<int>();
    else if (key == "threads") c.threads = v.get<int>();
    else throw UsageError("unknown training key '" + key + "'");
  }
}

void LearningCurve::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "iter,train_loss,val_loss,val_plaque_acc,val_stenosis_acc\n";
  os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : points) {
    os << p.iter << ',' << p.train_loss << ',' << p.val_loss << ',' << p.val_plaque_acc << ','
       << p.val_stenosis_acc << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

LearningCurve LearningCurve::read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "iter,train_loss,val_loss,val_plaque_acc,val_stenosis_acc") {
    throw DataError(path.string() + ": unexpected learning-curve header");
  }
  LearningCurve c;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    CurvePoint p;
    if (!(ss >> p.iter >> p.train_loss >> p.val_loss >> p.val_plaque_acc >> p.val_stenosis_acc)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    c.points.push_back(p);
  }
  return c;
}

template <typename T>
BatchStats batch_step(Network<T>& net, const Batch& batch, const LossSpec& spec, const nn::PassOptions& opts,
                      Rng& rng, bool backward) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("empty batch");
  std::vector<const CubeSequence*> refs;
  refs.reserve(n);
  for (const auto& s : batch.sequences) refs.push_back(&s);

  const std::vector<Logits<T>> logits = net.forward(refs, opts, rng);
  const bool single = net.arch().single_task();
  std::vector<Logits<T>> dl(n);
  BatchStats st;
  st.count = static_cast<int>(n);
  const double inv_n = 1.0 / static_cast<double>(n);

  auto softmax_of = [](const std::vector<T>& l) {
    std::vector<double> d(l.begin(), l.end());
    return nn::softmax(d);
  };
  auto grad_of = [&](const std::vector<double>& p, int target, double scale) {
    std::vector<T> g(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      g[k] = static_cast<T>(scale * (p[k] - (static_cast<int>(k) == target ? 1.0 : 0.0)));
    }
    return g;
  };

  double data = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int yp = batch.plaque_targets[i];
    const int ys = batch.stenosis_targets[i];
    Logits<double> ld;
    if (single) {
      const int yj = encode_joint(yp, ys);
      const auto p = softmax_of(logits[i].joint);
      data += -std::log(std::max(p[static_cast<std::size_t>(yj)], kLogFloor));
      dl[i].joint = grad_of(p, yj, inv_n);
      ld.joint = std::vector<double>(logits[i].joint.begin(), logits[i].joint.end());
    } else {
      const auto pp = softmax_of(logits[i].plaque);
      const auto ps = softmax_of(logits[i].stenosis);
      data += 0.5 * (-std::log(std::max(pp[static_cast<std::size_t>(yp)], kLogFloor)) -
                     std::log(std::max(ps[static_cast<std::size_t>(ys)], kLogFloor)));
      dl[i].plaque = grad_of(pp, yp, 0.5 * inv_n);
      dl[i].stenosis = grad_of(ps, ys, 0.5 * inv_n);
      ld.plaque = std::vector<double>(logits[i].plaque.begin(), logits[i].plaque.end());
      ld.stenosis = std::vector<double>(logits[i].stenosis.begin(), logits[i].stenosis.end());
    }
    const HeadOutput h = nn::to_head_output(ld);
    st.plaque_correct += h.plaque_label() == yp;
    st.stenosis_correct += h.stenosis_label() == ys;
  }
  st.data_loss = data * inv_n;
  st.loss = st.data_loss + 0.5 * spec.gamma * sum_squared_weights(net.params());

  if (backward) {
    net.zero_grad();
    net.backward(dl);
    for (auto& p : net.params()) {
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        p.grad.data[k] += static_cast<T>(spec.gamma * static_cast<double>(p.value.data[k]));
      }
    }
  }
  return st;
}

namespace {

// Eval-mode loss and accuracy over pre-extracted sequences.
SegmentAccuracy evaluate_sequences(const Network<float>& net, const std::vector<CubeSequence>& seqs,
                                   const std::vector<SegmentAnnotation>& labels, const LossSpec& spec) {
  SegmentAccuracy acc;
  if (seqs.empty()) return acc;
  double data = 0.0;
  int cp = 0, cs = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const HeadOutput h = net.predict(seqs[i]);
    const int yp = labels[i].plaque, ys = labels[i].stenosis;
    if (h.p_joint) {
      data += -std::log(std::max((*h.p_joint)[static_cast<std::size_t>(encode_joint(yp, ys))], kLogFloor));
    } else {
      data += 0.5 * (-std::log(std::max(h.p_plaque[static_cast<std::size_t>(yp)], kLogFloor)) -
                     std::log(std::max(h.p_stenosis[static_cast<std::size_t>(ys)], kLogFloor)));
    }
    cp += h.plaque_label() == yp;
    cs += h.stenosis_label() == ys;
  }
  const double n = static_cast<double>(seqs.size());
  acc.plaque = cp / n;
  acc.stenosis = cs / n;
  acc.loss = data / n + 0.5 * spec.gamma * sum_squared_weights(net.params());
  return acc;
}

}  // namespace

SegmentAccuracy evaluate_segments(const Network<float>& net, std::span<const TrainingSegment> segs,
                                  const LossSpec& spec) {
  std::vector<CubeSequence> seqs;
  std::vector<SegmentAnnotation> labels;
  Rng unused(0);
  for (const auto& s : segs) {
    seqs.push_back(training_sequence(*s.mpr, s.seg, AugmentOptions{}, unused));
    labels.push_back(s.seg);
  }
  return evaluate_sequences(net, seqs, labels, spec);
}

TrainResult train(const nn::Architecture& arch, std::span<const TrainingSegment> train_set,
                  std::span<const TrainingSegment> val_set, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  TrainResult r{Network<float>(arch), {}, {}};
  r.net.init(cfg.seed);
  r.adam.reset(r.net.params());

  // Fixed validation subset, extracted once without augmentation.
  std::vector<std::size_t> order(val_set.size());
  std::iota(order.begin(), order.end(), 0);
  if (order.size() > static_cast<std::size_t>(cfg.val_segments)) {
    Rng pick = keyed_rng(cfg.seed, 0x7a1);
    std::shuffle(order.begin(), order.end(), pick);
    order.resize(static_cast<std::size_t>(cfg.val_segments));
    std::sort(order.begin(), order.end());
  }
  std::vector<CubeSequence> val_seqs;
  std::vector<SegmentAnnotation> val_labels;
  {
    Rng unused(0);
    for (std::size_t i : order) {
      val_seqs.push_back(training_sequence(*val_set[i].mpr, val_set[i].seg, AugmentOptions{}, unused));
      val_labels.push_back(val_set[i].seg);
    }
  }

  const LossSpec spec{cfg.gamma};
  const AdamConfig adam{cfg.lr};
  AugmentOptions aug;
  aug.enabled = cfg.augment;
  const nn::PassOptions pass{nn::Mode::Train, true, cfg.dropout};
  Rng rng = keyed_rng(cfg.seed, 0x7b2);

  double loss_sum = 0.0;
  int loss_count = 0;
  for (long it = 1; it <= cfg.iterations; ++it) {
    auto [plaque_batch, stenosis_batch] = stratified_batches(train_set, aug, rng, cfg.batch_size);
    for (const Batch* b : {&plaque_batch, &stenosis_batch}) {
      const BatchStats st = batch_step(r.net, *b, spec, pass, rng, true);
      if (!std::isfinite(st.loss)) {
        throw NumericError("training loss became non-finite at iteration " + std::to_string(it));
      }
      adam_step(r.net.params(), r.adam, adam);
      loss_sum += st.loss;
      ++loss_count;
    }
    if (it % cfg.log_every == 0 || it == cfg.iterations) {
      CurvePoint p;
      p.iter = it;
      p.train_loss = loss_sum / loss_count;
      if (!val_seqs.empty()) {
        const SegmentAccuracy v = evaluate_sequences(r.net, val_seqs, val_labels, spec);
        p.val_loss = v.loss;
        p.val_plaque_acc = v.plaque;
        p.val_stenosis_acc = v.stenosis;
      }
      r.curve.points.push_back(p);
      loss_sum = 0.0;
      loss_count = 0;
      if (log) {
        *log << "iter " << it << "  train_loss " << p.train_loss << "  val_loss " << p.val_loss
             << "  val_plaque_acc " << p.val_plaque_acc << "  val_stenosis_acc " << p.val_stenosis_acc
             << std::endl;
      }
    }
  }
  return r;
}

nn::Checkpoint to_checkpoint(const TrainResult& r) {
  nn::Checkpoint c = nn::snapshot(r.net);
  const auto& params = r.net.params();
  for (std::size_t i = 0; i < params.size() && i < r.adam.m.size(); ++i) {
    c.put("adam/m/" + params[i].name, nn::Tensor<float>(params[i].value.shape, r.adam.m[i]));
    c.put("adam/v/" + params[i].name, nn::Tensor<float>(params[i].value.shape, r.adam.v[i]));
  }
  c.put("adam/step", nn::Tensor<float>({1}, std::vector<float>{static_cast<float>(r.adam.step)}));
  return c;
}

template double sum_squared_weights<float>(const std::vector<Param<float>>&);
template double sum_squared_weights<double>(const std::vector<Param<double>>&);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Param<float>>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::vector<Param<double>>&, AdamState<double>&, const AdamConfig&);
template BatchStats batch_step<float>(Network<float>&, const Batch&, const LossSpec&, const nn::PassOptions&, Rng&,
                                      bool);
template BatchStats batch_step<double>(Network<double>&, const Batch&, const LossSpec&, const nn::PassOptions&,
                                       Rng&, bool);

}  // namespace coronary
