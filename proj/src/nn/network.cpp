#include "coronary/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "coronary/errors.hpp"

namespace coronary::nn {

std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Rcnn: return "rcnn";
    case ModelKind::Cnn: return "cnn";
    case ModelKind::RcnnSingle: return "rcnn-single";
    case ModelKind::CnnSingle: return "cnn-single";
  }
  return "?";
}

ModelKind parse_kind(std::string_view s) {
  for (auto k : {ModelKind::Rcnn, ModelKind::Cnn, ModelKind::RcnnSingle, ModelKind::CnnSingle}) {
    if (kind_name(k) == s) return k;
  }
  throw UsageError("unknown model kind '" + std::string(s) +
                   "' (expected rcnn, cnn, rcnn-single or cnn-single)");
}

std::array<int, 3> Architecture::conv_out() const {
  std::array<int, 3> out{};
  int e = cube;
  for (int s = 0; s < 3; ++s) {
    out[s] = e - 2;
    e = (e - 2) / 2;
  }
  return out;
}

std::array<int, 3> Architecture::pool_out() const {
  std::array<int, 3> c = conv_out();
  return {c[0] / 2, c[1] / 2, c[2] / 2};
}

int Architecture::feature_dim() const {
  const int p = pool_out()[2];
  return conv3 * p * p * p;
}

long parameter_count(const Architecture& a) {
  auto conv = [](long cin, long cout) { return cout * cin * 27 + cout; };
  long n = conv(1, a.conv1) + conv(a.conv1, a.conv2) + conv(a.conv2, a.conv3);
  n += 2L * (a.conv1 + a.conv2 + a.conv3);
  const long f = a.feature_dim();
  long trunk;
  if (a.recurrent()) {
    n += gru_param_count(f, a.gru_units) + gru_param_count(a.gru_units, a.gru_units);
    trunk = a.gru_units;
  } else {
    n += (f * a.fc_units + a.fc_units) + (long(a.fc_units) * a.fc_units + a.fc_units);
    trunk = a.fc_units;
  }
  if (a.single_task()) {
    n += trunk * kJointClasses + kJointClasses;
  } else {
    n += trunk * kPlaqueClasses + kPlaqueClasses + trunk * kStenosisClasses + kStenosisClasses;
  }
  return n;
}

namespace {

template <typename T>
int argmax_low(const T& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace

int HeadOutput::plaque_label() const {
  if (p_joint) return decode_joint(argmax_low(*p_joint)).plaque;
  return argmax_low(p_plaque);
}

int HeadOutput::stenosis_label() const {
  if (p_joint) return decode_joint(argmax_low(*p_joint)).stenosis;
  return argmax_low(p_stenosis);
}

HeadOutput to_head_output(const Logits<double>& l) {
  HeadOutput out;
  if (!l.joint.empty()) {
    const auto p = softmax(l.joint);
    std::array<double, kJointClasses> joint{};
    std::copy(p.begin(), p.end(), joint.begin());
    for (int j = 0; j < kJointClasses; ++j) {
      const JointLabel lab = decode_joint(j);
      out.p_plaque[static_cast<std::size_t>(lab.plaque)] += joint[static_cast<std::size_t>(j)];
      out.p_stenosis[static_cast<std::size_t>(lab.stenosis)] += joint[static_cast<std::size_t>(j)];
    }
    out.p_joint = joint;
  } else {
    const auto pp = softmax(l.plaque);
    const auto ps = softmax(l.stenosis);
    std::copy(pp.begin(), pp.end(), out.p_plaque.begin());
    std::copy(ps.begin(), ps.end(), out.p_stenosis.begin());
  }
  return out;
}

template <typename T>
Network<T>::Network(const Architecture& arch) : arch_(arch) {
  if (arch_.conv1 < 1 || arch_.conv2 < 1 || arch_.conv3 < 1 || arch_.gru_units < 1 ||
      arch_.fc_units < 1) {
    throw UsageError("layer widths must be positive");
  }
  if (arch_.conv_out()[2] < 1 || arch_.pool_out()[2] < 1) {
    throw UsageError("cube edge " + std::to_string(arch_.cube) + " is too small for three conv stages");
  }
  const std::array<int, 4> ch{1, arch_.conv1, arch_.conv2, arch_.conv3};
  for (int s = 0; s < 3; ++s) {
    const std::string i = std::to_string(s + 1);
    conv_w_[s] = add_param("conv" + i + ".weight", {ch[s + 1], ch[s], 3, 3, 3});
    conv_b_[s] = add_param("conv" + i + ".bias", {ch[s + 1]});
    bn_g_[s] = add_param("bn" + i + ".gamma", {ch[s + 1]});
    bn_b_[s] = add_param("bn" + i + ".beta", {ch[s + 1]});
    running_mean_[s] = Tensor<T>({ch[s + 1]}, T(0));
    running_var_[s] = Tensor<T>({ch[s + 1]}, T(1));
  }
  const int f = arch_.feature_dim();
  if (arch_.recurrent()) {
    const int u = arch_.gru_units;
    const std::array<int, 2> in{f, u};
    for (int l = 0; l < 2; ++l) {
      const std::string i = std::to_string(l + 1);
      gru_k_[l] = add_param("gru" + i + ".kernel", {in[l], 3 * u});
      gru_r_[l] = add_param("gru" + i + ".recurrent", {u, 3 * u});
      gru_b_[l] = add_param("gru" + i + ".bias", {3 * u});
    }
  } else {
    const int u = arch_.fc_units;
    const std::array<int, 2> in{f, u};
    for (int l = 0; l < 2; ++l) {
      const std::string i = std::to_string(l + 1);
      fc_w_[l] = add_param("fc" + i + ".weight", {u, in[l]});
      fc_b_[l] = add_param("fc" + i + ".bias", {u});
    }
  }
  const int d = arch_.trunk_dim();
  if (arch_.single_task()) {
    joint_w_ = add_param("joint.weight", {kJointClasses, d});
    joint_b_ = add_param("joint.bias", {kJointClasses});
  } else {
    plaque_w_ = add_param("plaque.weight", {kPlaqueClasses, d});
    plaque_b_ = add_param("plaque.bias", {kPlaqueClasses});
    stenosis_w_ = add_param("stenosis.weight", {kStenosisClasses, d});
    stenosis_b_ = add_param("stenosis.bias", {kStenosisClasses});
  }
  for (auto& p : params_) {
    if (p.name.starts_with("bn") && p.name.ends_with(".gamma")) std::fill(p.value.data.begin(), p.value.data.end(), T(1));
  }
}

template <typename T>
int Network<T>::add_param(std::string name, std::vector<int> shape) {
  Param<T> p{std::move(name), Tensor<T>(shape), Tensor<T>(shape)};
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Param<T>& Network<T>::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Param<T>& Network<T>::param(std::string_view name) const {
  return const_cast<Network<T>*>(this)->param(name);
}

template <typename T>
void Network<T>::init(std::uint64_t seed) {
  Rng rng = keyed_rng(seed, 0x1a17);
  auto fill = [&](int idx, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : params_[static_cast<std::size_t>(idx)].value.data) v = static_cast<T>(u(rng));
  };
  auto zero = [&](int idx) {
    auto& d = params_[static_cast<std::size_t>(idx)].value.data;
    std::fill(d.begin(), d.end(), T(0));
  };
  const std::array<int, 3> cin{1, arch_.conv1, arch_.conv2};
  for (int s = 0; s < 3; ++s) {
    fill(conv_w_[s], std::sqrt(6.0 / (cin[s] * 27.0)));
    zero(conv_b_[s]);
    auto& g = params_[static_cast<std::size_t>(bn_g_[s])].value.data;
    std::fill(g.begin(), g.end(), T(1));
    zero(bn_b_[s]);
    std::fill(running_mean_[s].data.begin(), running_mean_[s].data.end(), T(0));
    std::fill(running_var_[s].data.begin(), running_var_[s].data.end(), T(1));
  }
  const double f = arch_.feature_dim();
  if (arch_.recurrent()) {
    const double u = arch_.gru_units;
    fill(gru_k_[0], std::sqrt(3.0 / f));
    fill(gru_k_[1], std::sqrt(3.0 / u));
    for (int l = 0; l < 2; ++l) {
      fill(gru_r_[l], std::sqrt(3.0 / u));
      zero(gru_b_[l]);
    }
  } else {
    fill(fc_w_[0], std::sqrt(6.0 / f));
    fill(fc_w_[1], std::sqrt(6.0 / arch_.fc_units));
    zero(fc_b_[0]);
    zero(fc_b_[1]);
  }
  const double d = arch_.trunk_dim();
  for (int w : {plaque_w_, stenosis_w_, joint_w_}) {
    if (w >= 0) fill(w, std::sqrt(3.0 / d));
  }
  for (int b : {plaque_b_, stenosis_b_, joint_b_}) {
    if (b >= 0) zero(b);
  }
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
}

template <typename T>
void Network<T>::cnn_forward(std::span<const Cube* const> cubes, bool train, bool update_running,
                             std::vector<T>& features, std::vector<StageCache>* cache) const {
  const int n = static_cast<int>(cubes.size());
  const int e0 = arch_.cube;
  const std::size_t cube_vox = static_cast<std::size_t>(e0) * e0 * e0;
  std::vector<T> input(static_cast<std::size_t>(n) * cube_vox);
  for (int i = 0; i < n; ++i) {
    const Cube& c = *cubes[static_cast<std::size_t>(i)];
    if (c.size() != cube_vox) {
      throw UsageError("cube has " + std::to_string(c.size()) + " voxels, expected " +
                       std::to_string(cube_vox));
    }
    std::copy(c.begin(), c.end(), input.begin() + static_cast<std::ptrdiff_t>(i * cube_vox));
  }

  const std::array<int, 4> ch{1, arch_.conv1, arch_.conv2, arch_.conv3};
  const auto conv_e = arch_.conv_out();
  std::vector<T> conv_buf, scratch;
  Shape4 in_shape{1, e0, e0, e0};
  std::vector<T> current = std::move(input);
  if (cache) cache->assign(3, StageCache{});

  for (int s = 0; s < 3; ++s) {
    const Shape4 conv_shape{ch[s + 1], conv_e[s], conv_e[s], conv_e[s]};
    const Shape4 pool_shape = pooled_shape(conv_shape);
    const auto in_count = static_cast<std::size_t>(in_shape.count());
    const auto pool_count = static_cast<std::size_t>(pool_shape.count());
    std::vector<T> pooled(n * pool_count);
    std::vector<int> argmax(n * pool_count);
    conv_buf.resize(static_cast<std::size_t>(conv_shape.count()));

    for (int i = 0; i < n; ++i) {
      conv3d_forward<T>(std::span<const T>(current).subspan(i * in_count, in_count), in_shape,
                        value(conv_w_[s]), value(conv_b_[s]), conv_shape.c, conv_buf, scratch);
      for (auto& v : conv_buf) v = v > T(0) ? v : T(0);
      maxpool3d_forward<T>(conv_buf, conv_shape, std::span<T>(pooled).subspan(i * pool_count, pool_count),
                           std::span<int>(argmax).subspan(i * pool_count, pool_count));
    }

    std::vector<T> out(pooled.size());
    auto& rm = const_cast<Tensor<T>&>(running_mean_[s]);
    auto& rv = const_cast<Tensor<T>&>(running_var_[s]);
    batchnorm_forward<T>(pooled, n, pool_shape.c, pool_shape.spatial(), value(bn_g_[s]), value(bn_b_[s]),
                         rm.span(), rv.span(), train, train && update_running, out,
                         cache ? &(*cache)[s].bn : nullptr);
    if (cache) {
      auto& sc = (*cache)[s];
      sc.in_shape = in_shape;
      sc.pooled = std::move(pooled);
      sc.argmax = std::move(argmax);
      sc.out = out;
      // conv1 weight gradient needs the raw cubes again.
      if (s == 0) sc.input = std::move(current);
    }
    current = std::move(out);
    in_shape = pool_shape;
  }
  features = std::move(current);
}

template <typename T>
Logits<T> Network<T>::sequence_forward(std::span<const T> rows, int len, bool train, double dropout,
                                       Rng* rng, SeqCache* cache) const {
  const int f = arch_.feature_dim();
  const bool drop = train && dropout > 0.0;
  std::vector<T> trunk;

  if (arch_.recurrent()) {
    const int u = arch_.gru_units;
    const GruWeights<T> w1{value(gru_k_[0]), value(gru_r_[0]), value(gru_b_[0]), f, u};
    const GruWeights<T> w2{value(gru_k_[1]), value(gru_r_[1]), value(gru_b_[1]), u, u};
    std::vector<T> h1(static_cast<std::size_t>(len) * u), h2(static_cast<std::size_t>(len) * u);
    gru_forward<T>(rows, len, w1, h1, cache ? &cache->g1 : nullptr);

    std::bernoulli_distribution keep(1.0 - dropout);
    const T scale = drop ? static_cast<T>(1.0 / (1.0 - dropout)) : T(1);
    std::vector<T> mask1;
    if (drop) {
      mask1.resize(h1.size());
      for (auto& m : mask1) m = keep(*rng) ? scale : T(0);
      for (std::size_t i = 0; i < h1.size(); ++i) h1[i] *= mask1[i];
    }
    gru_forward<T>(h1, len, w2, h2, cache ? &cache->g2 : nullptr);
    trunk.assign(h2.end() - u, h2.end());
    std::vector<T> mask2;
    if (drop) {
      mask2.resize(static_cast<std::size_t>(u));
      for (auto& m : mask2) m = keep(*rng) ? scale : T(0);
      for (int j = 0; j < u; ++j) trunk[static_cast<std::size_t>(j)] *= mask2[static_cast<std::size_t>(j)];
    }
    if (cache) {
      cache->mask1 = std::move(mask1);
      cache->mask2 = std::move(mask2);
    }
  } else {
    const int u = arch_.fc_units;
    std::vector<T> pooled(static_cast<std::size_t>(f));
    std::vector<int> max_t(static_cast<std::size_t>(f), 0);
    for (int j = 0; j < f; ++j) {
      T best = rows[static_cast<std::size_t>(j)];
      for (int t = 1; t < len; ++t) {
        const T v = rows[static_cast<std::size_t>(t) * f + j];
        if (v > best) {
          best = v;
          max_t[static_cast<std::size_t>(j)] = t;
        }
      }
      pooled[static_cast<std::size_t>(j)] = best;
    }
    std::vector<T> a1(static_cast<std::size_t>(u)), a2(static_cast<std::size_t>(u));
    linear_forward<T>(pooled, value(fc_w_[0]), value(fc_b_[0]), u, a1);
    for (auto& v : a1) v = v > T(0) ? v : T(0);
    linear_forward<T>(a1, value(fc_w_[1]), value(fc_b_[1]), u, a2);
    for (auto& v : a2) v = v > T(0) ? v : T(0);
    trunk = a2;
    if (cache) {
      cache->max_t = std::move(max_t);
      cache->pooled = std::move(pooled);
      cache->a1 = std::move(a1);
      cache->a2 = std::move(a2);
    }
  }

  Logits<T> out;
  if (arch_.single_task()) {
    out.joint.resize(kJointClasses);
    linear_forward<T>(trunk, value(joint_w_), value(joint_b_), kJointClasses, out.joint);
  } else {
    out.plaque.resize(kPlaqueClasses);
    out.stenosis.resize(kStenosisClasses);
    linear_forward<T>(trunk, value(plaque_w_), value(plaque_b_), kPlaqueClasses, out.plaque);
    linear_forward<T>(trunk, value(stenosis_w_), value(stenosis_b_), kStenosisClasses, out.stenosis);
  }
  if (cache) {
    cache->len = len;
    cache->trunk = std::move(trunk);
  }
  return out;
}

template <typename T>
std::vector<Logits<T>> Network<T>::forward(std::span<const CubeSequence* const> batch,
                                           const PassOptions& opts, Rng& rng) {
  cube_refs_.clear();
  seq_cache_.assign(batch.size(), SeqCache{});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& seq = *batch[i];
    if (seq.cubes.empty()) throw UsageError("empty cube sequence");
    seq_cache_[i].first_row = static_cast<int>(cube_refs_.size());
    for (const auto& c : seq.cubes) cube_refs_.push_back(&c);
  }
  const bool train = opts.mode == Mode::Train;
  train_pass_ = train;
  std::vector<T> feats;
  cnn_forward(cube_refs_, train, opts.update_running_stats, feats, &stage_cache_);

  const auto f = static_cast<std::size_t>(arch_.feature_dim());
  std::vector<Logits<T>> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& c = seq_cache_[i];
    const int len = static_cast<int>(batch[i]->cubes.size());
    out.push_back(sequence_forward(std::span<const T>(feats).subspan(c.first_row * f, len * f), len, train,
                                   opts.dropout, &rng, &c));
  }
  return out;
}

template <typename T>
void Network<T>::sequence_backward(const SeqCache& c, const Logits<T>& dl, std::span<T> dfeat) {
  const int f = arch_.feature_dim();
  const int d = arch_.trunk_dim();
  std::vector<T> dtrunk(static_cast<std::size_t>(d), T(0));
  if (arch_.single_task()) {
    linear_backward<T>(c.trunk, value(joint_w_), kJointClasses, dl.joint, grad(joint_w_), grad(joint_b_), dtrunk);
  } else {
    linear_backward<T>(c.trunk, value(plaque_w_), kPlaqueClasses, dl.plaque, grad(plaque_w_),
                       grad(plaque_b_), dtrunk);
    linear_backward<T>(c.trunk, value(stenosis_w_), kStenosisClasses, dl.stenosis, grad(stenosis_w_),
                       grad(stenosis_b_), dtrunk);
  }

  const int len = c.len;
  if (arch_.recurrent()) {
    const int u = arch_.gru_units;
    const GruWeights<T> w1{value(gru_k_[0]), value(gru_r_[0]), value(gru_b_[0]), f, u};
    const GruWeights<T> w2{value(gru_k_[1]), value(gru_r_[1]), value(gru_b_[1]), u, u};
    std::vector<T> dh2(static_cast<std::size_t>(len) * u, T(0));
    for (int j = 0; j < u; ++j) {
      const T m = c.mask2.empty() ? T(1) : c.mask2[static_cast<std::size_t>(j)];
      dh2[static_cast<std::size_t>(len - 1) * u + j] = dtrunk[static_cast<std::size_t>(j)] * m;
    }
    std::vector<T> dh1(dh2.size());
    gru_backward<T>(c.g2, w2, dh2, grad(gru_k_[1]), grad(gru_r_[1]), grad(gru_b_[1]), dh1);
    if (!c.mask1.empty()) {
      for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] *= c.mask1[i];
    }
    gru_backward<T>(c.g1, w1, dh1, grad(gru_k_[0]), grad(gru_r_[0]), grad(gru_b_[0]), dfeat);
  } else {
    const int u = arch_.fc_units;
    std::vector<T> da2(dtrunk), da1(static_cast<std::size_t>(u), T(0)), dpool(static_cast<std::size_t>(f), T(0));
    for (int j = 0; j < u; ++j) {
      if (c.a2[static_cast<std::size_t>(j)] <= T(0)) da2[static_cast<std::size_t>(j)] = T(0);
    }
    linear_backward<T>(c.a1, value(fc_w_[1]), u, da2, grad(fc_w_[1]), grad(fc_b_[1]), da1);
    for (int j = 0; j < u; ++j) {
      if (c.a1[static_cast<std::size_t>(j)] <= T(0)) da1[static_cast<std::size_t>(j)] = T(0);
    }
    linear_backward<T>(c.pooled, value(fc_w_[0]), u, da1, grad(fc_w_[0]), grad(fc_b_[0]), dpool);
    std::fill(dfeat.begin(), dfeat.end(), T(0));
    for (int j = 0; j < f; ++j) {
      dfeat[static_cast<std::size_t>(c.max_t[static_cast<std::size_t>(j)]) * f + j] += dpool[static_cast<std::size_t>(j)];
    }
  }
}

template <typename T>
void Network<T>::backward(std::span<const Logits<T>> dlogits) {
  if (dlogits.size() != seq_cache_.size()) throw UsageError("backward() batch size mismatch");
  const auto f = static_cast<std::size_t>(arch_.feature_dim());
  const std::size_t n = cube_refs_.size();
  std::vector<T> dout(n * f, T(0));
  for (std::size_t i = 0; i < seq_cache_.size(); ++i) {
    const auto& c = seq_cache_[i];
    sequence_backward(c, dlogits[i], std::span<T>(dout).subspan(c.first_row * f, c.len * f));
  }

  const std::array<int, 4> ch{1, arch_.conv1, arch_.conv2, arch_.conv3};
  const auto conv_e = arch_.conv_out();
  std::vector<T> dconv, scratch;
  for (int s = 2; s >= 0; --s) {
    const StageCache& sc = stage_cache_[static_cast<std::size_t>(s)];
    const Shape4 conv_shape{ch[s + 1], conv_e[s], conv_e[s], conv_e[s]};
    const Shape4 pool_shape = pooled_shape(conv_shape);
    const auto pool_count = static_cast<std::size_t>(pool_shape.count());
    const auto in_count = static_cast<std::size_t>(sc.in_shape.count());

    std::vector<T> dpool(dout.size());
    batchnorm_backward<T>(dout, static_cast<int>(n), pool_shape.c, pool_shape.spatial(), value(bn_g_[s]),
                          sc.bn, train_pass_, dpool, grad(bn_g_[s]), grad(bn_b_[s]));

    const std::vector<T>& input = s == 0 ? sc.input : stage_cache_[static_cast<std::size_t>(s - 1)].out;
    std::vector<T> din(s > 0 ? n * in_count : 0, T(0));
    dconv.resize(static_cast<std::size_t>(conv_shape.count()));
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(dconv.begin(), dconv.end(), T(0));
      for (std::size_t o = 0; o < pool_count; ++o) {
        const std::size_t k = i * pool_count + o;
        if (sc.pooled[k] > T(0)) dconv[static_cast<std::size_t>(sc.argmax[k])] += dpool[k];
      }
      conv3d_backward<T>(std::span<const T>(input).subspan(i * in_count, in_count), sc.in_shape,
                         value(conv_w_[s]), conv_shape.c, dconv, grad(conv_w_[s]), grad(conv_b_[s]),
                         s > 0 ? std::span<T>(din).subspan(i * in_count, in_count) : std::span<T>(),
                         scratch);
    }
    dout = std::move(din);
  }
}

template <typename T>
std::vector<T> Network<T>::features(std::span<const Cube* const> cubes) const {
  std::vector<T> feats;
  cnn_forward(cubes, false, false, feats, nullptr);
  return feats;
}

template <typename T>
Logits<T> Network<T>::head(std::span<const T> feature_rows, int len) const {
  if (len < 1) throw UsageError("empty cube sequence");
  return sequence_forward(feature_rows, len, false, 0.0, nullptr, nullptr);
}

template <typename T>
HeadOutput Network<T>::predict(const CubeSequence& seq) const {
  if (seq.cubes.empty()) throw UsageError("empty cube sequence");
  std::vector<const Cube*> refs;
  for (const auto& c : seq.cubes) refs.push_back(&c);
  const Logits<T> l = head(features(refs), static_cast<int>(refs.size()));
  Logits<double> d{{l.plaque.begin(), l.plaque.end()},
                   {l.stenosis.begin(), l.stenosis.end()},
                   {l.joint.begin(), l.joint.end()}};
  return to_head_output(d);
}

template <typename T>
std::uint64_t Network<T>::kink_signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (const auto& sc : stage_cache_) {
    for (std::size_t i = 0; i < sc.argmax.size(); ++i) {
      mix(static_cast<std::uint64_t>(sc.argmax[i]) * 2 + (sc.pooled[i] > T(0)));
    }
  }
  for (const auto& c : seq_cache_) {
    for (int t : c.max_t) mix(static_cast<std::uint64_t>(t));
    for (T v : c.a1) mix(v > T(0));
    for (T v : c.a2) mix(v > T(0));
  }
  return h;
}

template class Network<float>;
template class Network<double>;

}  // namespace coronary::nn
