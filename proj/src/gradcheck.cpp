#include "coronary/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "coronary/errors.hpp"
#include "coronary/nn/gru.hpp"
#include "coronary/nn/layers.hpp"

namespace coronary {

using nn::Shape4;

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) {
    if (!e.kink) m = std::max(m, e.rel_error);
  }
  return m;
}

std::size_t GradCheckReport::kinks() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.kink; }));
}

const GradCheckEntry& GradCheckReport::worst() const {
  if (entries.empty()) throw UsageError("empty gradient check report");
  auto key = [](const GradCheckEntry& e) { return e.kink ? -1.0 : e.rel_error; };
  return *std::max_element(entries.begin(), entries.end(),
                           [&](const auto& a, const auto& b) { return key(a) < key(b); });
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << label << ": " << entries.size() << " coordinates";
  if (!entries.empty()) {
    const auto& w = worst();
    os << ", max rel error " << w.rel_error << " at " << w.name << "[" << w.index << "] (analytic " << w.analytic
       << ", numeric " << w.numeric << ")";
  }
  if (const auto k = kinks(); k > 0) os << ", " << k << " skipped at kinks";
  return os.str();
}

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Checks d(loss)/d(v[k]) for every k against `analytic`.
void check_vector(GradCheckReport& rep, const std::string& name, std::vector<double>& v,
                  const std::vector<double>& analytic, const std::function<double()>& loss, double h) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double keep = v[k];
    v[k] = keep + h;
    const double lp = loss();
    v[k] = keep - h;
    const double lm = loss();
    v[k] = keep;
    const double num = (lp - lm) / (2.0 * h);
    rep.entries.push_back({name, k, analytic[k], num, relative_error(analytic[k], num), h, false});
  }
}

GradCheckReport check_conv(Rng& rng, double h) {
  GradCheckReport rep{"conv3d", {}};
  const Shape4 xs{2, 4, 5, 4};
  const int cout = 3;
  const Shape4 ys{cout, xs.d - 2, xs.h - 2, xs.w - 2};
  auto x = random_vec(static_cast<std::size_t>(xs.count()), rng);
  auto w = random_vec(static_cast<std::size_t>(cout * xs.c * 27), rng);
  auto b = random_vec(static_cast<std::size_t>(cout), rng);
  const auto r = random_vec(static_cast<std::size_t>(ys.count()), rng);
  std::vector<double> y(r.size()), scratch;
  auto loss = [&] {
    nn::conv3d_forward<double>(x, xs, w, b, cout, y, scratch);
    return dot(r, y);
  };
  std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
  nn::conv3d_backward<double>(x, xs, w, cout, r, dw, db, dx, scratch);
  check_vector(rep, "conv3d.input", x, dx, loss, h);
  check_vector(rep, "conv3d.weight", w, dw, loss, h);
  check_vector(rep, "conv3d.bias", b, db, loss, h);
  return rep;
}

GradCheckReport check_pool(Rng& rng, double h) {
  GradCheckReport rep{"maxpool3d", {}};
  const Shape4 xs{2, 4, 5, 4};
  const Shape4 ys = nn::pooled_shape(xs);
  auto x = random_vec(static_cast<std::size_t>(xs.count()), rng);
  const auto r = random_vec(static_cast<std::size_t>(ys.count()), rng);
  std::vector<double> y(r.size());
  std::vector<int> am(r.size());
  auto loss = [&] {
    nn::maxpool3d_forward<double>(x, xs, y, am);
    return dot(r, y);
  };
  loss();
  std::vector<double> dx(x.size(), 0.0);
  nn::maxpool3d_backward<double>(r, am, dx);
  check_vector(rep, "maxpool3d.input", x, dx, loss, h);
  return rep;
}

GradCheckReport check_bn(Rng& rng, double h, bool train) {
  GradCheckReport rep{train ? "batchnorm(train)" : "batchnorm(eval)", {}};
  const int n = 2, c = 3, s = 8;
  auto x = random_vec(static_cast<std::size_t>(n * c * s), rng);
  auto g = random_vec(static_cast<std::size_t>(c), rng, 0.5, 1.5);
  auto be = random_vec(static_cast<std::size_t>(c), rng);
  std::vector<double> rm = random_vec(static_cast<std::size_t>(c), rng, -0.2, 0.2);
  std::vector<double> rv = random_vec(static_cast<std::size_t>(c), rng, 0.5, 1.5);
  const auto r = random_vec(x.size(), rng);
  std::vector<double> y(x.size());
  nn::BatchNormCache<double> cache;
  auto loss = [&] {
    nn::batchnorm_forward<double>(x, n, c, s, g, be, rm, rv, train, false, y, nullptr);
    return dot(r, y);
  };
  nn::batchnorm_forward<double>(x, n, c, s, g, be, rm, rv, train, false, y, &cache);
  std::vector<double> dx(x.size()), dg(g.size(), 0.0), db(be.size(), 0.0);
  nn::batchnorm_backward<double>(r, n, c, s, g, cache, train, dx, dg, db);
  check_vector(rep, "batchnorm.input", x, dx, loss, h);
  check_vector(rep, "batchnorm.gamma", g, dg, loss, h);
  check_vector(rep, "batchnorm.beta", be, db, loss, h);
  return rep;
}

GradCheckReport check_gru(Rng& rng, double h) {
  GradCheckReport rep{"gru", {}};
  const int in = 4, u = 3, steps = 4;
  auto x = random_vec(static_cast<std::size_t>(steps * in), rng);
  auto k = random_vec(static_cast<std::size_t>(in * 3 * u), rng);
  auto rec = random_vec(static_cast<std::size_t>(u * 3 * u), rng);
  auto b = random_vec(static_cast<std::size_t>(3 * u), rng);
  const auto r = random_vec(static_cast<std::size_t>(steps * u), rng);
  std::vector<double> out(r.size());
  auto weights = [&] { return nn::GruWeights<double>{k, rec, b, in, u}; };
  auto loss = [&] {
    nn::gru_forward<double>(x, steps, weights(), out, nullptr);
    return dot(r, out);
  };
  nn::GruCache<double> cache;
  nn::gru_forward<double>(x, steps, weights(), out, &cache);
  std::vector<double> dx(x.size()), dk(k.size(), 0.0), dr(rec.size(), 0.0), db(b.size(), 0.0);
  nn::gru_backward<double>(cache, weights(), r, dk, dr, db, dx);
  check_vector(rep, "gru.input", x, dx, loss, h);
  check_vector(rep, "gru.kernel", k, dk, loss, h);
  check_vector(rep, "gru.recurrent", rec, dr, loss, h);
  check_vector(rep, "gru.bias", b, db, loss, h);
  return rep;
}

GradCheckReport check_linear(Rng& rng, double h) {
  GradCheckReport rep{"linear", {}};
  const int in = 5, out = 3;
  auto x = random_vec(static_cast<std::size_t>(in), rng);
  auto w = random_vec(static_cast<std::size_t>(in * out), rng);
  auto b = random_vec(static_cast<std::size_t>(out), rng);
  const auto r = random_vec(static_cast<std::size_t>(out), rng);
  std::vector<double> y(r.size());
  auto loss = [&] {
    nn::linear_forward<double>(x, w, b, out, y);
    return dot(r, y);
  };
  std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
  nn::linear_backward<double>(x, w, out, r, dw, db, dx);
  check_vector(rep, "linear.input", x, dx, loss, h);
  check_vector(rep, "linear.weight", w, dw, loss, h);
  check_vector(rep, "linear.bias", b, db, loss, h);
  return rep;
}

}  // namespace

std::vector<GradCheckReport> check_layers(std::uint64_t seed, double step) {
  Rng rng = keyed_rng(seed, 0x9c);
  std::vector<GradCheckReport> out;
  out.push_back(check_conv(rng, step));
  out.push_back(check_pool(rng, step));
  out.push_back(check_bn(rng, step, true));
  out.push_back(check_bn(rng, step, false));
  out.push_back(check_gru(rng, step));
  out.push_back(check_linear(rng, step));
  return out;
}

nn::Architecture tiny_architecture(nn::ModelKind kind) {
  nn::Architecture a;
  a.kind = kind;
  a.conv1 = 2;
  a.conv2 = 3;
  a.conv3 = 4;
  a.gru_units = 3;
  a.fc_units = 5;
  return a;
}

Batch toy_batch(const nn::Architecture& arch, const std::vector<int>& lengths, std::uint64_t seed) {
  Rng rng = keyed_rng(seed, 0x70);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::size_t vox = static_cast<std::size_t>(arch.cube) * arch.cube * arch.cube;
  Batch b;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    CubeSequence s;
    for (int t = 0; t < lengths[i]; ++t) {
      Cube c(vox);
      for (auto& v : c) v = u(rng);
      s.cubes.push_back(std::move(c));
      s.centers_mm.push_back(t * kCubeStrideVox * 0.3);
      s.offsets_vox.push_back(Vec3::Zero());
    }
    const JointLabel j = decode_joint(static_cast<int>(i % kJointClasses));
    b.sequences.push_back(std::move(s));
    b.plaque_targets.push_back(j.plaque);
    b.stenosis_targets.push_back(j.stenosis);
  }
  return b;
}

GradCheckReport check_network(nn::Network<double>& net, const Batch& batch, nn::Mode mode, std::uint64_t seed,
                              std::size_t max_coords, double step, const LossSpec& spec) {
  GradCheckReport rep{std::string(nn::kind_name(net.arch().kind)) +
                          (mode == nn::Mode::Train ? " (train mode)" : " (eval mode)"),
                      {}};
  const nn::PassOptions opts{mode, false, 0.5};
  const Rng dropout_rng = keyed_rng(seed, 0xd0);
  auto loss = [&] {
    Rng r = dropout_rng;
    return batch_step(net, batch, spec, opts, r, false).loss;
  };
  {
    Rng r = dropout_rng;
    batch_step(net, batch, spec, opts, r, true);
  }
  const std::uint64_t base = net.kink_signature();

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (param, index)
  auto& params = net.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].value.size(); ++k) coords.emplace_back(p, k);
  }
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng pick = keyed_rng(seed, 0xc0);
    std::shuffle(coords.begin(), coords.end(), pick);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  for (auto [p, k] : coords) {
    double& w = params[p].value.data[k];
    const double keep = w;
    const double an = params[p].grad.data[k];
    GradCheckEntry e{params[p].name, k, an, 0.0, 0.0, step, true};
    for (double h : {step, step / 10, step / 100}) {
      w = keep + h;
      const double lp = loss();
      const bool same_p = net.kink_signature() == base;
      w = keep - h;
      const double lm = loss();
      const bool same_m = net.kink_signature() == base;
      w = keep;
      e.numeric = (lp - lm) / (2.0 * h);
      e.rel_error = relative_error(an, e.numeric);
      e.step = h;
      if (same_p && same_m) {
        e.kink = false;
        break;
      }
    }
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace coronary
