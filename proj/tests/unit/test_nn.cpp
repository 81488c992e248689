#include <cmath>
#include <map>

#include "doctest.h"

#include "coronary/errors.hpp"
#include "coronary/gradcheck.hpp"
#include "coronary/nn/checkpoint.hpp"
#include "coronary/nn/gru.hpp"
#include "coronary/nn/layers.hpp"
#include "coronary/nn/network.hpp"
#include "support.hpp"

using namespace coronary;
using namespace coronary::nn;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  Rng rng = keyed_rng(seed, 7);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Seven nested loops, no im2col.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const int ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3), co = w.dim(0);
  Tensor<double> y({co, D - 2, H - 2, W - 2});
  auto X = [&](int c, int d, int h, int ww) { return x.data[((c * D + d) * H + h) * W + ww]; };
  auto K = [&](int o, int c, int a, int bb, int cc) { return w.data[(((o * ci + c) * 3 + a) * 3 + bb) * 3 + cc]; };
  for (int o = 0; o < co; ++o)
    for (int d = 0; d < D - 2; ++d)
      for (int h = 0; h < H - 2; ++h)
        for (int ww = 0; ww < W - 2; ++ww) {
          double s = b.data[o];
          for (int c = 0; c < ci; ++c)
            for (int a = 0; a < 3; ++a)
              for (int bb = 0; bb < 3; ++bb)
                for (int cc = 0; cc < 3; ++cc) s += K(o, c, a, bb, cc) * X(c, d + a, h + bb, ww + cc);
          y.data[((o * (D - 2) + d) * (H - 2) + h) * (W - 2) + ww] = s;
        }
  return y;
}

long count_prefix(const Network<float>& net, const std::string& prefix) {
  long n = 0;
  for (const auto& p : net.params())
    if (p.name.rfind(prefix, 0) == 0) n += static_cast<long>(p.value.size());
  return n;
}

Architecture arch_of(ModelKind k) {
  Architecture a;
  a.kind = k;
  return a;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("delta kernel convolution crops the input") {
  const Tensor<double> x = random_tensor({1, 5, 6, 7}, 1);
  Tensor<double> w({1, 1, 3, 3, 3});
  w.data[13] = 1.0;
  const Tensor<double> y = conv3d(x, w, Tensor<double>({1}));
  REQUIRE(y.shape == std::vector<int>{1, 3, 4, 5});
  for (int d = 0; d < 3; ++d)
    for (int h = 0; h < 4; ++h)
      for (int ww = 0; ww < 5; ++ww)
        CHECK(y.data[(d * 4 + h) * 5 + ww] == x.data[((d + 1) * 6 + h + 1) * 7 + ww + 1]);
}

TEST_CASE("all-ones kernel on all-ones input gives 27") {
  const Tensor<double> x({1, 5, 5, 5}, 1.0);
  const Tensor<double> y = conv3d(x, Tensor<double>({1, 1, 3, 3, 3}, 1.0), Tensor<double>({1}));
  for (double v : y.data) CHECK(v == 27.0);
}

TEST_CASE("convolution matches the naive loop oracle") {
  for (auto [ci, co] : {std::pair{1, 1}, std::pair{3, 2}}) {
    const Tensor<double> x = random_tensor({ci, 4, 4, 4}, 2);
    const Tensor<double> w = random_tensor({co, ci, 3, 3, 3}, 3);
    const Tensor<double> b = random_tensor({co}, 4);
    const Tensor<double> y = conv3d(x, w, b);
    const Tensor<double> ref = naive_conv(x, w, b);
    REQUIRE(y.shape == ref.shape);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.data[i] - ref.data[i]) <= 1e-5);
  }
  // Same in single precision.
  const Tensor<double> xd = random_tensor({2, 6, 5, 4}, 5), wd = random_tensor({3, 2, 3, 3, 3}, 6), bd = random_tensor({3}, 7);
  Tensor<float> xf(xd.shape), wf(wd.shape), bf(bd.shape);
  std::copy(xd.data.begin(), xd.data.end(), xf.data.begin());
  std::copy(wd.data.begin(), wd.data.end(), wf.data.begin());
  std::copy(bd.data.begin(), bd.data.end(), bf.data.begin());
  const Tensor<float> yf = conv3d(xf, wf, bf);
  const Tensor<double> ref = naive_conv(xd, wd, bd);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(yf.data[i] - ref.data[i]) <= 1e-5);
}

TEST_CASE("convolution shape errors") {
  CHECK_THROWS_AS(conv3d(Tensor<double>({2, 4, 4, 4}), Tensor<double>({1, 1, 3, 3, 3}), Tensor<double>({1})), UsageError);
  CHECK_THROWS_AS(conv3d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 1, 3, 3, 3}), Tensor<double>({1})), UsageError);
}

TEST_CASE("max pooling") {
  const Tensor<double> two = random_tensor({1, 2, 2, 2}, 8);
  const auto p = maxpool3d(two);
  REQUIRE(p.y.size() == 1);
  CHECK(p.y.data[0] == *std::max_element(two.data.begin(), two.data.end()));

  const auto c = maxpool3d(Tensor<double>({1, 4, 4, 4}, 2.5));
  for (double v : c.y.data) CHECK(v == 2.5);
  std::vector<double> dx(64, 0.0);
  std::vector<double> dy(c.y.size(), 1.0);
  maxpool3d_backward<double>(dy, c.argmax, dx);
  for (int d = 0; d < 4; ++d)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 4; ++w) {
        const bool first = d % 2 == 0 && h % 2 == 0 && w % 2 == 0;
        CHECK(dx[static_cast<std::size_t>((d * 4 + h) * 4 + w)] == (first ? 1.0 : 0.0));
      }

  const Tensor<double> r = random_tensor({1, 6, 6, 6}, 9);
  const auto pr = maxpool3d(r);
  REQUIRE(pr.y.shape == std::vector<int>{1, 3, 3, 3});
  for (int d = 0; d < 3; ++d)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) {
        double m = -1e300;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int e = 0; e < 2; ++e) m = std::max(m, r.data[((2 * d + a) * 6 + 2 * h + b) * 6 + 2 * w + e]);
        CHECK(pr.y.data[(d * 3 + h) * 3 + w] == m);
      }
  CHECK(pooled_shape({4, 23, 23, 23}).d == 11);
  CHECK(pooled_shape({4, 9, 9, 9}).d == 4);
}

TEST_CASE("batch norm identity and batch statistics") {
  const int n = 2, c = 3, s = 8;
  const Tensor<double> x = random_tensor({n, c, s}, 10, -2, 3);
  std::vector<double> gamma(c, 1.0), beta(c, 0.0), rm(c, 0.0), rv(c, 1.0), y(x.size());
  batchnorm_forward<double>(x.data, n, c, s, gamma, beta, rm, rv, false, false, y, nullptr);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(x.data[i] / std::sqrt(1 + kBatchNormEps)));

  BatchNormCache<double> cache;
  batchnorm_forward<double>(x.data, n, c, s, gamma, beta, rm, rv, true, true, y, &cache);
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < s; ++k) {
        const std::size_t i = static_cast<std::size_t>((b * c + ch) * s + k);
        mean += y[i];
        sq += y[i] * y[i];
        xm += x.data[i];
        xsq += x.data[i] * x.data[i];
      }
    const double m = n * s;
    CHECK(mean / m == doctest::Approx(0.0).epsilon(1e-12).scale(1));
    CHECK(sq / m == doctest::Approx(1.0).epsilon(1e-4));
    const double bmean = xm / m;
    const double unbiased = (xsq - m * bmean * bmean) / (m - 1);
    CHECK(rm[static_cast<std::size_t>(ch)] == doctest::Approx(0.1 * bmean));
    CHECK(rv[static_cast<std::size_t>(ch)] == doctest::Approx(0.9 + 0.1 * unbiased));
  }
}

TEST_CASE("layer gradient checks") {
  for (const auto& rep : check_layers(1)) {
    INFO(rep.summary());
    CHECK(rep.max_rel_error() <= 1e-3);
    CHECK(rep.kinks() == 0);
  }
}

TEST_CASE("network gradient checks on reduced widths") {
  for (ModelKind k : {ModelKind::Rcnn, ModelKind::Cnn, ModelKind::RcnnSingle, ModelKind::CnnSingle}) {
    const Architecture a = tiny_architecture(k);
    Network<double> net(a);
    net.init(3);
    const auto rep = check_network(net, toy_batch(a, {2, 3, 1}, 3), Mode::Train, 3, 300);
    INFO(rep.summary());
    CHECK(rep.max_rel_error() <= 1e-3);
    CHECK(rep.kinks() <= rep.entries.size() / 20);
  }
}

TEST_CASE("GRU with zero parameters stays at zero") {
  const int in = 4, units = 3, steps = 6;
  std::vector<double> k(in * 3 * units, 0.0), r(units * 3 * units, 0.0), b(3 * units, 0.0);
  const Tensor<double> x = random_tensor({steps, in}, 11);
  std::vector<double> out(steps * units, 1.0);
  gru_forward<double>(x.data, steps, GruWeights<double>{k, r, b, in, units}, out, nullptr);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("GRU sequence of length one is a single cell step") {
  const int in = 3, units = 2;
  const Tensor<double> k = random_tensor({in, 3 * units}, 12), r = random_tensor({units, 3 * units}, 13),
                       b = random_tensor({3 * units}, 14), x = random_tensor({1, in}, 15);
  std::vector<double> out(units);
  gru_forward<double>(x.data, 1, GruWeights<double>{k.data, r.data, b.data, in, units}, out, nullptr);
  for (int u = 0; u < units; ++u) {
    auto pre = [&](int gate) {
      double s = b.data[gate * units + u];
      for (int i = 0; i < in; ++i) s += x.data[i] * k.data[i * 3 * units + gate * units + u];
      return s;
    };
    const double z = sigmoid(pre(0));
    const double cand = std::tanh(pre(2));  // h0 = 0 removes the recurrent terms
    CHECK(out[u] == doctest::Approx((1 - z) * cand).epsilon(1e-12));
  }
  CHECK(gru_param_count(128, 64) == 37056);
  CHECK(gru_param_count(64, 64) == 24768);
}

TEST_CASE("parameter counts") {
  CHECK(parameter_count(arch_of(ModelKind::Rcnn)) == 340295);
  CHECK(parameter_count(arch_of(ModelKind::Cnn)) == 341191);
  CHECK(parameter_count(arch_of(ModelKind::RcnnSingle)) == 340295 - 455 + (64 * 7 + 7));
  CHECK(parameter_count(arch_of(ModelKind::CnnSingle)) == 341191 - 1351 + (192 * 7 + 7));

  const Network<float> rcnn(arch_of(ModelKind::Rcnn));
  CHECK(rcnn.parameter_count() == 340295u);
  CHECK(count_prefix(rcnn, "conv") + count_prefix(rcnn, "bn") == 278016);
  CHECK(count_prefix(rcnn, "conv1") == 896);
  CHECK(count_prefix(rcnn, "conv2") + count_prefix(rcnn, "bn1") == 55360 + 64);
  CHECK(count_prefix(rcnn, "gru1") == 37056);
  CHECK(count_prefix(rcnn, "gru2") == 24768);
  CHECK(count_prefix(rcnn, "plaque") + count_prefix(rcnn, "stenosis") == 455);

  const Network<float> cnn(arch_of(ModelKind::Cnn));
  CHECK(count_prefix(cnn, "fc1") == 24768);
  CHECK(count_prefix(cnn, "fc2") == 37056);
  CHECK(count_prefix(cnn, "plaque") == 772);
  CHECK(count_prefix(cnn, "stenosis") == 579);

  const Network<float> single(arch_of(ModelKind::RcnnSingle));
  CHECK(count_prefix(single, "joint") == 455);
  CHECK(parse_kind("cnn-single") == ModelKind::CnnSingle);
  CHECK_THROWS_AS(parse_kind("mlp"), UsageError);
}

TEST_CASE("initialization") {
  Network<float> a(arch_of(ModelKind::Rcnn)), b(arch_of(ModelKind::Rcnn));
  a.init(42);
  b.init(42);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value.data == b.params()[i].value.data);
  for (int s = 0; s < 3; ++s)
    for (float g : a.param("bn" + std::to_string(s + 1) + ".gamma").value.data) CHECK(g == 1.0f);
  b.init(43);
  CHECK(a.param("conv1.weight").value.data != b.param("conv1.weight").value.data);
}

TEST_CASE("feature shape and zero cube") {
  Network<float> net(arch_of(ModelKind::Rcnn));
  net.init(1);
  CHECK(net.arch().conv_out() == std::array<int, 3>{23, 9, 2});
  CHECK(net.arch().pool_out() == std::array<int, 3>{11, 4, 1});
  const Cube zero(kCubeVoxels, 0.0f);
  const Cube* cubes[] = {&zero};
  const auto f = net.features(cubes);
  REQUIRE(f.size() == 128u);
  for (float v : f) CHECK(v == 0.0f);
  const Cube wrong(100, 0.0f);
  const Cube* bad[] = {&wrong};
  CHECK_THROWS_AS(net.features(bad), UsageError);
}

TEST_CASE("heads are probability vectors for every sequence length") {
  Network<float> net(arch_of(ModelKind::Rcnn));
  net.init(2);
  Rng rng = keyed_rng(2, 2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int len : {1, 2, 7, 25}) {
    CubeSequence seq;
    for (int i = 0; i < len; ++i) {
      Cube c(kCubeVoxels);
      for (auto& v : c) v = u(rng);
      seq.cubes.push_back(std::move(c));
    }
    const HeadOutput h = net.predict(seq);
    double sp = 0, ss = 0;
    for (double p : h.p_plaque) {
      CHECK(p >= 0.0);
      sp += p;
    }
    for (double p : h.p_stenosis) ss += p;
    CHECK(sp == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ss == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(net.predict(CubeSequence{}), UsageError);
}

TEST_CASE("single-task heads decode the joint class") {
  Logits<double> l;
  l.joint = {0.1, 0.2, 0.3, 0.4, 2.0, 0.5, 0.6};
  const HeadOutput h = to_head_output(l);
  REQUIRE(h.p_joint.has_value());
  CHECK(h.plaque_label() == 1);
  CHECK(h.stenosis_label() == 2);
  double s = 0;
  for (double p : h.p_plaque) s += p;
  CHECK(s == doctest::Approx(1.0));
  // Marginal of stenosis 2 is the sum of joint classes 4..6.
  CHECK(h.p_stenosis[2] == doctest::Approx((*h.p_joint)[4] + (*h.p_joint)[5] + (*h.p_joint)[6]));

  Logits<double> z;
  z.joint = {3.0, 0, 0, 0, 0, 0, 0};
  CHECK(to_head_output(z).plaque_label() == 0);
  CHECK(to_head_output(z).stenosis_label() == 0);
}

TEST_CASE("argmax is stable under small perturbations") {
  Rng rng = keyed_rng(8, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    HeadOutput h;
    double s = 0;
    for (auto& p : h.p_plaque) s += (p = u(rng));
    for (auto& p : h.p_plaque) p /= s;
    auto sorted = h.p_plaque;
    std::sort(sorted.rbegin(), sorted.rend());
    const double gap = sorted[0] - sorted[1];
    const int label = h.plaque_label();
    HeadOutput q = h;
    for (auto& p : q.p_plaque) p += (u(rng) - 0.5) * gap * 0.99;
    CHECK(q.plaque_label() == label);
  }
}

TEST_CASE("eval passes do not mutate the network") {
  Network<float> net(arch_of(ModelKind::Cnn));
  net.init(5);
  const Checkpoint before = snapshot(net);
  CubeSequence seq;
  seq.cubes.assign(3, Cube(kCubeVoxels, 0.4f));
  const HeadOutput a = net.predict(seq);
  const HeadOutput b = net.predict(seq);
  CHECK(a.p_plaque == b.p_plaque);
  const Checkpoint after = snapshot(net);
  REQUIRE(before.tensors.size() == after.tensors.size());
  for (std::size_t i = 0; i < before.tensors.size(); ++i) CHECK(before.tensors[i].second.data == after.tensors[i].second.data);
}

TEST_CASE("checkpoint round trip") {
  testutil::TempDir dir("ckpt");
  Network<float> net(arch_of(ModelKind::RcnnSingle));
  net.init(9);
  net.running_mean()[1].data[3] = 0.25f;
  write_checkpoint(snapshot(net), dir / "m.ckpt");
  const Checkpoint c = read_checkpoint(dir / "m.ckpt");
  CHECK(checkpoint_architecture(c).kind == ModelKind::RcnnSingle);
  const Network<float> back = load_network(c);
  for (std::size_t i = 0; i < net.params().size(); ++i) CHECK(back.params()[i].value.data == net.params()[i].value.data);
  CHECK(back.running_mean()[1].data[3] == 0.25f);

  Network<float> other(arch_of(ModelKind::Cnn));
  CHECK_THROWS_AS(restore(c, other), DataError);
  {
    std::ofstream out(dir / "junk.ckpt", std::ios::binary);
    out << "junk";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), DataError);
}

}  // TEST_SUITE
