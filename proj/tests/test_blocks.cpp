#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "prn/decoder.hpp"
#include "prn/fusion.hpp"
#include "prn/loss.hpp"
#include "prn/msa.hpp"
#include "prn/prototype_bank.hpp"

using namespace prn;

namespace {

std::array<Tensor3d, 3> random_pyramid(const std::array<int, 3>& ch, int base, Rng& rng) {
  std::array<Tensor3d, 3> p;
  for (int j = 0; j < 3; ++j)
    p[static_cast<std::size_t>(j)] =
        random_tensor(ch[static_cast<std::size_t>(j)], base >> j, base >> j, rng);
  return p;
}

}  // namespace

TEST_CASE("fusion preserves shapes and reduces to identity with zeroed transforms") {
  Rng rng(201);
  FusionBlock<double> fb;
  std::array<int, 3> ch = {4, 6, 8};
  fb.init(ch, rng);
  std::array<Tensor3d, 3> in = random_pyramid(ch, 8, rng);
  auto out = fb.forward(in, nullptr);
  for (int j = 0; j < 3; ++j) {
    CHECK(out[static_cast<std::size_t>(j)].channels() == ch[static_cast<std::size_t>(j)]);
    CHECK(out[static_cast<std::size_t>(j)].h == in[static_cast<std::size_t>(j)].h);
  }

  // Zero every cross-scale transform: each scale passes through untouched.
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < 3; ++d) {
      if (s == d) continue;
      auto ss = static_cast<std::size_t>(s), dd = static_cast<std::size_t>(d);
      fb.pw[ss][dd].W.setZero();
      fb.pw[ss][dd].b.setZero();
      if (s < d) {
        fb.dw[ss][dd].W.setZero();
        fb.dw[ss][dd].b.setZero();
      }
    }
  auto ident = fb.forward(in, nullptr);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    CHECK((ident[js].data - in[js].data).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fusion is linear in its inputs once biases are zeroed") {
  Rng rng(202);
  FusionBlock<double> fb;
  std::array<int, 3> ch = {3, 5, 7};
  fb.init(ch, rng);
  for (int s = 0; s < 3; ++s)
    for (int d = 0; d < 3; ++d) {
      if (s == d) continue;
      auto ss = static_cast<std::size_t>(s), dd = static_cast<std::size_t>(d);
      fb.pw[ss][dd].b.setZero();
      if (s < d) fb.dw[ss][dd].b.setZero();
    }
  std::array<Tensor3d, 3> a = random_pyramid(ch, 8, rng);
  std::array<Tensor3d, 3> b = random_pyramid(ch, 8, rng);
  std::array<Tensor3d, 3> mix;
  const double s1 = 0.7, s2 = -1.3;
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    mix[js] = a[js];
    mix[js].data = s1 * a[js].data + s2 * b[js].data;
  }
  auto fa = fb.forward(a, nullptr);
  auto fbv = fb.forward(b, nullptr);
  auto fm = fb.forward(mix, nullptr);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    MatXd expect = s1 * fa[js].data + s2 * fbv[js].data;
    CHECK((fm[js].data - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("fusion gradients match finite differences") {
  Rng rng(203);
  FusionBlock<double> fb;
  std::array<int, 3> ch = {2, 3, 4};
  fb.init(ch, rng);
  std::array<Tensor3d, 3> in = random_pyramid(ch, 8, rng);
  std::array<Tensor3d, 3> wts = random_pyramid(ch, 8, rng);

  auto loss = [&]() {
    auto out = fb.forward(in, nullptr);
    double s = 0;
    for (int j = 0; j < 3; ++j) {
      auto js = static_cast<std::size_t>(j);
      s += weighted_sum(out[js], wts[js]);
    }
    return s;
  };
  FusionBlockCtx<double> ctx;
  fb.forward(in, &ctx);
  auto gin = fb.backward(ctx, wts);

  std::vector<ParamRef<double>> refs;
  fb.collect("fuse", refs);
  CHECK(fd_check_params(refs, loss) < 1e-7);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    CHECK(fd_check_array(in[js].data.data(), gin[js].data.data(), in[js].data.size(), loss) < 1e-7);
  }
}

TEST_CASE("attention rows are stochastic and match a brute-force reference") {
  Rng rng(204);
  AttentionHead<double> head;
  head.init(12, 8, AttentionDivisor::kTokenDim, rng);  // capped: out-projection in play
  CHECK(head.has_out);
  MatXd tokens(4, 12);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = rng.uniform(-1, 1);

  AttentionHeadCtx<double> ctx;
  head.forward(tokens, &ctx);
  for (Eigen::Index r = 0; r < ctx.attn.rows(); ++r)
    CHECK(ctx.attn.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // Brute-force the attention equation from the cached projections.
  const int n = 4;
  for (int i = 0; i < n; ++i) {
    std::vector<double> e(static_cast<std::size_t>(n));
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double dot = 0;
      for (int d = 0; d < head.embed; ++d) dot += ctx.q(i, d) * ctx.k(j, d);
      e[static_cast<std::size_t>(j)] = dot / static_cast<double>(head.token_dim);
      mx = std::max(mx, e[static_cast<std::size_t>(j)]);
    }
    double z = 0;
    for (double& v : e) {
      v = std::exp(v - mx);
      z += v;
    }
    for (int j = 0; j < n; ++j)
      CHECK(ctx.attn(i, j) == doctest::Approx(e[static_cast<std::size_t>(j)] / z).epsilon(1e-12));
    for (int d = 0; d < head.embed; ++d) {
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += (e[static_cast<std::size_t>(j)] / z) * ctx.v(j, d);
      CHECK(ctx.att_out(i, d) == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("attention head gradients match finite differences") {
  Rng rng(205);
  AttentionHead<double> head;
  head.init(10, 6, AttentionDivisor::kTokenDim, rng);
  MatXd tokens(5, 10);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = rng.uniform(-1, 1);
  MatXd wts(5, 10);
  for (Eigen::Index i = 0; i < wts.size(); ++i) wts.data()[i] = rng.uniform(-1, 1);

  auto loss = [&]() { return (head.forward(tokens, nullptr).array() * wts.array()).sum(); };
  AttentionHeadCtx<double> ctx;
  head.forward(tokens, &ctx);
  MatXd gt = head.backward(ctx, wts);
  std::vector<ParamRef<double>> refs;
  head.collect("head", refs);
  CHECK(fd_check_params(refs, loss) < 1e-6);
  CHECK(fd_check_array(tokens.data(), gt.data(), tokens.size(), loss) < 1e-6);
}

TEST_CASE("msa block picks patch sizes that tile the map") {
  Rng rng(206);
  MsaBlock<double> b8, b4, b2;
  b8.init(4, 8, 8, 16, AttentionDivisor::kTokenDim, rng);
  CHECK(b8.patch_sizes == std::vector<int>{8, 4, 2, 1});
  b4.init(4, 4, 4, 16, AttentionDivisor::kTokenDim, rng);
  CHECK(b4.patch_sizes == std::vector<int>{4, 2, 1});
  b2.init(4, 2, 2, 16, AttentionDivisor::kTokenDim, rng);
  CHECK(b2.patch_sizes == std::vector<int>{2, 1});

  Tensor3d x = random_tensor(4, 8, 8, rng);
  Tensor3d y = b8.forward(x, nullptr, true);
  CHECK(y.channels() == 4);
  CHECK(y.h == 8);
  CHECK(y.w == 8);
}

TEST_CASE("msa block gradients match finite differences") {
  Rng rng(207);
  MsaBlock<double> blk;
  blk.init(2, 4, 4, 8, AttentionDivisor::kTokenDim, rng);
  Tensor3d x = random_tensor(2, 4, 4, rng);
  Tensor3d wts = random_tensor(2, 4, 4, rng);

  auto loss = [&]() { return weighted_sum(blk.forward(x, nullptr, true), wts); };
  MsaBlockCtx<double> ctx;
  blk.forward(x, &ctx, true);
  Tensor3d gx = blk.backward(ctx, wts);
  std::vector<ParamRef<double>> refs;
  blk.collect("msa", refs);
  std::vector<ParamRef<double>> learnable;
  for (auto& r : refs)
    if (r.grad) learnable.push_back(r);
  CHECK(fd_check_params(learnable, loss, 1e-6) < 1e-5);
  CHECK(fd_check_array(x.data.data(), gx.data.data(), x.data.size(), loss, 1e-6) < 1e-5);
}

TEST_CASE("residual block changes channels via its skip projection") {
  Rng rng(208);
  ResidualBlock<double> rb;
  rb.init(6, 2, rng);
  CHECK(rb.has_skip_conv);
  Tensor3d x = random_tensor(6, 5, 5, rng);
  Tensor3d y = rb.forward(x, nullptr, true);
  CHECK(y.channels() == 2);

  Tensor3d wts = random_tensor(2, 5, 5, rng);
  auto loss = [&]() { return weighted_sum(rb.forward(x, nullptr, true), wts); };
  ResidualBlockCtx<double> ctx;
  rb.forward(x, &ctx, true);
  Tensor3d gx = rb.backward(ctx, wts);
  std::vector<ParamRef<double>> refs;
  rb.collect("rb", refs);
  std::vector<ParamRef<double>> learnable;
  for (auto& r : refs)
    if (r.grad) learnable.push_back(r);
  CHECK(fd_check_params(learnable, loss, 1e-6) < 1e-5);
  CHECK(fd_check_array(x.data.data(), gx.data.data(), x.data.size(), loss, 1e-6) < 1e-5);
}

TEST_CASE("decoder emits a unit-range map and passes sampled gradient checks") {
  Rng rng(209);
  Decoder<double> dec;
  dec.init({4, 8, 16}, {8, 4, 2}, 32, -1.5, /*head_gain=*/7.0, rng);
  std::array<Tensor3d, 3> t;
  t[0] = random_tensor(4, 8, 8, rng);
  t[1] = random_tensor(8, 4, 4, rng);
  t[2] = random_tensor(16, 2, 2, rng);

  MatXd map = dec.forward(t, nullptr, true);
  CHECK(map.rows() == 32);
  CHECK(map.cols() == 32);
  CHECK(map.minCoeff() > 0.0);
  CHECK(map.maxCoeff() < 1.0);

  MatXd wts(32, 32);
  for (Eigen::Index i = 0; i < wts.size(); ++i) wts.data()[i] = rng.uniform(-1, 1);
  auto loss = [&]() { return (dec.forward(t, nullptr, true).array() * wts.array()).sum(); };
  DecoderCtx<double> ctx;
  dec.forward(t, &ctx, true);
  auto gt = dec.backward(ctx, wts);

  std::vector<ParamRef<double>> refs;
  dec.collect("dec", refs);
  std::vector<ParamRef<double>> learnable;
  for (auto& r : refs)
    if (r.grad) learnable.push_back(r);
  Rng pick(1);
  CHECK(fd_check_params_sampled(learnable, loss, 6, pick, 1e-6) < 1e-5);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    CHECK(fd_check_array(t[js].data.data(), gt[js].data.data(), std::min<Eigen::Index>(t[js].data.size(), 48),
                         loss, 1e-6) < 1e-5);
  }
}

TEST_CASE("prototype count rounds with a floor of one") {
  CHECK(prototype_count(0.10, 1) == 1);
  CHECK(prototype_count(0.10, 9) == 1);
  CHECK(prototype_count(0.10, 50) == 5);
  CHECK(prototype_count(0.25, 8) == 2);
  CHECK_THROWS(prototype_count(0.0, 5));
  CHECK_THROWS(prototype_count(1.5, 5));
  CHECK_THROWS(prototype_count(0.1, 0));
}

namespace {

FeaturePyramid<float> pyramid_from_point(const VecX<float>& v) {
  // Three tiny scales carved out of one vector so k-means sees fixed shapes.
  FeaturePyramid<float> fp;
  fp.scales[0] = Tensor3<float>(1, 2, 2);
  fp.scales[1] = Tensor3<float>(1, 1, 1);
  fp.scales[2] = Tensor3<float>(1, 1, 1);
  for (int i = 0; i < 4; ++i) fp.scales[0].data(0, i) = v(i % v.size());
  fp.scales[1].data(0, 0) = v(0);
  fp.scales[2].data(0, 0) = v(v.size() - 1);
  return fp;
}

}  // namespace

TEST_CASE("k-means recovers two well-separated clusters and keeps a monotone objective") {
  Rng rng(210);
  // 8 points, two tight clusters far apart, ratio 0.25 -> K = 2.
  std::vector<FeaturePyramid<float>> feats;
  Eigen::Vector2d centers_true[2] = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(50.0, 50.0)};
  std::array<Eigen::Vector2d, 8> pts;
  for (int i = 0; i < 8; ++i) {
    const int c = i < 4 ? 0 : 1;
    pts[static_cast<std::size_t>(i)] =
        centers_true[c] + Eigen::Vector2d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    VecX<float> v(2);
    v << static_cast<float>(pts[static_cast<std::size_t>(i)](0)),
        static_cast<float>(pts[static_cast<std::size_t>(i)](1));
    feats.push_back(pyramid_from_point(v));
  }
  PrototypeBank<float> bank = fit_prototypes(feats, 0.25, 300, 77);
  REQUIRE(bank.k(1) == 2);

  // Scale 2 holds coordinate x only; centers there must equal cluster means of x.
  std::array<double, 2> mean_x = {0, 0};
  for (int i = 0; i < 8; ++i) mean_x[i < 4 ? 0 : 1] += pts[static_cast<std::size_t>(i)](0) / 4.0;
  std::vector<double> got = {bank.scales[1].protos(0, 0), bank.scales[1].protos(1, 0)};
  std::sort(got.begin(), got.end());
  std::sort(mean_x.begin(), mean_x.end());
  CHECK(got[0] == doctest::Approx(mean_x[0]).epsilon(1e-6));
  CHECK(got[1] == doctest::Approx(mean_x[1]).epsilon(1e-6));
}

TEST_CASE("k-means objective trace is non-increasing on random data") {
  Rng rng(211);
  MatX<double> x(40, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  auto res = detail::kmeans(x, 7, 50, Rng(5));
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
    CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-9 * std::max(1.0, res.objective_trace[i - 1]));
  CHECK(res.iterations >= 1);
}

TEST_CASE("nearest prototype breaks ties toward the lowest index") {
  PrototypeBank<float> bank;
  auto& sc = bank.scales[0];
  sc.c = 1;
  sc.h = 1;
  sc.w = 2;
  sc.protos.resize(3, 2);
  sc.protos << 1.0f, 0.0f,  // distance 1 from query
      0.0f, 1.0f,           // distance 1 (tie)
      5.0f, 5.0f;           // far
  Tensor3<float> q(1, 1, 2);
  q.data << 0.0f, 0.0f;
  CHECK(nearest_prototype(bank, 0, q) == 0);

  Tensor3<float> bad(1, 2, 2);
  CHECK_THROWS(nearest_prototype(bank, 0, bad));
}

TEST_CASE("residuals are elementwise deviations from the nearest prototype") {
  Rng rng(212);
  std::vector<FeaturePyramid<float>> feats;
  for (int i = 0; i < 10; ++i) {
    VecX<float> v(3);
    v << static_cast<float>(rng.uniform(0, 1)), static_cast<float>(rng.uniform(0, 1)),
        static_cast<float>(rng.uniform(0, 1));
    feats.push_back(pyramid_from_point(v));
  }
  PrototypeBank<float> bank = fit_prototypes(feats, 0.10, 300, 3);
  REQUIRE(bank.k(0) == 1);

  FeaturePyramid<float> probe = feats[4];
  FeaturePyramid<float> d = residual(bank, probe);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    const auto& sc = bank.scales[js];
    Eigen::Map<const MatXf> p(sc.protos.row(0).data(), probe.scales[js].data.rows(),
                              probe.scales[js].data.cols());
    MatXf expect = (probe.scales[js].data - p).cwiseAbs();
    CHECK((d.scales[js].data - expect).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(d.scales[js].data.minCoeff() >= 0.0f);
  }

  // Squared-deviation alternative.
  bank.residual_kind = ResidualKind::kSquared;
  FeaturePyramid<float> d2 = residual(bank, probe);
  for (int j = 0; j < 3; ++j) {
    auto js = static_cast<std::size_t>(j);
    MatXf expect = d.scales[js].data.array().square();
    CHECK((d2.scales[js].data - expect).cwiseAbs().maxCoeff() < 1e-12f);
  }
}

TEST_CASE("loss matches closed forms on constant maps") {
  // Prediction p everywhere, target 0 everywhere:
  //   smooth-L1 = p^2/2, focal = -(1-alpha) * p^gamma * log(1-p).
  const double p = 0.3, alpha = 0.5, gamma = 4.0, lambda = 5.0;
  MatXd pred = MatXd::Constant(6, 6, p);
  MatXd target = MatXd::Zero(6, 6);
  auto lt = total_loss<double>(pred, target, alpha, gamma, lambda);
  CHECK(lt.smooth_l1 == doctest::Approx(0.5 * p * p).epsilon(1e-12));
  CHECK(lt.focal == doctest::Approx(-(1 - alpha) * std::pow(p, gamma) * std::log(1 - p)).epsilon(1e-12));
  CHECK(lt.total == doctest::Approx(lt.smooth_l1 + lambda * lt.focal).epsilon(1e-12));

  // Target 1 everywhere: focal = -alpha (1-p)^gamma log(p).
  MatXd ones = MatXd::Constant(6, 6, 1.0);
  auto lt1 = total_loss<double>(pred, ones, alpha, gamma, lambda);
  CHECK(lt1.focal == doctest::Approx(-alpha * std::pow(1 - p, gamma) * std::log(p)).epsilon(1e-12));

  // Perfect prediction far from the clamp: loss is tiny and gradient finite.
  MatXd grad;
  auto lt2 = total_loss<double>(ones * 0.999999, ones, alpha, gamma, lambda, &grad);
  CHECK(lt2.total < 1e-10);
  CHECK(std::isfinite(grad.maxCoeff()));
}

TEST_CASE("loss gradient matches finite differences") {
  Rng rng(213);
  MatXd pred(5, 5), target(5, 5);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    pred.data()[i] = rng.uniform(0.05, 0.95);
    target.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  MatXd grad;
  total_loss<double>(pred, target, 0.5, 4.0, 5.0, &grad);
  auto loss = [&]() { return static_cast<double>(total_loss<double>(pred, target, 0.5, 4.0, 5.0).total); };
  CHECK(fd_check_array(pred.data(), grad.data(), pred.size(), loss, 1e-6) < 1e-6);
}

TEST_CASE("loss validates shapes") {
  MatXd a(2, 2), b(2, 3);
  CHECK_THROWS(total_loss<double>(a, b, 0.5, 4.0, 5.0));
}
