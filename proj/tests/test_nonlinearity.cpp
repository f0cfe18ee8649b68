#include <doctest.h>

#include <cmath>

#include "graphamp/error.hpp"
#include "graphamp/nonlinearity.hpp"
#include "graphamp/prox.hpp"
#include "graphamp/random_ensembles.hpp"

using namespace graphamp;

namespace {

Mat col(std::initializer_list<double> v) {
  Mat m(static_cast<long>(v.size()), 1);
  long i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Bisection root of a monotone scalar function on [lo, hi].
template <class F>
double bisect(F f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(mid) > 0) == (f(hi) > 0))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

// Random points kept away from the kinks of piecewise functions.
Mat away_from(const Mat& x, double kink, double gap) {
  Mat y = x;
  for (long i = 0; i < y.size(); ++i) {
    double& v = y.data()[i];
    if (std::abs(std::abs(v) - kink) < gap) v += (v >= 0 ? 3.0 : -3.0) * gap;
  }
  return y;
}

}  // namespace

TEST_CASE("soft threshold example and trace") {
  auto f = soft_threshold_fn(0.5);
  const Mat x = col({1.0, 0.2, -0.8});
  const Mat y = apply(f, {x});
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(1, 0) == 0.0);
  CHECK(y(2, 0) == doctest::Approx(-0.3));
  const auto tr = jacobian_trace(f, {x}, {}, 0);
  CHECK(tr.analytic);
  CHECK(tr.block(0, 0) == 2.0);
  // Derivative at the kink is taken as 0.
  CHECK(jacobian_trace(f, {col({0.5, -0.5})}, {}, 0).block(0, 0) == 0.0);
}

TEST_CASE("identity and zero functions") {
  const Mat x = standard_normal(Stream(1), 100, 1);
  CHECK(jacobian_trace(identity_fn(), {x}, {}, 0).block(0, 0) == 100.0);
  auto z = zero_fn();
  CHECK(apply(z, {x}).isZero(0.0));
  CHECK(jacobian_trace(z, {x}, {}, 0).block.isZero(0.0));
}

TEST_CASE("finite-difference trace of a function without analytic trace") {
  Nonlinearity c;
  c.name = "constant";
  c.fn = [](const Inputs& in, const SideData&) -> Mat { return Mat::Constant(in[0].rows(), 1, 3.0); };
  const auto tr = jacobian_trace(c, {standard_normal(Stream(2), 10, 1)}, {}, 0);
  CHECK_FALSE(tr.analytic);
  CHECK(std::abs(tr.block(0, 0)) < 1e-12);
}

TEST_CASE("shape errors name the expected and received shapes") {
  Nonlinearity f = identity_fn();
  f.in_shapes = {Shape{4, 2}};
  try {
    apply(f, {Mat::Zero(4, 3)});
    FAIL("no error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("4x2") != std::string::npos);
    CHECK(msg.find("4x3") != std::string::npos);
  }
  CHECK_THROWS_AS(apply(f, {Mat::Zero(4, 2), Mat::Zero(4, 2)}), Error);
}

TEST_CASE("analytic traces agree with finite differences") {
  Stream s(11);
  const Mat x1 = standard_normal(s.sub(1), 40, 1);
  const Mat x3 = standard_normal(s.sub(2), 40, 3);
  SUBCASE("entrywise") {
    for (const auto& f : {tanh_fn(1.3), square_fn(), scaled_identity(-0.7)})
      CHECK(rel(fd_jacobian_trace(f, {x1}, {}, 0), f.trace({x1}, {}, 0)) < 1e-5);
    const Mat xs = away_from(x1, 0.4, 1e-3);
    auto st = soft_threshold_fn(0.4);
    CHECK(rel(fd_jacobian_trace(st, {xs}, {}, 0), st.trace({xs}, {}, 0)) < 1e-5);
    const Mat xr = away_from(x1, 0.0, 1e-3);
    auto r = relu_fn();
    CHECK(rel(fd_jacobian_trace(r, {xr}, {}, 0), r.trace({xr}, {}, 0)) < 1e-5);
  }
  SUBCASE("matrix valued") {
    Mat W(2, 3);
    W << 1, -2, 0.5, 0.3, 0, 4;
    auto lin = linear_fn(W);
    CHECK(rel(fd_jacobian_trace(lin, {x3}, {}, 0), lin.trace({x3}, {}, 0)) < 1e-5);
    auto g = group_soft_threshold_fn(0.8);
    CHECK(rel(fd_jacobian_trace(g, {x3}, {}, 0), g.trace({x3}, {}, 0)) < 1e-5);
    auto e = entrywise(
        "tanh3", [](double v) { return std::tanh(v); }, [](double v) { return 1 - std::tanh(v) * std::tanh(v); });
    CHECK(rel(fd_jacobian_trace(e, {x3}, {}, 0), e.trace({x3}, {}, 0)) < 1e-5);
  }
  SUBCASE("separability probe") {
    auto p = fd_jacobian_probe(tanh_fn(), {x3}, {}, 0);
    CHECK(p.off_row_mass == 0.0);
    CHECK(rel(p.diag_block, tanh_fn().trace({x3}, {}, 0)) < 1e-5);
  }
}

TEST_CASE("wrappers carry the right traces") {
  Stream s(12);
  const Mat x = standard_normal(s, 30, 1);
  const double c = 1.7;
  const Mat B = c * Mat::Identity(30, 30);
  auto f = tanh_fn();
  auto pre = precompose(f, B);
  CHECK(rel(apply(pre, {x}), apply(f, {Mat(c * x)})) < 1e-15);
  CHECK(rel(pre.trace({x}, {}, 0), c * f.trace({Mat(c * x)}, {}, 0)) < 1e-12);

  Mat G = standard_normal(s.sub(3), 30, 30) / std::sqrt(30.0);
  auto pre2 = precompose(f, G);
  CHECK(rel(fd_jacobian_trace(pre2, {x}, {}, 0), pre2.trace({x}, {}, 0)) < 1e-5);
  auto post = postcompose(f, G);
  CHECK(rel(fd_jacobian_trace(post, {x}, {}, 0), post.trace({x}, {}, 0)) < 1e-5);
  auto sc = rescale(f, -2.0);
  CHECK(rel(sc.trace({x}, {}, 0), -2.0 * f.trace({x}, {}, 0)) < 1e-15);
}

TEST_CASE("pseudo-Lipschitz estimates") {
  CHECK(estimate_pl_constant(identity_fn(), {50, 1}, 40).L == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(estimate_pl_constant(soft_threshold_fn(0.3), {50, 1}, 40).L <= 1.0 + 1e-9);
  CHECK(estimate_pl_constant(tanh_fn(2.0), {50, 2}, 40).L <= 2.0 + 1e-9);
  const auto sq = estimate_pl_constant(square_fn(), {50, 1}, 40);
  CHECK(sq.k == 2);
  CHECK(std::isfinite(sq.L));
  CHECK(sq.L <= 2.0);
  CHECK_THROWS_AS(estimate_pl_constant(identity_fn(), {5, 1}, 1), Error);
}

TEST_CASE("prox examples") {
  ProxSpec abs{ProxKind::abs, 0.5};
  CHECK(prox_scalar(abs, 2.0, 0.0).p == doctest::Approx(1.5));
  ProxSpec sq{ProxKind::squared, 1.0};
  CHECK(prox_scalar(sq, 3.0, 0.0).p == doctest::Approx(1.5));
  ProxSpec lg{ProxKind::logistic, 1.0};
  const double oracle = bisect([](double p) { return p - 1.0 / (1.0 + std::exp(p)); }, -5.0, 5.0);
  CHECK(oracle == doctest::Approx(0.4010581375).epsilon(1e-9));
  CHECK(std::abs(prox_scalar(lg, 0.0, 1.0).p - oracle) < 1e-9);
  ProxSpec box{ProxKind::indicator, 1.0, 1.0, -1.0, 1.0};
  CHECK(prox_scalar(box, 3.0, 0.0).p == 1.0);
  CHECK(prox_scalar(box, -0.3, 0.0).p == -0.3);
  ProxSpec l0{ProxKind::l0, 0.5};
  CHECK(prox_scalar(l0, 0.9, 0.0).p == 0.0);
  CHECK(prox_scalar(l0, 1.1, 0.0).p == 1.1);
  CHECK_FALSE(is_convex(ProxKind::l0));
  CHECK(parse_prox_kind("l1") == ProxKind::abs);
  CHECK_THROWS_AS(parse_prox_kind("huber"), Error);
}

TEST_CASE("shifted prox examples") {
  ProxSpec abs{ProxKind::abs, 0.5};
  CHECK(shifted_prox(abs, col({1.0}), col({1.0}))(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(shifted_prox(abs, col({1.0}), col({1.0}))(0, 0) == prox(abs, col({2.0}))(0, 0) - 1.0);
  ProxSpec sq{ProxKind::squared, 1.0};
  CHECK(shifted_prox(sq, col({2.0}), col({0.0}))(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  const Mat v = col({0.3, -2.0, 4.0});
  CHECK(shifted_prox(abs, Mat::Zero(3, 1), v) == prox(abs, v));
}

TEST_CASE("prox optimality and firm non-expansiveness") {
  Stream s(21);
  const std::vector<ProxSpec> specs = {
      {ProxKind::abs, 0.7}, {ProxKind::squared, 2.0}, {ProxKind::logistic, 1.5}, {ProxKind::indicator, 1.0, 1.0, -1, 2}};
  for (const auto& spec : specs) {
    for (int i = 0; i < 200; ++i) {
      const double v = 4.0 * s.normal(), w = 4.0 * s.normal();
      const double y = spec.kind == ProxKind::logistic ? (s.uniform() < 0.5 ? -1.0 : 1.0) : 0.5 * s.normal();
      const auto pv = prox_scalar(spec, v, y), pw = prox_scalar(spec, w, y);
      CHECK((pv.p - pw.p) * (pv.p - pw.p) <= (pv.p - pw.p) * (v - w) + 1e-12);
      if (spec.kind == ProxKind::squared || spec.kind == ProxKind::logistic)
        CHECK(std::abs(pv.p - v + spec.step() * prox_fn_grad(spec, pv.p, y)) < 1e-8);
      if (spec.kind == ProxKind::abs && std::abs(pv.p - y) > 1e-12)
        CHECK(std::abs(pv.p - v + spec.step() * prox_fn_grad(spec, pv.p, y)) < 1e-8);
      // Derivative agrees with a central difference away from kinks.
      const double h = 1e-6;
      const double fd = (prox_scalar(spec, v + h, y).p - prox_scalar(spec, v - h, y).p) / (2 * h);
      if (std::abs(fd - pv.dp) > 1e-4) {
        const double l = (prox_scalar(spec, v, y).p - prox_scalar(spec, v - h, y).p) / h;
        const double r = (prox_scalar(spec, v + h, y).p - prox_scalar(spec, v, y).p) / h;
        CHECK(std::abs(l - r) > 1e-3);
      }
    }
  }
}
