#include <doctest.h>

#include <cmath>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"
#include "graphamp/state_evolution.hpp"

using namespace graphamp;

namespace {

const EdgeId VV{"v", "v"};
const EdgeId VW{"v", "w"};
const EdgeId WV{"w", "v"};

double gh_expect(const std::function<double(double)>& g, int order = 61) {
  const auto q = gauss_hermite(order);
  double s = 0.0;
  for (long i = 0; i < q.nodes.size(); ++i) s += q.weights(i) * g(q.nodes(i));
  return s;
}

// Loop instance with f^0 = identity on x0 normalized to ||x0||^2 = N, then fn.
GraphInstance loop_then(int n, Nonlinearity fn, std::uint64_t mseed = 1) {
  GraphInstance inst;
  inst.name = "loop";
  inst.graph = loop_graph(n);
  inst.matrices[VV] = sample_goe(n, n, SeededRng(mseed).stream("matrix"));
  Mat x0 = standard_normal(SeededRng(99).stream("x0"), n, 1);
  inst.x0[VV] = x0 * std::sqrt(static_cast<double>(n)) / x0.norm();
  inst.family = [fn](int t, const EdgeId&, const StepContext&) { return t == 0 ? identity_fn() : fn; };
  return inst;
}

}  // namespace

TEST_CASE("Gauss-Hermite moments") {
  const auto q = gauss_hermite(61);
  CHECK(q.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(gh_expect([](double z) { return z * z; }) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gh_expect([](double z) { return z * z * z * z; }) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(gh_expect([](double z) { return std::cos(z); }) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(std::abs(gh_expect([](double z) { return z > 0 ? z * z : 0.0; }) - 0.5) < 1e-3);
}

TEST_CASE("covariance root and Gaussian family sampler") {
  Mat K(2, 2);
  K << 2.0, 0.6, 0.6, 1.0;
  const Mat R = covariance_root(K);
  CHECK((R * R.transpose() - K).norm() < 1e-12);

  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  try {
    covariance_root(bad);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("min eigenvalue -1") != std::string::npos);
  }

  const long n = 20000;
  SUBCASE("unit variance") {
    const Mat Z = sample_gaussian_family(covariance_root(Mat::Ones(1, 1)), n, Stream(1));
    const double var = Z.squaredNorm() / n;
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
  }
  SUBCASE("perfectly correlated times") {
    const Mat Z = sample_gaussian_family(covariance_root(Mat::Ones(2, 2)), n, Stream(2));
    CHECK((Z.col(0) - Z.col(1)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("generic two-time covariance") {
    const Mat Z = sample_gaussian_family(R, n, Stream(3));
    const Mat emp = Z.transpose() * Z / n;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const double se = std::sqrt((K(a, a) * K(b, b) + K(a, b) * K(a, b)) / n);
        CHECK(std::abs(emp(a, b) - K(a, b)) < 3.0 * se);
      }
  }
}

TEST_CASE("initial covariance is the plug-in Gram matrix") {
  SUBCASE("identity") {
    auto inst = loop_then(100, identity_fn());
    StateEvolution se(inst, {.M = 10});
    se.step();
    CHECK(se.kappa(VV)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero function is degenerate") {
    auto inst = loop_then(100, identity_fn());
    inst.family = stationary({{VV, zero_fn()}});
    StateEvolution se(inst, {.M = 10});
    se.run(3);
    CHECK(se.degenerate(VV));
    CHECK(se.kappa(VV).isZero(0.0));
  }
  SUBCASE("soft threshold at large N against quadrature") {
    const int n = 100000;
    GraphInstance inst;
    inst.name = "st";
    inst.graph = loop_graph(n);
    inst.x0[VV] = standard_normal(Stream(5), n, 1);
    inst.family = stationary({{VV, soft_threshold_fn(0.5)}});
    StateEvolution se(inst, {.M = 10});
    se.step();
    const double k11 = se.kappa(VV)(0, 0);
    const double oracle = gh_expect([](double z) { return std::pow(soft_threshold(z, 0.5), 2); }, 201);
    const double fourth = gh_expect([](double z) { return std::pow(soft_threshold(z, 0.5), 4); }, 201);
    CHECK(std::abs(k11 - oracle) < 4.0 * std::sqrt((fourth - oracle * oracle) / n));
  }
}

TEST_CASE("one step examples") {
  SUBCASE("identity is a fixed point") {
    auto inst = loop_then(200, identity_fn());
    StateEvolution se(inst, {.M = 400, .seed = 3});
    se.run(3);
    for (int t = 2; t <= 3; ++t)
      CHECK(std::abs(se.kappa_block(VV, t, t)(0, 0) - 1.0) < 3.0 * se.kappa_sem(VV)(t - 1, t - 1) + 1e-12);
  }
  SUBCASE("relu halves unit variance") {
    auto inst = loop_then(200, relu_fn());
    StateEvolution se(inst, {.M = 400, .seed = 4});
    se.run(2);
    CHECK(std::abs(se.kappa(VV)(1, 1) - 0.5) < 3.0 * se.kappa_sem(VV)(1, 1));
    CHECK(se.kappa(VV)(0, 1) == se.kappa(VV)(1, 0));
  }
  SUBCASE("zero after the first step") {
    auto inst = loop_then(50, zero_fn());
    StateEvolution se(inst, {.M = 20});
    se.run(3);
    CHECK(se.kappa(VV).bottomRightCorner(2, 2).isZero(0.0));
    CHECK(se.kappa(VV).row(2).isZero(0.0));
  }
}

TEST_CASE("covariance stays PSD and symmetric") {
  auto inst = loop_then(80, tanh_fn(1.2));
  StateEvolution se(inst, {.M = 200, .seed = 8});
  se.run(6);
  const Mat& K = se.kappa(VV);
  CHECK(K.rows() == 6);
  CHECK((K - K.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(K);
  CHECK(es.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("Monte Carlo error scales like 1/sqrt(M) and results do not depend on workers") {
  auto inst = loop_then(60, tanh_fn(1.0));
  std::vector<double> sems;
  std::vector<Mat> kap;
  for (long M : {1000L, 4000L, 16000L}) {
    StateEvolution se(inst, {.M = M, .seed = 11});
    se.run(3);
    sems.push_back(se.kappa_sem(VV)(2, 2));
    kap.push_back(se.kappa(VV));
  }
  CHECK(sems[0] / sems[1] == doctest::Approx(2.0).epsilon(0.25));
  CHECK(sems[1] / sems[2] == doctest::Approx(2.0).epsilon(0.25));
  // Doubling M: agreement within combined standard errors.
  CHECK(std::abs(kap[0](2, 2) - kap[1](2, 2)) < 4.0 * std::hypot(sems[0], sems[1]));

  StateEvolution a(inst, {.M = 300, .seed = 2, .workers = 1});
  StateEvolution b(inst, {.M = 300, .seed = 2, .workers = 3});
  a.run(3);
  b.run(3);
  CHECK(a.kappa(VV) == b.kappa(VV));
}

TEST_CASE("fields of different edges are independent") {
  const int n = 40;
  GraphInstance inst;
  inst.name = "asym";
  inst.graph = asymmetric_graph(n, n);
  inst.matrices[VW] = sample_iid(n, n, 2 * n, Stream(1));
  inst.x0[VW] = standard_normal(Stream(2), n, 1);
  inst.x0[WV] = standard_normal(Stream(3), n, 1);
  inst.family = stationary({{VW, identity_fn()}, {WV, identity_fn()}});
  StateEvolution se(inst, {.M = 100, .seed = 5});
  se.run(1);
  Observable cross;
  cross.name = "cross";
  cross.fn = [](const IterateView& v, int t) {
    return (v.x(VW, t).array() * v.x(WV, t).array()).sum() / static_cast<double>(v.N());
  };
  const auto st = se.observe({cross}, 4000, 17);
  CHECK(std::abs(st[0].mean[1]) <= 3.0 * st[0].sem[1]);
}

TEST_CASE("compare agrees with AMP on a GOE loop") {
  const int n = 2000;
  auto make = [&](std::uint64_t mseed) { return loop_then(n, tanh_fn(1.5), mseed); };
  auto base = make(1);
  StateEvolution se(base, {.M = 200, .seed = 21});
  se.run(3);
  const auto st = se.observe({sq_norm_obs(VV), constant_obs(0.25)}, 200, 5);
  std::vector<std::vector<double>> amp, amp_const;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto inst = make(s);
    auto traj = run(inst, 3);
    amp.push_back(graphamp::observe(inst, traj, sq_norm_obs(VV)));
    amp_const.push_back(graphamp::observe(inst, traj, constant_obs(0.25)));
  }
  for (const auto& row : compare(amp, st[0])) {
    CHECK(row.z <= 4.0);
    CHECK(row.pass);
  }
  for (const auto& row : compare(amp_const, st[1])) {
    CHECK(row.amp_mean == row.se_mean);
    CHECK(row.z == 0.0);
  }
  // t = 1: the observable is the trace of kappa^{1,1}.
  CHECK(st[0].mean[1] == doctest::Approx(se.kappa(VV)(0, 0)).epsilon(0.05));
}

TEST_CASE("expected Onsager terms match the engine") {
  const int n = 1500;
  auto inst = loop_then(n, tanh_fn(1.0));
  StateEvolution se(inst, {.M = 100, .seed = 1});
  se.run(3);
  auto traj = run(inst, 3);
  for (int s = 0; s < 3; ++s)
    CHECK(se.context().onsager(VV, s)(0, 0) == doctest::Approx(traj.at(s, VV).b(0, 0)).epsilon(0.02));
}
