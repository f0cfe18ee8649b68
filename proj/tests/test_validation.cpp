#include <doctest.h>

#include <cmath>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"
#include "graphamp/validation.hpp"

using namespace graphamp;

namespace {

Mat kappa2(double k11, double k12, double k22) {
  Mat k(2, 2);
  k << k11, k12, k12, k22;
  return k;
}

}  // namespace

TEST_CASE("Stein identity for identity, tanh and soft threshold") {
  for (const Nonlinearity& f : {identity_fn(), tanh_fn(), soft_threshold_fn(0.5)}) {
    CAPTURE(f.name);
    const auto r = stein_check(f, kappa2(1.0, 0.6, 1.5), 10000, 200, 3);
    REQUIRE(r.size() == 1);
    CHECK(r[0].pass);
    CHECK(r[0].z <= 3.0);
  }
}

TEST_CASE("Stein check with independent fields and closed-form identity") {
  const auto r0 = stein_check(tanh_fn(), kappa2(1.0, 0.0, 1.0), 2000, 100, 5);
  CHECK(r0[0].predicted == 0.0);
  CHECK(r0[0].pass);
  // identity: E[Z1^T Z2] = n kappa12 exactly on the RHS.
  const auto r1 = stein_check(identity_fn(), kappa2(1.0, 0.3, 1.0), 500, 50, 7);
  CHECK(r1[0].predicted == doctest::Approx(150.0));
  CHECK(r1[0].pass);
  Mat k4 = Mat::Identity(4, 4);
  k4(0, 2) = k4(2, 0) = 0.5;
  k4(1, 3) = k4(3, 1) = -0.4;
  const auto r2 = stein_check(group_soft_threshold_fn(0.8), k4, 2000, 60, 11);
  CHECK(r2.size() == 4);
  for (const auto& r : r2) CHECK(r.pass);
  CHECK_THROWS_AS(stein_check(tanh_fn(), Mat::Identity(3, 3), 10, 10, 1), Error);
}

TEST_CASE("GOE projection items at N = 2000") {
  GoeProjectionOptions o;
  o.M = 6;
  const auto reports = goe_projection_checks(o);
  for (const auto& r : reports) {
    CAPTURE(r.id);
    CAPTURE(r.statistic);
    CHECK(r.pass);
  }
}

TEST_CASE("Onsager finite-difference check") {
  Mat x(30, 1);
  for (int i = 0; i < 30; ++i) x(i, 0) = -1.45 + 0.1 * i;
  CHECK(onsager_fd_check(identity_fn(), {x}, {}, 0).statistic < 1e-9);
  CHECK(onsager_fd_check(tanh_fn(), {x}, {}, 0).statistic < 1e-6);
  const Mat S = Mat(Vec::LinSpaced(30, 1.0, 2.0).asDiagonal());
  const CheckReport r = onsager_fd_check(precompose(tanh_fn(), S.inverse()), {x}, {}, 0);
  CHECK(r.pass);
}

TEST_CASE("GOE operator norm") {
  const auto r = opnorm_check({1000}, 2, 1);
  for (const auto& c : r) {
    CHECK(c.statistic >= 1.8);
    CHECK(c.statistic <= 2.2);
    CHECK(c.pass);
  }
  const auto again = opnorm_check({1000}, 2, 1);
  CHECK(again[0].statistic == r[0].statistic);
}
