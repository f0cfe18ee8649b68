#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphamp/amp_engine.hpp"
#include "graphamp/nonlinearity.hpp"

namespace graphamp {

struct CheckReport {
  std::string id;
  std::string params;
  double statistic = 0.0;
  double predicted = 0.0;
  double stderr_ = 0.0;  // 0 when the check uses an absolute tolerance
  double z = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// E[Z1^T f(Z2)] = kappa12 J^T with J = sum_i E[d f_i / d Z2_i], (Z1, Z2) ~ N(0, kappa (x) I_n).
// One report per q x q entry; z uses the paired per-sample difference.
std::vector<CheckReport> stein_check(const Nonlinearity& f, const Mat& kappa, long n, int M, std::uint64_t seed,
                                     double z_threshold = 3.0);

struct GoeProjectionOptions {
  long N = 2000;
  int q = 2;
  int rank = 1;
  int M = 20;
  std::uint64_t seed = 1;
  double z_threshold = 4.0;
  double b_tol = 0.05;
  double d_tol = 0.1;
};

// Items (a) (1/N) V^T A U ~ 0, (b) (1/N)|P A U|_F^2 ~ 0, (c) first moment of A U,
// (d) (1/N) (AU)^T AU ~ G, for columns of U, V with norm sqrt(N).
std::vector<CheckReport> goe_projection_checks(const GoeProjectionOptions& opt);

// Analytic Jacobian trace against central finite differences, entrywise
// relative to the largest FD entry.
CheckReport onsager_fd_check(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt,
                             double rel_tol = 1e-5);

// A function with fixed side data, probed at random Gaussian inputs of the
// given shapes (rows x cols, entries with standard deviation scale[k]).
struct FdCase {
  std::string name;
  Nonlinearity f;
  SideData side;
  std::vector<Shape> shapes;
  std::vector<double> scale;
  int wrt = 0;
};

// Library nonlinearities and denoisers on small shapes.
std::vector<FdCase> library_fd_cases();
// f^t_e of a small instance for t in [1, T], scales taken from the AMP iterates.
std::vector<FdCase> instance_fd_cases(const GraphInstance& inst, int T, const std::string& label);
// Library cases plus every model-zoo family on small instances.
std::vector<FdCase> shipped_fd_cases();
// Worst relative error over `points` random inputs per case; points where the
// FD stencil straddles a kink are redrawn (up to 20 times each).
std::vector<CheckReport> onsager_fd_suite(const std::vector<FdCase>& cases, int points, std::uint64_t seed,
                                          double rel_tol = 1e-5);

// Largest |eigenvalue| by power iteration on A^2; band 2 +- band_c n^{-1/3}.
double goe_opnorm(const Mat& A, int max_iter = 5000, double tol = 1e-7);
std::vector<CheckReport> opnorm_check(const std::vector<long>& n_list, int seeds, std::uint64_t seed = 1,
                                      double band_c = 5.0);

}  // namespace graphamp
