#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "graphamp/amp_engine.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

// Nodes and weights for E[g(Z)], Z ~ N(0,1), by Golub-Welsch.
struct Quadrature {
  Vec nodes;
  Vec weights;
};
Quadrature gauss_hermite(int order = 61);

struct SEOptions {
  long M = 2000;
  std::uint64_t seed = 0;
  int workers = 1;
  double jitter = 1e-10;  // relative to trace / dim
  double psd_tol = 1e-8;
};

// Symmetric root R with R R^T = K + jitter * trace(K)/dim * I.
Mat covariance_root(const Mat& K, double jitter = 1e-10, double psd_tol = 1e-8);
// n i.i.d. rows of a centered Gaussian with covariance R R^T; n x R.rows().
Mat sample_gaussian_family(const Mat& root, long n, Stream s);

struct SEObservableStats {
  std::string name;
  std::string edge;
  std::vector<double> mean;    // per t
  std::vector<double> sem;  // standard error of the mean, per t
};

struct CompareRow {
  int t = 0;
  std::string observable;
  double amp_mean = 0.0;
  double amp_std = 0.0;
  double se_mean = 0.0;
  double se_std = 0.0;
  double z = 0.0;
  bool pass = false;
};

struct CompareGate {
  double rel_tol = 0.05;
  double z_max = 4.0;
};

// amp_values[seed][t]; passes when within rel_tol relative or z <= z_max.
std::vector<CompareRow> compare(const std::vector<std::vector<double>>& amp_values, const SEObservableStats& se,
                                CompareGate gate = {});

// Monte Carlo state evolution of a graph instance, conditioned on its x0 and
// side data. After run(T) the covariance of edge e covers times 1..T.
class StateEvolution {
 public:
  StateEvolution(const GraphInstance& inst, SEOptions opt = {});
  ~StateEvolution();

  int t() const { return t_; }
  void step();
  void run(int T);

  // Assembled (t q) x (t q) covariance over times 1..t.
  const Mat& kappa(const EdgeId& e) const;
  const Mat& kappa_sem(const EdgeId& e) const;
  // kappa^{r,s}, 1-based times.
  Mat kappa_block(const EdgeId& e, int r, int s) const;
  bool degenerate(const EdgeId& e) const;

  const StepContext& context() const;
  const Nonlinearity& fn(const EdgeId& e, int s);

  // Samples the field family over times 0..T (T = t()) and evaluates each
  // observable at every time on M joint samples.
  std::vector<SEObservableStats> observe(const std::vector<Observable>& obs, long M, std::uint64_t seed);

  const GraphInstance& instance() const { return inst_; }
  const SEOptions& options() const { return opt_; }

 private:
  struct Impl;
  const GraphInstance& inst_;
  SEOptions opt_;
  int t_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace graphamp
