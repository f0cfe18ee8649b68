#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphamp/amp_engine.hpp"
#include "graphamp/prox.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

enum class Channel { linear, sign };

struct TeacherSpec {
  std::string law = "bernoulli_gauss";  // gauss | bernoulli_gauss | rademacher | zero
  double sparsity = 0.1;
  double scale = 1.0;
};

Mat sample_teacher(const TeacherSpec& spec, long d, long q, Stream s);

// min_x sum_mu loss(a_mu^T x, y_mu) + penalty(x), A with variance 1/d.
struct GlmModel {
  std::string kind = "lasso";
  long n = 1000;  // samples
  long d = 2000;  // features
  int q = 1;
  ProxSpec loss{ProxKind::squared};
  ProxSpec penalty{ProxKind::abs, 1.0, 1.0};
  Channel channel = Channel::linear;
  double noise_std = 0.1;
  TeacherSpec teacher;
  double beta0 = 1.0;
  std::uint64_t data_seed = 1;
  std::uint64_t matrix_seed = 1;
};

GlmModel ridge_model(long n, long d, double lambda);
GlmModel lasso_model(long n, long d, double lambda);
GlmModel logistic_model(long n, long d, double lambda);

struct GlmData {
  Mat A;   // n x d, variance 1/d
  Mat x0;  // d x q
  Mat w;   // n x q noise
  Mat y;   // n x q
};

GlmData sample_glm_data(const GlmModel& model);

// Two-node instance: vertex v (features, dim d), vertex w (samples, dim n).
// The direct form alternates h (even t, edge (w,v)) and e (odd t, edge (v,w))
// and carries the GAMP iterates. The error form tracks x_hat - x0 and the
// residual so that every piece of side data is independent of A; it needs
// the squared loss and a linear channel.
struct GampInstance {
  GraphInstance inst;
  GlmData data;
  GlmModel model;
  double c = 1.0;
  bool error_form = false;
  EdgeId fwd;  // (v,w)
  EdgeId bwd;  // (w,v)

  // Latest estimate available at graph time t.
  Mat estimate(const AmpTrajectory& traj, int t) const;
  Observable mse_obs() const;
  Observable overlap_obs() const;
};

GampInstance build_gamp_instance(const GlmModel& model, bool error_form = false);
GampInstance build_gamp_instance(const GlmModel& model, const GlmData& data, bool error_form = false,
                                 const std::string& feature_node = "v", const std::string& sample_node = "w");

// g_out(omega, y, V) and its omega-derivative.
ScalarProx g_out_scalar(const ProxSpec& loss, double V, double omega, double y);
// c * g_out(omega, side[key], V) with g_out = (prox_{V g(., y)}(omega) - omega) / V.
Nonlinearity output_denoiser(const ProxSpec& loss, double V, double c, const std::string& key = "y");
// c * prox_{alpha f}(alpha u); with a shift key s: c * (prox_{alpha f}(s + alpha u) - s).
Nonlinearity input_denoiser(const ProxSpec& penalty, double alpha, double c, const std::string& shift_key = "");

struct TeacherDecomposition {
  Vec s;  // A x0 / sqrt(rho), standard normal entries
  double rho = 0.0;
  double norm_x0 = 0.0;
  Vec x0;
  Mat A_tilde;  // independent copy acting on the orthogonal complement

  Vec project(const Vec& x) const;        // P x
  Vec project_perp(const Vec& x) const;   // (I - P) x
  double overlap(const Vec& x) const;     // x0^T x / d
  Mat reassembled() const;                // A P + A_tilde P_perp, given A
  Mat A;
};

TeacherDecomposition decompose_teacher(const Mat& A, const Vec& x0, Stream fresh);

// Convex oracles.
Mat ridge_direct(const Mat& A, const Mat& y, double lambda);
struct ProxGradResult {
  Mat x;
  int iterations = 0;
  double last_change = 0.0;
};
ProxGradResult proximal_gradient(const Mat& A, const Mat& y, const ProxSpec& loss, const ProxSpec& penalty,
                                 int max_iter = 50000, double tol = 1e-13);
// ||A^T dg(Ax, y) + df(x)|| / sqrt(d), with the subgradient of |.| chosen on
// the inactive set (|x_i| <= 1e-6 scale) to minimize the residual.
double glm_optimality_residual(const Mat& A, const Mat& y, const ProxSpec& loss, const ProxSpec& penalty,
                               const Mat& x);

// Line graph v0 - v1 - ... - vL with linear and ReLU layers.
struct MultilayerModel {
  std::vector<int> dims{1000, 1000, 1000};
  // independent: teacher layers use matrices independent of the iteration.
  // shared: teacher reuses the iteration matrices (breaks the independence the SE relies on).
  std::string teacher_mode = "independent";
  std::uint64_t data_seed = 1;
  std::uint64_t matrix_seed = 1;
  // With one layer and a GLM attached the chain is exactly the GAMP instance.
  bool use_glm = false;
  GlmModel glm;
};

struct MultilayerInstance {
  GraphInstance inst;
  std::vector<Mat> teacher;  // x_0 .. x_L
  bool extrapolated = false;
};

MultilayerInstance build_multilayer_instance(const MultilayerModel& model);

// Spiked Wigner matrix Y/sqrt(d) = (sqrt(lambda)/d) v0 v0^T + W with W ~ GOE(d)
// on a loop at v0, optionally under a generative prior chain v0 - v1 - ...
struct SpikedModel {
  int d = 1000;
  double lambda = 4.0;
  std::vector<int> prior_dims;  // empty: i.i.d. Rademacher spike
  double eps_init = 0.1;
  std::uint64_t data_seed = 1;
  std::uint64_t matrix_seed = 1;
};

struct SpikedInstance {
  GraphInstance inst;
  Mat v0;
  double lambda = 0.0;
  EdgeId loop{"v0", "v0"};
  Observable overlap_obs() const;
  // Y/sqrt(d) used by the reference loop.
  Mat Y() const;
};

SpikedInstance build_spiked_instance(const SpikedModel& model);

// K-cluster Gaussian mixture with block-diagonal feature covariances, ridge
// regression on one-hot labels. Star graph: features w, one node per cluster.
struct GmmSpatialModel {
  int d = 500;
  std::vector<int> cluster_sizes{1000, 1000};
  // sigma(k, j): variance of cluster k on feature block j.
  Mat sigma;
  std::vector<int> feature_blocks;  // sums to d
  double mean_norm = 1.5;  // |mu_k|
  // Relaxation of the cluster-mean feedback 1^T h_k; 1 is the plain update.
  double mean_step = 0.5;
  double lambda = 1.0;
  double beta0 = 1.0;
  int test_size = 2000;
  std::uint64_t data_seed = 1;
  std::uint64_t matrix_seed = 1;
};

struct GmmInstance {
  GraphInstance inst;
  GmmSpatialModel model;
  int K = 2;
  double c = 1.0;
  Mat means;                  // d x K
  std::vector<Mat> factors;   // Sigma_k^{1/2}
  std::vector<Mat> Z;         // N_k x d, variance 1/d
  Mat X;                      // stacked design rows x / sqrt(d)
  Mat Y;                      // one-hot labels
  Mat X_test, Y_test;

  Mat estimate(const AmpTrajectory& traj, int t) const;  // d x K weights
  double accuracy(const Mat& W) const;                   // on the test set
  Mat ridge_baseline() const;
};

GmmInstance build_gmm_spatial_instance(const GmmSpatialModel& model);

// q-column committee-style regression in error form with a row-norm
// (group soft threshold) denoiser and fixed scalar parameters.
struct CommitteeModel {
  long n = 400;
  long d = 600;
  int q = 2;
  double theta = 0.6;
  double alpha = 1.0;
  double V = 1.0;
  double noise_std = 0.2;
  double sparsity = 0.2;
  std::uint64_t data_seed = 1;
  std::uint64_t matrix_seed = 1;
};

struct CommitteeInstance {
  GraphInstance inst;
  double c = 1.0;
  Mat x0, w;
  EdgeId fwd{"v", "w"}, bwd{"w", "v"};
  Observable mse_obs() const;
};

CommitteeInstance build_committee_instance(const CommitteeModel& model);

// x -> f(S^{-1} x) for a positive definite factor S, with chain-rule trace.
Nonlinearity wrap_covariance(const Nonlinearity& f, const Mat& factor);

}  // namespace graphamp
