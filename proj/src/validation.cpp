#include "graphamp/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "graphamp/error.hpp"
#include "graphamp/model_zoo.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

namespace {

std::string kv(std::initializer_list<std::pair<const char*, double>> items) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : items) {
    if (!first) os << ';';
    os << k << '=' << v;
    first = false;
  }
  return os.str();
}

CheckReport z_report(std::string id, std::string params, double stat, double pred, double se, double thr) {
  CheckReport r;
  r.id = std::move(id);
  r.params = std::move(params);
  r.statistic = stat;
  r.predicted = pred;
  r.stderr_ = se;
  r.tolerance = thr;
  r.z = se > 0 ? std::abs(stat - pred) / se : (stat == pred ? 0.0 : INFINITY);
  r.pass = r.z <= thr;
  return r;
}

CheckReport abs_report(std::string id, std::string params, double stat, double pred, double tol) {
  CheckReport r;
  r.id = std::move(id);
  r.params = std::move(params);
  r.statistic = stat;
  r.predicted = pred;
  r.tolerance = tol;
  r.pass = std::abs(stat - pred) <= tol;
  return r;
}

// Columns of norm sqrt(N).
Mat normalized_columns(Mat X) {
  for (long j = 0; j < X.cols(); ++j) X.col(j) *= std::sqrt(static_cast<double>(X.rows())) / X.col(j).norm();
  return X;
}

}  // namespace

std::vector<CheckReport> stein_check(const Nonlinearity& f, const Mat& kappa, long n, int M, std::uint64_t seed,
                                     double z_threshold) {
  if (kappa.rows() != kappa.cols() || kappa.rows() % 2 != 0)
    fail(ErrorKind::config, "stein_check: kappa must be 2q x 2q");
  if (n < 1 || M < 2) fail(ErrorKind::config, "stein_check: need n >= 1 and M >= 2");
  const long q = kappa.rows() / 2;
  const Mat k12 = kappa.topRightCorner(q, q);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (kappa + kappa.transpose()));
  if (es.eigenvalues().minCoeff() < -1e-12) fail(ErrorKind::config, "stein_check: kappa is not PSD");
  const Mat root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
  SeededRng rng(seed);
  std::vector<Mat> diff;
  Mat lhs_mean = Mat::Zero(q, q);
  for (int m = 0; m < M; ++m) {
    const Mat Z = standard_normal(rng.stream("stein").sub(static_cast<std::uint64_t>(m)), n, 2 * q) * root;
    const Mat Z1 = Z.leftCols(q), Z2 = Z.rightCols(q);
    const Mat F = apply(f, {Z2});
    if (F.cols() != q) fail(ErrorKind::config, "stein_check: f must map n x q to n x q");
    const Mat lhs = Z1.transpose() * F;
    const Mat rhs = k12 * jacobian_trace(f, {Z2}, {}, 0).block.transpose();
    lhs_mean += lhs / M;
    diff.push_back(lhs - rhs);
  }
  std::vector<CheckReport> out;
  for (long a = 0; a < q; ++a)
    for (long b = 0; b < q; ++b) {
      double mu = 0.0, s2 = 0.0;
      for (const auto& D : diff) mu += D(a, b) / M;
      for (const auto& D : diff) s2 += (D(a, b) - mu) * (D(a, b) - mu) / (M - 1);
      const double se = std::sqrt(s2 / M);
      CheckReport r = z_report("stein:" + f.name + "[" + std::to_string(a) + "," + std::to_string(b) + "]",
                               kv({{"n", double(n)}, {"M", double(M)}, {"q", double(q)}}), lhs_mean(a, b),
                               lhs_mean(a, b) - mu, se, z_threshold);
      out.push_back(r);
    }
  return out;
}

std::vector<CheckReport> goe_projection_checks(const GoeProjectionOptions& o) {
  if (o.N < 2 || o.q < 1 || o.rank < 1 || o.M < 2) fail(ErrorKind::config, "goe_projection_checks: bad sizes");
  SeededRng rng(o.seed);
  const double N = static_cast<double>(o.N);
  // Fixed U (correlated columns), V, and a rank-t projector.
  Mat U = standard_normal(rng.stream("U"), o.N, o.q);
  if (o.q > 1) U.col(1) = 0.6 * U.col(0) + 0.8 * U.col(1);
  U = normalized_columns(U);
  const Mat V = normalized_columns(standard_normal(rng.stream("V"), o.N, o.q));
  const Mat Q = standard_normal(rng.stream("P"), o.N, o.rank).householderQr().householderQ() *
                Mat::Identity(o.N, o.rank);
  const Mat G = U.transpose() * U / N;

  Mat a_sum = Mat::Zero(o.q, o.q), c_sum = Mat::Zero(1, o.q);
  double a_fro = 0.0, b_stat = 0.0, d_err = 0.0;
  for (int m = 0; m < o.M; ++m) {
    const Mat A = sample_goe(o.N, N, rng.stream("goe").sub(static_cast<std::uint64_t>(m)));
    const Mat AU = A * U;
    const Mat a = V.transpose() * AU / N;
    a_sum += a;
    a_fro += a.norm() / o.M;
    b_stat += (Q * (Q.transpose() * AU)).squaredNorm() / N / o.M;
    c_sum += AU.colwise().sum() / N;
    d_err += (AU.transpose() * AU / N - G).norm() / o.M;
  }
  std::vector<CheckReport> out;
  const std::string p = kv({{"N", N}, {"q", double(o.q)}, {"M", double(o.M)}});
  // (a): exact variance (|v|^2 |u|^2 + (v^T u)^2) / N^3 per entry.
  double zmax = 0.0;
  CheckReport worst;
  for (int i = 0; i < o.q; ++i)
    for (int j = 0; j < o.q; ++j) {
      const double vu = V.col(i).dot(U.col(j));
      const double se = std::sqrt((N * N + vu * vu) / (N * N * N) / o.M);
      CheckReport r = z_report("goe_a", p, a_sum(i, j) / o.M, 0.0, se, o.z_threshold);
      if (r.z >= zmax) {
        zmax = r.z;
        worst = r;
      }
    }
  out.push_back(worst);
  out.push_back(abs_report("goe_a_frobenius", p, a_fro, 0.0, 4.0 * o.q / std::sqrt(N)));
  out.push_back(abs_report("goe_b", kv({{"N", N}, {"rank", double(o.rank)}, {"M", double(o.M)}}), b_stat, 0.0, o.b_tol));
  // (c): entries of A U have mean 0 and variance G_jj; column means over N rows and M draws.
  zmax = 0.0;
  for (int j = 0; j < o.q; ++j) {
    CheckReport r = z_report("goe_c_mean", p, c_sum(0, j) / o.M, 0.0, std::sqrt(G(j, j) / (N * o.M)), o.z_threshold);
    if (r.z >= zmax) {
      zmax = r.z;
      worst = r;
    }
  }
  out.push_back(worst);
  out.push_back(abs_report("goe_d", p, d_err, 0.0, o.d_tol));
  return out;
}

CheckReport onsager_fd_check(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt, double rel_tol) {
  const TraceResult an = jacobian_trace(f, in, side, wrt);
  bool kink = false;
  const Mat fd = fd_jacobian_trace(f, in, side, wrt, &kink);
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
  const double err = (an.block - fd).cwiseAbs().maxCoeff() / scale;
  CheckReport r = abs_report("onsager_fd:" + f.name, kv({{"rows", double(in.at(0).rows())}, {"wrt", double(wrt)}}),
                             err, 0.0, rel_tol);
  if (!an.analytic) r.params += ";fd_only=1";
  if (kink) r.params += ";kink=1";
  return r;
}

double goe_opnorm(const Mat& A, int max_iter, double tol) {
  const long n = A.rows();
  Vec v = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec w = A * (A * v);
    const double rq = v.dot(w);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const double next = std::sqrt(std::max(rq, 0.0));
    if (it > 0 && std::abs(next - est) <= tol * next) return next;
    est = next;
  }
  fail(ErrorKind::numerical, "power iteration stagnated after " + std::to_string(max_iter) + " iterations");
}

std::vector<CheckReport> opnorm_check(const std::vector<long>& n_list, int seeds, std::uint64_t seed, double band_c) {
  std::vector<CheckReport> out;
  SeededRng rng(seed);
  for (long n : n_list) {
    const double band = band_c * std::pow(static_cast<double>(n), -1.0 / 3.0);
    for (int s = 0; s < seeds; ++s) {
      const Mat A = sample_goe(n, static_cast<double>(n), rng.stream("opnorm", std::to_string(n), static_cast<std::uint64_t>(s)));
      out.push_back(abs_report("goe_opnorm", kv({{"n", double(n)}, {"seed", double(s)}}), goe_opnorm(A), 2.0, band));
    }
  }
  return out;
}

std::vector<FdCase> library_fd_cases() {
  const long n = 40;
  SeededRng rng(97);
  auto one = [n](std::string name, Nonlinearity f, int arity = 1, long q = 1) {
    FdCase c;
    c.name = std::move(name);
    c.f = std::move(f);
    c.shapes.assign(static_cast<std::size_t>(arity), Shape{n, q});
    c.scale.assign(static_cast<std::size_t>(arity), 1.0);
    return c;
  };
  std::vector<FdCase> out;
  out.push_back(one("identity", identity_fn()));
  out.push_back(one("scaled_identity", scaled_identity(1.7)));
  out.push_back(one("tanh", tanh_fn(1.3)));
  out.push_back(one("relu", relu_fn()));
  out.push_back(one("soft_threshold", soft_threshold_fn(0.5)));
  out.push_back(one("square", square_fn()));
  out.push_back(one("linear", linear_fn(standard_normal(rng.stream("fd", "W"), 2, 3)), 1, 3));
  out.push_back(one("group_soft_threshold", group_soft_threshold_fn(0.7), 1, 2));
  out.push_back(one("rescaled_tanh", rescale(tanh_fn(), 2.5)));
  {
    const Mat B = standard_normal(rng.stream("fd", "B"), n, n) / std::sqrt(static_cast<double>(n)) + Mat::Identity(n, n);
    out.push_back(one("precomposed_tanh", precompose(tanh_fn(), B), 1, 2));
    out.push_back(one("postcomposed_relu", postcompose(relu_fn(), B), 1, 2));
    const Mat S = B * B.transpose() + Mat::Identity(n, n);
    out.push_back(one("wrap_covariance_tanh", wrap_covariance(tanh_fn(), S.llt().matrixL()), 1, 2));
  }
  const Mat y = standard_normal(rng.stream("fd", "y"), n, 1);
  Mat labels = y.unaryExpr([](double v) { return v >= 0 ? 1.0 : -1.0; });
  const Mat shift = standard_normal(rng.stream("fd", "shift"), n, 1);
  auto with_side = [](FdCase c, std::string key, Mat v) {
    c.side[key] = std::move(v);
    return c;
  };
  ProxSpec sq{ProxKind::squared};
  ProxSpec lg{ProxKind::logistic};
  ProxSpec ab{ProxKind::abs, 1.0, 0.3};
  ProxSpec l2{ProxKind::squared, 1.0, 0.5};
  out.push_back(with_side(one("g_out_squared", output_denoiser(sq, 0.8, 1.3)), "y", y));
  out.push_back(with_side(one("g_out_squared_V0", output_denoiser(sq, 0.0, 1.3)), "y", y));
  out.push_back(with_side(one("g_out_logistic", output_denoiser(lg, 0.8, 1.3)), "y", labels));
  out.push_back(with_side(one("g_out_logistic_V0", output_denoiser(lg, 0.0, 1.3)), "y", labels));
  out.push_back(one("prox_abs", input_denoiser(ab, 0.7, 1.3)));
  out.push_back(one("prox_squared", input_denoiser(l2, 0.7, 1.3)));
  out.push_back(with_side(one("prox_abs_shifted", input_denoiser(ab, 0.7, 1.3, "x0")), "x0", shift));
  return out;
}

std::vector<FdCase> instance_fd_cases(const GraphInstance& inst, int T, const std::string& label) {
  AmpTrajectory traj = run(inst, T);
  std::vector<FdCase> out;
  for (int t = 1; t <= T; ++t)
    for (const auto& e : canonical_edge_order(inst.graph)) {
      const Nonlinearity f = function_at(inst, traj, t, e);
      if (f.is_zero) continue;
      FdCase c;
      c.name = label + ":" + f.name + ":" + e.label() + ":t" + std::to_string(t);
      c.f = f;
      c.side = inst.side_of(e);
      c.wrt = reversed_input_index(inst.graph, e);
      for (const Mat& x : gather_inputs(traj, t, e)) {
        c.shapes.push_back(Shape{x.rows(), x.cols()});
        const double rms = x.size() > 0 ? x.norm() / std::sqrt(static_cast<double>(x.size())) : 1.0;
        c.scale.push_back(rms > 0 ? rms : 1.0);
      }
      out.push_back(std::move(c));
    }
  return out;
}

std::vector<FdCase> shipped_fd_cases() {
  std::vector<FdCase> out = library_fd_cases();
  auto add = [&out](const std::vector<FdCase>& more) { out.insert(out.end(), more.begin(), more.end()); };
  const int T = 4;
  {
    GlmModel m = lasso_model(60, 80, 0.1);
    add(instance_fd_cases(build_gamp_instance(m, true).inst, T, "lasso_error"));
    add(instance_fd_cases(build_gamp_instance(m, false).inst, T, "lasso_direct"));
  }
  add(instance_fd_cases(build_gamp_instance(ridge_model(70, 50, 0.5), true).inst, T, "ridge_error"));
  add(instance_fd_cases(build_gamp_instance(logistic_model(80, 50, 0.5), false).inst, T, "logistic_direct"));
  {
    MultilayerModel ml;
    ml.dims = {60, 50, 40};
    add(instance_fd_cases(build_multilayer_instance(ml).inst, T, "multilayer"));
  }
  {
    SpikedModel sp;
    sp.d = 60;
    sp.prior_dims = {30};
    add(instance_fd_cases(build_spiked_instance(sp).inst, T, "spiked"));
  }
  {
    GmmSpatialModel gm;
    gm.d = 30;
    gm.cluster_sizes = {40, 40};
    gm.test_size = 10;
    add(instance_fd_cases(build_gmm_spatial_instance(gm).inst, T, "gmm_spatial"));
  }
  {
    CommitteeModel cm;
    cm.n = 60;
    cm.d = 80;
    add(instance_fd_cases(build_committee_instance(cm).inst, T, "committee"));
  }
  return out;
}

std::vector<CheckReport> onsager_fd_suite(const std::vector<FdCase>& cases, int points, std::uint64_t seed,
                                          double rel_tol) {
  SeededRng rng(seed);
  std::vector<CheckReport> out;
  for (const auto& c : cases) {
    double worst = 0.0;
    int redraws = 0, fd_only = 0;
    for (int p = 0; p < points; ++p) {
      CheckReport r;
      for (int attempt = 0; attempt <= 20; ++attempt) {
        Inputs in;
        for (std::size_t k = 0; k < c.shapes.size(); ++k)
          in.push_back(c.scale[k] * standard_normal(rng.stream("fd_point", c.name, static_cast<std::uint64_t>(p) * 64 +
                                                                                    static_cast<std::uint64_t>(attempt) * 8 + k),
                                                    c.shapes[k].rows, c.shapes[k].cols));
        r = onsager_fd_check(c.f, in, c.side, c.wrt, rel_tol);
        if (r.params.find("kink=1") == std::string::npos) break;
        ++redraws;
      }
      if (r.params.find("fd_only=1") != std::string::npos) ++fd_only;
      worst = std::max(worst, r.statistic);
    }
    CheckReport r = abs_report("onsager_fd", "case=" + c.name + ";" + kv({{"points", double(points)}, {"redraws", double(redraws)}}),
                               worst, 0.0, rel_tol);
    if (fd_only > 0) {
      r.params += ";fd_only=1";
      r.pass = false;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace graphamp
