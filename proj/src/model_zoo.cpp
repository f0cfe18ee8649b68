#include "graphamp/model_zoo.hpp"

#include <algorithm>
#include <cmath>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

Mat sample_teacher(const TeacherSpec& spec, long d, long q, Stream s) {
  Mat g = standard_normal(s.sub("gauss"), d, q);
  if (spec.law == "gauss") return spec.scale * g;
  if (spec.law == "zero") return Mat::Zero(d, q);
  Stream u = s.sub("support");
  if (spec.law == "bernoulli_gauss") {
    for (long i = 0; i < g.size(); ++i)
      if (u.uniform_at(static_cast<std::uint64_t>(i)) >= spec.sparsity) g.data()[i] = 0.0;
    return spec.scale * g;
  }
  if (spec.law == "rademacher") {
    for (long i = 0; i < g.size(); ++i) g.data()[i] = u.uniform_at(static_cast<std::uint64_t>(i)) < 0.5 ? -1.0 : 1.0;
    return spec.scale * g;
  }
  fail(ErrorKind::config, "unknown teacher law '" + spec.law + "'");
}

GlmModel ridge_model(long n, long d, double lambda) {
  GlmModel m;
  m.kind = "ridge";
  m.n = n;
  m.d = d;
  m.penalty = ProxSpec{ProxKind::squared, 1.0, lambda};
  m.teacher.law = "gauss";
  return m;
}

GlmModel lasso_model(long n, long d, double lambda) {
  GlmModel m;
  m.kind = "lasso";
  m.n = n;
  m.d = d;
  m.penalty = ProxSpec{ProxKind::abs, 1.0, lambda};
  return m;
}

GlmModel logistic_model(long n, long d, double lambda) {
  GlmModel m;
  m.kind = "logistic";
  m.n = n;
  m.d = d;
  m.loss = ProxSpec{ProxKind::logistic};
  m.penalty = ProxSpec{ProxKind::squared, 1.0, lambda};
  m.channel = Channel::sign;
  m.noise_std = 0.0;
  m.teacher.law = "gauss";
  return m;
}

GlmData sample_glm_data(const GlmModel& model) {
  if (model.n < 1 || model.d < 1 || model.q < 1) fail(ErrorKind::config, "GLM dimensions must be positive");
  GlmData D;
  D.A = sample_iid(model.n, model.d, static_cast<double>(model.d), SeededRng(model.matrix_seed).stream("matrix", "(v,w)"));
  SeededRng data(model.data_seed);
  D.x0 = sample_teacher(model.teacher, model.d, model.q, data.stream("teacher"));
  D.w = model.noise_std * standard_normal(data.stream("noise"), model.n, model.q);
  D.y = D.A * D.x0 + D.w;
  if (model.channel == Channel::sign) D.y = D.y.unaryExpr([](double v) { return v >= 0 ? 1.0 : -1.0; });
  return D;
}

ScalarProx g_out_scalar(const ProxSpec& loss, double V, double omega, double y) {
  if (loss.kind == ProxKind::squared) {
    const double w = loss.weight, a = 1.0 + V * w;
    return {w * (y - omega) / a, -w / a};
  }
  if (V == 0) {
    // Vanishing variance: g_out -> -g'(omega).
    const double z = y * omega;
    return {loss.weight * y * sigmoid(-z), -loss.weight * y * y * sigmoid(z) * sigmoid(-z)};
  }
  const auto sp = prox_scalar(loss.with_gamma(V), omega, y);
  return {(sp.p - omega) / V, (sp.dp - 1.0) / V};
}

Nonlinearity output_denoiser(const ProxSpec& loss, double V, double c, const std::string& key) {
  if (!is_convex(loss.kind)) fail(ErrorKind::config, "non-convex loss " + prox_kind_name(loss.kind) + " rejected");
  if (!(V >= 0) || !std::isfinite(V) || (V == 0 && loss.kind != ProxKind::squared && loss.kind != ProxKind::logistic))
    fail(ErrorKind::numerical, "output denoiser variance must be positive, got " + std::to_string(V));
  Nonlinearity f;
  f.name = "g_out";
  f.row_separable = true;
  auto eval = [loss, V, key](const Mat& om, const SideData& side, bool deriv) {
    const Mat& y = side.at(key);
    Mat out(om.rows(), om.cols());
    for (long i = 0; i < om.size(); ++i) {
      const auto g = g_out_scalar(loss, V, om.data()[i], y.data()[i]);
      out.data()[i] = deriv ? g.dp : g.p;
    }
    return out;
  };
  f.fn = [eval, c](const Inputs& in, const SideData& side) -> Mat { return c * eval(in.at(0), side, false); };
  f.trace = [eval, c](const Inputs& in, const SideData& side, int) -> Mat {
    return c * Mat(eval(in.at(0), side, true).colwise().sum().transpose().asDiagonal());
  };
  return f;
}

Nonlinearity input_denoiser(const ProxSpec& penalty, double alpha, double c, const std::string& shift_key) {
  if (!is_convex(penalty.kind))
    fail(ErrorKind::config, "non-convex penalty " + prox_kind_name(penalty.kind) + " rejected");
  if (!(alpha > 0) || !std::isfinite(alpha))
    fail(ErrorKind::numerical, "input denoiser step must be positive, got " + std::to_string(alpha));
  const ProxSpec spec = penalty.with_gamma(alpha);
  Nonlinearity f;
  f.name = "e_in";
  f.row_separable = true;
  auto eval = [spec, alpha, shift_key](const Mat& u, const SideData& side, bool deriv) {
    const Mat* shift = shift_key.empty() ? nullptr : &side.at(shift_key);
    Mat out(u.rows(), u.cols());
    for (long j = 0; j < u.cols(); ++j)
      for (long i = 0; i < u.rows(); ++i) {
        const double s0 = shift ? (*shift)(i, j) : 0.0;
        const auto sp = prox_scalar(spec, s0 + alpha * u(i, j), 0.0);
        out(i, j) = deriv ? alpha * sp.dp : sp.p - s0;
      }
    return out;
  };
  f.fn = [eval, c](const Inputs& in, const SideData& side) -> Mat { return c * eval(in.at(0), side, false); };
  f.trace = [eval, c](const Inputs& in, const SideData& side, int) -> Mat {
    return c * Mat(eval(in.at(0), side, true).colwise().sum().transpose().asDiagonal());
  };
  return f;
}

namespace {

Nonlinearity constant_fn(const std::string& key, double scale) {
  Nonlinearity f;
  f.name = "constant";
  f.row_separable = true;
  f.fn = [key, scale](const Inputs&, const SideData& side) -> Mat { return scale * side.at(key); };
  f.trace = [](const Inputs& in, const SideData& side, int wrt) -> Mat {
    (void)side;
    return Mat::Zero(in.at(0).cols(), in.at(wrt).cols());
  };
  return f;
}

double mean_diag(const Mat& b) { return b.trace() / static_cast<double>(b.rows()); }

}  // namespace


GampInstance build_gamp_instance(const GlmModel& model, bool error_form) {
  return build_gamp_instance(model, sample_glm_data(model), error_form);
}

GampInstance build_gamp_instance(const GlmModel& model, const GlmData& data, bool error_form,
                                 const std::string& feature_node, const std::string& sample_node) {
  if (!is_convex(model.loss.kind) || !is_convex(model.penalty.kind))
    fail(ErrorKind::config, "GAMP instance needs convex loss and penalty");
  if (error_form && (model.loss.kind != ProxKind::squared || model.channel != Channel::linear))
    fail(ErrorKind::config, "error form needs the squared loss and a linear channel");
  GampInstance G;
  G.model = model;
  G.data = data;
  G.error_form = error_form;
  const long n = data.A.rows(), d = data.A.cols(), q = data.x0.cols();
  G.fwd = {feature_node, sample_node};
  G.bwd = G.fwd.reversed();

  GraphInstance& I = G.inst;
  I.name = error_form ? model.kind + "_error_form" : model.kind;
  I.graph.add_vertex(feature_node, static_cast<int>(d)).add_vertex(sample_node, static_cast<int>(n));
  I.graph.add_pair(feature_node, sample_node, static_cast<int>(q));
  const double N = static_cast<double>(I.graph.N());
  G.c = std::sqrt(N / static_cast<double>(d));
  const Mat Ag = data.A / G.c;
  const EdgeId key = storage_key(G.fwd);
  I.matrices[key] = key == G.fwd ? Ag : Mat(Ag.transpose());
  I.x0[G.fwd] = Mat::Zero(n, q);
  I.x0[G.bwd] = Mat::Zero(d, q);
  I.allow_degenerate = true;
  I.side[G.fwd]["x0"] = data.x0;
  I.side[G.bwd]["y"] = data.y;
  I.side[G.bwd]["w"] = data.w;

  const double c = G.c, beta0 = model.beta0;
  const ProxSpec loss = model.loss, penalty = model.penalty;
  const EdgeId fwd = G.fwd, bwd = G.bwd;
  const int qi = static_cast<int>(q);
  if (!error_form) {
    I.family = [=](int t, const EdgeId& e, const StepContext& ctx) -> Nonlinearity {
      if (t % 2 == 0) {
        if (e == fwd) return zero_fn(qi);
        const double V = t == 0 ? beta0 : c * mean_diag(ctx.onsager(fwd, t - 1));
        return output_denoiser(loss, V, c, "y");
      }
      if (e == bwd) return zero_fn(qi);
      const double hbar = c * mean_diag(ctx.onsager(bwd, t - 1));
      return input_denoiser(penalty, -1.0 / hbar, c);
    };
  } else {
    I.family = [=](int t, const EdgeId& e, const StepContext& ctx) -> Nonlinearity {
      if (t == 0) return e == fwd ? constant_fn("x0", -c) : zero_fn(qi);
      if (t % 2 == 1) {
        if (e == fwd) return zero_fn(qi);
        const double V = t == 1 ? beta0 : c * mean_diag(ctx.onsager(fwd, t - 1));
        return output_denoiser(loss, V, c, "w");
      }
      if (e == bwd) return zero_fn(qi);
      const double hbar = c * mean_diag(ctx.onsager(bwd, t - 1));
      return input_denoiser(penalty, -1.0 / hbar, c, "x0");
    };
  }
  return G;
}

Mat GampInstance::estimate(const AmpTrajectory& traj, int t) const {
  if (error_form) {
    const int s = t - t % 2;
    return data.x0 + traj.at(s, fwd).m / c;
  }
  const int s = t % 2 == 1 ? t : t - 1;
  if (s < 1) return Mat::Zero(data.x0.rows(), data.x0.cols());
  return traj.at(s, fwd).m / c;
}

namespace {

// Estimate from an iterate view, shared by AMP and state evolution.
Mat view_estimate(const IterateView& v, const EdgeId& fwd, double c, bool error_form, int t) {
  const Mat& x0 = v.side(fwd).at("x0");
  if (error_form) return x0 + v.m(fwd, t - t % 2) / c;
  const int s = t % 2 == 1 ? t : t - 1;
  if (s < 1) return Mat::Zero(x0.rows(), x0.cols());
  return v.m(fwd, s) / c;
}

}  // namespace

Observable GampInstance::mse_obs() const {
  Observable o;
  o.name = "mse";
  o.edge = fwd.label();
  const EdgeId e = fwd;
  const double cc = c;
  const bool ef = error_form;
  o.fn = [e, cc, ef](const IterateView& v, int t) {
    const Mat& x0 = v.side(e).at("x0");
    return (view_estimate(v, e, cc, ef, t) - x0).squaredNorm() / static_cast<double>(x0.rows());
  };
  return o;
}

Observable GampInstance::overlap_obs() const {
  Observable o;
  o.name = "overlap";
  o.edge = fwd.label();
  const EdgeId e = fwd;
  const double cc = c;
  const bool ef = error_form;
  o.fn = [e, cc, ef](const IterateView& v, int t) {
    const Mat& x0 = v.side(e).at("x0");
    return (x0.array() * view_estimate(v, e, cc, ef, t).array()).sum() / static_cast<double>(x0.rows());
  };
  return o;
}

Vec TeacherDecomposition::project(const Vec& x) const {
  if (norm_x0 == 0.0) return Vec::Zero(x.size());
  return x0 * (x0.dot(x) / (norm_x0 * norm_x0));
}

Vec TeacherDecomposition::project_perp(const Vec& x) const { return x - project(x); }

double TeacherDecomposition::overlap(const Vec& x) const { return x0.dot(x) / static_cast<double>(x0.size()); }

Mat TeacherDecomposition::reassembled() const {
  const long d = x0.size();
  Mat P = Mat::Zero(d, d);
  if (norm_x0 > 0) P = x0 * x0.transpose() / (norm_x0 * norm_x0);
  return A * P + A_tilde * (Mat::Identity(d, d) - P);
}

TeacherDecomposition decompose_teacher(const Mat& A, const Vec& x0, Stream fresh) {
  if (A.cols() != x0.size()) fail(ErrorKind::config, "decompose_teacher: A has " + std::to_string(A.cols()) +
                                                          " columns but x0 has " + std::to_string(x0.size()) + " rows");
  TeacherDecomposition D;
  const double d = static_cast<double>(x0.size());
  D.x0 = x0;
  D.A = A;
  D.norm_x0 = x0.norm();
  D.rho = D.norm_x0 * D.norm_x0 / d;
  D.s = D.rho > 0 ? Vec(A * x0 / std::sqrt(D.rho)) : Vec::Zero(A.rows());
  D.A_tilde = sample_iid(A.rows(), A.cols(), d, fresh);
  return D;
}

Mat ridge_direct(const Mat& A, const Mat& y, double lambda) {
  Mat H = A.transpose() * A;
  H.diagonal().array() += lambda;
  return H.llt().solve(A.transpose() * y);
}

namespace {

double loss_curvature(const ProxSpec& loss) {
  switch (loss.kind) {
    case ProxKind::squared: return loss.weight;
    case ProxKind::logistic: return 0.25 * loss.weight;
    default: fail(ErrorKind::config, "proximal_gradient needs a smooth loss, got " + prox_kind_name(loss.kind));
  }
}

Mat loss_grad(const ProxSpec& loss, const Mat& p, const Mat& y) {
  Mat g(p.rows(), p.cols());
  for (long i = 0; i < p.size(); ++i) g.data()[i] = loss.weight * prox_fn_grad(loss, p.data()[i], y.data()[i]);
  return g;
}

double top_singular_sq(const Mat& A) {
  Vec v = Vec::Ones(A.cols()) / std::sqrt(static_cast<double>(A.cols()));
  double s = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vec w = A.transpose() * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double prev = s;
    s = nw;
    v = w / nw;
    if (std::abs(s - prev) <= 1e-12 * s) break;
  }
  return s;
}

}  // namespace

ProxGradResult proximal_gradient(const Mat& A, const Mat& y, const ProxSpec& loss, const ProxSpec& penalty,
                                 int max_iter, double tol) {
  const double L = 1.01 * top_singular_sq(A) * loss_curvature(loss);
  const double step = L > 0 ? 1.0 / L : 1.0;
  const ProxSpec pen = penalty.with_gamma(step);
  auto prox_step = [&](const Mat& z) {
    Mat v = z - step * A.transpose() * loss_grad(loss, A * z, y);
    for (long i = 0; i < v.size(); ++i) v.data()[i] = prox_scalar(pen, v.data()[i], 0.0).p;
    return v;
  };
  ProxGradResult r;
  Mat x = Mat::Zero(A.cols(), y.cols());
  Mat z = x;
  double tk = 1.0;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    Mat xn = prox_step(z);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    // gradient-based restart
    if (((z - xn).array() * (xn - x).array()).sum() > 0) {
      tk = 1.0;
      z = xn;
    } else {
      z = xn + ((tk - 1.0) / tn) * (xn - x);
      tk = tn;
    }
    r.last_change = (xn - x).norm() / std::max(1.0, xn.norm());
    x = std::move(xn);
    if (r.last_change < tol) break;
  }
  r.x = x;
  return r;
}

double glm_optimality_residual(const Mat& A, const Mat& y, const ProxSpec& loss, const ProxSpec& penalty,
                               const Mat& x) {
  Mat r = A.transpose() * loss_grad(loss, A * x, y);
  const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  for (long i = 0; i < r.size(); ++i) {
    const double xi = x.data()[i];
    double& ri = r.data()[i];
    if (penalty.kind == ProxKind::abs && std::abs(xi) <= 1e-6 * scale) {
      ri = std::max(0.0, std::abs(ri) - penalty.weight);
    } else {
      ri += penalty.weight * prox_fn_grad(penalty, xi, 0.0);
    }
  }
  return r.norm() / std::sqrt(static_cast<double>(x.rows()));
}

namespace {

// Row-wise scalar function of several single-column inputs. `eval` gets the
// row values of every input and side key and fills the partial derivatives.
using RowEval = std::function<double(const std::vector<double>& x, const std::vector<double>& side, double* grad)>;

Nonlinearity scalar_row_fn(const std::string& name, int arity, std::vector<std::string> keys, RowEval eval) {
  Nonlinearity f;
  f.name = name;
  f.row_separable = true;
  auto sweep = [arity, keys, eval](const Inputs& in, const SideData& side, Mat* out, Mat* grads) {
    if (static_cast<int>(in.size()) != arity)
      fail(ErrorKind::logic, "row function expects " + std::to_string(arity) + " inputs, got " + std::to_string(in.size()));
    const long n = in.at(0).rows();
    std::vector<const Mat*> sm;
    for (const auto& k : keys) sm.push_back(&side.at(k));
    std::vector<double> x(arity), sv(keys.size()), g(arity);
    if (out) out->resize(n, 1);
    if (grads) grads->setZero(n, arity);
    for (long i = 0; i < n; ++i) {
      for (int j = 0; j < arity; ++j) x[j] = in[j](i, 0);
      for (std::size_t k = 0; k < keys.size(); ++k) sv[k] = (*sm[k])(i, 0);
      const double v = eval(x, sv, g.data());
      if (out) (*out)(i, 0) = v;
      if (grads)
        for (int j = 0; j < arity; ++j) (*grads)(i, j) = g[j];
    }
  };
  f.fn = [sweep](const Inputs& in, const SideData& side) -> Mat {
    Mat out;
    sweep(in, side, &out, nullptr);
    return out;
  };
  f.trace = [sweep](const Inputs& in, const SideData& side, int wrt) -> Mat {
    Mat g;
    sweep(in, side, nullptr, &g);
    return Mat::Constant(1, 1, g.col(wrt).sum());
  };
  f.row_jac = [sweep](const Inputs& in, const SideData& side, int wrt) -> Mat {
    Mat g;
    sweep(in, side, nullptr, &g);
    return g.col(wrt);
  };
  return f;
}

double relu(double x) { return x > 0 ? x : 0.0; }
double relu_d(double x) { return x > 0 ? 1.0 : 0.0; }

int input_index(const GraphSpec& g, const EdgeId& e, const EdgeId& src) {
  const auto in = edges_into(g, e);
  for (std::size_t i = 0; i < in.size(); ++i)
    if (in[i] == src) return static_cast<int>(i);
  return -1;
}

std::string layer_name(std::size_t l) { return "v" + std::to_string(l); }

void gaussian_init(GraphInstance& I, const SeededRng& rng, double scale) {
  for (const auto& e : canonical_edge_order(I.graph))
    I.x0[e] = scale * standard_normal(rng.stream("init", e.label()), I.graph.dim(e.end), 1);
}

void iid_matrices(GraphInstance& I, std::uint64_t seed) {
  SeededRng rng(seed);
  const double N = static_cast<double>(I.graph.N());
  for (const auto& e : canonical_edge_order(I.graph)) {
    const EdgeId k = storage_key(e);
    if (I.matrices.count(k)) continue;
    if (k.is_loop())
      I.matrices[k] = sample_goe(I.graph.dim(k.start), N, rng.stream("matrix", k.label()));
    else
      I.matrices[k] = sample_iid(I.graph.dim(k.end), I.graph.dim(k.start), N, rng.stream("matrix", k.label()));
  }
}

// Generic chain functions on the line v_a - v_b, shared by the multilayer
// model and the spiked prior. Upward edges see the teacher at their start.
Nonlinearity chain_up(const GraphSpec& g, const EdgeId& e, const std::string& teacher_key) {
  const int rev = input_index(g, e, e.reversed());
  const int arity = static_cast<int>(edges_into(g, e).size());
  std::vector<std::string> keys;
  if (!teacher_key.empty()) keys.push_back(teacher_key);
  return scalar_row_fn("chain_up", arity, keys, [rev, arity](const std::vector<double>& x, const std::vector<double>& s, double* gr) {
    const double a = x[rev] + (s.empty() ? 0.0 : s[0]);
    double v = relu(a);
    for (int j = 0; j < arity; ++j) gr[j] = 0.0;
    gr[rev] = relu_d(a);
    for (int j = 0; j < arity; ++j) {
      if (j == rev) continue;
      const double th = std::tanh(x[j]);
      v += 0.5 * th;
      gr[j] = 0.5 * (1.0 - th * th);
    }
    return v;
  });
}

Nonlinearity chain_down(const GraphSpec& g, const EdgeId& e, const std::string& teacher_key, bool top) {
  const int rev = input_index(g, e, e.reversed());
  const int arity = static_cast<int>(edges_into(g, e).size());
  return scalar_row_fn(top ? "chain_top" : "chain_down", arity, {teacher_key},
                       [rev, arity, top](const std::vector<double>& x, const std::vector<double>& s, double* gr) {
                         for (int j = 0; j < arity; ++j) gr[j] = 0.0;
                         if (top) {
                           gr[rev] = -0.5;
                           return 0.5 * (s[0] - x[rev]);
                         }
                         double v = 0.8 * x[rev] + 0.3 * s[0];
                         gr[rev] = 0.8;
                         for (int j = 0; j < arity; ++j) {
                           if (j == rev) continue;
                           v += 0.5 * relu(x[j]);
                           gr[j] = 0.5 * relu_d(x[j]);
                         }
                         return v;
                       });
}

}  // namespace

MultilayerInstance build_multilayer_instance(const MultilayerModel& model) {
  MultilayerInstance M;
  if (model.use_glm) {
    if (model.dims.size() != 2) fail(ErrorKind::config, "a GLM layer needs exactly one layer (two dims)");
    GlmModel glm = model.glm;
    glm.d = model.dims[0];
    glm.n = model.dims[1];
    GampInstance G = build_gamp_instance(glm, sample_glm_data(glm), false, "v0", "v1");
    M.inst = std::move(G.inst);
    M.inst.name = "multilayer_glm";
    M.teacher = {G.data.x0, G.data.y};
    return M;
  }
  if (model.dims.size() < 2) fail(ErrorKind::config, "multilayer model needs at least two dims");
  if (model.teacher_mode != "independent" && model.teacher_mode != "shared")
    fail(ErrorKind::config, "unknown teacher_mode '" + model.teacher_mode + "'");
  const std::size_t L = model.dims.size() - 1;
  GraphInstance& I = M.inst;
  I.name = "multilayer";
  for (std::size_t l = 0; l <= L; ++l) I.graph.add_vertex(layer_name(l), model.dims[l]);
  for (std::size_t l = 0; l < L; ++l) I.graph.add_pair(layer_name(l), layer_name(l + 1));
  require_valid(I.graph);
  iid_matrices(I, model.matrix_seed);
  const double N = static_cast<double>(I.graph.N());

  SeededRng data(model.data_seed);
  M.extrapolated = model.teacher_mode == "shared";
  M.teacher.push_back(standard_normal(data.stream("teacher", "v0"), model.dims[0], 1));
  for (std::size_t l = 0; l < L; ++l) {
    const EdgeId up{layer_name(l), layer_name(l + 1)};
    Mat W;
    if (M.extrapolated) {
      W = I.matrix(up) * std::sqrt(N / model.dims[l]);
    } else {
      W = sample_iid(model.dims[l + 1], model.dims[l], model.dims[l], data.stream("teacher_matrix", up.label()));
    }
    Mat h = W * M.teacher.back();
    if (l + 1 < L) h = h.unaryExpr([](double v) { return relu(v); });
    M.teacher.push_back(h);
  }
  for (std::size_t l = 0; l <= L; ++l)
    for (const auto& e : canonical_edge_order(I.graph))
      if (e.start == layer_name(l)) I.side[e]["teacher"] = M.teacher[l];

  std::map<EdgeId, Nonlinearity> fns;
  for (std::size_t l = 0; l < L; ++l) {
    const EdgeId up{layer_name(l), layer_name(l + 1)};
    fns[up] = chain_up(I.graph, up, "teacher");
    fns[up.reversed()] = chain_down(I.graph, up.reversed(), "teacher", l + 1 == L);
  }
  I.family = stationary(fns);
  gaussian_init(I, data, 1.0);
  return M;
}

SpikedInstance build_spiked_instance(const SpikedModel& model) {
  if (model.d < 1) fail(ErrorKind::config, "spiked model needs d >= 1");
  if (model.lambda < 0) fail(ErrorKind::config, "spiked model needs lambda >= 0");
  SpikedInstance S;
  S.lambda = model.lambda;
  GraphInstance& I = S.inst;
  I.name = "spiked";
  I.graph.add_vertex("v0", model.d).add_edge("v0", "v0");
  std::vector<int> dims{model.d};
  for (int p : model.prior_dims) dims.push_back(p);
  for (std::size_t l = 1; l < dims.size(); ++l) {
    I.graph.add_vertex(layer_name(l), dims[l]);
    I.graph.add_pair(layer_name(l - 1), layer_name(l));
  }
  require_valid(I.graph);
  iid_matrices(I, model.matrix_seed);
  const double N = static_cast<double>(I.graph.N());
  const double d = static_cast<double>(model.d);
  const double c = std::sqrt(N / d);

  SeededRng data(model.data_seed);
  Stream sv = data.stream("spike");
  S.v0.resize(model.d, 1);
  for (int i = 0; i < model.d; ++i) S.v0(i, 0) = sv.uniform_at(static_cast<std::uint64_t>(i)) < 0.5 ? -1.0 : 1.0;
  gaussian_init(I, data, 1.0);
  I.x0[S.loop] = model.eps_init * S.v0 + standard_normal(data.stream("init", S.loop.label()), model.d, 1);
  I.side[S.loop]["v0"] = S.v0;
  I.moment_keys[S.loop] = {"v0"};
  for (std::size_t l = 1; l < dims.size(); ++l) {
    for (const auto& e : canonical_edge_order(I.graph))
      if (e.start == layer_name(l)) I.side[e]["teacher"] = Mat::Zero(dims[l], 1);
  }
  for (const auto& e : canonical_edge_order(I.graph))
    if (e.start == "v0" && !e.is_loop()) I.side[e]["teacher"] = Mat::Zero(model.d, 1);

  const double sl = std::sqrt(model.lambda);
  const EdgeId loop = S.loop;
  const GraphSpec g = I.graph;
  const int rev = input_index(g, loop, loop);
  const int arity = static_cast<int>(edges_into(g, loop).size());
  std::map<EdgeId, Nonlinearity> prior;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const EdgeId up{layer_name(l - 1), layer_name(l)};
    prior[up] = chain_up(g, up, "");
    prior[up.reversed()] = chain_down(g, up.reversed(), "teacher", false);
  }
  I.family = [=](int t, const EdgeId& e, const StepContext& ctx) -> Nonlinearity {
    if (e != loop) return prior.at(e);
    const double mu = t == 0 ? 0.0 : sl * static_cast<double>(ctx.N()) * ctx.moment(loop, t - 1, "v0")(0, 0) / (c * d);
    return scalar_row_fn("spiked_tanh", arity, {"v0"},
                         [=](const std::vector<double>& x, const std::vector<double>& s, double* gr) {
                           double a = x[rev] + mu * s[0];
                           for (int j = 0; j < arity; ++j) {
                             gr[j] = 0.0;
                             if (j != rev) a += 0.2 * x[j];
                           }
                           const double th = std::tanh(a);
                           const double dth = 1.0 - th * th;
                           for (int j = 0; j < arity; ++j) gr[j] = c * (j == rev ? 1.0 : 0.2) * dth;
                           return c * th;
                         });
  };
  return S;
}

Observable SpikedInstance::overlap_obs() const {
  Observable o;
  o.name = "overlap";
  o.edge = loop.label();
  const EdgeId e = loop;
  const double c = std::sqrt(static_cast<double>(inst.graph.N()) / static_cast<double>(v0.rows()));
  o.fn = [e, c](const IterateView& v, int t) {
    const Mat& s = v.side(e).at("v0");
    return (s.array() * v.m(e, t).array()).sum() / (c * static_cast<double>(s.rows()));
  };
  return o;
}

Mat SpikedInstance::Y() const {
  const double d = static_cast<double>(v0.rows());
  const double c = std::sqrt(static_cast<double>(inst.graph.N()) / d);
  return (std::sqrt(lambda) / d) * v0 * v0.transpose() + c * inst.matrix(loop);
}

GmmInstance build_gmm_spatial_instance(const GmmSpatialModel& model_in) {
  GmmSpatialModel model = model_in;
  const int K = static_cast<int>(model.cluster_sizes.size());
  const int d = model.d;
  if (K < 2) fail(ErrorKind::config, "GMM needs at least two clusters");
  if (d < 1) fail(ErrorKind::config, "GMM needs d >= 1");
  for (int nk : model.cluster_sizes)
    if (nk < 1) fail(ErrorKind::config, "GMM cluster sizes must be positive");
  if (model.feature_blocks.empty()) model.feature_blocks = {d};
  if (model.sigma.size() == 0) model.sigma = Mat::Ones(K, static_cast<long>(model.feature_blocks.size()));
  long total = 0;
  for (int b : model.feature_blocks) total += b;
  if (total != d) fail(ErrorKind::config, "GMM feature blocks sum to " + std::to_string(total) + ", expected d = " + std::to_string(d));
  if (model.sigma.rows() != K || model.sigma.cols() != static_cast<long>(model.feature_blocks.size()))
    fail(ErrorKind::config, "GMM sigma must be " + std::to_string(K) + "x" + std::to_string(model.feature_blocks.size()));
  if ((model.sigma.array() <= 0).any()) fail(ErrorKind::config, "GMM block variances must be positive");
  if (!(model.lambda > 0)) fail(ErrorKind::config, "GMM ridge penalty must be positive");
  if (!(model.mean_step > 0 && model.mean_step <= 1)) fail(ErrorKind::config, "GMM mean_step must be in (0, 1]");

  GmmInstance G;
  G.model = model;
  G.K = K;
  GraphInstance& I = G.inst;
  I.name = "gmm_spatial";
  I.graph.add_vertex("w", d);
  std::vector<std::string> cn;
  for (int k = 0; k < K; ++k) {
    cn.push_back("c" + std::to_string(k));
    I.graph.add_vertex(cn[k], model.cluster_sizes[k]);
    I.graph.add_pair(cn[k], "w", K);
  }
  require_valid(I.graph);
  const double N = static_cast<double>(I.graph.N());
  const double dd = static_cast<double>(d);
  G.c = std::sqrt(N / dd);
  const double c = G.c;

  SeededRng data(model.data_seed), mats(model.matrix_seed);
  G.means.resize(d, K);
  std::vector<Vec> sdiag;
  for (int k = 0; k < K; ++k) {
    Vec m = standard_normal(data.stream("means", cn[k]), d, 1).col(0);
    G.means.col(k) = model.mean_norm * m / m.norm();
    Vec sd(d);
    long off = 0;
    for (std::size_t j = 0; j < model.feature_blocks.size(); ++j) {
      sd.segment(off, model.feature_blocks[j]).setConstant(std::sqrt(model.sigma(k, static_cast<long>(j))));
      off += model.feature_blocks[j];
    }
    sdiag.push_back(sd);
    G.factors.push_back(sd.asDiagonal());
    G.Z.push_back(sample_iid(model.cluster_sizes[k], d, dd, mats.stream("matrix", cn[k])));
  }
  long n_total = 0;
  for (int nk : model.cluster_sizes) n_total += nk;
  G.X.resize(n_total, d);
  G.Y = Mat::Zero(n_total, K);
  long row = 0;
  for (int k = 0; k < K; ++k) {
    const long nk = model.cluster_sizes[k];
    G.X.middleRows(row, nk) = G.Z[k] * sdiag[k].asDiagonal();
    G.X.middleRows(row, nk).rowwise() += G.means.col(k).transpose() / std::sqrt(dd);
    G.Y.block(row, k, nk, 1).setOnes();
    row += nk;
  }
  G.X_test.resize(model.test_size, d);
  G.Y_test = Mat::Zero(model.test_size, K);
  {
    const Mat Zt = standard_normal(data.stream("test"), model.test_size, d) / std::sqrt(dd);
    for (int i = 0; i < model.test_size; ++i) {
      const int k = i % K;
      G.X_test.row(i) = Zt.row(i) * sdiag[k].asDiagonal();
      G.X_test.row(i) += G.means.col(k).transpose() / std::sqrt(dd);
      G.Y_test(i, k) = 1.0;
    }
  }

  for (int k = 0; k < K; ++k) {
    const EdgeId in{cn[k], "w"}, out{"w", cn[k]};
    const EdgeId key = storage_key(in);
    I.matrices[key] = key == in ? Mat(G.Z[k].transpose() / c) : Mat(G.Z[k] / c);
    I.x0[in] = Mat::Zero(d, K);
    I.x0[out] = Mat::Zero(model.cluster_sizes[k], K);
    I.side[in]["ones"] = Mat::Ones(model.cluster_sizes[k], 1);
    I.side[out]["smu"] = (G.means.col(k).array() / sdiag[k].array()).matrix() / std::sqrt(dd);
    I.moment_keys[in] = {"ones"};
    I.moment_keys[out] = {"smu"};
  }
  row = 0;
  for (int k = 0; k < K; ++k) {
    const long nk = model.cluster_sizes[k];
    I.side[EdgeId{cn[k], "w"}]["Y"] = G.Y.middleRows(row, nk);
    row += nk;
  }
  I.allow_degenerate = true;

  // Input slot of x_(c_j,w) among the edges into w.
  std::vector<int> slot(K);
  {
    const auto in = edges_into(I.graph, EdgeId{"w", cn[0]});
    for (int k = 0; k < K; ++k)
      slot[k] = static_cast<int>(std::find(in.begin(), in.end(), EdgeId{cn[k], "w"}) - in.begin());
  }
  const double lambda = model.lambda, beta0 = model.beta0, mean_step = model.mean_step;
  const Mat means = G.means;
  I.family = [=](int t, const EdgeId& e, const StepContext& ctx) -> Nonlinearity {
    const bool to_w = e.end == "w";
    const int k = to_w ? std::stoi(e.start.substr(1)) : std::stoi(e.end.substr(1));
    if ((t % 2 == 0) != to_w) return zero_fn(K);
    if (to_w) {
      const EdgeId rev{"w", cn[k]};
      const double V = t == 0 ? beta0 : c * mean_diag(ctx.onsager(rev, t - 1));
      Mat shift = Mat::Zero(1, K);
      if (t > 0) shift = (static_cast<double>(ctx.N()) / c) * ctx.moment(rev, t - 1, "smu");
      Nonlinearity f;
      f.name = "gmm_residual";
      f.row_separable = true;
      f.fn = [=](const Inputs& in, const SideData& side) -> Mat {
        Mat om = in.at(0);
        om.rowwise() += shift.row(0);
        return c * (side.at("Y") - om) / (1.0 + V);
      };
      f.trace = [=](const Inputs& in, const SideData&, int) -> Mat {
        return Mat(Mat::Identity(K, K) * (-c * static_cast<double>(in.at(0).rows()) / (1.0 + V)));
      };
      return f;
    }
    // Feature side: u = sum_j S_j x_j + sum_j mu_j (1^T h_j) / sqrt(d), W = (lambda + D)^{-1} u.
    Vec Ddiag = Vec::Zero(d);
    Mat mean_term = Mat::Zero(d, K);
    for (int j = 0; j < K; ++j) {
      const EdgeId hj{cn[j], "w"};
      const double bt = c * mean_diag(ctx.onsager(hj, t - 1));
      Ddiag -= bt * sdiag[j].cwiseAbs2();
      Mat ones_h = Mat::Zero(1, K);
      for (int s = 0; s <= t - 1; s += 2) {
        const Mat fresh = (static_cast<double>(ctx.N()) / c) * ctx.moment(hj, s, "ones");
        ones_h = s == 0 ? fresh : Mat((1.0 - mean_step) * ones_h + mean_step * fresh);
      }
      mean_term += means.col(j) * ones_h / std::sqrt(dd);
    }
    const Vec Minv = (Ddiag.array() + lambda).inverse().matrix();
    Nonlinearity f;
    f.name = "gmm_ridge";
    f.row_separable = true;
    f.fn = [=](const Inputs& in, const SideData&) -> Mat {
      Mat u = mean_term;
      for (int j = 0; j < K; ++j) u += sdiag[j].asDiagonal() * in.at(slot[j]);
      return c * (sdiag[k].cwiseProduct(Minv)).asDiagonal() * u;
    };
    f.trace = [=](const Inputs&, const SideData&, int wrt) -> Mat {
      int j = 0;
      while (j < K && slot[j] != wrt) ++j;
      const double tr = sdiag[k].cwiseProduct(Minv).cwiseProduct(sdiag[j]).sum();
      return Mat(Mat::Identity(K, K) * (c * tr));
    };
    return f;
  };
  return G;
}

Mat GmmInstance::estimate(const AmpTrajectory& traj, int t) const {
  const int s = t % 2 == 1 ? t : t - 1;
  if (s < 1) return Mat::Zero(model.d, K);
  const EdgeId e{"w", "c0"};
  return factors[0].diagonal().cwiseInverse().asDiagonal() * traj.at(s, e).m / c;
}

double GmmInstance::accuracy(const Mat& W) const {
  const Mat scores = X_test * W;
  long hit = 0;
  for (long i = 0; i < scores.rows(); ++i) {
    long pred = 0, truth = 0;
    scores.row(i).maxCoeff(&pred);
    Y_test.row(i).maxCoeff(&truth);
    hit += pred == truth;
  }
  return static_cast<double>(hit) / static_cast<double>(scores.rows());
}

Mat GmmInstance::ridge_baseline() const { return ridge_direct(X, Y, model.lambda); }

namespace {

Nonlinearity committee_denoiser(double theta, double alpha, double c, int q) {
  Nonlinearity f;
  f.name = "committee_gst";
  f.row_separable = true;
  f.fn = [=](const Inputs& in, const SideData& side) -> Mat {
    const Mat& x0 = side.at("x0");
    Mat r = x0 + alpha * in.at(0);
    for (long i = 0; i < r.rows(); ++i) {
      const double nr = r.row(i).norm();
      r.row(i) *= nr > theta ? 1.0 - theta / nr : 0.0;
    }
    return c * (r - x0);
  };
  f.trace = [=](const Inputs& in, const SideData& side, int) -> Mat {
    const Mat r = side.at("x0") + alpha * in.at(0);
    Mat J = Mat::Zero(q, q);
    for (long i = 0; i < r.rows(); ++i) {
      const double nr = r.row(i).norm();
      if (nr <= theta) continue;
      const Vec ri = r.row(i).transpose();
      J += (1.0 - theta / nr) * Mat::Identity(q, q) + (theta / (nr * nr * nr)) * ri * ri.transpose();
    }
    return c * alpha * J;
  };
  return f;
}

}  // namespace

CommitteeInstance build_committee_instance(const CommitteeModel& model) {
  if (model.n < 1 || model.d < 1 || model.q < 1) fail(ErrorKind::config, "committee dimensions must be positive");
  if (!(model.V > -1.0) || !(model.alpha > 0) || !(model.theta >= 0))
    fail(ErrorKind::config, "committee needs V > -1, alpha > 0 and theta >= 0");
  CommitteeInstance C;
  GraphInstance& I = C.inst;
  I.name = "committee";
  I.graph.add_vertex("v", static_cast<int>(model.d)).add_vertex("w", static_cast<int>(model.n));
  I.graph.add_pair("v", "w", model.q);
  const double N = static_cast<double>(I.graph.N());
  const double d = static_cast<double>(model.d);
  C.c = std::sqrt(N / d);
  const Mat A = sample_iid(model.n, model.d, d, SeededRng(model.matrix_seed).stream("matrix", "(v,w)"));
  I.matrices[EdgeId{"v", "w"}] = A / C.c;
  SeededRng data(model.data_seed);
  C.x0 = standard_normal(data.stream("teacher"), model.d, model.q);
  Stream sup = data.stream("support");
  for (long i = 0; i < model.d; ++i)
    if (sup.uniform_at(static_cast<std::uint64_t>(i)) >= model.sparsity) C.x0.row(i).setZero();
  C.w = model.noise_std * standard_normal(data.stream("noise"), model.n, model.q);
  I.x0[C.fwd] = Mat::Zero(model.n, model.q);
  I.x0[C.bwd] = Mat::Zero(model.d, model.q);
  I.allow_degenerate = true;
  I.side[C.fwd]["x0"] = C.x0;
  I.side[C.bwd]["w"] = C.w;

  const double c = C.c, V = model.V, alpha = model.alpha, theta = model.theta;
  const int q = model.q;
  const EdgeId fwd = C.fwd, bwd = C.bwd;
  I.family = [=](int t, const EdgeId& e, const StepContext&) -> Nonlinearity {
    if (t == 0) return e == fwd ? constant_fn("x0", -c) : zero_fn(q);
    if (t % 2 == 1) {
      if (e == fwd) return zero_fn(q);
      return output_denoiser(ProxSpec{ProxKind::squared}, V, c, "w");
    }
    if (e == bwd) return zero_fn(q);
    return committee_denoiser(theta, alpha, c, q);
  };
  return C;
}

Observable CommitteeInstance::mse_obs() const {
  Observable o;
  o.name = "mse";
  o.edge = fwd.label();
  const EdgeId e = fwd;
  const double cc = c;
  o.fn = [e, cc](const IterateView& v, int t) {
    const Mat& m = v.m(e, t - t % 2);
    return m.squaredNorm() / (cc * cc * static_cast<double>(m.rows()));
  };
  return o;
}

Nonlinearity wrap_covariance(const Nonlinearity& f, const Mat& factor) {
  if (factor.rows() != factor.cols()) fail(ErrorKind::config, "covariance factor must be square");
  Eigen::LLT<Mat> llt(factor);
  if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "covariance factor is not positive definite");
  Nonlinearity g = precompose(f, llt.solve(Mat::Identity(factor.rows(), factor.cols())));
  g.name = f.name + "_cov";
  return g;
}

}  // namespace graphamp
