#include "graphamp/gamp_se.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "graphamp/error.hpp"
#include "graphamp/state_evolution.hpp"

namespace graphamp {

namespace {

void require_finite(double v, const char* eq, int k) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os << "six-equation state evolution: non-finite value in equation " << eq << " at iteration " << k;
  fail(ErrorKind::numerical, os.str());
}

struct InputMoments {
  double p = 0.0;   // E[p]
  double p2 = 0.0;  // E[p^2]
  double dp = 0.0;  // E[p']
};

double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double phi(double z) { return std::isinf(z) ? 0.0 : std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// Pieces p = c0 + c1 v on v in (lo, hi) for penalties with piecewise linear prox.
struct Piece {
  double lo, hi, c0, c1;
};

bool linear_pieces(const ProxSpec& ps, std::vector<Piece>& out) {
  const double inf = std::numeric_limits<double>::infinity();
  const double th = ps.step();
  switch (ps.kind) {
    case ProxKind::abs: out = {{-inf, -th, th, 1.0}, {-th, th, 0.0, 0.0}, {th, inf, -th, 1.0}}; return true;
    case ProxKind::squared: out = {{-inf, inf, 0.0, 1.0 / (1.0 + th)}}; return true;
    case ProxKind::indicator: out = {{-inf, ps.lo, ps.lo, 0.0}, {ps.lo, ps.hi, 0.0, 1.0}, {ps.hi, inf, ps.hi, 0.0}}; return true;
    default: return false;
  }
}

// Exact Gaussian moments of p(a + b Z).
InputMoments exact_moments(const std::vector<Piece>& pieces, double a, double b) {
  InputMoments m;
  for (const auto& pc : pieces) {
    double z1, z2;
    if (b > 0) {
      z1 = (pc.lo - a) / b;
      z2 = (pc.hi - a) / b;
    } else {
      if (!(a > pc.lo && a <= pc.hi)) continue;
      z1 = -std::numeric_limits<double>::infinity();
      z2 = std::numeric_limits<double>::infinity();
    }
    const double P = Phi(z2) - Phi(z1);
    if (P <= 0) continue;
    const double EZ = phi(z1) - phi(z2);
    const double EZ2 = P + (std::isinf(z1) ? 0.0 : z1 * phi(z1)) - (std::isinf(z2) ? 0.0 : z2 * phi(z2));
    // p = e0 + e1 Z on the piece.
    const double e0 = pc.c0 + pc.c1 * a, e1 = pc.c1 * b;
    m.p += e0 * P + e1 * EZ;
    m.p2 += e0 * e0 * P + 2.0 * e0 * e1 * EZ + e1 * e1 * EZ2;
    m.dp += pc.c1 * P;
  }
  return m;
}

// GAMP iteration count behind the estimate at graph time t.
int step_of(int graph_t) { return graph_t < 1 ? 0 : (graph_t + 1) / 2; }

}  // namespace

double GampSEResult::overlap_at(int graph_t) const {
  return steps.at(static_cast<std::size_t>(step_of(graph_t))).m;
}

double GampSEResult::mse_at(int graph_t) const {
  const auto& s = steps.at(static_cast<std::size_t>(step_of(graph_t)));
  return s.q - 2.0 * s.m + rho;
}

GampSEResult gamp_overlap_se(const GlmModel& model, const Mat& x0m, int iterations, const GampSEOptions& opt) {
  if (x0m.cols() != 1) fail(ErrorKind::config, "six-equation state evolution needs q = 1");
  if (iterations < 0) fail(ErrorKind::config, "iterations must be >= 0");
  const Vec x0 = x0m.col(0);
  const double d = static_cast<double>(x0.size());
  GampSEResult R;
  R.rho = x0.squaredNorm() / d;
  R.delta = static_cast<double>(model.n) / d;
  const double rho = R.rho, delta = R.delta, sr = std::sqrt(rho);
  const Quadrature gh = gauss_hermite(opt.gh_order);
  const Quadrature gi = gauss_hermite(opt.gh_order_in);
  const bool noisy = model.noise_std > 0;
  const int nw = noisy ? opt.gh_order : 1;
  const ProxSpec pen = model.penalty;

  GampSEStep cur;
  cur.V = model.beta0;
  for (int k = 0;; ++k) {
    cur.kappa1 = std::max(0.0, cur.q - (rho > 0 ? cur.m * cur.m / rho : 0.0));
    if (k == iterations) {
      R.steps.push_back(cur);
      break;
    }
    // Output side: expectations over (s, xi, noise). A sign channel is
    // integrated over y in closed form (noisy) or split at s = 0 (noiseless).
    double Eh2 = 0.0, Ehp = 0.0, Esh = 0.0;
    const double a = rho > 0 ? cur.m / sr : 0.0, sk = std::sqrt(cur.kappa1);
    auto accumulate = [&](double w, double s, double om, double y) {
      const ScalarProx h = g_out_scalar(model.loss, cur.V, om, y);
      Eh2 += w * h.p * h.p;
      Ehp += w * h.dp;
      Esh += w * s * h.p;
    };
    for (int i = 0; i < gh.nodes.size(); ++i) {
      for (int j = 0; j < gh.nodes.size(); ++j) {
        const double wij = gh.weights[i] * gh.weights[j];
        if (model.channel == Channel::sign) {
          if (noisy) {
            const double s = gh.nodes[i], om = a * s + sk * gh.nodes[j];
            const double pp = Phi(sr * s / model.noise_std);
            accumulate(wij * pp, s, om, 1.0);
            accumulate(wij * (1.0 - pp), s, om, -1.0);
          } else {
            for (double sg : {1.0, -1.0}) {
              const double s = sg * std::abs(gh.nodes[i]);
              accumulate(0.5 * wij, s, a * s + sk * gh.nodes[j], rho > 0 ? sg : 1.0);
            }
          }
          continue;
        }
        const double s = gh.nodes[i], om = a * s + sk * gh.nodes[j];
        for (int l = 0; l < nw; ++l)
          accumulate(wij * (noisy ? gh.weights[l] : 1.0), s, om,
                     sr * s + (noisy ? model.noise_std * gh.nodes[l] : 0.0));
      }
    }
    cur.kappa2 = delta * Eh2;
    require_finite(cur.kappa2, "kappa2", k);
    cur.alpha = -1.0 / (delta * Ehp);
    require_finite(cur.alpha, "alpha", k);
    cur.nu_tilde = rho > 0 ? cur.m / (rho * cur.alpha) + delta * Esh / sr : 0.0;
    require_finite(cur.nu_tilde, "nu_tilde", k);
    R.steps.push_back(cur);

    // Input side: empirical x0, Gaussian zeta.
    const ProxSpec ps = pen.with_gamma(cur.alpha);
    const double sk2 = std::sqrt(std::max(0.0, cur.kappa2));
    double m = 0.0, q = 0.0, dp = 0.0;
    std::vector<Piece> pieces;
    const bool exact = linear_pieces(ps, pieces);
    for (long i = 0; i < x0.size(); ++i) {
      const double loc = cur.alpha * cur.nu_tilde * x0[i], sc = cur.alpha * sk2;
      if (exact) {
        const InputMoments mo = exact_moments(pieces, loc, sc);
        m += x0[i] * mo.p;
        q += mo.p2;
        dp += mo.dp;
        continue;
      }
      for (int j = 0; j < gi.nodes.size(); ++j) {
        const auto p = prox_scalar(ps, loc + sc * gi.nodes[j], 0.0);
        m += gi.weights[j] * x0[i] * p.p;
        q += gi.weights[j] * p.p * p.p;
        dp += gi.weights[j] * p.dp;
      }
    }
    GampSEStep next;
    next.m = m / d;
    next.q = q / d;
    next.V = cur.alpha * dp / d;
    require_finite(next.m, "m", k + 1);
    require_finite(next.q, "kappa1", k + 1);
    require_finite(next.V, "beta", k + 1);
    cur = next;
  }
  return R;
}

}  // namespace graphamp
