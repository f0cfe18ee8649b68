#include "graphamp/prox.hpp"

#include <cmath>
#include <sstream>

#include "graphamp/error.hpp"
#include "graphamp/nonlinearity.hpp"

namespace graphamp {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool is_convex(ProxKind k) { return k != ProxKind::l0; }

ProxKind parse_prox_kind(const std::string& id) {
  if (id == "abs" || id == "l1") return ProxKind::abs;
  if (id == "squared" || id == "l2") return ProxKind::squared;
  if (id == "logistic") return ProxKind::logistic;
  if (id == "indicator") return ProxKind::indicator;
  if (id == "l0") return ProxKind::l0;
  fail(ErrorKind::config, "unknown prox id '" + id + "'");
}

std::string prox_kind_name(ProxKind k) {
  switch (k) {
    case ProxKind::abs: return "abs";
    case ProxKind::squared: return "squared";
    case ProxKind::logistic: return "logistic";
    case ProxKind::indicator: return "indicator";
    case ProxKind::l0: return "l0";
  }
  return "?";
}

namespace {

ScalarProx logistic_prox(double t, double v, double y) {
  // Root of phi(p) = p - v - t y sigma(-y p), increasing in p.
  auto phi = [&](double p) { return p - v - t * y * sigmoid(-y * p); };
  double lo = v - t * std::abs(y), hi = v + t * std::abs(y);
  double p = v;
  double r = phi(p);
  for (int it = 0; it < 100; ++it) {
    if (std::abs(r) <= 1e-10 * (1.0 + std::abs(v))) {
      const double s = sigmoid(-y * p);
      return {p, 1.0 / (1.0 + t * y * y * s * (1.0 - s))};
    }
    if (r > 0)
      hi = p;
    else
      lo = p;
    const double s = sigmoid(-y * p);
    double next = p - r / (1.0 + t * y * y * s * (1.0 - s));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    p = next;
    r = phi(p);
  }
  std::ostringstream os;
  os << "logistic prox did not converge in 100 iterations (v=" << v << ", residual=" << r << ")";
  fail(ErrorKind::numerical, os.str());
}

}  // namespace

ScalarProx prox_scalar(const ProxSpec& spec, double v, double y) {
  if (!(spec.gamma > 0)) fail(ErrorKind::config, "prox: gamma must be > 0");
  const double t = spec.step();
  switch (spec.kind) {
    case ProxKind::abs: {
      const double p = y + soft_threshold(v - y, t);
      return {p, std::abs(v - y) > t ? 1.0 : 0.0};
    }
    case ProxKind::squared:
      return {(v + t * y) / (1.0 + t), 1.0 / (1.0 + t)};
    case ProxKind::logistic:
      return logistic_prox(t, v, y);
    case ProxKind::indicator: {
      if (v < spec.lo) return {spec.lo, 0.0};
      if (v > spec.hi) return {spec.hi, 0.0};
      return {v, 1.0};
    }
    case ProxKind::l0: {
      const bool keep = v * v > 2.0 * t;
      return {keep ? v : 0.0, keep ? 1.0 : 0.0};
    }
  }
  fail(ErrorKind::logic, "unknown prox kind");
}

namespace {

double default_anchor(const ProxSpec& spec) { return spec.kind == ProxKind::logistic ? 1.0 : 0.0; }

void check_anchor(const Mat& v, const Mat* y) {
  if (y && (y->rows() != v.rows() || y->cols() != v.cols()))
    fail(ErrorKind::logic, "prox: anchor shape " + to_string(shape_of(*y)) + " does not match input " +
                               to_string(shape_of(v)));
}

}  // namespace

Mat prox(const ProxSpec& spec, const Mat& v, const Mat* y) {
  check_anchor(v, y);
  Mat out(v.rows(), v.cols());
  const double y0 = default_anchor(spec);
  for (long j = 0; j < v.cols(); ++j)
    for (long i = 0; i < v.rows(); ++i) out(i, j) = prox_scalar(spec, v(i, j), y ? (*y)(i, j) : y0).p;
  return out;
}

Mat prox_derivative(const ProxSpec& spec, const Mat& v, const Mat* y) {
  check_anchor(v, y);
  Mat out(v.rows(), v.cols());
  const double y0 = default_anchor(spec);
  for (long j = 0; j < v.cols(); ++j)
    for (long i = 0; i < v.rows(); ++i) out(i, j) = prox_scalar(spec, v(i, j), y ? (*y)(i, j) : y0).dp;
  return out;
}

Mat shifted_prox(const ProxSpec& spec, const Mat& shift, const Mat& v, const Mat* y) {
  if (shift.rows() != v.rows() || shift.cols() != v.cols())
    fail(ErrorKind::logic, "shifted_prox: shift shape " + to_string(shape_of(shift)) + " does not match input " +
                               to_string(shape_of(v)));
  if (shift.isZero(0.0)) return prox(spec, v, y);
  return prox(spec, shift + v, y) - shift;
}

double prox_fn_value(const ProxSpec& spec, double p, double y) {
  switch (spec.kind) {
    case ProxKind::abs: return std::abs(p - y);
    case ProxKind::squared: return 0.5 * (p - y) * (p - y);
    case ProxKind::logistic: return std::log1p(std::exp(-y * p));
    case ProxKind::indicator: return (p >= spec.lo && p <= spec.hi) ? 0.0 : 1e300;
    case ProxKind::l0: return p != 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double prox_fn_grad(const ProxSpec& spec, double p, double y) {
  switch (spec.kind) {
    case ProxKind::abs: return p > y ? 1.0 : (p < y ? -1.0 : 0.0);
    case ProxKind::squared: return p - y;
    case ProxKind::logistic: return -y * sigmoid(-y * p);
    default: return 0.0;
  }
}

}  // namespace graphamp
