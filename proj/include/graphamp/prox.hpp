#pragma once

#include <string>

#include "graphamp/types.hpp"

namespace graphamp {

enum class ProxKind { abs, squared, logistic, indicator, l0 };

// prox of gamma * weight * f(p; y), where y is an optional per-entry anchor:
//   abs       |p - y|
//   squared   (p - y)^2 / 2
//   logistic  log(1 + exp(-y p)), labels y in {-1, +1} (default +1)
//   indicator p in [lo, hi]
//   l0        1{p != 0}  (non-convex, hard threshold)
struct ProxSpec {
  ProxKind kind = ProxKind::squared;
  double gamma = 1.0;
  double weight = 1.0;
  double lo = 0.0;
  double hi = 1e300;

  double step() const { return gamma * weight; }
  ProxSpec with_gamma(double g) const {
    ProxSpec s = *this;
    s.gamma = g;
    return s;
  }
};

bool is_convex(ProxKind k);
ProxKind parse_prox_kind(const std::string& id);
std::string prox_kind_name(ProxKind k);

struct ScalarProx {
  double p = 0.0;
  double dp = 0.0;  // d p / d v
};

ScalarProx prox_scalar(const ProxSpec& spec, double v, double y);

Mat prox(const ProxSpec& spec, const Mat& v, const Mat* y = nullptr);
Mat prox_derivative(const ProxSpec& spec, const Mat& v, const Mat* y = nullptr);
// prox(shift + v) - shift
Mat shifted_prox(const ProxSpec& spec, const Mat& shift, const Mat& v, const Mat* y = nullptr);

// Value and gradient of the (unscaled) function, for optimality checks.
double prox_fn_value(const ProxSpec& spec, double p, double y);
double prox_fn_grad(const ProxSpec& spec, double p, double y);

double sigmoid(double z);

}  // namespace graphamp
