#pragma once

#include <vector>

#include "graphamp/model_zoo.hpp"

namespace graphamp {

// Scalar overlap state evolution of direct-form GAMP on a teacher-student GLM.
// Step k maps the estimate statistics (m, q, V) to the output-side quantities
// (kappa1, kappa2, nu_tilde, alpha) and the next estimate statistics.
struct GampSEStep {
  double m = 0.0;       // (1/d) x0^T x_hat
  double q = 0.0;       // (1/d) |x_hat|^2
  double V = 0.0;       // beta
  double kappa1 = 0.0;  // q - m^2 / rho
  double kappa2 = 0.0;
  double nu_tilde = 0.0;
  double alpha = 0.0;
};

struct GampSEOptions {
  int gh_order = 41;  // per Gaussian dimension of the output-side expectation
  int gh_order_in = 61;  // input side, when the prox is not piecewise linear
};

struct GampSEResult {
  double rho = 0.0;
  double delta = 0.0;  // n / d
  // steps[k] holds the estimate after k GAMP iterations (k = 0: x_hat = 0).
  std::vector<GampSEStep> steps;

  // Predictions aligned with the graph time of the direct-form instance.
  double overlap_at(int graph_t) const;
  double mse_at(int graph_t) const;
};

// Expectations over x0 use the realized teacher (empirical law).
GampSEResult gamp_overlap_se(const GlmModel& model, const Mat& x0, int iterations, const GampSEOptions& opt = {});

}  // namespace graphamp
