#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graphamp/types.hpp"

namespace graphamp {

using Inputs = std::vector<Mat>;
using ApplyFn = std::function<Mat(const Inputs&, const SideData&)>;
// Un-normalized Onsager block: sum over rows i of d out_i / d in[wrt]_i.
using TraceFn = std::function<Mat(const Inputs&, const SideData&, int wrt)>;
// Per-row Jacobians of a row-separable function, one row per data row,
// flattened as [a * q_in + c] = d out(i,a) / d in[wrt](i,c).
using RowJacFn = std::function<Mat(const Inputs&, const SideData&, int wrt)>;

struct Nonlinearity {
  std::string name = "custom";
  std::vector<Shape> in_shapes;  // empty: accept any shapes
  std::optional<Shape> out_shape;
  int order_k = 1;
  // Row i of the output depends on row i of the inputs only.
  bool row_separable = false;
  bool is_zero = false;
  ApplyFn fn;
  TraceFn trace;
  RowJacFn row_jac;

  int arity() const { return static_cast<int>(in_shapes.size()); }
};

Mat apply(const Nonlinearity& f, const Inputs& in, const SideData& side = {});

struct TraceResult {
  Mat block;
  bool analytic = true;
  // Set when the finite-difference stencil straddled a kink.
  bool kink_flag = false;
};

TraceResult jacobian_trace(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt);
Mat fd_jacobian_trace(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt, bool* kink = nullptr);
double fd_step(double x);

// Full Jacobian of row i of the output w.r.t. row i of input `wrt`,
// summed over rows, but also returning off-row mass (separability probe).
struct JacobianProbe {
  Mat diag_block;
  double off_row_mass = 0.0;
};
JacobianProbe fd_jacobian_probe(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt);

double soft_threshold(double x, double gamma);

// Library
Nonlinearity identity_fn();
Nonlinearity zero_fn(long cols = -1);
Nonlinearity scaled_identity(double a);
Nonlinearity soft_threshold_fn(double gamma);
Nonlinearity tanh_fn(double gain = 1.0);
Nonlinearity relu_fn();
Nonlinearity square_fn();
// X -> X W^T for a fixed q_out x q_in mixing matrix.
Nonlinearity linear_fn(const Mat& W);
// Row-wise group soft threshold: r -> r max(0, 1 - gamma/|r|).
Nonlinearity group_soft_threshold_fn(double gamma);
Nonlinearity entrywise(std::string name, std::function<double(double)> f, std::function<double(double)> df,
                       int order_k = 1);

// c * f, used to move an edge from its natural variance scale to the global N.
Nonlinearity rescale(Nonlinearity f, double c);
// Σ^{1/2}-absorbed version x -> S f(S^{-1} x) is built in model_zoo; this one
// composes on the input side: x -> f(B x) with B square (n x n).
Nonlinearity precompose(Nonlinearity f, const Mat& B);
// x -> B f(x).
Nonlinearity postcompose(Nonlinearity f, const Mat& B);

struct PlEstimate {
  int k = 1;
  double L = 0.0;
};
// Empirical max of the pseudo-Lipschitz ratio over random pairs of inputs.
PlEstimate estimate_pl_constant(const Nonlinearity& f, Shape in_shape, int budget, std::uint64_t seed = 1);

}  // namespace graphamp
