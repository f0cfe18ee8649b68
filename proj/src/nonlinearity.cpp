#include "graphamp/nonlinearity.hpp"

#include <cmath>
#include <limits>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

Mat apply(const Nonlinearity& f, const Inputs& in, const SideData& side) {
  if (!f.in_shapes.empty()) {
    if (in.size() != f.in_shapes.size())
      fail(ErrorKind::logic, f.name + ": expected " + std::to_string(f.in_shapes.size()) + " input blocks, received " +
                                 std::to_string(in.size()));
    for (size_t i = 0; i < in.size(); ++i)
      if (shape_of(in[i]) != f.in_shapes[i])
        fail(ErrorKind::logic, f.name + ": input " + std::to_string(i) + " expected shape " +
                                   to_string(f.in_shapes[i]) + ", received " + to_string(shape_of(in[i])));
  }
  Mat out = f.fn(in, side);
  if (f.out_shape && shape_of(out) != *f.out_shape)
    fail(ErrorKind::logic,
         f.name + ": output expected shape " + to_string(*f.out_shape) + ", produced " + to_string(shape_of(out)));
  return out;
}

double fd_step(double x) { return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + std::abs(x)); }

namespace {

bool straddles(double plus, double minus, double center, double h) {
  const double fwd = (plus - center) / h;
  const double bwd = (center - minus) / h;
  return std::abs(fwd - bwd) > 1e-3 * (1.0 + std::abs(fwd) + std::abs(bwd));
}

}  // namespace

Mat fd_jacobian_trace(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt, bool* kink) {
  if (wrt < 0 || wrt >= static_cast<int>(in.size())) fail(ErrorKind::logic, f.name + ": wrt block out of range");
  const Mat& x = in[wrt];
  const long n = x.rows(), qi = x.cols();
  const Mat base = f.fn(in, side);
  const long qo = base.cols();
  if (base.rows() != n)
    fail(ErrorKind::logic, f.name + ": jacobian trace requires output rows to match the reversed-edge input rows");
  Mat J = Mat::Zero(qo, qi);
  bool kinked = false;
  Inputs work = in;

  if (f.row_separable) {
    for (long c = 0; c < qi; ++c) {
      Vec h(n);
      for (long i = 0; i < n; ++i) h(i) = fd_step(x(i, c));
      work[wrt].col(c) = x.col(c) + h;
      const Mat plus = f.fn(work, side);
      work[wrt].col(c) = x.col(c) - h;
      const Mat minus = f.fn(work, side);
      work[wrt].col(c) = x.col(c);
      for (long i = 0; i < n; ++i)
        for (long a = 0; a < qo; ++a) {
          J(a, c) += (plus(i, a) - minus(i, a)) / (2.0 * h(i));
          if (kink && !kinked) kinked = straddles(plus(i, a), minus(i, a), base(i, a), h(i));
        }
    }
  } else {
    for (long i = 0; i < n; ++i)
      for (long c = 0; c < qi; ++c) {
        const double h = fd_step(x(i, c));
        work[wrt](i, c) = x(i, c) + h;
        const Mat plus = f.fn(work, side);
        work[wrt](i, c) = x(i, c) - h;
        const Mat minus = f.fn(work, side);
        work[wrt](i, c) = x(i, c);
        for (long a = 0; a < qo; ++a) {
          J(a, c) += (plus(i, a) - minus(i, a)) / (2.0 * h);
          if (kink && !kinked) kinked = straddles(plus(i, a), minus(i, a), base(i, a), h);
        }
      }
  }
  if (kink) *kink = kinked;
  return J;
}

JacobianProbe fd_jacobian_probe(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt) {
  const Mat& x = in[wrt];
  const long n = x.rows(), qi = x.cols();
  Inputs work = in;
  JacobianProbe p;
  for (long i = 0; i < n; ++i)
    for (long c = 0; c < qi; ++c) {
      const double h = fd_step(x(i, c));
      work[wrt](i, c) = x(i, c) + h;
      const Mat plus = f.fn(work, side);
      work[wrt](i, c) = x(i, c) - h;
      const Mat minus = f.fn(work, side);
      work[wrt](i, c) = x(i, c);
      const Mat d = (plus - minus) / (2.0 * h);
      if (p.diag_block.size() == 0) p.diag_block = Mat::Zero(d.cols(), qi);
      for (long r = 0; r < d.rows(); ++r) {
        if (r == i)
          p.diag_block.col(c) += d.row(r).transpose();
        else
          p.off_row_mass += d.row(r).squaredNorm();
      }
    }
  return p;
}

TraceResult jacobian_trace(const Nonlinearity& f, const Inputs& in, const SideData& side, int wrt) {
  TraceResult r;
  if (f.is_zero) {
    const long qo = f.out_shape ? f.out_shape->cols : f.fn(in, side).cols();
    r.block = Mat::Zero(qo, in.at(wrt).cols());
    return r;
  }
  if (f.trace) {
    r.block = f.trace(in, side, wrt);
    return r;
  }
  r.analytic = false;
  r.block = fd_jacobian_trace(f, in, side, wrt, &r.kink_flag);
  return r;
}

namespace {

Mat flatten_diag(const Mat& d) {
  const long n = d.rows(), q = d.cols();
  Mat out = Mat::Zero(n, q * q);
  for (long c = 0; c < q; ++c) out.col(c * q + c) = d.col(c);
  return out;
}

}  // namespace

Nonlinearity entrywise(std::string name, std::function<double(double)> f, std::function<double(double)> df,
                       int order_k) {
  Nonlinearity g;
  g.name = std::move(name);
  g.order_k = order_k;
  g.row_separable = true;
  g.fn = [f](const Inputs& in, const SideData&) -> Mat { return in.at(0).unaryExpr(f); };
  g.trace = [df](const Inputs& in, const SideData&, int wrt) -> Mat {
    if (wrt != 0) return Mat::Zero(in.at(0).cols(), in.at(wrt).cols());
    return in[0].unaryExpr(df).colwise().sum().transpose().asDiagonal();
  };
  g.row_jac = [df](const Inputs& in, const SideData&, int wrt) -> Mat {
    if (wrt != 0) return Mat::Zero(in.at(0).rows(), in.at(0).cols() * in.at(wrt).cols());
    return flatten_diag(in[0].unaryExpr(df));
  };
  return g;
}

Nonlinearity identity_fn() {
  return entrywise(
      "identity", [](double x) { return x; }, [](double) { return 1.0; });
}

Nonlinearity scaled_identity(double a) {
  return entrywise(
      "scaled_identity", [a](double x) { return a * x; }, [a](double) { return a; });
}

Nonlinearity zero_fn(long cols) {
  Nonlinearity g;
  g.name = "zero";
  g.is_zero = true;
  g.row_separable = true;
  g.fn = [cols](const Inputs& in, const SideData&) -> Mat {
    const Mat& x = in.at(0);
    return Mat::Zero(x.rows(), cols < 0 ? x.cols() : cols);
  };
  g.trace = [cols](const Inputs& in, const SideData&, int wrt) -> Mat {
    return Mat::Zero(cols < 0 ? in.at(0).cols() : cols, in.at(wrt).cols());
  };
  return g;
}

double soft_threshold(double x, double gamma) {
  if (x > gamma) return x - gamma;
  if (x < -gamma) return x + gamma;
  return 0.0;
}

Nonlinearity soft_threshold_fn(double gamma) {
  return entrywise(
      "soft_threshold", [gamma](double x) { return soft_threshold(x, gamma); },
      [gamma](double x) { return std::abs(x) > gamma ? 1.0 : 0.0; });
}

Nonlinearity tanh_fn(double gain) {
  return entrywise(
      "tanh", [gain](double x) { return std::tanh(gain * x); },
      [gain](double x) {
        const double t = std::tanh(gain * x);
        return gain * (1.0 - t * t);
      });
}

Nonlinearity relu_fn() {
  return entrywise(
      "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Nonlinearity square_fn() {
  return entrywise(
      "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; }, 2);
}

Nonlinearity linear_fn(const Mat& W) {
  Nonlinearity g;
  g.name = "linear";
  g.row_separable = true;
  g.fn = [W](const Inputs& in, const SideData&) -> Mat { return in.at(0) * W.transpose(); };
  g.trace = [W](const Inputs& in, const SideData&, int wrt) -> Mat {
    if (wrt != 0) return Mat::Zero(W.rows(), in.at(wrt).cols());
    return static_cast<double>(in[0].rows()) * W;
  };
  g.row_jac = [W](const Inputs& in, const SideData&, int) -> Mat {
    const long n = in.at(0).rows();
    Mat out(n, W.size());
    for (long a = 0; a < W.rows(); ++a)
      for (long c = 0; c < W.cols(); ++c) out.col(a * W.cols() + c).setConstant(W(a, c));
    return out;
  };
  return g;
}

Nonlinearity group_soft_threshold_fn(double gamma) {
  Nonlinearity g;
  g.name = "group_soft_threshold";
  g.row_separable = true;
  g.fn = [gamma](const Inputs& in, const SideData&) -> Mat {
    Mat out = in.at(0);
    for (long i = 0; i < out.rows(); ++i) {
      const double r = out.row(i).norm();
      out.row(i) *= r > gamma ? 1.0 - gamma / r : 0.0;
    }
    return out;
  };
  auto rowjac = [gamma](const Inputs& in, const SideData&, int wrt) -> Mat {
    const Mat& x = in.at(0);
    const long n = x.rows(), q = x.cols();
    Mat out = Mat::Zero(n, q * q);
    if (wrt != 0) return out;
    for (long i = 0; i < n; ++i) {
      const double r = x.row(i).norm();
      if (r <= gamma) continue;
      for (long a = 0; a < q; ++a)
        for (long c = 0; c < q; ++c)
          out(i, a * q + c) = (a == c ? 1.0 - gamma / r : 0.0) + gamma * x(i, a) * x(i, c) / (r * r * r);
    }
    return out;
  };
  g.row_jac = rowjac;
  g.trace = [rowjac](const Inputs& in, const SideData& side, int wrt) -> Mat {
    const long q = in.at(0).cols();
    const Vec s = rowjac(in, side, wrt).colwise().sum().transpose();
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s.data(), q, q);
  };
  return g;
}

Nonlinearity rescale(Nonlinearity f, double c) {
  Nonlinearity g = f;
  g.name = f.name + "*" + std::to_string(c);
  g.fn = [inner = f.fn, c](const Inputs& in, const SideData& side) -> Mat { return c * inner(in, side); };
  if (f.trace)
    g.trace = [inner = f.trace, c](const Inputs& in, const SideData& side, int wrt) -> Mat {
      return c * inner(in, side, wrt);
    };
  if (f.row_jac)
    g.row_jac = [inner = f.row_jac, c](const Inputs& in, const SideData& side, int wrt) -> Mat {
      return c * inner(in, side, wrt);
    };
  return g;
}

namespace {

Mat sum_rows_weighted(const Mat& rowjac, const Vec& w, long qo, long qi) {
  const Vec s = (rowjac.transpose() * w);
  Mat out(qo, qi);
  for (long a = 0; a < qo; ++a)
    for (long c = 0; c < qi; ++c) out(a, c) = s(a * qi + c);
  return out;
}

}  // namespace

Nonlinearity precompose(Nonlinearity f, const Mat& B) {
  if (f.in_shapes.size() > 1) fail(ErrorKind::logic, "precompose supports single-input functions");
  Nonlinearity g;
  g.name = f.name + "_pre";
  g.order_k = f.order_k;
  g.fn = [inner = f.fn, B](const Inputs& in, const SideData& side) -> Mat { return inner({B * in.at(0)}, side); };
  if (f.row_jac && f.row_separable) {
    g.trace = [inner = f.fn, rj = f.row_jac, B](const Inputs& in, const SideData& side, int wrt) -> Mat {
      const Mat y = B * in.at(0);
      const long qi = y.cols();
      const long qo = inner({y}, side).cols();
      if (wrt != 0) return Mat::Zero(qo, qi);
      return sum_rows_weighted(rj({y}, side, 0), B.diagonal(), qo, qi);
    };
  }
  return g;
}

Nonlinearity postcompose(Nonlinearity f, const Mat& B) {
  if (f.in_shapes.size() > 1) fail(ErrorKind::logic, "postcompose supports single-input functions");
  Nonlinearity g;
  g.name = f.name + "_post";
  g.order_k = f.order_k;
  g.fn = [inner = f.fn, B](const Inputs& in, const SideData& side) -> Mat { return B * inner(in, side); };
  if (f.row_jac && f.row_separable) {
    g.trace = [inner = f.fn, rj = f.row_jac, B](const Inputs& in, const SideData& side, int wrt) -> Mat {
      const long qi = in.at(0).cols();
      const long qo = inner(in, side).cols();
      if (wrt != 0) return Mat::Zero(qo, qi);
      return sum_rows_weighted(rj(in, side, 0), B.diagonal(), qo, qi);
    };
  }
  return g;
}

PlEstimate estimate_pl_constant(const Nonlinearity& f, Shape in_shape, int budget, std::uint64_t seed) {
  if (budget < 2) fail(ErrorKind::config, "estimate_pl_constant: probe budget must be >= 2");
  SeededRng rng(seed);
  PlEstimate est;
  est.k = f.order_k;
  const double n = static_cast<double>(in_shape.rows);
  for (int p = 0; p < budget; ++p) {
    Stream s = rng.stream("pl_probe").sub(static_cast<std::uint64_t>(p));
    const double scale = 0.25 + 4.0 * s.uniform_at(0);
    Mat x = scale * standard_normal(s.sub(1), in_shape.rows, in_shape.cols);
    const double eps = (p % 2 == 0) ? 1e-3 : 1.0;
    Mat y = x + eps * standard_normal(s.sub(2), in_shape.rows, in_shape.cols);
    const Mat fx = f.fn({x}, {});
    const Mat fy = f.fn({y}, {});
    const double num = (fx - fy).norm() / std::sqrt(static_cast<double>(fx.rows()));
    double weight = 1.0;
    if (est.k > 1)
      weight = 1.0 + std::pow(x.norm() / std::sqrt(n), est.k - 1) + std::pow(y.norm() / std::sqrt(n), est.k - 1);
    const double den = weight * (x - y).norm() / std::sqrt(n);
    if (den > 0) est.L = std::max(est.L, num / den);
  }
  return est;
}

}  // namespace graphamp
