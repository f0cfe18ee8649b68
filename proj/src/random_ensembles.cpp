#include "graphamp/random_ensembles.hpp"

#include <cmath>
#include <numbers>

#include "graphamp/error.hpp"

namespace graphamp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Stream Stream::sub(std::string_view tag) const { return Stream(splitmix64(key_ ^ splitmix64(fnv1a(tag)))); }

Stream Stream::sub(std::uint64_t index) const {
  return Stream(splitmix64(key_ + 0x632be59bd9b4e019ULL * (index + 1)));
}

std::uint64_t Stream::bits(std::uint64_t i) const { return splitmix64(key_ ^ splitmix64(i)); }

double Stream::uniform_at(std::uint64_t i) const { return static_cast<double>(bits(i) >> 11) * 0x1.0p-53; }

double Stream::normal_at(std::uint64_t i) const {
  const std::uint64_t pair = i & ~std::uint64_t{1};
  const double u1 = 1.0 - uniform_at(pair);  // (0,1]
  const double u2 = uniform_at(pair + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return (i & 1) ? r * std::sin(a) : r * std::cos(a);
}

Stream SeededRng::stream(std::string_view purpose) const { return Stream(splitmix64(seed_)).sub(purpose); }

Stream SeededRng::stream(std::string_view purpose, std::string_view edge, std::uint64_t index) const {
  return stream(purpose).sub(edge).sub(index);
}

Mat standard_normal(Stream s, long rows, long cols) {
  Mat z(rows, cols);
  double* p = z.data();
  const long n = rows * cols;
  for (long i = 0; i < n; ++i) p[i] = s.normal_at(static_cast<std::uint64_t>(i));
  return z;
}

Mat sample_iid(long rows, long cols, double scale_N, Stream s) {
  if (rows < 1 || cols < 1) fail(ErrorKind::config, "sample_iid: dims must be >= 1");
  return standard_normal(s, rows, cols) / std::sqrt(scale_N);
}

Mat sample_goe(long n, double scale_N, Stream s) {
  if (n < 1) fail(ErrorKind::config, "sample_goe: n must be >= 1");
  // G + G^T with G_ij ~ N(0, 1/(2 scale_N)).
  Mat g = standard_normal(s, n, n) / std::sqrt(2.0 * scale_N);
  Mat a = g + g.transpose();
  return a;
}

Mat sample_spatially_coupled(const SpatialCouplingSpec& spec, Stream s) {
  const auto nr = static_cast<long>(spec.row_blocks.size());
  const auto nc = static_cast<long>(spec.col_blocks.size());
  if (spec.sigma.rows() != nr || spec.sigma.cols() != nc)
    fail(ErrorKind::config, "spatial coupling: sigma grid is " + std::to_string(spec.sigma.rows()) + "x" +
                                std::to_string(spec.sigma.cols()) + ", block grid is " + std::to_string(nr) + "x" +
                                std::to_string(nc));
  if ((spec.sigma.array() < 0).any()) fail(ErrorKind::config, "spatial coupling: negative variance in sigma grid");
  long rows = 0, cols = 0;
  for (long r : spec.row_blocks) rows += r;
  for (long c : spec.col_blocks) cols += c;
  Mat a = Mat::Zero(rows, cols);
  long r0 = 0;
  for (long i = 0; i < nr; ++i) {
    long c0 = 0;
    for (long j = 0; j < nc; ++j) {
      const double v = spec.sigma(i, j);
      if (v > 0) {
        Stream b = s.sub(static_cast<std::uint64_t>(i * nc + j));
        a.block(r0, c0, spec.row_blocks[i], spec.col_blocks[j]) =
            standard_normal(b, spec.row_blocks[i], spec.col_blocks[j]) * std::sqrt(v / spec.d);
      }
      c0 += spec.col_blocks[j];
    }
    r0 += spec.row_blocks[i];
  }
  return a;
}

Mat spd_sqrt(const Mat& sigma) {
  if (sigma.rows() != sigma.cols()) fail(ErrorKind::config, "covariance factor must be square");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (sigma + sigma.transpose()));
  const Vec& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= 1e-12 * scale)
    fail(ErrorKind::config, "covariance is not positive definite (min eigenvalue " + std::to_string(ev.minCoeff()) + ")");
  Vec root = ev.cwiseMax(1e-12).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Mat sample_correlated_rows(long n, const Mat& factor, double scale_N, Stream s) {
  if (factor.rows() != factor.cols()) fail(ErrorKind::config, "covariance factor must be square");
  return sample_iid(n, factor.rows(), scale_N, s) * factor;
}

Mat sample(const EnsembleSpec& spec, Stream s) {
  using K = EnsembleSpec::Kind;
  switch (spec.kind) {
    case K::goe:
      if (spec.rows != spec.cols) fail(ErrorKind::config, "goe ensemble requires rows == cols");
      return sample_goe(spec.rows, spec.scale_N, s);
    case K::iid_gaussian:
      return sample_iid(spec.rows, spec.cols, spec.scale_N, s);
    case K::spatially_coupled:
      return sample_spatially_coupled(spec.coupling, s);
    case K::correlated:
      return sample_correlated_rows(spec.rows, spec.sigma_factor, spec.scale_N, s);
  }
  fail(ErrorKind::logic, "unknown ensemble kind");
}

}  // namespace graphamp
