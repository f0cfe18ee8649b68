#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "graphamp/types.hpp"

namespace graphamp {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

// Counter-based stream: draw i is a pure function of (key, i).
// Normals use Box-Muller on consecutive uniform pairs, cosine branch for even
// counters and sine branch for odd ones.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }
  Stream sub(std::string_view tag) const;
  Stream sub(std::uint64_t index) const;

  std::uint64_t bits(std::uint64_t i) const;
  double uniform_at(std::uint64_t i) const;  // [0,1)
  double normal_at(std::uint64_t i) const;

  double uniform() { return uniform_at(counter_++); }
  double normal() { return normal_at(counter_++); }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t master_seed) : seed_(master_seed) {}
  std::uint64_t seed() const { return seed_; }
  // Hierarchical key: purpose tag, then edge label, then index.
  Stream stream(std::string_view purpose) const;
  Stream stream(std::string_view purpose, std::string_view edge, std::uint64_t index = 0) const;

 private:
  std::uint64_t seed_;
};

Mat standard_normal(Stream s, long rows, long cols);

Mat sample_iid(long rows, long cols, double scale_N, Stream s);
// Off-diagonal variance 1/scale_N, diagonal 2/scale_N.
Mat sample_goe(long n, double scale_N, Stream s);

struct SpatialCouplingSpec {
  std::vector<long> row_blocks;
  std::vector<long> col_blocks;
  Mat sigma;  // row_blocks.size() x col_blocks.size(), entries >= 0
  double d = 1.0;
};
Mat sample_spatially_coupled(const SpatialCouplingSpec& spec, Stream s);

// Symmetric square root by eigendecomposition with eigenvalues floored at
// 1e-12; throws if the matrix is not positive definite.
Mat spd_sqrt(const Mat& sigma);
// Z * factor with Z i.i.d. N(0, 1/scale_N); factor is d x d.
Mat sample_correlated_rows(long n, const Mat& factor, double scale_N, Stream s);

struct EnsembleSpec {
  enum class Kind { goe, iid_gaussian, spatially_coupled, correlated };
  Kind kind = Kind::iid_gaussian;
  long rows = 0;
  long cols = 0;
  double scale_N = 1.0;
  SpatialCouplingSpec coupling;
  Mat sigma_factor;
};
Mat sample(const EnsembleSpec& spec, Stream s);

}  // namespace graphamp
