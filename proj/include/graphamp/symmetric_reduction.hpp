#pragma once

#include <map>
#include <optional>
#include <vector>

#include "graphamp/amp_engine.hpp"

namespace graphamp {

struct BlockRange {
  long row0 = 0, rows = 0;
  long col0 = 0, cols = 0;
};

// One symmetric matrix-valued instance equivalent to a graph instance.
// x_e sits at (rows_e, cols_e); f_e writes to (rows_{e<-}, cols_e).
struct SymmetricInstance {
  long N = 0;
  long q = 0;
  std::vector<EdgeId> order;
  std::map<EdgeId, BlockRange> layout;
  // Loop instance on a single vertex "s" of dimension N with q columns.
  GraphInstance loop;

  Mat block(const Mat& X, const EdgeId& e) const;
  const Mat& A() const;
};

inline const EdgeId kSymLoop{"s", "s"};

// Memory budget in matrix entries for the dense N x N embedding.
inline constexpr double kDefaultEmbedBudget = 2.5e7;

// The free blocks of A are filled from a GOE sample keyed by star_seed.
SymmetricInstance embed(const GraphInstance& inst, std::uint64_t star_seed = 0);

// One step of the symmetric iteration X^{t+1} = A M^t - M^{t-1} (b^t)^T.
void sym_step(const SymmetricInstance& sym, AmpTrajectory& traj);
AmpTrajectory sym_run(const SymmetricInstance& sym, int T);

// (1/N) Onsager block of the embedded nonlinearity, by finite differences.
Mat embedded_onsager_fd(const SymmetricInstance& sym, const AmpTrajectory& traj, int t);
// Max |entry| outside the loop-diagonal / pair-anti-diagonal pattern.
double off_pattern_mass(const SymmetricInstance& sym, const Mat& b);

struct EquivalenceReport {
  std::vector<double> per_t;
  double max = 0.0;
  long N = 0;
  bool shrunk = false;
};

EquivalenceReport verify_equivalence(const GraphInstance& inst, int T, std::uint64_t star_seed = 0);
// Builds the instance at size scale s (1 = full) and shrinks until N^2 fits the budget.
EquivalenceReport verify_equivalence(const std::function<GraphInstance(double)>& build, int T,
                                     std::uint64_t star_seed = 0, double budget = kDefaultEmbedBudget);

}  // namespace graphamp
