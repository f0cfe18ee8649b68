#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "graphamp/graph_core.hpp"
#include "graphamp/nonlinearity.hpp"
#include "graphamp/types.hpp"

namespace graphamp {

// What an update family may read from the past when building f^t_e:
// earlier Onsager blocks and registered output moments (1/N) side[key]^T m^s_e.
// The engine serves empirical values, state evolution serves expected ones.
class StepContext {
 public:
  virtual ~StepContext() = default;
  virtual long N() const = 0;
  virtual Mat onsager(const EdgeId& e, int s) const = 0;
  virtual Mat moment(const EdgeId& e, int s, const std::string& key) const = 0;
};

using UpdateFamily = std::function<Nonlinearity(int t, const EdgeId& e, const StepContext& ctx)>;

// Always returns the same function.
UpdateFamily stationary(std::map<EdgeId, Nonlinearity> fns);

EdgeId storage_key(const EdgeId& e);

struct GraphInstance {
  std::string name;
  GraphSpec graph;
  // One matrix per unordered pair, keyed by storage_key: loops, and (v,w)
  // with v < w stored as n_w x n_v.
  std::map<EdgeId, Mat> matrices;
  std::map<EdgeId, Mat> x0;
  // Side data of f_e, rows indexed like the output of f_e (start node).
  std::map<EdgeId, SideData> side;
  std::map<EdgeId, std::vector<std::string>> moment_keys;
  UpdateFamily family;
  bool allow_degenerate = false;

  Mat multiply(const EdgeId& e, const Mat& m) const;
  Mat matrix(const EdgeId& e) const;
  const SideData& side_of(const EdgeId& e) const;
};

// State evolution does not need the matrices.
void check_instance(const GraphInstance& inst, bool require_matrices = true);

struct EdgeState {
  Mat x;
  Mat m;
  Mat b;
  std::map<std::string, Mat> moments;
  int t = 0;
  bool has_m = false;
};

struct ObservationRecord {
  int t = 0;
  std::string edge;
  std::string name;
  double value = 0.0;
};

class AmpTrajectory {
 public:
  long N = 0;
  std::vector<EdgeId> order;
  std::map<EdgeId, std::vector<EdgeId>> inputs_of;
  std::vector<std::map<EdgeId, EdgeState>> states;
  std::vector<ObservationRecord> records;
  bool degenerate = false;

  int T() const { return static_cast<int>(states.size()) - 1; }
  const EdgeState& at(int t, const EdgeId& e) const;
};

AmpTrajectory init(const GraphInstance& inst);
// Evaluates m^t, b^t at the current last time t and appends x^{t+1}.
void step(const GraphInstance& inst, AmpTrajectory& traj);
// Evaluates m^T, b^T at the last time without advancing.
void close(const GraphInstance& inst, AmpTrajectory& traj);
// init, T steps, close.
AmpTrajectory run(const GraphInstance& inst, int T);

// Inputs of f_e at time t, in edges_into order.
Inputs gather_inputs(const AmpTrajectory& traj, int t, const EdgeId& e);
// f^t_e as the engine builds it from the recorded past of traj.
Nonlinearity function_at(const GraphInstance& inst, const AmpTrajectory& traj, int t, const EdgeId& e);

// (1/N) Onsager block of f w.r.t. the reversed-edge input of e.
Mat onsager(const GraphSpec& g, const EdgeId& e, const Nonlinearity& f, const Inputs& in, const SideData& side);
int reversed_input_index(const GraphSpec& g, const EdgeId& e);

class IterateView {
 public:
  virtual ~IterateView() = default;
  virtual long N() const = 0;
  virtual const Mat& x(const EdgeId& e, int s) const = 0;
  virtual const Mat& m(const EdgeId& e, int s) const = 0;
  virtual const SideData& side(const EdgeId& e) const = 0;
};

struct Observable {
  std::string name;
  std::string edge = "*";
  int order_k = 2;
  std::function<double(const IterateView&, int t)> fn;
};

Observable sq_norm_obs(const EdgeId& e);
Observable total_sq_norm_obs(const std::vector<EdgeId>& edges);
Observable cross_time_obs(const EdgeId& e, int s);
Observable constant_obs(double c);

class TrajectoryView : public IterateView {
 public:
  TrajectoryView(const GraphInstance& inst, const AmpTrajectory& traj) : inst_(inst), traj_(traj) {}
  long N() const override { return traj_.N; }
  const Mat& x(const EdgeId& e, int s) const override { return traj_.at(s, e).x; }
  const Mat& m(const EdgeId& e, int s) const override;
  const SideData& side(const EdgeId& e) const override { return inst_.side_of(e); }

 private:
  const GraphInstance& inst_;
  const AmpTrajectory& traj_;
};

// Evaluates the observable at every t and appends records; returns the values.
std::vector<double> observe(const GraphInstance& inst, AmpTrajectory& traj, const Observable& phi);

struct HalfIterates {
  std::vector<Mat> u;  // u[k] = u^{k+1} = x^{2k+1}_{(w,v)}
  std::vector<Mat> v;  // v[k] = v^k = x^{2k}_{(v,w)}
};
HalfIterates reindex_half_iterates(const GraphInstance& inst, const AmpTrajectory& traj);

}  // namespace graphamp
