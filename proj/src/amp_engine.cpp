#include "graphamp/amp_engine.hpp"

#include <algorithm>

#include "graphamp/error.hpp"

namespace graphamp {

UpdateFamily stationary(std::map<EdgeId, Nonlinearity> fns) {
  return [fns = std::move(fns)](int, const EdgeId& e, const StepContext&) -> Nonlinearity {
    auto it = fns.find(e);
    if (it == fns.end()) fail(ErrorKind::logic, "no update function for edge " + e.label());
    return it->second;
  };
}

EdgeId storage_key(const EdgeId& e) { return (e.is_loop() || e.start < e.end) ? e : e.reversed(); }

Mat GraphInstance::multiply(const EdgeId& e, const Mat& m) const {
  const EdgeId k = storage_key(e);
  auto it = matrices.find(k);
  if (it == matrices.end()) fail(ErrorKind::logic, "missing matrix for edge " + e.label());
  if (k == e) return it->second * m;
  return it->second.transpose() * m;
}

Mat GraphInstance::matrix(const EdgeId& e) const {
  const EdgeId k = storage_key(e);
  auto it = matrices.find(k);
  if (it == matrices.end()) fail(ErrorKind::logic, "missing matrix for edge " + e.label());
  if (k == e) return it->second;
  return it->second.transpose();
}

const SideData& GraphInstance::side_of(const EdgeId& e) const {
  static const SideData empty;
  auto it = side.find(e);
  return it == side.end() ? empty : it->second;
}

void check_instance(const GraphInstance& inst, bool require_matrices) {
  require_valid(inst.graph);
  if (!inst.family) fail(ErrorKind::logic, inst.name + ": no update family");
  for (const auto& e : canonical_edge_order(inst.graph)) {
    const EdgeId k = storage_key(e);
    auto it = inst.matrices.find(k);
    if (it != inst.matrices.end()) {
      const Shape want{inst.graph.dim(k.end), inst.graph.dim(k.start)};
      if (shape_of(it->second) != want)
        fail(ErrorKind::logic, "matrix for " + k.label() + " has shape " + to_string(shape_of(it->second)) +
                                   ", expected " + to_string(want));
      if (k.is_loop() && !it->second.isApprox(it->second.transpose(), 0.0))
        fail(ErrorKind::logic, "loop matrix for " + k.label() + " is not symmetric");
    } else if (require_matrices) {
      fail(ErrorKind::logic, "missing matrix for edge " + k.label());
    }
    auto xi = inst.x0.find(e);
    if (xi == inst.x0.end()) fail(ErrorKind::logic, "missing initial condition for edge " + e.label());
    const Shape xs{inst.graph.dim(e.end), inst.graph.cols(e)};
    if (shape_of(xi->second) != xs)
      fail(ErrorKind::logic, "initial condition for " + e.label() + " has shape " + to_string(shape_of(xi->second)) +
                                 ", expected " + to_string(xs));
  }
}

const EdgeState& AmpTrajectory::at(int t, const EdgeId& e) const {
  if (t < 0 || t > T()) fail(ErrorKind::logic, "trajectory has no time " + std::to_string(t));
  auto it = states[t].find(e);
  if (it == states[t].end()) fail(ErrorKind::logic, "trajectory has no edge " + e.label());
  return it->second;
}

int reversed_input_index(const GraphSpec& g, const EdgeId& e) {
  const auto in = edges_into(g, e);
  auto it = std::find(in.begin(), in.end(), e.reversed());
  return static_cast<int>(it - in.begin());
}

Mat onsager(const GraphSpec& g, const EdgeId& e, const Nonlinearity& f, const Inputs& in, const SideData& side) {
  return jacobian_trace(f, in, side, reversed_input_index(g, e)).block / static_cast<double>(g.N());
}

namespace {

class EngineContext : public StepContext {
 public:
  explicit EngineContext(const AmpTrajectory& traj) : traj_(traj) {}
  long N() const override { return traj_.N; }
  Mat onsager(const EdgeId& e, int s) const override {
    const auto& st = traj_.at(s, e);
    if (!st.has_m) fail(ErrorKind::logic, "Onsager block at t=" + std::to_string(s) + " not yet computed");
    return st.b;
  }
  Mat moment(const EdgeId& e, int s, const std::string& key) const override {
    const auto& st = traj_.at(s, e);
    auto it = st.moments.find(key);
    if (it == st.moments.end())
      fail(ErrorKind::logic, "moment '" + key + "' of " + e.label() + " at t=" + std::to_string(s) + " not recorded");
    return it->second;
  }

 private:
  const AmpTrajectory& traj_;
};

}  // namespace

Inputs gather_inputs(const AmpTrajectory& traj, int t, const EdgeId& e) {
  Inputs in;
  for (const auto& ep : traj.inputs_of.at(e)) in.push_back(traj.at(t, ep).x);
  return in;
}

Nonlinearity function_at(const GraphInstance& inst, const AmpTrajectory& traj, int t, const EdgeId& e) {
  EngineContext ctx(traj);
  return inst.family(t, e, ctx);
}

namespace {

void evaluate_outputs(const GraphInstance& inst, AmpTrajectory& traj) {
  const int t = traj.T();
  EngineContext ctx(traj);
  std::map<EdgeId, EdgeState> done;
  for (const auto& e : traj.order) {
    const Nonlinearity f = inst.family(t, e, ctx);
    const Inputs in = gather_inputs(traj, t, e);
    const SideData& side = inst.side_of(e);
    EdgeState st = traj.states[t].at(e);
    st.m = apply(f, in, side);
    const Shape want{inst.graph.dim(e.start), inst.graph.cols(e)};
    if (shape_of(st.m) != want)
      fail(ErrorKind::logic, "update function " + f.name + " on " + e.label() + " returned " +
                                 to_string(shape_of(st.m)) + ", expected " + to_string(want));
    if (!st.m.allFinite())
      fail(ErrorKind::numerical, "non-finite output of f on edge " + e.label() + " at t=" + std::to_string(t));
    st.b = onsager(inst.graph, e, f, in, side);
    if (!st.b.allFinite())
      fail(ErrorKind::numerical, "non-finite Onsager term on edge " + e.label() + " at t=" + std::to_string(t));
    auto mk = inst.moment_keys.find(e);
    if (mk != inst.moment_keys.end())
      for (const auto& key : mk->second) st.moments[key] = side.at(key).transpose() * st.m / static_cast<double>(traj.N);
    st.has_m = true;
    done.emplace(e, std::move(st));
  }
  // Commit after all edges so the context never sees a half-updated time.
  for (auto& [e, st] : done) traj.states[t][e] = std::move(st);
}

}  // namespace

AmpTrajectory init(const GraphInstance& inst) {
  check_instance(inst);
  AmpTrajectory traj;
  traj.N = inst.graph.N();
  traj.order = canonical_edge_order(inst.graph);
  for (const auto& e : traj.order) traj.inputs_of[e] = edges_into(inst.graph, e);
  traj.states.emplace_back();
  double total = 0.0;
  for (const auto& e : traj.order) {
    EdgeState st;
    st.x = inst.x0.at(e);
    st.t = 0;
    total += st.x.squaredNorm();
    traj.states[0].emplace(e, std::move(st));
  }
  traj.degenerate = total == 0.0;
  if (traj.degenerate && !inst.allow_degenerate)
    fail(ErrorKind::config, inst.name + ": initial condition is identically zero (degenerate start)");
  return traj;
}

void close(const GraphInstance& inst, AmpTrajectory& traj) {
  const int t = traj.T();
  if (!traj.states[t].begin()->second.has_m) evaluate_outputs(inst, traj);
}

void step(const GraphInstance& inst, AmpTrajectory& traj) {
  close(inst, traj);
  const int t = traj.T();
  std::map<EdgeId, EdgeState> next;
  for (const auto& e : traj.order) {
    const EdgeState& cur = traj.at(t, e);
    EdgeState st;
    st.t = t + 1;
    st.x = inst.multiply(e, cur.m);
    if (t > 0) st.x.noalias() -= traj.at(t - 1, e.reversed()).m * cur.b.transpose();
    if (!st.x.allFinite())
      fail(ErrorKind::numerical, "non-finite iterate on edge " + e.label() + " at t=" + std::to_string(t + 1));
    next.emplace(e, std::move(st));
  }
  traj.states.push_back(std::move(next));
}

AmpTrajectory run(const GraphInstance& inst, int T) {
  AmpTrajectory traj = init(inst);
  for (int t = 0; t < T; ++t) step(inst, traj);
  close(inst, traj);
  return traj;
}

const Mat& TrajectoryView::m(const EdgeId& e, int s) const {
  const auto& st = traj_.at(s, e);
  if (!st.has_m) fail(ErrorKind::logic, "m at t=" + std::to_string(s) + " not computed; close the trajectory first");
  return st.m;
}

Observable sq_norm_obs(const EdgeId& e) {
  Observable o;
  o.name = "sqnorm";
  o.edge = e.label();
  o.fn = [e](const IterateView& v, int t) { return v.x(e, t).squaredNorm() / static_cast<double>(v.N()); };
  return o;
}

Observable total_sq_norm_obs(const std::vector<EdgeId>& edges) {
  Observable o;
  o.name = "sqnorm_total";
  o.fn = [edges](const IterateView& v, int t) {
    double s = 0.0;
    for (const auto& e : edges) s += v.x(e, t).squaredNorm();
    return s / static_cast<double>(v.N());
  };
  return o;
}

Observable cross_time_obs(const EdgeId& e, int s) {
  Observable o;
  o.name = "cross_" + std::to_string(s);
  o.edge = e.label();
  o.fn = [e, s](const IterateView& v, int t) {
    if (t < s) return 0.0;
    return (v.x(e, s).array() * v.x(e, t).array()).sum() / static_cast<double>(v.N());
  };
  return o;
}

Observable constant_obs(double c) {
  Observable o;
  o.name = "constant";
  o.order_k = 1;
  o.fn = [c](const IterateView&, int) { return c; };
  return o;
}

std::vector<double> observe(const GraphInstance& inst, AmpTrajectory& traj, const Observable& phi) {
  TrajectoryView view(inst, traj);
  std::vector<double> out;
  for (int t = 0; t <= traj.T(); ++t) {
    const double v = phi.fn(view, t);
    out.push_back(v);
    traj.records.push_back({t, phi.edge, phi.name, v});
  }
  return out;
}

HalfIterates reindex_half_iterates(const GraphInstance& inst, const AmpTrajectory& traj) {
  const auto order = canonical_edge_order(inst.graph);
  if (inst.graph.vertices.size() != 2 || order.size() != 2 || order[0].is_loop())
    fail(ErrorKind::logic, "reindex_half_iterates requires the two-node asymmetric graph");
  const EdgeId fwd = order[0], bwd = order[1];
  HalfIterates h;
  for (int t = 0; t <= traj.T(); ++t) {
    if (t % 2 == 0)
      h.v.push_back(traj.at(t, fwd).x);
    else
      h.u.push_back(traj.at(t, bwd).x);
  }
  return h;
}

}  // namespace graphamp
