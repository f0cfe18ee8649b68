#include "graphamp/symmetric_reduction.hpp"

#include <cmath>
#include <memory>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

Mat SymmetricInstance::block(const Mat& X, const EdgeId& e) const {
  const auto& r = layout.at(e);
  return X.block(r.row0, r.col0, r.rows, r.cols);
}

const Mat& SymmetricInstance::A() const { return loop.matrices.at(kSymLoop); }

namespace {

std::string moment_tag(const EdgeId& e, const std::string& key) { return e.label() + "|" + key; }

// Serves the per-edge view of the symmetric iteration's history.
class EmbeddedContext : public StepContext {
 public:
  EmbeddedContext(const StepContext& outer, const std::map<EdgeId, BlockRange>& layout)
      : outer_(outer), layout_(layout) {}
  long N() const override { return outer_.N(); }
  Mat onsager(const EdgeId& e, int s) const override {
    const auto& r = layout_.at(e);
    const auto& rr = layout_.at(e.reversed());
    return outer_.onsager(kSymLoop, s).block(r.col0, rr.col0, r.cols, rr.cols);
  }
  Mat moment(const EdgeId& e, int s, const std::string& key) const override {
    const auto& r = layout_.at(e);
    const Mat m = outer_.moment(kSymLoop, s, moment_tag(e, key));
    return m.middleCols(r.col0, r.cols);
  }

 private:
  const StepContext& outer_;
  const std::map<EdgeId, BlockRange>& layout_;
};

}  // namespace

SymmetricInstance embed(const GraphInstance& inst, std::uint64_t star_seed) {
  check_instance(inst);
  SymmetricInstance sym;
  sym.order = canonical_edge_order(inst.graph);
  long row = 0, col = 0;
  for (const auto& e : sym.order) {
    BlockRange r{row, inst.graph.dim(e.end), col, inst.graph.cols(e)};
    sym.layout[e] = r;
    row += r.rows;
    col += r.cols;
  }
  sym.N = row;
  sym.q = col;

  Mat A = sample_goe(sym.N, static_cast<double>(sym.N), SeededRng(star_seed).stream("embed_star"));
  Mat X0 = Mat::Zero(sym.N, sym.q);
  for (const auto& e : sym.order) {
    const auto& r = sym.layout.at(e);
    const auto& rr = sym.layout.at(e.reversed());
    A.block(r.row0, rr.row0, r.rows, rr.rows) = inst.matrix(e);
    X0.block(r.row0, r.col0, r.rows, r.cols) = inst.x0.at(e);
  }

  GraphInstance& L = sym.loop;
  L.name = inst.name + "_embedded";
  L.graph.add_vertex(kSymLoop.start, static_cast<int>(sym.N)).add_edge(kSymLoop.start, kSymLoop.end, static_cast<int>(sym.q));
  L.matrices[kSymLoop] = std::move(A);
  L.x0[kSymLoop] = std::move(X0);
  L.allow_degenerate = inst.allow_degenerate;

  // Moment side data padded to the output rows of each edge.
  for (const auto& [e, keys] : inst.moment_keys)
    for (const auto& key : keys) {
      const Mat& s = inst.side_of(e).at(key);
      const auto& rr = sym.layout.at(e.reversed());
      Mat padded = Mat::Zero(sym.N, s.cols());
      padded.middleRows(rr.row0, rr.rows) = s;
      const std::string tag = moment_tag(e, key);
      L.side[kSymLoop][tag] = std::move(padded);
      L.moment_keys[kSymLoop].push_back(tag);
    }

  const GraphSpec graph = inst.graph;
  const auto layout = sym.layout;
  const auto order = sym.order;
  const long N = sym.N, q = sym.q;
  std::map<EdgeId, std::vector<EdgeId>> inputs;
  std::map<EdgeId, int> rev_index;
  for (const auto& e : order) {
    inputs[e] = edges_into(graph, e);
    rev_index[e] = reversed_input_index(graph, e);
  }
  std::map<EdgeId, SideData> sides;
  for (const auto& e : order) sides[e] = inst.side_of(e);
  const UpdateFamily family = inst.family;

  L.family = [=](int t, const EdgeId&, const StepContext& ctx) -> Nonlinearity {
    EmbeddedContext ectx(ctx, layout);
    auto fns = std::make_shared<std::map<EdgeId, Nonlinearity>>();
    for (const auto& e : order) (*fns)[e] = family(t, e, ectx);

    auto gather = [layout, inputs](const Mat& X, const EdgeId& e) {
      Inputs in;
      for (const auto& ep : inputs.at(e)) {
        const auto& r = layout.at(ep);
        in.push_back(X.block(r.row0, r.col0, r.rows, r.cols));
      }
      return in;
    };

    Nonlinearity F;
    F.name = "embedded";
    F.in_shapes = {Shape{N, q}};
    F.out_shape = Shape{N, q};
    F.fn = [=](const Inputs& in, const SideData&) -> Mat {
      Mat out = Mat::Zero(N, q);
      for (const auto& e : order) {
        const auto& f = fns->at(e);
        if (f.is_zero) continue;
        const auto& r = layout.at(e);
        const auto& rr = layout.at(e.reversed());
        out.block(rr.row0, r.col0, rr.rows, r.cols) = apply(f, gather(in[0], e), sides.at(e));
      }
      return out;
    };
    F.trace = [=](const Inputs& in, const SideData&, int) -> Mat {
      Mat b = Mat::Zero(q, q);
      for (const auto& e : order) {
        const auto& f = fns->at(e);
        if (f.is_zero) continue;
        const auto& r = layout.at(e);
        const auto& rr = layout.at(e.reversed());
        b.block(r.col0, rr.col0, r.cols, rr.cols) =
            jacobian_trace(f, gather(in[0], e), sides.at(e), rev_index.at(e)).block;
      }
      return b;
    };
    return F;
  };
  return sym;
}

void sym_step(const SymmetricInstance& sym, AmpTrajectory& traj) { step(sym.loop, traj); }

AmpTrajectory sym_run(const SymmetricInstance& sym, int T) { return run(sym.loop, T); }

Mat embedded_onsager_fd(const SymmetricInstance& sym, const AmpTrajectory& traj, int t) {
  // Rebuild f^t against the recorded history, then differentiate it numerically.
  class Ctx : public StepContext {
   public:
    explicit Ctx(const AmpTrajectory& tr) : tr_(tr) {}
    long N() const override { return tr_.N; }
    Mat onsager(const EdgeId& e, int s) const override { return tr_.at(s, e).b; }
    Mat moment(const EdgeId& e, int s, const std::string& key) const override { return tr_.at(s, e).moments.at(key); }

   private:
    const AmpTrajectory& tr_;
  } ctx(traj);
  Nonlinearity F = sym.loop.family(t, kSymLoop, ctx);
  F.trace = nullptr;
  return fd_jacobian_trace(F, {traj.at(t, kSymLoop).x}, {}, 0) / static_cast<double>(sym.N);
}

double off_pattern_mass(const SymmetricInstance& sym, const Mat& b) {
  Mat mask = Mat::Zero(sym.q, sym.q);
  for (const auto& e : sym.order) {
    const auto& r = sym.layout.at(e);
    const auto& rr = sym.layout.at(e.reversed());
    mask.block(r.col0, rr.col0, r.cols, rr.cols).setOnes();
  }
  double worst = 0.0;
  for (long i = 0; i < sym.q; ++i)
    for (long j = 0; j < sym.q; ++j)
      if (mask(i, j) == 0.0) worst = std::max(worst, std::abs(b(i, j)));
  return worst;
}

EquivalenceReport verify_equivalence(const GraphInstance& inst, int T, std::uint64_t star_seed) {
  const auto sym = embed(inst, star_seed);
  const auto graph_traj = run(inst, T);
  const auto sym_traj = sym_run(sym, T);
  EquivalenceReport rep;
  rep.N = sym.N;
  for (int t = 0; t <= T; ++t) {
    double worst = 0.0;
    const Mat& X = sym_traj.at(t, kSymLoop).x;
    for (const auto& e : sym.order) {
      const Mat& x = graph_traj.at(t, e).x;
      worst = std::max(worst, (sym.block(X, e) - x).norm() / (1.0 + x.norm()));
    }
    rep.per_t.push_back(worst);
    rep.max = std::max(rep.max, worst);
  }
  return rep;
}

EquivalenceReport verify_equivalence(const std::function<GraphInstance(double)>& build, int T,
                                     std::uint64_t star_seed, double budget) {
  double scale = 1.0;
  GraphInstance inst = build(scale);
  bool shrunk = false;
  for (int tries = 0; tries < 20; ++tries) {
    const double N = static_cast<double>(inst.graph.N());
    if (N * N <= budget) break;
    scale *= std::sqrt(budget) / N;
    inst = build(scale);
    shrunk = true;
  }
  if (static_cast<double>(inst.graph.N()) * static_cast<double>(inst.graph.N()) > budget)
    fail(ErrorKind::config, inst.name + ": embedding does not fit the memory budget even after shrinking");
  auto rep = verify_equivalence(inst, T, star_seed);
  rep.shrunk = shrunk;
  return rep;
}

}  // namespace graphamp
