#include "graphamp/state_evolution.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "graphamp/error.hpp"

namespace graphamp {

Quadrature gauss_hermite(int order) {
  if (order < 1) fail(ErrorKind::config, "quadrature order must be >= 1");
  // Jacobi matrix of the probabilists' Hermite polynomials.
  Mat J = Mat::Zero(order, order);
  for (int i = 1; i < order; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Quadrature q;
  q.nodes = es.eigenvalues();
  q.weights = es.eigenvectors().row(0).transpose().array().square();
  return q;
}

Mat covariance_root(const Mat& K, double jitter, double psd_tol) {
  const long d = K.rows();
  if (d == 0) return Mat(0, 0);
  const Mat S = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "covariance eigendecomposition failed");
  const double scale = std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin < -psd_tol * scale) {
    std::ostringstream os;
    os << "state evolution covariance is not PSD: min eigenvalue " << lmin;
    fail(ErrorKind::numerical, os.str());
  }
  // Directions below the jitter level are truncated.
  const double delta = jitter * std::max(0.0, S.trace()) / static_cast<double>(d);
  Vec lam = es.eigenvalues();
  for (long i = 0; i < d; ++i) lam(i) = lam(i) < delta ? 0.0 : lam(i);
  const Vec root = lam.cwiseSqrt();
  Mat R = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  // A zero variance pins the whole row and column of a PSD matrix.
  for (long i = 0; i < d; ++i)
    if (S(i, i) == 0.0) {
      R.row(i).setZero();
      R.col(i).setZero();
    }
  return R;
}

Mat sample_gaussian_family(const Mat& root, long n, Stream s) {
  return standard_normal(s, n, root.rows()) * root.transpose();
}

std::vector<CompareRow> compare(const std::vector<std::vector<double>>& amp_values, const SEObservableStats& se,
                                CompareGate gate) {
  if (amp_values.empty()) fail(ErrorKind::logic, "compare: no AMP runs");
  std::vector<CompareRow> rows;
  const size_t T = se.mean.size();
  const double seeds = static_cast<double>(amp_values.size());
  for (size_t t = 0; t < T; ++t) {
    CompareRow r;
    r.t = static_cast<int>(t);
    r.observable = se.edge.empty() || se.edge == "*" ? se.name : se.name + se.edge;
    double sum = 0.0, sq = 0.0;
    for (const auto& run : amp_values) {
      if (run.size() <= t) fail(ErrorKind::logic, "compare: AMP run shorter than SE horizon");
      sum += run[t];
    }
    r.amp_mean = sum / seeds;
    for (const auto& run : amp_values) sq += (run[t] - r.amp_mean) * (run[t] - r.amp_mean);
    r.amp_std = seeds > 1 ? std::sqrt(sq / (seeds - 1.0)) : 0.0;
    r.se_mean = se.mean[t];
    r.se_std = se.sem[t];
    const double diff = std::abs(r.amp_mean - r.se_mean);
    const double den = std::sqrt(r.amp_std * r.amp_std / seeds + r.se_std * r.se_std);
    const bool rounding = diff <= 1e-12 * std::max(std::abs(r.se_mean), std::abs(r.amp_mean));
    r.z = rounding ? 0.0 : (den > 0 ? diff / den : std::numeric_limits<double>::infinity());
    const double rel = diff / std::max(std::abs(r.se_mean), 1e-300);
    r.pass = rounding || rel <= gate.rel_tol || r.z <= gate.z_max;
    rows.push_back(r);
  }
  return rows;
}

namespace {

constexpr long kChunk = 16;

// Runs body(chunk) over fixed-size sample chunks; results are reduced by the
// caller in chunk order so the outcome does not depend on the worker count.
template <class Body>
void for_chunks(long M, int workers, Body body) {
  const long chunks = (M + kChunk - 1) / kChunk;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(chunks)));
  if (workers == 1) {
    for (long c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (long c = w; c < chunks; c += workers) body(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct EdgeSE {
  std::vector<EdgeId> inputs;
  int rev = 0;
  long rows_out = 0;  // dim of start node
  long rows_in = 0;   // dim of end node
  long q = 1;
  std::vector<Nonlinearity> fns;
  Mat F0;
  Mat K, Ksem;
  std::vector<Mat> onsager;
  std::vector<std::map<std::string, Mat>> moments;
};

struct Acc {
  Mat G, G2, O;
  std::map<std::string, Mat> mom;
};

}  // namespace

struct StateEvolution::Impl : StepContext {
  const GraphInstance& inst;
  long Nn = 0;
  std::vector<EdgeId> order;
  std::map<EdgeId, EdgeSE> edges;

  explicit Impl(const GraphInstance& g) : inst(g) {}

  long N() const override { return Nn; }
  Mat onsager(const EdgeId& e, int s) const override {
    const auto& E = edges.at(e);
    if (s < 0 || s >= static_cast<int>(E.onsager.size()))
      fail(ErrorKind::logic, "expected Onsager block of " + e.label() + " at t=" + std::to_string(s) + " unavailable");
    return E.onsager[s];
  }
  Mat moment(const EdgeId& e, int s, const std::string& key) const override {
    const auto& E = edges.at(e);
    if (s < 0 || s >= static_cast<int>(E.moments.size()) || !E.moments[s].count(key))
      fail(ErrorKind::logic, "expected moment '" + key + "' of " + e.label() + " at t=" + std::to_string(s) +
                                 " unavailable");
    return E.moments[s].at(key);
  }

  void ensure_fns(int t) {
    for (const auto& e : order) {
      auto& E = edges.at(e);
      while (static_cast<int>(E.fns.size()) <= t) E.fns.push_back(inst.family(static_cast<int>(E.fns.size()), e, *this));
    }
  }

  Inputs inputs_at(const EdgeId& e, int s, const std::map<EdgeId, Mat>& Z) const {
    Inputs in;
    for (const auto& ep : edges.at(e).inputs) {
      if (s == 0)
        in.push_back(inst.x0.at(ep));
      else {
        const long q = edges.at(ep).q;
        in.push_back(Z.at(ep).middleCols((s - 1) * q, q));
      }
    }
    return in;
  }

  std::map<EdgeId, Mat> roots() const {
    std::map<EdgeId, Mat> R;
    for (const auto& e : order) R[e] = covariance_root(edges.at(e).K);
    return R;
  }

  std::map<EdgeId, Mat> draw(const std::map<EdgeId, Mat>& R, std::uint64_t seed, const char* purpose, int t,
                             long m) const {
    std::map<EdgeId, Mat> Z;
    SeededRng rng(seed);
    for (const auto& e : order)
      Z[e] = sample_gaussian_family(R.at(e), edges.at(e).rows_in,
                                    rng.stream(purpose, e.label(), static_cast<std::uint64_t>(t)).sub(m));
    return Z;
  }
};

StateEvolution::StateEvolution(const GraphInstance& inst, SEOptions opt)
    : inst_(inst), opt_(opt), impl_(std::make_unique<Impl>(inst)) {
  check_instance(inst, false);
  if (opt_.M < 2) fail(ErrorKind::config, "state evolution needs M >= 2 samples");
  impl_->Nn = inst.graph.N();
  impl_->order = canonical_edge_order(inst.graph);
  for (const auto& e : impl_->order) {
    EdgeSE E;
    E.inputs = edges_into(inst.graph, e);
    E.rev = reversed_input_index(inst.graph, e);
    E.rows_out = inst.graph.dim(e.start);
    E.rows_in = inst.graph.dim(e.end);
    E.q = inst.graph.cols(e);
    impl_->edges.emplace(e, std::move(E));
  }
}

StateEvolution::~StateEvolution() = default;

const StepContext& StateEvolution::context() const { return *impl_; }

const Nonlinearity& StateEvolution::fn(const EdgeId& e, int s) {
  impl_->ensure_fns(s);
  return impl_->edges.at(e).fns.at(s);
}

const Mat& StateEvolution::kappa(const EdgeId& e) const { return impl_->edges.at(e).K; }
const Mat& StateEvolution::kappa_sem(const EdgeId& e) const { return impl_->edges.at(e).Ksem; }

Mat StateEvolution::kappa_block(const EdgeId& e, int r, int s) const {
  const auto& E = impl_->edges.at(e);
  if (r < 1 || s < 1 || r > t_ || s > t_) fail(ErrorKind::logic, "kappa block out of range");
  return E.K.block((r - 1) * E.q, (s - 1) * E.q, E.q, E.q);
}

bool StateEvolution::degenerate(const EdgeId& e) const {
  const auto& E = impl_->edges.at(e);
  return E.K.size() == 0 || E.K.isZero(0.0);
}

void StateEvolution::step() {
  Impl& I = *impl_;
  const int t = t_;
  I.ensure_fns(t);
  const double N = static_cast<double>(I.Nn);

  if (t == 0) {
    for (const auto& e : I.order) {
      auto& E = I.edges.at(e);
      const auto& f = E.fns[0];
      const Inputs in = I.inputs_at(e, 0, {});
      const SideData& side = I.inst.side_of(e);
      E.F0 = f.is_zero ? Mat::Zero(E.rows_out, E.q) : apply(f, in, side);
      E.K = E.F0.transpose() * E.F0 / N;
      E.Ksem = Mat::Zero(E.q, E.q);
      E.onsager.push_back(graphamp::onsager(I.inst.graph, e, f, in, side));
      std::map<std::string, Mat> mom;
      auto mk = I.inst.moment_keys.find(e);
      if (mk != I.inst.moment_keys.end())
        for (const auto& key : mk->second) mom[key] = side.at(key).transpose() * E.F0 / N;
      E.moments.push_back(std::move(mom));
    }
    t_ = 1;
    return;
  }

  const auto R = I.roots();
  const long M = opt_.M;
  const long chunks = (M + kChunk - 1) / kChunk;
  std::vector<std::map<EdgeId, Acc>> acc(chunks);

  for_chunks(M, opt_.workers, [&](long c) {
    auto& A = acc[c];
    for (const auto& e : I.order) {
      const auto& E = I.edges.at(e);
      const long D = (t + 1) * E.q;
      A[e].G = Mat::Zero(D, D);
      A[e].G2 = Mat::Zero(D, D);
      A[e].O = Mat::Zero(E.q, I.edges.at(E.inputs[E.rev]).q);
    }
    for (long m = c * kChunk; m < std::min(M, (c + 1) * kChunk); ++m) {
      const auto Z = I.draw(R, opt_.seed, "se_fields", t, m);
      for (const auto& e : I.order) {
        const auto& E = I.edges.at(e);
        const SideData& side = I.inst.side_of(e);
        Mat F = Mat::Zero(E.rows_out, (t + 1) * E.q);
        F.leftCols(E.q) = E.F0;
        for (int s = 1; s <= t; ++s) {
          const auto& f = E.fns[s];
          if (f.is_zero) continue;
          const Inputs in = I.inputs_at(e, s, Z);
          F.middleCols(s * E.q, E.q) = apply(f, in, side);
          if (s == t) {
            A[e].O += jacobian_trace(f, in, side, E.rev).block / N;
            auto mk = I.inst.moment_keys.find(e);
            if (mk != I.inst.moment_keys.end())
              for (const auto& key : mk->second) {
                const Mat v = side.at(key).transpose() * F.middleCols(s * E.q, E.q) / N;
                auto it = A[e].mom.find(key);
                if (it == A[e].mom.end())
                  A[e].mom.emplace(key, v);
                else
                  it->second += v;
              }
          }
        }
        const Mat G = F.transpose() * F / N;
        A[e].G += G;
        A[e].G2 += G.array().square().matrix();
      }
    }
  });

  const double Md = static_cast<double>(M);
  for (const auto& e : I.order) {
    auto& E = I.edges.at(e);
    const long D = (t + 1) * E.q;
    Mat G = Mat::Zero(D, D), G2 = Mat::Zero(D, D), O = Mat::Zero(acc[0].at(e).O.rows(), acc[0].at(e).O.cols());
    std::map<std::string, Mat> mom;
    for (long c = 0; c < chunks; ++c) {
      const auto& a = acc[c].at(e);
      G += a.G;
      G2 += a.G2;
      O += a.O;
      for (const auto& [k, v] : a.mom) {
        auto it = mom.find(k);
        if (it == mom.end())
          mom.emplace(k, v);
        else
          it->second += v;
      }
    }
    // Column block r of F is f^r, which feeds Z^{r+1}.
    const Mat mean = G / Md;
    const Mat var = (G2 / Md - mean.array().square().matrix()).cwiseMax(0.0);
    E.K = 0.5 * (mean + mean.transpose());
    E.Ksem = (var * (Md / (Md - 1.0)) / Md).cwiseSqrt();
    if (!E.K.allFinite())
      fail(ErrorKind::numerical, "non-finite state evolution covariance on edge " + e.label() + " at t=" +
                                     std::to_string(t + 1));
    if (E.fns[t].is_zero)
      E.onsager.push_back(Mat::Zero(O.rows(), O.cols()));
    else
      E.onsager.push_back(O / Md);
    for (auto& [k, v] : mom) v /= Md;
    auto mk = I.inst.moment_keys.find(e);
    if (mk != I.inst.moment_keys.end() && E.fns[t].is_zero)
      for (const auto& key : mk->second) mom[key] = Mat::Zero(I.inst.side_of(e).at(key).cols(), E.q);
    E.moments.push_back(std::move(mom));
  }
  t_ = t + 1;
}

void StateEvolution::run(int T) {
  while (t_ < T) step();
  impl_->ensure_fns(t_);
}

namespace {

class SEView : public IterateView {
 public:
  SEView(const GraphInstance& inst, std::map<EdgeId, std::vector<Mat>> x,
         const std::function<Mat(const EdgeId&, int, const SEView&)>& mfn)
      : inst_(inst), x_(std::move(x)), mfn_(mfn) {}
  long N() const override { return inst_.graph.N(); }
  const Mat& x(const EdgeId& e, int s) const override { return x_.at(e).at(s); }
  const Mat& m(const EdgeId& e, int s) const override {
    auto key = std::make_pair(e, s);
    auto it = m_.find(key);
    if (it == m_.end()) it = m_.emplace(key, mfn_(e, s, *this)).first;
    return it->second;
  }
  const SideData& side(const EdgeId& e) const override { return inst_.side_of(e); }

 private:
  const GraphInstance& inst_;
  std::map<EdgeId, std::vector<Mat>> x_;
  const std::function<Mat(const EdgeId&, int, const SEView&)>& mfn_;
  mutable std::map<std::pair<EdgeId, int>, Mat> m_;
};

}  // namespace

std::vector<SEObservableStats> StateEvolution::observe(const std::vector<Observable>& obs, long M,
                                                       std::uint64_t seed) {
  Impl& I = *impl_;
  const int T = t_;
  I.ensure_fns(T);
  if (M < 2) fail(ErrorKind::config, "observe needs M >= 2 samples");
  const auto R = I.roots();
  const long chunks = (M + kChunk - 1) / kChunk;
  const size_t K = obs.size();
  // sums[c][k][t], squares likewise
  std::vector<std::vector<std::vector<double>>> sums(chunks, std::vector<std::vector<double>>(K, std::vector<double>(T + 1))),
      sq = sums;

  const std::function<Mat(const EdgeId&, int, const SEView&)> mfn = [&I](const EdgeId& e, int s, const SEView& v) {
    const auto& E = I.edges.at(e);
    const auto& f = E.fns.at(s);
    Inputs in;
    for (const auto& ep : E.inputs) in.push_back(v.x(ep, s));
    if (f.is_zero) return Mat(Mat::Zero(E.rows_out, E.q));
    return apply(f, in, I.inst.side_of(e));
  };

  for_chunks(M, opt_.workers, [&](long c) {
    for (long m = c * kChunk; m < std::min(M, (c + 1) * kChunk); ++m) {
      const auto Z = I.draw(R, seed, "se_observe", T, m);
      std::map<EdgeId, std::vector<Mat>> x;
      for (const auto& e : I.order) {
        auto& v = x[e];
        v.push_back(I.inst.x0.at(e));
        const long q = I.edges.at(e).q;
        for (int s = 1; s <= T; ++s) v.push_back(Z.at(e).middleCols((s - 1) * q, q));
      }
      SEView view(I.inst, std::move(x), mfn);
      for (size_t k = 0; k < K; ++k)
        for (int t = 0; t <= T; ++t) {
          const double val = obs[k].fn(view, t);
          sums[c][k][t] += val;
          sq[c][k][t] += val * val;
        }
    }
  });

  std::vector<SEObservableStats> out;
  const double Md = static_cast<double>(M);
  for (size_t k = 0; k < K; ++k) {
    SEObservableStats st;
    st.name = obs[k].name;
    st.edge = obs[k].edge;
    for (int t = 0; t <= T; ++t) {
      double s = 0.0, s2 = 0.0;
      for (long c = 0; c < chunks; ++c) {
        s += sums[c][k][t];
        s2 += sq[c][k][t];
      }
      const double mean = s / Md;
      const double var = std::max(0.0, (s2 / Md - mean * mean) * Md / (Md - 1.0));
      st.mean.push_back(mean);
      st.sem.push_back(std::sqrt(var / Md));
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace graphamp
