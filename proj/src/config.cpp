#include "graphamp/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "graphamp/error.hpp"
#include "graphamp/random_ensembles.hpp"

namespace graphamp {

using nlohmann::json;

namespace {

// Reads an object and rejects keys that were never asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::config, path_ + ": expected an object");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }

  template <class T>
  T get(const std::string& k, const T& def) {
    if (!has(k)) return def;
    return as<T>(k);
  }

  template <class T>
  T req(const std::string& k) {
    if (!has(k)) fail(ErrorKind::config, path_ + ": missing key '" + k + "'");
    return as<T>(k);
  }

  const json& raw(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }

  std::string path(const std::string& k) const { return path_ + "." + k; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(ErrorKind::config, path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  template <class T>
  T as(const std::string& k) {
    try {
      return j_.at(k).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::config, path_ + "." + k + ": wrong type (" + std::string(j_.at(k).type_name()) + ")");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& what) {
  if (!(v > 0)) fail(ErrorKind::config, what + " must be positive");
}

long scaled(long v, double scale) { return std::max(1L, std::lround(static_cast<double>(v) * scale)); }

TeacherSpec read_teacher(Reader& r, TeacherSpec t) {
  if (!r.has("teacher")) return t;
  Reader tr(r.raw("teacher"), r.path("teacher"));
  t.law = tr.get<std::string>("law", t.law);
  t.sparsity = tr.get<double>("sparsity", t.sparsity);
  t.scale = tr.get<double>("scale", t.scale);
  tr.finish();
  if (t.law != "gauss" && t.law != "bernoulli_gauss" && t.law != "rademacher" && t.law != "zero")
    fail(ErrorKind::config, r.path("teacher.law") + ": unknown law '" + t.law + "'");
  return t;
}

Nonlinearity function_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  const auto id = r.req<std::string>("id");
  Nonlinearity f;
  if (id == "identity") f = identity_fn();
  else if (id == "zero") f = zero_fn();
  else if (id == "scaled_identity") f = scaled_identity(r.req<double>("a"));
  else if (id == "tanh") f = tanh_fn(r.get<double>("gain", 1.0));
  else if (id == "relu") f = relu_fn();
  else if (id == "soft_threshold") f = soft_threshold_fn(r.req<double>("gamma"));
  else if (id == "group_soft_threshold") f = group_soft_threshold_fn(r.req<double>("gamma"));
  else fail(ErrorKind::config, path + ".id: unknown nonlinearity '" + id + "'");
  r.finish();
  return f;
}

std::vector<Observable> default_observables(const std::vector<std::string>& ids, const GraphInstance& inst,
                                            const std::function<std::optional<Observable>(const std::string&)>& extra) {
  std::vector<Observable> out;
  for (const auto& id : ids) {
    if (id == "sqnorm") {
      for (const auto& e : canonical_edge_order(inst.graph)) out.push_back(sq_norm_obs(e));
      continue;
    }
    auto o = extra(id);
    if (!o) fail(ErrorKind::config, "observables: '" + id + "' is not available for this model");
    out.push_back(*o);
  }
  return out;
}

}  // namespace

std::string ExperimentConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(raw.dump());
  return os.str();
}

ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
    long line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorKind::config, "malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
  }
  if (seed_override) j["seed"] = *seed_override;

  ExperimentConfig c;
  Reader r(j, "config");
  c.name = r.get<std::string>("name", c.name);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.T = r.get<int>("T", c.T);
  if (c.T < 1) fail(ErrorKind::config, "config.T must be >= 1");
  c.model = r.req<json>("model");
  {
    Reader m(c.model, "config.model");
    c.kind = m.req<std::string>("kind");
  }
  static const std::set<std::string> kinds{"lasso", "ridge",      "logistic",  "multilayer",
                                           "spiked", "gmm_spatial", "committee", "custom"};
  if (!kinds.count(c.kind)) fail(ErrorKind::config, "config.model.kind: unknown kind '" + c.kind + "'");
  if (r.has("amp_seeds")) {
    const json& s = r.raw("amp_seeds");
    if (s.is_number_integer()) {
      const int n = s.get<int>();
      if (n < 1) fail(ErrorKind::config, "config.amp_seeds must be >= 1");
      for (int i = 0; i < n; ++i) c.amp_seeds.push_back(splitmix64(c.seed * 1000003ULL + static_cast<std::uint64_t>(i)));
    } else if (s.is_array() && !s.empty()) {
      for (const auto& v : s) {
        if (!v.is_number_unsigned()) fail(ErrorKind::config, "config.amp_seeds: entries must be unsigned integers");
        c.amp_seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      fail(ErrorKind::config, "config.amp_seeds: expected a count or a non-empty list");
    }
  } else {
    for (int i = 0; i < 10; ++i) c.amp_seeds.push_back(splitmix64(c.seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  }
  c.se_samples = r.get<long>("se_samples", c.se_samples);
  if (c.se_samples < 2) fail(ErrorKind::config, "config.se_samples must be >= 2");
  c.se_seed = splitmix64(c.seed ^ 0x5e5e5e5eULL);
  c.six_equation = r.get<bool>("six_equation", false);
  c.quadrature_order = r.get<int>("quadrature_order", c.quadrature_order);
  if (c.quadrature_order < 2 || c.quadrature_order > 200) fail(ErrorKind::config, "config.quadrature_order must be in [2, 200]");
  c.observables = r.get<std::vector<std::string>>("observables", {});
  c.out_dir = r.get<std::string>("out_dir", "");
  if (r.has("tolerances")) {
    Reader t(r.raw("tolerances"), "config.tolerances");
    c.gate.rel_tol = t.get<double>("rel", c.gate.rel_tol);
    c.gate.z_max = t.get<double>("z", c.gate.z_max);
    c.embed_tol = t.get<double>("embed", c.embed_tol);
    t.finish();
    positive(c.gate.rel_tol, "config.tolerances.rel");
    positive(c.gate.z_max, "config.tolerances.z");
    positive(c.embed_tol, "config.tolerances.embed");
  }
  if (r.has("embed")) {
    Reader e(r.raw("embed"), "config.embed");
    c.embed_budget = e.get<double>("budget", c.embed_budget);
    c.embed_T = e.get<int>("T", c.embed_T);
    e.finish();
    positive(c.embed_budget, "config.embed.budget");
    if (c.embed_T < 1) fail(ErrorKind::config, "config.embed.T must be >= 1");
  }
  if (r.has("debug")) {
    Reader d(r.raw("debug"), "config.debug");
    c.inject_nan_at = d.get<int>("inject_nan_at", -1);
    d.finish();
  }
  r.finish();
  c.raw = j;
  // Validates the model block and the observable ids.
  build_experiment(c, c.amp_seeds.front());
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), seed_override);
}

Experiment build_experiment(const ExperimentConfig& cfg, std::uint64_t matrix_seed, double scale) {
  Experiment X;
  Reader m(cfg.model, "config.model");
  m.req<std::string>("kind");
  const std::string& kind = cfg.kind;
  std::function<std::optional<Observable>(const std::string&)> extra = [](const std::string&) {
    return std::optional<Observable>{};
  };
  std::vector<std::string> obs_ids = cfg.observables;

  if (kind == "lasso" || kind == "ridge" || kind == "logistic") {
    const long n = m.req<long>("n"), d = m.req<long>("d");
    const double lambda = m.get<double>("lambda", kind == "lasso" ? 0.1 : 1.0);
    if (n < 1 || d < 1) fail(ErrorKind::config, "config.model: n and d must be positive");
    if (!(lambda >= 0)) fail(ErrorKind::config, "config.model.lambda must be >= 0");
    GlmModel g = kind == "lasso"   ? lasso_model(scaled(n, scale), scaled(d, scale), lambda)
                 : kind == "ridge" ? ridge_model(scaled(n, scale), scaled(d, scale), lambda)
                                   : logistic_model(scaled(n, scale), scaled(d, scale), lambda);
    g.noise_std = m.get<double>("noise_std", g.noise_std);
    g.beta0 = m.get<double>("beta0", g.beta0);
    g.teacher = read_teacher(m, g.teacher);
    g.data_seed = cfg.seed;
    g.matrix_seed = matrix_seed;
    const std::string form = m.get<std::string>("form", kind == "logistic" ? "direct" : "error");
    if (form != "direct" && form != "error") fail(ErrorKind::config, "config.model.form must be 'direct' or 'error'");
    if (!(g.noise_std >= 0)) fail(ErrorKind::config, "config.model.noise_std must be >= 0");
    positive(g.beta0, "config.model.beta0");
    GampInstance G = build_gamp_instance(g, form == "error");
    X.glm = g;
    X.direct_form = form == "direct";
    X.x0 = G.data.x0;
    const Observable mse = G.mse_obs(), ov = G.overlap_obs();
    extra = [mse, ov](const std::string& id) -> std::optional<Observable> {
      if (id == "mse") return mse;
      if (id == "overlap") return ov;
      return std::nullopt;
    };
    if (obs_ids.empty()) obs_ids = X.direct_form ? std::vector<std::string>{"overlap", "mse"}
                                                 : std::vector<std::string>{"sqnorm", "mse"};
    X.inst = std::move(G.inst);
  } else if (kind == "multilayer") {
    MultilayerModel ml;
    ml.dims = m.req<std::vector<int>>("dims");
    for (int& v : ml.dims) {
      if (v < 1) fail(ErrorKind::config, "config.model.dims must be positive");
      v = static_cast<int>(scaled(v, scale));
    }
    ml.teacher_mode = m.get<std::string>("teacher_mode", ml.teacher_mode);
    ml.data_seed = cfg.seed;
    ml.matrix_seed = matrix_seed;
    MultilayerInstance M = build_multilayer_instance(ml);
    X.extrapolated = M.extrapolated;
    X.inst = std::move(M.inst);
    if (obs_ids.empty()) obs_ids = {"sqnorm"};
  } else if (kind == "spiked") {
    SpikedModel sp;
    sp.d = static_cast<int>(scaled(m.req<long>("d"), scale));
    sp.lambda = m.get<double>("lambda", sp.lambda);
    sp.prior_dims = m.get<std::vector<int>>("prior_dims", {});
    for (int& v : sp.prior_dims) {
      if (v < 1) fail(ErrorKind::config, "config.model.prior_dims must be positive");
      v = static_cast<int>(scaled(v, scale));
    }
    sp.eps_init = m.get<double>("eps_init", sp.eps_init);
    sp.data_seed = cfg.seed;
    sp.matrix_seed = matrix_seed;
    SpikedInstance S = build_spiked_instance(sp);
    const Observable ov = S.overlap_obs();
    extra = [ov](const std::string& id) -> std::optional<Observable> {
      if (id == "overlap") return ov;
      return std::nullopt;
    };
    if (obs_ids.empty()) obs_ids = {"sqnorm", "overlap"};
    X.inst = std::move(S.inst);
  } else if (kind == "gmm_spatial") {
    GmmSpatialModel gm;
    gm.d = static_cast<int>(scaled(m.req<long>("d"), scale));
    gm.cluster_sizes = m.get<std::vector<int>>("cluster_sizes", gm.cluster_sizes);
    for (int& v : gm.cluster_sizes) {
      if (v < 1) fail(ErrorKind::config, "config.model.cluster_sizes must be positive");
      v = static_cast<int>(scaled(v, scale));
    }
    if (m.has("sigma")) {
      const auto rows = m.req<std::vector<std::vector<double>>>("sigma");
      gm.sigma.resize(static_cast<long>(rows.size()), rows.empty() ? 0 : static_cast<long>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) fail(ErrorKind::config, "config.model.sigma rows differ in length");
        for (std::size_t j = 0; j < rows[i].size(); ++j) gm.sigma(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
      }
    }
    gm.feature_blocks = m.get<std::vector<int>>("feature_blocks", {});
    if (!gm.feature_blocks.empty() && scale != 1.0) {
      // Keep the block proportions, last block absorbs rounding.
      long used = 0;
      for (std::size_t i = 0; i + 1 < gm.feature_blocks.size(); ++i) {
        gm.feature_blocks[i] = static_cast<int>(scaled(gm.feature_blocks[i], scale));
        used += gm.feature_blocks[i];
      }
      gm.feature_blocks.back() = static_cast<int>(std::max(1L, gm.d - used));
    }
    gm.mean_norm = m.get<double>("mean_norm", gm.mean_norm);
    gm.mean_step = m.get<double>("mean_step", gm.mean_step);
    gm.lambda = m.get<double>("lambda", gm.lambda);
    gm.beta0 = m.get<double>("beta0", gm.beta0);
    gm.test_size = static_cast<int>(scaled(m.get<long>("test_size", gm.test_size), scale));
    gm.data_seed = cfg.seed;
    gm.matrix_seed = matrix_seed;
    GmmInstance G = build_gmm_spatial_instance(gm);
    if (obs_ids.empty()) obs_ids = {"sqnorm"};
    X.inst = std::move(G.inst);
  } else if (kind == "committee") {
    CommitteeModel cm;
    cm.n = scaled(m.req<long>("n"), scale);
    cm.d = scaled(m.req<long>("d"), scale);
    cm.q = m.get<int>("q", cm.q);
    cm.theta = m.get<double>("theta", cm.theta);
    cm.alpha = m.get<double>("alpha", cm.alpha);
    cm.V = m.get<double>("V", cm.V);
    cm.noise_std = m.get<double>("noise_std", cm.noise_std);
    cm.sparsity = m.get<double>("sparsity", cm.sparsity);
    cm.data_seed = cfg.seed;
    cm.matrix_seed = matrix_seed;
    CommitteeInstance C = build_committee_instance(cm);
    const Observable mse = C.mse_obs();
    extra = [mse](const std::string& id) -> std::optional<Observable> {
      if (id == "mse") return mse;
      return std::nullopt;
    };
    if (obs_ids.empty()) obs_ids = {"sqnorm", "mse"};
    X.inst = std::move(C.inst);
  } else {  // custom
    GraphInstance& I = X.inst;
    I.name = cfg.name;
    std::vector<EdgeId> closure;
    json g = m.req<json>("graph");
    if (scale != 1.0 && g.contains("vertices") && g["vertices"].is_array())
      for (auto& v : g["vertices"])
        if (v.contains("dim") && v["dim"].is_number_integer())
          v["dim"] = scaled(v["dim"].get<long>(), scale);
    I.graph = graph_from_json(g, &closure);
    require_valid(I.graph);
    for (const auto& e : canonical_edge_order(I.graph))
      if (I.graph.cols(e) != I.graph.cols(canonical_edge_order(I.graph).front()))
        fail(ErrorKind::config, "config.model.graph: custom models need the same cols on every edge");
    std::map<EdgeId, Nonlinearity> fns;
    const json fj = m.req<json>("functions");
    if (!fj.is_object()) fail(ErrorKind::config, "config.model.functions must map edge labels to functions");
    const json def = fj.contains("default") ? fj.at("default") : json{{"id", "tanh"}};
    for (auto it = fj.begin(); it != fj.end(); ++it) {
      if (it.key() == "default") continue;
      bool found = false;
      for (const auto& e : canonical_edge_order(I.graph)) found = found || e.label() == it.key();
      if (!found) fail(ErrorKind::config, "config.model.functions: no edge '" + it.key() + "'");
    }
    for (const auto& e : canonical_edge_order(I.graph)) {
      const std::string lbl = e.label();
      const json& spec = fj.contains(lbl) ? fj.at(lbl) : def;
      Nonlinearity f = function_from_json(spec, "config.model.functions." + lbl);
      if (edges_into(I.graph, e).size() > 1) {
        // Multiple inputs: the function acts on their sum.
        Nonlinearity inner = f;
        f.name = inner.name + "_sum";
        f.in_shapes.clear();
        f.fn = [inner](const Inputs& in, const SideData& side) -> Mat {
          Mat s = in.at(0);
          for (std::size_t k = 1; k < in.size(); ++k) s += in[k];
          return inner.fn({s}, side);
        };
        f.trace = inner.trace ? TraceFn([inner](const Inputs& in, const SideData& side, int) -> Mat {
          Mat s = in.at(0);
          for (std::size_t k = 1; k < in.size(); ++k) s += in[k];
          return inner.trace({s}, side, 0);
        })
                              : TraceFn{};
        f.row_jac = nullptr;
      }
      fns[e] = f;
    }
    I.family = stationary(fns);
    const double init = m.get<double>("init_scale", 1.0);
    SeededRng data(cfg.seed);
    const double N = static_cast<double>(I.graph.N());
    SeededRng mats(matrix_seed);
    for (const auto& e : canonical_edge_order(I.graph)) {
      I.x0[e] = init * standard_normal(data.stream("init", e.label()), I.graph.dim(e.end), I.graph.cols(e));
      const EdgeId k = storage_key(e);
      if (I.matrices.count(k)) continue;
      I.matrices[k] = k.is_loop() ? sample_goe(I.graph.dim(k.start), N, mats.stream("matrix", k.label()))
                                  : sample_iid(I.graph.dim(k.end), I.graph.dim(k.start), N, mats.stream("matrix", k.label()));
    }
    if (obs_ids.empty()) obs_ids = {"sqnorm"};
  }
  m.finish();

  if (cfg.inject_nan_at >= 0) {
    const int at = cfg.inject_nan_at;
    UpdateFamily inner = X.inst.family;
    const EdgeId first = canonical_edge_order(X.inst.graph).front();
    X.inst.family = [inner, at, first](int t, const EdgeId& e, const StepContext& ctx) -> Nonlinearity {
      Nonlinearity f = inner(t, e, ctx);
      if (t != at || e != first) return f;
      Nonlinearity g = f;
      g.name = f.name + "_nan";
      g.fn = [fn = f.fn](const Inputs& in, const SideData& side) -> Mat {
        Mat out = fn(in, side);
        if (out.size() > 0) out(0, 0) = std::nan("");
        return out;
      };
      return g;
    };
  }
  X.observables = default_observables(obs_ids, X.inst, extra);
  return X;
}

}  // namespace graphamp
