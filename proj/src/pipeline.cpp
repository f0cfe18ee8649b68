#include "graphamp/pipeline.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <thread>

#include "graphamp/error.hpp"

namespace graphamp {

namespace {

struct SeedRun {
  std::vector<std::vector<double>> values;  // per observable
  std::vector<ObservationRecord> records;
};

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t matrix_seed) {
  Experiment X = build_experiment(cfg, matrix_seed);
  AmpTrajectory traj = run(X.inst, cfg.T);
  SeedRun out;
  for (const auto& o : X.observables) out.values.push_back(observe(X.inst, traj, o));
  out.records = traj.records;
  return out;
}

// Runs job(i) for i in [0, n) on up to `workers` threads; the first failure by index is rethrown.
template <class Job>
void parallel_for(std::size_t n, int workers, Job job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < k; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

SEObservableStats six_equation_stats(const GampSEResult& se, const std::string& id, int T) {
  SEObservableStats s;
  s.name = id;
  for (int t = 0; t <= T; ++t) {
    s.mean.push_back(id == "overlap" ? se.overlap_at(t) : se.mse_at(t));
    s.sem.push_back(0.0);
  }
  return s;
}

}  // namespace

RunResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt) {
  RunResult R;
  R.config_hash = cfg.hash();
  Experiment X0 = build_experiment(cfg, cfg.amp_seeds.front());
  for (const auto& o : X0.observables) R.observable_names.push_back(o.edge == "*" || o.edge.empty() ? o.name : o.name + o.edge);

  if (opt.run_amp) {
    std::vector<SeedRun> runs(cfg.amp_seeds.size());
    parallel_for(runs.size(), opt.workers, [&](std::size_t i) { runs[i] = run_seed(cfg, cfg.amp_seeds[i]); });
    R.trajectory = runs.front().records;
    R.amp.assign(X0.observables.size(), {});
    for (std::size_t k = 0; k < X0.observables.size(); ++k)
      for (const auto& r : runs) R.amp[k].push_back(r.values[k]);
  }

  if (!opt.run_se) return R;
  const bool six = X0.glm && (cfg.six_equation || X0.direct_form);
  if (six) R.six_equation = gamp_overlap_se(*X0.glm, X0.x0, cfg.T / 2 + 2, GampSEOptions{cfg.quadrature_order, 61});

  std::vector<std::optional<SEObservableStats>> pred(X0.observables.size());
  if (X0.direct_form) {
    // Side data of the direct form depends on A; only the scalar system applies.
    for (std::size_t k = 0; k < X0.observables.size(); ++k) {
      const std::string& id = X0.observables[k].name;
      if (id == "overlap" || id == "mse") pred[k] = six_equation_stats(*R.six_equation, id, cfg.T);
    }
  } else {
    SEOptions so;
    so.M = cfg.se_samples;
    so.seed = cfg.se_seed;
    so.workers = opt.workers;
    StateEvolution se(X0.inst, so);
    se.run(cfg.T);
    for (const auto& e : canonical_edge_order(X0.inst.graph)) {
      const Mat& K = se.kappa(e);
      const Mat& S = se.kappa_sem(e);
      const long q = X0.inst.graph.cols(e);
      for (int s = 1; s <= cfg.T; ++s)
        for (int r = 1; r <= cfg.T; ++r)
          for (long a = 0; a < q; ++a)
            for (long b = 0; b < q; ++b) {
              const long i = (s - 1) * q + a, j = (r - 1) * q + b;
              R.kappa.push_back(KappaRow{e.label(), s, r, static_cast<int>(a), static_cast<int>(b), K(i, j),
                                         S.rows() > i && S.cols() > j ? S(i, j) : 0.0});
            }
    }
    auto stats = se.observe(X0.observables, cfg.se_samples, splitmix64(cfg.se_seed + 1));
    for (std::size_t k = 0; k < stats.size(); ++k) pred[k] = stats[k];
  }
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!pred[k]) continue;
    pred[k]->name = X0.observables[k].name;
    pred[k]->edge = X0.observables[k].edge;
    R.se.push_back(*pred[k]);
    if (!opt.run_amp) continue;
    for (const auto& row : compare(R.amp[k], *pred[k], cfg.gate)) {
      R.gate_pass = R.gate_pass && row.pass;
      R.compare.push_back(row);
    }
  }
  return R;
}

CsvTable trajectory_csv(const RunResult& r) {
  CsvTable t("trajectory", r.config_hash, {"t", "edge", "observable_name", "value"});
  for (const auto& rec : r.trajectory) {
    t.cell(rec.t).cell(rec.edge).cell(rec.name).cell(rec.value);
    t.end_row();
  }
  return t;
}

CsvTable se_csv(const RunResult& r) {
  CsvTable t("se", r.config_hash, {"edge", "s", "r", "block_row", "block_col", "kappa", "stderr"});
  for (const auto& k : r.kappa) {
    t.cell(k.edge).cell(k.s).cell(k.r).cell(k.block_row).cell(k.block_col).cell(k.kappa).cell(k.stderr_);
    t.end_row();
  }
  return t;
}

CsvTable compare_csv(const RunResult& r) {
  CsvTable t("compare", r.config_hash, {"t", "observable", "amp_mean", "amp_std", "se_mean", "se_std", "z"});
  for (const auto& c : r.compare) {
    t.cell(c.t).cell(c.observable).cell(c.amp_mean).cell(c.amp_std).cell(c.se_mean).cell(c.se_std).cell(c.z);
    t.end_row();
  }
  return t;
}

CsvTable six_equation_csv(const RunResult& r) {
  CsvTable t("six_equation", r.config_hash, {"k", "m", "q", "V", "kappa1", "kappa2", "nu_tilde", "alpha"});
  if (!r.six_equation) return t;
  for (std::size_t k = 0; k < r.six_equation->steps.size(); ++k) {
    const auto& s = r.six_equation->steps[k];
    t.cell(static_cast<long>(k)).cell(s.m).cell(s.q).cell(s.V).cell(s.kappa1).cell(s.kappa2).cell(s.nu_tilde).cell(s.alpha);
    t.end_row();
  }
  return t;
}

CsvTable checks_csv(const std::vector<CheckReport>& reports, const std::string& config_hash) {
  CsvTable t("checks", config_hash, {"check_id", "params", "statistic", "predicted", "stderr", "z", "pass"});
  for (const auto& c : reports) {
    t.cell(c.id).cell(c.params).cell(c.statistic).cell(c.predicted).cell(c.stderr_).cell(c.z).cell(c.pass);
    t.end_row();
  }
  return t;
}

EmbedResult embed_verify(const ExperimentConfig& cfg) {
  EmbedResult out;
  out.report = verify_equivalence([&cfg](double scale) { return build_experiment(cfg, cfg.amp_seeds.front(), scale).inst; },
                                  cfg.embed_T, splitmix64(cfg.seed ^ 0xe3bedULL), cfg.embed_budget);
  out.pass = out.report.max <= cfg.embed_tol;
  return out;
}

CsvTable embed_csv(const EmbedResult& r, const std::string& config_hash) {
  CsvTable t("embed", config_hash, {"t", "N", "max_abs_diff", "shrunk"});
  for (std::size_t i = 0; i < r.report.per_t.size(); ++i) {
    t.cell(static_cast<long>(i)).cell(r.report.N).cell(r.report.per_t[i]).cell(r.report.shrunk);
    t.end_row();
  }
  return t;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) fail(ErrorKind::io, "cannot create output directory '" + dir + "'");
}

std::vector<std::string> write_run(const RunResult& r, const std::string& dir, bool with_amp, bool with_se) {
  ensure_dir(dir);
  std::vector<std::string> files;
  auto put = [&](const CsvTable& t, const std::string& name) {
    const std::string p = (std::filesystem::path(dir) / name).string();
    t.write(p);
    files.push_back(p);
  };
  if (with_amp) put(trajectory_csv(r), "trajectory.csv");
  if (with_se) {
    if (!r.kappa.empty()) put(se_csv(r), "se.csv");
    if (r.six_equation) put(six_equation_csv(r), "six_equation.csv");
  }
  if (with_amp && with_se) put(compare_csv(r), "compare.csv");
  return files;
}

}  // namespace graphamp
