#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "graphamp/error.hpp"
#include "graphamp/pipeline.hpp"

using namespace graphamp;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
    default: return 1;
  }
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config error";
    case ErrorKind::numerical: return "numerical error";
    case ErrorKind::io: return "I/O error";
    default: return "internal error";
  }
}

int resolve_workers(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("AMP_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 1024) fail(ErrorKind::config, "AMP_WORKERS must be an integer in [1, 1024]");
    return static_cast<int>(v);
  }
  return 1;
}

std::vector<CheckReport> run_checks(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckReport> out;
  auto add = [&out](std::vector<CheckReport> more) { out.insert(out.end(), more.begin(), more.end()); };
  const bool all = suite == "all";
  if (all || suite == "stein") {
    Mat kappa(2, 2);
    kappa << 1.0, 0.6, 0.6, 1.0;
    for (const auto& f : {identity_fn(), tanh_fn(), soft_threshold_fn(0.5)}) add(stein_check(f, kappa, 10000, 200, seed));
  }
  if (all || suite == "goe") {
    GoeProjectionOptions o;
    o.seed = seed;
    add(goe_projection_checks(o));
  }
  if (all || suite == "onsager") add(onsager_fd_suite(shipped_fd_cases(), 100, seed));
  if (all || suite == "opnorm") add(opnorm_check({250, 500, 1000}, 3, seed));
  return out;
}

void print_written(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph AMP: iterations, state evolution and validation checks"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all";
  int workers = 0;
  std::optional<std::uint64_t> seed;
  bool strict = false;

  auto common = [&](CLI::App* sub, bool needs_config, bool has_out) {
    auto* c = sub->add_option("--config", config_path, "experiment JSON");
    if (needs_config) c->required();
    if (has_out) sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "worker threads (default: AMP_WORKERS or 1)")->check(CLI::Range(1, 1024));
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_flag("--strict", strict, "exit 1 when a gate or check fails");
  };
  auto* validate = app.add_subcommand("validate-config", "parse and validate a config");
  common(validate, true, false);
  auto* runc = app.add_subcommand("run", "AMP runs, state evolution and comparison");
  common(runc, true, true);
  auto* checks = app.add_subcommand("checks", "validation checks");
  common(checks, false, true);
  checks->add_option("--suite", suite, "stein | goe | onsager | opnorm | all")
      ->check(CLI::IsMember({"stein", "goe", "onsager", "opnorm", "all"}));
  auto* se_only = app.add_subcommand("se-only", "state evolution without AMP runs");
  common(se_only, true, true);
  auto* embed = app.add_subcommand("embed-verify", "graph AMP against its symmetric embedding");
  common(embed, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const int nworkers = resolve_workers(workers);
    if (*checks) {
      std::uint64_t s = seed.value_or(1);
      std::string hash = "none";
      if (!config_path.empty()) {
        const ExperimentConfig cfg = load_config(config_path, seed);
        s = cfg.seed;
        hash = cfg.hash();
      }
      if (out_dir.empty()) out_dir = "out";
      const auto reports = run_checks(suite, s);
      ensure_dir(out_dir);
      const std::string path = (std::filesystem::path(out_dir) / "checks.csv").string();
      checks_csv(reports, hash).write(path);
      int failed = 0;
      for (const auto& r : reports) {
        if (!r.pass) {
          ++failed;
          std::cout << "FAIL " << r.id << " " << r.params << " statistic=" << format_double(r.statistic) << "\n";
        }
      }
      std::cout << reports.size() - static_cast<std::size_t>(failed) << "/" << reports.size() << " checks passed\n";
      print_written({path});
      return strict && failed > 0 ? 1 : 0;
    }

    const ExperimentConfig cfg = load_config(config_path, seed);
    if (out_dir.empty()) out_dir = cfg.out_dir.empty() ? "out" : cfg.out_dir;
    if (*validate) {
      std::cout << "ok " << cfg.name << " kind=" << cfg.kind << " config_hash=" << cfg.hash() << "\n";
      return 0;
    }
    if (*embed) {
      const EmbedResult r = embed_verify(cfg);
      ensure_dir(out_dir);
      const std::string path = (std::filesystem::path(out_dir) / "embed.csv").string();
      embed_csv(r, cfg.hash()).write(path);
      std::cout << "embedding N=" << r.report.N << (r.report.shrunk ? " (shrunk)" : "")
                << " max_abs_diff=" << format_double(r.report.max) << (r.pass ? " pass" : " FAIL") << "\n";
      print_written({path});
      return strict && !r.pass ? 1 : 0;
    }
    PipelineOptions po;
    po.workers = nworkers;
    po.run_amp = !*se_only;
    const RunResult r = run_pipeline(cfg, po);
    print_written(write_run(r, out_dir, po.run_amp, true));
    if (po.run_amp && !r.compare.empty()) {
      std::size_t passed = 0;
      for (const auto& row : r.compare) passed += row.pass ? 1 : 0;
      std::cout << passed << "/" << r.compare.size() << " comparison rows within the gate\n";
    }
    return strict && !r.gate_pass ? 1 : 0;
  } catch (const Error& e) {
    std::cerr << "graphamp: " << kind_name(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "graphamp: internal error: " << e.what() << "\n";
    return 1;
  }
}
