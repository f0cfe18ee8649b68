#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphamp/error.hpp"
#include "graphamp/pipeline.hpp"

using namespace graphamp;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::logic;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const char* kSmallRidge = R"({"seed": 4, "T": 6, "amp_seeds": 3, "se_samples": 400,
  "model": {"kind": "ridge", "n": 240, "d": 160, "lambda": 1.0}})";

const char* kSmallCustom = R"({"seed": 9, "T": 5, "amp_seeds": 4, "se_samples": 300,
  "model": {"kind": "custom",
    "graph": {"vertices": [{"id": "a", "dim": 120}, {"id": "b", "dim": 80}],
              "edges": [{"from": "a", "to": "b", "cols": 1}, {"from": "a", "to": "a", "cols": 1}]},
    "functions": {"default": {"id": "tanh", "gain": 1.5}}}})";

}  // namespace

TEST_CASE("malformed JSON reports line and column") {
  const std::string msg = message_of("{\n  \"T\": 3,\n  \"model\": @\n}");
  CHECK(msg.find("line 3, column 12") != std::string::npos);
  CHECK(kind_of("{") == ErrorKind::config);
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK(message_of(R"({"model": {"kind": "lasso", "n": 10, "d": 20}, "extra": 1})").find("unknown key 'extra'") !=
        std::string::npos);
  CHECK(message_of(R"({"model": {"kind": "lasso", "n": 10, "d": 20, "teacher": {"law": "gauss", "spars": 1}}})")
            .find("config.model.teacher: unknown key 'spars'") != std::string::npos);
  CHECK(kind_of(R"({"model": {"kind": "lasso", "n": 10, "d": 20}, "T": 0})") == ErrorKind::config);
  CHECK(kind_of(R"({"model": {"kind": "lasso", "n": -1, "d": 20}})") == ErrorKind::config);
  CHECK(kind_of(R"({"model": {"kind": "lasso", "n": 10, "d": "x"}})") == ErrorKind::config);
  CHECK(kind_of(R"({"model": {"kind": "nope"}})") == ErrorKind::config);
  CHECK(kind_of(R"({"model": {"kind": "ridge", "n": 10, "d": 20}, "observables": ["overlapz"]})") == ErrorKind::config);
  CHECK(kind_of(R"j({"model": {"kind": "custom", "graph": {"vertices": [{"id": "a", "dim": 5}], "edges": []},
                  "functions": {"(a,b)": {"id": "tanh"}}}})j") == ErrorKind::config);
}

TEST_CASE("config hash follows the effective document") {
  const ExperimentConfig a = parse_config(kSmallRidge);
  const ExperimentConfig b = parse_config(kSmallRidge);
  const ExperimentConfig c = parse_config(kSmallRidge, 5);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.amp_seeds.size() == 3);
  CHECK(c.seed == 5);
  CHECK(a.amp_seeds != c.amp_seeds);
}

TEST_CASE("csv tables") {
  CsvTable t("demo", "abc", {"x", "label"});
  t.cell(0.1).cell("a,b");
  t.end_row();
  t.cell(-2.5e-300).cell("q\"q");
  t.end_row();
  CHECK(t.str() == "# schema=demo/1 config_hash=abc\nx,label\n0.10000000000000001,\"a,b\"\n-2.5e-300,\"q\"\"q\"\n");
  CHECK(std::strtod(format_double(0.1).c_str(), nullptr) == 0.1);
  t.cell(1.0);
  CHECK_THROWS_AS(t.end_row(), Error);
  CHECK_THROWS_AS(CsvTable("x", "h", {"a"}).write("/proc/nonexistent/dir/x.csv"), Error);
}

TEST_CASE("NaN injection aborts with the step") {
  std::string text = kSmallRidge;
  text.insert(text.rfind('}'), R"(, "debug": {"inject_nan_at": 3})");
  const ExperimentConfig cfg = parse_config(text);
  try {
    run_pipeline(cfg, {});
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numerical);
    CHECK(std::string(e.what()).find("t=3") != std::string::npos);
  }
}

TEST_CASE("outputs do not depend on the worker count") {
  for (const char* text : {kSmallRidge, kSmallCustom}) {
    const ExperimentConfig cfg = parse_config(text);
    PipelineOptions one, many;
    many.workers = 3;
    const RunResult a = run_pipeline(cfg, one), b = run_pipeline(cfg, many);
    CHECK(trajectory_csv(a).str() == trajectory_csv(b).str());
    CHECK(se_csv(a).str() == se_csv(b).str());
    CHECK(compare_csv(a).str() == compare_csv(b).str());
    CHECK(trajectory_csv(a).rows() > 0);
    CHECK(compare_csv(a).rows() > 0);
  }
}

TEST_CASE("se-only with doubled M agrees within standard errors") {
  const ExperimentConfig half = parse_config(kSmallCustom);
  std::string text = kSmallCustom;
  text.replace(text.find("\"se_samples\": 300"), 17, "\"se_samples\": 600");
  const ExperimentConfig full = parse_config(text);
  PipelineOptions po;
  po.run_amp = false;
  const RunResult a = run_pipeline(half, po), b = run_pipeline(full, po);
  REQUIRE(a.kappa.size() == b.kappa.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.kappa.size(); ++i) {
    const double se = std::hypot(a.kappa[i].stderr_, b.kappa[i].stderr_);
    const double diff = std::abs(a.kappa[i].kappa - b.kappa[i].kappa);
    if (se > 0) worst = std::max(worst, diff / se);
    else CHECK(diff <= 1e-12 * std::max(1.0, std::abs(a.kappa[i].kappa)));
  }
  CHECK(worst <= 4.5);
  CHECK(a.compare.empty());
}

TEST_CASE("direct-form GLM compares against the scalar system") {
  const ExperimentConfig cfg = parse_config(R"({"seed": 2, "T": 8, "amp_seeds": 3,
    "model": {"kind": "logistic", "n": 800, "d": 400, "lambda": 0.5}, "observables": ["overlap", "mse"]})");
  const RunResult r = run_pipeline(cfg, {});
  REQUIRE(r.six_equation);
  CHECK(r.kappa.empty());
  CHECK(r.compare.size() == 2 * 9);
  for (const auto& row : r.compare)
    if (row.t >= 1) CHECK(std::abs(row.amp_mean - row.se_mean) <= 0.1 * std::abs(row.se_mean) + 1e-12);
}

TEST_CASE("write_run produces files with headers") {
  const ExperimentConfig cfg = parse_config(kSmallRidge);
  const RunResult r = run_pipeline(cfg, {});
  const auto dir = std::filesystem::temp_directory_path() / "graphamp_test_write_run";
  std::filesystem::remove_all(dir);
  const auto files = write_run(r, dir.string(), true, true);
  CHECK(files.size() == 3);
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string first;
    std::getline(in, first);
    CHECK(first.rfind("# schema=", 0) == 0);
    CHECK(first.find("config_hash=" + cfg.hash()) != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("custom graphs need one column count") {
  CHECK(message_of(R"j({"model": {"kind": "custom",
    "graph": {"vertices": [{"id": "a", "dim": 5}, {"id": "b", "dim": 4}],
              "edges": [{"from": "a", "to": "b", "cols": 1}, {"from": "a", "to": "a", "cols": 2}]},
    "functions": {}}})j").find("same cols") != std::string::npos);
}
