#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphamp/model_zoo.hpp"
#include "graphamp/state_evolution.hpp"

namespace graphamp {

// Strict JSON experiment description; unknown keys are rejected.
struct ExperimentConfig {
  nlohmann::json raw;  // effective document (after overrides)
  std::string name = "experiment";
  std::uint64_t seed = 1;
  nlohmann::json model;
  std::string kind;
  int T = 10;
  std::vector<std::uint64_t> amp_seeds;
  long se_samples = 2000;
  std::uint64_t se_seed = 0;
  bool six_equation = false;  // GLM only: scalar overlap SE by quadrature
  int quadrature_order = 41;
  std::vector<std::string> observables;
  CompareGate gate;
  double embed_tol = 1e-10;
  double embed_budget = 2.5e7;
  int embed_T = 10;
  int inject_nan_at = -1;
  std::string out_dir;  // empty: the CLI default

  std::string hash() const;  // FNV-1a of the effective document, hex
};

// Errors carry line and column for malformed JSON.
ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt);

// A model instance built from the config for one AMP (matrix) seed.
struct Experiment {
  GraphInstance inst;
  std::vector<Observable> observables;
  std::optional<GlmModel> glm;  // set for lasso / ridge / logistic
  bool direct_form = false;     // GLM side data depends on A: graph SE does not apply
  bool extrapolated = false;
  Mat x0;                       // GLM teacher
};

// scale shrinks every dimension (embedding checks); 1 is the configured size.
Experiment build_experiment(const ExperimentConfig& cfg, std::uint64_t matrix_seed, double scale = 1.0);

}  // namespace graphamp
