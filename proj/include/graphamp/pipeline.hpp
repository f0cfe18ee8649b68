#pragma once

#include <optional>
#include <string>
#include <vector>

#include "graphamp/config.hpp"
#include "graphamp/csv.hpp"
#include "graphamp/gamp_se.hpp"
#include "graphamp/state_evolution.hpp"
#include "graphamp/symmetric_reduction.hpp"
#include "graphamp/validation.hpp"

namespace graphamp {

struct KappaRow {
  std::string edge;
  int s = 0;
  int r = 0;
  int block_row = 0;
  int block_col = 0;
  double kappa = 0.0;
  double stderr_ = 0.0;
};

struct RunResult {
  std::string config_hash;
  std::vector<ObservationRecord> trajectory;  // first AMP seed
  std::vector<std::string> observable_names;
  // amp[k][seed][t] for observable k
  std::vector<std::vector<std::vector<double>>> amp;
  std::vector<SEObservableStats> se;
  std::vector<CompareRow> compare;
  std::vector<KappaRow> kappa;
  std::optional<GampSEResult> six_equation;
  bool gate_pass = true;
};

struct PipelineOptions {
  bool run_amp = true;
  bool run_se = true;
  int workers = 1;
};

RunResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt);

CsvTable trajectory_csv(const RunResult& r);
CsvTable se_csv(const RunResult& r);
CsvTable compare_csv(const RunResult& r);
CsvTable six_equation_csv(const RunResult& r);
CsvTable checks_csv(const std::vector<CheckReport>& reports, const std::string& config_hash);

struct EmbedResult {
  EquivalenceReport report;
  bool pass = false;
};
EmbedResult embed_verify(const ExperimentConfig& cfg);
CsvTable embed_csv(const EmbedResult& r, const std::string& config_hash);

// Writes the CSVs of a run into dir (created if missing).
std::vector<std::string> write_run(const RunResult& r, const std::string& dir, bool with_amp, bool with_se);
void ensure_dir(const std::string& dir);

}  // namespace graphamp
