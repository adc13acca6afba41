#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msp/train.hpp"

namespace msp {

/// Shuffles each example's glyph annotation list (a reordering of the target
/// enumeration); grids and targets are untouched.
Dataset with_shuffled_glyph_annotations(const Dataset& ds, std::uint64_t seed);

PolicyConfig default_policy_config();

struct ExperimentSpec {
  std::string name;  // exp1_rank | exp2_strategies | exp3_losses | entropy
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int epochs = 50;
  std::uint64_t data_seed = 101;
  std::string profile;  // empty: the experiment's default profile
};

struct RunOutcome {
  double test_em = 0.0;
  double test_f1 = 0.0;
  RunRecord record;
  PolicyModel model;  // best checkpoint
};

/// Executes training runs, memoizing by full configuration so arms shared
/// between experiments (e.g. the greedy multiset arm) train once. Datasets
/// are generated once per (profile, seed) and shared by every arm.
class Runner {
 public:
  explicit Runner(bool verbose = true) : verbose_(verbose) {}

  const Dataset& dataset(const std::string& profile, std::uint64_t seed,
                         bool reshuffled_glyphs = false);
  RunOutcome run(const std::string& profile, std::uint64_t data_seed, const TrainConfig& cfg,
                 bool reshuffled_glyphs = false);

 private:
  bool verbose_;
  std::map<std::string, Dataset> datasets_;
  std::map<std::string, RunOutcome> outcomes_;
};

struct SeedMetric {
  std::uint64_t seed = 0;
  double em = 0.0;
  double f1 = 0.0;
};

struct ArmSummary {
  std::string name;
  std::vector<SeedMetric> runs;
  double em_mean = 0.0, em_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

struct ExperimentResult {
  std::string name;
  std::string profile;
  std::vector<ArmSummary> arms;
  // entropy experiment only: per-arm per-step {mean, std}
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> entropy_rows;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, Runner& runner);

std::string render_table(const ExperimentResult& result);
void write_experiment_csv(const ExperimentResult& result, const std::string& config_echo,
                          const std::string& path);

}  // namespace msp
