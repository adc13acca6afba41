#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msp/data.hpp"
#include "msp/policy.hpp"
#include "msp/rollout.hpp"

namespace msp {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list; updates in place from
/// each tensor's accumulated gradient. Throws NumericalError on non-finite
/// gradients.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

  void step();
  void zero_grad();
  int steps_taken() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
  AdamConfig cfg_;
  int t_ = 0;
};

struct TrainConfig {
  std::string loss = "multiset";    // multiset | seq | dm_l1 | dm_kl | one_step | rl
  std::string rank = "random";      // seq only: random | spatial | area
  std::string strategy = "greedy";  // multiset only: greedy | stochastic | oracle
  int epochs = 50;
  int batch_size = 64;
  AdamConfig adam;
  double lambda_entropy = 0.01;  // rl entropy bonus
  double lambda_size = 1.0;      // one_step size term
  double termination_weight = 1.0;
  std::string stop_rule = "termination";  // termination | end_class | fixed
  double stop_threshold = 0.5;
  std::uint64_t seed = 0;
  int t_max = 0;  // 0: |Y| per example (|Y|+1 under end_class)
  bool rl_reward_to_go = true;
  bool rl_baseline = false;  // moving-average return baseline
  double clip_norm = 0.0;    // 0: no gradient clipping
};

struct EpochStats {
  double train_loss = 0.0;
  double valid_em = 0.0;
  double valid_f1 = 0.0;
};

struct RunRecord {
  TrainConfig train_config;
  DatasetConfig data_config;
  PolicyConfig policy_config;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 1-based
  double best_valid_em = 0.0;
  double test_em = 0.0;
  double test_f1 = 0.0;
  long parameter_count = 0;
};

std::string run_record_to_json(const RunRecord& record);
void save_run_record(const RunRecord& record, const std::string& path);

struct TrainResult {
  PolicyModel model;  // best checkpoint by validation exact match
  RunRecord record;
};

/// Trains per the configs: per example, a rollout (or teacher-forced unroll)
/// feeds the configured loss, plus the termination loss when the stop rule
/// is the termination policy; gradients are averaged per batch and applied
/// with Adam. After every epoch validation EM/F1 are computed with
/// evaluation-time decoding; the best-EM checkpoint is kept and test metrics
/// in the record come from it.
TrainResult train(const Dataset& dataset, const PolicyConfig& policy_config,
                  const TrainConfig& train_config);

struct EvalOptions {
  StopRule stop_rule = StopRule::termination(0.5);
  int max_steps = 5;       // convention: max target cardinality + 1
  bool one_step = false;   // use the rounding decode of the one-step model
};

EvalOptions eval_options_for(const TrainConfig& cfg, const Dataset& ds);

struct EvalRow {
  int example_id = 0;
  double em = 0.0;
  double f1 = 0.0;
  Multiset pred;
  Multiset target;
};

struct EvalResult {
  double em_mean = 0.0;
  double f1_mean = 0.0;
  std::vector<EvalRow> rows;
};

EvalResult evaluate(const PolicyModel& model, const std::vector<Example>& split,
                    const EvalOptions& opts);

void save_eval_csv(const EvalResult& result, const std::string& config_echo,
                   const std::string& path);

/// Per-step mean and standard deviation of the class-distribution Shannon
/// entropy (nats) along greedy prefixes of the policy.
std::vector<std::pair<double, double>> entropy_profile_policy(const PolicyModel& model,
                                                              const std::vector<Example>& split,
                                                              int num_steps);

/// Oracle rows: instance-level entropy ln|Y_t| along oracle trajectories.
std::vector<std::pair<double, double>> entropy_profile_oracle(const std::vector<Example>& split,
                                                              int num_steps);

}  // namespace msp
