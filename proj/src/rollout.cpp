#include "msp/rollout.hpp"

#include <stdexcept>

#include "msp/oracle.hpp"

namespace msp {

namespace {

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // strict: ties keep the lowest id
  return best;
}

Multiset extend_ground_set(const Multiset& ms, int extra_classes) {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(ms.num_classes() + extra_classes);
  counts.head(ms.num_classes()) = ms.counts();
  return Multiset::from_counts(counts);
}

}  // namespace

ExecutionStrategy parse_strategy(const std::string& name) {
  if (name == "greedy") return ExecutionStrategy::Greedy;
  if (name == "stochastic") return ExecutionStrategy::Stochastic;
  if (name == "oracle") return ExecutionStrategy::OracleSampling;
  throw std::invalid_argument("parse_strategy: unknown strategy '" + name + "'");
}

StopRule StopRule::termination(double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("StopRule: threshold must be in (0,1)");
  return StopRule{Mode::TerminationPolicy, threshold, 0};
}

StopRule StopRule::fixed(int n) {
  if (n < 0) throw std::invalid_argument("StopRule: fixed length must be non-negative");
  return StopRule{Mode::FixedLength, 0.5, n};
}

Trajectory rollout(const PolicyModel& model, const Example& example, const RolloutOptions& opts,
                   Rng& rng) {
  if (opts.max_steps < 1) throw std::invalid_argument("rollout: max_steps must be >= 1");
  if (opts.strategy == ExecutionStrategy::OracleSampling && example.target.empty())
    throw std::invalid_argument("rollout: oracle sampling needs a non-empty target");
  if (opts.use_end_class && model.config().num_classes != example.target.num_classes() + 1)
    throw std::invalid_argument("rollout: end_class needs one extra model class");

  Trajectory traj;
  traj.target =
      opts.use_end_class ? extend_ground_set(example.target, 1) : example.target;
  const int end_id = opts.use_end_class ? traj.target.num_classes() - 1 : -1;

  Tensor features = model.encode(example.grid);
  RecurrentState state = model.initial_state();
  int prev = model.start_token();
  Multiset free = traj.target;

  for (int t = 0; t < opts.max_steps; ++t) {
    bool final_end_step = false;
    if (free.empty()) {
      if (!opts.use_end_class) break;  // Y_t = empty terminates the episode
      free = free.with_one(end_id);
      final_end_step = true;
    }
    PolicyModel::StepResult sr = model.step(state, features, prev);

    int label = 0;
    switch (opts.strategy) {
      case ExecutionStrategy::Greedy:
        label = argmax_lowest(sr.probs.row_vector());
        break;
      case ExecutionStrategy::Stochastic:
        label = rng.categorical(sr.probs.row_vector());
        break;
      case ExecutionStrategy::OracleSampling:
        label = rng.categorical(oracle_distribution(OracleState{free, t}));
        break;
    }

    traj.predictions.push_back(label);
    traj.step_distributions.push_back(sr.probs);
    traj.free_sets.push_back(free);
    traj.stop_probs.push_back(sr.stop_prob);

    if (final_end_step) break;
    free = free.remove_one(label);
    prev = label;
    state = sr.state;
  }
  return traj;
}

Trajectory teacher_forced_unroll(const PolicyModel& model, const Example& example,
                                 const LabelSequence& target_sequence) {
  if (target_sequence.empty())
    throw std::invalid_argument("teacher_forced_unroll: empty sequence");
  Trajectory traj;
  traj.target = example.target;

  Tensor features = model.encode(example.grid);
  RecurrentState state = model.initial_state();
  int prev = model.start_token();
  Multiset free = example.target;

  for (int label : target_sequence) {
    PolicyModel::StepResult sr = model.step(state, features, prev);
    traj.predictions.push_back(label);
    traj.step_distributions.push_back(sr.probs);
    traj.free_sets.push_back(free);
    traj.stop_probs.push_back(sr.stop_prob);
    free = free.remove_one(label);
    prev = label;
    state = sr.state;
  }
  return traj;
}

Multiset decode(const PolicyModel& model, const RowMat& grid, const StopRule& rule,
                int max_steps) {
  if (max_steps < 1) throw std::invalid_argument("decode: max_steps must be >= 1");
  const int model_classes = model.config().num_classes;
  const int out_classes =
      rule.mode == StopRule::Mode::EndClass ? model_classes - 1 : model_classes;
  const int end_id = model_classes - 1;

  Tensor features = model.encode(grid);
  RecurrentState state = model.initial_state();
  int prev = model.start_token();
  LabelSequence labels;

  for (int t = 0; t < max_steps; ++t) {
    if (rule.mode == StopRule::Mode::FixedLength &&
        static_cast<int>(labels.size()) >= rule.fixed_length)
      break;
    PolicyModel::StepResult sr = model.step(state, features, prev);
    const int label = argmax_lowest(sr.probs.row_vector());
    if (rule.mode == StopRule::Mode::EndClass && label == end_id) break;
    labels.push_back(label);
    if (rule.mode == StopRule::Mode::TerminationPolicy &&
        sr.stop_prob.value() >= rule.threshold)
      break;
    prev = label;
    state = sr.state;
  }
  return Multiset::from_labels(labels, out_classes);
}

Multiset decode_one_step(const PolicyModel& model, const RowMat& grid) {
  Tensor features = model.encode(grid);
  PolicyModel::StepResult sr =
      model.step(model.initial_state(), features, model.start_token());
  const double size_pred = model.predict_size(sr.state).value();
  return one_step_decode_counts(sr.probs.row_vector(), size_pred,
                                model.config().num_classes);
}

}  // namespace msp
