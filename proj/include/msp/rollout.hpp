#pragma once

#include "msp/data.hpp"
#include "msp/losses.hpp"
#include "msp/policy.hpp"
#include "msp/rng.hpp"

namespace msp {

/// How the next label is chosen while producing a training trajectory:
/// argmax of the policy, a sample from the policy, or a sample from the
/// oracle distribution over the free label multiset.
enum class ExecutionStrategy { Greedy, Stochastic, OracleSampling };

ExecutionStrategy parse_strategy(const std::string& name);

/// Evaluation-time stopping: threshold the stop head after each emission,
/// stop on the dedicated end class, or emit a fixed number of labels.
struct StopRule {
  enum class Mode { TerminationPolicy, EndClass, FixedLength };
  Mode mode = Mode::TerminationPolicy;
  double threshold = 0.5;
  int fixed_length = 0;

  static StopRule termination(double threshold = 0.5);
  static StopRule end_class() { return StopRule{Mode::EndClass, 0.5, 0}; }
  static StopRule fixed(int n);
};

struct RolloutOptions {
  ExecutionStrategy strategy = ExecutionStrategy::Greedy;
  int max_steps = 1;
  /// Track the free label multiset over an extended ground set whose last
  /// class is the end marker; once the target is exhausted the free set
  /// becomes the end-class singleton for one final supervised step.
  bool use_end_class = false;
};

/// Executes the policy on one example, maintaining free label multisets.
/// Length is min(max_steps, first step at which the free set empties).
Trajectory rollout(const PolicyModel& model, const Example& example, const RolloutOptions& opts,
                   Rng& rng);

/// Unrolls the policy conditioned on the ground-truth prefix s_{<t}
/// (teacher forcing); the trajectory's predictions are the forced labels.
Trajectory teacher_forced_unroll(const PolicyModel& model, const Example& example,
                                 const LabelSequence& target_sequence);

/// Greedy decoding with the given stop rule. Never emits more than
/// max_steps labels. With the end_class rule the end label is not added to
/// the output and the result lives on the ground set without it.
Multiset decode(const PolicyModel& model, const RowMat& grid, const StopRule& rule,
                int max_steps);

/// One-step decode: a single step from the start token; per-class counts are
/// round(q(c) * predicted size).
Multiset decode_one_step(const PolicyModel& model, const RowMat& grid);

}  // namespace msp
