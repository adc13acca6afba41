#pragma once

#include <vector>

#include "msp/data.hpp"
#include "msp/mset.hpp"
#include "msp/oracle.hpp"
#include "msp/tensor.hpp"

namespace msp {

/// Log arguments are clamped to [kProbFloor, 1] so zero-probability free
/// labels early in training keep the loss finite.
constexpr double kProbFloor = 1e-12;

/// One rollout: per-step predictions, per-step class distributions (graph
/// tensors), the free label multisets Y_1..Y_T, and per-step stop
/// probabilities. free_sets[0] is the full target; free_sets[t] is
/// free_sets[t-1] minus predictions[t-1].
struct Trajectory {
  LabelSequence predictions;
  std::vector<Tensor> step_distributions;  // each [1, num_classes]
  std::vector<Multiset> free_sets;
  std::vector<Tensor> stop_probs;  // each [1, 1]
  Multiset target;

  int length() const { return static_cast<int>(predictions.size()); }
};

/// Checks the structural invariants above; throws std::logic_error on
/// violation. end_class trajectories append one extra step whose free set is
/// the end-class singleton.
void validate_trajectory(const Trajectory& traj, bool end_class = false);

enum class RankKind { Random, Spatial, Area };

/// Linearizes a target multiset for the sequence-loss baseline. Random uses
/// a fixed class permutation (generated before training, held fixed);
/// spatial orders glyphs top-to-bottom then left-to-right; area orders by
/// glyph area, larger first unless reversed. Ties break by class id.
struct RankFunction {
  RankKind kind = RankKind::Random;
  std::vector<int> random_perm;     // bijection on [0, num_classes)
  bool area_smaller_first = false;  // flips the area direction

  static RankFunction random(std::vector<int> perm);
  static RankFunction spatial() { return RankFunction{RankKind::Spatial, {}, false}; }
  static RankFunction area(bool smaller_first = false) {
    return RankFunction{RankKind::Area, {}, smaller_first};
  }
};

LabelSequence rank_sequence(const Multiset& target, const RankFunction& rank,
                            const std::vector<Glyph>& glyphs);

/// The multiset loss: -sum_t (1/|Y_t|) sum_{y in Y_t} log p_t(y), summing
/// over multiset instances (multiplicity m contributes m copies).
Tensor multiset_loss(const Trajectory& traj);

/// Negative conditional log-likelihood of a rank-ordered target sequence
/// under teacher forcing. The trajectory's step distributions must be
/// conditioned on the ground-truth prefix.
Tensor seq_loss(const Trajectory& traj, const LabelSequence& target_sequence);

enum class DmDivergence { L1, KL };

/// Aggregated distribution matching: the per-step distributions are averaged
/// and compared with the target's empirical class distribution. Requires
/// exactly |target| steps.
Tensor dm_loss(const Trajectory& traj, DmDivergence divergence);

/// One-step variant: cross-entropy between the empirical class distribution
/// and a single predicted distribution, plus lambda * (size error)^2.
Tensor one_step_loss(const Tensor& q_theta, const Tensor& size_pred, const Multiset& target,
                     double lambda);

/// Per-class predicted cardinality round(q(c) * size), clamped non-negative.
Multiset one_step_decode_counts(const Eigen::VectorXd& q, double size_pred, int num_classes);

struct RlLossResult {
  Tensor surrogate;     // REINFORCE surrogate with entropy bonus
  double total_return;  // undiscounted sum of +-1 rewards
};

/// REINFORCE on the multiset reward (+1 when the prediction is in the free
/// set, -1 otherwise). Gradients flow only through log-probabilities and the
/// entropy terms; reward weights are constants. With reward_to_go the weight
/// at step t is the suffix return G_t, otherwise the total return.
RlLossResult rl_loss(const Trajectory& traj, double lambda_entropy, bool reward_to_go = true,
                     double baseline = 0.0);

/// Mean binary cross-entropy of the stop head against targets that are 0
/// before the final target step and 1 at it.
Tensor termination_loss(const std::vector<Tensor>& stop_probs, int target_cardinality);

}  // namespace msp
