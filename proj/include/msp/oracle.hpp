#pragma once

#include <Eigen/Dense>

#include "msp/mset.hpp"

namespace msp {

/// Probability vector over the class set; entries non-negative, sum 1.
using ClassDistribution = Eigen::VectorXd;

/// State of the oracle policy: the free label multiset (targets not yet
/// predicted) and the current step index.
struct OracleState {
  Multiset free;
  int step = 0;
};

inline OracleState initial_state(const Multiset& target) { return OracleState{target, 0}; }

/// The oracle distribution: mass 1/|free| per remaining instance, summed per
/// class, i.e. probs[c] = count(c) / |free|. The free multiset must be
/// non-empty.
ClassDistribution oracle_distribution(const OracleState& state);

/// Instance-level oracle entropy, ln|free|, in nats. This is the quantity
/// with the strict per-step decrease guarantee; the class-level Shannon
/// entropy of oracle_distribution is a different number when multiplicities
/// exceed one and is not monotone.
double oracle_entropy_nats(const OracleState& state);

/// Class-level Shannon entropy of an arbitrary distribution, in nats,
/// with 0 log 0 = 0.
double shannon_entropy_nats(const ClassDistribution& probs);

/// Bookkeeping after a prediction: removes one instance of the predicted
/// class from the free multiset (no-op when absent) and advances the step.
OracleState advance(const OracleState& state, int predicted);

}  // namespace msp
