#include "msp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msp {

namespace {

Tensor log_clamped(const Tensor& probs) { return log(clamp(probs, kProbFloor, 1.0)); }

// -sum_c weights[c] * log p[c] with constant weights.
Tensor weighted_nll(const Tensor& probs, const Eigen::VectorXd& weights) {
  Tensor w = Tensor::from_row(weights);
  return scale(sum(mul(log_clamped(probs), w)), -1.0);
}

Eigen::VectorXd empirical_distribution(const Multiset& ms) {
  Eigen::VectorXd q(ms.num_classes());
  const double total = static_cast<double>(ms.cardinality());
  for (int c = 0; c < ms.num_classes(); ++c) q[c] = ms.counts()[c] / total;
  return q;
}

}  // namespace

void validate_trajectory(const Trajectory& traj, bool end_class) {
  const std::size_t t = traj.predictions.size();
  if (traj.step_distributions.size() != t || traj.free_sets.size() != t)
    throw std::logic_error("Trajectory: per-step list lengths disagree");
  if (!traj.stop_probs.empty() && traj.stop_probs.size() != t)
    throw std::logic_error("Trajectory: stop_probs length disagrees");
  if (t == 0) return;
  // In end_class mode the target lives on a ground set extended by the end
  // class, whose count starts at zero; the chain then refills an emptied
  // free set with the end-class singleton.
  const int end_id = traj.free_sets[0].num_classes() - 1;
  if (traj.free_sets[0] != traj.target)
    throw std::logic_error("Trajectory: free_sets[0] != target");
  for (std::size_t i = 1; i < t; ++i) {
    Multiset expected = traj.free_sets[i - 1].remove_one(traj.predictions[i - 1]);
    if (end_class && expected.empty()) expected = expected.with_one(end_id);
    if (traj.free_sets[i] != expected)
      throw std::logic_error("Trajectory: free set chain broken at step " + std::to_string(i));
  }
}

RankFunction RankFunction::random(std::vector<int> perm) {
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[static_cast<std::size_t>(p)])
      throw std::invalid_argument("RankFunction::random: not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  return RankFunction{RankKind::Random, std::move(perm), false};
}

LabelSequence rank_sequence(const Multiset& target, const RankFunction& rank,
                            const std::vector<Glyph>& glyphs) {
  if (rank.kind == RankKind::Random) {
    if (static_cast<int>(rank.random_perm.size()) != target.num_classes())
      throw std::invalid_argument("rank_sequence: permutation size mismatch");
    LabelSequence seq = target.enumerate();
    // Descending rank; equal classes have equal rank, so the order within a
    // class is immaterial.
    std::stable_sort(seq.begin(), seq.end(), [&](int a, int b) {
      return rank.random_perm[static_cast<std::size_t>(a)] >
             rank.random_perm[static_cast<std::size_t>(b)];
    });
    return seq;
  }

  if (glyphs.empty() && target.cardinality() > 0)
    throw std::invalid_argument("rank_sequence: spatial/area ranks need glyph annotations");
  {
    LabelSequence ids;
    for (const Glyph& g : glyphs) ids.push_back(g.class_id);
    if (Multiset::from_labels(ids, target.num_classes()) != target)
      throw std::invalid_argument("rank_sequence: glyph classes disagree with target");
  }

  std::vector<Glyph> order = glyphs;
  if (rank.kind == RankKind::Spatial) {
    // Top-to-bottom, then left-to-right, totalized by class id.
    std::sort(order.begin(), order.end(), [](const Glyph& a, const Glyph& b) {
      if (a.row != b.row) return a.row < b.row;
      if (a.col != b.col) return a.col < b.col;
      return a.class_id < b.class_id;
    });
  } else {
    const bool smaller_first = rank.area_smaller_first;
    std::sort(order.begin(), order.end(), [smaller_first](const Glyph& a, const Glyph& b) {
      if (a.area != b.area) return smaller_first ? a.area < b.area : a.area > b.area;
      if (a.class_id != b.class_id) return a.class_id < b.class_id;
      if (a.row != b.row) return a.row < b.row;
      return a.col < b.col;
    });
  }
  LabelSequence seq;
  seq.reserve(order.size());
  for (const Glyph& g : order) seq.push_back(g.class_id);
  return seq;
}

Tensor multiset_loss(const Trajectory& traj) {
  if (traj.target.empty()) throw std::invalid_argument("multiset_loss: empty target");
  if (traj.length() < 1) throw std::invalid_argument("multiset_loss: empty trajectory");
  Tensor total = Tensor::scalar(0.0);
  for (int t = 0; t < traj.length(); ++t) {
    const Multiset& free = traj.free_sets[static_cast<std::size_t>(t)];
    if (free.empty())
      throw std::invalid_argument("multiset_loss: empty free set before final step");
    // Instance weights mu(c)/|Y_t|: a class with multiplicity m contributes
    // m copies of its log-probability.
    Eigen::VectorXd w(free.num_classes());
    for (int c = 0; c < free.num_classes(); ++c)
      w[c] = static_cast<double>(free.counts()[c]) / free.cardinality();
    total = add(total, weighted_nll(traj.step_distributions[static_cast<std::size_t>(t)], w));
  }
  return total;
}

Tensor seq_loss(const Trajectory& traj, const LabelSequence& target_sequence) {
  if (traj.step_distributions.size() != target_sequence.size())
    throw std::invalid_argument("seq_loss: sequence length mismatch");
  if (target_sequence.empty()) throw std::invalid_argument("seq_loss: empty sequence");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < target_sequence.size(); ++t) {
    Tensor p = slice_cols(traj.step_distributions[t], target_sequence[t], 1);
    total = add(total, scale(log_clamped(p), -1.0));
  }
  return total;
}

Tensor dm_loss(const Trajectory& traj, DmDivergence divergence) {
  if (traj.target.empty()) throw std::invalid_argument("dm_loss: empty target");
  if (traj.length() != traj.target.cardinality())
    throw std::invalid_argument("dm_loss: needs exactly |target| steps");
  Tensor aggregated = mean_of(traj.step_distributions);
  const Eigen::VectorXd q_star = empirical_distribution(traj.target);
  if (divergence == DmDivergence::L1)
    return sum(abs(sub(Tensor::from_row(q_star), aggregated)));
  return weighted_nll(aggregated, q_star);
}

Tensor one_step_loss(const Tensor& q_theta, const Tensor& size_pred, const Multiset& target,
                     double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("one_step_loss: lambda must be positive");
  if (target.empty()) throw std::invalid_argument("one_step_loss: empty target");
  if (!size_pred.is_scalar()) throw std::invalid_argument("one_step_loss: size_pred not scalar");
  Tensor ce = weighted_nll(q_theta, empirical_distribution(target));
  Tensor size_err = square(sub(size_pred, Tensor::scalar(target.cardinality())));
  return add(ce, scale(size_err, lambda));
}

Multiset one_step_decode_counts(const Eigen::VectorXd& q, double size_pred, int num_classes) {
  Eigen::VectorXi counts(num_classes);
  const double size = std::max(size_pred, 0.0);
  for (int c = 0; c < num_classes; ++c)
    counts[c] = std::max(0, static_cast<int>(std::lround(q[c] * size)));
  return Multiset::from_counts(counts);
}

RlLossResult rl_loss(const Trajectory& traj, double lambda_entropy, bool reward_to_go,
                     double baseline) {
  const int t_len = traj.length();
  if (t_len < 1) throw std::invalid_argument("rl_loss: empty trajectory");
  std::vector<double> rewards(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    const Multiset& free = traj.free_sets[static_cast<std::size_t>(t)];
    rewards[static_cast<std::size_t>(t)] =
        free.count(traj.predictions[static_cast<std::size_t>(t)]) > 0 ? 1.0 : -1.0;
  }
  std::vector<double> weight(static_cast<std::size_t>(t_len));
  double suffix = 0.0;
  for (int t = t_len - 1; t >= 0; --t) {
    suffix += rewards[static_cast<std::size_t>(t)];
    weight[static_cast<std::size_t>(t)] = suffix;
  }
  const double total_return = weight[0];
  if (!reward_to_go) std::fill(weight.begin(), weight.end(), total_return);

  Tensor surrogate = Tensor::scalar(0.0);
  for (int t = 0; t < t_len; ++t) {
    const Tensor& probs = traj.step_distributions[static_cast<std::size_t>(t)];
    Tensor logp =
        log_clamped(slice_cols(probs, traj.predictions[static_cast<std::size_t>(t)], 1));
    Tensor term = scale(logp, weight[static_cast<std::size_t>(t)] - baseline);
    // Entropy bonus -sum p log p, built on the graph so its gradient flows.
    Tensor entropy = scale(sum(mul(probs, log_clamped(probs))), -1.0);
    term = add(term, scale(entropy, lambda_entropy));
    surrogate = add(surrogate, term);
  }
  return RlLossResult{scale(surrogate, -1.0), total_return};
}

Tensor termination_loss(const std::vector<Tensor>& stop_probs, int target_cardinality) {
  if (static_cast<int>(stop_probs.size()) != target_cardinality)
    throw std::invalid_argument("termination_loss: needs |target| stop probabilities");
  Tensor total = Tensor::scalar(0.0);
  for (int t = 0; t < target_cardinality; ++t) {
    const Tensor& s = stop_probs[static_cast<std::size_t>(t)];
    Tensor one_minus = sub(Tensor::scalar(1.0), s);
    Tensor bce = (t == target_cardinality - 1) ? scale(log_clamped(s), -1.0)
                                               : scale(log_clamped(one_minus), -1.0);
    total = add(total, bce);
  }
  return scale(total, 1.0 / target_cardinality);
}

}  // namespace msp
