#pragma once

#include <Eigen/Dense>
#include <vector>

namespace msp {

/// Ordered list of class ids; the sequence view of predictions and targets.
using LabelSequence = std::vector<int>;

/// Multiset over the ground set {0, ..., num_classes-1}, stored as a dense
/// multiplicity vector. Immutable after construction; equality is elementwise
/// equality of counts, so it is order-free by construction.
class Multiset {
 public:
  Multiset() = default;
  explicit Multiset(int num_classes);

  static Multiset from_labels(const LabelSequence& labels, int num_classes);
  static Multiset from_counts(const Eigen::VectorXi& counts);

  int num_classes() const { return static_cast<int>(counts_.size()); }
  int count(int c) const;
  int cardinality() const { return cardinality_; }
  bool empty() const { return cardinality_ == 0; }
  const Eigen::VectorXi& counts() const { return counts_; }

  /// Adds one occurrence of class c.
  Multiset with_one(int c) const;

  /// Multiset difference with {c}. Removing an absent class is a no-op, per
  /// multiset difference semantics.
  Multiset remove_one(int c) const;

  /// Enumerated form: class c repeated count(c) times, ascending class order.
  LabelSequence enumerate() const;

  bool operator==(const Multiset& other) const;
  bool operator!=(const Multiset& other) const { return !(*this == other); }

 private:
  Eigen::VectorXi counts_;
  int cardinality_ = 0;
};

/// True iff counts vectors are identical (multiset equality).
bool exact_match(const Multiset& a, const Multiset& b);

/// Ratio of correctly predicted elements to the number of predicted elements.
/// Empty prediction: 1 if the target is also empty, else 0.
double precision(const Multiset& pred, const Multiset& target);

/// Ratio of correctly predicted elements to the number of target elements.
/// The target must be non-empty.
double recall(const Multiset& pred, const Multiset& target);

/// Harmonic mean of precision and recall; 0 when both vanish.
double f1(const Multiset& pred, const Multiset& target);

}  // namespace msp
