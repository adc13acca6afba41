#include "msp/mset.hpp"

#include <stdexcept>
#include <string>

namespace msp {

Multiset::Multiset(int num_classes) {
  if (num_classes <= 0) throw std::invalid_argument("Multiset: num_classes must be positive");
  counts_ = Eigen::VectorXi::Zero(num_classes);
}

Multiset Multiset::from_labels(const LabelSequence& labels, int num_classes) {
  Multiset ms(num_classes);
  for (int c : labels) {
    if (c < 0 || c >= num_classes)
      throw std::invalid_argument("Multiset::from_labels: label " + std::to_string(c) +
                                  " out of range [0," + std::to_string(num_classes) + ")");
    ms.counts_[c] += 1;
  }
  ms.cardinality_ = static_cast<int>(labels.size());
  return ms;
}

Multiset Multiset::from_counts(const Eigen::VectorXi& counts) {
  if (counts.size() == 0) throw std::invalid_argument("Multiset::from_counts: empty counts");
  if ((counts.array() < 0).any())
    throw std::invalid_argument("Multiset::from_counts: negative multiplicity");
  Multiset ms;
  ms.counts_ = counts;
  ms.cardinality_ = counts.sum();
  return ms;
}

int Multiset::count(int c) const {
  if (c < 0 || c >= num_classes())
    throw std::invalid_argument("Multiset::count: class id out of range");
  return counts_[c];
}

Multiset Multiset::with_one(int c) const {
  if (c < 0 || c >= num_classes())
    throw std::invalid_argument("Multiset::with_one: class id out of range");
  Multiset ms(*this);
  ms.counts_[c] += 1;
  ms.cardinality_ += 1;
  return ms;
}

Multiset Multiset::remove_one(int c) const {
  if (c < 0 || c >= num_classes())
    throw std::invalid_argument("Multiset::remove_one: class id out of range");
  Multiset ms(*this);
  if (ms.counts_[c] > 0) {
    ms.counts_[c] -= 1;
    ms.cardinality_ -= 1;
  }
  return ms;
}

LabelSequence Multiset::enumerate() const {
  LabelSequence labels;
  labels.reserve(static_cast<std::size_t>(cardinality_));
  for (int c = 0; c < num_classes(); ++c)
    for (int k = 0; k < counts_[c]; ++k) labels.push_back(c);
  return labels;
}

bool Multiset::operator==(const Multiset& other) const {
  return counts_.size() == other.counts_.size() && counts_ == other.counts_;
}

namespace {

void check_same_ground_set(const Multiset& a, const Multiset& b, const char* who) {
  if (a.num_classes() != b.num_classes())
    throw std::invalid_argument(std::string(who) + ": mismatched num_classes");
}

}  // namespace

bool exact_match(const Multiset& a, const Multiset& b) {
  check_same_ground_set(a, b, "exact_match");
  return a == b;
}

double precision(const Multiset& pred, const Multiset& target) {
  check_same_ground_set(pred, target, "precision");
  if (pred.cardinality() == 0) return target.cardinality() == 0 ? 1.0 : 0.0;
  // Integer numerator, then one division: matches the enumerated form
  // bit-for-bit (IEEE division of the same rational rounds identically).
  int extra = 0;
  for (int c = 0; c < pred.num_classes(); ++c)
    extra += std::max(pred.counts()[c] - target.counts()[c], 0);
  return static_cast<double>(pred.cardinality() - extra) / pred.cardinality();
}

double recall(const Multiset& pred, const Multiset& target) {
  check_same_ground_set(pred, target, "recall");
  if (target.cardinality() == 0) throw std::invalid_argument("recall: empty target");
  int missed = 0;
  for (int c = 0; c < pred.num_classes(); ++c)
    missed += std::max(target.counts()[c] - pred.counts()[c], 0);
  return static_cast<double>(target.cardinality() - missed) / target.cardinality();
}

double f1(const Multiset& pred, const Multiset& target) {
  check_same_ground_set(pred, target, "f1");
  if (pred.cardinality() == 0 && target.cardinality() == 0) return 1.0;
  if (pred.cardinality() == 0 || target.cardinality() == 0) return 0.0;
  const double p = precision(pred, target);
  const double r = recall(pred, target);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

}  // namespace msp
