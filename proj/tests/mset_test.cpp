#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "msp/mset.hpp"
#include "msp/rng.hpp"
#include "test_support.hpp"

using namespace msp;

namespace {

Multiset ms(const LabelSequence& labels, int classes) {
  return Multiset::from_labels(labels, classes);
}

}  // namespace

TEST_CASE("from_labels counts occurrences") {
  const Multiset a = ms({0, 0, 1}, 3);
  CHECK(a.counts()[0] == 2);
  CHECK(a.counts()[1] == 1);
  CHECK(a.counts()[2] == 0);
  CHECK(a.cardinality() == 3);

  const Multiset empty = ms({}, 3);
  CHECK(empty.cardinality() == 0);
  CHECK(empty.counts().sum() == 0);

  CHECK(ms({2, 1, 2}, 3) == ms({1, 2, 2}, 3));
  CHECK_THROWS_AS(ms({3}, 3), std::invalid_argument);
  CHECK_THROWS_AS(ms({-1}, 3), std::invalid_argument);
}

TEST_CASE("remove_one follows multiset difference semantics") {
  // ground set {cat=0, dog=1}
  const Multiset both = ms({0, 0, 1}, 2);
  CHECK(both.remove_one(0) == ms({0, 1}, 2));
  CHECK(ms({0}, 2).remove_one(1) == ms({0}, 2));  // absent class: no-op
  CHECK(ms({0}, 2).remove_one(0).empty());
}

TEST_CASE("exact match compares multiplicities, not order") {
  CHECK(exact_match(ms({0, 1, 0}, 3), ms({1, 0, 0}, 3)));
  CHECK_FALSE(exact_match(ms({0, 1, 0}, 3), ms({0, 1}, 3)));
  CHECK(exact_match(ms({}, 3), ms({}, 3)));
  CHECK_THROWS_AS(exact_match(ms({}, 3), ms({}, 4)), std::invalid_argument);
}

TEST_CASE("precision, recall, f1 on the worked examples") {
  const Multiset pred = ms({0, 0, 1}, 3);  // {a,a,b}
  const Multiset target = ms({0, 1}, 3);   // {a,b}
  CHECK(precision(pred, target) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(recall(pred, target) == 1.0);
  CHECK(f1(pred, target) == doctest::Approx(0.8).epsilon(1e-15));

  CHECK(precision(target, target) == 1.0);
  CHECK(f1(target, target) == 1.0);
  CHECK(precision(ms({2}, 3), target) == 0.0);
  CHECK(f1(ms({2}, 3), target) == 0.0);

  CHECK(recall(ms({0}, 3), ms({0, 1}, 3)) == 0.5);
  CHECK(recall(ms({}, 3), target) == 0.0);
  CHECK_THROWS_AS(recall(pred, ms({}, 3)), std::invalid_argument);
}

TEST_CASE("empty-prediction conventions") {
  const Multiset empty = ms({}, 3);
  CHECK(precision(empty, ms({0}, 3)) == 0.0);
  CHECK(f1(empty, ms({0}, 3)) == 0.0);
  CHECK(precision(empty, empty) == 1.0);
  CHECK(f1(empty, empty) == 1.0);
}

TEST_CASE("enumerated and multiplicity forms agree exactly on random pairs") {
  Rng rng(20240601);
  for (int trial = 0; trial < 10000; ++trial) {
    const int classes = rng.uniform_range(1, 10);
    const Multiset pred = testing::random_multiset(rng, classes, 6);
    const Multiset target = testing::random_multiset(rng, classes, 6, 1);
    CHECK(precision(pred, target) == testing::enumerated_precision(pred, target));
    CHECK(recall(pred, target) == testing::enumerated_recall(pred, target));
  }
}

TEST_CASE("exact match iff precision and recall are both one") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const int classes = rng.uniform_range(1, 8);
    const Multiset pred = testing::random_multiset(rng, classes, 5, 1);
    const Multiset target = testing::random_multiset(rng, classes, 5, 1);
    const bool em = exact_match(pred, target);
    const bool pr_one = precision(pred, target) == 1.0 && recall(pred, target) == 1.0;
    CHECK(em == pr_one);
  }
}

TEST_CASE("metrics are invariant under class relabeling") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int classes = rng.uniform_range(2, 8);
    const Multiset pred = testing::random_multiset(rng, classes, 5);
    const Multiset target = testing::random_multiset(rng, classes, 5, 1);
    const std::vector<int> perm = rng.permutation(classes);
    Eigen::VectorXi pc = Eigen::VectorXi::Zero(classes), tc = Eigen::VectorXi::Zero(classes);
    for (int c = 0; c < classes; ++c) {
      pc[perm[static_cast<std::size_t>(c)]] = pred.counts()[c];
      tc[perm[static_cast<std::size_t>(c)]] = target.counts()[c];
    }
    const Multiset pred2 = Multiset::from_counts(pc);
    const Multiset target2 = Multiset::from_counts(tc);
    CHECK(precision(pred, target) == precision(pred2, target2));
    CHECK(recall(pred, target) == recall(pred2, target2));
  }
}

TEST_CASE("metrics stay in the unit interval") {
  Rng rng(31337);
  for (int trial = 0; trial < 2000; ++trial) {
    const int classes = rng.uniform_range(1, 10);
    const Multiset pred = testing::random_multiset(rng, classes, 6);
    const Multiset target = testing::random_multiset(rng, classes, 6, 1);
    const double p = precision(pred, target);
    const double r = recall(pred, target);
    const double f = f1(pred, target);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("enumerate lists each class by multiplicity") {
  CHECK(ms({2, 0, 2}, 3).enumerate() == LabelSequence{0, 2, 2});
  CHECK(ms({}, 3).enumerate().empty());
}
