#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "msp/rollout.hpp"
#include "test_support.hpp"

using namespace msp;

namespace {

PolicyConfig small_config(int classes = 5) {
  PolicyConfig cfg;
  cfg.num_classes = classes;
  cfg.feature_dim = 8;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 8;
  cfg.conv_channels1 = 2;
  cfg.conv_channels2 = 3;
  return cfg;
}

Example make_example(const LabelSequence& labels, int classes, int grid = 16) {
  Example ex;
  ex.grid = RowMat::Zero(grid, grid);
  ex.target = Multiset::from_labels(labels, classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    ex.glyphs.push_back(Glyph{labels[i], static_cast<int>(i), static_cast<int>(2 * i), 3, 5});
  return ex;
}

// all-zero parameters except the class-head bias, which favors `favorite`
PolicyModel frozen_favoring(const PolicyConfig& cfg, int favorite) {
  PolicyModel m = PolicyModel::init(cfg, 0);
  for (auto& [name, t] : m.parameters()) {
    t.flat().setZero();
    if (name == "cls.b") t.flat()[favorite] = 5.0;
  }
  return m;
}

}  // namespace

TEST_CASE("oracle sampling on a singleton target picks it with probability one") {
  Rng rng(1);
  PolicyModel m = PolicyModel::init(small_config(), 4);
  const Example ex = make_example({0}, 5);
  RolloutOptions opts;
  opts.strategy = ExecutionStrategy::OracleSampling;
  opts.max_steps = 1;
  const Trajectory traj = rollout(m, ex, opts, rng);
  CHECK(traj.predictions == LabelSequence{0});
  CHECK(traj.free_sets[0] == ex.target);
}

TEST_CASE("greedy rollout with a frozen favorite never shrinks the free set") {
  Rng rng(1);
  PolicyModel m = frozen_favoring(small_config(), 3);
  const Example ex = make_example({1, 2}, 5);
  RolloutOptions opts;
  opts.max_steps = 2;
  const Trajectory traj = rollout(m, ex, opts, rng);
  CHECK(traj.predictions == LabelSequence{3, 3});
  CHECK(traj.free_sets[0] == ex.target);
  CHECK(traj.free_sets[1] == ex.target);  // absent-class removal is a no-op
  CHECK_NOTHROW(validate_trajectory(traj));
}

TEST_CASE("greedy rollouts are deterministic") {
  Rng rng1(9), rng2(9);
  PolicyModel m = PolicyModel::init(small_config(), 21);
  const Example ex = make_example({0, 1, 1}, 5);
  RolloutOptions opts;
  opts.max_steps = 3;
  const Trajectory a = rollout(m, ex, opts, rng1);
  const Trajectory b = rollout(m, ex, opts, rng2);
  CHECK(a.predictions == b.predictions);
  for (int t = 0; t < a.length(); ++t)
    for (int i = 0; i < a.step_distributions[t].size(); ++i)
      CHECK(a.step_distributions[t].value_at(i) == b.step_distributions[t].value_at(i));
}

TEST_CASE("oracle sampling reaches exact match whenever max_steps covers the target") {
  Rng rng(77);
  PolicyModel m = PolicyModel::init(small_config(), 5);
  for (int trial = 0; trial < 50; ++trial) {
    const Multiset target = testing::random_multiset(rng, 5, 4, 1);
    Example ex = make_example(target.enumerate(), 5);
    RolloutOptions opts;
    opts.strategy = ExecutionStrategy::OracleSampling;
    opts.max_steps = 6;
    const Trajectory traj = rollout(m, ex, opts, rng);
    CHECK(traj.length() == target.cardinality());  // stops when the free set empties
    CHECK(exact_match(Multiset::from_labels(traj.predictions, 5), target));
    CHECK_NOTHROW(validate_trajectory(traj));
  }
}

TEST_CASE("stochastic rollouts keep the trajectory invariants") {
  Rng rng(31);
  PolicyModel m = PolicyModel::init(small_config(), 5);
  for (int trial = 0; trial < 50; ++trial) {
    const Multiset target = testing::random_multiset(rng, 5, 4, 1);
    Example ex = make_example(target.enumerate(), 5);
    RolloutOptions opts;
    opts.strategy = ExecutionStrategy::Stochastic;
    opts.max_steps = target.cardinality();
    const Trajectory traj = rollout(m, ex, opts, rng);
    CHECK(traj.length() == target.cardinality());
    CHECK_NOTHROW(validate_trajectory(traj));
  }
}

TEST_CASE("rollout argument validation") {
  Rng rng(1);
  PolicyModel m = PolicyModel::init(small_config(), 1);
  Example ex = make_example({0}, 5);
  RolloutOptions opts;
  opts.max_steps = 0;
  CHECK_THROWS_AS(rollout(m, ex, opts, rng), std::invalid_argument);

  Example no_target;
  no_target.grid = RowMat::Zero(16, 16);
  no_target.target = Multiset(5);
  RolloutOptions oracle_opts;
  oracle_opts.strategy = ExecutionStrategy::OracleSampling;
  oracle_opts.max_steps = 2;
  CHECK_THROWS_AS(rollout(m, no_target, oracle_opts, rng), std::invalid_argument);
}

TEST_CASE("end_class rollout appends the end-class step") {
  Rng rng(5);
  PolicyConfig cfg = small_config(6);  // 5 data classes + end
  PolicyModel m = PolicyModel::init(cfg, 8);
  const Example ex = make_example({2}, 5);
  RolloutOptions opts;
  opts.strategy = ExecutionStrategy::OracleSampling;
  opts.use_end_class = true;
  opts.max_steps = 2;
  const Trajectory traj = rollout(m, ex, opts, rng);
  REQUIRE(traj.length() == 2);
  CHECK(traj.predictions[0] == 2);
  CHECK(traj.free_sets[1].count(5) == 1);  // end-class singleton
  CHECK(traj.free_sets[1].cardinality() == 1);
  CHECK_NOTHROW(validate_trajectory(traj, true));
}

TEST_CASE("teacher forcing records the forced labels and ground-truth chain") {
  PolicyModel m = PolicyModel::init(small_config(), 13);
  const Example ex = make_example({1, 1, 3}, 5);
  const LabelSequence s = {3, 1, 1};
  const Trajectory traj = teacher_forced_unroll(m, ex, s);
  CHECK(traj.predictions == s);
  CHECK(traj.length() == 3);
  CHECK_NOTHROW(validate_trajectory(traj));
  CHECK_THROWS_AS(teacher_forced_unroll(m, ex, {}), std::invalid_argument);
}

TEST_CASE("decode stop rules") {
  PolicyConfig cfg = small_config();
  const RowMat grid = RowMat::Zero(16, 16);

  // stop head biased high: first emission already crosses the threshold
  PolicyModel eager = PolicyModel::init(cfg, 0);
  for (auto& [name, t] : eager.parameters()) {
    t.flat().setZero();
    if (name == "stop.b") t.flat()[0] = 8.0;
  }
  CHECK(decode(eager, grid, StopRule::termination(0.5), 6).cardinality() == 1);

  // stop head biased low: runs to the cap
  PolicyModel reluctant = PolicyModel::init(cfg, 0);
  for (auto& [name, t] : reluctant.parameters()) {
    t.flat().setZero();
    if (name == "stop.b") t.flat()[0] = -8.0;
  }
  CHECK(decode(reluctant, grid, StopRule::termination(0.5), 6).cardinality() == 6);

  CHECK(decode(reluctant, grid, StopRule::fixed(4), 8).cardinality() == 4);
  CHECK(decode(reluctant, grid, StopRule::fixed(0), 8).cardinality() == 0);

  // end-class model whose argmax is the end label stops immediately
  PolicyConfig end_cfg = small_config(6);
  PolicyModel ender = frozen_favoring(end_cfg, 5);
  const Multiset empty = decode(ender, grid, StopRule::end_class(), 6);
  CHECK(empty.cardinality() == 0);
  CHECK(empty.num_classes() == 5);  // reported on the data ground set
}

TEST_CASE("decode output is capped by max_steps") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyModel m = PolicyModel::init(small_config(), rng.next_u64());
    const int cap = rng.uniform_range(1, 5);
    const Multiset pred =
        decode(m, RowMat::Zero(16, 16), StopRule::termination(0.5), cap);
    CHECK(pred.cardinality() <= cap);
  }
}

TEST_CASE("stop rule construction validates arguments") {
  CHECK_THROWS_AS(StopRule::termination(0.0), std::invalid_argument);
  CHECK_THROWS_AS(StopRule::termination(1.0), std::invalid_argument);
  CHECK_THROWS_AS(StopRule::fixed(-1), std::invalid_argument);
  CHECK_THROWS_AS(parse_strategy("beam"), std::invalid_argument);
}
