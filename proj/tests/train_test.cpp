#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msp/errors.hpp"
#include "msp/train.hpp"

using namespace msp;

namespace {

Dataset tiny_dataset(std::uint64_t seed, int train_n = 64, const char* profile = "multi1to4") {
  DatasetConfig cfg = profile_config(profile, seed);
  cfg.num_train = train_n;
  cfg.num_valid = 24;
  cfg.num_test = 24;
  return generate_dataset(cfg);
}

PolicyConfig tiny_policy() {
  PolicyConfig cfg;
  cfg.feature_dim = 12;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 12;
  cfg.conv_channels1 = 3;
  cfg.conv_channels2 = 6;
  return cfg;
}

TrainConfig quick_config(const char* loss, int epochs = 2) {
  TrainConfig cfg;
  cfg.loss = loss;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("adam: first bias-corrected step moves by about the learning rate") {
  Tensor p = Tensor::scalar(1.0);
  p.data_ptr()->requires_grad = true;
  Adam adam({{"p", p}}, AdamConfig{});
  p.grad_ref()[0] = 1.0;
  adam.step();
  CHECK(p.value() == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  Tensor p = Tensor::scalar(2.5);
  p.data_ptr()->requires_grad = true;
  Adam adam({{"p", p}}, AdamConfig{});
  p.grad_ref().setZero();
  adam.step();
  CHECK(p.value() == 2.5);
}

TEST_CASE("adam: identical inputs give identical updates") {
  auto run = [] {
    Tensor p = Tensor::from_row(Eigen::Vector3d(0.5, -1.0, 2.0), true);
    Adam adam({{"p", p}}, AdamConfig{});
    for (int t = 0; t < 5; ++t) {
      p.grad_ref() = Eigen::ArrayXd::LinSpaced(3, 0.1, 0.3) * (t + 1);
      adam.step();
      p.zero_grad();
    }
    return p;
  };
  Tensor a = run(), b = run();
  for (int i = 0; i < a.size(); ++i) CHECK(a.value_at(i) == b.value_at(i));
}

TEST_CASE("adam: non-finite gradients abort with a diagnostic") {
  Tensor p = Tensor::scalar(1.0);
  p.data_ptr()->requires_grad = true;
  Adam adam({{"p", p}}, AdamConfig{});
  p.grad_ref()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam.step(), NumericalError);
}

TEST_CASE("one training epoch stays finite with metrics in range") {
  const Dataset ds = tiny_dataset(31);
  const TrainResult r = train(ds, tiny_policy(), quick_config("multiset", 1));
  REQUIRE(r.record.epochs.size() == 1);
  CHECK(std::isfinite(r.record.epochs[0].train_loss));
  CHECK(r.record.epochs[0].valid_em >= 0.0);
  CHECK(r.record.epochs[0].valid_em <= 1.0);
  CHECK(r.record.epochs[0].valid_f1 >= 0.0);
  CHECK(r.record.epochs[0].valid_f1 <= 1.0);
  CHECK(r.record.parameter_count > 0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset ds = tiny_dataset(32);
  const TrainResult a = train(ds, tiny_policy(), quick_config("multiset"));
  const TrainResult b = train(ds, tiny_policy(), quick_config("multiset"));
  CHECK(run_record_to_json(a.record) == run_record_to_json(b.record));
}

TEST_CASE("every loss kind trains for an epoch") {
  const Dataset ds = tiny_dataset(33, 32);
  for (const char* loss : {"multiset", "seq", "dm_l1", "dm_kl", "one_step", "rl"}) {
    const TrainResult r = train(ds, tiny_policy(), quick_config(loss, 1));
    INFO(loss);
    CHECK(std::isfinite(r.record.epochs[0].train_loss));
  }
}

TEST_CASE("execution strategies and end_class mode train for an epoch") {
  const Dataset ds = tiny_dataset(34, 32);
  for (const char* strategy : {"stochastic", "oracle"}) {
    TrainConfig cfg = quick_config("multiset", 1);
    cfg.strategy = strategy;
    CHECK(std::isfinite(train(ds, tiny_policy(), cfg).record.epochs[0].train_loss));
  }
  TrainConfig endc = quick_config("multiset", 1);
  endc.stop_rule = "end_class";
  const TrainResult r = train(ds, tiny_policy(), endc);
  CHECK(r.record.policy_config.num_classes == ds.config.num_classes + 1);
}

TEST_CASE("reported test metrics come from the best checkpoint") {
  const Dataset ds = tiny_dataset(35, 48);
  const TrainResult r = train(ds, tiny_policy(), quick_config("multiset", 3));
  double best = -1.0;
  for (const EpochStats& e : r.record.epochs) best = std::max(best, e.valid_em);
  CHECK(r.record.best_valid_em == best);
  // recompute with the returned model: must reproduce the recorded numbers
  const EvalResult test = evaluate(r.model, ds.test, eval_options_for(r.record.train_config, ds));
  CHECK(test.em_mean == r.record.test_em);
  CHECK(test.f1_mean == r.record.test_f1);
}

TEST_CASE("evaluate: exact-match dominance and empty-prediction floors") {
  const Dataset ds = tiny_dataset(36, 16);
  PolicyConfig pc = tiny_policy();
  pc.num_classes = ds.config.num_classes;
  pc.grid_size = ds.config.grid_size;
  const PolicyModel m = PolicyModel::init(pc, 3);

  EvalOptions opts;
  opts.max_steps = ds.max_cardinality() + 1;
  const EvalResult r = evaluate(m, ds.test, opts);
  double perfect_f1 = 0.0;
  for (const EvalRow& row : r.rows) perfect_f1 += row.f1 == 1.0 ? 1.0 : 0.0;
  CHECK(r.em_mean <= perfect_f1 / static_cast<double>(r.rows.size()));

  EvalOptions empty_opts;
  empty_opts.stop_rule = StopRule::fixed(0);  // constant-empty predictor
  const EvalResult empty = evaluate(m, ds.test, empty_opts);
  CHECK(empty.em_mean == 0.0);
  CHECK(empty.f1_mean == 0.0);
}

TEST_CASE("oracle entropy profile on a fixed-4 split is the closed form") {
  const Dataset ds = tiny_dataset(37, 16, "multi4");
  const auto profile = entropy_profile_oracle(ds.test, 4);
  REQUIRE(profile.size() == 4);
  CHECK(profile[0].first == std::log(4.0));
  CHECK(profile[1].first == std::log(3.0));
  CHECK(profile[2].first == std::log(2.0));
  CHECK(profile[3].first == 0.0);
  for (const auto& [mean, sd] : profile) CHECK(sd == 0.0);
}

TEST_CASE("an untrained uniform policy profiles at ln num_classes") {
  const Dataset ds = tiny_dataset(38, 16, "multi4");
  PolicyConfig pc = tiny_policy();
  pc.num_classes = ds.config.num_classes;
  pc.grid_size = ds.config.grid_size;
  PolicyModel m = PolicyModel::init(pc, 1);
  for (auto& [name, t] : m.parameters()) t.flat().setZero();
  const auto profile = entropy_profile_policy(m, ds.test, 4);
  for (const auto& [mean, sd] : profile) {
    CHECK(mean == doctest::Approx(std::log(10.0)).epsilon(1e-9));
    CHECK(sd <= 1e-12);
  }
}

TEST_CASE("config validation rejects bad settings") {
  const Dataset ds = tiny_dataset(39, 16);
  TrainConfig bad_loss = quick_config("focal");
  CHECK_THROWS_AS(train(ds, tiny_policy(), bad_loss), std::invalid_argument);
  TrainConfig bad_epochs = quick_config("multiset");
  bad_epochs.epochs = 0;
  CHECK_THROWS_AS(train(ds, tiny_policy(), bad_epochs), std::invalid_argument);
  TrainConfig bad_rank = quick_config("seq");
  bad_rank.rank = "alphabetical";
  CHECK_THROWS_AS(train(ds, tiny_policy(), bad_rank), std::invalid_argument);
}
