#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "msp/policy.hpp"
#include "msp/rng.hpp"

using namespace msp;

namespace {

RowMat zero_grid(int g) { return RowMat::Zero(g, g); }

RowMat grid_with_block(int g, int row, int col) {
  RowMat grid = RowMat::Zero(g, g);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) grid(row + r, col + c) = 1.0;
  return grid;
}

void zero_params(PolicyModel& model) {
  for (auto& [name, t] : model.parameters()) t.flat().setZero();
}

bool same_params(const PolicyModel& a, const PolicyModel& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (int j = 0; j < pa[i].second.size(); ++j)
      if (pa[i].second.flat()[j] != pb[i].second.flat()[j]) return false;
  return true;
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  PolicyConfig cfg;
  const PolicyModel a = PolicyModel::init(cfg, 42);
  const PolicyModel b = PolicyModel::init(cfg, 42);
  const PolicyModel c = PolicyModel::init(cfg, 43);
  CHECK(same_params(a, b));
  CHECK_FALSE(same_params(a, c));
  CHECK(a.parameter_count() > 0);
}

TEST_CASE("head shapes follow the config") {
  PolicyConfig cfg;
  cfg.num_classes = 10;
  cfg.hidden_dim = 64;
  PolicyModel m = PolicyModel::init(cfg, 1);
  for (auto& [name, t] : m.parameters()) {
    if (name == "cls.w") {
      CHECK(t.rows() == 64);
      CHECK(t.cols() == 10);
    }
    if (name == "emb") CHECK(t.rows() == 11);  // one start-token row
  }
}

TEST_CASE("invalid dimensions are rejected") {
  PolicyConfig cfg;
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(PolicyModel::init(cfg, 1), std::invalid_argument);
  PolicyConfig odd;
  odd.grid_size = 15;  // conv tower needs multiples of 4
  CHECK_THROWS_AS(PolicyModel::init(odd, 1), std::invalid_argument);
  PolicyConfig bad_enc;
  bad_enc.encoder = "transformer";
  CHECK_THROWS_AS(PolicyModel::init(bad_enc, 1), std::invalid_argument);
}

TEST_CASE("encode is deterministic, finite, and position sensitive") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 7);

  const Tensor f0 = m.encode(zero_grid(16));
  for (int i = 0; i < f0.size(); ++i) CHECK(std::isfinite(f0.value_at(i)));

  const Tensor fa = m.encode(grid_with_block(16, 2, 2));
  const Tensor fb = m.encode(grid_with_block(16, 2, 2));
  for (int i = 0; i < fa.size(); ++i) CHECK(fa.value_at(i) == fb.value_at(i));

  const Tensor fc = m.encode(grid_with_block(16, 9, 9));
  bool any_diff = false;
  for (int i = 0; i < fa.size(); ++i) any_diff = any_diff || fa.value_at(i) != fc.value_at(i);
  CHECK(any_diff);

  CHECK_THROWS_AS(m.encode(zero_grid(12)), std::invalid_argument);
}

TEST_CASE("mlp fallback encoder works on flat grids") {
  PolicyConfig cfg;
  cfg.encoder = "mlp";
  PolicyModel m = PolicyModel::init(cfg, 7);
  const Tensor f = m.encode(grid_with_block(16, 3, 4));
  CHECK(f.cols() == cfg.feature_dim);
  for (int i = 0; i < f.size(); ++i) CHECK(std::isfinite(f.value_at(i)));
}

TEST_CASE("step emits a normalized distribution deterministically") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 3);
  const Tensor features = m.encode(grid_with_block(16, 4, 4));
  const auto s1 = m.step(m.initial_state(), features, m.start_token());
  const auto s2 = m.step(m.initial_state(), features, m.start_token());
  CHECK(s1.probs.row_vector().sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (int i = 0; i < s1.probs.size(); ++i)
    CHECK(s1.probs.value_at(i) == s2.probs.value_at(i));
  CHECK(s1.stop_prob.value() == s2.stop_prob.value());
  CHECK_THROWS_AS(m.step(m.initial_state(), features, cfg.num_classes + 1),
                  std::invalid_argument);
}

TEST_CASE("zero parameters give the uniform distribution and stop 0.5") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 3);
  zero_params(m);
  const Tensor features = m.encode(grid_with_block(16, 4, 4));
  const auto s = m.step(m.initial_state(), features, m.start_token());
  for (int c = 0; c < cfg.num_classes; ++c)
    CHECK(s.probs.value_at(c) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.stop_prob.value() == 0.5);
  CHECK(m.predict_size(s.state).value() == 0.0);
}

TEST_CASE("the step output conditions on the previous label") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 11);
  const Tensor features = m.encode(grid_with_block(16, 4, 4));
  const auto a = m.step(m.initial_state(), features, 0);
  const auto b = m.step(m.initial_state(), features, 1);
  bool any_diff = false;
  for (int i = 0; i < a.probs.size(); ++i)
    any_diff = any_diff || a.probs.value_at(i) != b.probs.value_at(i);
  CHECK(any_diff);
}

TEST_CASE("outputs stay finite over random draws and random grids") {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    PolicyConfig cfg;
    cfg.feature_dim = 8;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 8;
    cfg.conv_channels1 = 2;
    cfg.conv_channels2 = 3;
    PolicyModel m = PolicyModel::init(cfg, rng.next_u64());
    RowMat grid(16, 16);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) grid(r, c) = rng.uniform();
    const Tensor features = m.encode(grid);
    const auto s = m.step(m.initial_state(), features, rng.uniform_int(cfg.num_classes + 1));
    for (int i = 0; i < s.probs.size(); ++i) CHECK(std::isfinite(s.probs.value_at(i)));
    CHECK(std::isfinite(s.stop_prob.value()));
  }
}

TEST_CASE("a full unroll backpropagates into the encoder") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 9);
  Graph g;
  Tensor features = m.encode(grid_with_block(16, 5, 5));
  RecurrentState state = m.initial_state();
  Tensor loss = Tensor::scalar(0.0);
  int prev = m.start_token();
  for (int t = 0; t < 3; ++t) {
    const auto s = m.step(state, features, prev);
    loss = add(loss, scale(log(clamp(slice_cols(s.probs, t, 1), 1e-12, 1.0)), -1.0));
    state = s.state;
    prev = t;
  }
  g.backward(loss);
  for (auto& [name, t] : m.parameters()) {
    if (name == "enc.k1") {
      REQUIRE(t.has_grad());
      CHECK(t.grad().abs().sum() > 0.0);
    }
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  PolicyConfig cfg;
  PolicyModel m = PolicyModel::init(cfg, 77);
  const std::string path = "policy_test_ckpt.json";
  save_checkpoint(m, path);
  const PolicyModel loaded = load_checkpoint(path);
  CHECK(same_params(m, loaded));
  CHECK(loaded.config().num_classes == cfg.num_classes);
  std::remove(path.c_str());
}
