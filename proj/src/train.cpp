#include "msp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "msp/errors.hpp"
#include "msp/losses.hpp"
#include "msp/oracle.hpp"
#include "msp/rng.hpp"

namespace msp {

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config)
    : params_(std::move(params)), cfg_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.push_back(Eigen::ArrayXd::Zero(t.size()));
    v_.push_back(Eigen::ArrayXd::Zero(t.size()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].second;
    if (!p.has_grad()) continue;  // untouched leaf: zero gradient, no update
    const Eigen::ArrayXd& g = p.grad();
    if (!g.isFinite().all())
      throw NumericalError("Adam: non-finite gradient in " + params_[k].first + " at step " +
                           std::to_string(t_));
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.square();
    p.flat() -= cfg_.learning_rate * (m_[k] / bc1) / ((v_[k] / bc2).sqrt() + cfg_.epsilon);
  }
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

// ---- training helpers ---------------------------------------------------------

namespace {

struct LossKind {
  enum Kind { Multiset, Seq, DmL1, DmKL, OneStep, Rl } kind;
  static LossKind parse(const std::string& name) {
    if (name == "multiset") return {Multiset};
    if (name == "seq") return {Seq};
    if (name == "dm_l1") return {DmL1};
    if (name == "dm_kl") return {DmKL};
    if (name == "one_step") return {OneStep};
    if (name == "rl") return {Rl};
    throw std::invalid_argument("TrainConfig: unknown loss '" + name + "'");
  }
};

RankFunction make_rank(const TrainConfig& cfg, int num_classes) {
  if (cfg.rank == "random") {
    // Generated before training from the run seed, then held fixed.
    Rng rng = Rng::substream(cfg.seed, 0x72616e6bull);
    return RankFunction::random(rng.permutation(num_classes));
  }
  if (cfg.rank == "spatial") return RankFunction::spatial();
  if (cfg.rank == "area") return RankFunction::area();
  throw std::invalid_argument("TrainConfig: unknown rank '" + cfg.rank + "'");
}

struct Snapshot {
  std::vector<Eigen::ArrayXd> values;
};

Snapshot take_snapshot(PolicyModel& model) {
  Snapshot s;
  for (auto& [name, t] : model.parameters()) s.values.push_back(t.flat());
  return s;
}

void restore_snapshot(PolicyModel& model, const Snapshot& s) {
  std::size_t k = 0;
  for (auto& [name, t] : model.parameters()) t.flat() = s.values[k++];
}

}  // namespace

EvalOptions eval_options_for(const TrainConfig& cfg, const Dataset& ds) {
  EvalOptions opts;
  opts.max_steps = ds.max_cardinality() + 1;
  if (cfg.loss == "one_step") {
    opts.one_step = true;
    return opts;
  }
  if (cfg.stop_rule == "termination")
    opts.stop_rule = StopRule::termination(cfg.stop_threshold);
  else if (cfg.stop_rule == "end_class")
    opts.stop_rule = StopRule::end_class();
  else if (cfg.stop_rule == "fixed")
    opts.stop_rule = StopRule::fixed(ds.max_cardinality());
  else
    throw std::invalid_argument("TrainConfig: unknown stop_rule '" + cfg.stop_rule + "'");
  return opts;
}

EvalResult evaluate(const PolicyModel& model, const std::vector<Example>& split,
                    const EvalOptions& opts) {
  EvalResult result;
  result.rows.reserve(split.size());
  double em_sum = 0.0, f1_sum = 0.0;
  for (const Example& ex : split) {
    Multiset pred = opts.one_step
                        ? decode_one_step(model, ex.grid)
                        : decode(model, ex.grid, opts.stop_rule, opts.max_steps);
    // end_class decoding already reports on the data ground set
    if (pred.num_classes() != ex.target.num_classes())
      throw std::logic_error("evaluate: prediction ground set mismatch");
    EvalRow row;
    row.example_id = ex.id;
    row.em = exact_match(pred, ex.target) ? 1.0 : 0.0;
    row.f1 = f1(pred, ex.target);
    row.pred = pred;
    row.target = ex.target;
    em_sum += row.em;
    f1_sum += row.f1;
    result.rows.push_back(std::move(row));
  }
  if (!split.empty()) {
    result.em_mean = em_sum / static_cast<double>(split.size());
    result.f1_mean = f1_sum / static_cast<double>(split.size());
  }
  return result;
}

namespace {

struct ExampleLoss {
  Tensor loss;
  double rl_return = 0.0;
  bool has_return = false;
};

// Builds the differentiable objective for one example under the configured
// loss; returns the scalar tensor (graph must be recording).
ExampleLoss example_loss(PolicyModel& model, const Example& ex, const TrainConfig& cfg,
                         LossKind::Kind kind, const RankFunction& rank, Rng& rng,
                         double rl_baseline_value) {
  const bool use_end_class = cfg.stop_rule == "end_class";
  const bool term_supervision = cfg.stop_rule == "termination";
  const int card = ex.target.cardinality();

  RolloutOptions ropts;
  ropts.use_end_class = use_end_class;
  ropts.max_steps = cfg.t_max > 0 ? cfg.t_max : (use_end_class ? card + 1 : card);

  ExampleLoss out;
  Trajectory traj;
  switch (kind) {
    case LossKind::Multiset: {
      ropts.strategy = parse_strategy(cfg.strategy);
      traj = rollout(model, ex, ropts, rng);
      out.loss = multiset_loss(traj);
      break;
    }
    case LossKind::Seq: {
      const LabelSequence s = rank_sequence(ex.target, rank, ex.glyphs);
      traj = teacher_forced_unroll(model, ex, s);
      out.loss = seq_loss(traj, s);
      break;
    }
    case LossKind::DmL1:
    case LossKind::DmKL: {
      ropts.strategy = ExecutionStrategy::Stochastic;
      ropts.use_end_class = false;
      ropts.max_steps = card;  // aggregation over exactly |Y| sampled steps
      traj = rollout(model, ex, ropts, rng);
      out.loss = dm_loss(traj, kind == LossKind::DmL1 ? DmDivergence::L1 : DmDivergence::KL);
      break;
    }
    case LossKind::OneStep: {
      Tensor features = model.encode(ex.grid);
      PolicyModel::StepResult sr =
          model.step(model.initial_state(), features, model.start_token());
      out.loss = one_step_loss(sr.probs, model.predict_size(sr.state), ex.target,
                               cfg.lambda_size);
      return out;
    }
    case LossKind::Rl: {
      ropts.strategy = ExecutionStrategy::Stochastic;
      traj = rollout(model, ex, ropts, rng);
      RlLossResult rl = rl_loss(traj, cfg.lambda_entropy, cfg.rl_reward_to_go,
                                cfg.rl_baseline ? rl_baseline_value : 0.0);
      out.loss = rl.surrogate;
      out.rl_return = rl.total_return;
      out.has_return = true;
      break;
    }
  }
  if (term_supervision && traj.length() == card)
    out.loss =
        add(out.loss, scale(termination_loss(traj.stop_probs, card), cfg.termination_weight));
  return out;
}

double grad_norm(std::vector<std::pair<std::string, Tensor>>& params) {
  double sq = 0.0;
  for (auto& [name, t] : params)
    if (t.has_grad()) sq += (t.grad() * t.grad()).sum();
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const Dataset& dataset, const PolicyConfig& policy_config,
                  const TrainConfig& train_config) {
  const LossKind::Kind kind = LossKind::parse(train_config.loss).kind;
  if (train_config.epochs < 1 || train_config.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch_size must be positive");
  if (kind == LossKind::Rl && train_config.strategy != "greedy" &&
      train_config.strategy != "stochastic")
    throw std::invalid_argument("train: rl uses stochastic rollouts");

  PolicyConfig pc = policy_config;
  pc.num_classes = dataset.config.num_classes +
                   (train_config.stop_rule == "end_class" ? 1 : 0);
  pc.grid_size = dataset.config.grid_size;

  PolicyModel model = PolicyModel::init(pc, train_config.seed);
  Adam adam(model.parameters(), train_config.adam);
  Rng rng = Rng::substream(train_config.seed, 0x747261696eull);
  RankFunction rank = kind == LossKind::Seq
                          ? make_rank(train_config, dataset.config.num_classes)
                          : RankFunction::spatial();

  RunRecord record;
  record.train_config = train_config;
  record.data_config = dataset.config;
  record.policy_config = pc;
  record.parameter_count = model.parameter_count();

  const EvalOptions eval_opts = eval_options_for(train_config, dataset);
  auto params = model.parameters();

  std::vector<int> order(dataset.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  Snapshot best;
  double best_em = -1.0;
  double rl_baseline_value = 0.0;
  bool rl_baseline_primed = false;

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    long loss_count = 0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(cursor + static_cast<std::size_t>(train_config.batch_size), order.size());
      const int batch_n = static_cast<int>(batch_end - cursor);
      double batch_return_sum = 0.0;
      int batch_return_count = 0;
      for (std::size_t i = cursor; i < batch_end; ++i) {
        const Example& ex = dataset.train[static_cast<std::size_t>(order[i])];
        Graph graph;
        ExampleLoss el = example_loss(model, ex, train_config, kind, rank, rng,
                                      rl_baseline_primed ? rl_baseline_value : 0.0);
        const double value = el.loss.value();
        if (!std::isfinite(value))
          throw NumericalError("train: loss diverged at epoch " + std::to_string(epoch));
        loss_sum += value;
        ++loss_count;
        if (el.has_return) {
          batch_return_sum += el.rl_return;
          ++batch_return_count;
        }
        graph.backward(el.loss);
      }
      // mean gradient over the batch
      for (auto& [name, t] : params)
        if (t.has_grad()) t.grad_ref() /= static_cast<double>(batch_n);
      if (train_config.clip_norm > 0.0) {
        const double norm = grad_norm(params);
        if (norm > train_config.clip_norm) {
          const double factor = train_config.clip_norm / norm;
          for (auto& [name, t] : params)
            if (t.has_grad()) t.grad_ref() *= factor;
        }
      }
      adam.step();
      adam.zero_grad();
      if (train_config.rl_baseline && batch_return_count > 0) {
        const double mean_return = batch_return_sum / batch_return_count;
        rl_baseline_value = rl_baseline_primed
                                ? 0.9 * rl_baseline_value + 0.1 * mean_return
                                : mean_return;
        rl_baseline_primed = true;
      }
      cursor = batch_end;
    }

    const EvalResult valid = evaluate(model, dataset.valid, eval_opts);
    EpochStats stats;
    stats.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    stats.valid_em = valid.em_mean;
    stats.valid_f1 = valid.f1_mean;
    record.epochs.push_back(stats);
    if (valid.em_mean > best_em) {
      best_em = valid.em_mean;
      record.best_epoch = epoch;
      best = take_snapshot(model);
    }
  }

  record.best_valid_em = best_em;
  restore_snapshot(model, best);
  const EvalResult test = evaluate(model, dataset.test, eval_opts);
  record.test_em = test.em_mean;
  record.test_f1 = test.f1_mean;
  return TrainResult{std::move(model), std::move(record)};
}

// ---- entropy profiles ---------------------------------------------------------

namespace {

// Mean/std with an all-equal fast path, so constant per-step entropies (the
// oracle on a fixed-cardinality split) report exactly (value, 0).
std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  bool all_equal = true;
  for (double x : xs) all_equal = all_equal && x == xs.front();
  if (all_equal) return {xs.front(), 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace

std::vector<std::pair<double, double>> entropy_profile_policy(const PolicyModel& model,
                                                              const std::vector<Example>& split,
                                                              int num_steps) {
  std::vector<std::vector<double>> per_step(static_cast<std::size_t>(num_steps));
  for (const Example& ex : split) {
    Tensor features = model.encode(ex.grid);
    RecurrentState state = model.initial_state();
    int prev = model.start_token();
    for (int t = 0; t < num_steps; ++t) {
      PolicyModel::StepResult sr = model.step(state, features, prev);
      const Eigen::VectorXd probs = sr.probs.row_vector();
      per_step[static_cast<std::size_t>(t)].push_back(shannon_entropy_nats(probs));
      int best = 0;
      for (int i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
      prev = best;
      state = sr.state;
    }
  }
  std::vector<std::pair<double, double>> profile;
  for (const auto& xs : per_step) profile.push_back(mean_std(xs));
  return profile;
}

std::vector<std::pair<double, double>> entropy_profile_oracle(const std::vector<Example>& split,
                                                              int num_steps) {
  std::vector<std::vector<double>> per_step(static_cast<std::size_t>(num_steps));
  for (const Example& ex : split) {
    int remaining = ex.target.cardinality();
    for (int t = 0; t < num_steps && remaining > 0; ++t) {
      per_step[static_cast<std::size_t>(t)].push_back(
          std::log(static_cast<double>(remaining)));
      --remaining;  // any oracle draw removes exactly one free instance
    }
  }
  std::vector<std::pair<double, double>> profile;
  for (const auto& xs : per_step) profile.push_back(mean_std(xs));
  return profile;
}

// ---- serialization --------------------------------------------------------------

namespace {

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"loss", c.loss},
                        {"rank", c.rank},
                        {"strategy", c.strategy},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"learning_rate", c.adam.learning_rate},
                        {"beta1", c.adam.beta1},
                        {"beta2", c.adam.beta2},
                        {"epsilon", c.adam.epsilon},
                        {"lambda_entropy", c.lambda_entropy},
                        {"lambda_size", c.lambda_size},
                        {"termination_weight", c.termination_weight},
                        {"stop_rule", c.stop_rule},
                        {"stop_threshold", c.stop_threshold},
                        {"seed", c.seed},
                        {"t_max", c.t_max},
                        {"rl_reward_to_go", c.rl_reward_to_go},
                        {"rl_baseline", c.rl_baseline},
                        {"clip_norm", c.clip_norm}};
}

}  // namespace

std::string run_record_to_json(const RunRecord& record) {
  nlohmann::json j;
  j["train_config"] = train_config_to_json(record.train_config);
  j["data_config"] = {{"profile", record.data_config.profile},
                      {"seed", record.data_config.seed},
                      {"num_train", record.data_config.num_train},
                      {"num_valid", record.data_config.num_valid},
                      {"num_test", record.data_config.num_test},
                      {"grid_size", record.data_config.grid_size},
                      {"num_classes", record.data_config.num_classes},
                      {"min_card", record.data_config.cardinality.min_card},
                      {"max_card", record.data_config.cardinality.max_card}};
  j["policy_config"] = {{"num_classes", record.policy_config.num_classes},
                        {"encoder", record.policy_config.encoder},
                        {"feature_dim", record.policy_config.feature_dim},
                        {"embed_dim", record.policy_config.embed_dim},
                        {"hidden_dim", record.policy_config.hidden_dim}};
  j["parameter_count"] = record.parameter_count;
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochStats& e : record.epochs)
    epochs.push_back({{"train_loss", e.train_loss},
                      {"valid_em", e.valid_em},
                      {"valid_f1", e.valid_f1}});
  j["epochs"] = epochs;
  j["best_epoch"] = record.best_epoch;
  j["best_valid_em"] = record.best_valid_em;
  j["test_em"] = record.test_em;
  j["test_f1"] = record.test_f1;
  return j.dump();
}

void save_run_record(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_run_record: cannot open " + path);
  out << run_record_to_json(record) << "\n";
}

namespace {

std::string counts_string(const Multiset& ms) {
  std::ostringstream os;
  for (int c = 0; c < ms.num_classes(); ++c) {
    if (c > 0) os << "|";
    os << ms.counts()[c];
  }
  return os.str();
}

}  // namespace

void save_eval_csv(const EvalResult& result, const std::string& config_echo,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_eval_csv: cannot open " + path);
  out << "# config: " << config_echo << "\n";
  out << "# em_mean=" << result.em_mean << " f1_mean=" << result.f1_mean << "\n";
  out << "example_id,em,f1,pred_counts,target_counts\n";
  for (const EvalRow& row : result.rows)
    out << row.example_id << "," << row.em << "," << row.f1 << "," << counts_string(row.pred)
        << "," << counts_string(row.target) << "\n";
}

}  // namespace msp
