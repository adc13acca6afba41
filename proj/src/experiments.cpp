#include "msp/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "msp/errors.hpp"
#include "msp/rng.hpp"

namespace msp {

Dataset with_shuffled_glyph_annotations(const Dataset& ds, std::uint64_t seed) {
  Dataset out = ds;
  auto shuffle_split = [seed](std::vector<Example>& split) {
    for (Example& ex : split) {
      Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(ex.id) + 0x5459ull);
      rng.shuffle(ex.glyphs);
    }
  };
  shuffle_split(out.train);
  shuffle_split(out.valid);
  shuffle_split(out.test);
  return out;
}

PolicyConfig default_policy_config() { return PolicyConfig{}; }

namespace {

std::string dataset_key(const std::string& profile, std::uint64_t seed, bool reshuffled) {
  return profile + "/" + std::to_string(seed) + (reshuffled ? "/shuffled" : "");
}

std::string run_key(const std::string& profile, std::uint64_t data_seed, const TrainConfig& c,
                    bool reshuffled) {
  std::ostringstream os;
  os << dataset_key(profile, data_seed, reshuffled) << "|" << c.loss << "|" << c.rank << "|"
     << c.strategy << "|" << c.epochs << "|" << c.batch_size << "|" << c.adam.learning_rate
     << "|" << c.lambda_entropy << "|" << c.lambda_size << "|" << c.termination_weight << "|"
     << c.stop_rule << "|" << c.stop_threshold << "|" << c.seed << "|" << c.t_max << "|"
     << c.rl_reward_to_go << "|" << c.rl_baseline << "|" << c.clip_norm;
  return os.str();
}

}  // namespace

const Dataset& Runner::dataset(const std::string& profile, std::uint64_t seed,
                               bool reshuffled_glyphs) {
  const std::string key = dataset_key(profile, seed, reshuffled_glyphs);
  auto it = datasets_.find(key);
  if (it != datasets_.end()) return it->second;
  if (reshuffled_glyphs) {
    const Dataset& base = dataset(profile, seed, false);
    return datasets_.emplace(key, with_shuffled_glyph_annotations(base, seed)).first->second;
  }
  return datasets_.emplace(key, generate_dataset(profile_config(profile, seed))).first->second;
}

RunOutcome Runner::run(const std::string& profile, std::uint64_t data_seed,
                       const TrainConfig& cfg, bool reshuffled_glyphs) {
  const std::string key = run_key(profile, data_seed, cfg, reshuffled_glyphs);
  auto it = outcomes_.find(key);
  if (it != outcomes_.end()) return it->second;

  const Dataset& ds = dataset(profile, data_seed, reshuffled_glyphs);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = train(ds, default_policy_config(), cfg);
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start);

  RunOutcome outcome;
  outcome.test_em = result.record.test_em;
  outcome.test_f1 = result.record.test_f1;
  outcome.record = result.record;
  outcome.model = result.model;
  if (verbose_)
    std::cerr << "[runner] " << profile << " loss=" << cfg.loss << " rank=" << cfg.rank
              << " strategy=" << cfg.strategy << " seed=" << cfg.seed
              << " em=" << outcome.test_em << " f1=" << outcome.test_f1 << " ("
              << elapsed.count() << "s)\n";
  return outcomes_.emplace(key, std::move(outcome)).first->second;
}

namespace {

ArmSummary summarize(const std::string& name, const std::vector<SeedMetric>& runs) {
  ArmSummary arm;
  arm.name = name;
  arm.runs = runs;
  const double n = static_cast<double>(runs.size());
  for (const SeedMetric& r : runs) {
    arm.em_mean += r.em;
    arm.f1_mean += r.f1;
  }
  arm.em_mean /= n;
  arm.f1_mean /= n;
  for (const SeedMetric& r : runs) {
    arm.em_std += (r.em - arm.em_mean) * (r.em - arm.em_mean);
    arm.f1_std += (r.f1 - arm.f1_mean) * (r.f1 - arm.f1_mean);
  }
  arm.em_std = std::sqrt(arm.em_std / n);
  arm.f1_std = std::sqrt(arm.f1_std / n);
  return arm;
}

struct ArmSpec {
  std::string name;
  TrainConfig cfg;
};

std::vector<ArmSpec> arms_for(const std::string& experiment, int epochs) {
  TrainConfig base;
  base.epochs = epochs;
  std::vector<ArmSpec> arms;
  if (experiment == "exp1_rank") {
    for (const char* rank : {"random", "spatial", "area"}) {
      TrainConfig c = base;
      c.loss = "seq";
      c.rank = rank;
      arms.push_back({std::string("seq_") + rank, c});
    }
  } else if (experiment == "exp2_strategies") {
    for (const char* strategy : {"greedy", "stochastic", "oracle"}) {
      TrainConfig c = base;
      c.loss = "multiset";
      c.strategy = strategy;
      arms.push_back({strategy, c});
    }
  } else if (experiment == "exp3_losses") {
    for (const char* loss : {"multiset", "rl", "dm_l1", "dm_kl", "seq", "one_step"}) {
      TrainConfig c = base;
      c.loss = loss;
      arms.push_back({loss, c});
    }
  } else {
    throw std::invalid_argument("run_experiment: unknown experiment '" + experiment + "'");
  }
  return arms;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, Runner& runner) {
  ExperimentResult result;
  result.name = spec.name;
  if (spec.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");

  if (spec.name == "entropy") {
    result.profile = spec.profile.empty() ? "multi4" : spec.profile;
    const Dataset& ds = runner.dataset(result.profile, spec.data_seed);
    const int steps = ds.config.cardinality.max_card;
    result.entropy_rows.emplace_back("oracle", entropy_profile_oracle(ds.valid, steps));
    for (const char* loss : {"multiset", "dm_kl"}) {
      TrainConfig cfg;
      cfg.loss = loss;
      cfg.epochs = spec.epochs;
      cfg.seed = spec.seeds.front();
      RunOutcome outcome = runner.run(result.profile, spec.data_seed, cfg);
      result.entropy_rows.emplace_back(
          loss, entropy_profile_policy(outcome.model, ds.valid, steps));
      SeedMetric metric{cfg.seed, outcome.test_em, outcome.test_f1};
      result.arms.push_back(summarize(loss, {metric}));
    }
    return result;
  }

  result.profile = spec.profile.empty() ? "multi1to4" : spec.profile;
  if (spec.name == "exp2_strategies" && spec.seeds.size() < 5)
    throw std::invalid_argument("exp2_strategies reports mean/std across >= 5 runs");

  for (const ArmSpec& arm : arms_for(spec.name, spec.epochs)) {
    std::vector<SeedMetric> runs;
    for (std::uint64_t seed : spec.seeds) {
      TrainConfig cfg = arm.cfg;
      cfg.seed = seed;
      RunOutcome outcome = runner.run(result.profile, spec.data_seed, cfg);
      runs.push_back(SeedMetric{seed, outcome.test_em, outcome.test_f1});
    }
    result.arms.push_back(summarize(arm.name, runs));
  }
  return result;
}

std::string render_table(const ExperimentResult& result) {
  std::ostringstream os;
  os << result.name << " on " << result.profile << "\n";
  os << std::left << std::setw(14) << "arm" << std::right << std::setw(18) << "EM"
     << std::setw(18) << "F1" << "\n";
  os << std::string(50, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (const ArmSummary& arm : result.arms) {
    std::ostringstream em, f1;
    em << std::fixed << std::setprecision(3) << arm.em_mean << " +/- " << arm.em_std;
    f1 << std::fixed << std::setprecision(3) << arm.f1_mean << " +/- " << arm.f1_std;
    os << std::left << std::setw(14) << arm.name << std::right << std::setw(18) << em.str()
       << std::setw(18) << f1.str() << "\n";
  }
  if (!result.entropy_rows.empty()) {
    os << "\nper-step class-distribution entropy (nats), mean +/- std\n";
    for (const auto& [arm, profile] : result.entropy_rows) {
      os << std::left << std::setw(14) << arm;
      for (const auto& [mean, sd] : profile)
        os << "  " << std::fixed << std::setprecision(4) << mean << "+/-" << std::setprecision(3)
           << sd;
      os << "\n";
    }
  }
  return os.str();
}

void write_experiment_csv(const ExperimentResult& result, const std::string& config_echo,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_experiment_csv: cannot open " + path);
  out << "# config: " << config_echo << "\n";
  out << "experiment,profile,arm,seed,test_em,test_f1\n";
  for (const ArmSummary& arm : result.arms)
    for (const SeedMetric& r : arm.runs)
      out << result.name << "," << result.profile << "," << arm.name << "," << r.seed << ","
          << r.em << "," << r.f1 << "\n";
  out << "experiment,profile,arm,em_mean,em_std,f1_mean,f1_std\n";
  for (const ArmSummary& arm : result.arms)
    out << result.name << "," << result.profile << "," << arm.name << "," << arm.em_mean << ","
        << arm.em_std << "," << arm.f1_mean << "," << arm.f1_std << "\n";
  if (!result.entropy_rows.empty()) {
    out << "arm,step,entropy_mean,entropy_std\n";
    for (const auto& [arm, profile] : result.entropy_rows)
      for (std::size_t t = 0; t < profile.size(); ++t)
        out << arm << "," << (t + 1) << "," << profile[t].first << "," << profile[t].second
            << "\n";
  }
}

}  // namespace msp
