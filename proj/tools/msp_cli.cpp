#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "msp/errors.hpp"
#include "msp/experiments.hpp"
#include "msp/train.hpp"

namespace {

using nlohmann::json;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    const std::uint64_t lo = std::stoull(text.substr(0, range_pos));
    const std::uint64_t hi = std::stoull(text.substr(range_pos + 2));
    if (hi < lo) throw std::invalid_argument("--seeds: empty range " + text);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string tok =
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds: no seeds in '" + text + "'");
  return seeds;
}

json dataset_config_echo(const msp::DatasetConfig& c) {
  return json{{"profile", c.profile},
              {"seed", c.seed},
              {"num_train", c.num_train},
              {"num_valid", c.num_valid},
              {"num_test", c.num_test},
              {"grid_size", c.grid_size},
              {"num_classes", c.num_classes},
              {"min_card", c.cardinality.min_card},
              {"max_card", c.cardinality.max_card},
              {"glyph_min_size", c.glyph_min_size},
              {"glyph_max_size", c.glyph_max_size},
              {"clutter_density", c.clutter_density},
              {"allow_overlap", c.allow_overlap}};
}

json train_config_echo(const msp::TrainConfig& c) {
  return json{{"loss", c.loss},
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
              {"clip_norm", c.clip_norm}};
}

int run(int argc, char** argv) {
  CLI::App app{"multiset prediction as sequential decision making"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);

  // ---- gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a glyph-grid dataset");
  std::string gen_profile = "multi1to4";
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  int gen_train = -1, gen_valid = -1, gen_test = -1;
  int gen_card_min = -1, gen_card_max = -1;
  double gen_clutter = -1.0;
  gen->add_option("--profile", gen_profile, "multi4 | multi1to4 | multi10");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--n-train", gen_train, "override train split size");
  gen->add_option("--n-valid", gen_valid, "override valid split size");
  gen->add_option("--n-test", gen_test, "override test split size");
  gen->add_option("--card-min", gen_card_min, "override minimum cardinality");
  gen->add_option("--card-max", gen_card_max, "override maximum cardinality");
  gen->add_option("--clutter", gen_clutter, "override clutter density");

  // ---- train
  auto* tr = app.add_subcommand("train", "train a policy on a dataset file");
  std::string tr_data, tr_out = "run";
  msp::TrainConfig tr_cfg;
  msp::PolicyConfig tr_policy;
  tr->add_option("--data", tr_data, "dataset JSONL path")->required();
  tr->add_option("--encoder", tr_policy.encoder, "conv | mlp");
  tr->add_option("--encoder-tail", tr_policy.encoder_tail, "avg | flatten");
  tr->add_option("--feature-dim", tr_policy.feature_dim, "encoder feature width");
  tr->add_option("--embed-dim", tr_policy.embed_dim, "label embedding width");
  tr->add_option("--hidden-dim", tr_policy.hidden_dim, "recurrent cell width");
  tr->add_option("--loss", tr_cfg.loss, "multiset | seq | dm_l1 | dm_kl | one_step | rl");
  tr->add_option("--rank", tr_cfg.rank, "random | spatial | area (seq loss)");
  tr->add_option("--strategy", tr_cfg.strategy, "greedy | stochastic | oracle (multiset loss)");
  tr->add_option("--stop-rule", tr_cfg.stop_rule, "termination | end_class | fixed");
  tr->add_option("--threshold", tr_cfg.stop_threshold, "stop probability threshold");
  tr->add_option("--epochs", tr_cfg.epochs, "training epochs");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--lr", tr_cfg.adam.learning_rate, "Adam learning rate");
  tr->add_option("--lambda-entropy", tr_cfg.lambda_entropy, "rl entropy coefficient");
  tr->add_option("--lambda-size", tr_cfg.lambda_size, "one_step size coefficient");
  tr->add_option("--seed", tr_cfg.seed, "training seed");
  tr->add_option("--t-max", tr_cfg.t_max, "rollout cap (0: target cardinality)");
  tr->add_option("--clip-norm", tr_cfg.clip_norm, "gradient norm clip (0: off)");
  tr->add_option("--out", tr_out, "output prefix for checkpoint + record");

  // ---- eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_data, ev_ckpt, ev_split = "test", ev_out = "eval.csv", ev_stop = "termination";
  double ev_threshold = 0.5;
  int ev_max_steps = 0;
  bool ev_one_step = false;
  ev->add_option("--data", ev_data, "dataset JSONL path")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--split", ev_split, "train | valid | test");
  ev->add_option("--stop-rule", ev_stop, "termination | end_class | fixed");
  ev->add_option("--threshold", ev_threshold, "stop probability threshold");
  ev->add_option("--max-steps", ev_max_steps, "decode cap (0: max cardinality + 1)");
  ev->add_flag("--one-step", ev_one_step, "use the one-step rounding decode");
  ev->add_option("--out", ev_out, "metrics CSV path");

  // ---- entropy
  auto* en = app.add_subcommand("entropy", "per-step entropy profile");
  std::string en_data, en_ckpt, en_out = "entropy.csv", en_split = "valid";
  int en_steps = 0;
  bool en_oracle = false;
  en->add_option("--data", en_data, "dataset JSONL path")->required();
  en->add_option("--checkpoint", en_ckpt, "checkpoint path (omit with --oracle)");
  en->add_flag("--oracle", en_oracle, "profile the oracle policy instead");
  en->add_option("--split", en_split, "train | valid | test");
  en->add_option("--steps", en_steps, "steps to profile (0: max cardinality)");
  en->add_option("--out", en_out, "CSV path");

  // ---- compare
  auto* cmp = app.add_subcommand("compare", "run a multi-arm experiment");
  std::string cmp_exp, cmp_seeds = "1..5", cmp_out = "compare", cmp_profile;
  int cmp_epochs = 50;
  std::uint64_t cmp_data_seed = 101;
  cmp->add_option("--exp", cmp_exp, "exp1_rank | exp2_strategies | exp3_losses | entropy")
      ->required();
  cmp->add_option("--seeds", cmp_seeds, "e.g. 1..5 or 1,2,3");
  cmp->add_option("--epochs", cmp_epochs, "epochs per run");
  cmp->add_option("--data-seed", cmp_data_seed, "dataset seed");
  cmp->add_option("--profile", cmp_profile, "override dataset profile");
  cmp->add_option("--out", cmp_out, "output CSV prefix");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    msp::DatasetConfig cfg = msp::profile_config(gen_profile, gen_seed);
    if (gen_train >= 0) cfg.num_train = gen_train;
    if (gen_valid >= 0) cfg.num_valid = gen_valid;
    if (gen_test >= 0) cfg.num_test = gen_test;
    if (gen_card_min >= 0) cfg.cardinality.min_card = gen_card_min;
    if (gen_card_max >= 0) cfg.cardinality.max_card = gen_card_max;
    if (gen_clutter >= 0.0) cfg.clutter_density = gen_clutter;
    msp::Dataset ds = msp::generate_dataset(cfg);
    msp::save_dataset(ds, gen_out);
    std::cout << "wrote " << gen_out << " config=" << dataset_config_echo(cfg).dump() << "\n";
    return 0;
  }

  if (tr->parsed()) {
    msp::Dataset ds = msp::load_dataset(tr_data);
    msp::TrainResult result = msp::train(ds, tr_policy, tr_cfg);
    msp::save_checkpoint(result.model, tr_out + ".checkpoint.json");
    msp::save_run_record(result.record, tr_out + ".record.json");
    std::cout << "best_epoch=" << result.record.best_epoch
              << " valid_em=" << result.record.best_valid_em
              << " test_em=" << result.record.test_em << " test_f1=" << result.record.test_f1
              << "\nconfig=" << train_config_echo(tr_cfg).dump() << "\n";
    return 0;
  }

  if (ev->parsed()) {
    msp::Dataset ds = msp::load_dataset(ev_data);
    msp::PolicyModel model = msp::load_checkpoint(ev_ckpt);
    const std::vector<msp::Example>& split =
        ev_split == "train" ? ds.train : (ev_split == "valid" ? ds.valid : ds.test);
    msp::EvalOptions opts;
    opts.one_step = ev_one_step;
    opts.max_steps = ev_max_steps > 0 ? ev_max_steps : ds.max_cardinality() + 1;
    if (ev_stop == "termination")
      opts.stop_rule = msp::StopRule::termination(ev_threshold);
    else if (ev_stop == "end_class")
      opts.stop_rule = msp::StopRule::end_class();
    else if (ev_stop == "fixed")
      opts.stop_rule = msp::StopRule::fixed(ds.max_cardinality());
    else
      throw std::invalid_argument("eval: unknown stop rule " + ev_stop);
    msp::EvalResult result = msp::evaluate(model, split, opts);
    json echo{{"data", ev_data},         {"checkpoint", ev_ckpt},
              {"split", ev_split},       {"stop_rule", ev_stop},
              {"threshold", ev_threshold}, {"max_steps", opts.max_steps},
              {"one_step", ev_one_step},   {"dataset", dataset_config_echo(ds.config)}};
    msp::save_eval_csv(result, echo.dump(), ev_out);
    std::cout << "em=" << result.em_mean << " f1=" << result.f1_mean << " rows="
              << result.rows.size() << " -> " << ev_out << "\n";
    return 0;
  }

  if (en->parsed()) {
    msp::Dataset ds = msp::load_dataset(en_data);
    const std::vector<msp::Example>& split =
        en_split == "train" ? ds.train : (en_split == "valid" ? ds.valid : ds.test);
    const int steps = en_steps > 0 ? en_steps : ds.max_cardinality();
    std::vector<std::pair<double, double>> profile;
    std::string arm;
    if (en_oracle) {
      profile = msp::entropy_profile_oracle(split, steps);
      arm = "oracle";
    } else {
      if (en_ckpt.empty()) throw std::invalid_argument("entropy: need --checkpoint or --oracle");
      msp::PolicyModel model = msp::load_checkpoint(en_ckpt);
      profile = msp::entropy_profile_policy(model, split, steps);
      arm = "policy";
    }
    std::ofstream out(en_out);
    if (!out) throw msp::DataError("entropy: cannot open " + en_out);
    json echo{{"data", en_data},   {"checkpoint", en_ckpt}, {"oracle", en_oracle},
              {"split", en_split}, {"steps", steps},        {"dataset", dataset_config_echo(ds.config)}};
    out << "# config: " << echo.dump() << "\n";
    out << "arm,step,entropy_mean,entropy_std\n";
    for (std::size_t t = 0; t < profile.size(); ++t)
      out << arm << "," << (t + 1) << "," << profile[t].first << "," << profile[t].second << "\n";
    std::cout << "wrote " << en_out << "\n";
    return 0;
  }

  if (cmp->parsed()) {
    msp::ExperimentSpec spec;
    spec.name = cmp_exp;
    spec.seeds = parse_seeds(cmp_seeds);
    spec.epochs = cmp_epochs;
    spec.data_seed = cmp_data_seed;
    spec.profile = cmp_profile;
    msp::Runner runner;
    msp::ExperimentResult result = msp::run_experiment(spec, runner);
    json echo{{"exp", cmp_exp},   {"seeds", cmp_seeds},           {"epochs", cmp_epochs},
              {"data_seed", cmp_data_seed}, {"profile", result.profile}};
    msp::write_experiment_csv(result, echo.dump(), cmp_out + ".csv");
    std::cout << msp::render_table(result) << "\nwrote " << cmp_out << ".csv\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const msp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const msp::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
