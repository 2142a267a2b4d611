// gmmq: experiment runner and validation entry points.
//
//   gmmq run <config.json> [--workers N]
//   gmmq gradcheck [--seed N] [--trials M] [--corrupt-sign]
//   gmmq oracle [--seed N] [--model FILE]... [--train-seeds N] [--train-trials N]
//   gmmq eval <model.json> --env <name> [--episodes N] [--step-cap N] [--seed N]

#include "gmmq/experiment.hpp"
#include "gmmq/gradcheck.hpp"
#include "gmmq/io.hpp"
#include "gmmq/oracle.hpp"
#include "gmmq/policy_iteration.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

using gmmq::io::json;

int cmd_run(const std::string& path, int workers) {
  gmmq::io::RunConfig rc;
  try {
    rc = gmmq::io::load_run_config(path);
  } catch (const gmmq::io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  gmmq::io::apply_env_overrides(rc);
  if (workers > 0) rc.workers = workers;
  try {
    const auto summary = gmmq::run_experiment(rc, [](const std::string& msg) {
      std::cerr << msg << '\n';
    });
    std::cout << "wrote " << summary.rows << " rows to " << summary.output_dir.string() << '\n';
    if (!summary.failures.empty() || summary.trial_errors > 0) {
      std::cerr << summary.failures.size() << " failed job(s), " << summary.trial_errors
                << " failed trial(s)\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials, bool corrupt) {
  gmmq::gradcheck::Options opt;
  opt.seed = seed;
  opt.instances = trials;
  opt.corrupt_sign = corrupt;
  const auto report = gmmq::gradcheck::run(opt);
  std::printf("%-6s %-11s %-8s %-10s %s\n", "metric", "layout", "block", "instances", "max_rel_error");
  for (const auto& c : report.cells) {
    std::printf("%-6s %-11s %-8s %-10d %.3e\n", std::string(gmmq::to_string(c.metric)).c_str(),
                std::string(gmmq::to_string(c.layout)).c_str(),
                std::string(gmmq::gradcheck::to_string(c.block)).c_str(), c.instances,
                c.max_rel_error);
  }
  std::printf("%s (tolerance %.0e)\n", report.passed() ? "PASS" : "FAIL", report.tolerance);
  return report.passed() ? 0 : 1;
}

int cmd_oracle(std::uint64_t seed, const std::vector<std::string>& models, int train_seeds,
               int train_trials) {
  namespace orc = gmmq::oracle;
  json out;
  bool ok = true;

  for (auto kind : {orc::BellmanMode::Kind::Policy, orc::BellmanMode::Kind::Optimal}) {
    const auto c = orc::contraction_suite(seed, 100, kind);
    const bool pass = c.worst_excess <= 1e-12;
    ok = ok && pass;
    out["contraction"][kind == orc::BellmanMode::Kind::Policy ? "policy" : "optimal"] =
        {{"draws", c.draws}, {"worst_ratio", c.worst_ratio}, {"worst_excess", c.worst_excess},
         {"pass", pass}};
  }
  {
    const auto p = orc::picard_suite(seed, 100);
    const bool pass = p.violations == 0;
    ok = ok && pass;
    out["fixed_point"] = {{"draws", p.draws}, {"violations", p.violations},
                          {"max_iterations", p.max_iterations}, {"pass", pass}};
  }
  {
    const auto pts = orc::slln_suite(seed, 50);
    bool monotone = true;
    json arr = json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i > 0 && !(pts[i].mean_abs_error < pts[i - 1].mean_abs_error)) monotone = false;
      arr.push_back({{"samples", pts[i].samples}, {"mean_abs_error", pts[i].mean_abs_error}});
    }
    ok = ok && monotone;
    out["slln"] = {{"points", arr}, {"pass", monotone}};
  }

  const auto env = gmmq::envs::make_env(gmmq::envs::EnvKind::Pendulum);
  json agreements = json::array();
  double best = 0.0;
  auto record = [&](const std::string& source, const gmmq::GmmQf& model) {
    const auto cmp = orc::pendulum_agreement(model, env);
    best = std::max(best, cmp.agreement);
    agreements.push_back({{"model", source}, {"agreement", cmp.agreement}, {"value_gap", cmp.value_gap}});
  };
  try {
    for (const auto& m : models) record(m, gmmq::io::load_model(m));
    if (models.empty()) {
      for (int s = 0; s < train_seeds; ++s) {
        auto cfg = gmmq::default_config(gmmq::envs::EnvKind::Pendulum);
        cfg.trials = train_trials;
        cfg.seed = static_cast<std::uint64_t>(s);
        record("trained seed " + std::to_string(s), gmmq::run(cfg).model);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "oracle: " << e.what() << '\n';
    return 1;
  }
  if (!agreements.empty()) {
    const bool pass = best >= 0.6;
    ok = ok && pass;
    out["pendulum_agreement"] = {{"runs", agreements}, {"best", best}, {"threshold", 0.6}, {"pass", pass}};
  }
  out["pass"] = ok;
  std::cout << out.dump(2) << '\n';
  return ok ? 0 : 1;
}

int cmd_eval(const std::string& path, const std::string& env_name, int episodes, int step_cap,
             std::uint64_t seed) {
  try {
    const auto model = gmmq::io::load_model(path);
    const auto env = gmmq::envs::make_env(env_name);
    if (model.n_actions() != env.n_actions() || model.state_dim() != env.state_dim()) {
      std::cerr << "eval: model does not match env " << env_name << '\n';
      return 2;
    }
    gmmq::EvalConfig eval{step_cap, 1};
    auto rng = gmmq::make_rng(seed, 2);
    for (int e = 1; e <= episodes; ++e) {
      std::cout << "episode " << e << ": " << gmmq::steps_to_goal(env, model, eval, rng) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "eval: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GMM Q-functions trained by Riemannian descent"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 0;
  auto* run = app.add_subcommand("run", "run policy-iteration experiments from a JSON config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--workers", workers, "worker threads (overrides the config)");

  std::uint64_t gc_seed = 1;
  int gc_trials = 50;
  bool corrupt = false;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--trials", gc_trials, "random instances per metric and layout")->check(CLI::PositiveNumber);
  gc->add_flag("--corrupt-sign", corrupt, "negative control: flip every analytic gradient");

  std::uint64_t or_seed = 7;
  std::vector<std::string> or_models;
  int or_train_seeds = 5, or_train_trials = 150;
  auto* orc = app.add_subcommand("oracle", "tabular Bellman-operator checks and pendulum agreement");
  orc->add_option("--seed", or_seed);
  orc->add_option("--model", or_models, "pendulum model file(s) to compare instead of training");
  orc->add_option("--train-seeds", or_train_seeds)->check(CLI::NonNegativeNumber);
  orc->add_option("--train-trials", or_train_trials)->check(CLI::NonNegativeNumber);

  std::string model_path, env_name;
  int episodes = 1, step_cap = 1000;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "greedy-policy steps to goal for a saved model");
  ev->add_option("model", model_path, "model file")->required();
  ev->add_option("--env", env_name, "pendulum | mountain_car | acrobot")->required();
  ev->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  ev->add_option("--step-cap", step_cap)->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) return cmd_run(config_path, workers);
  if (*gc) return cmd_gradcheck(gc_seed, gc_trials, corrupt);
  if (*orc) return cmd_oracle(or_seed, or_models, or_train_seeds, or_train_trials);
  return cmd_eval(model_path, env_name, episodes, step_cap, ev_seed);
}
