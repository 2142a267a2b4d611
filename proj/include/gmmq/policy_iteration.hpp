#pragma once

// Policy iteration with GMM Q-functions: collect an on-policy batch under the
// current greedy policy, fit the Q-function by Riemannian descent on the
// Bellman residual (warm-started from the previous trial), improve greedily,
// and measure steps-to-goal from the resting position.
//
// Every trial uses only the batch it collected; nothing is replayed.

#include "gmmq/br_problem.hpp"
#include "gmmq/envs.hpp"
#include "gmmq/loss.hpp"
#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/optimizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gmmq {

using Rng = std::mt19937_64;

struct RolloutConfig {
  int episodes = 20;
  int steps_per_episode = 70;
  Eigen::Index rows() const { return static_cast<Eigen::Index>(episodes) * steps_per_episode; }
};

struct EvalConfig {
  int step_cap = 1000;
  int eval_episodes = 1;
};

struct PiConfig {
  envs::EnvSpec env = envs::make_env(envs::EnvKind::Pendulum);
  std::size_t k = 5;
  WeightLayout layout = WeightLayout::Shared;
  MetricKind metric = MetricKind::AffineInvariant;
  double discount = 0.9;
  RolloutConfig rollout;
  double exploration_eps = 0.1;
  ArmijoConfig armijo;
  int trials = 150;
  EvalConfig eval;
  std::uint64_t seed = 0;

  void validate() const {
    env.validate();
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
    if (rollout.episodes < 1 || rollout.steps_per_episode < 1) {
      throw std::invalid_argument("rollout.episodes and rollout.steps_per_episode must be >= 1");
    }
    if (!(exploration_eps >= 0.0 && exploration_eps <= 1.0)) {
      throw std::invalid_argument("exploration_eps must lie in [0, 1]");
    }
    armijo.validate();
    if (trials < 0) throw std::invalid_argument("trials must be >= 0");
    if (eval.step_cap < 1 || eval.eval_episodes < 1) {
      throw std::invalid_argument("eval.step_cap and eval.eval_episodes must be >= 1");
    }
  }
};

/// Per-environment defaults: the benchmark's batch protocol and weight layout.
inline PiConfig default_config(envs::EnvKind kind) {
  PiConfig cfg;
  cfg.env = envs::make_env(kind);
  switch (kind) {
    case envs::EnvKind::Pendulum:
      cfg.k = 5;
      cfg.rollout = {20, 70};
      break;
    case envs::EnvKind::MountainCar:
      cfg.k = 200;
      cfg.rollout = {10, 100};
      break;
    case envs::EnvKind::Acrobot:
      cfg.k = 50;
      cfg.layout = WeightLayout::PerAction;
      cfg.rollout = {20, 70};
      break;
  }
  return cfg;
}

/// Independent generator for a named sub-stream of a run seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6d6d71u};
  return Rng(seq);
}

/// argmin_a Q(s, a); ties go to the lowest action index.
inline std::size_t greedy_action(const GmmQf& model, const envs::State& s) {
  std::size_t best = 0;
  double best_q = q_eval(model, s, 0);
  for (std::size_t a = 1; a < model.n_actions(); ++a) {
    const double q = q_eval(model, s, a);
    if (q < best_q) {
      best_q = q;
      best = a;
    }
  }
  return best;
}

/// The greedy policy induced by a Q-function.
class GreedyPolicy {
 public:
  explicit GreedyPolicy(const GmmQf& model) : model_(&model) {}
  std::size_t operator()(const envs::State& s) const { return greedy_action(*model_, s); }
  const GmmQf& model() const { return *model_; }

 private:
  const GmmQf* model_;
};

/// Collects exactly rollout.rows() transitions. Actions are epsilon-greedy;
/// the bootstrap action mu(s') is purely greedy. An episode ends after
/// steps_per_episode transitions or right after the row whose state is in the
/// goal set; fresh episodes are started until the batch is full.
inline TransitionBatch collect_dataset(const envs::EnvSpec& env, const GreedyPolicy& policy,
                                       const RolloutConfig& rollout, double eps, Rng& rng,
                                       int trial = 0) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must lie in [0, 1]");
  const Eigen::Index total = rollout.rows();
  const Eigen::Index ds = env.state_dim();
  TransitionBatch batch;
  batch.states.resize(total, ds);
  batch.next_states.resize(total, ds);
  batch.losses.resize(total);
  batch.actions.resize(static_cast<std::size_t>(total));
  batch.next_actions.resize(static_cast<std::size_t>(total));
  batch.trial.assign(static_cast<std::size_t>(total), trial);
  batch.episode.resize(static_cast<std::size_t>(total));

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_action(0, env.n_actions() - 1);
  Eigen::Index row = 0;
  int episode = 0;
  while (row < total) {
    envs::State s = envs::sample_initial_state(env, rng, envs::StartMode::Train);
    for (int step = 0; step < rollout.steps_per_episode && row < total; ++step) {
      const bool explore = coin(rng) < eps;
      const std::size_t a = explore ? any_action(rng) : policy(s);
      const envs::State next = envs::step(env, s, a);
      const auto r = static_cast<std::size_t>(row);
      batch.states.row(row) = s.transpose();
      batch.actions[r] = static_cast<int>(a);
      batch.losses(row) = envs::one_step_loss(env, s, a);
      batch.next_states.row(row) = next.transpose();
      batch.next_actions[r] = static_cast<int>(policy(next));
      batch.episode[r] = episode;
      ++row;
      if (envs::is_goal(env, s)) break;
      s = next;
    }
    ++episode;
  }
  return batch;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline std::vector<double> pairwise_distances(const std::vector<Eigen::VectorXd>& pts) {
  std::vector<double> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) out.push_back((pts[i] - pts[j]).norm());
  }
  return out;
}

}  // namespace detail

/// Initial point: zero weights, K distinct means drawn from the inputs of a
/// uniformly random rollout, and C_k = c I with c the squared median pairwise
/// distance among the chosen means (among a pool sample when K = 1).
inline GmmQf initial_model(const PiConfig& cfg, Rng& rng) {
  const auto codes = envs::action_codes(cfg.env);
  const Eigen::Index d =
      cfg.layout == WeightLayout::Shared ? cfg.env.state_dim() + 1 : cfg.env.state_dim();
  const Eigen::Index rows =
      cfg.layout == WeightLayout::Shared ? 1 : static_cast<Eigen::Index>(codes.size());

  // Placeholder model used only to drive the random rollout (eps = 1).
  GmmQf probe(cfg.layout, codes, Eigen::MatrixXd::Zero(rows, 1), {Eigen::VectorXd::Zero(d)},
              {SpdMatrix::identity(d)});
  const TransitionBatch pool = collect_dataset(cfg.env, GreedyPolicy(probe), cfg.rollout, 1.0, rng);

  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(static_cast<std::size_t>(pool.size()));
  for (Eigen::Index i = 0; i < pool.size(); ++i) {
    inputs.push_back(probe.input(pool.states.row(i).transpose(),
                                 static_cast<std::size_t>(pool.actions[static_cast<std::size_t>(i)])));
  }
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Eigen::VectorXd> means;
  for (std::size_t idx : order) {
    if (means.size() == cfg.k) break;
    const bool duplicate = std::any_of(means.begin(), means.end(), [&](const Eigen::VectorXd& m) {
      return (m - inputs[idx]).cwiseAbs().maxCoeff() == 0.0;
    });
    if (!duplicate) means.push_back(inputs[idx]);
  }
  if (means.size() < cfg.k) {
    throw std::runtime_error("initial_model: the random rollout produced only " +
                             std::to_string(means.size()) + " distinct inputs for K = " +
                             std::to_string(cfg.k));
  }

  std::vector<double> dists;
  if (cfg.k >= 2) {
    dists = detail::pairwise_distances(means);
  } else {
    std::vector<Eigen::VectorXd> sample;
    for (std::size_t i = 0; i < std::min<std::size_t>(order.size(), 64); ++i) {
      sample.push_back(inputs[order[i]]);
    }
    dists = detail::pairwise_distances(sample);
  }
  const double med = detail::median(std::move(dists));
  const double scale = med > 0.0 ? med * med : 1.0;

  std::vector<SpdMatrix> covs(cfg.k, SpdMatrix::scaled_identity(d, scale));
  return GmmQf(cfg.layout, codes, Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(cfg.k)),
               std::move(means), std::move(covs));
}

/// Fits the Q-function of the batch's policy by Armijo descent on the
/// Bellman residual, starting from `warm_start`.
inline std::pair<GmmQf, DescentTrace> policy_evaluate(const TransitionBatch& batch,
                                                      const GmmQf& warm_start,
                                                      const PiConfig& cfg) {
  const BellmanResidualProblem problem(batch, cfg.discount, cfg.metric);
  return descend(problem, warm_start, cfg.armijo);
}

/// Steps the greedy policy needs to reach the goal from an evaluation start,
/// capped at step_cap; averaged over eval_episodes.
inline double steps_to_goal(const envs::EnvSpec& env, const GmmQf& model, const EvalConfig& eval,
                            Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < eval.eval_episodes; ++e) {
    envs::State s = envs::sample_initial_state(env, rng, envs::StartMode::Eval);
    int steps = eval.step_cap;
    for (int n = 1; n <= eval.step_cap; ++n) {
      s = envs::step(env, s, greedy_action(model, s));
      if (envs::is_goal(env, s)) {
        steps = n;
        break;
      }
    }
    total += steps;
  }
  return total / eval.eval_episodes;
}

struct TrialLog {
  int trial = 0;
  double steps_to_goal = 0.0;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  DescentStatus status = DescentStatus::BudgetExhausted;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;
  /// Non-empty when the trial threw; the model is then carried over unchanged.
  std::string error;
};

struct RunResult {
  std::vector<TrialLog> logs;
  GmmQf model;
};

using TrialCallback = std::function<void(const TrialLog&, const GmmQf&)>;

/// Runs cfg.trials policy-iteration trials. Deterministic given cfg.seed
/// (wall-clock timings aside).
inline RunResult run(const PiConfig& cfg, const TrialCallback& on_trial = {}) {
  cfg.validate();
  Rng init_rng = make_rng(cfg.seed, 0);
  Rng collect_rng = make_rng(cfg.seed, 1);
  Rng eval_rng = make_rng(cfg.seed, 2);
  GmmQf model = initial_model(cfg, init_rng);
  std::vector<TrialLog> logs;
  logs.reserve(static_cast<std::size_t>(cfg.trials));
  for (int n = 1; n <= cfg.trials; ++n) {
    const auto start = std::chrono::steady_clock::now();
    TrialLog log;
    log.trial = n;
    log.seed = cfg.seed;
    try {
      const TransitionBatch batch = collect_dataset(cfg.env, GreedyPolicy(model), cfg.rollout,
                                                    cfg.exploration_eps, collect_rng, n);
      auto [fitted, trace] = policy_evaluate(batch, model, cfg);
      model = std::move(fitted);
      log.initial_loss = trace.initial_loss;
      log.final_loss = trace.final_loss;
      log.grad_norm = trace.final_grad_norm;
      log.iterations = static_cast<int>(trace.steps.size());
      log.status = trace.status;
      log.steps_to_goal = steps_to_goal(cfg.env, model, cfg.eval, eval_rng);
    } catch (const std::exception& e) {
      log.error = e.what();
      log.steps_to_goal = cfg.eval.step_cap;
    }
    log.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (on_trial) on_trial(log, model);
    logs.push_back(std::move(log));
  }
  return {std::move(logs), std::move(model)};
}

/// Number of learned parameters implied by a configuration:
///   Shared:    K + K D_z + K D_z (D_z + 1) / 2, with D_z = D_s + 1;
///   PerAction: |A| K + K D_s + K D_s (D_s + 1) / 2.
inline std::size_t param_count(const PiConfig& cfg) {
  const auto ds = static_cast<std::size_t>(cfg.env.state_dim());
  const std::size_t k = cfg.k;
  if (cfg.layout == WeightLayout::Shared) {
    const std::size_t dz = ds + 1;
    return k + k * dz + k * dz * (dz + 1) / 2;
  }
  return cfg.env.n_actions() * k + k * ds + k * ds * (ds + 1) / 2;
}

/// Trailing mean over `window` points; the first window - 1 outputs average
/// the available prefix.
inline std::vector<double> moving_average(const std::vector<double>& series, std::size_t window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<double> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += series[j];
    out.push_back(sum / static_cast<double>(i + 1 - lo));
  }
  return out;
}

}  // namespace gmmq
