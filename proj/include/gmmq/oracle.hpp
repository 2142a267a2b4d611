#pragma once

// Tabular finite-MDP machinery: exact Bellman operators, Banach-Picard fixed
// points, sup-norm contraction ratios, Monte-Carlo versus exact
// Bellman-residual losses, and a grid discretization of the benchmark
// environments that yields a ground-truth Q* to compare GMM policies against.

#include "gmmq/br_problem.hpp"
#include "gmmq/envs.hpp"
#include "gmmq/model.hpp"
#include "gmmq/optimizer.hpp"
#include "gmmq/policy_iteration.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmmq::oracle {

/// Q[s][a] stored as an n_states x n_actions matrix.
using TabularQ = Eigen::MatrixXd;

struct FiniteMdp {
  /// transitions[a](s, s') = P(s' | s, a).
  std::vector<Eigen::MatrixXd> transitions;
  /// losses(s, a) = g(s, a).
  Eigen::MatrixXd losses;
  double discount = 0.9;

  Eigen::Index n_states() const { return losses.rows(); }
  Eigen::Index n_actions() const { return losses.cols(); }

  void validate() const {
    if (!(discount >= 0.0 && discount < 1.0)) {
      throw std::invalid_argument("FiniteMdp: discount must lie in [0, 1)");
    }
    if (static_cast<Eigen::Index>(transitions.size()) != n_actions() || n_states() == 0) {
      throw std::invalid_argument("FiniteMdp: one transition matrix per action required");
    }
    for (const auto& p : transitions) {
      if (p.rows() != n_states() || p.cols() != n_states()) {
        throw std::invalid_argument("FiniteMdp: transition matrix shape mismatch");
      }
      if ((p.array() < 0.0).any()) throw std::invalid_argument("FiniteMdp: negative probability");
      const Eigen::VectorXd sums = p.rowwise().sum();
      if (((sums.array() - 1.0).abs() > 1e-12).any()) {
        throw std::invalid_argument("FiniteMdp: transition rows must sum to 1");
      }
    }
    if (!losses.allFinite()) throw std::invalid_argument("FiniteMdp: non-finite loss");
  }
};

/// Which Bellman operator to apply: the policy operator T_mu or the optimal T.
struct BellmanMode {
  enum class Kind { Policy, Optimal };
  Kind kind = Kind::Optimal;
  std::vector<int> policy;

  static BellmanMode optimal() { return {}; }
  static BellmanMode of_policy(std::vector<int> mu) { return {Kind::Policy, std::move(mu)}; }
};

namespace detail {

/// v(s') = Q(s', mu(s')) or min_a' Q(s', a').
inline Eigen::VectorXd next_values(const TabularQ& q, const BellmanMode& mode) {
  if (mode.kind == BellmanMode::Kind::Optimal) return q.rowwise().minCoeff();
  if (static_cast<Eigen::Index>(mode.policy.size()) != q.rows()) {
    throw std::invalid_argument("BellmanMode: policy length does not match the state count");
  }
  Eigen::VectorXd v(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const int a = mode.policy[static_cast<std::size_t>(s)];
    if (a < 0 || a >= q.cols()) throw std::out_of_range("BellmanMode: policy action out of range");
    v(s) = q(s, a);
  }
  return v;
}

inline double sup_norm(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// (T Q)(s, a) = g(s, a) + discount * sum_s' P(s' | s, a) v(s').
inline TabularQ bellman_apply(const FiniteMdp& mdp, const TabularQ& q, const BellmanMode& mode) {
  if (q.rows() != mdp.n_states() || q.cols() != mdp.n_actions()) {
    throw std::invalid_argument("bellman_apply: Q shape does not match the MDP");
  }
  const Eigen::VectorXd v = detail::next_values(q, mode);
  TabularQ out(q.rows(), q.cols());
  for (Eigen::Index a = 0; a < mdp.n_actions(); ++a) {
    out.col(a) = mdp.losses.col(a) + mdp.discount * (mdp.transitions[static_cast<std::size_t>(a)] * v);
  }
  return out;
}

struct FixedPoint {
  TabularQ q;
  int iterations = 0;
};

/// Banach-Picard iteration from Q = 0 until the sup-norm change is below tol.
inline FixedPoint fixed_point(const FiniteMdp& mdp, const BellmanMode& mode, double tol = 1e-12,
                              int max_iterations = 100000) {
  mdp.validate();
  TabularQ q = TabularQ::Zero(mdp.n_states(), mdp.n_actions());
  for (int i = 1; i <= max_iterations; ++i) {
    TabularQ next = bellman_apply(mdp, q, mode);
    const double change = detail::sup_norm(next - q);
    q = std::move(next);
    if (change < tol) return {std::move(q), i};
  }
  throw std::runtime_error("fixed_point: no convergence after " + std::to_string(max_iterations) +
                           " iterations");
}

/// ||T q1 - T q2||_inf / ||q1 - q2||_inf; 0 when q1 == q2.
inline double contraction_check(const FiniteMdp& mdp, const TabularQ& q1, const TabularQ& q2,
                                const BellmanMode& mode) {
  const double denom = detail::sup_norm(q1 - q2);
  if (denom == 0.0) return 0.0;
  return detail::sup_norm(bellman_apply(mdp, q1, mode) - bellman_apply(mdp, q2, mode)) / denom;
}

/// Greedy policy argmin_a Q(s, a); ties to the lowest index.
inline std::vector<int> greedy_policy(const TabularQ& q) {
  std::vector<int> mu(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    q.row(s).minCoeff(&best);
    mu[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return mu;
}

/// A random MDP with Dirichlet(1) transition rows and uniform [0, 1] losses.
template <class Rng>
FiniteMdp random_mdp(Eigen::Index n_states, Eigen::Index n_actions, double discount, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FiniteMdp mdp;
  mdp.discount = discount;
  mdp.losses.resize(n_states, n_actions);
  for (Eigen::Index a = 0; a < n_actions; ++a) {
    Eigen::MatrixXd p(n_states, n_states);
    for (Eigen::Index s = 0; s < n_states; ++s) {
      for (Eigen::Index t = 0; t < n_states; ++t) p(s, t) = expo(rng);
      p.row(s) /= p.row(s).sum();
      mdp.losses(s, a) = unit(rng);
    }
    mdp.transitions.push_back(std::move(p));
  }
  return mdp;
}

/// Exact Bellman-residual loss under the state-action weighting `weights`
/// (n_states x n_actions, summing to 1) and next-action policy mu:
///   sum_{s,a} w(s,a) sum_s' P(s'|s,a) [g(s,a) + discount Q(s', mu(s')) - Q(s,a)]^2.
inline double ensemble_br_loss(const FiniteMdp& mdp, const TabularQ& q,
                               const std::vector<int>& mu, const Eigen::MatrixXd& weights) {
  const Eigen::VectorXd v = detail::next_values(q, BellmanMode::of_policy(mu));
  double total = 0.0;
  for (Eigen::Index s = 0; s < mdp.n_states(); ++s) {
    for (Eigen::Index a = 0; a < mdp.n_actions(); ++a) {
      const auto& p = mdp.transitions[static_cast<std::size_t>(a)];
      double inner = 0.0;
      for (Eigen::Index t = 0; t < mdp.n_states(); ++t) {
        const double r = mdp.losses(s, a) + mdp.discount * v(t) - q(s, a);
        inner += p(s, t) * r * r;
      }
      total += weights(s, a) * inner;
    }
  }
  return total;
}

/// Monte-Carlo estimate of ensemble_br_loss from `samples` IID draws of
/// (s, a) ~ weights and s' ~ P(. | s, a).
template <class Rng>
double empirical_br_loss(const FiniteMdp& mdp, const TabularQ& q, const std::vector<int>& mu,
                         const Eigen::MatrixXd& weights, std::size_t samples, Rng& rng) {
  const Eigen::VectorXd v = detail::next_values(q, BellmanMode::of_policy(mu));
  std::vector<double> flat(static_cast<std::size_t>(weights.size()));
  for (Eigen::Index s = 0; s < weights.rows(); ++s) {
    for (Eigen::Index a = 0; a < weights.cols(); ++a) {
      flat[static_cast<std::size_t>(s * weights.cols() + a)] = weights(s, a);
    }
  }
  std::discrete_distribution<Eigen::Index> pick_pair(flat.begin(), flat.end());
  std::vector<std::discrete_distribution<Eigen::Index>> next_state;
  for (Eigen::Index a = 0; a < mdp.n_actions(); ++a) {
    for (Eigen::Index s = 0; s < mdp.n_states(); ++s) {
      const auto& p = mdp.transitions[static_cast<std::size_t>(a)];
      std::vector<double> probs(static_cast<std::size_t>(mdp.n_states()));
      for (Eigen::Index t = 0; t < mdp.n_states(); ++t) probs[static_cast<std::size_t>(t)] = p(s, t);
      next_state.emplace_back(probs.begin(), probs.end());
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Eigen::Index pair = pick_pair(rng);
    const Eigen::Index s = pair / weights.cols();
    const Eigen::Index a = pair % weights.cols();
    const Eigen::Index t = next_state[static_cast<std::size_t>(a * mdp.n_states() + s)](rng);
    const double r = mdp.losses(s, a) + mdp.discount * v(t) - q(s, a);
    sum += r * r;
  }
  return sum / static_cast<double>(samples);
}

/// A finite MDP built on a regular grid over an environment's state box.
struct GridMdp {
  FiniteMdp mdp;
  std::vector<int> resolution;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<envs::State> centers;

  /// Index of the cell containing s (points outside the box map to the edge cell).
  Eigen::Index cell_of(const envs::State& s) const {
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const int n = resolution[static_cast<std::size_t>(i)];
      const double u = (s(i) - lower(i)) / (upper(i) - lower(i));
      const int c = std::clamp(static_cast<int>(std::floor(u * n)), 0, n - 1);
      idx = idx * n + c;
    }
    return idx;
  }
};

struct DiscretizeOptions {
  int resolution = 11;
  /// 0: step once from each cell center (one-hot rows). n > 0: step from n
  /// uniform points inside the cell and use the empirical next-cell histogram.
  int mc_samples = 0;
  /// Goal cells self-loop with zero loss.
  bool absorbing_goal = true;
  double discount = 0.9;
};

template <class Rng>
GridMdp discretize(const envs::EnvSpec& env, const DiscretizeOptions& opt, Rng& rng) {
  env.validate();
  if (opt.resolution < 1) throw std::invalid_argument("discretize: resolution must be >= 1");
  const Eigen::Index dims = env.state_dim();
  GridMdp grid;
  grid.resolution.assign(static_cast<std::size_t>(dims), opt.resolution);
  grid.lower = env.lower;
  grid.upper = env.upper;
  Eigen::Index cells = 1;
  for (Eigen::Index i = 0; i < dims; ++i) cells *= opt.resolution;
  const Eigen::VectorXd width = (env.upper - env.lower) / opt.resolution;

  grid.centers.reserve(static_cast<std::size_t>(cells));
  for (Eigen::Index c = 0; c < cells; ++c) {
    envs::State s(dims);
    Eigen::Index rest = c;
    for (Eigen::Index i = dims - 1; i >= 0; --i) {
      const Eigen::Index j = rest % opt.resolution;
      rest /= opt.resolution;
      s(i) = env.lower(i) + (static_cast<double>(j) + 0.5) * width(i);
    }
    grid.centers.push_back(std::move(s));
  }

  const auto n_actions = static_cast<Eigen::Index>(env.n_actions());
  grid.mdp.discount = opt.discount;
  grid.mdp.losses.resize(cells, n_actions);
  grid.mdp.transitions.assign(static_cast<std::size_t>(n_actions),
                              Eigen::MatrixXd::Zero(cells, cells));
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (Eigen::Index c = 0; c < cells; ++c) {
    const auto& center = grid.centers[static_cast<std::size_t>(c)];
    const bool goal = envs::is_goal(env, center);
    for (Eigen::Index a = 0; a < n_actions; ++a) {
      auto& p = grid.mdp.transitions[static_cast<std::size_t>(a)];
      grid.mdp.losses(c, a) = envs::one_step_loss(env, center, static_cast<std::size_t>(a));
      if (goal && opt.absorbing_goal) {
        p(c, c) = 1.0;
        continue;
      }
      if (opt.mc_samples <= 0) {
        p(c, grid.cell_of(envs::step(env, center, static_cast<std::size_t>(a)))) = 1.0;
        continue;
      }
      for (int n = 0; n < opt.mc_samples; ++n) {
        envs::State s = center;
        for (Eigen::Index i = 0; i < dims; ++i) s(i) += unit(rng) * width(i);
        p(c, grid.cell_of(envs::step(env, s, static_cast<std::size_t>(a)))) += 1.0;
      }
      p.row(c) /= static_cast<double>(opt.mc_samples);
    }
  }
  return grid;
}

struct PolicyComparison {
  /// Fraction of grid cells where the GMM greedy action is a tabular argmin.
  double agreement = 0.0;
  /// max over cells and actions of |Q_gmm(center, a) - Q*(cell, a)|.
  double value_gap = 0.0;
};

/// Compares the greedy policy of a GMM Q-function at the cell centers with
/// the greedy actions of a tabular Q*. An action counts as agreeing when its
/// Q* value is within tie_tol of the row minimum.
inline PolicyComparison compare_policies(const GridMdp& grid, const TabularQ& qstar,
                                         const GmmQf& model, double tie_tol = 1e-9) {
  PolicyComparison out;
  const Eigen::Index cells = grid.mdp.n_states();
  Eigen::Index agree = 0;
  for (Eigen::Index c = 0; c < cells; ++c) {
    const auto& s = grid.centers[static_cast<std::size_t>(c)];
    const auto a = static_cast<Eigen::Index>(greedy_action(model, s));
    if (qstar(c, a) <= qstar.row(c).minCoeff() + tie_tol) ++agree;
    for (Eigen::Index b = 0; b < qstar.cols(); ++b) {
      out.value_gap = std::max(
          out.value_gap, std::abs(q_eval(model, s, static_cast<std::size_t>(b)) - qstar(c, b)));
    }
  }
  out.agreement = static_cast<double>(agree) / static_cast<double>(cells);
  return out;
}

}  // namespace gmmq::oracle

namespace gmmq::oracle {

/// A fixed stochastic 3-state, 2-action MDP with a fixed Q-table, next-action
/// policy and uniform state-action weighting, used for the Monte-Carlo check.
struct SllnFixture {
  FiniteMdp mdp;
  TabularQ q;
  std::vector<int> policy;
  Eigen::MatrixXd weights;
};

inline SllnFixture three_state_fixture() {
  SllnFixture f;
  f.mdp.discount = 0.9;
  Eigen::MatrixXd p0(3, 3), p1(3, 3);
  p0 << 0.5, 0.5, 0.0,
        0.2, 0.3, 0.5,
        0.0, 0.4, 0.6;
  p1 << 0.1, 0.6, 0.3,
        0.7, 0.2, 0.1,
        0.3, 0.3, 0.4;
  f.mdp.transitions = {p0, p1};
  f.mdp.losses.resize(3, 2);
  f.mdp.losses << 1.0, 0.0,
                  0.0, 1.0,
                  1.0, 1.0;
  f.q.resize(3, 2);
  f.q << 1.0, 2.0,
         0.5, 1.5,
         2.0, 0.0;
  f.policy = {0, 1, 0};
  f.weights = Eigen::MatrixXd::Constant(3, 2, 1.0 / 6.0);
  return f;
}

struct ContractionSummary {
  int draws = 0;
  /// max over draws of (ratio - discount); <= 1e-12 means every draw contracted.
  double worst_excess = -1.0;
  double worst_ratio = 0.0;
};

/// Random MDPs (2 to 8 states, 2 to 4 actions, discount in [0, 0.99)) and
/// random Q pairs; the Bellman operator in `mode_kind` must contract by the
/// discount in sup-norm. Policy mode draws a random policy per draw.
inline ContractionSummary contraction_suite(std::uint64_t seed, int draws,
                                            BellmanMode::Kind mode_kind) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> states(2, 8), actions(2, 4);
  std::uniform_real_distribution<double> disc(0.0, 0.99);
  std::normal_distribution<double> normal(0.0, 5.0);
  ContractionSummary out;
  for (int i = 0; i < draws; ++i) {
    const FiniteMdp mdp = random_mdp(states(rng), actions(rng), disc(rng), rng);
    TabularQ q1(mdp.n_states(), mdp.n_actions()), q2(mdp.n_states(), mdp.n_actions());
    for (Eigen::Index j = 0; j < q1.size(); ++j) {
      q1.data()[j] = normal(rng);
      q2.data()[j] = normal(rng);
    }
    BellmanMode mode;
    if (mode_kind == BellmanMode::Kind::Policy) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(mdp.n_actions()) - 1);
      std::vector<int> mu(static_cast<std::size_t>(mdp.n_states()));
      for (auto& a : mu) a = pick(rng);
      mode = BellmanMode::of_policy(std::move(mu));
    }
    const double ratio = contraction_check(mdp, q1, q2, mode);
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    out.worst_excess = std::max(out.worst_excess, ratio - mdp.discount);
    ++out.draws;
  }
  return out;
}

struct PicardSummary {
  int draws = 0;
  /// Violations of ||Q_i - Q*|| <= a^i ||Q_0 - Q*|| (+1e-12) at i in {5, 10, 20}.
  int violations = 0;
  int max_iterations = 0;
};

inline PicardSummary picard_suite(std::uint64_t seed, int draws) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> states(2, 8), actions(2, 4);
  std::uniform_real_distribution<double> disc(0.1, 0.95);
  PicardSummary out;
  for (int d = 0; d < draws; ++d) {
    const FiniteMdp mdp = random_mdp(states(rng), actions(rng), disc(rng), rng);
    const BellmanMode mode = BellmanMode::optimal();
    const FixedPoint star = fixed_point(mdp, mode);
    out.max_iterations = std::max(out.max_iterations, star.iterations);
    TabularQ q = TabularQ::Zero(mdp.n_states(), mdp.n_actions());
    const double e0 = detail::sup_norm(q - star.q);
    for (int i = 1; i <= 20; ++i) {
      q = bellman_apply(mdp, q, mode);
      if (i == 5 || i == 10 || i == 20) {
        if (detail::sup_norm(q - star.q) > std::pow(mdp.discount, i) * e0 + 1e-12) ++out.violations;
      }
    }
    ++out.draws;
  }
  return out;
}

struct SllnPoint {
  std::size_t samples = 0;
  double mean_abs_error = 0.0;
};

/// Mean |empirical - exact| BR loss on the 3-state fixture over `replicates`
/// independent estimates per sample size.
inline std::vector<SllnPoint> slln_suite(std::uint64_t seed, int replicates,
                                         const std::vector<std::size_t>& sizes = {1000, 10000,
                                                                                  100000}) {
  const SllnFixture f = three_state_fixture();
  const double exact = ensemble_br_loss(f.mdp, f.q, f.policy, f.weights);
  std::vector<SllnPoint> out;
  std::uint64_t stream = 0;
  for (std::size_t n : sizes) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(stream++)};
    std::mt19937_64 rng(seq);
    double total = 0.0;
    for (int r = 0; r < replicates; ++r) {
      total += std::abs(empirical_br_loss(f.mdp, f.q, f.policy, f.weights, n, rng) - exact);
    }
    out.push_back({n, total / replicates});
  }
  return out;
}

}  // namespace gmmq::oracle

namespace gmmq::oracle {

/// Agreement of a pendulum model's greedy policy with the tabular Q* of an
/// 11 x 11 grid. Cell rows are Monte-Carlo histograms: from the cell centers
/// alone the pendulum rarely leaves its cell within one step, which makes
/// every action of every cell tie in Q*.
inline PolicyComparison pendulum_agreement(const GmmQf& model, const envs::EnvSpec& env,
                                           double discount = 0.9, std::uint64_t seed = 0,
                                           int mc_samples = 100) {
  DiscretizeOptions opt;
  opt.resolution = 11;
  opt.mc_samples = mc_samples;
  opt.discount = discount;
  std::mt19937_64 rng(seed);
  const GridMdp grid = discretize(env, opt, rng);
  const FixedPoint star = fixed_point(grid.mdp, BellmanMode::optimal());
  return compare_policies(grid, star.q, model);
}

}  // namespace gmmq::oracle

namespace gmmq::oracle {

/// Weights-only Bellman-residual instance: the loss is a convex quadratic in
/// xi with minimizer given by the normal equations of the design matrix.
struct LeastSquaresInstance {
  GmmQf start;
  TransitionBatch batch;
  double discount = 0.0;
  Eigen::VectorXd xi_star;
  /// Smallest eigenvalue of the loss Hessian (2/T) Delta^T Delta.
  double min_curvature = 0.0;
};

/// Three components, one per action, with well-separated state centers;
/// states and next states are drawn near the center of their action.
template <class Rng>
LeastSquaresInstance least_squares_instance(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_action(0, 2);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> disc(0.2, 0.4);
  const std::vector<double> codes{-1.0, 0.0, 1.0};
  const Eigen::Index t = 90;
  const double phase = angle(rng);

  std::vector<Eigen::Vector2d> centers;
  std::vector<Eigen::VectorXd> means;
  std::vector<SpdMatrix> covs;
  for (int k = 0; k < 3; ++k) {
    const double th = phase + 2.0 * std::numbers::pi * k / 3.0;
    centers.emplace_back(3.0 * std::cos(th), 3.0 * std::sin(th));
    Eigen::VectorXd m(3);
    m << centers.back(), codes[static_cast<std::size_t>(k)];
    means.push_back(std::move(m));
    covs.emplace_back(Eigen::MatrixXd(Eigen::MatrixXd::Identity(3, 3)));
  }
  GmmQf start(WeightLayout::Shared, codes, Eigen::MatrixXd::Zero(1, 3), std::move(means),
              std::move(covs));

  TransitionBatch batch;
  batch.states.resize(t, 2);
  batch.next_states.resize(t, 2);
  batch.losses.resize(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const int a = pick_action(rng), b = pick_action(rng);
    const auto& ca = centers[static_cast<std::size_t>(a)];
    const auto& cb = centers[static_cast<std::size_t>(b)];
    batch.states.row(i) << ca.x() + 0.1 * normal(rng), ca.y() + 0.1 * normal(rng);
    batch.next_states.row(i) << cb.x() + 0.1 * normal(rng), cb.y() + 0.1 * normal(rng);
    batch.actions.push_back(a);
    batch.next_actions.push_back(b);
    batch.losses(i) = static_cast<double>(a);
  }
  batch.trial.assign(static_cast<std::size_t>(t), 0);
  batch.episode.assign(static_cast<std::size_t>(t), 0);
  const double discount = disc(rng);

  const auto ws = build_workspace(start, batch, discount);
  Eigen::VectorXd xi_star = ws.design.colPivHouseholderQr().solve(-batch.losses);
  const Eigen::MatrixXd hess =
      (2.0 / static_cast<double>(t)) * ws.design.transpose() * ws.design;
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues()(0);
  return {std::move(start), std::move(batch), discount, std::move(xi_star), lmin};
}

struct LeastSquaresSummary {
  int instances = 0;
  /// Largest sup-norm distance to xi* after the iteration budget.
  double max_error = 0.0;
  /// Largest number of accepted steps taken.
  int max_steps = 0;
  bool monotone = true;
  bool frozen_blocks_unchanged = true;
  double min_curvature = 0.0;
};

inline LeastSquaresSummary least_squares_suite(std::uint64_t seed, int instances,
                                               int j_steps = 200) {
  std::mt19937_64 rng(seed);
  LeastSquaresSummary out;
  out.min_curvature = std::numeric_limits<double>::infinity();
  for (int i = 0; i < instances; ++i) {
    const auto inst = least_squares_instance(rng);
    const BellmanResidualProblem problem(inst.batch, inst.discount, MetricKind::AffineInvariant,
                                         BlockMask{true, false, false});
    ArmijoConfig cfg;
    cfg.j_steps = j_steps;
    const auto [fitted, trace] = descend(problem, inst.start, cfg);
    const Eigen::VectorXd xi = fitted.weights().row(0).transpose();
    out.max_error = std::max(out.max_error, (xi - inst.xi_star).cwiseAbs().maxCoeff());
    out.max_steps = std::max(out.max_steps, static_cast<int>(trace.steps.size()));
    double prev = trace.initial_loss;
    for (const auto& s : trace.steps) {
      if (s.new_loss > prev) out.monotone = false;
      prev = s.new_loss;
    }
    for (std::size_t k = 0; k < fitted.k(); ++k) {
      if (fitted.means()[k] != inst.start.means()[k] ||
          fitted.covs()[k].matrix() != inst.start.covs()[k].matrix())
        out.frozen_blocks_unchanged = false;
    }
    out.min_curvature = std::min(out.min_curvature, inst.min_curvature);
    ++out.instances;
  }
  return out;
}

}  // namespace gmmq::oracle
