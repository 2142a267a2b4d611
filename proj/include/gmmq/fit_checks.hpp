#pragma once

// Regression fits used as capacity checks. With discount 0 and one action the
// Bellman residual loss reduces to the mean squared error of Q against the
// per-row loss column, so the policy-evaluation machinery fits a target
// function directly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "gmmq/br_problem.hpp"
#include "gmmq/loss.hpp"
#include "gmmq/model.hpp"
#include "gmmq/optimizer.hpp"

namespace gmmq::fit {

/// n x n grid over [lo, hi]^2, row-major.
inline Eigen::MatrixXd square_grid(int n, double lo, double hi) {
  Eigen::MatrixXd pts(n * n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = lo + (hi - lo) * i / (n - 1);
      const double y = lo + (hi - lo) * j / (n - 1);
      pts.row(i * n + j) << x, y;
    }
  }
  return pts;
}

/// Smooth target on the plane.
inline double target(double x, double y) { return std::sin(1.5 * x - y); }

/// Regression batch: next state equals state, one action, loss column = target.
inline TransitionBatch regression_batch(const Eigen::MatrixXd& pts) {
  TransitionBatch b;
  const Eigen::Index t = pts.rows();
  b.states = pts;
  b.next_states = pts;
  b.losses.resize(t);
  for (Eigen::Index i = 0; i < t; ++i) b.losses(i) = target(pts(i, 0), pts(i, 1));
  b.actions.assign(static_cast<std::size_t>(t), 0);
  b.next_actions.assign(static_cast<std::size_t>(t), 0);
  b.trial.assign(static_cast<std::size_t>(t), 0);
  b.episode.assign(static_cast<std::size_t>(t), 0);
  return b;
}

/// Mean of (target - Q)^2 over the batch rows.
inline double training_mse(const GmmQf& model, const TransitionBatch& batch) {
  return br_loss(model, batch, 0.0);
}

/// Means drawn without replacement from the grid with a fixed seed; isotropic
/// width scaled to the spacing K centers would have on a regular lattice.
inline GmmQf initial_fit_model(const Eigen::MatrixXd& pts, std::size_t k, std::uint64_t seed,
                               double side) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pts.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const double h = side / std::sqrt(static_cast<double>(k));
  std::vector<Eigen::VectorXd> means;
  std::vector<SpdMatrix> covs;
  for (std::size_t i = 0; i < k; ++i) {
    means.push_back(pts.row(idx[i]).transpose());
    covs.push_back(SpdMatrix::scaled_identity(2, h * h));
  }
  return GmmQf(WeightLayout::PerAction, {0.0},
               Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(k)), std::move(means),
               std::move(covs));
}

struct TrendResult {
  std::vector<std::size_t> ks;
  std::vector<double> mse;
  bool strictly_decreasing = true;
};

/// Fits the target with each K from the same seed and records the final MSE.
inline TrendResult approximation_trend(std::uint64_t seed,
                                       std::vector<std::size_t> ks = {1, 4, 16},
                                       int j_steps = 300,
                                       MetricKind metric = MetricKind::AffineInvariant) {
  const Eigen::MatrixXd pts = square_grid(15, -2.0, 2.0);
  const TransitionBatch batch = regression_batch(pts);
  const BellmanResidualProblem problem(batch, 0.0, metric);
  ArmijoConfig cfg;
  cfg.j_steps = j_steps;
  TrendResult out;
  out.ks = ks;
  for (std::size_t k : ks) {
    const auto [fitted, trace] = descend(problem, initial_fit_model(pts, k, seed, 4.0), cfg);
    out.mse.push_back(training_mse(fitted, batch));
  }
  for (std::size_t i = 1; i < out.mse.size(); ++i) {
    if (!(out.mse[i] < out.mse[i - 1])) out.strictly_decreasing = false;
  }
  return out;
}

struct GramResult {
  /// Smallest over largest eigenvalue of the normalized Gram matrix.
  double inverse_condition = 0.0;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  Eigen::Matrix2d gram = Eigen::Matrix2d::Zero();
};

/// Two components starting at a common off-center mean with distinct fixed covariances; weights and
/// means are fitted, covariances frozen. Returns the Gram matrix of the two
/// fitted basis functions sampled on the grid.
inline GramResult gram_check(int j_steps = 100) {
  const Eigen::MatrixXd pts = square_grid(15, -2.0, 2.0);
  const TransitionBatch batch = regression_batch(pts);
  const BellmanResidualProblem problem(batch, 0.0, MetricKind::AffineInvariant,
                                       BlockMask{true, true, false});
  Eigen::Matrix2d c2;
  c2 << 2.0, 0.5, 0.5, 1.0;
  GmmQf start(WeightLayout::PerAction, {0.0}, Eigen::MatrixXd::Zero(1, 2),
              {Eigen::Vector2d(0.6, -0.4), Eigen::Vector2d(0.6, -0.4)},
              {SpdMatrix::scaled_identity(2, 0.5), SpdMatrix(Eigen::MatrixXd(c2))});
  ArmijoConfig cfg;
  cfg.j_steps = j_steps;
  const auto [fitted, trace] = descend(problem, start, cfg);

  Eigen::MatrixXd phi(pts.rows(), 2);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Eigen::VectorXd z = pts.row(i).transpose();
    for (std::size_t k = 0; k < 2; ++k) {
      phi(i, static_cast<Eigen::Index>(k)) = gauss_eval(z, fitted.means()[k], fitted.covs()[k]);
    }
  }
  GramResult out;
  out.gram = phi.transpose() * phi / static_cast<double>(pts.rows());
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(out.gram).eigenvalues();
  out.inverse_condition = ev(1) > 0.0 ? ev(0) / ev(1) : 0.0;
  out.initial_mse = trace.initial_loss;
  out.final_mse = trace.final_loss;
  return out;
}

}  // namespace gmmq::fit
