#pragma once

// Finite-difference validation of the Bellman-residual gradients.
//
// Weights and means are Euclidean: every coordinate is perturbed by +-eps and
// compared with the analytic gradient. Covariances are checked through the
// metric: along a random symmetric direction G the central difference of
// L(retract(C, +-t G)) must equal <grad_C, G>_C.

#include "gmmq/loss.hpp"
#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/product.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace gmmq::gradcheck {

enum class Block { Weights, Means, Covs };

inline std::string_view to_string(Block b) {
  switch (b) {
    case Block::Weights: return "weights";
    case Block::Means: return "means";
    case Block::Covs: return "covs";
  }
  return "covs";
}

struct Options {
  std::uint64_t seed = 1;
  int instances = 50;
  double eps = 1e-5;
  double tolerance = 1e-6;
  /// Covariance directions probed per component.
  int directions = 3;
  /// Negative control: flip the sign of every analytic gradient.
  bool corrupt_sign = false;
};

struct Cell {
  MetricKind metric;
  WeightLayout layout;
  Block block;
  double max_rel_error = 0.0;
  int instances = 0;
};

struct Report {
  std::vector<Cell> cells;
  double tolerance = 1e-6;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& c : cells) m = std::max(m, c.max_rel_error);
    return m;
  }
  bool passed() const {
    return !cells.empty() && std::all_of(cells.begin(), cells.end(), [&](const Cell& c) {
             return c.max_rel_error < tolerance;
           });
  }
};

struct Instance {
  GmmQf model;
  TransitionBatch batch;
  double discount;
};

/// Random model and batch: K = 3 Gaussians over a 2-D state with 3 actions,
/// T = 24 rows, inputs and means of unit scale, well-conditioned covariances.
template <class Rng>
Instance random_instance(WeightLayout layout, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_action(0, 2);
  std::bernoulli_distribution coin(0.5);
  const Eigen::Index ds = 2;
  const Eigen::Index t = 24;
  const std::size_t k = 3;
  const std::vector<double> codes{-1.0, 0.0, 1.0};
  const Eigen::Index d = layout == WeightLayout::Shared ? ds + 1 : ds;
  const Eigen::Index rows = layout == WeightLayout::Shared ? 1 : 3;

  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };

  std::vector<Eigen::VectorXd> means;
  std::vector<SpdMatrix> covs;
  for (std::size_t i = 0; i < k; ++i) {
    means.emplace_back(0.7 * randn(d, 1));
    const Eigen::MatrixXd a = 0.4 * randn(d, d);
    covs.emplace_back(Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d) + a * a.transpose()));
  }
  GmmQf model(layout, codes, randn(rows, static_cast<Eigen::Index>(k)), std::move(means),
              std::move(covs));

  TransitionBatch batch;
  batch.states = 0.8 * randn(t, ds);
  batch.next_states = 0.8 * randn(t, ds);
  batch.losses.resize(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    batch.losses(i) = coin(rng) ? 1.0 : 0.0;
    batch.actions.push_back(pick_action(rng));
    batch.next_actions.push_back(pick_action(rng));
  }
  batch.trial.assign(static_cast<std::size_t>(t), 0);
  batch.episode.assign(static_cast<std::size_t>(t), 0);
  std::uniform_real_distribution<double> disc(0.5, 0.95);
  return {std::move(model), std::move(batch), disc(rng)};
}

namespace detail {

inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-300});
  return (analytic - numeric).norm() / scale;
}

inline GmmQf with_weights(const GmmQf& m, Eigen::MatrixXd w) {
  return GmmQf(m.layout(), m.action_codes(), std::move(w), m.means(), m.covs());
}

inline GmmQf with_means(const GmmQf& m, std::vector<Eigen::VectorXd> means) {
  return GmmQf(m.layout(), m.action_codes(), m.weights(), std::move(means), m.covs());
}

}  // namespace detail

/// Relative errors for the three blocks of one instance under one metric.
template <class Rng>
std::array<double, 3> check_instance(const Instance& inst, MetricKind metric, const Options& opt,
                                     Rng& rng) {
  const auto& model = inst.model;
  const auto loss = [&](const GmmQf& m) { return br_loss(m, inst.batch, inst.discount); };
  ProductTangent grad = full_gradient(model, inst.batch, inst.discount, metric);
  if (opt.corrupt_sign) grad = -grad;
  const double h = opt.eps;
  std::array<double, 3> err{};

  {
    const Eigen::MatrixXd& w = model.weights();
    Eigen::VectorXd analytic(w.size()), numeric(w.size());
    Eigen::Index n = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c, ++n) {
        Eigen::MatrixXd up = w, down = w;
        up(r, c) += h;
        down(r, c) -= h;
        numeric(n) = (loss(detail::with_weights(model, up)) -
                      loss(detail::with_weights(model, down))) / (2.0 * h);
        analytic(n) = grad.weight_dir(r, c);
      }
    }
    err[0] = detail::relative_error(analytic, numeric);
  }

  {
    const Eigen::Index d = model.dim();
    const auto kk = static_cast<Eigen::Index>(model.k());
    Eigen::VectorXd analytic(kk * d), numeric(kk * d);
    for (Eigen::Index k = 0; k < kk; ++k) {
      for (Eigen::Index i = 0; i < d; ++i) {
        auto up = model.means(), down = model.means();
        up[static_cast<std::size_t>(k)](i) += h;
        down[static_cast<std::size_t>(k)](i) -= h;
        numeric(k * d + i) = (loss(detail::with_means(model, up)) -
                              loss(detail::with_means(model, down))) / (2.0 * h);
        analytic(k * d + i) = grad.mean_dirs[static_cast<std::size_t>(k)](i);
      }
    }
    err[1] = detail::relative_error(analytic, numeric);
  }

  {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = model.dim();
    const auto probes = static_cast<Eigen::Index>(model.k()) * opt.directions;
    Eigen::VectorXd analytic(probes), numeric(probes);
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < model.k(); ++k) {
      for (int j = 0; j < opt.directions; ++j, ++n) {
        Eigen::MatrixXd raw(d, d);
        for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(rng);
        const SymTangent dir(raw);
        ProductTangent probe = ProductTangent::zero(model);
        probe.cov_dirs[k] = dir;
        const double up = loss(retract(model, probe, h, metric).point);
        const double down = loss(retract(model, probe, -h, metric).point);
        numeric(n) = (up - down) / (2.0 * h);
        analytic(n) = spd_inner(model.covs()[k], grad.cov_dirs[k], dir, metric);
      }
    }
    err[2] = detail::relative_error(analytic, numeric);
  }
  return err;
}

/// The full suite: 2 metrics x 2 layouts x 3 blocks, opt.instances random
/// instances per (metric, layout).
inline Report run(const Options& opt) {
  Report report;
  report.tolerance = opt.tolerance;
  const std::array metrics{MetricKind::AffineInvariant, MetricKind::BuresWasserstein};
  const std::array layouts{WeightLayout::Shared, WeightLayout::PerAction};
  const std::array blocks{Block::Weights, Block::Means, Block::Covs};
  std::uint64_t stream = 0;
  for (auto metric : metrics) {
    for (auto layout : layouts) {
      std::array<Cell, 3> cells{};
      for (std::size_t b = 0; b < 3; ++b) cells[b] = {metric, layout, blocks[b], 0.0, 0};
      std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                        static_cast<std::uint32_t>(stream++)};
      std::mt19937_64 rng(seq);
      for (int i = 0; i < opt.instances; ++i) {
        const Instance inst = random_instance(layout, rng);
        const auto err = check_instance(inst, metric, opt, rng);
        for (std::size_t b = 0; b < 3; ++b) {
          cells[b].max_rel_error = std::max(cells[b].max_rel_error, err[b]);
          ++cells[b].instances;
        }
      }
      report.cells.insert(report.cells.end(), cells.begin(), cells.end());
    }
  }
  return report;
}

}  // namespace gmmq::gradcheck
