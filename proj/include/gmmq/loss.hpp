#pragma once

// Empirical Bellman-residual loss of a GmmQf over an on-policy batch and its
// analytic Riemannian gradient.
//
//   delta_t = g_t + alpha Q(z'_t) - Q(z_t)
//   L       = (1/T) sum_t delta_t^2
//
// Per-sample sums run in t = 0..T-1 order so that results are reproducible
// bit for bit.

#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/product.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmmq {

/// The on-policy dataset: rows (s_t, a_t, g_t, s'_t, mu(s'_t)).
///
/// States are stored raw; the Gaussian input (zeta(s, a) or s) is derived from
/// the model's layout when the batch is evaluated.
struct TransitionBatch {
  Eigen::MatrixXd states;       // T x D_s
  std::vector<int> actions;     // a_t
  Eigen::VectorXd losses;       // g_t
  Eigen::MatrixXd next_states;  // T x D_s
  std::vector<int> next_actions;
  /// Provenance: the policy-iteration trial each row was collected in.
  std::vector<int> trial;
  /// Provenance: episode index within the trial.
  std::vector<int> episode;

  Eigen::Index size() const { return states.rows(); }

  void validate(std::size_t n_actions) const {
    const Eigen::Index t = states.rows();
    if (t < 1) throw std::invalid_argument("TransitionBatch: empty batch");
    if (next_states.rows() != t || next_states.cols() != states.cols() || losses.size() != t ||
        static_cast<Eigen::Index>(actions.size()) != t ||
        static_cast<Eigen::Index>(next_actions.size()) != t) {
      throw DimensionMismatch("TransitionBatch: inconsistent row counts");
    }
    if (!states.allFinite() || !next_states.allFinite() || !losses.allFinite()) {
      throw std::invalid_argument("TransitionBatch: non-finite entry");
    }
    for (Eigen::Index i = 0; i < t; ++i) {
      const auto a = static_cast<std::size_t>(actions[static_cast<std::size_t>(i)]);
      const auto b = static_cast<std::size_t>(next_actions[static_cast<std::size_t>(i)]);
      if (actions[static_cast<std::size_t>(i)] < 0 || a >= n_actions ||
          next_actions[static_cast<std::size_t>(i)] < 0 || b >= n_actions) {
        throw std::out_of_range("TransitionBatch: action index out of range at row " +
                                std::to_string(i));
      }
    }
  }
};

namespace detail {

/// Gaussian values and weight rows for every sample of a batch.
struct BatchEvaluation {
  Eigen::MatrixXd inputs;       // T x d
  Eigen::MatrixXd next_inputs;  // T x d
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> next_rows;
  Eigen::MatrixXd gauss;       // T x K, G_k(z_t)
  Eigen::MatrixXd next_gauss;  // T x K, G_k(z'_t)
  Eigen::VectorXd q;
  Eigen::VectorXd next_q;
};

inline void check_discount(double discount) {
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discount must lie in [0, 1), got " + std::to_string(discount));
  }
}

inline BatchEvaluation evaluate_batch(const GmmQf& model, const TransitionBatch& batch) {
  batch.validate(model.n_actions());
  detail::require_same_dim(batch.states.cols(), model.state_dim(), "TransitionBatch state");
  const Eigen::Index t = batch.size();
  const auto kk = static_cast<Eigen::Index>(model.k());
  BatchEvaluation ev;
  ev.inputs.resize(t, model.dim());
  ev.next_inputs.resize(t, model.dim());
  ev.rows.resize(static_cast<std::size_t>(t));
  ev.next_rows.resize(static_cast<std::size_t>(t));
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto a = static_cast<std::size_t>(batch.actions[static_cast<std::size_t>(i)]);
    const auto b = static_cast<std::size_t>(batch.next_actions[static_cast<std::size_t>(i)]);
    ev.inputs.row(i) = model.input(batch.states.row(i).transpose(), a).transpose();
    ev.next_inputs.row(i) = model.input(batch.next_states.row(i).transpose(), b).transpose();
    ev.rows[static_cast<std::size_t>(i)] = model.weight_row(a);
    ev.next_rows[static_cast<std::size_t>(i)] = model.weight_row(b);
  }
  ev.gauss.resize(t, kk);
  ev.next_gauss.resize(t, kk);
  Eigen::MatrixXd u(t, model.dim());
  for (Eigen::Index k = 0; k < kk; ++k) {
    const auto& m = model.means()[static_cast<std::size_t>(k)];
    const auto& inv = model.covs()[static_cast<std::size_t>(k)].inverse();
    u = ev.inputs.rowwise() - m.transpose();
    ev.gauss.col(k) = (-((u * inv).cwiseProduct(u)).rowwise().sum()).array().exp();
    u = ev.next_inputs.rowwise() - m.transpose();
    ev.next_gauss.col(k) = (-((u * inv).cwiseProduct(u)).rowwise().sum()).array().exp();
  }
  ev.q.resize(t);
  ev.next_q.resize(t);
  const auto& w = model.weights();
  for (Eigen::Index i = 0; i < t; ++i) {
    double q = 0.0;
    double qn = 0.0;
    for (Eigen::Index k = 0; k < kk; ++k) {
      q += w(ev.rows[static_cast<std::size_t>(i)], k) * ev.gauss(i, k);
      qn += w(ev.next_rows[static_cast<std::size_t>(i)], k) * ev.next_gauss(i, k);
    }
    ev.q(i) = q;
    ev.next_q(i) = qn;
  }
  return ev;
}

}  // namespace detail

/// (1/T) sum_t [g_t + discount Q(z'_t) - Q(z_t)]^2, accumulated in row order.
inline double br_loss(const GmmQf& model, const TransitionBatch& batch, double discount) {
  detail::check_discount(discount);
  const auto ev = detail::evaluate_batch(model, batch);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double r = batch.losses(i) + discount * ev.next_q(i) - ev.q(i);
    sum += r * r;
  }
  return sum / static_cast<double>(batch.size());
}

/// The T x (rows K) matrix Delta with
///   Delta_{t, (r,k)} = alpha G_k(z'_t) [r = row(a'_t)] - G_k(z_t) [r = row(a_t)],
/// so that the residual vector is g + Delta vec(xi). Columns are ordered
/// r * K + k. In the Shared layout there is a single row and the indicators
/// are always one.
inline Eigen::MatrixXd residual_design(const GmmQf& model, const detail::BatchEvaluation& ev,
                                       double discount) {
  const Eigen::Index t = ev.gauss.rows();
  const auto kk = static_cast<Eigen::Index>(model.k());
  const Eigen::Index rows = model.weights().rows();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(t, rows * kk);
  for (Eigen::Index i = 0; i < t; ++i) {
    const Eigen::Index r = ev.rows[static_cast<std::size_t>(i)];
    const Eigen::Index rn = ev.next_rows[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < kk; ++k) {
      delta(i, rn * kk + k) += discount * ev.next_gauss(i, k);
      delta(i, r * kk + k) -= ev.gauss(i, k);
    }
  }
  return delta;
}

/// Row-major flattening of the weight matrix, matching residual_design's columns.
inline Eigen::VectorXd flatten_weights(const Eigen::MatrixXd& w) {
  Eigen::VectorXd v(w.size());
  for (Eigen::Index r = 0; r < w.rows(); ++r) v.segment(r * w.cols(), w.cols()) = w.row(r);
  return v;
}

inline Eigen::MatrixXd unflatten_weights(const Eigen::VectorXd& v, Eigen::Index rows,
                                         Eigen::Index cols) {
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) w.row(r) = v.segment(r * cols, cols).transpose();
  return w;
}

/// The loss written as (1/T) ||g + Delta xi||^2.
inline double br_loss_matrix_form(const GmmQf& model, const TransitionBatch& batch,
                                  double discount) {
  detail::check_discount(discount);
  const auto ev = detail::evaluate_batch(model, batch);
  const Eigen::MatrixXd delta = residual_design(model, ev, discount);
  const Eigen::VectorXd r = batch.losses + delta * flatten_weights(model.weights());
  return r.squaredNorm() / static_cast<double>(batch.size());
}

/// Intermediate quantities shared by the three gradient blocks.
///
/// Shared layout:
///   d_tk = alpha G_k(z'_t)(z'_t - m_k) - G_k(z_t)(z_t - m_k)
///   B_tk = alpha G_k(z'_t)(z'_t - m_k)(z'_t - m_k)^T - G_k(z_t)(z_t - m_k)(z_t - m_k)^T
/// PerAction layout: each term additionally carries the weight of the action
/// it was evaluated with, xi_k^(a'_t) and xi_k^(a_t) respectively.
///   dbar_k = (1/T) sum_t delta_t d_tk,   Bbar_k = (1/T) sum_t delta_t B_tk.
struct GradWorkspace {
  Eigen::Index samples = 0;
  std::size_t components = 0;
  Eigen::Index dim = 0;
  WeightLayout layout = WeightLayout::Shared;
  double discount = 0.0;
  Eigen::VectorXd losses;     // g
  Eigen::VectorXd residuals;  // delta_t
  Eigen::MatrixXd design;     // Delta
  std::vector<Eigen::VectorXd> mean_aggregates;  // dbar_k
  std::vector<Eigen::MatrixXd> cov_aggregates;   // Bbar_k
  std::vector<Eigen::MatrixXd> cov_inverses;     // C_k^-1
  /// Only filled when requested: d_tk as row t of per_sample_d[k], and B_tk.
  std::vector<Eigen::MatrixXd> per_sample_d;
  std::vector<std::vector<Eigen::MatrixXd>> per_sample_b;
};

inline GradWorkspace build_workspace(const GmmQf& model, const TransitionBatch& batch,
                                     double discount, bool keep_per_sample = false) {
  detail::check_discount(discount);
  const auto ev = detail::evaluate_batch(model, batch);
  const Eigen::Index t = batch.size();
  const Eigen::Index d = model.dim();
  const std::size_t kk = model.k();
  const bool per_action = model.layout() == WeightLayout::PerAction;
  const auto& w = model.weights();

  GradWorkspace ws;
  ws.samples = t;
  ws.components = kk;
  ws.dim = d;
  ws.layout = model.layout();
  ws.discount = discount;
  ws.losses = batch.losses;
  ws.residuals = batch.losses + discount * ev.next_q - ev.q;
  ws.design = residual_design(model, ev, discount);
  ws.mean_aggregates.assign(kk, Eigen::VectorXd::Zero(d));
  ws.cov_aggregates.assign(kk, Eigen::MatrixXd::Zero(d, d));
  ws.cov_inverses.reserve(kk);
  for (const auto& c : model.covs()) ws.cov_inverses.push_back(c.inverse());
  if (keep_per_sample) {
    ws.per_sample_d.assign(kk, Eigen::MatrixXd::Zero(t, d));
    ws.per_sample_b.assign(kk, std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(t)));
  }

  const double inv_t = 1.0 / static_cast<double>(t);
  if (!keep_per_sample) {
    // Column form: dbar_k = (1/T)(U'^T (delta o c') - U^T (delta o c)) and
    // Bbar_k = (1/T)(U'^T diag(delta o c') U' - U^T diag(delta o c) U), with
    // U, U' the centered inputs and c, c' the per-sample coefficients.
    Eigen::MatrixXd u(t, d), un(t, d);
    Eigen::VectorXd cur(t), next(t);
    for (std::size_t k = 0; k < kk; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const auto& m = model.means()[k];
      cur = ev.gauss.col(ki);
      next = discount * ev.next_gauss.col(ki);
      if (per_action) {
        for (Eigen::Index i = 0; i < t; ++i) {
          const auto si = static_cast<std::size_t>(i);
          cur(i) *= w(ev.rows[si], ki);
          next(i) *= w(ev.next_rows[si], ki);
        }
      }
      cur = cur.cwiseProduct(ws.residuals);
      next = next.cwiseProduct(ws.residuals);
      u = ev.inputs.rowwise() - m.transpose();
      un = ev.next_inputs.rowwise() - m.transpose();
      ws.mean_aggregates[k] = inv_t * (un.transpose() * next - u.transpose() * cur);
      Eigen::MatrixXd b = un.transpose() * next.asDiagonal() * un;
      b.noalias() -= u.transpose() * cur.asDiagonal() * u;
      ws.cov_aggregates[k] = inv_t * 0.5 * (b + b.transpose());
    }
    return ws;
  }

  Eigen::VectorXd u(d), un(d), d_tk(d);
  Eigen::MatrixXd b_tk(d, d);
  for (std::size_t k = 0; k < kk; ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const auto& m = model.means()[k];
    for (Eigen::Index i = 0; i < t; ++i) {
      const auto si = static_cast<std::size_t>(i);
      double cur = ev.gauss(i, ki);
      double next = discount * ev.next_gauss(i, ki);
      if (per_action) {
        cur *= w(ev.rows[si], ki);
        next *= w(ev.next_rows[si], ki);
      }
      u = ev.inputs.row(i).transpose() - m;
      un = ev.next_inputs.row(i).transpose() - m;
      d_tk = next * un - cur * u;
      b_tk.noalias() = next * un * un.transpose();
      b_tk.noalias() -= cur * u * u.transpose();
      ws.mean_aggregates[k] += ws.residuals(i) * d_tk;
      ws.cov_aggregates[k] += ws.residuals(i) * b_tk;
      if (keep_per_sample) {
        ws.per_sample_d[k].row(i) = d_tk.transpose();
        ws.per_sample_b[k][si] = b_tk;
      }
    }
    ws.mean_aggregates[k] *= inv_t;
    ws.cov_aggregates[k] *= inv_t;
    ws.cov_aggregates[k] = 0.5 * (ws.cov_aggregates[k] + ws.cov_aggregates[k].transpose());
  }
  return ws;
}

/// Euclidean gradient with respect to the weights: (2/T) Delta^T (g + Delta xi),
/// returned in the model's weight shape.
inline Eigen::MatrixXd grad_weights(const GradWorkspace& ws, const GmmQf& model) {
  const Eigen::VectorXd g =
      (2.0 / static_cast<double>(ws.samples)) * (ws.design.transpose() * ws.residuals);
  return unflatten_weights(g, model.weights().rows(), model.weights().cols());
}

/// Euclidean gradient with respect to each mean: 4 xi_k C_k^-1 dbar_k (Shared);
/// in the PerAction layout the weight already sits inside dbar_k.
inline std::vector<Eigen::VectorXd> grad_means(const GradWorkspace& ws, const GmmQf& model) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(model.k());
  for (std::size_t k = 0; k < model.k(); ++k) {
    const double scale = model.layout() == WeightLayout::Shared
                             ? 4.0 * model.weights()(0, static_cast<Eigen::Index>(k))
                             : 4.0;
    out.push_back(scale * (ws.cov_inverses[k] * ws.mean_aggregates[k]));
  }
  return out;
}

/// Riemannian gradient with respect to each covariance.
/// AffineInvariant: 2 xi_k Bbar_k.
/// BuresWasserstein: 4 xi_k (C_k^-1 Bbar_k + Bbar_k C_k^-1).
inline std::vector<SymTangent> grad_covs(const GradWorkspace& ws, const GmmQf& model,
                                         MetricKind metric) {
  std::vector<SymTangent> out;
  out.reserve(model.k());
  for (std::size_t k = 0; k < model.k(); ++k) {
    const double xi = model.layout() == WeightLayout::Shared
                          ? model.weights()(0, static_cast<Eigen::Index>(k))
                          : 1.0;
    const auto& b = ws.cov_aggregates[k];
    if (metric == MetricKind::AffineInvariant) {
      out.emplace_back(2.0 * xi * b);
    } else {
      const auto& inv = ws.cov_inverses[k];
      out.emplace_back(4.0 * xi * (inv * b + b * inv));
    }
  }
  return out;
}

inline ProductTangent full_gradient(const GmmQf& model, const TransitionBatch& batch,
                                    double discount, MetricKind metric) {
  const auto ws = build_workspace(model, batch, discount);
  ProductTangent g;
  g.weight_dir = grad_weights(ws, model);
  g.mean_dirs = grad_means(ws, model);
  g.cov_dirs = grad_covs(ws, model, metric);
  return g;
}

}  // namespace gmmq
