#pragma once

// Gaussian-mixture Q-function:
//   Q(z) = sum_k xi_k exp(-(z - m_k)^T C_k^-1 (z - m_k)).
// The kernels are unnormalized and the weights are unconstrained reals, so the
// model is a function approximator, not a density.

#include "gmmq/manifold.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gmmq {

/// How the mixture weights are shared across actions.
///  - Shared: one weight per Gaussian; Gaussians live on z = (s, a / max|a|).
///  - PerAction: one weight row per action; Gaussians live on the state only.
enum class WeightLayout { Shared, PerAction };

inline std::string_view to_string(WeightLayout l) {
  return l == WeightLayout::Shared ? "shared" : "per_action";
}

inline WeightLayout layout_from_string(std::string_view s) {
  if (s == "shared") return WeightLayout::Shared;
  if (s == "per_action") return WeightLayout::PerAction;
  throw std::invalid_argument("unknown layout '" + std::string(s) +
                              "' (expected shared|per_action)");
}

/// exp(-(z - m)^T c^-1 (z - m)); no 1/2 factor, no normalizing constant.
inline double gauss_eval_with_inverse(const Eigen::Ref<const Eigen::VectorXd>& z,
                                      const Eigen::VectorXd& m, const Eigen::MatrixXd& c_inv) {
  const Eigen::Index d = z.size();
  double quad = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double col = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) col += c_inv(i, j) * (z(i) - m(i));
    quad += (z(j) - m(j)) * col;
  }
  return std::exp(-quad);
}

inline double gauss_eval(const Eigen::VectorXd& z, const Eigen::VectorXd& m, const SpdMatrix& c) {
  detail::require_same_dim(z.size(), m.size(), "gauss_eval");
  detail::require_same_dim(z.size(), c.dim(), "gauss_eval");
  return gauss_eval_with_inverse(z, m, c.inverse());
}

/// The parameter point (weights, means, covariances) plus the action coding
/// needed to map (state, action index) onto the Gaussians' input space.
///
/// `weights` is rows x K with rows == 1 for Shared and rows == |A| for
/// PerAction. `action_codes[a]` is a / max|a|, appended to the state in the
/// Shared layout.
class GmmQf {
 public:
  GmmQf(WeightLayout layout, std::vector<double> action_codes, Eigen::MatrixXd weights,
        std::vector<Eigen::VectorXd> means, std::vector<SpdMatrix> covs)
      : layout_(layout),
        action_codes_(std::move(action_codes)),
        weights_(std::move(weights)),
        means_(std::move(means)),
        covs_(std::move(covs)) {
    validate();
  }

  WeightLayout layout() const { return layout_; }
  std::size_t k() const { return means_.size(); }
  /// Dimension of the Gaussians' input space.
  Eigen::Index dim() const { return means_.front().size(); }
  /// Dimension of the environment state.
  Eigen::Index state_dim() const { return layout_ == WeightLayout::Shared ? dim() - 1 : dim(); }
  std::size_t n_actions() const { return action_codes_.size(); }
  const std::vector<double>& action_codes() const { return action_codes_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<SpdMatrix>& covs() const { return covs_; }

  /// Weight row used for action `a`.
  Eigen::Index weight_row(std::size_t a) const {
    return layout_ == WeightLayout::Shared ? 0 : static_cast<Eigen::Index>(a);
  }

  /// Gaussian input for (s, a): zeta(s, a) in the Shared layout, s otherwise.
  Eigen::VectorXd input(const Eigen::VectorXd& s, std::size_t a) const {
    check_action(a);
    detail::require_same_dim(s.size(), state_dim(), "GmmQf::input");
    if (layout_ == WeightLayout::PerAction) return s;
    Eigen::VectorXd z(s.size() + 1);
    z << s, action_codes_[a];
    return z;
  }

  void check_action(std::size_t a) const {
    if (a >= action_codes_.size()) {
      throw std::out_of_range("action index " + std::to_string(a) + " out of range [0, " +
                              std::to_string(action_codes_.size()) + ")");
    }
  }

 private:
  void validate() const {
    if (means_.empty()) throw std::invalid_argument("GmmQf: K must be positive");
    if (action_codes_.empty()) throw std::invalid_argument("GmmQf: empty action set");
    if (covs_.size() != means_.size()) {
      throw DimensionMismatch("GmmQf: " + std::to_string(means_.size()) + " means but " +
                              std::to_string(covs_.size()) + " covariances");
    }
    const Eigen::Index d = means_.front().size();
    if (d == 0) throw DimensionMismatch("GmmQf: zero-dimensional Gaussians");
    if (layout_ == WeightLayout::Shared && d < 2) {
      throw DimensionMismatch("GmmQf: shared layout needs a state plus an action coordinate");
    }
    for (std::size_t i = 0; i < means_.size(); ++i) {
      detail::require_same_dim(means_[i].size(), d, "GmmQf mean");
      detail::require_same_dim(covs_[i].dim(), d, "GmmQf covariance");
      if (!means_[i].allFinite()) throw std::invalid_argument("GmmQf: non-finite mean");
    }
    const Eigen::Index rows =
        layout_ == WeightLayout::Shared ? 1 : static_cast<Eigen::Index>(action_codes_.size());
    if (weights_.rows() != rows || weights_.cols() != static_cast<Eigen::Index>(means_.size())) {
      throw DimensionMismatch("GmmQf: weights are " + std::to_string(weights_.rows()) + "x" +
                              std::to_string(weights_.cols()) + ", expected " +
                              std::to_string(rows) + "x" + std::to_string(means_.size()));
    }
    if (!weights_.allFinite()) throw std::invalid_argument("GmmQf: non-finite weight");
  }

  WeightLayout layout_;
  std::vector<double> action_codes_;
  Eigen::MatrixXd weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<SpdMatrix> covs_;
};

/// Q on a prepared Gaussian input with an explicit weight row.
inline double q_eval_input(const GmmQf& model, const Eigen::Ref<const Eigen::VectorXd>& z,
                           Eigen::Index row) {
  double q = 0.0;
  for (std::size_t k = 0; k < model.k(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    q += model.weights()(row, ki) *
         gauss_eval_with_inverse(z, model.means()[k], model.covs()[k].inverse());
  }
  return q;
}

inline double q_eval(const GmmQf& model, const Eigen::VectorXd& s, std::size_t a) {
  return q_eval_input(model, model.input(s, a), model.weight_row(a));
}

/// Number of free parameters: weights, means and the upper triangles of the
/// covariances.
inline std::size_t param_count(const GmmQf& model) {
  const auto d = static_cast<std::size_t>(model.dim());
  return static_cast<std::size_t>(model.weights().size()) + model.k() * d +
         model.k() * d * (d + 1) / 2;
}

}  // namespace gmmq
