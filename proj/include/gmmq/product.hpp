#pragma once

// The product manifold R^{rows x K} x (R^d)^K x (SPD_d)^K holding a GmmQf's
// parameters, with the sum metric and the component-wise retraction.

#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

namespace gmmq {

/// A tangent vector at a GmmQf point: one direction per parameter block.
struct ProductTangent {
  Eigen::MatrixXd weight_dir;
  std::vector<Eigen::VectorXd> mean_dirs;
  std::vector<SymTangent> cov_dirs;

  static ProductTangent zero(const GmmQf& model) {
    ProductTangent t;
    t.weight_dir = Eigen::MatrixXd::Zero(model.weights().rows(), model.weights().cols());
    t.mean_dirs.assign(model.k(), Eigen::VectorXd::Zero(model.dim()));
    t.cov_dirs.assign(model.k(), SymTangent::zero(model.dim()));
    return t;
  }

  ProductTangent& operator+=(const ProductTangent& o) {
    weight_dir += o.weight_dir;
    for (std::size_t k = 0; k < mean_dirs.size(); ++k) {
      mean_dirs[k] += o.mean_dirs[k];
      cov_dirs[k] = cov_dirs[k] + o.cov_dirs[k];
    }
    return *this;
  }

  friend ProductTangent operator*(double s, const ProductTangent& t) {
    ProductTangent out;
    out.weight_dir = s * t.weight_dir;
    out.mean_dirs.reserve(t.mean_dirs.size());
    out.cov_dirs.reserve(t.cov_dirs.size());
    for (const auto& m : t.mean_dirs) out.mean_dirs.push_back(s * m);
    for (const auto& c : t.cov_dirs) out.cov_dirs.push_back(s * c);
    return out;
  }

  ProductTangent operator-() const { return -1.0 * *this; }
};

inline void require_matching_shape(const GmmQf& model, const ProductTangent& t) {
  if (t.weight_dir.rows() != model.weights().rows() ||
      t.weight_dir.cols() != model.weights().cols()) {
    throw DimensionMismatch("ProductTangent: weight direction shape does not match the model");
  }
  if (t.mean_dirs.size() != model.k() || t.cov_dirs.size() != model.k()) {
    throw DimensionMismatch("ProductTangent: component count does not match the model");
  }
  for (std::size_t k = 0; k < model.k(); ++k) {
    detail::require_same_dim(t.mean_dirs[k].size(), model.dim(), "ProductTangent mean");
    detail::require_same_dim(t.cov_dirs[k].dim(), model.dim(), "ProductTangent covariance");
  }
}

/// <t1, t2> = <theta1, theta2> + sum_k <mu1_k, mu2_k> + sum_k <G1_k, G2_k>_{C_k}.
inline double product_inner(const GmmQf& model, const ProductTangent& t1, const ProductTangent& t2,
                            MetricKind metric) {
  require_matching_shape(model, t1);
  require_matching_shape(model, t2);
  double total = (t1.weight_dir.array() * t2.weight_dir.array()).sum();
  for (std::size_t k = 0; k < model.k(); ++k) total += t1.mean_dirs[k].dot(t2.mean_dirs[k]);
  for (std::size_t k = 0; k < model.k(); ++k) {
    total += spd_inner(model.covs()[k], t1.cov_dirs[k], t2.cov_dirs[k], metric);
  }
  return total;
}

inline double product_norm(const GmmQf& model, const ProductTangent& t, MetricKind metric) {
  return std::sqrt(product_inner(model, t, t, metric));
}

struct Retraction {
  GmmQf point;
  /// Number of covariance blocks whose exponential map needed an eigenvalue repair.
  std::size_t repairs = 0;
};

/// Weights and means move additively; each covariance follows the exponential
/// map of the chosen metric along step * Gamma_k.
inline Retraction retract(const GmmQf& model, const ProductTangent& t, double step,
                          MetricKind metric) {
  require_matching_shape(model, t);
  if (step == 0.0) return {model, 0};
  Eigen::MatrixXd weights = model.weights() + step * t.weight_dir;
  std::vector<Eigen::VectorXd> means;
  std::vector<SpdMatrix> covs;
  means.reserve(model.k());
  covs.reserve(model.k());
  std::size_t repairs = 0;
  for (std::size_t k = 0; k < model.k(); ++k) {
    means.push_back(model.means()[k] + step * t.mean_dirs[k]);
    auto moved = spd_exp(model.covs()[k], step * t.cov_dirs[k], metric);
    repairs += moved.repaired ? 1 : 0;
    covs.push_back(std::move(moved.point));
  }
  return {GmmQf(model.layout(), model.action_codes(), std::move(weights), std::move(means),
                std::move(covs)),
          repairs};
}

}  // namespace gmmq
