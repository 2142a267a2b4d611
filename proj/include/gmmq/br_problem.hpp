#pragma once

// Adapter presenting Bellman-residual minimization over one batch as a
// RiemannianProblem on the GmmQf product manifold.

#include "gmmq/loss.hpp"
#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/optimizer.hpp"
#include "gmmq/product.hpp"

namespace gmmq {

/// Parameter blocks the optimizer may move. Frozen blocks get a zero gradient.
struct BlockMask {
  bool weights = true;
  bool means = true;
  bool covs = true;
};

class BellmanResidualProblem {
 public:
  using point_type = GmmQf;
  using tangent_type = ProductTangent;

  BellmanResidualProblem(const TransitionBatch& batch, double discount, MetricKind metric,
                         BlockMask mask = {})
      : batch_(&batch), discount_(discount), metric_(metric), mask_(mask) {}

  double loss(const GmmQf& model) const { return br_loss(model, *batch_, discount_); }

  ProductTangent gradient(const GmmQf& model) const {
    auto g = full_gradient(model, *batch_, discount_, metric_);
    if (!mask_.weights) g.weight_dir.setZero();
    if (!mask_.means) {
      for (auto& m : g.mean_dirs) m.setZero();
    }
    if (!mask_.covs) {
      for (auto& c : g.cov_dirs) c = SymTangent::zero(c.dim());
    }
    return g;
  }

  double inner(const GmmQf& model, const ProductTangent& a, const ProductTangent& b) const {
    return product_inner(model, a, b, metric_);
  }

  GmmQf retract(const GmmQf& model, const ProductTangent& t, double step) const {
    return gmmq::retract(model, t, step, metric_).point;
  }

  MetricKind metric() const { return metric_; }
  double discount() const { return discount_; }

 private:
  const TransitionBatch* batch_;
  double discount_;
  MetricKind metric_;
  BlockMask mask_;
};

static_assert(RiemannianProblem<BellmanResidualProblem>);

}  // namespace gmmq
