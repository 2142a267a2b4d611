#pragma once

// Riemannian steepest descent with Armijo backtracking.
//
// The optimizer is generic over a problem type exposing a loss, a Riemannian
// gradient, the metric at a point and a retraction. The search direction is
// the negative gradient and the tried step sizes are alpha_bar * beta^M for
// M = 1, 2, ..., max_backtracks; the first one satisfying
//
//   L(x) - L(R_x(-t grad)) >= sigma * t * ||grad||_x^2
//
// is accepted.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gmmq {

struct ArmijoConfig {
  double alpha_bar = 1.0;
  double beta = 0.5;
  double sigma = 1e-4;
  int max_backtracks = 40;
  int j_steps = 50;
  double grad_tol = 1e-10;

  void validate() const {
    if (!(alpha_bar > 0.0)) throw std::invalid_argument("armijo.alpha_bar must be > 0");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("armijo.beta must lie in (0, 1)");
    if (!(sigma > 0.0 && sigma < 1.0)) {
      throw std::invalid_argument("armijo.sigma must lie in (0, 1)");
    }
    if (max_backtracks < 1) throw std::invalid_argument("armijo.max_backtracks must be >= 1");
    if (j_steps < 0) throw std::invalid_argument("armijo.j_steps must be >= 0");
    if (!(grad_tol >= 0.0)) throw std::invalid_argument("armijo.grad_tol must be >= 0");
  }
};

template <class P>
concept RiemannianProblem =
    requires(const P& p, const typename P::point_type& x, const typename P::tangent_type& v,
             double t) {
      { p.loss(x) } -> std::convertible_to<double>;
      { p.gradient(x) } -> std::same_as<typename P::tangent_type>;
      { p.inner(x, v, v) } -> std::convertible_to<double>;
      { p.retract(x, v, t) } -> std::same_as<typename P::point_type>;
      { -v } -> std::convertible_to<typename P::tangent_type>;
    };

enum class DescentStatus { BudgetExhausted, GradientBelowTol, BacktrackFailed };

inline std::string_view to_string(DescentStatus s) {
  switch (s) {
    case DescentStatus::BudgetExhausted:
      return "budget_exhausted";
    case DescentStatus::GradientBelowTol:
      return "gradient_below_tol";
    case DescentStatus::BacktrackFailed:
      return "backtrack_failed";
  }
  return "unknown";
}

struct DescentStep {
  /// Loss before the step.
  double loss = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  int backtracks = 0;
  /// Loss after the accepted step.
  double new_loss = 0.0;
};

struct DescentTrace {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Gradient norm evaluated at the start of the last iteration.
  double final_grad_norm = 0.0;
  std::vector<DescentStep> steps;
  DescentStatus status = DescentStatus::BudgetExhausted;
};

template <class Point>
struct ArmijoResult {
  double step = 0.0;
  Point point;
  double loss = 0.0;
  int backtracks = 0;
};

/// Finds the smallest M in 1..max_backtracks satisfying the sufficient-decrease
/// test. Returns nullopt when none does. A gradient with norm below grad_tol
/// returns the point unchanged with step 0.
template <RiemannianProblem P>
std::optional<ArmijoResult<typename P::point_type>> armijo_search(
    const P& problem, const typename P::point_type& point, double loss_at_point,
    const typename P::tangent_type& grad, const ArmijoConfig& cfg) {
  const double grad_sq = problem.inner(point, grad, grad);
  if (std::sqrt(std::max(grad_sq, 0.0)) < cfg.grad_tol) {
    return ArmijoResult<typename P::point_type>{0.0, point, loss_at_point, 0};
  }
  const typename P::tangent_type direction = -grad;
  double step = cfg.alpha_bar;
  for (int m = 1; m <= cfg.max_backtracks; ++m) {
    step *= cfg.beta;
    // A trial step whose retraction leaves the manifold numerically (for
    // example an overflowing matrix exponential) counts as a rejected trial.
    std::optional<typename P::point_type> candidate;
    try {
      candidate.emplace(problem.retract(point, direction, step));
    } catch (const std::domain_error&) {
      continue;
    }
    const double candidate_loss = problem.loss(*candidate);
    if (std::isfinite(candidate_loss) &&
        loss_at_point - candidate_loss >= cfg.sigma * step * grad_sq) {
      return ArmijoResult<typename P::point_type>{step, std::move(*candidate), candidate_loss, m};
    }
  }
  return std::nullopt;
}

/// Runs up to j_steps Armijo iterations from `initial`. Stops early when the
/// gradient norm drops below grad_tol or the line search fails; in the latter
/// case the last accepted (lowest-loss) iterate is returned.
template <RiemannianProblem P>
std::pair<typename P::point_type, DescentTrace> descend(const P& problem,
                                                        typename P::point_type initial,
                                                        const ArmijoConfig& cfg) {
  cfg.validate();
  DescentTrace trace;
  typename P::point_type point = std::move(initial);
  double loss = problem.loss(point);
  trace.initial_loss = loss;
  trace.status = DescentStatus::BudgetExhausted;
  for (int j = 0; j < cfg.j_steps; ++j) {
    const auto grad = problem.gradient(point);
    const double grad_norm = std::sqrt(std::max(problem.inner(point, grad, grad), 0.0));
    trace.final_grad_norm = grad_norm;
    if (grad_norm < cfg.grad_tol) {
      trace.status = DescentStatus::GradientBelowTol;
      break;
    }
    auto accepted = armijo_search(problem, point, loss, grad, cfg);
    if (!accepted) {
      trace.status = DescentStatus::BacktrackFailed;
      break;
    }
    trace.steps.push_back({loss, grad_norm, accepted->step, accepted->backtracks, accepted->loss});
    point = std::move(accepted->point);
    loss = accepted->loss;
  }
  trace.final_loss = loss;
  return {std::move(point), std::move(trace)};
}

}  // namespace gmmq
