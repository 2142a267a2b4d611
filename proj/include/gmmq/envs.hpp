#pragma once

// Deterministic simulators for the inverted pendulum, mountain car and acrobot
// benchmarks, their 0/1 one-step losses, goal sets and the state-action map
// zeta(s, a) = (s, a / max|a|).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gmmq::envs {

enum class EnvKind { Pendulum, MountainCar, Acrobot };

inline std::string_view to_string(EnvKind k) {
  switch (k) {
    case EnvKind::Pendulum:
      return "pendulum";
    case EnvKind::MountainCar:
      return "mountain_car";
    case EnvKind::Acrobot:
      return "acrobot";
  }
  return "unknown";
}

inline EnvKind kind_from_string(std::string_view s) {
  if (s == "pendulum") return EnvKind::Pendulum;
  if (s == "mountain_car") return EnvKind::MountainCar;
  if (s == "acrobot") return EnvKind::Acrobot;
  throw std::invalid_argument("unknown env '" + std::string(s) +
                              "' (expected pendulum|mountain_car|acrobot)");
}

/// Which acrobot equations of motion to integrate.
///  - Simplified: theta2'' = a + d2 phi2 / d1 - phi2, with phi1 using
///    (m1 lc1 + m2 lc1) g, as used by the benchmark tasks.
///  - Standard: the usual two-link formulation with the inertia denominator
///    m2 lc2^2 + I2 - d2^2 / d1 and (m1 lc1 + m2 l1) g in phi1.
enum class AcrobotDynamics { Simplified, Standard };

inline std::string_view to_string(AcrobotDynamics d) {
  return d == AcrobotDynamics::Simplified ? "simplified" : "standard";
}

inline AcrobotDynamics acrobot_dynamics_from_string(std::string_view s) {
  if (s == "simplified") return AcrobotDynamics::Simplified;
  if (s == "standard") return AcrobotDynamics::Standard;
  throw std::invalid_argument("unknown acrobot dynamics '" + std::string(s) +
                              "' (expected simplified|standard)");
}

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.8;
  double friction = 0.01;
  /// Goal: |theta| <= angle_tol and |omega| <= velocity_tol.
  double angle_tol = 0.1;
  double velocity_tol = 0.5;
};

struct MountainCarParams {
  double force = 0.005;
  double gravity = 0.0025;
  double x_goal = 0.5;
  double v_goal = 0.0;
  /// Evaluation start: x uniform in [lo, hi], v = 0.
  double rest_x_lo = -0.6;
  double rest_x_hi = -0.4;
};

struct AcrobotParams {
  double m1 = 1.0;
  double m2 = 1.0;
  double l1 = 1.0;
  double l2 = 1.0;
  double lc1 = 0.5;
  double lc2 = 0.5;
  double i1 = 1.0;
  double i2 = 1.0;
  double gravity = 9.8;
  AcrobotDynamics dynamics = AcrobotDynamics::Simplified;
};

using State = Eigen::VectorXd;

struct EnvSpec {
  EnvKind kind = EnvKind::Pendulum;
  std::vector<double> actions;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  /// Integration step in seconds; mountain car uses 1 (one discrete update).
  double dt = 0.05;
  /// Coordinates that are angles and wrap to [-pi, pi].
  std::vector<Eigen::Index> angle_coords;
  /// Draw training-start velocities uniformly from their bounds instead of
  /// starting at rest (pendulum and acrobot; mountain car always draws them).
  bool train_velocity_uniform = false;
  PendulumParams pendulum;
  MountainCarParams mountain_car;
  AcrobotParams acrobot;

  std::string name() const { return std::string(to_string(kind)); }
  Eigen::Index state_dim() const { return lower.size(); }
  std::size_t n_actions() const { return actions.size(); }

  double max_abs_action() const {
    double m = 0.0;
    for (double a : actions) m = std::max(m, std::abs(a));
    return m;
  }

  void validate() const {
    if (actions.empty()) throw std::invalid_argument(name() + ": empty action set");
    if (!std::is_sorted(actions.begin(), actions.end())) {
      throw std::invalid_argument(name() + ": action set must be sorted");
    }
    if (!(max_abs_action() > 0.0)) {
      throw std::invalid_argument(name() + ": action set must contain a nonzero action");
    }
    if (lower.size() != upper.size() || lower.size() == 0) {
      throw std::invalid_argument(name() + ": inconsistent state bounds");
    }
    if (!lower.allFinite() || !upper.allFinite() || (lower.array() >= upper.array()).any()) {
      throw std::invalid_argument(name() + ": state bounds must be finite with lo < hi");
    }
    if (!(dt > 0.0)) throw std::invalid_argument(name() + ": dt must be > 0");
  }
};

inline EnvSpec make_env(EnvKind kind) {
  constexpr double pi = std::numbers::pi;
  EnvSpec spec;
  spec.kind = kind;
  switch (kind) {
    case EnvKind::Pendulum:
      spec.actions = {-5.0, -3.0, 0.0, 3.0, 5.0};
      spec.lower = Eigen::Vector2d(-pi, -4.0);
      spec.upper = Eigen::Vector2d(pi, 4.0);
      spec.dt = 0.05;
      spec.angle_coords = {0};
      break;
    case EnvKind::MountainCar:
      spec.actions = {-1.0, 0.0, 1.0};
      spec.lower = Eigen::Vector2d(-1.2, -0.07);
      spec.upper = Eigen::Vector2d(0.6, 0.07);
      spec.dt = 1.0;
      break;
    case EnvKind::Acrobot:
      spec.actions = {-1.0, 0.0, 1.0};
      spec.lower = Eigen::Vector4d(-pi, -pi, -4.0 * pi, -9.0 * pi);
      spec.upper = Eigen::Vector4d(pi, pi, 4.0 * pi, 9.0 * pi);
      spec.dt = 0.2;
      spec.angle_coords = {0, 1};
      break;
  }
  return spec;
}

inline EnvSpec make_env(std::string_view name) { return make_env(kind_from_string(name)); }

/// Wraps to [-pi, pi]; values already inside are returned unchanged.
inline double wrap_angle(double x) {
  constexpr double pi = std::numbers::pi;
  if (x >= -pi && x <= pi) return x;
  return std::remainder(x, 2.0 * pi);
}

namespace detail {

inline void check_action(const EnvSpec& spec, std::size_t a) {
  if (a >= spec.actions.size()) {
    throw std::out_of_range(spec.name() + ": action index " + std::to_string(a) +
                            " out of range");
  }
}

inline State clamp_and_wrap(const EnvSpec& spec, State s) {
  for (Eigen::Index i : spec.angle_coords) s(i) = wrap_angle(s(i));
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::clamp(s(i), spec.lower(i), spec.upper(i));
  return s;
}

inline State step_pendulum(const EnvSpec& spec, const State& s, double torque) {
  const auto& p = spec.pendulum;
  const double theta = s(0);
  const double omega = s(1);
  const double omega_dot =
      (-p.friction * omega + p.mass * p.gravity * p.length * std::sin(theta) + torque) /
      (p.mass * p.length * p.length);
  // Semi-implicit Euler: velocity first, then position with the new velocity.
  const double omega_next = std::clamp(omega + spec.dt * omega_dot, spec.lower(1), spec.upper(1));
  State out(2);
  out << theta + spec.dt * omega_next, omega_next;
  return clamp_and_wrap(spec, out);
}

inline State step_mountain_car(const EnvSpec& spec, const State& s, double a) {
  const auto& p = spec.mountain_car;
  double x = s(0);
  double v = s(1) + a * p.force - p.gravity * std::cos(3.0 * x);
  v = std::clamp(v, spec.lower(1), spec.upper(1));
  x += v;
  if (x <= spec.lower(0)) {
    // Inelastic left wall.
    x = spec.lower(0);
    v = 0.0;
  }
  x = std::min(x, spec.upper(0));
  State out(2);
  out << x, v;
  return out;
}

struct AcrobotAccel {
  double theta1_dd;
  double theta2_dd;
};

inline AcrobotAccel acrobot_accel(const AcrobotParams& p, const State& s, double a) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  const double t1 = s(0), t2 = s(1), w1 = s(2), w2 = s(3);
  const double d1 = p.m1 * p.lc1 * p.lc1 +
                    p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * std::cos(t2)) +
                    p.i1 + p.i2;
  const double d2 = p.m2 * (p.lc2 * p.lc2 + p.l1 * p.lc2 * std::cos(t2)) + p.i2;
  const double phi2 = p.m2 * p.lc2 * p.gravity * std::cos(t1 + t2 - half_pi);
  const double coriolis = -p.m2 * p.l1 * p.lc2 * w2 * w2 * std::sin(t2) -
                          2.0 * p.m2 * p.l1 * p.lc2 * w1 * w2 * std::sin(t2);
  if (p.dynamics == AcrobotDynamics::Simplified) {
    const double phi1 =
        coriolis + (p.m1 * p.lc1 + p.m2 * p.lc1) * p.gravity * std::cos(t1 - half_pi) + phi2;
    const double t2dd = a + d2 * phi2 / d1 - phi2;
    return {-(d2 * t2dd + phi1) / d1, t2dd};
  }
  const double phi1 =
      coriolis + (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity * std::cos(t1 - half_pi) + phi2;
  const double t2dd = (a + d2 / d1 * phi1 - p.m2 * p.l1 * p.lc2 * w1 * w1 * std::sin(t2) - phi2) /
                      (p.m2 * p.lc2 * p.lc2 + p.i2 - d2 * d2 / d1);
  return {-(d2 * t2dd + phi1) / d1, t2dd};
}

inline State step_acrobot(const EnvSpec& spec, const State& s, double a) {
  const auto acc = acrobot_accel(spec.acrobot, s, a);
  const double w1 = std::clamp(s(2) + spec.dt * acc.theta1_dd, spec.lower(2), spec.upper(2));
  const double w2 = std::clamp(s(3) + spec.dt * acc.theta2_dd, spec.lower(3), spec.upper(3));
  State out(4);
  out << s(0) + spec.dt * w1, s(1) + spec.dt * w2, w1, w2;
  return clamp_and_wrap(spec, out);
}

}  // namespace detail

/// One integration step under action index `a`, followed by velocity clamping
/// and angle wrapping. Pendulum and acrobot use semi-implicit Euler at spec.dt;
/// mountain car applies its discrete update v' then x' = x + v'.
inline State step(const EnvSpec& spec, const State& s, std::size_t a) {
  detail::check_action(spec, a);
  if (s.size() != spec.state_dim()) {
    throw std::invalid_argument(spec.name() + ": state has dimension " + std::to_string(s.size()));
  }
  const double u = spec.actions[a];
  switch (spec.kind) {
    case EnvKind::Pendulum:
      return detail::step_pendulum(spec, s, u);
    case EnvKind::MountainCar:
      return detail::step_mountain_car(spec, s, u);
    case EnvKind::Acrobot:
      return detail::step_acrobot(spec, s, u);
  }
  throw std::logic_error("unreachable");
}

inline bool is_goal(const EnvSpec& spec, const State& s) {
  switch (spec.kind) {
    case EnvKind::Pendulum:
      return std::abs(s(0)) <= spec.pendulum.angle_tol &&
             std::abs(s(1)) <= spec.pendulum.velocity_tol;
    case EnvKind::MountainCar:
      return s(0) >= spec.mountain_car.x_goal && s(1) >= spec.mountain_car.v_goal;
    case EnvKind::Acrobot:
      return -std::cos(s(0)) - std::cos(s(0) + s(1)) > 1.0;
  }
  return false;
}

/// 0 inside the goal set, 1 elsewhere; the action does not enter.
inline double one_step_loss(const EnvSpec& spec, const State& s, std::size_t a) {
  detail::check_action(spec, a);
  return is_goal(spec, s) ? 0.0 : 1.0;
}

/// zeta(s, a) = (s, a / max|a|).
inline Eigen::VectorXd zeta(const EnvSpec& spec, const State& s, std::size_t a) {
  detail::check_action(spec, a);
  Eigen::VectorXd z(s.size() + 1);
  z << s, spec.actions[a] / spec.max_abs_action();
  return z;
}

inline std::vector<double> action_codes(const EnvSpec& spec) {
  std::vector<double> codes;
  codes.reserve(spec.actions.size());
  for (double a : spec.actions) codes.push_back(a / spec.max_abs_action());
  return codes;
}

enum class StartMode { Train, Eval };

/// Training starts: uniform over the state box, with zero velocities for the
/// pendulum and acrobot. Evaluation starts: the resting position (pendulum
/// hanging at theta = pi, acrobot at all zeros, mountain car at rest in the
/// valley with x drawn from [rest_x_lo, rest_x_hi]).
template <class Rng>
State sample_initial_state(const EnvSpec& spec, Rng& rng, StartMode mode) {
  constexpr double pi = std::numbers::pi;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  State s = State::Zero(spec.state_dim());
  switch (spec.kind) {
    case EnvKind::Pendulum:
      if (mode == StartMode::Eval) {
        s(0) = pi;
      } else {
        s(0) = uniform(spec.lower(0), spec.upper(0));
        if (spec.train_velocity_uniform) s(1) = uniform(spec.lower(1), spec.upper(1));
      }
      break;
    case EnvKind::MountainCar:
      if (mode == StartMode::Eval) {
        s(0) = uniform(spec.mountain_car.rest_x_lo, spec.mountain_car.rest_x_hi);
      } else {
        s(0) = uniform(spec.lower(0), spec.upper(0));
        s(1) = uniform(spec.lower(1), spec.upper(1));
      }
      break;
    case EnvKind::Acrobot:
      if (mode == StartMode::Train) {
        s(0) = uniform(spec.lower(0), spec.upper(0));
        s(1) = uniform(spec.lower(1), spec.upper(1));
        if (spec.train_velocity_uniform) {
          s(2) = uniform(spec.lower(2), spec.upper(2));
          s(3) = uniform(spec.lower(3), spec.upper(3));
        }
      }
      break;
  }
  return s;
}

}  // namespace gmmq::envs
