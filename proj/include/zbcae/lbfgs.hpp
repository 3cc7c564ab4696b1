#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "zbcae/errors.hpp"

namespace zbcae {

struct LbfgsConfig {
  std::size_t memory = 10;
  // Trial step of the first iteration's line search, before any curvature
  // pair exists. Later iterations start from the unit quasi-Newton step.
  double initial_step = 0.1;
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  std::size_t max_iters = 500;
  double grad_tol = 1e-6;
  double rel_loss_tol = 1e-9;

  void validate() const {
    if (memory == 0) throw ConfigError("lbfgs memory must be positive");
    if (!(initial_step > 0.0)) throw ConfigError("lbfgs initial_step must be positive");
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw ConfigError("lbfgs armijo_c1 must lie in (0, 1)");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
      throw ConfigError("lbfgs backtrack_factor must lie in (0, 1)");
    }
    if (max_iters == 0) throw ConfigError("lbfgs max_iters must be positive");
    if (!(grad_tol > 0.0)) throw ConfigError("lbfgs grad_tol must be positive");
    if (!(rel_loss_tol > 0.0)) throw ConfigError("lbfgs rel_loss_tol must be positive");
  }
};

enum class LbfgsStop {
  gradient_tolerance,
  relative_loss_tolerance,
  max_iterations,
  line_search_failed,
};

inline const char* to_string(LbfgsStop reason) {
  switch (reason) {
    case LbfgsStop::gradient_tolerance: return "gradient_tolerance";
    case LbfgsStop::relative_loss_tolerance: return "relative_loss_tolerance";
    case LbfgsStop::max_iterations: return "max_iterations";
    case LbfgsStop::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  LbfgsStop reason = LbfgsStop::max_iterations;
  // Objective value after each accepted iteration, starting with f(x0).
  std::vector<double> trace;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double inf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

/**
 * Limited-memory BFGS with Armijo backtracking.
 *
 * `objective(x, grad)` returns f(x) and writes the gradient into grad.
 * The search direction comes from the two-loop recursion over the most
 * recent `memory` curvature pairs, with initial Hessian scale
 * gamma = s'y / y'y from the newest pair. Pairs with s'y <= 1e-10 are
 * dropped.
 */
template <typename Objective>
LbfgsResult lbfgs_minimize(Objective&& objective, std::vector<double> x0, const LbfgsConfig& config) {
  config.validate();
  constexpr std::size_t kMaxBacktracks = 50;
  constexpr double kCurvatureEps = 1e-10;

  const std::size_t n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> grad(n);
  result.value = objective(std::span<const double>(result.x), std::span<double>(grad));
  if (!std::isfinite(result.value) || !detail::all_finite(grad)) {
    throw NumericalError("lbfgs: objective is not finite at the starting point");
  }
  result.trace.push_back(result.value);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;
  std::vector<double> direction(n), alpha, trial(n), trial_grad(n);

  for (;;) {
    if (detail::inf_norm(grad) < config.grad_tol) {
      result.reason = LbfgsStop::gradient_tolerance;
      return result;
    }
    if (result.iterations >= config.max_iters) {
      result.reason = LbfgsStop::max_iterations;
      return result;
    }

    // Two-loop recursion: direction = -H * grad.
    for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
    alpha.assign(history.size(), 0.0);
    for (std::size_t j = history.size(); j-- > 0;) {
      alpha[j] = history[j].rho * detail::dot(history[j].s, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] -= alpha[j] * history[j].y[i];
    }
    if (!history.empty()) {
      const Pair& last = history.back();
      const double gamma = detail::dot(last.s, last.y) / detail::dot(last.y, last.y);
      for (double& d : direction) d *= gamma;
    }
    for (std::size_t j = 0; j < history.size(); ++j) {
      const double beta = history[j].rho * detail::dot(history[j].y, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] += (alpha[j] - beta) * history[j].s[i];
    }

    double slope = detail::dot(grad, direction);
    if (!(slope < 0.0)) {
      // Not a descent direction: fall back to steepest descent.
      history.clear();
      for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
      slope = detail::dot(grad, direction);
    }

    double step = history.empty() ? config.initial_step : 1.0;
    double trial_value = 0.0;
    bool accepted = false;
    for (std::size_t b = 0; b <= kMaxBacktracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = result.x[i] + step * direction[i];
      trial_value = objective(std::span<const double>(trial), std::span<double>(trial_grad));
      if (std::isfinite(trial_value) && detail::all_finite(trial_grad) &&
          trial_value <= result.value + config.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= config.backtrack_factor;
    }
    if (!accepted) {
      result.reason = LbfgsStop::line_search_failed;
      return result;
    }

    Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = trial[i] - result.x[i];
      pair.y[i] = trial_grad[i] - grad[i];
    }
    const double sy = detail::dot(pair.s, pair.y);
    if (sy > kCurvatureEps) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > config.memory) history.pop_front();
    }

    const double previous = result.value;
    result.x.swap(trial);
    grad.swap(trial_grad);
    result.value = trial_value;
    ++result.iterations;
    result.trace.push_back(result.value);

    const double change = std::abs(previous - result.value);
    if (change <= config.rel_loss_tol * std::max(std::abs(previous), std::abs(result.value))) {
      result.reason = detail::inf_norm(grad) < config.grad_tol ? LbfgsStop::gradient_tolerance
                                                                : LbfgsStop::relative_loss_tolerance;
      return result;
    }
  }
}

}  // namespace zbcae
