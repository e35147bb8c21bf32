#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "bold/errors.hpp"

namespace bold::gp {

struct BoxMinimizeOptions {
  int max_iterations = 100;
  int history = 8;
  double function_tolerance = 1e-9;
  double gradient_tolerance = 1e-6;
};

struct BoxMinimizeResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Objective returns f(x) and writes grad; may throw ConditioningError, which
/// the line search treats as +inf.
using BoxObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Projected L-BFGS for min f(x) subject to lo <= x <= hi. Never returns a
/// point worse than the (projected) starting point.
inline BoxMinimizeResult minimize_box(const BoxObjective& f, Eigen::VectorXd x, const Eigen::VectorXd& lo,
                                      const Eigen::VectorXd& hi, const BoxMinimizeOptions& opt = {}) {
  const auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };
  const auto safe_eval = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    try {
      double val = f(v, g);
      return std::isfinite(val) && g.allFinite() ? val : std::numeric_limits<double>::infinity();
    } catch (const ConditioningError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  x = project(x);
  Eigen::VectorXd g(x.size());
  double fx = safe_eval(x, g);
  BoxMinimizeResult res{x, fx, 0};
  if (!std::isfinite(fx)) return res;

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  const double eps = 1e-12;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    // Variables pinned at a bound with the gradient pushing outward are frozen.
    Eigen::ArrayXd free = Eigen::ArrayXd::Ones(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if ((x[i] <= lo[i] + eps && g[i] > 0) || (x[i] >= hi[i] - eps && g[i] < 0)) free[i] = 0.0;
    }
    const Eigen::VectorXd pg = (g.array() * free).matrix();
    if (pg.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) break;

    // Two-loop recursion on the free subspace.
    Eigen::VectorXd q = pg;
    std::vector<double> alphas(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      const auto& s = s_hist[static_cast<std::size_t>(k)];
      const auto& y = y_hist[static_cast<std::size_t>(k)];
      const double rho = 1.0 / y.dot(s);
      alphas[static_cast<std::size_t>(k)] = rho * s.dot(q);
      q -= alphas[static_cast<std::size_t>(k)] * y;
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double rho = 1.0 / y_hist[k].dot(s_hist[k]);
      const double beta = rho * y_hist[k].dot(q);
      q += (alphas[k] - beta) * s_hist[k];
    }
    Eigen::VectorXd dir = -(q.array() * free).matrix();
    if (dir.dot(pg) >= 0.0) {
      dir = -pg;
      s_hist.clear();
      y_hist.clear();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(pg.norm(), eps)) : 1.0;
    Eigen::VectorXd x_new, g_new(x.size());
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      x_new = project(x + step * dir);
      f_new = safe_eval(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double f_old = fx;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (s.dot(y) > 1e-10) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    if (std::abs(f_old - fx) < opt.function_tolerance * (1.0 + std::abs(fx))) break;
  }
  res.x = x;
  res.value = fx;
  return res;
}

}  // namespace bold::gp
