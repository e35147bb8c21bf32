#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "bold/gp/model.hpp"
#include "bold/gp/optimize.hpp"
#include "bold/random.hpp"

namespace bold::gp {

/// Box for type-II maximum likelihood, in natural units of normalized space.
struct HyperparameterBounds {
  double lengthscale_min = 0.005;
  double lengthscale_max = 10.0;
  double signal_min = 0.01;
  double signal_max = 20.0;
  double noise_min = 1e-6;
  double noise_max = 1.0;
};

struct FitOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  HyperparameterBounds bounds{};
  /// First restart starts here instead of the default point when given.
  std::optional<KernelHyperparameters> warm_start;
  std::optional<LogNormalPrior> prior;
};

inline KernelHyperparameters default_hyperparameters(std::size_t d) {
  KernelHyperparameters h;
  h.lengthscales.assign(d, 0.5);
  h.signal_variance = 1.0;
  h.noise_variance = 1e-2;
  return h;
}

/// Objective maximized by fit_hyperparameters: LML plus log prior (if any).
inline double penalized_lml(const GPModel& model, const std::optional<LogNormalPrior>& prior) {
  double v = model.log_marginal_likelihood(false).value;
  if (prior) v += prior->log_density(model.hyperparameters().to_log());
  return v;
}

/// Multi-restart projected L-BFGS on the (penalized) log marginal likelihood in
/// log-hyperparameter space. Deterministic given `opt.seed`.
inline KernelHyperparameters fit_hyperparameters(const GPModel& model, const FitOptions& opt) {
  const std::size_t d = model.dim();
  if (model.num_observations() < 2) throw ContractViolation("fit_hyperparameters requires n >= 2");
  if (opt.restarts < 1) throw ContractViolation("fit_hyperparameters requires restarts >= 1");
  const auto p = static_cast<Eigen::Index>(d + 2);
  const auto& b = opt.bounds;
  Eigen::VectorXd lo(p), hi(p);
  lo.head(static_cast<Eigen::Index>(d)).setConstant(std::log(b.lengthscale_min));
  hi.head(static_cast<Eigen::Index>(d)).setConstant(std::log(b.lengthscale_max));
  lo[p - 2] = std::log(b.signal_min);
  hi[p - 2] = std::log(b.signal_max);
  lo[p - 1] = std::log(b.noise_min);
  hi[p - 1] = std::log(b.noise_max);

  const BoxObjective objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
    const GPModel m = model.with_hyperparameters(KernelHyperparameters::from_log(v));
    auto lml = m.log_marginal_likelihood(true);
    double val = lml.value;
    grad = lml.gradient;
    if (opt.prior) {
      val += opt.prior->log_density(v);
      grad += opt.prior->gradient(v);
    }
    grad = -grad;
    return -val;
  };

  Engine eng(derive_seed(opt.seed, "fit-restarts"));
  const auto log_uniform = [&](double a, double c) { return std::log(a) + uniform01(eng) * (std::log(c) - std::log(a)); };

  BoxMinimizeOptions mopt;
  mopt.max_iterations = opt.max_iterations;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd x0(p);
    if (r == 0) {
      x0 = (opt.warm_start ? *opt.warm_start : default_hyperparameters(d)).to_log();
    } else {
      for (Eigen::Index j = 0; j < p - 2; ++j) x0[j] = log_uniform(0.05, 2.0);
      x0[p - 2] = log_uniform(0.2, 5.0);
      x0[p - 1] = log_uniform(1e-4, 0.3);
    }
    const auto res = minimize_box(objective, x0, lo, hi, mopt);
    if (std::isfinite(res.value) && res.value < best) {
      best = res.value;
      best_x = res.x;
    }
  }
  if (!std::isfinite(best)) throw ConditioningError("fit_hyperparameters: every restart failed to factorize");
  return KernelHyperparameters::from_log(best_x);
}

}  // namespace bold::gp
