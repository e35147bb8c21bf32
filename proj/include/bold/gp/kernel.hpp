#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bold/errors.hpp"

namespace bold::gp {

inline constexpr double kSqrt5 = 2.23606797749978969640917366873127623544;

/// Matérn-5/2 hyperparameters in normalized-input, standardized-output units.
struct KernelHyperparameters {
  std::vector<double> lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;

  std::size_t dim() const { return lengthscales.size(); }

  void validate(std::size_t d) const {
    if (lengthscales.size() != d)
      throw ContractViolation("lengthscale count " + std::to_string(lengthscales.size()) +
                              " does not match input dimension " + std::to_string(d));
    for (double l : lengthscales)
      if (!(l > 0.0) || !std::isfinite(l)) throw ContractViolation("lengthscales must be positive and finite");
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
      throw ContractViolation("signal variance must be positive");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
      throw ContractViolation("noise variance must be non-negative");
  }

  /// Log-space parameter vector: (log l_1..log l_d, log sf2, log sn2).
  Eigen::VectorXd to_log() const {
    Eigen::VectorXd v(dim() + 2);
    for (std::size_t j = 0; j < dim(); ++j) v[j] = std::log(lengthscales[j]);
    v[dim()] = std::log(signal_variance);
    v[dim() + 1] = std::log(noise_variance);
    return v;
  }

  static KernelHyperparameters from_log(const Eigen::VectorXd& v) {
    KernelHyperparameters h;
    const auto d = static_cast<std::size_t>(v.size() - 2);
    h.lengthscales.resize(d);
    for (std::size_t j = 0; j < d; ++j) h.lengthscales[j] = std::exp(v[j]);
    h.signal_variance = std::exp(v[d]);
    h.noise_variance = std::exp(v[d + 1]);
    return h;
  }

  bool operator==(const KernelHyperparameters&) const = default;
};

/// k(r) for the Matérn-5/2 kernel given the scaled distance r.
inline double matern52_of_r(double r, double signal_variance) {
  const double s5r = kSqrt5 * r;
  return signal_variance * (1.0 + s5r + (5.0 / 3.0) * r * r) * std::exp(-s5r);
}

template <typename A, typename B>
double matern52(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp, const KernelHyperparameters& h) {
  const auto d = static_cast<Eigen::Index>(h.dim());
  if (x.size() != d || xp.size() != d) throw ContractViolation("matern52: dimension mismatch");
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double a = x(j), b = xp(j);
    if (!std::isfinite(a) || !std::isfinite(b)) throw ContractViolation("matern52: non-finite input");
    const double diff = (a - b) / h.lengthscales[static_cast<std::size_t>(j)];
    r2 += diff * diff;
  }
  return matern52_of_r(std::sqrt(r2), h.signal_variance);
}

inline double matern52(const std::vector<double>& x, const std::vector<double>& xp, const KernelHyperparameters& h) {
  return matern52(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                  Eigen::Map<const Eigen::VectorXd>(xp.data(), static_cast<Eigen::Index>(xp.size())), h);
}

/// Columns of `pts` (d x n) divided by the lengthscales.
inline Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& pts, const KernelHyperparameters& h) {
  Eigen::MatrixXd out = pts;
  for (Eigen::Index j = 0; j < out.rows(); ++j) out.row(j) /= h.lengthscales[static_cast<std::size_t>(j)];
  return out;
}

/// Covariance between scaled point sets given column-wise (d x na, d x nb).
inline Eigen::MatrixXd cross_covariance_scaled(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                               double signal_variance) {
  Eigen::MatrixXd k(a.cols(), b.cols());
  const Eigen::Index d = a.rows();
  for (Eigen::Index jb = 0; jb < b.cols(); ++jb) {
    const double* pb = b.col(jb).data();
    for (Eigen::Index ia = 0; ia < a.cols(); ++ia) {
      const double* pa = a.col(ia).data();
      double r2 = 0.0;
      for (Eigen::Index t = 0; t < d; ++t) {
        const double diff = pa[t] - pb[t];
        r2 += diff * diff;
      }
      k(ia, jb) = matern52_of_r(std::sqrt(r2), signal_variance);
    }
  }
  return k;
}

/// Gram matrix of point rows (n x d) under `h`; used by tests and oracles.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& rows, const KernelHyperparameters& h) {
  Eigen::MatrixXd s = scale_columns(rows.transpose(), h);
  return cross_covariance_scaled(s, s, h.signal_variance);
}

}  // namespace bold::gp
