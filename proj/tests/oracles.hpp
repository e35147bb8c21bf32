#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the GP implementation's covariance or solve paths.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace bold::oracle {

inline double matern52_direct(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const std::vector<double>& ell,
                              double sf2) {
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) r2 += std::pow((a[j] - b[j]) / ell[static_cast<std::size_t>(j)], 2);
  const double r = std::sqrt(r2);
  return sf2 * (1.0 + std::sqrt(5.0) * r + 5.0 / 3.0 * r2) * std::exp(-std::sqrt(5.0) * r);
}

inline Eigen::MatrixXd dense_gram(const Eigen::MatrixXd& x, const std::vector<double>& ell, double sf2) {
  Eigen::MatrixXd k(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) k(i, j) = matern52_direct(x.row(i), x.row(j), ell, sf2);
  return k;
}

struct DensePosterior {
  double mean;
  double variance;
};

/// GP posterior mean and variance written with an explicit matrix inverse.
inline DensePosterior dense_posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& ell,
                                      double sf2, double noise, double prior_mean, const Eigen::VectorXd& xt) {
  if (x.rows() == 0) return {prior_mean, sf2};
  Eigen::MatrixXd c = dense_gram(x, ell, sf2);
  c.diagonal().array() += noise;
  const Eigen::MatrixXd cinv = c.fullPivLu().inverse();
  Eigen::VectorXd k(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) k[i] = matern52_direct(x.row(i), xt, ell, sf2);
  const Eigen::VectorXd r = (y.array() - prior_mean).matrix();
  return {prior_mean + k.dot(cinv * r), sf2 - k.dot(cinv * k)};
}

/// log N(y; m, K + noise I) via LU determinant and explicit inverse.
inline double mvn_log_density(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& ell,
                              double sf2, double noise, double prior_mean) {
  Eigen::MatrixXd c = dense_gram(x, ell, sf2);
  c.diagonal().array() += noise;
  const auto lu = c.fullPivLu();
  const Eigen::VectorXd r = (y.array() - prior_mean).matrix();
  double logdet = 0.0;
  const Eigen::MatrixXd u = lu.matrixLU();
  for (Eigen::Index i = 0; i < u.rows(); ++i) logdet += std::log(std::abs(u(i, i)));
  return -0.5 * r.dot(lu.inverse() * r) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

inline Eigen::MatrixXd random_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

}  // namespace bold::oracle
