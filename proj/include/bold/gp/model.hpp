#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bold/errors.hpp"
#include "bold/gp/kernel.hpp"
#include "bold/random.hpp"

namespace bold::gp {

/// Diagonal jitter levels tried in order before giving up.
inline constexpr std::array<double, 5> kJitterLevels{1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct LogMarginalLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;  // w.r.t. (log l_1..log l_d, log sf2, log sn2)
};

/// Independent log-normal priors on every hyperparameter, centred at reference values.
struct LogNormalPrior {
  KernelHyperparameters center;
  double log_std = 0.5;

  double log_density(const Eigen::VectorXd& log_params) const {
    const Eigen::VectorXd mu = center.to_log();
    const double var = log_std * log_std;
    return -0.5 * (log_params - mu).squaredNorm() / var -
           static_cast<double>(mu.size()) * (std::log(log_std) + 0.5 * std::log(2.0 * std::numbers::pi));
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& log_params) const {
    return -(log_params - center.to_log()) / (log_std * log_std);
  }

  bool operator==(const LogNormalPrior&) const = default;
};

/// Cholesky of `a + jitter I`, escalating jitter through kJitterLevels.
/// Returns the jitter that succeeded.
inline double robust_cholesky(const Eigen::MatrixXd& a, Eigen::LLT<Eigen::MatrixXd>& out, const char* what) {
  Eigen::MatrixXd work = a;
  double applied = 0.0;
  for (double level : kJitterLevels) {
    work.diagonal().array() += level - applied;
    applied = level;
    out.compute(work);
    if (out.info() == Eigen::Success) return level;
  }
  throw ConditioningError(std::string(what) + ": Cholesky failed with jitter up to 1e-4");
}

/// Exact GP regression with a Matérn-5/2 kernel and constant prior mean.
///
/// Rows of the training matrix that are bitwise identical are grouped: the
/// model conditions on group means with noise s/m_i, which yields exactly the
/// same posterior and (after the replicate correction) the same marginal
/// likelihood as the ungrouped N-point problem.
///
/// Diagonal noise is s = max(sn2, 1e-8) on the first attempt and sn2 + jitter
/// on later attempts.
class GPModel {
 public:
  GPModel() = default;

  GPModel(KernelHyperparameters hyper, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
          double prior_mean = 0.0)
      : hyper_(std::move(hyper)), prior_mean_(prior_mean), inputs_(inputs), targets_(targets) {
    dim_ = static_cast<std::size_t>(inputs.cols());
    hyper_.validate(dim_);
    if (inputs.rows() != targets.size()) throw ContractViolation("GPModel: input/target count mismatch");
    if (!inputs.allFinite() || !targets.allFinite()) throw ContractViolation("GPModel: non-finite training data");
    group();
    factorize();
  }

  const KernelHyperparameters& hyperparameters() const { return hyper_; }
  double prior_mean() const { return prior_mean_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_observations() const { return static_cast<std::size_t>(targets_.size()); }
  std::size_t num_unique() const { return counts_.size(); }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  double effective_noise() const { return noise_; }

  /// Same data, new hyperparameters; reuses the replicate grouping.
  GPModel with_hyperparameters(KernelHyperparameters h) const {
    h.validate(dim_);
    GPModel out = *this;
    out.hyper_ = std::move(h);
    out.factorize();
    return out;
  }

  template <typename V>
  Prediction predict(const Eigen::MatrixBase<V>& x) const {
    check_point(x);
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(dim_), 1);
    for (std::size_t j = 0; j < dim_; ++j) xs(static_cast<Eigen::Index>(j), 0) = x(static_cast<Eigen::Index>(j)) / hyper_.lengthscales[j];
    const double prior_var = hyper_.signal_variance;
    if (counts_.empty()) return {prior_mean_, prior_var};
    const Eigen::VectorXd k = cross_covariance_scaled(scaled_, xs, hyper_.signal_variance).col(0);
    const double mean = prior_mean_ + k.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    return {mean, std::max(0.0, prior_var - v.squaredNorm())};
  }

  Prediction predict(const std::vector<double>& x) const {
    return predict(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  }

  /// Means (and variances when requested) at the rows of `points` (m x d).
  void predict_many(const Eigen::MatrixXd& points, Eigen::VectorXd& means, Eigen::VectorXd* variances) const {
    if (static_cast<std::size_t>(points.cols()) != dim_) throw ContractViolation("predict_many: dimension mismatch");
    const Eigen::Index m = points.rows();
    means.setConstant(m, prior_mean_);
    if (variances) variances->setConstant(m, hyper_.signal_variance);
    if (counts_.empty()) return;
    const Eigen::MatrixXd xs = scale_columns(points.transpose(), hyper_);
    const Eigen::MatrixXd kxc = cross_covariance_scaled(scaled_, xs, hyper_.signal_variance);
    means.array() += (kxc.transpose() * alpha_).array();
    if (variances) {
      const Eigen::MatrixXd v = chol_.matrixL().solve(kxc);
      *variances = (hyper_.signal_variance - v.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
    }
  }

  /// Log marginal likelihood of the (ungrouped) targets, including the
  /// -(N/2) log 2 pi constant, with its gradient in log-hyperparameter space.
  LogMarginalLikelihood log_marginal_likelihood(bool with_gradient = true) const {
    if (counts_.empty()) throw ContractViolation("log_marginal_likelihood requires n >= 1");
    const auto n = static_cast<Eigen::Index>(counts_.size());
    const double big_n = static_cast<double>(targets_.size());
    const double s = noise_;
    const double log2pi = std::log(2.0 * std::numbers::pi);

    const double fit = (group_means_.array() - prior_mean_).matrix().dot(alpha_);
    double logdet = 0.0;
    const Eigen::MatrixXd& l = chol_.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(l(i, i));
    double log_m = 0.0;
    for (double c : counts_) log_m += std::log(c);
    const double extra = big_n - static_cast<double>(n);

    LogMarginalLikelihood out;
    out.value = -0.5 * fit - 0.5 * logdet - 0.5 * static_cast<double>(n) * log2pi - 0.5 * extra * std::log(2.0 * std::numbers::pi * s) -
                0.5 * log_m - 0.5 * scatter_ / s;
    if (!with_gradient) return out;

    // W = alpha alpha^T - C^{-1}
    Eigen::MatrixXd w = -chol_.solve(Eigen::MatrixXd::Identity(n, n));
    w.noalias() += alpha_ * alpha_.transpose();

    const auto d = static_cast<Eigen::Index>(dim_);
    out.gradient = Eigen::VectorXd::Zero(d + 2);
    double grad_sf = 0.0;
    Eigen::VectorXd grad_l = Eigen::VectorXd::Zero(d);
    const double sf2 = hyper_.signal_variance;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double* pj = scaled_.col(j).data();
      grad_sf += 0.5 * w(j, j) * sf2;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double* pi = scaled_.col(i).data();
        double r2 = 0.0;
        for (Eigen::Index t = 0; t < d; ++t) {
          const double diff = pi[t] - pj[t];
          r2 += diff * diff;
        }
        const double r = std::sqrt(r2);
        const double e = std::exp(-kSqrt5 * r);
        const double kij = sf2 * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) * e;
        const double gij = sf2 * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
        const double wij = w(i, j);  // symmetric pair counted twice, times 1/2
        grad_sf += wij * kij;
        const double wg = wij * gij;
        for (Eigen::Index t = 0; t < d; ++t) {
          const double diff = pi[t] - pj[t];
          grad_l[t] += wg * diff * diff;
        }
      }
    }
    out.gradient.head(d) = grad_l;
    out.gradient[d] = grad_sf;
    if (noise_floored_) {
      out.gradient[d + 1] = 0.0;
    } else {
      double tr = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) tr += w(i, i) / counts_[static_cast<std::size_t>(i)];
      const double dlml_ds = 0.5 * tr - 0.5 * extra / s + 0.5 * scatter_ / (s * s);
      out.gradient[d + 1] = hyper_.noise_variance * dlml_ds;
    }
    return out;
  }

  /// `count` joint posterior draws at the rows of `candidates` (m x d); result is count x m.
  Eigen::MatrixXd sample_joint(const Eigen::MatrixXd& candidates, int count, std::uint64_t seed) const {
    if (candidates.rows() == 0) throw ContractViolation("sample_joint: empty candidate set");
    if (count < 1) throw ContractViolation("sample_joint: count must be >= 1");
    if (static_cast<std::size_t>(candidates.cols()) != dim_) throw ContractViolation("sample_joint: dimension mismatch");
    const Eigen::Index m = candidates.rows();
    const Eigen::MatrixXd xs = scale_columns(candidates.transpose(), hyper_);
    Eigen::MatrixXd cov = cross_covariance_scaled(xs, xs, hyper_.signal_variance);
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(m, prior_mean_);
    if (!counts_.empty()) {
      const Eigen::MatrixXd kxc = cross_covariance_scaled(scaled_, xs, hyper_.signal_variance);
      mean.noalias() += kxc.transpose() * alpha_;
      const Eigen::MatrixXd v = chol_.matrixL().solve(kxc);
      cov.noalias() -= v.transpose() * v;
    }
    Eigen::LLT<Eigen::MatrixXd> llt;
    robust_cholesky(cov, llt, "posterior covariance");
    Engine eng(seed);
    Eigen::MatrixXd z(m, count);
    for (Eigen::Index s = 0; s < count; ++s)
      for (Eigen::Index i = 0; i < m; ++i) z(i, s) = standard_normal(eng);
    Eigen::MatrixXd draws = llt.matrixL() * z;
    draws.colwise() += mean;
    return draws.transpose();
  }

 private:
  template <typename V>
  void check_point(const Eigen::MatrixBase<V>& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_) throw ContractViolation("predict: dimension mismatch");
    if (!x.allFinite()) throw ContractViolation("predict: non-finite input");
  }

  void group() {
    const Eigen::Index big_n = inputs_.rows();
    std::map<std::vector<double>, std::size_t> index;
    std::vector<std::vector<double>> unique;
    std::vector<std::vector<double>> values;
    for (Eigen::Index i = 0; i < big_n; ++i) {
      std::vector<double> row(dim_);
      for (std::size_t j = 0; j < dim_; ++j) row[j] = inputs_(i, static_cast<Eigen::Index>(j));
      auto [it, inserted] = index.try_emplace(row, unique.size());
      if (inserted) {
        unique.push_back(row);
        values.emplace_back();
      }
      values[it->second].push_back(targets_[i]);
    }
    const auto n = static_cast<Eigen::Index>(unique.size());
    unique_.resize(static_cast<Eigen::Index>(dim_), n);
    group_means_.resize(n);
    counts_.assign(unique.size(), 0.0);
    scatter_ = 0.0;
    for (Eigen::Index g = 0; g < n; ++g) {
      const auto& vals = values[static_cast<std::size_t>(g)];
      for (std::size_t j = 0; j < dim_; ++j) unique_(static_cast<Eigen::Index>(j), g) = unique[static_cast<std::size_t>(g)][j];
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      group_means_[g] = mean;
      counts_[static_cast<std::size_t>(g)] = static_cast<double>(vals.size());
      for (double v : vals) scatter_ += (v - mean) * (v - mean);
    }
  }

  void factorize() {
    scaled_ = scale_columns(unique_, hyper_);
    if (counts_.empty()) {
      noise_ = std::max(hyper_.noise_variance, kJitterLevels.front());
      noise_floored_ = hyper_.noise_variance < kJitterLevels.front();
      return;
    }
    const Eigen::MatrixXd k = cross_covariance_scaled(scaled_, scaled_, hyper_.signal_variance);
    for (std::size_t attempt = 0; attempt < kJitterLevels.size(); ++attempt) {
      if (attempt == 0) {
        noise_ = std::max(hyper_.noise_variance, kJitterLevels[0]);
        noise_floored_ = hyper_.noise_variance < kJitterLevels[0];
      } else {
        noise_ = hyper_.noise_variance + kJitterLevels[attempt];
        noise_floored_ = false;
      }
      Eigen::MatrixXd c = k;
      for (Eigen::Index i = 0; i < c.rows(); ++i) c(i, i) += noise_ / counts_[static_cast<std::size_t>(i)];
      chol_.compute(c);
      if (chol_.info() == Eigen::Success) {
        alpha_ = chol_.solve((group_means_.array() - prior_mean_).matrix());
        if (alpha_.allFinite()) return;
      }
    }
    throw ConditioningError("GP training covariance: Cholesky failed with jitter up to 1e-4");
  }

  KernelHyperparameters hyper_;
  double prior_mean_ = 0.0;
  std::size_t dim_ = 0;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;

  Eigen::MatrixXd unique_;  // d x n
  Eigen::MatrixXd scaled_;  // unique_ / lengthscales
  Eigen::VectorXd group_means_;
  std::vector<double> counts_;
  double scatter_ = 0.0;

  double noise_ = 0.0;
  bool noise_floored_ = false;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

}  // namespace bold::gp
