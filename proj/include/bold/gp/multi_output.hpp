#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bold/gp/fit.hpp"
#include "bold/gp/model.hpp"

namespace bold::gp {

/// Raw training data for one output, targets in physical units.
struct OutputData {
  Eigen::MatrixXd inputs;  // n x d, normalized
  Eigen::VectorXd targets;
};

/// One independent GP plus the z-scoring of its targets.
class OutputModel {
 public:
  OutputModel() = default;
  OutputModel(std::string name, double offset, double scale, GPModel model)
      : name_(std::move(name)), offset_(offset), scale_(scale), model_(std::move(model)) {}

  const std::string& name() const { return name_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }
  const GPModel& model() const { return model_; }

  /// Posterior of the latent output in physical units.
  template <typename V>
  Prediction predict(const Eigen::MatrixBase<V>& x) const {
    const auto p = model_.predict(x);
    return {offset_ + scale_ * p.mean, scale_ * scale_ * p.variance};
  }

  void predict_many(const Eigen::MatrixXd& points, Eigen::VectorXd& means, Eigen::VectorXd* variances) const {
    model_.predict_many(points, means, variances);
    means = (offset_ + scale_ * means.array()).matrix();
    if (variances) *variances *= scale_ * scale_;
  }

  /// Joint draws in physical units, count x m.
  Eigen::MatrixXd sample_joint(const Eigen::MatrixXd& candidates, int count, std::uint64_t seed) const {
    Eigen::MatrixXd s = model_.sample_joint(candidates, count, seed);
    return (offset_ + scale_ * s.array()).matrix();
  }

 private:
  std::string name_;
  double offset_ = 0.0;
  double scale_ = 1.0;
  GPModel model_;
};

/// Mean/std z-scoring of raw targets; empty or constant data keep scale 1.
inline std::pair<double, double> standardization(const Eigen::VectorXd& y) {
  if (y.size() == 0) return {0.0, 1.0};
  const double mean = y.mean();
  if (y.size() == 1) return {mean, 1.0};
  const double var = (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

struct OutputFitSettings {
  FitOptions fit;
  /// When false the supplied (or default) hyperparameters are used as-is.
  bool optimize = true;
};

/// Standardize, fit and wrap one output.
inline OutputModel fit_output(const std::string& name, const OutputData& data, std::size_t dim,
                              const OutputFitSettings& settings) {
  if (data.inputs.rows() != data.targets.size())
    throw ContractViolation("output '" + name + "': input/target count mismatch");
  const auto [offset, scale] = standardization(data.targets);
  const Eigen::VectorXd z = ((data.targets.array() - offset) / scale).matrix();
  Eigen::MatrixXd inputs = data.inputs;
  if (inputs.rows() == 0) inputs.resize(0, static_cast<Eigen::Index>(dim));
  KernelHyperparameters h = settings.fit.warm_start ? *settings.fit.warm_start : default_hyperparameters(dim);
  try {
    GPModel base(h, inputs, z, 0.0);
    if (settings.optimize && base.num_observations() >= 2) {
      h = fit_hyperparameters(base, settings.fit);
      base = base.with_hyperparameters(h);
    }
    return OutputModel(name, offset, scale, std::move(base));
  } catch (const ConditioningError& e) {
    throw ConditioningError("output '" + name + "': " + e.what());
  } catch (const ContractViolation& e) {
    throw ContractViolation("output '" + name + "': " + e.what());
  }
}

/// Independent GPs, one per named output; no cross-output correlation.
class MultiOutputGP {
 public:
  MultiOutputGP() = default;
  explicit MultiOutputGP(std::vector<OutputModel> outputs) : outputs_(std::move(outputs)) {}

  const std::vector<OutputModel>& outputs() const { return outputs_; }
  std::size_t size() const { return outputs_.size(); }
  bool contains(const std::string& name) const {
    for (const auto& o : outputs_)
      if (o.name() == name) return true;
    return false;
  }

  const OutputModel& at(const std::string& name) const {
    for (const auto& o : outputs_)
      if (o.name() == name) return o;
    throw LookupError("no output named '" + name + "'");
  }

  template <typename V>
  std::map<std::string, Prediction> predict(const Eigen::MatrixBase<V>& x) const {
    std::map<std::string, Prediction> out;
    for (const auto& o : outputs_) {
      try {
        out[o.name()] = o.predict(x);
      } catch (const ContractViolation& e) {
        throw ContractViolation("output '" + o.name() + "': " + e.what());
      }
    }
    return out;
  }

  std::map<std::string, Prediction> predict(const std::vector<double>& x) const {
    return predict(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  }

 private:
  std::vector<OutputModel> outputs_;
};

}  // namespace bold::gp
