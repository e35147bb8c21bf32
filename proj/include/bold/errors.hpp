#pragma once

#include <stdexcept>
#include <string>

namespace bold {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (dimension mismatch, NaN input, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Cholesky failed even after the maximum jitter was added.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation not allowed in the current lifecycle state.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

class NoFeasibleCandidates : public Error {
 public:
  using Error::Error;
};

/// Measurement payload failed validation (fraction outside [0,1], wrong repetition count, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class NoFeasibleIncumbent : public Error {
 public:
  using Error::Error;
};

/// Raised by ask() once the Stage-2 trust region has collapsed.
class CampaignComplete : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpace : public Error {
 public:
  using Error::Error;
};

/// map_estimate found no candidate meeting the feasibility level.
class ThresholdTooStrict : public Error {
 public:
  ThresholdTooStrict(const std::string& what, double best_level)
      : Error(what), best_achievable_level(best_level) {}
  double best_achievable_level;
};

/// An ask() while a batch is still outstanding, or a contended write.
class Conflict : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::size_t byte_offset)
      : Error(what), offset(byte_offset) {}
  std::size_t offset;
};

class MigrationError : public Error {
 public:
  using Error::Error;
};

class PresetError : public Error {
 public:
  using Error::Error;
};

/// An evaluator failure inside the autonomous loop, tagged with the evaluation index.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, int evaluation_index) : Error(what), evaluation(evaluation_index) {}
  int evaluation;
};

}  // namespace bold
