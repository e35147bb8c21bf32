#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bold/acquisition/candidates.hpp"
#include "bold/acquisition/utility.hpp"
#include "bold/gp/multi_output.hpp"
#include "bold/random.hpp"

namespace bold::acquisition {

struct BatchSelection {
  std::vector<std::size_t> indices;  // into the feasible candidate list
  std::vector<bool> fallback;        // true when the draw had no sampled-feasible point
};

/// Seed of the joint draw for one output. Objective and constraint streams are
/// disjoint so the same name cannot collide across the two models.
inline std::uint64_t draw_seed(std::uint64_t seed, bool constraint, const std::string& name) {
  return derive_seed(seed, (constraint ? "ts-con:" : "ts-obj:") + name);
}

inline double objective_weight(const UtilityWeights& w, std::string_view name) {
  if (name == objective::kDicingWidth) return w.w_width;
  if (name == objective::kModWidth) return w.w_mod;
  if (name == objective::kBurr) return w.w_burr;
  if (name == objective::kFrontStrength) return w.w_front;
  if (name == objective::kBackStrength) return w.w_back;
  return 0.0;
}

/// Utility of every candidate for one row of sampled objective values.
/// Objectives with zero weight are not required.
inline Eigen::VectorXd sampled_utility(const std::map<std::string, Eigen::RowVectorXd>& objectives,
                                       std::span<const double> throughput, const UtilityWeights& w) {
  const auto m = static_cast<Eigen::Index>(throughput.size());
  const auto get = [&](std::string_view name) -> const Eigen::RowVectorXd* {
    auto it = objectives.find(std::string(name));
    if (it != objectives.end()) return &it->second;
    if (objective_weight(w, name) != 0.0) throw ContractViolation("missing objective model '" + std::string(name) + "'");
    return nullptr;
  };
  const auto* width = get(objective::kDicingWidth);
  const auto* mod = get(objective::kModWidth);
  const auto* burr = get(objective::kBurr);
  const auto* front = get(objective::kFrontStrength);
  const auto* back = get(objective::kBackStrength);
  Eigen::VectorXd u(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    ObjectiveValues v;
    if (width) v.dicing_width = (*width)[i];
    if (mod) v.mod_width = (*mod)[i];
    if (burr) v.burr = (*burr)[i];
    if (front) v.front_strength = (*front)[i];
    if (back) v.back_strength = (*back)[i];
    if (!width) v.dicing_width = w.width_target;
    if (!mod) v.mod_width = w.mod_target;
    u[i] = utility(v, throughput[static_cast<std::size_t>(i)], w);
  }
  return u;
}

/// Batch constrained Thompson sampling over a finite, machine-feasible set.
///
/// Every objective output with non-zero weight and every constraint output is
/// sampled jointly on `feasible` (2q rows per output, seed from draw_seed).
/// Draw j uses row j; if its pick repeats an earlier pick it is re-drawn once
/// with row q + j and the result kept regardless.
inline BatchSelection select_batch(const gp::MultiOutputGP& objectives, const gp::MultiOutputGP& constraints,
                                   const std::vector<Point>& feasible, int q, const UtilityWeights& w,
                                   std::span<const double> throughput, std::uint64_t seed) {
  if (feasible.empty()) throw NoFeasibleCandidates("select_batch: feasible candidate set is empty");
  if (q < 1) throw ContractViolation("select_batch: q must be >= 1");
  if (throughput.size() != feasible.size()) throw ContractViolation("select_batch: throughput size mismatch");
  const std::size_t dim = feasible.front().size();
  const Eigen::MatrixXd cand = to_matrix(feasible, dim);
  const int rows = 2 * q;

  std::map<std::string, Eigen::MatrixXd> obj_draws;
  for (const auto& o : objectives.outputs()) {
    if (objective_weight(w, o.name()) == 0.0) continue;
    obj_draws[o.name()] = o.sample_joint(cand, rows, draw_seed(seed, false, o.name()));
  }
  std::vector<Eigen::MatrixXd> con_draws;
  for (const auto& c : constraints.outputs()) con_draws.push_back(c.sample_joint(cand, rows, draw_seed(seed, true, c.name())));

  const auto m = static_cast<Eigen::Index>(feasible.size());
  const auto pick = [&](int row, bool& fell_back) -> std::size_t {
    std::map<std::string, Eigen::RowVectorXd> objs;
    for (const auto& [name, d] : obj_draws) objs[name] = d.row(row);
    const Eigen::VectorXd u = sampled_utility(objs, throughput, w);
    Eigen::Index best = -1;
    Eigen::Index least = 0;
    double least_violation = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      double violation = 0.0;
      for (const auto& d : con_draws) violation += std::max(0.0, d(row, i));
      if (violation == 0.0) {
        if (best < 0 || u[i] > u[best]) best = i;
      } else if (violation < least_violation) {
        least_violation = violation;
        least = i;
      }
    }
    fell_back = best < 0;
    return static_cast<std::size_t>(fell_back ? least : best);
  };

  BatchSelection out;
  std::set<std::size_t> chosen;
  for (int j = 0; j < q; ++j) {
    bool fell_back = false;
    std::size_t idx = pick(j, fell_back);
    if (chosen.count(idx)) idx = pick(q + j, fell_back);
    chosen.insert(idx);
    out.indices.push_back(idx);
    out.fallback.push_back(fell_back);
  }
  return out;
}

}  // namespace bold::acquisition
