#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "frn/head.hpp"

namespace frn {

struct LossValue {
  double value = 0.0;
  std::map<std::string, double> breakdown;
  /// Feature rows with zero norm that were mapped to the zero vector.
  std::size_t zero_rows = 0;

  static LossValue single(const std::string& name, double v) { return {v, {{name, v}}, 0}; }

  LossValue& operator+=(const LossValue& other) {
    value += other.value;
    for (const auto& [k, v] : other.breakdown) breakdown[k] += v;
    zero_rows += other.zero_rows;
    return *this;
  }
};

inline LossValue operator+(LossValue a, const LossValue& b) { return a += b; }

/// log(sum(exp(x))) with the max pulled out.
inline double log_sum_exp(std::span<const double> x) {
  double top = -INFINITY;
  for (double v : x) top = std::max(top, v);
  double total = 0.0;
  for (double v : x) total += std::exp(v - top);
  return top + std::log(total);
}

/// Mean negative log-likelihood of the true labels, computed from logits.
inline LossValue cross_entropy(std::span<const ClassScores> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ArgumentError("cross_entropy: " + std::to_string(scores.size()) + " predictions, " +
                        std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ArgumentError("cross_entropy: no predictions");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& logits = scores[i].logits;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.size())
      throw ArgumentError("cross_entropy: label " + std::to_string(labels[i]) +
                          " out of range for " + std::to_string(logits.size()) + " classes");
    total += log_sum_exp(logits) - logits[static_cast<std::size_t>(labels[i])];
  }
  return LossValue::single("cross_entropy", total / static_cast<double>(scores.size()));
}

/// Projects every row onto the unit sphere. Zero rows stay zero and are counted.
template <typename Scalar>
Matrix<double> row_normalize(const Matrix<Scalar>& m, std::size_t& zero_rows) {
  Matrix<double> out = m.template cast<double>();
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) {
      out.row(i) /= norm;
    } else {
      out.row(i).setZero();
      ++zero_rows;
    }
  }
  return out;
}

inline constexpr double kAuxScale = 0.03;

/// scale * sum over ordered class pairs i != j of ||S_i S_j^T||_F^2 on
/// row-normalized support pools.
template <typename Scalar>
LossValue aux_orthogonality(std::span<const SupportPool<Scalar>> pools, double scale = kAuxScale) {
  LossValue out;
  std::vector<Matrix<double>> unit;
  unit.reserve(pools.size());
  for (const auto& p : pools) unit.push_back(row_normalize(p.values, out.zero_rows));
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t j = 0; j < unit.size(); ++j) {
      if (i == j) continue;
      if (unit[i].cols() != unit[j].cols()) throw ShapeError("aux loss: pools differ in d");
      out.value += (unit[i] * unit[j].transpose()).squaredNorm();
    }
  }
  out.value *= scale;
  out.breakdown["aux_orthogonality"] = out.value;
  return out;
}

}  // namespace frn
