#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frn/linalg.hpp"

namespace frn {

/// An r x d grid of d-channel feature vectors for one image.
template <typename Scalar>
struct FeatureMap {
  Matrix<Scalar> values;

  FeatureMap() = default;
  explicit FeatureMap(Matrix<Scalar> v) : values(std::move(v)) {
    if (values.rows() < 1 || values.cols() < 1)
      throw ShapeError("feature map must be at least 1x1, got " +
                       shape_string(values.rows(), values.cols()));
    if (!values.allFinite()) throw ArgumentError("feature map has non-finite entries");
  }

  Index r() const { return values.rows(); }
  Index d() const { return values.cols(); }
};

/// The k*r x d matrix of all support feature vectors for one class.
template <typename Scalar>
struct SupportPool {
  int class_id = 0;
  Index k = 0;
  Index r = 0;
  Matrix<Scalar> values;

  Index d() const { return values.cols(); }

  /// Row-concatenates k maps of identical shape.
  static SupportPool from_maps(int class_id, std::span<const FeatureMap<Scalar>> maps) {
    if (maps.empty()) throw ArgumentError("support pool needs at least one feature map");
    SupportPool pool;
    pool.class_id = class_id;
    pool.k = static_cast<Index>(maps.size());
    pool.r = maps.front().r();
    pool.values.resize(pool.k * pool.r, maps.front().d());
    for (Index i = 0; i < pool.k; ++i) {
      const auto& m = maps[static_cast<std::size_t>(i)].values;
      if (m.rows() != pool.r || m.cols() != pool.values.cols())
        throw ShapeError("support map " + std::to_string(i) + " is " +
                         shape_string(m.rows(), m.cols()) + ", expected " +
                         shape_string(pool.r, pool.values.cols()));
      pool.values.middleRows(i * pool.r, pool.r) = m;
    }
    return pool;
  }

  /// Wraps an already pooled matrix. rows must equal k*r.
  static SupportPool from_matrix(int class_id, Index k, Index r, Matrix<Scalar> values) {
    if (k < 1 || r < 1 || values.rows() != k * r)
      throw ShapeError("support pool rows " + std::to_string(values.rows()) + " != k*r = " +
                       std::to_string(k) + "*" + std::to_string(r));
    return SupportPool{class_id, k, r, std::move(values)};
  }

  template <typename Other>
  SupportPool<Other> cast() const {
    return SupportPool<Other>{class_id, k, r, values.template cast<Other>()};
  }
};

struct LearnableMask {
  bool alpha = true;
  bool beta = true;
  bool gamma = true;
};

inline constexpr double kMinLambda = 1e-8;

/// alpha and beta parameterize lambda and rho through exp(); gamma is the
/// softmax temperature.
struct HeadParams {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 1.0;
  LearnableMask learnable;

  double rho() const { return std::exp(beta); }

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta))
      throw ArgumentError("head params: alpha and beta must be finite");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
      throw ArgumentError("head params: gamma must be positive, got " + std::to_string(gamma));
  }
};

/// lambda = (k*r/d) * exp(alpha), floored at kMinLambda.
inline double effective_lambda(const HeadParams& params, Index k, Index r, Index d) {
  if (k < 1 || r < 1 || d < 1) throw ArgumentError("effective_lambda: k, r, d must be >= 1");
  const double raw = static_cast<double>(k * r) / static_cast<double>(d) * std::exp(params.alpha);
  return std::max(raw, kMinLambda);
}

/// direct inverts the kr x kr Gram matrix, woodbury the d x d one.
enum class Formulation { direct, woodbury };

enum class FormulationChoice { automatic, direct, woodbury };

/// Picks the cheaper closed form. d == k*r resolves to woodbury.
inline Formulation choose_formulation(Index k, Index r, Index d) {
  return d > k * r ? Formulation::direct : Formulation::woodbury;
}

inline Formulation resolve(FormulationChoice choice, Index k, Index r, Index d) {
  switch (choice) {
    case FormulationChoice::direct:
      return Formulation::direct;
    case FormulationChoice::woodbury:
      return Formulation::woodbury;
    case FormulationChoice::automatic:
      break;
  }
  return choose_formulation(k, r, d);
}

inline const char* to_string(Formulation f) {
  return f == Formulation::direct ? "direct" : "woodbury";
}

template <typename Scalar>
struct Reconstruction {
  Matrix<Scalar> q_bar;
  double sq_error = 0.0;
  int class_id = 0;
};

/// Reconstructions of b stacked queries against one class.
template <typename Scalar>
struct ReconstructionBatch {
  int class_id = 0;
  Index r = 0;
  Matrix<Scalar> q_bar;  // b*r x d
  std::vector<double> sq_error;

  Index size() const { return static_cast<Index>(sq_error.size()); }

  Reconstruction<Scalar> query(Index i) const {
    return {q_bar.middleRows(i * r, r), sq_error[static_cast<std::size_t>(i)], class_id};
  }
};

/// (1/r) * ||q - q_bar||_F^2, accumulated in double.
template <typename DA, typename DB>
double mean_sq_error(const Eigen::MatrixBase<DA>& q, const Eigen::MatrixBase<DB>& q_bar) {
  return (q.template cast<double>() - q_bar.template cast<double>()).squaredNorm() /
         static_cast<double>(q.rows());
}

/// Everything about one class's reconstruction that does not depend on the
/// query: the factorized system and, for woodbury, the d x d projector.
/// Queries are processed one r-row block at a time through identical code,
/// so a stacked batch and a lone query produce the same bits.
template <typename Scalar>
class ClassProjector {
 public:
  ClassProjector(const SupportPool<Scalar>& pool, const HeadParams& params,
                 FormulationChoice choice = FormulationChoice::automatic)
      : ClassProjector(pool, effective_lambda(params, pool.k, pool.r, pool.d()), params.rho(),
                       resolve(choice, pool.k, pool.r, pool.d())) {}

  ClassProjector(const SupportPool<Scalar>& pool, double lambda, double rho, Formulation f)
      : class_id_(pool.class_id), r_(pool.r), formulation_(f), rho_(static_cast<Scalar>(rho)) {
    if (pool.values.rows() != pool.k * pool.r)
      throw ShapeError("support pool rows != k*r");
    if (!(lambda > 0.0)) throw ArgumentError("lambda must be positive");
    const auto lam = static_cast<Scalar>(lambda);
    if (f == Formulation::direct) {
      Matrix<Scalar> a = gram(pool.values, GramMode::outer);
      a.diagonal().array() += lam;
      inverse_ = Cholesky<Scalar>(a).inverse();
      support_ = pool.values;
    } else {
      const Matrix<Scalar> g = gram(pool.values, GramMode::inner);
      Matrix<Scalar> a = g;
      a.diagonal().array() += lam;
      hat_ = Cholesky<Scalar>(a).solve(g);
    }
  }

  Formulation formulation() const { return formulation_; }
  Index d() const { return formulation_ == Formulation::direct ? support_.cols() : hat_.cols(); }

  /// Reconstructs one r x d query block.
  Matrix<Scalar> apply(const Matrix<Scalar>& q) const {
    if (q.cols() != d())
      throw ShapeError("query has " + std::to_string(q.cols()) + " channels, support has " +
                       std::to_string(d()));
    Matrix<Scalar> out;
    if (formulation_ == Formulation::direct) {
      // Left to right: (Q S^T) (S S^T + lambda I)^-1 S.
      Matrix<Scalar> coeff;
      coeff.noalias() = q * support_.transpose();
      Matrix<Scalar> weights;
      weights.noalias() = coeff * inverse_;
      out.noalias() = weights * support_;
    } else {
      out.noalias() = q * hat_;
    }
    out *= rho_;
    return out;
  }

  ReconstructionBatch<Scalar> reconstruct(const Matrix<Scalar>& queries) const {
    if (queries.rows() % r_ != 0)
      throw ShapeError("query batch rows " + std::to_string(queries.rows()) +
                       " not a multiple of r = " + std::to_string(r_));
    if (queries.cols() != d())
      throw ShapeError("query batch has " + std::to_string(queries.cols()) +
                       " channels, support has " + std::to_string(d()));
    const Index b = queries.rows() / r_;
    ReconstructionBatch<Scalar> out;
    out.class_id = class_id_;
    out.r = r_;
    out.q_bar.resize(queries.rows(), queries.cols());
    out.sq_error.resize(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) {
      const Matrix<Scalar> block = queries.middleRows(i * r_, r_);
      const Matrix<Scalar> rec = apply(block);
      out.sq_error[static_cast<std::size_t>(i)] = mean_sq_error(block, rec);
      out.q_bar.middleRows(i * r_, r_) = rec;
    }
    return out;
  }

 private:
  int class_id_;
  Index r_;
  Formulation formulation_;
  Scalar rho_;
  Matrix<Scalar> support_;
  Matrix<Scalar> inverse_;
  Matrix<Scalar> hat_;
};

/// rho * Q S^T (S S^T + lambda I)^-1 S for each r-row block of the batch.
template <typename Scalar>
ReconstructionBatch<Scalar> reconstruct_direct(const Matrix<Scalar>& queries,
                                               const SupportPool<Scalar>& pool,
                                               const HeadParams& params) {
  return ClassProjector<Scalar>(pool, params, FormulationChoice::direct).reconstruct(queries);
}

/// rho * Q (S^T S + lambda I)^-1 S^T S for each r-row block of the batch.
template <typename Scalar>
ReconstructionBatch<Scalar> reconstruct_woodbury(const Matrix<Scalar>& queries,
                                                 const SupportPool<Scalar>& pool,
                                                 const HeadParams& params) {
  return ClassProjector<Scalar>(pool, params, FormulationChoice::woodbury).reconstruct(queries);
}

/// Per-class logits and softmax probabilities for one query.
struct ClassScores {
  std::vector<double> distances;
  std::vector<double> logits;
  std::vector<double> probs;

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                    logits.begin());
  }
};

/// Softmax with the max logit subtracted first.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) return {};
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

/// logits = -scale * distance.
inline ClassScores scores_from_distances(std::vector<double> distances, double scale) {
  ClassScores s;
  s.logits.resize(distances.size());
  for (std::size_t c = 0; c < distances.size(); ++c) s.logits[c] = -scale * distances[c];
  s.probs = softmax(s.logits);
  s.distances = std::move(distances);
  return s;
}

template <typename Scalar>
void check_pools(std::span<const SupportPool<Scalar>> pools, Index d) {
  if (pools.empty()) throw ArgumentError("no support pools given");
  for (const auto& p : pools) {
    if (p.d() != d)
      throw ShapeError("support pool for class " + std::to_string(p.class_id) + " has " +
                       std::to_string(p.d()) + " channels, expected " + std::to_string(d));
  }
}

/// Scores every r-row query block in `queries` against every pool. Entry i of
/// the result belongs to query i; classes follow the order of `pools`.
template <typename Scalar>
std::vector<ClassScores> batch_class_scores(const Matrix<Scalar>& queries,
                                            std::span<const SupportPool<Scalar>> pools,
                                            const HeadParams& params,
                                            FormulationChoice choice = FormulationChoice::automatic) {
  params.validate();
  check_pools(pools, queries.cols());
  const Index r = pools.front().r;
  if (queries.rows() % r != 0) throw ShapeError("query batch rows not a multiple of r");
  const auto b = static_cast<std::size_t>(queries.rows() / r);
  std::vector<std::vector<double>> dist(b, std::vector<double>(pools.size()));
  for (std::size_t c = 0; c < pools.size(); ++c) {
    if (pools[c].r != r) throw ShapeError("support pools disagree on r");
    const auto rec = ClassProjector<Scalar>(pools[c], params, choice).reconstruct(queries);
    for (std::size_t i = 0; i < b; ++i) dist[i][c] = rec.sq_error[i];
  }
  std::vector<ClassScores> out;
  out.reserve(b);
  for (auto& row : dist) out.push_back(scores_from_distances(std::move(row), params.gamma));
  return out;
}

template <typename Scalar>
ClassScores class_scores(const FeatureMap<Scalar>& query, std::span<const SupportPool<Scalar>> pools,
                         const HeadParams& params,
                         FormulationChoice choice = FormulationChoice::automatic) {
  if (pools.empty()) throw ArgumentError("class_scores: empty pool list");
  if (query.r() != pools.front().r)
    throw ShapeError("query resolution " + std::to_string(query.r()) + " != support r " +
                     std::to_string(pools.front().r));
  return batch_class_scores(query.values, pools, params, choice).front();
}

}  // namespace frn
