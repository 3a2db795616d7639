#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "frn/head.hpp"

namespace frn {

/// Average of each r-row block: b*r x d -> b x d.
template <typename Scalar>
Matrix<Scalar> block_mean(const Matrix<Scalar>& m, Index r) {
  if (r < 1 || m.rows() % r != 0) throw ShapeError("block_mean: rows not a multiple of r");
  const Index b = m.rows() / r;
  Matrix<Scalar> out(b, m.cols());
  for (Index i = 0; i < b; ++i) out.row(i) = m.middleRows(i * r, r).colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Prototypical network on average-pooled features.

template <typename Scalar>
std::vector<ClassScores> batch_proto_scores(const Matrix<Scalar>& queries, Index r,
                                            std::span<const SupportPool<Scalar>> pools,
                                            double gamma) {
  check_pools(pools, queries.cols());
  const Matrix<Scalar> q = block_mean(queries, r);
  const auto d = static_cast<double>(queries.cols());
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(q.rows()),
                                        std::vector<double>(pools.size()));
  for (std::size_t c = 0; c < pools.size(); ++c) {
    const RowVector<double> proto =
        block_mean(pools[c].values, pools[c].r).template cast<double>().colwise().mean();
    for (Index i = 0; i < q.rows(); ++i)
      dist[static_cast<std::size_t>(i)][c] = (q.row(i).template cast<double>() - proto).squaredNorm();
  }
  std::vector<ClassScores> out;
  for (auto& row : dist) out.push_back(scores_from_distances(std::move(row), gamma / d));
  return out;
}

template <typename Scalar>
ClassScores proto_scores(const FeatureMap<Scalar>& query, std::span<const SupportPool<Scalar>> pools,
                         double gamma) {
  return batch_proto_scores(query.values, query.r(), pools, gamma).front();
}

// ---------------------------------------------------------------------------
// Subspace projection (DSN) on average-pooled features.

struct ProjectionConfig {
  double lambda_fixed = 0.01;
  bool include_origin = true;

  void validate() const {
    if (!(lambda_fixed > 0.0)) throw ArgumentError("dsn: lambda_fixed must be positive");
    if (!include_origin)
      throw ConfigError("dsn: only the origin-anchored subspace is implemented");
  }
};

/// Squared ridge-projection residual of each pooled query onto the span of the
/// k pooled supports of every class.
template <typename Scalar>
std::vector<std::vector<double>> dsn_distances(const Matrix<Scalar>& queries, Index r,
                                               std::span<const SupportPool<Scalar>> pools,
                                               const ProjectionConfig& cfg) {
  cfg.validate();
  check_pools(pools, queries.cols());
  const Matrix<Scalar> q = block_mean(queries, r);
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(q.rows()),
                                        std::vector<double>(pools.size()));
  for (std::size_t c = 0; c < pools.size(); ++c) {
    auto pooled = SupportPool<Scalar>::from_matrix(pools[c].class_id, pools[c].k, 1,
                                                   block_mean(pools[c].values, pools[c].r));
    const ClassProjector<Scalar> proj(pooled, cfg.lambda_fixed, 1.0,
                                      choose_formulation(pooled.k, 1, pooled.d()));
    const auto rec = proj.reconstruct(q);
    for (std::size_t i = 0; i < rec.sq_error.size(); ++i) dist[i][c] = rec.sq_error[i];
  }
  return dist;
}

template <typename Scalar>
std::vector<ClassScores> batch_dsn_scores(const Matrix<Scalar>& queries, Index r,
                                          std::span<const SupportPool<Scalar>> pools,
                                          const ProjectionConfig& cfg, double gamma) {
  const auto d = static_cast<double>(queries.cols());
  std::vector<ClassScores> out;
  for (auto& row : dsn_distances(queries, r, pools, cfg))
    out.push_back(scores_from_distances(std::move(row), gamma / d));
  return out;
}

template <typename Scalar>
ClassScores dsn_scores(const FeatureMap<Scalar>& query, std::span<const SupportPool<Scalar>> pools,
                       const ProjectionConfig& cfg, double gamma) {
  return batch_dsn_scores(query.values, query.r(), pools, cfg, gamma).front();
}

// ---------------------------------------------------------------------------
// Simplified CrossTransformer: attention over support locations in separate
// key and value spaces.

struct CtxParams {
  Matrix<double> key_proj;    // d x d_k
  Matrix<double> value_proj;  // d x d_v
  bool identity_mode = false;

  static CtxParams identity(Index d) {
    return {Matrix<double>::Identity(d, d), Matrix<double>::Identity(d, d), true};
  }

  void validate(Index d) const {
    if (identity_mode) return;
    if (key_proj.rows() != d || value_proj.rows() != d)
      throw ShapeError("ctx: projections must have " + std::to_string(d) + " rows");
    if (key_proj.cols() < 1 || value_proj.cols() < 1)
      throw ShapeError("ctx: empty projection");
  }

  Index key_dim(Index d) const { return identity_mode ? d : key_proj.cols(); }
};

/// Row-wise softmax, max-subtracted per row.
template <typename Scalar>
Matrix<Scalar> row_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar top = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - top).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
struct CtxReconstruction {
  Matrix<Scalar> attention;   // rows(Q) x k*r
  Matrix<Scalar> projected;   // Q_2
  Matrix<Scalar> q_bar;       // attention * S_2
};

template <typename Scalar>
CtxReconstruction<Scalar> ctx_reconstruct(const Matrix<Scalar>& queries,
                                          const SupportPool<Scalar>& pool, const CtxParams& p) {
  const Index d = queries.cols();
  p.validate(d);
  if (pool.d() != d) throw ShapeError("ctx: support channels differ from query channels");
  CtxReconstruction<Scalar> out;
  Matrix<Scalar> q1, s1, s2;
  if (p.identity_mode) {
    q1 = queries;
    s1 = pool.values;
    out.projected = queries;
    s2 = pool.values;
  } else {
    const Matrix<Scalar> wk = p.key_proj.cast<Scalar>();
    const Matrix<Scalar> wv = p.value_proj.cast<Scalar>();
    q1 = queries * wk;
    s1 = pool.values * wk;
    out.projected = queries * wv;
    s2 = pool.values * wv;
  }
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(p.key_dim(d)));
  Matrix<Scalar> logits = (q1 * s1.transpose()) * scale;
  out.attention = row_softmax(logits);
  out.q_bar = out.attention * s2;
  return out;
}

template <typename Scalar>
std::vector<ClassScores> batch_ctx_scores(const Matrix<Scalar>& queries, Index r,
                                          std::span<const SupportPool<Scalar>> pools,
                                          const CtxParams& params, double gamma) {
  check_pools(pools, queries.cols());
  if (queries.rows() % r != 0) throw ShapeError("ctx: query rows not a multiple of r");
  const auto b = static_cast<std::size_t>(queries.rows() / r);
  const auto d = static_cast<double>(queries.cols());
  std::vector<std::vector<double>> dist(b, std::vector<double>(pools.size()));
  for (std::size_t c = 0; c < pools.size(); ++c) {
    const auto rec = ctx_reconstruct(queries, pools[c], params);
    for (std::size_t i = 0; i < b; ++i) {
      const auto rows = static_cast<Index>(i) * r;
      dist[i][c] = mean_sq_error(rec.projected.middleRows(rows, r), rec.q_bar.middleRows(rows, r));
    }
  }
  std::vector<ClassScores> out;
  for (auto& row : dist) out.push_back(scores_from_distances(std::move(row), gamma / d));
  return out;
}

template <typename Scalar>
ClassScores ctx_scores(const FeatureMap<Scalar>& query, std::span<const SupportPool<Scalar>> pools,
                       const CtxParams& params, double gamma) {
  return batch_ctx_scores(query.values, query.r(), pools, params, gamma).front();
}

}  // namespace frn
