#pragma once

// Reference computations used only by tests. Nothing here calls into the
// library's solvers or heads.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "frn/linalg.hpp"
#include "frn/rng.hpp"

namespace oracle {

using frn::Index;
using Mat = Eigen::MatrixXd;

inline Mat random_matrix(Index rows, Index cols, frn::CounterRng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

/// Triple loop product.
inline Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index p = 0; p < a.cols(); ++p) c(i, j) += a(i, p) * b(p, j);
  return c;
}

/// Gauss-Jordan elimination with partial pivoting: solves A X = B.
inline Mat gauss_solve(Mat a, Mat b) {
  const Index n = a.rows();
  for (Index col = 0; col < n; ++col) {
    Index piv = col;
    for (Index i = col + 1; i < n; ++i)
      if (std::abs(a(i, col)) > std::abs(a(piv, col))) piv = i;
    a.row(col).swap(a.row(piv));
    b.row(col).swap(b.row(piv));
    const double p = a(col, col);
    a.row(col) /= p;
    b.row(col) /= p;
    for (Index i = 0; i < n; ++i) {
      if (i == col) continue;
      const double f = a(i, col);
      a.row(i) -= f * a.row(col);
      b.row(i) -= f * b.row(col);
    }
  }
  return b;
}

/// rho * Q (S^T S + lambda I)^-1 S^T S, one query row at a time through
/// Gauss-Jordan.
inline Mat ridge_reconstruct(const Mat& q, const Mat& s, double lambda, double rho) {
  Mat a = naive_matmul(s.transpose(), s);
  a.diagonal().array() += lambda;
  const Mat sts = naive_matmul(s.transpose(), s);
  Mat out(q.rows(), q.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    // Row i of Q (A^-1 S^T S) = (A^-1 S^T S)^T q_i^T = S^T S A^-1 q_i^T (A symmetric).
    const Mat w = gauss_solve(a, q.row(i).transpose());
    out.row(i) = rho * (sts * w).transpose();
  }
  return out;
}

/// Ridge objective ||Q - W S||^2 + lambda ||W||^2.
inline double ridge_objective(const Mat& q, const Mat& w, const Mat& s, double lambda) {
  return (q - w * s).squaredNorm() + lambda * w.squaredNorm();
}

/// Plain gradient descent on the ridge objective with step 1/L.
inline Mat ridge_gradient_descent(const Mat& q, const Mat& s, double lambda, int max_iters = 200000) {
  Eigen::JacobiSVD<Mat> svd(s);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  const double step = 1.0 / (2.0 * (smax * smax + lambda));
  Mat w = Mat::Zero(q.rows(), s.rows());
  for (int it = 0; it < max_iters; ++it) {
    const Mat grad = -2.0 * (q - w * s) * s.transpose() + 2.0 * lambda * w;
    w -= step * grad;
    if (grad.norm() < 1e-11) break;
  }
  return w;
}

/// Squared distance from q to its orthogonal projection on the row span of
/// `basis`, via SVD.
inline double svd_projection_residual(const Eigen::RowVectorXd& q, const Mat& basis) {
  Eigen::JacobiSVD<Mat> svd(basis, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-12 * std::max(1.0, sv(0))) ++rank;
  const Mat v = svd.matrixV().leftCols(rank);
  const Eigen::RowVectorXd proj = (q * v) * v.transpose();
  return (q - proj).squaredNorm();
}

/// Central differences of f at x along every coordinate of `param`.
inline Mat central_difference(const std::function<double()>& f, Mat& param, double h = 1e-4) {
  Mat g(param.rows(), param.cols());
  for (Index i = 0; i < param.rows(); ++i)
    for (Index j = 0; j < param.cols(); ++j) {
      const double keep = param(i, j);
      param(i, j) = keep + h;
      const double up = f();
      param(i, j) = keep - h;
      const double down = f();
      param(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

/// Largest elementwise relative error over components with magnitude above `floor`.
inline double max_relative_error(const Mat& analytic, const Mat& numeric, double floor = 1e-8) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.rows(); ++i)
    for (Index j = 0; j < analytic.cols(); ++j) {
      const double scale = std::max(std::abs(analytic(i, j)), std::abs(numeric(i, j)));
      if (scale <= floor) continue;
      worst = std::max(worst, std::abs(analytic(i, j) - numeric(i, j)) / scale);
    }
  return worst;
}

}  // namespace oracle
