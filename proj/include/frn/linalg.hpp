#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "frn/errors.hpp"

namespace frn {

using Index = Eigen::Index;

/// Dense row-major storage used for every feature map, support pool and
/// projector in the library.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// A stack of equally shaped matrices in one contiguous buffer, batch outermost.
template <typename Scalar>
class BatchedMatrix {
 public:
  using MapType = Eigen::Map<Matrix<Scalar>>;
  using ConstMapType = Eigen::Map<const Matrix<Scalar>>;

  BatchedMatrix() = default;
  BatchedMatrix(Index batch, Index rows, Index cols)
      : batch_(batch), rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(batch * rows * cols), Scalar(0)) {}

  template <typename Derived>
  static BatchedMatrix stack(const std::vector<Derived>& items) {
    if (items.empty()) return {};
    BatchedMatrix out(static_cast<Index>(items.size()), items.front().rows(), items.front().cols());
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].rows() != out.rows_ || items[i].cols() != out.cols_)
        throw ShapeError("batch element " + std::to_string(i) + " is " +
                         shape_string(items[i].rows(), items[i].cols()) + ", expected " +
                         shape_string(out.rows_, out.cols_));
      out[static_cast<Index>(i)] = items[i];
    }
    return out;
  }

  Index batch() const { return batch_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  MapType operator[](Index i) { return MapType(data_.data() + i * rows_ * cols_, rows_, cols_); }
  ConstMapType operator[](Index i) const {
    return ConstMapType(data_.data() + i * rows_ * cols_, rows_, cols_);
  }

  const std::vector<Scalar>& data() const { return data_; }

 private:
  Index batch_ = 0;
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Scalar> data_;
};

template <typename DA, typename DB>
auto matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " times " +
                     shape_string(b.rows(), b.cols()));
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

enum class GramMode { outer, inner };

/// outer: S*S^T, inner: S^T*S. The result is symmetrized so that
/// g(i, j) == g(j, i) holds bitwise.
template <typename Derived>
auto gram(const Eigen::MatrixBase<Derived>& s, GramMode mode) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> g;
  if (mode == GramMode::outer) {
    g.noalias() = s * s.transpose();
  } else {
    g.noalias() = s.transpose() * s;
  }
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = i + 1; j < g.cols(); ++j) {
      const Scalar avg = (g(i, j) + g(j, i)) / Scalar(2);
      g(i, j) = avg;
      g(j, i) = avg;
    }
  }
  return g;
}

/// Cholesky factorization of a symmetric positive-definite matrix.
template <typename Scalar>
class Cholesky {
 public:
  template <typename Derived>
  explicit Cholesky(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols())
      throw ShapeError("cholesky: matrix is " + shape_string(a.rows(), a.cols()));
    const double scale = static_cast<double>(a.template lpNorm<Eigen::Infinity>());
    if (!std::isfinite(scale)) throw NumericalError("cholesky: non-finite matrix entries");
    const double asym = static_cast<double>((a - a.transpose()).template lpNorm<Eigen::Infinity>());
    if (!(asym <= 1e-6 * scale))
      throw ArgumentError("cholesky: matrix not symmetric (max |a-a^T| = " + std::to_string(asym) +
                          ")");
    llt_.compute(a);
    const auto l = llt_.matrixLLT();
    bool ok = llt_.info() == Eigen::Success;
    for (Index i = 0; ok && i < l.rows(); ++i) ok = std::isfinite(l(i, i)) && l(i, i) > Scalar(0);
    if (!ok) locate_pivot(a);
  }

  Index size() const { return llt_.rows(); }

  template <typename Derived>
  Matrix<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    if (b.rows() != size())
      throw ShapeError("spd_solve: system is " + shape_string(size(), size()) + ", rhs is " +
                       shape_string(b.rows(), b.cols()));
    return llt_.solve(b);
  }

  Matrix<Scalar> inverse() const {
    return llt_.solve(Matrix<Scalar>::Identity(size(), size()));
  }

 private:
  // Plain left-looking factorization, only used to report which pivot failed.
  template <typename Derived>
  [[noreturn]] static void locate_pivot(const Eigen::MatrixBase<Derived>& a) {
    const Index n = a.rows();
    Matrix<double> l = Matrix<double>::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      double diag = static_cast<double>(a(j, j));
      for (Index p = 0; p < j; ++p) diag -= l(j, p) * l(j, p);
      if (!(diag > 0.0) || !std::isfinite(diag)) throw PivotError(j, diag);
      l(j, j) = std::sqrt(diag);
      for (Index i = j + 1; i < n; ++i) {
        double v = static_cast<double>(a(i, j));
        for (Index p = 0; p < j; ++p) v -= l(i, p) * l(j, p);
        l(i, j) = v / l(j, j);
      }
    }
    // Double precision succeeded where the working precision did not.
    throw PivotError(n - 1, 0.0);
  }

  Eigen::LLT<Matrix<Scalar>> llt_;
};

/// Solves A X = B for symmetric positive-definite A.
template <typename DA, typename DB>
auto spd_solve(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.rows() != b.rows())
    throw ShapeError("spd_solve: " + shape_string(a.rows(), a.cols()) + " against rhs " +
                     shape_string(b.rows(), b.cols()));
  return Cholesky<Scalar>(a).solve(b);
}

}  // namespace frn
