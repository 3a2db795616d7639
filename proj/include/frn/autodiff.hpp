#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "frn/linalg.hpp"

/// Minimal reverse-mode differentiation over dense double matrices. A Tape
/// records every operation as a node; backward() walks the nodes in reverse
/// and accumulates adjoints into the leaves created with variable().
namespace frn::ad {

using Mat = Matrix<double>;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  const Mat& grad() const;
  double scalar() const { return value()(0, 0); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var variable(Mat value);
  Var constant(double v) { return constant(Mat::Constant(1, 1, v)); }
  Var variable(double v) { return variable(Mat::Constant(1, 1, v)); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
  void backward(Var loss);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the adjoint of node `id` if that node is on a gradient path.
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    n.grad += g;
  }

  Var record(Mat value, std::initializer_list<Var> parents, Backprop backprop);
  Var record(Mat value, std::span<const Var> parents, Backprop backprop);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
/// s * a with s a 1x1 node.
Var mul_scalar(Var a, Var s);
Var exp(Var a);
/// a + s * I with s a 1x1 node.
Var add_diag(Var a, Var s);
/// Adds the 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
/// X with A X = B for symmetric positive-definite A.
Var spd_solve(Var a, Var b);
/// b x 1 column: factor * squared norm of each r-row block.
Var block_sq_norm(Var a, Index r, double factor);
/// b x cols: mean of each r-row block.
Var block_mean(Var a, Index r);
Var hconcat(std::span<const Var> cols);
Var vconcat(std::span<const Var> blocks);
Var slice_rows(Var a, Index start, Index count);
Var row_softmax(Var a);
/// Unit-norm rows; zero rows stay zero.
Var row_normalize(Var a);
/// 1x1 sum of squared entries.
Var sum_squares(Var a);
/// Mean over rows of log-sum-exp(logits) - logits[label].
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace frn::ad
