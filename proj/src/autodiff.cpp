#include "frn/autodiff.hpp"

#include <memory>
#include <string>

namespace frn::ad {

const Mat& Var::value() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Mat value) {
  Mat g = Mat::Zero(value.rows(), value.cols());
  nodes_.push_back(Node{std::move(value), std::move(g), true, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backprop backprop) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backprop));
}

Var Tape::record(Mat value, std::span<const Var> parents, Backprop backprop) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw ArgumentError("autodiff: mixing nodes from different tapes");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  Node n;
  n.needs_grad = needs;
  if (needs) {
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.backprop = std::move(backprop);
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ArgumentError("autodiff: loss from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("autodiff: loss must be 1x1");
  if (!std::isfinite(loss.scalar())) throw GradientError("loss", "non-finite loss value");
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].grad(0, 0) += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.needs_grad && n.backprop) n.backprop(*this, i);
  }
}

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string("autodiff ") + op + ": " + what);
}

std::string dims(Var v) { return shape_string(v.rows(), v.cols()); }

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", dims(a) + " * " + dims(b));
  Mat out;
  out.noalias() = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(a.id())) t.accumulate(a.id(), g * b.value().transpose());
    if (t.needs_grad(b.id())) t.accumulate(b.id(), a.value().transpose() * g);
  });
}

Var transpose(Var a) {
  return a.tape()->record(a.value().transpose(), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self).transpose());
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", dims(a) + " + " + dims(b));
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", dims(a) + " - " + dims(b));
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), -t.grad(self));
  });
}

Var scale(Var a, double c) {
  return a.tape()->record(a.value() * c, {a}, [a, c](Tape& t, std::size_t self) {
    t.accumulate(a.id(), c * t.grad(self));
  });
}

Var mul_scalar(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar", "scale is " + dims(s));
  return a.tape()->record(a.value() * s.scalar(), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), s.scalar() * g);
    if (t.needs_grad(s.id()))
      t.accumulate(s.id(), Mat::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

Var exp(Var a) {
  Mat out = a.value().array().exp().matrix();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var add_diag(Var a, Var s) {
  require(a.rows() == a.cols(), "add_diag", "matrix is " + dims(a));
  require(s.rows() == 1 && s.cols() == 1, "add_diag", "shift is " + dims(s));
  Mat out = a.value();
  out.diagonal().array() += s.scalar();
  return a.tape()->record(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), g);
    if (t.needs_grad(s.id())) t.accumulate(s.id(), Mat::Constant(1, 1, g.trace()));
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", dims(a) + " + row " + dims(row));
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), g);
    if (t.needs_grad(row.id())) t.accumulate(row.id(), g.colwise().sum());
  });
}

Var spd_solve(Var a, Var b) {
  require(a.rows() == a.cols() && a.rows() == b.rows(), "spd_solve", dims(a) + " \\ " + dims(b));
  auto chol = std::make_shared<Cholesky<double>>(a.value());
  Mat x = chol->solve(b.value());
  return a.tape()->record(std::move(x), {a, b}, [a, b, chol](Tape& t, std::size_t self) {
    // d(A^-1 B) = A^-1 dB - A^-1 dA A^-1 B; A is symmetric so A^-T = A^-1.
    const Mat gb = chol->solve(t.grad(self));
    if (t.needs_grad(a.id())) t.accumulate(a.id(), -gb * t.value(self).transpose());
    t.accumulate(b.id(), gb);
  });
}

Var block_sq_norm(Var a, Index r, double factor) {
  require(r >= 1 && a.rows() % r == 0, "block_sq_norm", "rows of " + dims(a) + " vs r=" + std::to_string(r));
  const Index b = a.rows() / r;
  Mat out(b, 1);
  for (Index i = 0; i < b; ++i) out(i, 0) = factor * a.value().middleRows(i * r, r).squaredNorm();
  return a.tape()->record(std::move(out), {a}, [a, r, factor](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat ga(a.rows(), a.cols());
    for (Index i = 0; i < g.rows(); ++i)
      ga.middleRows(i * r, r) = (2.0 * factor * g(i, 0)) * a.value().middleRows(i * r, r);
    t.accumulate(a.id(), ga);
  });
}

Var block_mean(Var a, Index r) {
  require(r >= 1 && a.rows() % r == 0, "block_mean", "rows of " + dims(a) + " vs r=" + std::to_string(r));
  const Index b = a.rows() / r;
  Mat out(b, a.cols());
  for (Index i = 0; i < b; ++i) out.row(i) = a.value().middleRows(i * r, r).colwise().mean();
  return a.tape()->record(std::move(out), {a}, [a, r](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Mat ga(a.rows(), a.cols());
    for (Index i = 0; i < g.rows(); ++i)
      ga.middleRows(i * r, r).rowwise() = g.row(i) / static_cast<double>(r);
    t.accumulate(a.id(), ga);
  });
}

Var hconcat(std::span<const Var> cols) {
  require(!cols.empty(), "hconcat", "no inputs");
  const Index rows = cols.front().rows();
  Index total = 0;
  for (const auto& c : cols) {
    require(c.rows() == rows, "hconcat", "row counts differ");
    total += c.cols();
  }
  Mat out(rows, total);
  Index at = 0;
  for (const auto& c : cols) {
    out.middleCols(at, c.cols()) = c.value();
    at += c.cols();
  }
  std::vector<Var> parents(cols.begin(), cols.end());
  return cols.front().tape()->record(std::move(out), cols, [parents](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Index at = 0;
    for (const auto& c : parents) {
      t.accumulate(c.id(), g.middleCols(at, c.cols()));
      at += c.cols();
    }
  });
}

Var vconcat(std::span<const Var> blocks) {
  require(!blocks.empty(), "vconcat", "no inputs");
  const Index cols = blocks.front().cols();
  Index total = 0;
  for (const auto& b : blocks) {
    require(b.cols() == cols, "vconcat", "column counts differ");
    total += b.rows();
  }
  Mat out(total, cols);
  Index at = 0;
  for (const auto& b : blocks) {
    out.middleRows(at, b.rows()) = b.value();
    at += b.rows();
  }
  std::vector<Var> parents(blocks.begin(), blocks.end());
  return blocks.front().tape()->record(std::move(out), blocks, [parents](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    Index at = 0;
    for (const auto& b : parents) {
      t.accumulate(b.id(), g.middleRows(at, b.rows()));
      at += b.rows();
    }
  });
}

Var slice_rows(Var a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows", "range out of bounds");
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [a, start, count](Tape& t, std::size_t self) {
                            Mat ga = Mat::Zero(a.rows(), a.cols());
                            ga.middleRows(start, count) = t.grad(self);
                            t.accumulate(a.id(), ga);
                          });
}

Var row_softmax(Var a) {
  Mat p(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double top = a.value().row(i).maxCoeff();
    p.row(i) = (a.value().row(i).array() - top).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return a.tape()->record(std::move(p), {a}, [a](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& p = t.value(self);
    Mat ga(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
      const double dot = g.row(i).dot(p.row(i));
      ga.row(i) = p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t.accumulate(a.id(), ga);
  });
}

Var row_normalize(Var a) {
  Mat y = a.value();
  Vector<double> norms(a.rows());
  for (Index i = 0; i < y.rows(); ++i) {
    norms(i) = y.row(i).norm();
    if (norms(i) > 0.0) {
      y.row(i) /= norms(i);
    } else {
      y.row(i).setZero();
    }
  }
  return a.tape()->record(std::move(y), {a}, [a, norms](Tape& t, std::size_t self) {
    const Mat& g = t.grad(self);
    const Mat& y = t.value(self);
    Mat ga = Mat::Zero(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      if (norms(i) > 0.0) ga.row(i) = (g.row(i) - y.row(i).dot(g.row(i)) * y.row(i)) / norms(i);
    }
    t.accumulate(a.id(), ga);
  });
}

Var sum_squares(Var a) {
  return a.tape()->record(Mat::Constant(1, 1, a.value().squaredNorm()), {a},
                          [a](Tape& t, std::size_t self) {
                            t.accumulate(a.id(), (2.0 * t.grad(self)(0, 0)) * a.value());
                          });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Mat& z = logits.value();
  require(static_cast<std::size_t>(z.rows()) == labels.size() && z.rows() > 0, "cross_entropy",
          std::to_string(labels.size()) + " labels for " + dims(logits));
  Mat p(z.rows(), z.cols());
  double total = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols())
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
    const double top = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - top).exp().matrix();
    const double sum = p.row(i).sum();
    p.row(i) /= sum;
    total += top + std::log(sum) - z(i, y);
  }
  const auto n = static_cast<double>(z.rows());
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape()->record(Mat::Constant(1, 1, total / n), {logits},
                               [logits, p, ys, n](Tape& t, std::size_t self) {
                                 Mat g = p;
                                 for (std::size_t i = 0; i < ys.size(); ++i)
                                   g(static_cast<Index>(i), ys[i]) -= 1.0;
                                 t.accumulate(logits.id(), (t.grad(self)(0, 0) / n) * g);
                               });
}

}  // namespace frn::ad
