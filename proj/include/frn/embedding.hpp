#pragma once

#include "frn/dataset.hpp"
#include "frn/linalg.hpp"

namespace frn {

/// Per-location affine map standing in for a backbone: every row x of a raw
/// r x d_in input becomes scale * (x W + b).
struct EmbeddingModel {
  Matrix<double> weight;  // d_in x d
  RowVector<double> bias;  // 1 x d
  double output_scale = 1.0;

  static EmbeddingModel identity(Index d) {
    return {Matrix<double>::Identity(d, d), RowVector<double>::Zero(d), 1.0};
  }

  Index input_dim() const { return weight.rows(); }
  Index output_dim() const { return weight.cols(); }

  Matrix<double> apply(const Matrix<double>& raw) const {
    if (raw.cols() != weight.rows())
      throw ShapeError("embedding expects " + std::to_string(weight.rows()) + " input channels, got " +
                       std::to_string(raw.cols()));
    Matrix<double> out = raw * weight;
    out.rowwise() += bias;
    if (output_scale != 1.0) out *= output_scale;
    return out;
  }

  Dataset apply(const Dataset& ds) const {
    Dataset out;
    out.r = ds.r;
    out.d = output_dim();
    out.classes.reserve(ds.classes.size());
    for (const auto& c : ds.classes) {
      Dataset::Class e{c.id, {}};
      e.items.reserve(c.items.size());
      for (const auto& item : c.items) e.items.push_back(apply(item));
      out.classes.push_back(std::move(e));
    }
    return out;
  }
};

}  // namespace frn
