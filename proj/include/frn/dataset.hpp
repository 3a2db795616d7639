#pragma once

#include <cstddef>
#include <vector>

#include "frn/head.hpp"

namespace frn {

/// Labeled feature maps grouped by class. All items share (r, d).
struct Dataset {
  struct Class {
    int id = 0;
    std::vector<Matrix<double>> items;
  };

  Index r = 0;
  Index d = 0;
  std::vector<Class> classes;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_items() const;
  std::size_t min_items_per_class() const;

  /// Throws ShapeError/ArgumentError when an item breaks the shared shape or
  /// holds non-finite values.
  void validate() const;

  /// Copy holding classes [first, first + count).
  Dataset take_classes(std::size_t first, std::size_t count) const;
};

}  // namespace frn
