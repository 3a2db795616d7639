#include "frn/dataset.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

namespace frn {

std::size_t Dataset::num_items() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.items.size();
  return n;
}

std::size_t Dataset::min_items_per_class() const {
  if (classes.empty()) return 0;
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : classes) n = std::min(n, c.items.size());
  return n;
}

void Dataset::validate() const {
  if (r < 1 || d < 1) throw ShapeError("dataset: r and d must be >= 1");
  std::set<int> ids;
  for (const auto& c : classes) {
    if (!ids.insert(c.id).second)
      throw ArgumentError("dataset: duplicate class id " + std::to_string(c.id));
    for (std::size_t i = 0; i < c.items.size(); ++i) {
      const auto& m = c.items[i];
      if (m.rows() != r || m.cols() != d)
        throw ShapeError("dataset: class " + std::to_string(c.id) + " item " + std::to_string(i) +
                         " is " + shape_string(m.rows(), m.cols()) + ", expected " +
                         shape_string(r, d));
      if (!m.allFinite())
        throw ArgumentError("dataset: class " + std::to_string(c.id) + " item " +
                            std::to_string(i) + " has non-finite values");
    }
  }
}

Dataset Dataset::take_classes(std::size_t first, std::size_t count) const {
  if (first + count > classes.size()) throw ArgumentError("dataset: class range out of bounds");
  Dataset out;
  out.r = r;
  out.d = d;
  out.classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(first),
                     classes.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

}  // namespace frn
