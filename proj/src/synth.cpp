#include "frn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "frn/rng.hpp"

namespace frn {
namespace {

Matrix<double> gaussian_matrix(Index rows, Index cols, double sigma, CounterRng& rng) {
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = sigma * rng.normal();
  return m;
}

std::vector<Index> random_permutation(Index n, CounterRng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

Matrix<double> permute_rows(const Matrix<double>& m, const std::vector<Index>& perm) {
  Matrix<double> out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

/// Items for each class from its latent signature. Item streams are keyed by
/// class index so that generation order does not matter.
Dataset make_items(const GenSpec& spec, const std::vector<Matrix<double>>& latents, bool permute) {
  Dataset ds;
  ds.r = spec.r;
  ds.d = spec.d;
  for (int c = 0; c < spec.n_classes; ++c) {
    CounterRng rng(spec.seed, 1 + static_cast<std::uint64_t>(c));
    Dataset::Class cls{spec.first_class_id + c, {}};
    for (int i = 0; i < spec.items_per_class; ++i) {
      Matrix<double> item = latents[static_cast<std::size_t>(c)];
      if (permute) item = permute_rows(item, random_permutation(spec.r, rng));
      if (spec.noise_sigma > 0.0) item += gaussian_matrix(spec.r, spec.d, spec.noise_sigma, rng);
      cls.items.push_back(std::move(item));
    }
    ds.classes.push_back(std::move(cls));
  }
  return ds;
}

/// Rows sorted lexicographically, so two permutation-equivalent signatures compare equal.
Matrix<double> canonical_rows(const Matrix<double>& m) {
  std::vector<Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(a, j) != m(b, j)) return m(a, j) < m(b, j);
    }
    return false;
  });
  return permute_rows(m, order);
}

}  // namespace

GenKind parse_gen_kind(const std::string& name) {
  if (name == "gaussian" || name == "gaussian-prototype") return GenKind::gaussian_prototype;
  if (name == "pose" || name == "pose-permutation") return GenKind::pose_permutation;
  if (name == "equal-mean" || name == "equal-mean-multiset") return GenKind::equal_mean_multiset;
  throw ConfigError("unknown dataset kind '" + name + "'");
}

const char* to_string(GenKind kind) {
  switch (kind) {
    case GenKind::gaussian_prototype:
      return "gaussian-prototype";
    case GenKind::pose_permutation:
      return "pose-permutation";
    case GenKind::equal_mean_multiset:
      return "equal-mean-multiset";
  }
  return "?";
}

void GenSpec::validate() const {
  if (n_classes < 1 || items_per_class < 1 || r < 1 || d < 1)
    throw ConfigError("generator: class, item, r and d counts must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ConfigError("generator: noise sigma must be finite and >= 0");
}

Dataset gen_gaussian(const GenSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, 0);
  std::vector<Matrix<double>> protos;
  for (int c = 0; c < spec.n_classes; ++c) protos.push_back(gaussian_matrix(spec.r, spec.d, 1.0, rng));
  return make_items(spec, protos, false);
}

Dataset gen_pose_permutation(const GenSpec& spec) {
  spec.validate();
  if (spec.r < 2) throw ConfigError("pose-permutation needs r >= 2");
  CounterRng rng(spec.seed, 0);
  std::vector<Matrix<double>> parts;
  for (int c = 0; c < spec.n_classes; ++c) parts.push_back(gaussian_matrix(spec.r, spec.d, 1.0, rng));
  return make_items(spec, parts, true);
}

std::vector<Matrix<double>> equal_mean_signatures(const GenSpec& spec) {
  spec.validate();
  if (spec.r < 2) throw ConfigError("equal-mean needs r >= 2");
  if (spec.n_classes < 2) throw ConfigError("equal-mean needs at least 2 classes");
  if (!(spec.delta > 0.0)) throw ConfigError("equal-mean needs delta > 0");
  const Index pairs = spec.r / 2;
  if (spec.d == 1) {
    // Only the sign of each pair's perturbation can vary.
    const double distinct = std::ldexp(1.0, static_cast<int>(std::min<Index>(pairs, 60)));
    if (static_cast<double>(spec.n_classes) > distinct)
      throw ConfigError("equal-mean: d = 1 and r = " + std::to_string(spec.r) + " allow only " +
                        std::to_string(static_cast<long long>(distinct)) + " distinct classes");
  }
  CounterRng rng(spec.seed, 0);
  const Matrix<double> base = gaussian_matrix(spec.r, spec.d, 1.0, rng);
  std::vector<Matrix<double>> out;
  for (int c = 0; c < spec.n_classes; ++c) {
    Matrix<double> sig = base;
    for (Index l = 0; l < pairs; ++l) {
      RowVector<double> v(spec.d);
      if (spec.d == 1) {
        v(0) = ((c >> l) & 1) ? 1.0 : -1.0;
      } else {
        do {
          for (Index j = 0; j < spec.d; ++j) v(j) = rng.normal();
        } while (v.norm() == 0.0);
        v.normalize();
      }
      sig.row(2 * l) += spec.delta * v;
      sig.row(2 * l + 1) -= spec.delta * v;
    }
    out.push_back(std::move(sig));
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    const Matrix<double> ca = canonical_rows(out[a]);
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if ((ca - canonical_rows(out[b])).cwiseAbs().maxCoeff() < 1e-12)
        throw ConfigError("equal-mean: classes " + std::to_string(a) + " and " + std::to_string(b) +
                          " coincide");
    }
  }
  return out;
}

Dataset gen_equal_mean(const GenSpec& spec) {
  return make_items(spec, equal_mean_signatures(spec), true);
}

Dataset generate(const GenSpec& spec) {
  switch (spec.kind) {
    case GenKind::gaussian_prototype:
      return gen_gaussian(spec);
    case GenKind::pose_permutation:
      return gen_pose_permutation(spec);
    case GenKind::equal_mean_multiset:
      return gen_equal_mean(spec);
  }
  throw ConfigError("unknown generator kind");
}

Dataset add_nuisance_channels(const Dataset& ds, Index extra, double sigma, std::uint64_t seed) {
  if (extra < 0) throw ConfigError("nuisance channel count must be >= 0");
  Dataset out;
  out.r = ds.r;
  out.d = ds.d + extra;
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    CounterRng rng(seed, c);
    Dataset::Class cls{ds.classes[c].id, {}};
    for (const auto& item : ds.classes[c].items) {
      Matrix<double> wide(ds.r, out.d);
      wide.leftCols(ds.d) = item;
      wide.rightCols(extra) = gaussian_matrix(ds.r, extra, sigma, rng);
      cls.items.push_back(std::move(wide));
    }
    out.classes.push_back(std::move(cls));
  }
  return out;
}

}  // namespace frn
