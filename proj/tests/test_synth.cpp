#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "frn/episode.hpp"
#include "frn/synth.hpp"
#include "oracles.hpp"

using frn::Dataset;
using frn::GenKind;
using frn::GenSpec;
using frn::Index;
using frn::Matrix;

namespace {

GenSpec spec_of(GenKind kind, double sigma, int classes = 10, std::uint64_t seed = 3) {
  GenSpec s;
  s.kind = kind;
  s.noise_sigma = sigma;
  s.n_classes = classes;
  s.items_per_class = 20;
  s.r = 8;
  s.d = 16;
  s.seed = seed;
  return s;
}

frn::HeadParams frn_params(double gamma) {
  frn::HeadParams p;
  p.gamma = gamma;
  return p;
}

frn::EvalOptions opts(std::size_t trials = 300, std::uint64_t seed = 5) { return {5, 1, 16, trials, seed, 1}; }

Matrix<double> sorted_rows(Matrix<double> m) {
  std::vector<Eigen::RowVectorXd> rows;
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(m.row(i));
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  for (Index i = 0; i < m.rows(); ++i) m.row(i) = rows[static_cast<std::size_t>(i)];
  return m;
}

/// Location-sensitive nearest prototype on flattened maps.
class FlattenedHead : public frn::EpisodeHead {
 public:
  std::string name() const override { return "flattened"; }
  std::vector<frn::ClassScores> score(const frn::Episode& ep) const override {
    std::vector<frn::ClassScores> out;
    for (std::size_t q = 0; q < ep.num_queries(); ++q) {
      const Matrix<double> query = ep.query(q).values;
      std::vector<double> dist;
      for (const auto& pool : ep.support) {
        Matrix<double> proto = Matrix<double>::Zero(pool.r, pool.d());
        for (Index s = 0; s < pool.k; ++s) proto += pool.values.middleRows(s * pool.r, pool.r);
        proto /= static_cast<double>(pool.k);
        dist.push_back((query - proto).squaredNorm());
      }
      out.push_back(frn::scores_from_distances(dist, 1.0));
    }
    return out;
  }
};

}  // namespace

TEST_CASE("kinds parse by short and long name") {
  CHECK(frn::parse_gen_kind("gaussian") == GenKind::gaussian_prototype);
  CHECK(frn::parse_gen_kind("pose-permutation") == GenKind::pose_permutation);
  CHECK(frn::parse_gen_kind("equal-mean") == GenKind::equal_mean_multiset);
  CHECK_THROWS_AS(frn::parse_gen_kind("blobs"), frn::ConfigError);
}

TEST_CASE("generation is deterministic given the seed") {
  for (auto kind : {GenKind::gaussian_prototype, GenKind::pose_permutation, GenKind::equal_mean_multiset}) {
    const Dataset a = frn::generate(spec_of(kind, 0.1));
    const Dataset b = frn::generate(spec_of(kind, 0.1));
    const Dataset c = frn::generate(spec_of(kind, 0.1, 10, 4));
    a.validate();
    CHECK(a.num_classes() == 10);
    CHECK(a.min_items_per_class() == 20);
    bool same = true, differs = false;
    for (std::size_t k = 0; k < a.classes.size(); ++k)
      for (std::size_t i = 0; i < a.classes[k].items.size(); ++i) {
        same = same && a.classes[k].items[i] == b.classes[k].items[i];
        differs = differs || a.classes[k].items[i] != c.classes[k].items[i];
      }
    CHECK(same);
    CHECK(differs);
  }
}

TEST_CASE("invalid specs are rejected") {
  auto s = spec_of(GenKind::gaussian_prototype, -1.0);
  CHECK_THROWS_AS(frn::generate(s), frn::ConfigError);
  s = spec_of(GenKind::pose_permutation, 0.1);
  s.r = 1;
  CHECK_THROWS_AS(frn::generate(s), frn::ConfigError);
  s = spec_of(GenKind::equal_mean_multiset, 0.1, 1);
  CHECK_THROWS_AS(frn::generate(s), frn::ConfigError);
}

TEST_CASE("noiseless gaussian classes have identical items") {
  const Dataset ds = frn::gen_gaussian(spec_of(GenKind::gaussian_prototype, 0.0));
  for (const auto& c : ds.classes)
    for (const auto& item : c.items) CHECK(item == c.items.front());
}

TEST_CASE("noiseless gaussian data is solved by every head") {
  const Dataset ds = frn::gen_gaussian(spec_of(GenKind::gaussian_prototype, 0.0));
  CHECK(frn::evaluate(ds, frn::FrnHead(frn_params(1.0 / 16)), opts()).accuracy_mean == 1.0);
  CHECK(frn::evaluate(ds, frn::ProtoHead(1.0 / 16), opts()).accuracy_mean == 1.0);
  CHECK(frn::evaluate(ds, frn::DsnHead(frn::ProjectionConfig{}, 1.0 / 16), opts()).accuracy_mean == 1.0);
}

TEST_CASE("noise comparable to the prototype spacing gives intermediate accuracy") {
  const Dataset ds = frn::gen_gaussian(spec_of(GenKind::gaussian_prototype, 1.5));
  const auto report = frn::evaluate(ds, frn::FrnHead(frn_params(1.0 / 16)), opts());
  CHECK(report.accuracy_mean > 0.2 + 3 * report.ci95_halfwidth);
  CHECK(report.accuracy_mean < 1.0 - 3 * report.ci95_halfwidth);
}

TEST_CASE("pose items are row permutations of the class signature") {
  const Dataset ds = frn::gen_pose_permutation(spec_of(GenKind::pose_permutation, 0.0));
  std::size_t reordered = 0;
  for (const auto& c : ds.classes) {
    const Matrix<double> ref = sorted_rows(c.items.front());
    for (const auto& item : c.items) {
      CHECK(sorted_rows(item) == ref);
      reordered += item != c.items.front() ? 1 : 0;
    }
  }
  CHECK(reordered > 0);
}

TEST_CASE("frn errors between pose items do not depend on the permutation") {
  const Dataset ds = frn::gen_pose_permutation(spec_of(GenKind::pose_permutation, 0.0));
  const auto& items = ds.classes[0].items;
  const auto other = frn::SupportPool<double>::from_matrix(1, 1, 8, ds.classes[1].items[0]);
  const frn::FeatureMap<double> q(ds.classes[1].items[3]);
  std::vector<double> errs;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto pool = frn::SupportPool<double>::from_matrix(0, 1, 8, items[i]);
    const std::vector<frn::SupportPool<double>> pools{pool, other};
    errs.push_back(frn::class_scores<double>(q, pools, frn_params(1.0)).distances[0]);
  }
  for (double e : errs) CHECK(e == doctest::Approx(errs.front()).epsilon(1e-10));
}

TEST_CASE("pose data defeats location-sensitive matching but not frn or pooling") {
  const Dataset ds = frn::gen_pose_permutation(spec_of(GenKind::pose_permutation, 0.05));
  const auto flat = frn::evaluate(ds, FlattenedHead(), opts());
  const auto frn_report = frn::evaluate(ds, frn::FrnHead(frn_params(1.0 / 16)), opts());
  const auto proto = frn::evaluate(ds, frn::ProtoHead(1.0 / 16), opts());
  MESSAGE("flattened " << flat.accuracy_mean << " frn " << frn_report.accuracy_mean);
  // Same-class items share about one location by chance, so flattening keeps a weak signal.
  CHECK(flat.accuracy_mean < 0.5);
  CHECK(frn_report.accuracy_mean - flat.accuracy_mean >= 0.4);
  CHECK(frn_report.accuracy_mean >= 0.9);
  CHECK(proto.accuracy_mean >= 0.9);
}

TEST_CASE("equal-mean signatures share the location mean") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = spec_of(GenKind::equal_mean_multiset, 0.0, 12, seed);
    const auto sigs = frn::equal_mean_signatures(spec);
    Eigen::RowVectorXd global = Eigen::RowVectorXd::Zero(spec.d);
    for (const auto& s : sigs) global += s.colwise().mean();
    global /= static_cast<double>(sigs.size());
    double worst = 0.0;
    for (const auto& s : sigs) worst = std::max(worst, (Eigen::RowVectorXd(s.colwise().mean()) - global).norm());
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("equal-mean classes are permutation-inequivalent") {
  const auto sigs = frn::equal_mean_signatures(spec_of(GenKind::equal_mean_multiset, 0.0));
  for (std::size_t a = 0; a < sigs.size(); ++a)
    for (std::size_t b = a + 1; b < sigs.size(); ++b)
      CHECK((sorted_rows(sigs[a]) - sorted_rows(sigs[b])).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("equal-mean with one channel supports a bounded class count") {
  auto spec = spec_of(GenKind::equal_mean_multiset, 0.0, 4);
  spec.d = 1;
  spec.r = 4;
  CHECK_NOTHROW(frn::equal_mean_signatures(spec));
  spec.n_classes = 5;
  CHECK_THROWS_AS(frn::equal_mean_signatures(spec), frn::ConfigError);
  spec.r = 2;
  spec.n_classes = 3;
  CHECK_THROWS_AS(frn::equal_mean_signatures(spec), frn::ConfigError);
}

TEST_CASE("equal-mean data separates spatial heads from pooled heads") {
  // Many items per class: with few, the held-out query sits slightly away
  // from its own class's remaining items and pooled heads drop below chance.
  auto spec = spec_of(GenKind::equal_mean_multiset, 0.05);
  spec.items_per_class = 400;
  const Dataset ds = frn::gen_equal_mean(spec);
  const auto frn_report = frn::evaluate(ds, frn::FrnHead(frn_params(1.0 / 16)), opts(500));
  const auto proto = frn::evaluate(ds, frn::ProtoHead(1.0 / 16), opts(500));
  const auto dsn = frn::evaluate(ds, frn::DsnHead(frn::ProjectionConfig{}, 1.0 / 16), opts(500));
  const auto ctx = frn::evaluate(ds, frn::CtxHead(frn::CtxParams::identity(16), 1.0 / 16), opts(500));
  MESSAGE("frn " << frn_report.accuracy_mean << " proto " << proto.accuracy_mean << " dsn "
                 << dsn.accuracy_mean << " ctx " << ctx.accuracy_mean);
  CHECK(frn_report.accuracy_mean >= 0.9);
  CHECK(std::abs(proto.accuracy_mean - 0.2) <= 3 * proto.ci95_halfwidth);
  CHECK(std::abs(dsn.accuracy_mean - 0.2) <= 3 * dsn.ci95_halfwidth);
  CHECK(ctx.accuracy_mean > 0.2 + 3 * ctx.ci95_halfwidth);
}

TEST_CASE("nuisance channels widen items without touching the originals") {
  const Dataset ds = frn::gen_gaussian(spec_of(GenKind::gaussian_prototype, 0.1));
  const Dataset wide = frn::add_nuisance_channels(ds, 5, 2.0, 9);
  wide.validate();
  CHECK(wide.d == 21);
  CHECK(wide.classes[3].items[4].leftCols(16) == ds.classes[3].items[4]);
  CHECK(wide.classes[3].items[4].rightCols(5).norm() > 0.0);
}

TEST_CASE("class ids can be offset for disjoint splits") {
  auto spec = spec_of(GenKind::gaussian_prototype, 0.1, 3);
  spec.first_class_id = 50;
  const Dataset ds = frn::generate(spec);
  CHECK(ds.classes[0].id == 50);
  CHECK(ds.classes[2].id == 52);
  const Dataset part = ds.take_classes(1, 2);
  CHECK(part.num_classes() == 2);
  CHECK(part.classes[0].id == 51);
}
