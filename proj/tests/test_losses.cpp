#include "doctest.h"

#include <cmath>

#include "frn/losses.hpp"
#include "frn/rng.hpp"
#include "oracles.hpp"

using frn::ClassScores;
using frn::Index;
using frn::Matrix;
using frn::SupportPool;

namespace {

ClassScores from_logits(std::vector<double> logits) {
  ClassScores s;
  s.logits = std::move(logits);
  s.probs = frn::softmax(s.logits);
  return s;
}

SupportPool<double> pool_of(const Matrix<double>& m, int id = 0) {
  return SupportPool<double>::from_matrix(id, 1, m.rows(), m);
}

}  // namespace

TEST_CASE("cross entropy examples") {
  const std::vector<ClassScores> perfect{from_logits({0.0, -2000.0, -2000.0})};
  const std::vector<int> zero{0};
  CHECK(frn::cross_entropy(perfect, zero).value == 0.0);

  const std::vector<ClassScores> uniform{from_logits({0.3, 0.3, 0.3, 0.3, 0.3})};
  CHECK(std::abs(frn::cross_entropy(uniform, zero).value - std::log(5.0)) <= 1e-9);

  const std::vector<ClassScores> two{from_logits({std::log(0.5), std::log(0.5)}),
                                     from_logits({std::log(0.75), std::log(0.25)})};
  const std::vector<int> labels{0, 1};
  const double expected = (std::log(2.0) + std::log(4.0)) / 2.0;
  CHECK(frn::cross_entropy(two, labels).value == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(1.0397).epsilon(1e-4));
}

TEST_CASE("cross entropy is ln n for uniform predictions at every n") {
  for (int n = 2; n <= 50; ++n) {
    const std::vector<ClassScores> s{from_logits(std::vector<double>(static_cast<std::size_t>(n), -7.5))};
    const std::vector<int> label{n - 1};
    CHECK(std::abs(frn::cross_entropy(s, label).value - std::log(double(n))) <= 1e-9);
  }
}

TEST_CASE("cross entropy stays finite for extreme logits") {
  const std::vector<ClassScores> s{from_logits({-1e5, 0.0})};
  const std::vector<int> label{0};
  CHECK(frn::cross_entropy(s, label).value == doctest::Approx(1e5));
}

TEST_CASE("cross entropy is nonnegative") {
  frn::CounterRng rng(51);
  for (int t = 0; t < 100; ++t) {
    std::vector<ClassScores> s;
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) {
      s.push_back(from_logits({5 * rng.normal(), 5 * rng.normal(), 5 * rng.normal()}));
      labels.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    CHECK(frn::cross_entropy(s, labels).value >= 0.0);
  }
}

TEST_CASE("cross entropy rejects bad labels") {
  const std::vector<ClassScores> s{from_logits({0.0, 1.0})};
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(frn::cross_entropy(s, bad), frn::ArgumentError);
  const std::vector<int> two{0, 1};
  CHECK_THROWS_AS(frn::cross_entropy(s, two), frn::ArgumentError);
}

TEST_CASE("aux loss examples") {
  Matrix<double> a(2, 4), b(2, 4);
  a << 1, 0, 0, 0, 0, 2, 0, 0;
  b << 0, 0, 3, 0, 0, 0, 0, -1;
  std::vector<SupportPool<double>> orth{pool_of(a), pool_of(b, 1)};
  CHECK(frn::aux_orthogonality<double>(orth).value == 0.0);

  Matrix<double> u(1, 3);
  u << 0.6, 0.8, 0.0;
  std::vector<SupportPool<double>> same{pool_of(u), pool_of(u, 1)};
  CHECK(frn::aux_orthogonality<double>(same).value == doctest::Approx(0.06).epsilon(1e-15));

  std::vector<SupportPool<double>> one{pool_of(u)};
  CHECK(frn::aux_orthogonality<double>(one).value == 0.0);
}

TEST_CASE("aux loss matches an explicit double sum") {
  frn::CounterRng rng(52);
  std::vector<SupportPool<double>> pools;
  std::vector<Eigen::MatrixXd> unit;
  for (int c = 0; c < 4; ++c) {
    const Matrix<double> m = oracle::random_matrix(3, 5, rng);
    pools.push_back(pool_of(m, c));
    Eigen::MatrixXd n = m;
    n.rowwise().normalize();
    unit.push_back(n);
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = 0; j < unit.size(); ++j) {
      if (i == j) continue;
      for (Index p = 0; p < 3; ++p)
        for (Index q = 0; q < 3; ++q) expected += std::pow(unit[i].row(p).dot(unit[j].row(q)), 2);
    }
  CHECK(frn::aux_orthogonality<double>(pools, 0.5).value == doctest::Approx(0.5 * expected).epsilon(1e-13));
}

TEST_CASE("aux loss ignores row scale and counts zero rows") {
  frn::CounterRng rng(53);
  for (int t = 0; t < 20; ++t) {
    std::vector<SupportPool<double>> pools, scaled;
    for (int c = 0; c < 3; ++c) {
      const Matrix<double> m = oracle::random_matrix(4, 6, rng);
      Matrix<double> s = m;
      for (Index i = 0; i < s.rows(); ++i) s.row(i) *= 0.01 + 10 * rng.uniform();
      pools.push_back(pool_of(m, c));
      scaled.push_back(pool_of(s, c));
    }
    const double v = frn::aux_orthogonality<double>(pools).value;
    CHECK(v >= 0.0);
    CHECK(v == doctest::Approx(frn::aux_orthogonality<double>(scaled).value).epsilon(1e-12));
  }
  Matrix<double> z = Matrix<double>::Zero(2, 3);
  z(0, 0) = 1.0;
  std::vector<SupportPool<double>> pools{pool_of(z), pool_of(z, 1)};
  const auto loss = frn::aux_orthogonality<double>(pools);
  CHECK(loss.zero_rows == 2);
  CHECK(loss.value == doctest::Approx(0.06));
}

TEST_CASE("loss breakdown reconciles with the total") {
  Matrix<double> u(1, 2);
  u << 1, 0;
  std::vector<SupportPool<double>> pools{pool_of(u), pool_of(u, 1)};
  const std::vector<ClassScores> s{from_logits({0.0, 0.0})};
  const std::vector<int> label{0};
  const auto total = frn::cross_entropy(s, label) + frn::aux_orthogonality<double>(pools);
  double sum = 0.0;
  for (const auto& [name, v] : total.breakdown) sum += v;
  CHECK(total.breakdown.size() == 2);
  CHECK(std::abs(total.value - sum) <= 1e-9);
  CHECK(total.value == doctest::Approx(std::log(2.0) + 0.06));
}
