#include "doctest.h"

#include <cmath>

#include "frn/synth.hpp"
#include "frn/training.hpp"

using frn::Dataset;
using frn::HeadKind;
using frn::Matrix;

namespace {

Dataset gaussian(int classes, int items, double sigma, std::uint64_t seed, int first_id = 0, frn::Index d = 8) {
  frn::GenSpec s;
  s.n_classes = classes;
  s.items_per_class = items;
  s.r = 4;
  s.d = d;
  s.noise_sigma = sigma;
  s.seed = seed;
  s.first_class_id = first_id;
  return frn::gen_gaussian(s);
}

frn::Model fresh(HeadKind kind, frn::Index d, std::uint64_t seed = 1) {
  frn::ModelInit init;
  init.input_dim = d;
  init.seed = seed;
  return frn::init_model(kind, init);
}

frn::TrainConfig short_run(int episodes) {
  frn::TrainConfig cfg;
  cfg.episodes = episodes;
  cfg.val_every = 0;
  cfg.val_trials = 20;
  cfg.query = 3;
  cfg.val_query = 5;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("head kinds parse and print") {
  for (auto k : {HeadKind::frn, HeadKind::proto, HeadKind::dsn, HeadKind::ctx})
    CHECK(frn::parse_head_kind(frn::to_string(k)) == k);
  CHECK_THROWS_AS(frn::parse_head_kind("relation"), frn::ConfigError);
}

TEST_CASE("init_model defaults") {
  auto m = fresh(HeadKind::frn, 8);
  CHECK(m.embedding.weight.rows() == 8);
  CHECK(m.embedding.weight.cols() == 8);
  CHECK(m.embedding.bias.isZero());
  CHECK(m.head.alpha == 0.0);
  CHECK(m.head.beta == 0.0);
  CHECK(m.head.gamma == doctest::Approx(1.0 / 8));
  frn::ModelInit wide;
  wide.input_dim = 300;
  wide.embed_dim = 256;
  CHECK(frn::init_model(HeadKind::frn, wide).embedding.output_scale == doctest::Approx(1.0 / 16));
}

TEST_CASE("sgd: zero learning rate leaves parameters bit-identical") {
  frn::OptimConfig oc;
  oc.lr = 0.0;
  frn::Sgd sgd(oc);
  Matrix<double> w = Matrix<double>::Random(3, 2);
  const Matrix<double> keep = w;
  double a = 0.3;
  for (int i = 0; i < 5; ++i) {
    sgd.update("w", w, Matrix<double>::Ones(3, 2), true);
    sgd.update("a", a, 2.0);
    sgd.finish_step();
  }
  CHECK(w == keep);
  CHECK(a == 0.3);
}

TEST_CASE("sgd: nesterov step matches a hand-computed sequence") {
  frn::OptimConfig oc;
  oc.lr = 0.1;
  oc.momentum = 0.9;
  oc.weight_decay = 0.0;
  frn::Sgd sgd(oc);
  double x = 1.0;
  // v1 = 1, x1 = 1 - 0.1 (1 + 0.9) = 0.81; v2 = 0.9 + 1 = 1.9, x2 = 0.81 - 0.1 (1 + 1.71) = 0.539.
  sgd.update("x", x, 1.0);
  CHECK(x == doctest::Approx(0.81).epsilon(1e-15));
  sgd.update("x", x, 1.0);
  CHECK(x == doctest::Approx(0.539).epsilon(1e-15));
}

TEST_CASE("sgd: weight decay only where requested") {
  frn::OptimConfig oc;
  oc.lr = 1.0;
  oc.momentum = 0.0;
  oc.weight_decay = 0.5;
  frn::Sgd sgd(oc);
  Matrix<double> w = Matrix<double>::Constant(1, 1, 2.0);
  sgd.update("w", w, Matrix<double>::Zero(1, 1), true);
  CHECK(w(0, 0) == doctest::Approx(1.0));
  double s = 2.0;
  sgd.update("s", s, 0.0);
  CHECK(s == 2.0);
}

TEST_CASE("sgd: step decay schedule and config errors") {
  frn::OptimConfig oc;
  oc.lr = 1.0;
  oc.decay_every = 2;
  oc.decay_factor = 0.5;
  frn::Sgd sgd(oc);
  std::vector<double> lrs;
  for (int i = 0; i < 5; ++i) {
    lrs.push_back(sgd.learning_rate());
    sgd.finish_step();
  }
  CHECK(lrs == std::vector<double>{1.0, 1.0, 0.5, 0.5, 0.25});
  oc.momentum = 1.0;
  CHECK_THROWS_AS(frn::Sgd{oc}, frn::ConfigError);
  oc.momentum = 0.9;
  oc.lr = -1.0;
  CHECK_THROWS_AS(frn::Sgd{oc}, frn::ConfigError);
}

TEST_CASE("meta_train: zero learning rate leaves the model unchanged") {
  const Dataset base = gaussian(8, 10, 0.5, 1);
  const Dataset val = gaussian(5, 10, 0.5, 2, 100);
  for (auto kind : {HeadKind::frn, HeadKind::proto, HeadKind::dsn, HeadKind::ctx}) {
    CAPTURE(std::string(frn::to_string(kind)));
    const auto init = fresh(kind, 8);
    auto cfg = short_run(5);
    cfg.optim.lr = 0.0;
    const auto res = frn::meta_train(base, val, init, cfg);
    CHECK(res.model.embedding.weight == init.embedding.weight);
    CHECK(res.model.head.gamma == init.head.gamma);
    CHECK(res.history.size() == 6);
  }
}

TEST_CASE("meta_train: masked parameters stay fixed") {
  const Dataset base = gaussian(8, 10, 0.5, 3);
  const Dataset val = gaussian(5, 10, 0.5, 4, 100);
  auto init = fresh(HeadKind::frn, 8);
  auto cfg = short_run(20);
  cfg.val_every = 5;
  cfg.loss.mask = {false, false, false};
  auto res = frn::meta_train(base, val, init, cfg);
  // Whatever step was kept as best, the masked scalars never moved.
  CHECK(res.model.head.alpha == 0.0);
  CHECK(res.model.head.beta == 0.0);
  CHECK(res.model.head.gamma == init.head.gamma);

  cfg.loss.mask = {true, true, true};
  cfg.loss.learn_embedding = false;
  cfg.optim.weight_decay = 1.0;
  res = frn::meta_train(base, val, init, cfg);
  CHECK(res.model.embedding.weight == init.embedding.weight);
}

TEST_CASE("meta_train: separable data reaches high validation accuracy") {
  const Dataset base = gaussian(12, 15, 0.3, 11);
  const Dataset val = gaussian(6, 15, 0.3, 12, 100);
  for (auto kind : {HeadKind::frn, HeadKind::proto}) {
    CAPTURE(std::string(frn::to_string(kind)));
    auto cfg = short_run(60);
    cfg.val_every = 20;
    cfg.val_trials = 100;
    cfg.optim.lr = 0.01;
    const auto res = frn::meta_train(base, val, fresh(kind, 8), cfg);
    CHECK_FALSE(res.diverged);
    CHECK(res.best_val_accuracy >= 0.95);
    CHECK(res.history.back().val_accuracy.has_value());
    CHECK(res.rng_blocks > 0);
  }
}

TEST_CASE("meta_train: divergence stops training and keeps the best model") {
  const Dataset base = gaussian(8, 10, 0.5, 13);
  const Dataset val = gaussian(5, 10, 0.5, 14, 100);
  auto cfg = short_run(200);
  cfg.optim.lr = 1e6;
  const auto init = fresh(HeadKind::frn, 8);
  const auto res = frn::meta_train(base, val, init, cfg);
  CHECK(res.diverged);
  CHECK(res.message.find("stopped at episode") == 0);
  CHECK(res.model.embedding.weight.allFinite());
  CHECK(std::isfinite(res.model.head.gamma));
}

TEST_CASE("meta_train: same seed gives the same run") {
  const Dataset base = gaussian(8, 10, 0.5, 15);
  const Dataset val = gaussian(5, 10, 0.5, 16, 100);
  auto cfg = short_run(10);
  cfg.val_every = 5;
  const auto a = frn::meta_train(base, val, fresh(HeadKind::frn, 8), cfg);
  const auto b = frn::meta_train(base, val, fresh(HeadKind::frn, 8), cfg);
  CHECK(a.model.embedding.weight == b.model.embedding.weight);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 1; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
}

TEST_CASE("meta_train: input width mismatch") {
  const Dataset base = gaussian(8, 10, 0.5, 1);
  CHECK_THROWS_AS(frn::meta_train(base, base, fresh(HeadKind::frn, 5), short_run(1)), frn::ShapeError);
}

TEST_CASE("pretrain: full-batch loss decreases over the first steps") {
  const Dataset base = gaussian(8, 6, 0.3, 21);
  const auto emb = fresh(HeadKind::frn, 8).embedding;
  frn::PretrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 48;
  cfg.optim.lr = 0.01;
  cfg.seed = 2;
  const auto res = frn::pretrain(base, emb, 1.0 / 8, cfg);
  REQUIRE(res.history.size() == 10);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    CAPTURE(i);
    CHECK(res.history[i].loss < res.history[i - 1].loss);
  }
}

TEST_CASE("pretrain: the dummy-map classifier fits the base classes") {
  const Dataset base = gaussian(8, 10, 0.3, 22);
  frn::PretrainConfig cfg;
  cfg.steps = 150;
  cfg.batch_size = 16;
  cfg.optim.lr = 0.02;
  const auto res = frn::pretrain(base, fresh(HeadKind::frn, 8).embedding, 1.0 / 8, cfg);
  CHECK(frn::pretrain_accuracy(res, base) >= 0.9);
  CHECK(res.gamma >= frn::kMinGamma);
  CHECK(res.maps.maps.size() == 8);
  CHECK_THROWS_AS(frn::pretrain_accuracy(res, gaussian(2, 2, 0.3, 1, 50)), frn::ArgumentError);
}

TEST_CASE("pretrain: gamma is held when not learned") {
  const Dataset base = gaussian(4, 5, 0.3, 23);
  frn::PretrainConfig cfg;
  cfg.steps = 5;
  cfg.learn_gamma = false;
  CHECK(frn::pretrain(base, fresh(HeadKind::frn, 8).embedding, 0.25, cfg).gamma == 0.25);
  frn::Dataset one = gaussian(1, 5, 0.3, 1);
  CHECK_THROWS_AS(frn::pretrain(one, fresh(HeadKind::frn, 8).embedding, 0.25, cfg), frn::ConfigError);
}
