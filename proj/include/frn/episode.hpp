#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "frn/baselines.hpp"
#include "frn/dataset.hpp"
#include "frn/embedding.hpp"
#include "frn/rng.hpp"

namespace frn {

/// A sampled n-way k-shot task. Episode label c refers to support[c].
struct Episode {
  int way = 0;
  int shot = 0;
  int query_per_class = 0;
  Index r = 0;
  std::vector<SupportPool<double>> support;
  Matrix<double> queries;  // (way * query_per_class * r) x d, class-major
  std::vector<int> labels;

  std::size_t num_queries() const { return labels.size(); }
  FeatureMap<double> query(std::size_t i) const {
    return FeatureMap<double>(queries.middleRows(static_cast<Index>(i) * r, r));
  }
};

/// Uniform classes without replacement, then uniform disjoint support and
/// query items within each class.
Episode sample_episode(const Dataset& ds, int way, int shot, int query_per_class, CounterRng& rng);

/// Reorders the classes of an episode: new label c is old label perm[c].
Episode permute_classes(const Episode& ep, const std::vector<int>& perm);

/// Applies an embedding to every support and query row.
Episode embed_episode(const Episode& ep, const EmbeddingModel& model);

enum class Precision { f32, f64 };

inline const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

/// Anything that turns an episode into per-query class scores.
class EpisodeHead {
 public:
  virtual ~EpisodeHead() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ClassScores> score(const Episode& ep) const = 0;
};

class FrnHead : public EpisodeHead {
 public:
  explicit FrnHead(HeadParams params, Precision precision = Precision::f64,
                   FormulationChoice choice = FormulationChoice::automatic)
      : params_(params), precision_(precision), choice_(choice) {}
  std::string name() const override { return "frn"; }
  std::vector<ClassScores> score(const Episode& ep) const override;
  const HeadParams& params() const { return params_; }

 private:
  HeadParams params_;
  Precision precision_;
  FormulationChoice choice_;
};

class ProtoHead : public EpisodeHead {
 public:
  explicit ProtoHead(double gamma, Precision precision = Precision::f64)
      : gamma_(gamma), precision_(precision) {}
  std::string name() const override { return "proto"; }
  std::vector<ClassScores> score(const Episode& ep) const override;

 private:
  double gamma_;
  Precision precision_;
};

class DsnHead : public EpisodeHead {
 public:
  DsnHead(ProjectionConfig cfg, double gamma, Precision precision = Precision::f64)
      : cfg_(cfg), gamma_(gamma), precision_(precision) {}
  std::string name() const override { return "dsn"; }
  std::vector<ClassScores> score(const Episode& ep) const override;

 private:
  ProjectionConfig cfg_;
  double gamma_;
  Precision precision_;
};

class CtxHead : public EpisodeHead {
 public:
  CtxHead(CtxParams params, double gamma, Precision precision = Precision::f64)
      : params_(std::move(params)), gamma_(gamma), precision_(precision) {}
  std::string name() const override { return "ctx"; }
  std::vector<ClassScores> score(const Episode& ep) const override;

 private:
  CtxParams params_;
  double gamma_;
  Precision precision_;
};

/// Always predicts the same episode label. Chance-level reference.
class ConstantHead : public EpisodeHead {
 public:
  explicit ConstantHead(int label = 0) : label_(label) {}
  std::string name() const override { return "constant"; }
  std::vector<ClassScores> score(const Episode& ep) const override;

 private:
  int label_;
};

/// Runs an inner head on embedded episodes.
class EmbeddedHead : public EpisodeHead {
 public:
  EmbeddedHead(EmbeddingModel model, std::shared_ptr<const EpisodeHead> inner)
      : model_(std::move(model)), inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  std::vector<ClassScores> score(const Episode& ep) const override {
    return inner_->score(embed_episode(ep, model_));
  }

 private:
  EmbeddingModel model_;
  std::shared_ptr<const EpisodeHead> inner_;
};

struct EvalReport {
  std::string head;
  int way = 0;
  int shot = 0;
  int query_per_class = 0;
  std::size_t trials = 0;
  double accuracy_mean = 0.0;
  double ci95_halfwidth = 0.0;
  std::vector<double> per_trial;
  std::uint64_t rng_seed = 0;
};

/// mean and 1.96 * s / sqrt(T) over per-trial accuracies.
void summarize(EvalReport& report);

/// Fraction of queries whose top-scoring class is the true one.
double episode_accuracy(const Episode& ep, const std::vector<ClassScores>& scores);

struct EvalOptions {
  int way = 5;
  int shot = 1;
  int query_per_class = 16;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Trial t samples from CounterRng(seed, t), so the report does not depend on
/// thread count or scheduling.
EvalReport evaluate(const Dataset& ds, const EpisodeHead& head, const EvalOptions& opts);

}  // namespace frn
