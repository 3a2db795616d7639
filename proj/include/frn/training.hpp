#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "frn/episode.hpp"
#include "frn/losses.hpp"

namespace frn {

enum class HeadKind { frn, proto, dsn, ctx };

HeadKind parse_head_kind(const std::string& name);
const char* to_string(HeadKind kind);

/// Everything a trained run produces: the embedding plus head parameters.
struct Model {
  HeadKind kind = HeadKind::frn;
  EmbeddingModel embedding;
  HeadParams head;
  CtxParams ctx;
  ProjectionConfig dsn;
  FormulationChoice formulation = FormulationChoice::automatic;

  /// Evaluation head operating on raw (un-embedded) episodes.
  std::shared_ptr<const EpisodeHead> make_head(Precision precision = Precision::f64) const;
};

struct ModelInit {
  Index input_dim = 0;
  Index embed_dim = 0;  // 0: same as input_dim
  /// 0 picks the default: 1/sqrt(d) when d >= 256, otherwise 1.
  double embed_scale = 0.0;
  /// 0 picks 1/d.
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

/// Random Gaussian embedding (variance 1/input_dim), zero bias, alpha = beta = 0.
Model init_model(HeadKind kind, const ModelInit& init);

struct LossOptions {
  bool aux_loss = true;
  double aux_scale = kAuxScale;
  bool learn_embedding = true;
  LearnableMask mask;
};

struct Gradients {
  Matrix<double> weight;
  RowVector<double> bias;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  Matrix<double> key_proj;
  Matrix<double> value_proj;
};

/// Episode loss computed with the plain (tape-free) heads.
LossValue episode_loss(const Model& model, const Episode& raw, const LossOptions& opts);

struct LossAndGrad {
  LossValue loss;
  Gradients grad;
};

/// Same loss, recorded on a tape and differentiated in reverse mode.
LossAndGrad episode_loss_grad(const Model& model, const Episode& raw, const LossOptions& opts);

// ---------------------------------------------------------------------------
// Pre-training against learnable per-class dummy feature maps.

struct DummyClassMaps {
  std::vector<int> class_ids;
  std::vector<Matrix<double>> maps;  // one r x d map per base class
};

struct PretrainBatch {
  Index r = 0;
  Matrix<double> raw;       // (batch * r) x d_in
  std::vector<int> labels;  // index into DummyClassMaps::maps
};

/// Cross-entropy of reconstruction logits against every dummy map with
/// alpha = beta = 0 and lambda = (r / d), i.e. each map is treated as a 1-shot pool.
LossValue pretrain_loss(const EmbeddingModel& embedding, const DummyClassMaps& maps, double gamma,
                        const PretrainBatch& batch);

struct PretrainGrad {
  LossValue loss;
  Matrix<double> weight;
  RowVector<double> bias;
  std::vector<Matrix<double>> maps;
  double gamma = 0.0;
};

PretrainGrad pretrain_loss_grad(const EmbeddingModel& embedding, const DummyClassMaps& maps,
                                double gamma, const PretrainBatch& batch, bool learn_gamma = true);

// ---------------------------------------------------------------------------
// Optimization.

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  int decay_every = 0;  // 0: constant learning rate
  double decay_factor = 0.1;
};

/// SGD with (Nesterov) momentum and a step-decay schedule. Velocity buffers
/// are keyed by parameter name.
class Sgd {
 public:
  explicit Sgd(OptimConfig cfg);

  double learning_rate() const;
  long step_count() const { return step_; }

  /// Updates one parameter in place. Weight decay only applies when `decay`.
  void update(const std::string& name, Matrix<double>& param, const Matrix<double>& grad, bool decay);
  void update(const std::string& name, RowVector<double>& param, const RowVector<double>& grad,
              bool decay);
  void update(const std::string& name, double& param, double grad);
  /// Advances the schedule after all parameters of one step were updated.
  void finish_step() { ++step_; }

 private:
  OptimConfig cfg_;
  long step_ = 0;
  std::map<std::string, Matrix<double>> velocity_;
};

inline constexpr double kMinGamma = 1e-6;

struct HistoryEntry {
  long step = 0;
  double loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainConfig {
  int way = 5;
  int shot = 1;
  int query = 15;
  int episodes = 300;
  int val_every = 50;
  std::size_t val_trials = 200;
  int val_way = 5;
  int val_shot = 1;
  int val_query = 16;
  std::uint64_t seed = 0;
  OptimConfig optim;
  LossOptions loss;
};

struct TrainResult {
  Model model;  // parameters with the best validation accuracy
  std::vector<HistoryEntry> history;
  double best_val_accuracy = 0.0;
  long best_step = 0;
  bool diverged = false;
  std::string message;
  std::uint64_t rng_blocks = 0;
};

/// Episodic SGD on `base`, validating on `val` every val_every episodes and
/// at the end. Loss blow-up stops training and keeps the best parameters seen.
TrainResult meta_train(const Dataset& base, const Dataset& val, Model init, const TrainConfig& cfg);

struct PretrainConfig {
  int steps = 200;
  int batch_size = 32;
  double map_init_sigma = 0.1;
  std::uint64_t seed = 0;
  OptimConfig optim;
  bool learn_gamma = true;
};

struct PretrainResult {
  EmbeddingModel embedding;
  DummyClassMaps maps;
  double gamma = 1.0;
  std::vector<HistoryEntry> history;
};

/// Non-episodic classification over every base class. The dummy maps are
/// returned for inspection but play no part in later stages.
PretrainResult pretrain(const Dataset& base, const EmbeddingModel& init_embedding, double init_gamma,
                        const PretrainConfig& cfg);

/// Top-1 accuracy of the dummy-map classifier on every item of `ds`.
double pretrain_accuracy(const PretrainResult& result, const Dataset& ds);

}  // namespace frn
