#include "frn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "frn/autodiff.hpp"

namespace frn {

HeadKind parse_head_kind(const std::string& name) {
  if (name == "frn") return HeadKind::frn;
  if (name == "proto") return HeadKind::proto;
  if (name == "dsn") return HeadKind::dsn;
  if (name == "ctx") return HeadKind::ctx;
  throw ConfigError("unknown head '" + name + "' (expected frn, proto, dsn or ctx)");
}

const char* to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::frn:
      return "frn";
    case HeadKind::proto:
      return "proto";
    case HeadKind::dsn:
      return "dsn";
    case HeadKind::ctx:
      return "ctx";
  }
  return "?";
}

std::shared_ptr<const EpisodeHead> Model::make_head(Precision precision) const {
  std::shared_ptr<const EpisodeHead> inner;
  switch (kind) {
    case HeadKind::frn:
      inner = std::make_shared<FrnHead>(head, precision, formulation);
      break;
    case HeadKind::proto:
      inner = std::make_shared<ProtoHead>(head.gamma, precision);
      break;
    case HeadKind::dsn:
      inner = std::make_shared<DsnHead>(dsn, head.gamma, precision);
      break;
    case HeadKind::ctx:
      inner = std::make_shared<CtxHead>(ctx, head.gamma, precision);
      break;
  }
  return std::make_shared<EmbeddedHead>(embedding, std::move(inner));
}

Model init_model(HeadKind kind, const ModelInit& init) {
  if (init.input_dim < 1) throw ConfigError("model: input dimension must be >= 1");
  const Index d = init.embed_dim > 0 ? init.embed_dim : init.input_dim;
  CounterRng rng(init.seed, 0x494e4954);  // "INIT"
  Model m;
  m.kind = kind;
  m.embedding.weight.resize(init.input_dim, d);
  const double sd = 1.0 / std::sqrt(static_cast<double>(init.input_dim));
  for (Index i = 0; i < init.input_dim; ++i)
    for (Index j = 0; j < d; ++j) m.embedding.weight(i, j) = sd * rng.normal();
  m.embedding.bias = RowVector<double>::Zero(d);
  m.embedding.output_scale =
      init.embed_scale > 0.0 ? init.embed_scale : (d >= 256 ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0);
  m.head.gamma = init.gamma > 0.0 ? init.gamma : 1.0 / static_cast<double>(d);
  if (kind == HeadKind::ctx) {
    const double psd = 1.0 / std::sqrt(static_cast<double>(d));
    m.ctx.identity_mode = false;
    m.ctx.key_proj = Matrix<double>::Identity(d, d);
    m.ctx.value_proj = Matrix<double>::Identity(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) {
        m.ctx.key_proj(i, j) += 0.1 * psd * rng.normal();
        m.ctx.value_proj(i, j) += 0.1 * psd * rng.normal();
      }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Plain forward.

LossValue episode_loss(const Model& model, const Episode& raw, const LossOptions& opts) {
  const Episode ep = embed_episode(raw, model.embedding);
  std::vector<ClassScores> scores;
  switch (model.kind) {
    case HeadKind::frn:
      scores = batch_class_scores<double>(ep.queries, ep.support, model.head, model.formulation);
      break;
    case HeadKind::proto:
      scores = batch_proto_scores<double>(ep.queries, ep.r, ep.support, model.head.gamma);
      break;
    case HeadKind::dsn:
      scores = batch_dsn_scores<double>(ep.queries, ep.r, ep.support, model.dsn, model.head.gamma);
      break;
    case HeadKind::ctx:
      scores = batch_ctx_scores<double>(ep.queries, ep.r, ep.support, model.ctx, model.head.gamma);
      break;
  }
  LossValue loss = cross_entropy(scores, ep.labels);
  if (opts.aux_loss) loss += aux_orthogonality<double>(ep.support, opts.aux_scale);
  return loss;
}

// ---------------------------------------------------------------------------
// Tape forward.

namespace {

using ad::Var;

struct TapeParams {
  Var weight, bias, alpha, beta, gamma, key, value;
};

Var leaf(ad::Tape& t, const ad::Mat& v, bool learn) { return learn ? t.variable(v) : t.constant(v); }
Var leaf(ad::Tape& t, double v, bool learn) { return learn ? t.variable(v) : t.constant(v); }

Var embed(const TapeParams& p, const Matrix<double>& raw, double scale) {
  auto& t = *p.weight.tape();
  Var out = ad::add_row(ad::matmul(t.constant(raw), p.weight), p.bias);
  return scale != 1.0 ? ad::scale(out, scale) : out;
}

/// lambda = (k*r/d) * exp(alpha), floored like effective_lambda().
Var lambda_node(Var alpha, Index k, Index r, Index d) {
  Var lam = ad::scale(ad::exp(alpha), static_cast<double>(k * r) / static_cast<double>(d));
  if (lam.scalar() < kMinLambda) return lam.tape()->constant(kMinLambda);
  return lam;
}

/// Ridge reconstruction of the stacked queries from one support pool.
Var reconstruct(Var q, Var s, Var lambda, Var rho, Formulation f) {
  if (f == Formulation::woodbury) {
    Var g = ad::matmul(ad::transpose(s), s);
    Var hat = ad::spd_solve(ad::add_diag(g, lambda), g);
    return ad::mul_scalar(ad::matmul(q, hat), rho);
  }
  Var st = ad::transpose(s);
  Var sol = ad::spd_solve(ad::add_diag(ad::matmul(s, st), lambda), s);
  return ad::mul_scalar(ad::matmul(ad::matmul(q, st), sol), rho);
}

Var aux_term(std::span<const Var> pools, double scale) {
  std::vector<Var> unit;
  for (const auto& p : pools) unit.push_back(ad::row_normalize(p));
  Var total = pools.front().tape()->constant(0.0);
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = 0; j < unit.size(); ++j)
      if (i != j) total = ad::add(total, ad::sum_squares(ad::matmul(unit[i], ad::transpose(unit[j]))));
  return ad::scale(total, scale);
}

Var negative_scaled(Var dist, Var gamma, double factor) {
  return ad::scale(ad::mul_scalar(dist, gamma), -factor);
}

void check_finite(const std::string& name, const Matrix<double>& g) {
  if (!g.allFinite()) throw GradientError(name, "non-finite gradient");
}

}  // namespace

LossAndGrad episode_loss_grad(const Model& model, const Episode& raw, const LossOptions& opts) {
  ad::Tape t;
  const bool frn = model.kind == HeadKind::frn;
  const bool learn_proj = model.kind == HeadKind::ctx && !model.ctx.identity_mode;
  TapeParams p;
  p.weight = leaf(t, model.embedding.weight, opts.learn_embedding);
  p.bias = leaf(t, ad::Mat(model.embedding.bias), opts.learn_embedding);
  p.alpha = leaf(t, model.head.alpha, frn && opts.mask.alpha);
  p.beta = leaf(t, model.head.beta, frn && opts.mask.beta);
  p.gamma = leaf(t, model.head.gamma, opts.mask.gamma);
  if (model.kind == HeadKind::ctx) {
    const Index d = model.embedding.output_dim();
    const auto& key = model.ctx.identity_mode ? ad::Mat(ad::Mat::Identity(d, d)) : model.ctx.key_proj;
    const auto& value = model.ctx.identity_mode ? ad::Mat(ad::Mat::Identity(d, d)) : model.ctx.value_proj;
    p.key = leaf(t, key, learn_proj);
    p.value = leaf(t, value, learn_proj);
  }

  const double scale = model.embedding.output_scale;
  const Index r = raw.r;
  const Index d = model.embedding.output_dim();
  const auto dd = static_cast<double>(d);
  Var q = embed(p, raw.queries, scale);
  std::vector<Var> pools;
  for (const auto& s : raw.support) pools.push_back(embed(p, s.values, scale));

  std::vector<Var> columns;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    const Index k = raw.support[c].k;
    switch (model.kind) {
      case HeadKind::frn: {
        Var lambda = lambda_node(p.alpha, k, r, d);
        Var rho = ad::exp(p.beta);
        const Formulation f = resolve(model.formulation, k, r, d);
        Var q_bar = reconstruct(q, pools[c], lambda, rho, f);
        Var dist = ad::block_sq_norm(ad::sub(q, q_bar), r, 1.0 / static_cast<double>(r));
        columns.push_back(negative_scaled(dist, p.gamma, 1.0));
        break;
      }
      case HeadKind::proto: {
        Var qp = ad::block_mean(q, r);
        Var proto = ad::block_mean(ad::block_mean(pools[c], r), k);
        Var dist = ad::block_sq_norm(ad::add_row(qp, ad::scale(proto, -1.0)), 1, 1.0);
        columns.push_back(negative_scaled(dist, p.gamma, 1.0 / dd));
        break;
      }
      case HeadKind::dsn: {
        model.dsn.validate();
        Var qp = ad::block_mean(q, r);
        Var sp = ad::block_mean(pools[c], r);
        Var lambda = t.constant(model.dsn.lambda_fixed);
        Var one = t.constant(1.0);
        Var q_bar = reconstruct(qp, sp, lambda, one, choose_formulation(k, 1, d));
        Var dist = ad::block_sq_norm(ad::sub(qp, q_bar), 1, 1.0);
        columns.push_back(negative_scaled(dist, p.gamma, 1.0 / dd));
        break;
      }
      case HeadKind::ctx: {
        const Index dk = model.ctx.key_dim(d);
        Var q1 = ad::matmul(q, p.key);
        Var s1 = ad::matmul(pools[c], p.key);
        Var q2 = ad::matmul(q, p.value);
        Var s2 = ad::matmul(pools[c], p.value);
        Var attn = ad::row_softmax(
            ad::scale(ad::matmul(q1, ad::transpose(s1)), 1.0 / std::sqrt(static_cast<double>(dk))));
        Var q_bar = ad::matmul(attn, s2);
        Var dist = ad::block_sq_norm(ad::sub(q2, q_bar), r, 1.0 / static_cast<double>(r));
        columns.push_back(negative_scaled(dist, p.gamma, 1.0 / dd));
        break;
      }
    }
  }
  Var logits = ad::hconcat(columns);
  Var ce = ad::cross_entropy(logits, raw.labels);
  Var total = ce;
  LossAndGrad out;
  out.loss = LossValue::single("cross_entropy", ce.scalar());
  if (opts.aux_loss) {
    Var aux = aux_term(pools, opts.aux_scale);
    total = ad::add(total, aux);
    out.loss += LossValue::single("aux_orthogonality", aux.scalar());
  }
  out.loss.value = total.scalar();
  t.backward(total);

  auto& g = out.grad;
  g.weight = opts.learn_embedding ? p.weight.grad() : Matrix<double>::Zero(model.embedding.weight.rows(), d);
  g.bias = opts.learn_embedding ? RowVector<double>(p.bias.grad()) : RowVector<double>::Zero(d);
  g.alpha = t.needs_grad(p.alpha.id()) ? p.alpha.grad()(0, 0) : 0.0;
  g.beta = t.needs_grad(p.beta.id()) ? p.beta.grad()(0, 0) : 0.0;
  g.gamma = t.needs_grad(p.gamma.id()) ? p.gamma.grad()(0, 0) : 0.0;
  if (learn_proj) {
    g.key_proj = p.key.grad();
    g.value_proj = p.value.grad();
  }
  check_finite("embedding.weight", g.weight);
  check_finite("embedding.bias", g.bias);
  for (auto [name, v] : {std::pair{"alpha", g.alpha}, {"beta", g.beta}, {"gamma", g.gamma}})
    if (!std::isfinite(v)) throw GradientError(name, "non-finite gradient");
  if (learn_proj) {
    check_finite("ctx.key_proj", g.key_proj);
    check_finite("ctx.value_proj", g.value_proj);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pre-training.

namespace {

std::vector<SupportPool<double>> dummy_pools(const EmbeddingModel& embedding, const DummyClassMaps& maps) {
  std::vector<SupportPool<double>> pools;
  for (std::size_t c = 0; c < maps.maps.size(); ++c) {
    const auto& m = maps.maps[c];
    if (m.cols() != embedding.output_dim()) throw ShapeError("dummy map width != embedding width");
    pools.push_back(SupportPool<double>::from_matrix(static_cast<int>(c), 1, m.rows(), m));
  }
  return pools;
}

}  // namespace

LossValue pretrain_loss(const EmbeddingModel& embedding, const DummyClassMaps& maps, double gamma,
                        const PretrainBatch& batch) {
  HeadParams params;
  params.gamma = gamma;
  const auto pools = dummy_pools(embedding, maps);
  const auto scores = batch_class_scores<double>(embedding.apply(batch.raw), pools, params,
                                                 FormulationChoice::woodbury);
  return cross_entropy(scores, batch.labels);
}

PretrainGrad pretrain_loss_grad(const EmbeddingModel& embedding, const DummyClassMaps& maps,
                                double gamma, const PretrainBatch& batch, bool learn_gamma) {
  ad::Tape t;
  TapeParams p;
  p.weight = t.variable(embedding.weight);
  p.bias = t.variable(ad::Mat(embedding.bias));
  p.gamma = leaf(t, gamma, learn_gamma);
  const Index d = embedding.output_dim();
  const Index r = batch.r;
  Var q = embed(p, batch.raw, embedding.output_scale);
  // alpha = beta = 0 and k = 1: lambda = r / d, rho = 1.
  Var lambda = t.constant(std::max(static_cast<double>(r) / static_cast<double>(d), kMinLambda));
  Var one = t.constant(1.0);
  std::vector<Var> map_vars;
  std::vector<Var> columns;
  for (const auto& m : maps.maps) {
    if (m.rows() != r || m.cols() != d) throw ShapeError("dummy map shape mismatch");
    map_vars.push_back(t.variable(m));
    Var q_bar = reconstruct(q, map_vars.back(), lambda, one, Formulation::woodbury);
    Var dist = ad::block_sq_norm(ad::sub(q, q_bar), r, 1.0 / static_cast<double>(r));
    columns.push_back(negative_scaled(dist, p.gamma, 1.0));
  }
  Var loss = ad::cross_entropy(ad::hconcat(columns), batch.labels);
  t.backward(loss);
  PretrainGrad out;
  out.loss = LossValue::single("cross_entropy", loss.scalar());
  out.weight = p.weight.grad();
  out.bias = p.bias.grad();
  for (const auto& v : map_vars) {
    out.maps.push_back(v.grad());
    check_finite("dummy_maps", out.maps.back());
  }
  out.gamma = learn_gamma ? p.gamma.grad()(0, 0) : 0.0;
  check_finite("embedding.weight", out.weight);
  return out;
}

// ---------------------------------------------------------------------------
// SGD.

Sgd::Sgd(OptimConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
}

double Sgd::learning_rate() const {
  if (cfg_.decay_every <= 0) return cfg_.lr;
  return cfg_.lr * std::pow(cfg_.decay_factor, static_cast<double>(step_ / cfg_.decay_every));
}

void Sgd::update(const std::string& name, Matrix<double>& param, const Matrix<double>& grad, bool decay) {
  Matrix<double> g = grad;
  if (decay && cfg_.weight_decay != 0.0) g += cfg_.weight_decay * param;
  auto [it, fresh] = velocity_.try_emplace(name, Matrix<double>::Zero(param.rows(), param.cols()));
  Matrix<double>& v = it->second;
  v = cfg_.momentum * v + g;
  const double lr = learning_rate();
  if (cfg_.nesterov) {
    param -= lr * (g + cfg_.momentum * v);
  } else {
    param -= lr * v;
  }
}

void Sgd::update(const std::string& name, RowVector<double>& param, const RowVector<double>& grad,
                 bool decay) {
  Matrix<double> p = param;
  update(name, p, Matrix<double>(grad), decay);
  param = p;
}

void Sgd::update(const std::string& name, double& param, double grad) {
  Matrix<double> p = Matrix<double>::Constant(1, 1, param);
  update(name, p, Matrix<double>::Constant(1, 1, grad), false);
  param = p(0, 0);
}

// ---------------------------------------------------------------------------
// Meta-training.

namespace {

constexpr std::uint64_t kTrainStream = 0x5452414e;  // "TRAN"
constexpr std::uint64_t kValSeedSalt = 0x56414c;    // "VAL"

double validate_model(const Model& model, const Dataset& val, const TrainConfig& cfg) {
  EvalOptions opts;
  opts.way = cfg.val_way;
  opts.shot = cfg.val_shot;
  opts.query_per_class = cfg.val_query;
  opts.trials = cfg.val_trials;
  opts.seed = cfg.seed ^ kValSeedSalt;
  return evaluate(val, *model.make_head(), opts).accuracy_mean;
}

}  // namespace

TrainResult meta_train(const Dataset& base, const Dataset& val, Model init, const TrainConfig& cfg) {
  if (cfg.episodes < 0) throw ConfigError("episodes must be >= 0");
  if (base.d != init.embedding.input_dim())
    throw ShapeError("base data has " + std::to_string(base.d) + " channels, embedding expects " +
                     std::to_string(init.embedding.input_dim()));
  Model model = std::move(init);
  const auto& mask = cfg.loss.mask;
  Sgd sgd(cfg.optim);
  CounterRng rng(cfg.seed, kTrainStream);

  TrainResult result;
  result.model = model;
  result.best_val_accuracy = validate_model(model, val, cfg);
  result.history.push_back({0, NAN, result.best_val_accuracy});

  for (int step = 1; step <= cfg.episodes; ++step) {
    const Episode ep = sample_episode(base, cfg.way, cfg.shot, cfg.query, rng);
    LossAndGrad lg;
    try {
      lg = episode_loss_grad(model, ep, cfg.loss);
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = std::string("stopped at episode ") + std::to_string(step) + ": " + e.what();
      break;
    }
    if (cfg.loss.learn_embedding) {
      sgd.update("embedding.weight", model.embedding.weight, lg.grad.weight, true);
      sgd.update("embedding.bias", model.embedding.bias, lg.grad.bias, false);
    }
    if (model.kind == HeadKind::frn) {
      if (mask.alpha) sgd.update("alpha", model.head.alpha, lg.grad.alpha);
      if (mask.beta) sgd.update("beta", model.head.beta, lg.grad.beta);
    }
    if (mask.gamma) {
      sgd.update("gamma", model.head.gamma, lg.grad.gamma);
      model.head.gamma = std::max(model.head.gamma, kMinGamma);
    }
    if (model.kind == HeadKind::ctx && !model.ctx.identity_mode) {
      sgd.update("ctx.key_proj", model.ctx.key_proj, lg.grad.key_proj, false);
      sgd.update("ctx.value_proj", model.ctx.value_proj, lg.grad.value_proj, false);
    }
    sgd.finish_step();

    HistoryEntry entry{step, lg.loss.value, std::nullopt};
    const bool last = step == cfg.episodes;
    if ((cfg.val_every > 0 && step % cfg.val_every == 0) || last) {
      entry.val_accuracy = validate_model(model, val, cfg);
      if (*entry.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = *entry.val_accuracy;
        result.best_step = step;
        result.model = model;
      }
    }
    result.history.push_back(entry);
  }
  result.rng_blocks = rng.blocks_used();
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kPretrainStream = 0x50524554;  // "PRET"

struct FlatItem {
  std::size_t cls;
  const Matrix<double>* item;
};

PretrainBatch make_batch(const std::vector<FlatItem>& items, const std::vector<std::size_t>& pick, Index r,
                         Index d_in) {
  PretrainBatch b;
  b.r = r;
  b.raw.resize(static_cast<Index>(pick.size()) * r, d_in);
  for (std::size_t i = 0; i < pick.size(); ++i) {
    b.raw.middleRows(static_cast<Index>(i) * r, r) = *items[pick[i]].item;
    b.labels.push_back(static_cast<int>(items[pick[i]].cls));
  }
  return b;
}

}  // namespace

PretrainResult pretrain(const Dataset& base, const EmbeddingModel& init_embedding, double init_gamma,
                        const PretrainConfig& cfg) {
  if (base.num_classes() < 2) throw ConfigError("pretrain needs at least 2 base classes");
  if (cfg.batch_size < 1) throw ConfigError("pretrain batch size must be >= 1");
  PretrainResult res;
  res.embedding = init_embedding;
  res.gamma = init_gamma;
  const Index d = init_embedding.output_dim();
  CounterRng init_rng(cfg.seed, 0x4d415053);  // "MAPS"
  for (const auto& c : base.classes) {
    res.maps.class_ids.push_back(c.id);
    Matrix<double> m(base.r, d);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = cfg.map_init_sigma * init_rng.normal();
    res.maps.maps.push_back(std::move(m));
  }
  std::vector<FlatItem> items;
  for (std::size_t c = 0; c < base.classes.size(); ++c)
    for (const auto& it : base.classes[c].items) items.push_back({c, &it});

  Sgd sgd(cfg.optim);
  CounterRng rng(cfg.seed, kPretrainStream);
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), items.size());
  std::vector<std::size_t> order(items.size());
  for (int step = 1; step <= cfg.steps; ++step) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch; ++i)
      std::swap(order[i], order[i + rng.uniform_index(items.size() - i)]);
    const std::vector<std::size_t> pick(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
    const PretrainBatch b = make_batch(items, pick, base.r, base.d);
    const auto g = pretrain_loss_grad(res.embedding, res.maps, res.gamma, b, cfg.learn_gamma);
    sgd.update("embedding.weight", res.embedding.weight, g.weight, true);
    sgd.update("embedding.bias", res.embedding.bias, g.bias, false);
    for (std::size_t c = 0; c < res.maps.maps.size(); ++c)
      sgd.update("map." + std::to_string(c), res.maps.maps[c], g.maps[c], false);
    if (cfg.learn_gamma) {
      sgd.update("gamma", res.gamma, g.gamma);
      res.gamma = std::max(res.gamma, kMinGamma);
    }
    sgd.finish_step();
    res.history.push_back({step, g.loss.value, std::nullopt});
  }
  return res;
}

double pretrain_accuracy(const PretrainResult& result, const Dataset& ds) {
  HeadParams params;
  params.gamma = result.gamma;
  const auto pools = dummy_pools(result.embedding, result.maps);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    const auto it = std::find(result.maps.class_ids.begin(), result.maps.class_ids.end(), ds.classes[c].id);
    if (it == result.maps.class_ids.end()) throw ArgumentError("pretrain_accuracy: unseen class");
    const auto label = static_cast<std::size_t>(it - result.maps.class_ids.begin());
    for (const auto& item : ds.classes[c].items) {
      const auto s = batch_class_scores<double>(result.embedding.apply(item), pools, params,
                                                FormulationChoice::woodbury);
      hits += s.front().argmax() == label ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace frn
