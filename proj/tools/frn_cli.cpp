// frn: generate data, train, evaluate and benchmark reconstruction heads.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "frn/bench.hpp"
#include "frn/checkpoint.hpp"
#include "frn/report.hpp"
#include "frn/synth.hpp"
#include "frn/tensor_io.hpp"
#include "frn/training.hpp"

namespace {

using frn::RunConfig;

enum Exit { ok = 0, other = 1, config = 2, io = 3, numerical = 4, sampling = 5 };

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw frn::IoError("cannot open '" + path + "' for writing", 0);
  out << text;
  if (!out) throw frn::IoError("write to '" + path + "' failed", 0);
}

frn::GenSpec gen_spec(const RunConfig& c, std::uint64_t seed, int first_id) {
  frn::GenSpec s;
  s.kind = frn::parse_gen_kind(c.kind);
  s.n_classes = c.classes;
  s.items_per_class = c.items;
  s.r = c.r;
  s.d = c.d;
  s.noise_sigma = c.sigma;
  s.seed = seed;
  s.first_class_id = first_id;
  return s;
}

frn::Dataset synthetic(const RunConfig& c, std::uint64_t seed, int first_id) {
  frn::Dataset ds = frn::generate(gen_spec(c, seed, first_id));
  if (c.nuisance > 0) ds = frn::add_nuisance_channels(ds, c.nuisance, c.nuisance_sigma, seed ^ 0x4e55495341ull);
  return ds;
}

/// --data when given, otherwise synthetic classes drawn from --data-seed.
frn::Dataset base_data(const RunConfig& c) {
  return c.data.empty() ? synthetic(c, c.data_seed, 0) : frn::ingest(c.data);
}

/// --val when given, otherwise synthetic classes disjoint from the base split.
frn::Dataset val_data(const RunConfig& c) {
  return c.val.empty() ? synthetic(c, c.data_seed + 1, c.classes) : frn::ingest(c.val);
}

frn::Model load_or_default(const RunConfig& c, const frn::Dataset& ds, bool random_init) {
  if (!c.from.empty()) {
    frn::Model m = frn::load_checkpoint(c.from).model;
    m.formulation = c.formulation_choice();
    return m;
  }
  frn::ModelInit init;
  init.input_dim = ds.d;
  init.seed = c.seed;
  init.embed_scale = c.embed_scale;
  frn::Model m = frn::init_model(frn::parse_head_kind(c.head), init);
  if (!random_init) {
    m.embedding = frn::EmbeddingModel::identity(ds.d);
    if (m.kind == frn::HeadKind::ctx) m.ctx = frn::CtxParams::identity(ds.d);
  }
  m.formulation = c.formulation_choice();
  return m;
}

int cmd_gen(const RunConfig& c) {
  if (c.out.empty()) throw frn::ConfigError("gen needs --out");
  const frn::Dataset ds = synthetic(c, c.data_seed, 0);
  frn::write_dataset(c.out, ds, c.precision_tag() == frn::Precision::f32 ? frn::DType::f32 : frn::DType::f64);
  std::cout << "wrote " << ds.num_classes() << " classes, " << ds.num_items() << " items of " << ds.r << " x "
            << ds.d << " to " << c.out << " (+ " << frn::manifest_path(c.out) << ")\n";
  return ok;
}

int cmd_eval(const RunConfig& c) {
  const frn::Dataset ds = c.data.empty() ? val_data(c) : frn::ingest(c.data);
  const frn::Model model = load_or_default(c, ds, false);
  frn::EvalOptions opts{c.way, c.shot, c.query, c.trials, c.seed, c.threads};
  frn::EvalReport rep = frn::evaluate(ds, *model.make_head(c.precision_tag()), opts);
  rep.head = frn::to_string(model.kind);
  const std::string text = frn::to_text(rep, c);
  std::cout << text;
  if (!c.out.empty()) {
    write_text(c.out + ".txt", text);
    write_text(c.out + ".json", frn::to_json(rep, c).dump(2) + "\n");
  }
  return ok;
}

int cmd_train(const RunConfig& c) {
  const frn::Dataset base = base_data(c);
  const frn::Dataset val = val_data(c);
  frn::Model model = load_or_default(c, base, true);
  if (!c.from.empty()) {
    // A pretrained checkpoint supplies the embedding; the head comes from --head.
    model.kind = frn::parse_head_kind(c.head);
    model.head.alpha = 0.0;
    model.head.beta = 0.0;
    if (model.kind == frn::HeadKind::ctx) {
      const auto init = frn::init_model(frn::HeadKind::ctx, {base.d, model.embedding.output_dim(), 0.0, 0.0, c.seed});
      model.ctx = init.ctx;
    }
  }
  frn::TrainConfig tc;
  tc.way = c.way;
  tc.shot = c.shot;
  tc.query = c.query;
  tc.episodes = c.episodes;
  tc.val_every = c.val_every;
  tc.val_trials = c.trials;
  tc.val_way = c.way;
  tc.val_shot = 1;
  tc.val_query = c.query;
  tc.seed = c.seed;
  tc.optim.lr = c.lr;
  tc.loss.aux_loss = c.aux;
  tc.loss.mask = c.mask();
  const frn::TrainResult res = frn::meta_train(base, val, model, tc);
  const std::string out = c.out.empty() ? "train" : c.out;
  frn::save_checkpoint(out + ".ckpt", res.model,
                       {c.precision_tag(), frn::config_hash(c), c.seed, res.rng_blocks});
  write_text(out + ".history.jsonl", frn::history_jsonl(res.history, c));
  nlohmann::json j = {{"best_val_accuracy", res.best_val_accuracy},
                      {"best_step", res.best_step},
                      {"diverged", res.diverged},
                      {"message", res.message},
                      {"alpha", res.model.head.alpha},
                      {"beta", res.model.head.beta},
                      {"gamma", res.model.head.gamma},
                      {"rng", std::string(frn::CounterRng::kName)},
                      {"rng_seed", c.seed},
                      {"config_hash", frn::hex(frn::config_hash(c))},
                      {"config", frn::to_json(c)}};
  write_text(out + ".json", j.dump(2) + "\n");
  std::ostringstream text;
  text << "trained " << frn::to_string(res.model.kind) << " for " << res.history.size() - 1 << " episodes"
       << (res.diverged ? " (" + res.message + ")" : std::string()) << "\n"
       << "best 1-shot validation accuracy " << res.best_val_accuracy << " at episode " << res.best_step << "\n"
       << "checkpoint " << out << ".ckpt, config " << frn::hex(frn::config_hash(c)) << ", seed " << c.seed << "\n";
  write_text(out + ".txt", text.str());
  std::cout << text.str();
  return res.diverged ? numerical : ok;
}

int cmd_pretrain(const RunConfig& c) {
  const frn::Dataset base = base_data(c);
  const frn::Model init = load_or_default(c, base, true);
  frn::PretrainConfig pc;
  pc.steps = c.episodes;
  pc.batch_size = c.batch;
  pc.seed = c.seed;
  pc.optim.lr = c.lr;
  pc.learn_gamma = !c.fix_gamma;
  const frn::PretrainResult res = frn::pretrain(base, init.embedding, init.head.gamma, pc);
  frn::Model model = init;
  model.kind = frn::HeadKind::frn;
  model.embedding = res.embedding;
  model.head.gamma = res.gamma;
  const double acc = frn::pretrain_accuracy(res, base);
  const std::string out = c.out.empty() ? "pretrain" : c.out;
  frn::save_checkpoint(out + ".ckpt", model, {c.precision_tag(), frn::config_hash(c), c.seed, 0});
  write_text(out + ".history.jsonl", frn::history_jsonl(res.history, c));
  nlohmann::json j = {{"base_accuracy", acc},
                      {"gamma", res.gamma},
                      {"rng", std::string(frn::CounterRng::kName)},
                      {"rng_seed", c.seed},
                      {"config_hash", frn::hex(frn::config_hash(c))},
                      {"config", frn::to_json(c)}};
  write_text(out + ".json", j.dump(2) + "\n");
  std::ostringstream text;
  text << "pretrained on " << base.num_classes() << " classes for " << c.episodes << " steps\n"
       << "base-class accuracy " << acc << ", gamma " << res.gamma << "\n"
       << "checkpoint " << out << ".ckpt, config " << frn::hex(frn::config_hash(c)) << ", seed " << c.seed << "\n";
  write_text(out + ".txt", text.str());
  std::cout << text.str();
  return ok;
}

int cmd_bench(const RunConfig& c) {
  frn::BenchConfig bc;
  bc.way = c.way;
  bc.queries_per_class = c.query;
  bc.k = c.shot;
  bc.r = c.r;
  bc.d = c.d;
  bc.iterations = c.iterations;
  bc.warmup = c.warmup;
  bc.seed = c.seed;
  const frn::BenchResult res = frn::run_bench(bc);
  const std::string text = frn::to_text(res, c);
  std::cout << text;
  if (!c.out.empty()) {
    write_text(c.out + ".txt", text);
    write_text(c.out + ".json", frn::to_json(res, c).dump(2) + "\n");
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot feature map reconstruction: data, training, evaluation, benchmarks"};
  app.require_subcommand(1);
  RunConfig c;

  auto common = [&](CLI::App* s) {
    s->add_option("--way", c.way, "classes per episode");
    s->add_option("--shot", c.shot, "support items per class");
    s->add_option("--query", c.query, "query items per class");
    s->add_option("--trials", c.trials, "evaluation episodes");
    s->add_option("--r", c.r, "locations per feature map (synthetic data)");
    s->add_option("--d", c.d, "channels per location (synthetic data)");
    s->add_option("--precision", c.precision, "f32 or f64");
    s->add_option("--formulation", c.formulation, "auto, direct or woodbury");
    s->add_option("--seed", c.seed, "episode / initialization seed");
    s->add_option("--out", c.out, "output path prefix");
    s->add_option("--threads", c.threads, "evaluation worker threads");
  };
  auto data = [&](CLI::App* s) {
    s->add_option("--data", c.data, "feature tensor container (default: synthetic)");
    s->add_option("--kind", c.kind, "synthetic kind: gaussian, pose or equal-mean");
    s->add_option("--classes", c.classes, "synthetic classes");
    s->add_option("--items", c.items, "synthetic items per class");
    s->add_option("--sigma", c.sigma, "synthetic noise standard deviation");
    s->add_option("--data-seed", c.data_seed, "synthetic data seed");
    s->add_option("--nuisance", c.nuisance, "extra pure-noise channels");
    s->add_option("--nuisance-sigma", c.nuisance_sigma, "noise level of the extra channels");
  };
  auto model = [&](CLI::App* s) {
    s->add_option("--head", c.head, "frn, proto, dsn or ctx");
    s->add_option("--from", c.from, "checkpoint to start from");
    s->add_flag("--fix-alpha", c.fix_alpha, "keep alpha at its initial value");
    s->add_flag("--fix-beta", c.fix_beta, "keep beta at its initial value");
    s->add_flag("--fix-gamma", c.fix_gamma, "keep gamma at its initial value");
  };
  auto training = [&](CLI::App* s) {
    s->add_option("--val", c.val, "validation tensor container (default: synthetic)");
    s->add_option("--episodes", c.episodes, "training episodes (pretrain: steps)");
    s->add_option("--val-every", c.val_every, "episodes between validations");
    s->add_option("--lr", c.lr, "learning rate");
    s->add_option("--batch", c.batch, "pretraining batch size");
    s->add_flag("!--no-aux", c.aux, "disable the auxiliary orthogonality loss");
    s->add_option("--embed-scale", c.embed_scale, "embedding output scale (0: 1/sqrt(d) when d >= 256, else 1)");
  };

  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  common(gen);
  data(gen);
  auto* eval = app.add_subcommand("eval", "episodic evaluation");
  common(eval);
  data(eval);
  model(eval);
  auto* train = app.add_subcommand("train", "episodic meta-training");
  common(train);
  data(train);
  model(train);
  training(train);
  auto* pre = app.add_subcommand("pretrain", "pretraining against per-class dummy maps");
  common(pre);
  data(pre);
  model(pre);
  training(pre);
  auto* bench = app.add_subcommand("bench", "latency of the two closed-form formulations");
  common(bench);
  bench->add_option("--iterations", c.iterations, "timed iterations per formulation");
  bench->add_option("--warmup", c.warmup, "discarded warm-up iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config;
  }

  try {
    c.command = app.get_subcommands().front()->get_name();
    c.validate();
    if (c.command == "gen") return cmd_gen(c);
    if (c.command == "eval") return cmd_eval(c);
    if (c.command == "train") return cmd_train(c);
    if (c.command == "pretrain") return cmd_pretrain(c);
    return cmd_bench(c);
  } catch (const frn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config;
  } catch (const frn::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config;
  } catch (const frn::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return io;
  } catch (const frn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return numerical;
  } catch (const frn::SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << "\n";
    return sampling;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return other;
  }
}
