#include "frn/episode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace frn {
namespace {

/// First `count` entries of a Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> choose(std::size_t n, std::size_t count, CounterRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

template <typename Scalar>
std::vector<SupportPool<Scalar>> cast_pools(const Episode& ep) {
  std::vector<SupportPool<Scalar>> out;
  out.reserve(ep.support.size());
  for (const auto& p : ep.support) out.push_back(p.template cast<Scalar>());
  return out;
}

}  // namespace

Episode sample_episode(const Dataset& ds, int way, int shot, int query_per_class, CounterRng& rng) {
  if (way < 2) throw SamplingError("episode needs way >= 2, got " + std::to_string(way));
  if (shot < 1 || query_per_class < 1)
    throw SamplingError("episode needs shot >= 1 and query >= 1");
  if (ds.num_classes() < static_cast<std::size_t>(way))
    throw SamplingError("dataset has " + std::to_string(ds.num_classes()) +
                        " classes, episode needs way = " + std::to_string(way));
  const auto per_class = static_cast<std::size_t>(shot + query_per_class);

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.query_per_class = query_per_class;
  ep.r = ds.r;
  ep.queries.resize(static_cast<Index>(way * query_per_class) * ds.r, ds.d);
  const auto classes = choose(ds.num_classes(), static_cast<std::size_t>(way), rng);
  for (int c = 0; c < way; ++c) {
    const auto& cls = ds.classes[classes[static_cast<std::size_t>(c)]];
    if (cls.items.size() < per_class)
      throw SamplingError("class " + std::to_string(cls.id) + " has " +
                          std::to_string(cls.items.size()) + " items, episode needs shot + query = " +
                          std::to_string(per_class));
    const auto items = choose(cls.items.size(), per_class, rng);
    Matrix<double> pool(static_cast<Index>(shot) * ds.r, ds.d);
    for (int s = 0; s < shot; ++s)
      pool.middleRows(s * ds.r, ds.r) = cls.items[items[static_cast<std::size_t>(s)]];
    ep.support.push_back(SupportPool<double>::from_matrix(cls.id, shot, ds.r, std::move(pool)));
    for (int q = 0; q < query_per_class; ++q) {
      const Index slot = c * query_per_class + q;
      ep.queries.middleRows(slot * ds.r, ds.r) =
          cls.items[items[static_cast<std::size_t>(shot + q)]];
      ep.labels.push_back(c);
    }
  }
  return ep;
}

Episode permute_classes(const Episode& ep, const std::vector<int>& perm) {
  if (perm.size() != ep.support.size()) throw ArgumentError("permutation size != way");
  std::vector<int> inverse(perm.size(), -1);
  for (std::size_t c = 0; c < perm.size(); ++c) {
    const int old = perm[c];
    if (old < 0 || static_cast<std::size_t>(old) >= perm.size() || inverse[old] != -1)
      throw ArgumentError("not a permutation");
    inverse[static_cast<std::size_t>(old)] = static_cast<int>(c);
  }
  Episode out = ep;
  for (std::size_t c = 0; c < perm.size(); ++c) out.support[c] = ep.support[static_cast<std::size_t>(perm[c])];
  for (auto& label : out.labels) label = inverse[static_cast<std::size_t>(label)];
  return out;
}

Episode embed_episode(const Episode& ep, const EmbeddingModel& model) {
  Episode out;
  out.way = ep.way;
  out.shot = ep.shot;
  out.query_per_class = ep.query_per_class;
  out.r = ep.r;
  out.labels = ep.labels;
  out.queries = model.apply(ep.queries);
  for (const auto& p : ep.support)
    out.support.push_back(SupportPool<double>::from_matrix(p.class_id, p.k, p.r, model.apply(p.values)));
  return out;
}

std::vector<ClassScores> FrnHead::score(const Episode& ep) const {
  if (precision_ == Precision::f32) {
    const auto pools = cast_pools<float>(ep);
    const Matrix<float> q = ep.queries.cast<float>();
    return batch_class_scores<float>(q, pools, params_, choice_);
  }
  return batch_class_scores<double>(ep.queries, ep.support, params_, choice_);
}

std::vector<ClassScores> ProtoHead::score(const Episode& ep) const {
  if (precision_ == Precision::f32) {
    const auto pools = cast_pools<float>(ep);
    const Matrix<float> q = ep.queries.cast<float>();
    return batch_proto_scores<float>(q, ep.r, pools, gamma_);
  }
  return batch_proto_scores<double>(ep.queries, ep.r, ep.support, gamma_);
}

std::vector<ClassScores> DsnHead::score(const Episode& ep) const {
  if (precision_ == Precision::f32) {
    const auto pools = cast_pools<float>(ep);
    const Matrix<float> q = ep.queries.cast<float>();
    return batch_dsn_scores<float>(q, ep.r, pools, cfg_, gamma_);
  }
  return batch_dsn_scores<double>(ep.queries, ep.r, ep.support, cfg_, gamma_);
}

std::vector<ClassScores> CtxHead::score(const Episode& ep) const {
  if (precision_ == Precision::f32) {
    const auto pools = cast_pools<float>(ep);
    const Matrix<float> q = ep.queries.cast<float>();
    return batch_ctx_scores<float>(q, ep.r, pools, params_, gamma_);
  }
  return batch_ctx_scores<double>(ep.queries, ep.r, ep.support, params_, gamma_);
}

std::vector<ClassScores> ConstantHead::score(const Episode& ep) const {
  std::vector<double> dist(ep.support.size(), 1.0);
  dist.at(static_cast<std::size_t>(label_)) = 0.0;
  return std::vector<ClassScores>(ep.num_queries(), scores_from_distances(dist, 1.0));
}

double episode_accuracy(const Episode& ep, const std::vector<ClassScores>& scores) {
  if (scores.size() != ep.labels.size()) throw ArgumentError("one score per query expected");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    hits += static_cast<int>(scores[i].argmax()) == ep.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

void summarize(EvalReport& report) {
  const auto t = report.per_trial.size();
  report.trials = t;
  if (t == 0) return;
  const double mean = std::accumulate(report.per_trial.begin(), report.per_trial.end(), 0.0) /
                      static_cast<double>(t);
  double ss = 0.0;
  for (double a : report.per_trial) ss += (a - mean) * (a - mean);
  const double sd = t > 1 ? std::sqrt(ss / static_cast<double>(t - 1)) : 0.0;
  report.accuracy_mean = mean;
  report.ci95_halfwidth = 1.96 * sd / std::sqrt(static_cast<double>(t));
}

namespace {

[[noreturn]] void rethrow_with_progress(const std::exception_ptr& err, std::size_t completed) {
  const std::string suffix = " (aborted after " + std::to_string(completed) + " completed trials)";
  try {
    std::rethrow_exception(err);
  } catch (const SamplingError& e) {
    throw SamplingError(e.what() + suffix);
  } catch (const NumericalError& e) {
    throw NumericalError(e.what() + suffix);
  } catch (const ShapeError& e) {
    throw ShapeError(e.what() + suffix);
  } catch (const ArgumentError& e) {
    throw ArgumentError(e.what() + suffix);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what() + suffix);
  }
}

}  // namespace

EvalReport evaluate(const Dataset& ds, const EpisodeHead& head, const EvalOptions& opts) {
  if (opts.trials < 2) throw ArgumentError("evaluate: trials must be >= 2");
  EvalReport report;
  report.head = head.name();
  report.way = opts.way;
  report.shot = opts.shot;
  report.query_per_class = opts.query_per_class;
  report.rng_seed = opts.seed;
  report.per_trial.assign(opts.trials, 0.0);

  std::vector<std::exception_ptr> errors(opts.trials);
  std::vector<char> done(opts.trials, 0);
  std::atomic<bool> failed{false};
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t t = begin; t < opts.trials && !failed.load(); t += stride) {
      try {
        CounterRng rng(opts.seed, t);
        const Episode ep = sample_episode(ds, opts.way, opts.shot, opts.query_per_class, rng);
        report.per_trial[t] = episode_accuracy(ep, head.score(ep));
        done[t] = 1;
      } catch (const Error&) {
        errors[t] = std::current_exception();
        failed = true;
      }
    }
  };
  const unsigned threads = std::max(1u, opts.threads);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(run, w, threads);
  }
  for (std::size_t t = 0; t < opts.trials; ++t) {
    if (errors[t])
      rethrow_with_progress(errors[t],
                            static_cast<std::size_t>(std::count(done.begin(), done.end(), 1)));
  }
  summarize(report);
  return report;
}

}  // namespace frn
