#include "frn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "frn/rng.hpp"

namespace frn {

void BenchConfig::validate() const {
  if (way < 1 || queries_per_class < 1 || k < 1 || r < 1 || d < 1)
    throw ConfigError("bench: way, query, k, r and d must be >= 1");
  if (iterations < 1 || warmup < 0) throw ConfigError("bench: iterations must be >= 1, warmup >= 0");
}

LatencyStats summarize_latency(std::vector<double> samples) {
  LatencyStats s;
  s.iterations = static_cast<int>(samples.size());
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  s.median_ms = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = samples[std::max<std::size_t>(rank, 1) - 1];
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  return s;
}

namespace {

Matrix<float> random_features(Index rows, Index cols, CounterRng& rng) {
  // Unit-variance channels scaled by 1/sqrt(d), as for large embeddings.
  const double s = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix<float> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(s * rng.normal());
  return m;
}

std::vector<double> run_once(const std::vector<SupportPool<float>>& pools, const Matrix<float>& queries,
                             const HeadParams& params, FormulationChoice f) {
  std::vector<double> errors;
  for (const auto& pool : pools) {
    const auto rec = ClassProjector<float>(pool, params, f).reconstruct(queries);
    errors.insert(errors.end(), rec.sq_error.begin(), rec.sq_error.end());
  }
  return errors;
}

}  // namespace

BenchResult run_bench(const BenchConfig& cfg) {
  cfg.validate();
  CounterRng rng(cfg.seed, 0x42454e43);  // "BENC"
  std::vector<SupportPool<float>> pools;
  for (int c = 0; c < cfg.way; ++c)
    pools.push_back(SupportPool<float>::from_matrix(c, cfg.k, cfg.r, random_features(cfg.k * cfg.r, cfg.d, rng)));
  const Matrix<float> queries =
      random_features(static_cast<Index>(cfg.way * cfg.queries_per_class) * cfg.r, cfg.d, rng);
  const HeadParams params;

  BenchResult result;
  result.cfg = cfg;
  result.automatic = choose_formulation(cfg.k, cfg.r, cfg.d);

  const auto direct = run_once(pools, queries, params, FormulationChoice::direct);
  const auto woodbury = run_once(pools, queries, params, FormulationChoice::woodbury);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    const double scale = std::max({std::abs(direct[i]), std::abs(woodbury[i]), 1e-12});
    result.max_rel_diff = std::max(result.max_rel_diff, std::abs(direct[i] - woodbury[i]) / scale);
  }
  result.formulations_agree = result.max_rel_diff <= kBenchAgreementTolerance;

  using Clock = std::chrono::steady_clock;
  std::vector<double> t_direct, t_woodbury;
  double sink = 0.0;
  for (int it = 0; it < cfg.warmup + cfg.iterations; ++it) {
    for (const auto f : {FormulationChoice::direct, FormulationChoice::woodbury}) {
      const auto start = Clock::now();
      const auto errors = run_once(pools, queries, params, f);
      const auto stop = Clock::now();
      sink += errors.front();
      if (it < cfg.warmup) continue;
      const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
      (f == FormulationChoice::direct ? t_direct : t_woodbury).push_back(ms);
    }
  }
  if (!std::isfinite(sink)) throw NumericalError("bench: non-finite reconstruction error");
  result.direct = summarize_latency(std::move(t_direct));
  result.woodbury = summarize_latency(std::move(t_woodbury));
  return result;
}

}  // namespace frn
