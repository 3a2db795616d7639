#pragma once

#include <cstdint>
#include <vector>

#include "frn/head.hpp"

namespace frn {

struct BenchConfig {
  int way = 5;
  int queries_per_class = 16;
  Index k = 1;
  Index r = 25;
  Index d = 640;
  int iterations = 200;  // timed, after warm-up
  int warmup = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LatencyStats {
  int iterations = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
};

/// Median, nearest-rank 95th percentile and mean of the samples.
LatencyStats summarize_latency(std::vector<double> samples_ms);

struct BenchResult {
  BenchConfig cfg;
  Formulation automatic = Formulation::woodbury;
  LatencyStats direct;
  LatencyStats woodbury;
  /// Largest relative difference between the per-query errors of the two
  /// formulations on the benchmark inputs.
  double max_rel_diff = 0.0;
  bool formulations_agree = false;
};

inline constexpr double kBenchAgreementTolerance = 1e-3;

/// Times one full episode of reconstructions (way classes, way *
/// queries_per_class stacked queries) per iteration in 32-bit precision,
/// alternating the two formulations. Single-threaded.
BenchResult run_bench(const BenchConfig& cfg);

}  // namespace frn
