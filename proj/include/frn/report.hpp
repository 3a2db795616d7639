#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "frn/bench.hpp"
#include "frn/episode.hpp"
#include "frn/training.hpp"

namespace frn {

/// Validated command-line configuration. Every output embeds its hash.
struct RunConfig {
  std::string command;
  std::string head = "frn";
  int way = 5;
  int shot = 1;
  int query = 16;
  std::size_t trials = 1000;
  Index r = 8;
  Index d = 16;
  std::string precision = "f64";
  std::uint64_t seed = 0;
  std::string formulation = "auto";
  bool fix_alpha = false;
  bool fix_beta = false;
  bool fix_gamma = false;
  std::string data;
  std::string val;
  std::string from;
  std::string out;  // not part of the hash: only names the destination

  // Synthetic data used when no --data file is given.
  std::string kind = "gaussian";
  int classes = 20;
  int items = 40;
  double sigma = 0.05;
  std::uint64_t data_seed = 1;
  int nuisance = 0;  // extra pure-noise channels appended to every item
  double nuisance_sigma = 1.0;

  // Training.
  int episodes = 300;
  int val_every = 50;
  double lr = 0.05;
  bool aux = true;
  double embed_scale = 0.0;  // 0: 1/sqrt(d) when d >= 256, otherwise 1
  int batch = 32;

  // Benchmark.
  int iterations = 200;
  int warmup = 20;

  unsigned threads = 1;  // not part of the hash: results do not depend on it

  void validate() const;
  Precision precision_tag() const;
  FormulationChoice formulation_choice() const;
  LearnableMask mask() const { return {!fix_alpha, !fix_beta, !fix_gamma}; }
};

nlohmann::json to_json(const RunConfig& cfg);
/// FNV-1a 64 over the compact JSON dump of the config (keys sorted).
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex(std::uint64_t v);

nlohmann::json to_json(const EvalReport& report, const RunConfig& cfg);
std::string to_text(const EvalReport& report, const RunConfig& cfg);

nlohmann::json to_json(const BenchResult& result, const RunConfig& cfg);
std::string to_text(const BenchResult& result, const RunConfig& cfg);

/// One JSON object per line: step, loss, val_accuracy (when measured).
std::string history_jsonl(const std::vector<HistoryEntry>& history, const RunConfig& cfg);

}  // namespace frn
