#include "frn/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "frn/rng.hpp"

namespace frn {

void RunConfig::validate() const {
  if (head != "frn" && head != "proto" && head != "dsn" && head != "ctx")
    throw ConfigError("--head must be one of frn, proto, dsn, ctx");
  if (way < 2) throw ConfigError("--way must be >= 2");
  if (shot < 1 || query < 1) throw ConfigError("--shot and --query must be >= 1");
  if (trials < 2) throw ConfigError("--trials must be >= 2");
  if (r < 1 || d < 1) throw ConfigError("--r and --d must be >= 1");
  precision_tag();
  formulation_choice();
  if (!(sigma >= 0.0)) throw ConfigError("--sigma must be >= 0");
  if (nuisance < 0 || !(nuisance_sigma >= 0.0)) throw ConfigError("--nuisance and --nuisance-sigma must be >= 0");
  if (classes < 1 || items < 1) throw ConfigError("--classes and --items must be >= 1");
  if (episodes < 0 || val_every < 0) throw ConfigError("--episodes and --val-every must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("--lr must be >= 0");
  if (!(embed_scale >= 0.0)) throw ConfigError("--embed-scale must be >= 0");
  if (iterations < 1 || warmup < 0) throw ConfigError("--iterations must be >= 1, --warmup >= 0");
  if (batch < 1) throw ConfigError("--batch must be >= 1");
}

Precision RunConfig::precision_tag() const {
  if (precision == "f32") return Precision::f32;
  if (precision == "f64") return Precision::f64;
  throw ConfigError("--precision must be f32 or f64");
}

FormulationChoice RunConfig::formulation_choice() const {
  if (formulation == "auto") return FormulationChoice::automatic;
  if (formulation == "direct") return FormulationChoice::direct;
  if (formulation == "woodbury") return FormulationChoice::woodbury;
  throw ConfigError("--formulation must be auto, direct or woodbury");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"command", c.command},     {"head", c.head},
          {"way", c.way},             {"shot", c.shot},
          {"query", c.query},         {"trials", c.trials},
          {"r", c.r},                 {"d", c.d},
          {"precision", c.precision}, {"seed", c.seed},
          {"formulation", c.formulation},
          {"fix_alpha", c.fix_alpha}, {"fix_beta", c.fix_beta},
          {"fix_gamma", c.fix_gamma}, {"data", c.data},
          {"val", c.val},             {"from", c.from},
          {"kind", c.kind},
          {"classes", c.classes},     {"items", c.items},
          {"sigma", c.sigma},         {"data_seed", c.data_seed},
          {"nuisance", c.nuisance},   {"nuisance_sigma", c.nuisance_sigma},
          {"episodes", c.episodes},   {"val_every", c.val_every},
          {"lr", c.lr},               {"aux", c.aux},
          {"embed_scale", c.embed_scale},
          {"batch", c.batch},         {"iterations", c.iterations},
          {"warmup", c.warmup}};
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

nlohmann::json to_json(const EvalReport& r, const RunConfig& cfg) {
  return {{"head", r.head},
          {"way", r.way},
          {"shot", r.shot},
          {"query_per_class", r.query_per_class},
          {"trials", r.trials},
          {"accuracy_mean", r.accuracy_mean},
          {"ci95_halfwidth", r.ci95_halfwidth},
          {"per_trial", r.per_trial},
          {"rng", std::string(CounterRng::kName)},
          {"rng_seed", r.rng_seed},
          {"config_hash", hex(config_hash(cfg))},
          {"config", to_json(cfg)}};
}

std::string to_text(const EvalReport& r, const RunConfig& cfg) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "head   way  shot  query  trials  accuracy  ci95\n";
  os << std::left << std::setw(7) << r.head << std::right << std::setw(3) << r.way << std::setw(6)
     << r.shot << std::setw(7) << r.query_per_class << std::setw(8) << r.trials << std::setw(10)
     << r.accuracy_mean << std::setw(8) << r.ci95_halfwidth << "\n";
  os << "seed " << r.rng_seed << " (" << CounterRng::kName << "), config " << hex(config_hash(cfg)) << "\n";
  return os.str();
}

namespace {

nlohmann::json stats_json(const LatencyStats& s) {
  return {{"iterations", s.iterations}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"mean_ms", s.mean_ms}};
}

}  // namespace

nlohmann::json to_json(const BenchResult& b, const RunConfig& cfg) {
  return {{"way", b.cfg.way},
          {"queries_per_class", b.cfg.queries_per_class},
          {"k", b.cfg.k},
          {"r", b.cfg.r},
          {"d", b.cfg.d},
          {"precision", "f32"},
          {"automatic_choice", to_string(b.automatic)},
          {"direct", stats_json(b.direct)},
          {"woodbury", stats_json(b.woodbury)},
          {"max_rel_diff", b.max_rel_diff},
          {"formulations_agree", b.formulations_agree},
          {"seed", b.cfg.seed},
          {"config_hash", hex(config_hash(cfg))},
          {"config", to_json(cfg)}};
}

std::string to_text(const BenchResult& b, const RunConfig& cfg) {
  std::ostringstream os;
  os << "way " << b.cfg.way << "  queries " << b.cfg.way * b.cfg.queries_per_class << "  k " << b.cfg.k
     << "  r " << b.cfg.r << "  d " << b.cfg.d << "  (f32, automatic choice: " << to_string(b.automatic)
     << ")\n";
  os << std::fixed << std::setprecision(3);
  os << "formulation  iters   median_ms      p95_ms     mean_ms\n";
  for (const auto& [name, s] : {std::pair{"direct", b.direct}, {"woodbury", b.woodbury}}) {
    os << std::left << std::setw(11) << name << std::right << std::setw(7) << s.iterations << std::setw(12)
       << s.median_ms << std::setw(12) << s.p95_ms << std::setw(12) << s.mean_ms << "\n";
  }
  os << std::scientific << std::setprecision(2) << "max relative sq_error difference " << b.max_rel_diff
     << (b.formulations_agree ? " (agree)" : " (DISAGREE)") << "\n";
  os << "config " << hex(config_hash(cfg)) << "\n";
  return os.str();
}

std::string history_jsonl(const std::vector<HistoryEntry>& history, const RunConfig& cfg) {
  std::ostringstream os;
  const auto h = hex(config_hash(cfg));
  for (const auto& e : history) {
    nlohmann::json j = {{"step", e.step}, {"config_hash", h}, {"seed", cfg.seed}};
    j["loss"] = std::isfinite(e.loss) ? nlohmann::json(e.loss) : nlohmann::json(nullptr);
    if (e.val_accuracy) j["val_accuracy"] = *e.val_accuracy;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace frn
