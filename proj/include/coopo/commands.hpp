#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coopo/config.hpp"

namespace coopo {

/// Config file (or defaults), then COOPO_SEED, then an explicit seed flag.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::optional<std::uint64_t>& seed_flag);

void write_resolved_config(const RunConfig& rc, const std::filesystem::path& out);

/// algo is "coopo" or "ppo". Writes resolved_config.json, metrics.csv,
/// reports.jsonl and per-cycle checkpoints under `out`.
RunResult train(const RunConfig& rc, const std::string& algo, const std::filesystem::path& out,
                const std::string& run_id);

Dataset gen_data(const std::string& env, const std::string& tier, std::size_t n, std::uint64_t seed,
                 const std::filesystem::path& path);

inline const std::vector<std::string> kSuites = {"lemma1",  "closed_form", "pinsker",
                                                 "theorem1", "theorem2",    "concentrability"};

/// One theory suite: {suite, instances, max_residual | satisfaction_rate, pass, ...}.
nlohmann::json verify_suite(const std::string& suite, std::uint64_t seed = 0);

/// Runs every (algo, seed) pair; for "coopo" with a non-empty lambda list one
/// curve per lambda ("coopo_lambda<λ>"). Metrics go to
/// <out>/compare/<curve>_s<seed>.csv with run_id "<curve>/s<seed>". Returns
/// the summary also written to <out>/compare/summary.json.
nlohmann::json compare(const RunConfig& rc, const std::vector<std::string>& algos, const std::vector<double>& lambdas,
                       const std::filesystem::path& out);

}  // namespace coopo
