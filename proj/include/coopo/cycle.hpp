#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "coopo/metrics.hpp"
#include "coopo/online.hpp"

namespace coopo {

struct EvalResult {
    double mean_return = 0.0;  ///< undiscounted
    double std_return = 0.0;
    double mean_discounted = 0.0;
    double std_discounted = 0.0;
    std::size_t episodes = 0;
};

/// Monte-Carlo return of `pi` over n episodes seeded from `seed`. With
/// `stochastic` false the mode action (Gaussian mean / arg-max) is taken.
EvalResult evaluate(const Environment& env, const Policy& pi, std::size_t n, std::uint64_t seed, bool stochastic);

struct DataConfig {
    /// JSONL dataset to load; when empty one is generated from tier/n/seed.
    std::string path;
    std::string tier = "medium";
    std::size_t n = 10000;
    std::uint64_t seed = 1;
};

struct CoopoConfig {
    std::size_t cycles = 500;
    OfflineConfig offline;
    OnlineConfig online;
    ModelConfig model;
    DataConfig data;
    std::string env = "pointmass";
    std::uint64_t seed = 0;
    std::size_t eval_episodes = 20;
    /// Unset: stochastic on tabular envs, mode action on continuous ones.
    std::optional<bool> eval_stochastic;
    /// Stop when the cycle-end eval return improves by less than 1e-3
    /// (relative) over a 10-cycle window.
    bool early_stop = false;
    /// Record elapsed wall-clock time in metric rows (otherwise 0, which keeps
    /// metrics files bitwise reproducible).
    bool wall_clock = false;

    void validate() const;
};

struct CycleReport {
    std::size_t k = 0;
    /// Mean discounted eval returns before the cycle, after offline, after online.
    double J_before = 0.0;
    double J_mid = 0.0;
    double J_after = 0.0;
    /// Undiscounted counterparts.
    double return_before = 0.0;
    double return_mid = 0.0;
    double return_after = 0.0;
    double mean_kl_offline = 0.0;
    std::size_t env_steps_this_cycle = 0;
    std::size_t env_steps_cum = 0;
    std::size_t traj_cum = 0;
    double wall_ms = 0.0;
    /// Parameter fingerprints: entering the cycle, Q after offline, V and pi
    /// after online (the tensors handed to the next cycle), dataset.
    std::uint64_t pi_in = 0, q_in = 0, v_in = 0;
    std::uint64_t q_out = 0, v_out = 0, pi_out = 0;
    std::uint64_t dataset_checksum = 0;

    nlohmann::json to_json() const;
};

/// Policies around one cycle: pi_k, pi_{k+1/2}, pi_{k+1}.
struct CycleSnapshot {
    std::size_t k = 0;
    const AgentState* start = nullptr;
    const AgentState* mid = nullptr;
    const AgentState* end = nullptr;
    const std::vector<OfflineEpoch>* offline = nullptr;
};

struct RunHooks {
    MetricSink metrics;
    std::function<void(const CycleSnapshot&)> on_cycle;
    std::function<void(const CycleReport&)> on_report;
    /// When set: checkpoints under <out>/cycle_<k>/ and <out>/reports.jsonl.
    std::optional<std::filesystem::path> out_dir;
    std::string run_id = "run";
};

struct RunResult {
    AgentState agent;
    std::vector<CycleReport> reports;
    std::size_t env_steps = 0;
    std::size_t trajectories = 0;
};

Environment make_environment(const CoopoConfig& cfg);
/// Loads cfg.data.path or generates the dataset described by cfg.data.
Dataset resolve_dataset(const CoopoConfig& cfg, const Environment& env);

/// K cycles of offline -> online. Entering cycle k+1: Q from the last offline
/// epoch, V and pi from the last online iteration. K = 1 is the plain
/// offline-to-online hybrid.
RunResult run_coopo(const CoopoConfig& cfg, const Dataset& dataset, const RunHooks& hooks = {});
RunResult run_coopo(const CoopoConfig& cfg, const Dataset& dataset, AgentState initial, const RunHooks& hooks = {});

/// Same loop with the offline phase removed, from a random initialization.
RunResult run_ppo_baseline(const CoopoConfig& cfg, const RunHooks& hooks = {});

/// Total online trajectories at the first cycle-end eval whose undiscounted
/// return reaches `threshold`, if any.
std::optional<std::size_t> first_reach(const std::vector<CycleReport>& reports, double threshold);

}  // namespace coopo
