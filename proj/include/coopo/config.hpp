#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "coopo/cycle.hpp"

namespace coopo {

struct CompareConfig {
    /// Cycle-end eval return (undiscounted) that counts as "reached".
    double threshold = -15.0;
    std::size_t seeds = 5;
};

/// Everything a command needs. Keys of the JSON file:
///   seed, env, cycles, eval_episodes, eval_stochastic, early_stop, threads,
///   offline{epochs,batch,lambda,kl_weight,w_max,gamma,lr},
///   online{episodes,rollout_episodes,batch,clip,epochs_per_update,gamma,lr,
///          adv_normalize,gae,gae_lambda,total_step_budget,buffer_size},
///   model{hidden_layers,hidden_units,activation,tabular_direct,init_log_std},
///   data{path,tier,n,seed}, optim{name,lr,beta_extra}, metrics{wall_clock},
///   compare{threshold,seeds}.
/// `gamma` at the top level sets both phases' discount unless they set their own;
/// `optim.lr` likewise sets both learning rates.
struct RunConfig {
    CoopoConfig coopo;
    CompareConfig compare;
    std::size_t threads = 1;
    /// Accepted for completeness of the hyperparameter set; not used by the algorithm.
    double beta_extra = 0.99;
    std::size_t buffer_size = 512;
};

/// Throws InputError naming the offending key on unknown keys or wrong types.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace coopo
