#pragma once

#include <filesystem>
#include <string>

#include "coopo/dataset.hpp"
#include "coopo/rng.hpp"

namespace coopo::test {

inline std::filesystem::path source_dir() { return COOPO_SOURCE_DIR; }

/// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::path(COOPO_BINARY_DIR) / "test_scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Random transitions on `env`; states and actions drawn uniformly.
inline TransitionTable random_batch(const Environment& env, std::size_t n, Rng& rng) {
    TransitionTable t(env.discrete(), env.state_dim(), env.action_dim());
    for (std::size_t i = 0; i < n; ++i) {
        Transition tr;
        if (env.discrete()) {
            tr.s = {static_cast<double>(rng.uniform_index(env.mdp().n_states))};
            tr.a = {static_cast<double>(rng.uniform_index(env.n_actions()))};
            tr.s2 = {static_cast<double>(rng.uniform_index(env.mdp().n_states))};
        } else {
            for (std::size_t d = 0; d < env.state_dim(); ++d) {
                tr.s.push_back(rng.uniform(-1.0, 1.0));
                tr.s2.push_back(rng.uniform(-1.0, 1.0));
            }
            for (std::size_t d = 0; d < env.action_dim(); ++d) tr.a.push_back(rng.uniform(-0.9, 0.9));
        }
        tr.r = rng.uniform(-1.0, 1.0);
        tr.done = rng.uniform() < 0.2;
        t.push_back(tr);
    }
    return t;
}

}  // namespace coopo::test
