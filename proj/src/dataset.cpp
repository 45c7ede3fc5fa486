#include "coopo/dataset.hpp"

#include <cmath>
#include <fstream>

#include "coopo/exact.hpp"

namespace coopo {

using nlohmann::json;

TransitionTable::TransitionTable(bool discrete, std::size_t state_dim, std::size_t action_dim)
    : discrete_(discrete), state_dim_(state_dim), action_dim_(action_dim) {}

void TransitionTable::reserve(std::size_t n) {
    s_.reserve(n * state_dim_);
    s2_.reserve(n * state_dim_);
    a_.reserve(n * action_dim_);
    r_.reserve(n);
    done_.reserve(n);
}

void TransitionTable::push_back(const Transition& t) {
    if (t.s.size() != state_dim_ || t.s2.size() != state_dim_ || t.a.size() != action_dim_)
        throw SchemaError("transition shape does not match the dataset");
    if (!std::isfinite(t.r)) throw SchemaError("transition reward must be finite");
    s_.insert(s_.end(), t.s.begin(), t.s.end());
    a_.insert(a_.end(), t.a.begin(), t.a.end());
    r_.push_back(t.r);
    s2_.insert(s2_.end(), t.s2.begin(), t.s2.end());
    done_.push_back(t.done ? 1 : 0);
}

Transition TransitionTable::at(std::size_t i) const {
    if (i >= size()) throw InputError("transition index out of range");
    Transition t;
    t.s.assign(s(i).begin(), s(i).end());
    t.a.assign(a(i).begin(), a(i).end());
    t.r = r_[i];
    t.s2.assign(s2(i).begin(), s2(i).end());
    t.done = done(i);
    return t;
}

std::uint64_t TransitionTable::checksum() const {
    std::uint64_t h = coopo::checksum(s_);
    h = coopo::checksum(a_, h);
    h = coopo::checksum(r_, h);
    h = coopo::checksum(s2_, h);
    for (auto d : done_) h = mix64(h ^ d);
    return h;
}

void BehaviorPolicyDescriptor::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InputError("behavior epsilon must lie in [0, 1]");
    if (!(sigma_factor >= 1.0)) throw InputError("behavior sigma_factor must be >= 1");
    if (base != "uniform" && base != "optimal" && base != "pd")
        throw InputError("unknown behavior base '" + base + "'");
}

json BehaviorPolicyDescriptor::to_json() const {
    return {{"base", base}, {"epsilon", epsilon}, {"sigma_factor", sigma_factor}, {"tier", tier},
            {"stand_in", true}};
}

BehaviorPolicyDescriptor BehaviorPolicyDescriptor::from_json(const json& j) {
    BehaviorPolicyDescriptor b;
    b.base = j.at("base").get<std::string>();
    b.epsilon = j.at("epsilon").get<double>();
    b.sigma_factor = j.value("sigma_factor", 1.0);
    b.tier = j.value("tier", std::string("custom"));
    b.validate();
    return b;
}

BehaviorPolicyDescriptor behavior_tier(const std::string& tier, const Environment& env) {
    BehaviorPolicyDescriptor b;
    b.base = env.discrete() ? "optimal" : "pd";
    b.tier = tier;
    if (tier == "expert")
        b.epsilon = 0.05;
    else if (tier == "medium")
        b.epsilon = 0.3;
    else if (tier == "random")
        b.epsilon = 1.0;
    else
        throw InputError("unknown dataset tier '" + tier + "'");
    return b;
}

Vec pd_action(const PointMassParams& p, std::span<const double> state) {
    constexpr double kp = 2.0;
    const double kd = 2.0 * std::sqrt(kp);
    return {kp * (p.goal[0] - state[0]) - kd * state[2], kp * (p.goal[1] - state[1]) - kd * state[3]};
}

Vec behavior_action(const Environment& env, const BehaviorPolicyDescriptor& behavior,
                    const std::vector<std::size_t>& optimal_actions, std::span<const double> state, Rng& rng) {
    const bool random = behavior.epsilon > 0.0 && rng.uniform() < behavior.epsilon;
    if (env.discrete()) {
        const std::size_t A = env.n_actions();
        if (random || behavior.base == "uniform") return {static_cast<double>(rng.uniform_index(A))};
        if (behavior.base != "optimal") throw InputError("behavior base '" + behavior.base + "' is not tabular");
        return {static_cast<double>(optimal_actions.at(static_cast<std::size_t>(state[0])))};
    }
    const auto& p = env.pointmass_params();
    if (random || behavior.base == "uniform")
        return {rng.uniform(-p.accel_limit, p.accel_limit), rng.uniform(-p.accel_limit, p.accel_limit)};
    if (behavior.base != "pd") throw InputError("behavior base '" + behavior.base + "' is not continuous");
    Vec a = pd_action(p, state);
    for (double& x : a) x += kBehaviorNoise * behavior.sigma_factor * rng.normal();
    return a;
}

Matrix behavior_table(const TabularMdp& mdp, const BehaviorPolicyDescriptor& behavior) {
    behavior.validate();
    if (behavior.base == "uniform") return uniform_policy(mdp.n_states, mdp.n_actions);
    if (behavior.base != "optimal") throw UnsupportedError("behavior base '" + behavior.base + "' is not tabular");
    return greedy_policy(value_iteration(mdp).greedy, mdp.n_actions, behavior.epsilon);
}

Dataset generate(const Environment& env_in, const BehaviorPolicyDescriptor& behavior, std::size_t n,
                 std::uint64_t seed) {
    if (n < 1) throw InputError("dataset size must be >= 1");
    behavior.validate();
    Environment env = env_in;
    std::vector<std::size_t> optimal;
    if (env.discrete() && behavior.base == "optimal") optimal = value_iteration(env.mdp()).greedy;

    Dataset d;
    d.meta = {env.name(), behavior, seed, n};
    d.data = TransitionTable(env.discrete(), env.state_dim(), env.action_dim());
    d.data.reserve(n);
    Rng action_rng(derive_seed(seed, 0xbe4a));
    for (std::uint64_t episode = 0; d.data.size() < n; ++episode) {
        Vec s = env.reset(derive_seed(seed, 0xe915, episode));
        bool done = false;
        while (!done && d.data.size() < n) {
            Transition t;
            t.s = s;
            t.a = behavior_action(env, behavior, optimal, s, action_rng);
            StepResult res = env.step(t.a);
            if (!env.discrete())
                for (double& x : t.a) x = std::clamp(x, -env.pointmass_params().accel_limit,
                                                     env.pointmass_params().accel_limit);
            t.r = res.reward;
            t.s2 = res.next_state;
            t.done = res.done;
            done = res.done;
            s = res.next_state;
            d.data.push_back(t);
        }
    }
    return d;
}

std::vector<std::size_t> sample_indices(std::size_t dataset_size, std::size_t batch_size, Rng& rng) {
    if (dataset_size == 0) throw InputError("cannot sample from an empty dataset");
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = rng.uniform_index(dataset_size);
    return idx;
}

TransitionTable gather(const TransitionTable& table, std::span<const std::size_t> indices) {
    TransitionTable out(table.discrete(), table.state_dim(), table.action_dim());
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(table.at(i));
    return out;
}

TransitionTable sample_batch(const Dataset& dataset, std::size_t batch_size, Rng& rng) {
    if (dataset.size() == 0) throw InputError("cannot sample from an empty dataset");
    if (batch_size > dataset.size()) throw InputError("batch size exceeds dataset size");
    const auto idx = sample_indices(dataset.size(), batch_size, rng);
    return gather(dataset.data, idx);
}

namespace {

json encode_vec(std::span<const double> v, bool discrete) {
    if (discrete) return static_cast<long long>(v[0]);
    return Vec(v.begin(), v.end());
}

Vec decode_vec(const json& j, std::size_t line) {
    if (j.is_number_integer() || j.is_number_unsigned()) return {j.get<double>()};
    if (j.is_array()) {
        Vec v;
        for (const auto& x : j) {
            if (!x.is_number()) throw ParseError("non-numeric array entry", line);
            v.push_back(x.get<double>());
        }
        return v;
    }
    throw ParseError("state/action must be an integer or an array of reals", line);
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw InputError("cannot write dataset '" + path.string() + "'");
    json meta = {{"env", d.meta.env}, {"behavior", d.meta.behavior.to_json()}, {"seed", d.meta.seed}, {"n", d.size()}};
    os << meta.dump() << '\n';
    const bool discrete = d.data.discrete();
    for (std::size_t i = 0; i < d.size(); ++i) {
        json t = {{"s", encode_vec(d.data.s(i), discrete)},
                  {"a", encode_vec(d.data.a(i), discrete)},
                  {"r", d.data.r(i)},
                  {"s2", encode_vec(d.data.s2(i), discrete)},
                  {"done", d.data.done(i)}};
        os << t.dump() << '\n';
    }
    if (!os) throw InputError("write failed for '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open dataset '" + path.string() + "'");
    Dataset d;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(is, line)) throw SchemaError("dataset file is empty");
    ++line_no;
    try {
        const json meta = json::parse(line);
        d.meta.env = meta.at("env").get<std::string>();
        d.meta.behavior = BehaviorPolicyDescriptor::from_json(meta.at("behavior"));
        d.meta.seed = meta.at("seed").get<std::uint64_t>();
        d.meta.n = meta.at("n").get<std::size_t>();
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("dataset meta: ") + e.what(), line_no);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("dataset meta: ") + e.what());
    }

    bool first = true;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed transition: ") + e.what(), line_no);
        }
        Transition t;
        try {
            const json& s = j.at("s");
            t.s = decode_vec(s, line_no);
            t.a = decode_vec(j.at("a"), line_no);
            t.s2 = decode_vec(j.at("s2"), line_no);
            t.r = j.at("r").get<double>();
            t.done = j.at("done").get<bool>();
            const bool discrete = !s.is_array();
            if (first) {
                d.data = TransitionTable(discrete, t.s.size(), t.a.size());
                first = false;
            } else if (discrete != d.data.discrete()) {
                throw SchemaError("line " + std::to_string(line_no) + ": mixes tabular and continuous records");
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("transition fields: ") + e.what(), line_no);
        }
        try {
            d.data.push_back(t);
        } catch (const SchemaError& e) {
            throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (d.data.empty()) throw SchemaError("dataset has no transitions");
    if (d.meta.n != d.size())
        throw SchemaError("meta.n = " + std::to_string(d.meta.n) + " but file has " + std::to_string(d.size()) +
                          " transitions");
    return d;
}

Vec empirical_state_distribution(const Dataset& dataset, const TabularMdp& mdp) {
    if (!dataset.data.discrete()) throw UnsupportedError("empirical_state_distribution needs a tabular dataset");
    Vec freq(mdp.n_states, 0.0);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto s = static_cast<std::size_t>(dataset.data.s(i)[0]);
        if (s >= mdp.n_states) throw InputError("dataset state outside the MDP");
        freq[s] += 1.0;
    }
    for (double& f : freq) f /= static_cast<double>(dataset.size());
    return freq;
}

}  // namespace coopo
