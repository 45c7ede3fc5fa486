#include "coopo/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace coopo {

void TabularMdp::validate() const {
    if (n_states == 0 || n_actions == 0) throw SchemaError("tabular MDP needs at least one state and one action");
    if (P.size() != n_states * n_actions * n_states) throw SchemaError("P has wrong size");
    if (r.size() != n_states * n_actions) throw SchemaError("r has wrong size");
    if (d0.size() != n_states) throw SchemaError("d0 has wrong size");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw SchemaError("gamma must lie in [0, 1)");
    if (horizon < 1) throw SchemaError("horizon must be >= 1");
    if (!all_finite(r)) throw SchemaError("rewards must be finite");
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (double p : next_dist(s, a)) {
                if (!(p >= 0.0)) throw SchemaError("negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kStochasticTol)
                throw SchemaError("P[" + std::to_string(s) + "][" + std::to_string(a) + "] does not sum to 1");
        }
    double total = 0.0;
    for (double p : d0) {
        if (!(p >= 0.0)) throw SchemaError("negative initial probability");
        total += p;
    }
    if (std::abs(total - 1.0) > kStochasticTol) throw SchemaError("d0 does not sum to 1");
}

TabularMdp tabular_from_json(const nlohmann::json& j) {
    TabularMdp m;
    try {
        m.name = j.value("name", std::string("tabular"));
        m.n_states = j.at("n_states").get<std::size_t>();
        m.n_actions = j.at("n_actions").get<std::size_t>();
        const auto& P = j.at("P");
        if (P.size() != m.n_states) throw SchemaError("P must have n_states rows");
        for (const auto& per_state : P) {
            if (per_state.size() != m.n_actions) throw SchemaError("P[s] must have n_actions rows");
            for (const auto& row : per_state) {
                if (row.size() != m.n_states) throw SchemaError("P[s][a] must have n_states entries");
                for (const auto& v : row) m.P.push_back(v.get<double>());
            }
        }
        const auto& r = j.at("r");
        if (r.size() != m.n_states) throw SchemaError("r must have n_states rows");
        for (const auto& row : r) {
            if (row.size() != m.n_actions) throw SchemaError("r[s] must have n_actions entries");
            for (const auto& v : row) m.r.push_back(v.get<double>());
        }
        m.d0 = j.at("d0").get<Vec>();
        m.gamma = j.at("gamma").get<double>();
        m.horizon = j.at("horizon").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("tabular fixture: ") + e.what());
    }
    m.validate();
    return m;
}

nlohmann::json to_json(const TabularMdp& m) {
    nlohmann::json P = nlohmann::json::array();
    for (std::size_t s = 0; s < m.n_states; ++s) {
        nlohmann::json per_state = nlohmann::json::array();
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            auto d = m.next_dist(s, a);
            per_state.push_back(Vec(d.begin(), d.end()));
        }
        P.push_back(per_state);
    }
    nlohmann::json r = nlohmann::json::array();
    for (std::size_t s = 0; s < m.n_states; ++s)
        r.push_back(Vec(m.r.begin() + s * m.n_actions, m.r.begin() + (s + 1) * m.n_actions));
    return {{"name", m.name}, {"n_states", m.n_states}, {"n_actions", m.n_actions}, {"P", P}, {"r", r},
            {"d0", m.d0},     {"gamma", m.gamma},       {"horizon", m.horizon}};
}

TabularMdp load_tabular(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open fixture '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("fixture '") + path.string() + "': " + e.what());
    }
    return tabular_from_json(j);
}

void save_tabular(const TabularMdp& m, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write fixture '" + path.string() + "'");
    os << to_json(m).dump(2) << '\n';
}

Vec pointmass_next(const PointMassParams& p, std::span<const double> state, std::span<const double> action) {
    if (state.size() != 4 || action.size() != 2) throw InputError("pointmass expects 4-d state and 2-d action");
    Vec next(4);
    for (std::size_t d = 0; d < 2; ++d) {
        if (std::isnan(action[d])) throw NumericError("NaN action");
        const double a = std::clamp(action[d], -p.accel_limit, p.accel_limit);
        const double v = state[2 + d] + a * p.dt;
        next[2 + d] = v;
        next[d] = state[d] + v * p.dt;
    }
    return next;
}

double pointmass_reward(const PointMassParams& p, std::span<const double> state, std::span<const double> action) {
    const Vec next = pointmass_next(p, state, action);
    double dist2 = 0.0, act2 = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
        const double e = next[d] - p.goal[d];
        dist2 += e * e;
        const double a = std::clamp(action[d], -p.accel_limit, p.accel_limit);
        act2 += a * a;
    }
    return -dist2 - p.action_cost * act2;
}

Environment Environment::tabular(TabularMdp mdp) {
    mdp.validate();
    Environment e;
    e.name_ = mdp.name;
    e.model_ = std::move(mdp);
    e.state_ = {0.0};
    return e;
}

Environment Environment::pointmass(PointMassParams params, std::string name) {
    if (!(params.dt > 0.0) || !(params.accel_limit > 0.0) || params.horizon < 1)
        throw InputError("invalid pointmass parameters");
    Environment e;
    e.name_ = std::move(name);
    e.model_ = params;
    e.state_ = Vec(4, 0.0);
    return e;
}

const TabularMdp& Environment::mdp() const {
    if (!discrete()) throw UnsupportedError("environment '" + name_ + "' is not tabular");
    return std::get<TabularMdp>(model_);
}

const PointMassParams& Environment::pointmass_params() const {
    if (discrete()) throw UnsupportedError("environment '" + name_ + "' is not continuous");
    return std::get<PointMassParams>(model_);
}

std::size_t Environment::state_dim() const { return discrete() ? 1 : 4; }
std::size_t Environment::action_dim() const { return discrete() ? 1 : 2; }
std::size_t Environment::n_actions() const { return discrete() ? mdp().n_actions : 0; }
std::size_t Environment::feature_dim() const { return discrete() ? mdp().n_states : 4; }
std::size_t Environment::horizon() const { return discrete() ? mdp().horizon : pointmass_params().horizon; }
double Environment::gamma() const { return discrete() ? mdp().gamma : pointmass_params().gamma; }

void Environment::encode(std::span<const double> state, std::span<double> out) const {
    if (out.size() != feature_dim()) throw InputError("feature buffer has wrong width");
    if (discrete()) {
        if (state.size() != 1 || !(state[0] >= 0.0) || state[0] >= static_cast<double>(mdp().n_states))
            throw InputError("state index out of range");
        const auto s = static_cast<std::size_t>(state[0]);
        std::fill(out.begin(), out.end(), 0.0);
        out[s] = 1.0;
    } else {
        if (state.size() != 4) throw InputError("pointmass state must have 4 entries");
        std::copy(state.begin(), state.end(), out.begin());
    }
}

Vec Environment::encode(std::span<const double> state) const {
    Vec out(feature_dim());
    encode(state, out);
    return out;
}

Vec Environment::reset(std::uint64_t seed) {
    rng_.seed(seed);
    step_ = 0;
    if (discrete()) {
        state_ = {static_cast<double>(rng_.categorical(mdp().d0))};
    } else {
        const auto& p = pointmass_params();
        state_ = {rng_.uniform(-p.start_spread, p.start_spread), rng_.uniform(-p.start_spread, p.start_spread), 0.0,
                  0.0};
    }
    return state_;
}

StepResult tabular_step(const TabularMdp& m, std::size_t s, std::span<const double> action, Rng& rng,
                        std::size_t step_index) {
    if (action.size() != 1) throw InputError("tabular action must be a single index");
    if (std::isnan(action[0])) throw NumericError("NaN action");
    const double a_raw = action[0];
    if (a_raw < 0.0 || a_raw >= static_cast<double>(m.n_actions) || a_raw != std::floor(a_raw))
        throw InputError("action index " + format_double(a_raw) + " out of range");
    const auto a = static_cast<std::size_t>(a_raw);
    StepResult res;
    res.reward = m.reward(s, a);
    res.next_state = {static_cast<double>(rng.categorical(m.next_dist(s, a)))};
    res.step_index = step_index;
    res.done = step_index >= m.horizon;
    return res;
}

StepResult Environment::step(std::span<const double> action) {
    if (step_ >= horizon()) throw InputError("episode already finished; call reset()");
    StepResult res;
    if (discrete()) {
        res = tabular_step(mdp(), static_cast<std::size_t>(state_[0]), action, rng_, step_ + 1);
    } else {
        const auto& p = pointmass_params();
        res.reward = pointmass_reward(p, state_, action);
        res.next_state = pointmass_next(p, state_, action);
        res.step_index = step_ + 1;
        res.done = res.step_index >= p.horizon;
    }
    step_ = res.step_index;
    state_ = res.next_state;
    return res;
}

namespace {

TabularMdp chain5() {
    TabularMdp m;
    m.name = "chain5";
    m.n_states = 5;
    m.n_actions = 2;  // 0 = left, 1 = right
    m.P.assign(5 * 2 * 5, 0.0);
    m.r.assign(5 * 2, 0.0);
    for (std::size_t s = 0; s < 5; ++s) {
        const std::size_t left = s == 0 ? 0 : s - 1;
        const std::size_t right = s == 4 ? 4 : s + 1;
        m.P[(s * 2 + 0) * 5 + left] = 1.0;
        m.P[(s * 2 + 1) * 5 + right] = 1.0;
    }
    m.r[4 * 2 + 1] = 1.0;
    m.d0 = {1.0, 0.0, 0.0, 0.0, 0.0};
    m.gamma = 0.9;
    m.horizon = 20;
    return m;
}

TabularMdp grid4x4() {
    // Row-major cells, start top-left (0), goal bottom-right (15) which absorbs.
    // Actions 0 up, 1 right, 2 down, 3 left. With prob 0.1 the move direction
    // is replaced by a uniformly random one; moves into walls stay in place.
    constexpr std::size_t N = 4, S = 16, A = 4;
    constexpr double slip = 0.1;
    TabularMdp m;
    m.name = "grid4x4";
    m.n_states = S;
    m.n_actions = A;
    m.P.assign(S * A * S, 0.0);
    m.r.assign(S * A, 0.0);
    auto move = [&](std::size_t s, std::size_t dir) {
        std::size_t row = s / N, col = s % N;
        if (dir == 0 && row > 0) --row;
        if (dir == 1 && col + 1 < N) ++col;
        if (dir == 2 && row + 1 < N) ++row;
        if (dir == 3 && col > 0) --col;
        return row * N + col;
    };
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            double* row = &m.P[(s * A + a) * S];
            if (s == S - 1) {
                row[s] = 1.0;
                m.r[s * A + a] = 1.0;
                continue;
            }
            row[move(s, a)] += 1.0 - slip;
            for (std::size_t d = 0; d < A; ++d) row[move(s, d)] += slip / A;
        }
    m.d0.assign(S, 0.0);
    m.d0[0] = 1.0;
    m.gamma = 0.95;
    m.horizon = 30;
    return m;
}

TabularMdp bandit2() {
    TabularMdp m;
    m.name = "bandit2";
    m.n_states = 1;
    m.n_actions = 2;
    m.P = {1.0, 1.0};
    m.r = {1.0, -1.0};
    m.d0 = {1.0};
    m.gamma = 0.99;
    m.horizon = 1;
    return m;
}

}  // namespace

TabularMdp make_tabular_fixture(const std::string& name) {
    TabularMdp m;
    if (name == "chain5")
        m = chain5();
    else if (name == "grid4x4")
        m = grid4x4();
    else if (name == "bandit2")
        m = bandit2();
    else
        throw InputError("unknown tabular fixture '" + name + "'");
    m.validate();
    return m;
}

Environment make_benchmark(const std::string& name) {
    if (name == "pointmass") return Environment::pointmass(PointMassParams{});
    return Environment::tabular(make_tabular_fixture(name));
}

}  // namespace coopo
