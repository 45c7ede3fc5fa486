#include "coopo/theory.hpp"

#include <algorithm>
#include <cmath>

namespace coopo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw InputError("table shapes differ");
}

double max_abs(const Matrix& m) {
    double out = 0.0;
    for (double x : m.data) out = std::max(out, std::abs(x));
    return out;
}

Matrix identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

}  // namespace

AwacSolution awac_closed_form(const Matrix& pi_old, const Matrix& adv, double lambda) {
    require_same_shape(pi_old, adv);
    if (!(lambda > 0.0)) throw InputError("lambda must be > 0");
    AwacSolution out{Matrix(pi_old.rows, pi_old.cols), Vec(pi_old.rows)};
    Vec logit(pi_old.cols);
    for (std::size_t s = 0; s < pi_old.rows; ++s) {
        double mx = -kInf;
        for (std::size_t a = 0; a < pi_old.cols; ++a) {
            logit[a] = pi_old(s, a) > 0.0 ? std::log(pi_old(s, a)) + adv(s, a) / lambda : -kInf;
            mx = std::max(mx, logit[a]);
        }
        double sum = 0.0;
        for (double l : logit) sum += std::exp(l - mx);
        const double lse = mx + std::log(sum);
        out.log_Z[s] = lse;
        for (std::size_t a = 0; a < pi_old.cols; ++a) out.pi(s, a) = std::exp(logit[a] - lse);
    }
    return out;
}

Vec kl_per_state(const Matrix& p, const Matrix& q) {
    require_same_shape(p, q);
    Vec out(p.rows, 0.0);
    for (std::size_t s = 0; s < p.rows; ++s) {
        double k = 0.0;
        for (std::size_t a = 0; a < p.cols; ++a) {
            if (p(s, a) <= 0.0) continue;
            k += q(s, a) > 0.0 ? p(s, a) * (std::log(p(s, a)) - std::log(q(s, a))) : kInf;
        }
        out[s] = std::max(k, 0.0);
    }
    return out;
}

Vec tv_per_state(const Matrix& p, const Matrix& q) {
    require_same_shape(p, q);
    Vec out(p.rows, 0.0);
    for (std::size_t s = 0; s < p.rows; ++s) {
        for (std::size_t a = 0; a < p.cols; ++a) out[s] += std::abs(p(s, a) - q(s, a));
        out[s] *= 0.5;
    }
    return out;
}

Vec lemma1_residuals(const Matrix& pi_old, const Matrix& adv, double lambda) {
    const AwacSolution sol = awac_closed_form(pi_old, adv, lambda);
    Vec res(pi_old.rows);
    for (std::size_t s = 0; s < pi_old.rows; ++s) {
        double lhs = 0.0, kl = 0.0;
        for (std::size_t a = 0; a < pi_old.cols; ++a) {
            if (pi_old(s, a) <= 0.0) continue;
            const double p = sol.pi(s, a);
            const double log_p = std::log(pi_old(s, a)) + adv(s, a) / lambda - sol.log_Z[s];
            lhs += p * adv(s, a);
            kl += p * (log_p - std::log(pi_old(s, a)));
        }
        res[s] = std::abs(lhs - (lambda * kl + lambda * sol.log_Z[s]));
    }
    return res;
}

Concentrability concentrability(const Vec& d_pi, const Vec& rho) {
    if (d_pi.size() != rho.size()) throw InputError("distribution lengths differ");
    Concentrability c;
    for (std::size_t s = 0; s < d_pi.size(); ++s) {
        if (d_pi[s] <= 0.0) continue;
        if (rho[s] <= 0.0) {
            c.C = kInf;
            c.infinite = true;
            c.offending_state = s;
            return c;
        }
        c.C = std::max(c.C, d_pi[s] / rho[s]);
    }
    return c;
}

Concentrability concentrability(const TabularMdp& mdp, const Matrix& pi, const Matrix& pi_beta) {
    return concentrability(state_occupancy(mdp, pi, mdp.gamma), state_occupancy(mdp, pi_beta, mdp.gamma));
}

Concentrability concentrability(const TabularMdp& mdp, const Matrix& pi, const Dataset& dataset) {
    return concentrability(state_occupancy(mdp, pi, mdp.gamma), empirical_state_distribution(dataset, mdp));
}

nlohmann::json BoundReport::to_json() const {
    return {{"k", k},          {"G_off", G_off},       {"eps_adv", eps_adv},   {"eps_k", eps_k},
            {"zeta_k", zeta_k}, {"alpha_k", alpha_k},   {"Lambda_k", Lambda_k}, {"lhs", lhs},
            {"rhs", rhs},      {"satisfied", satisfied}, {"lambda", lambda},    {"J_k", J_k},
            {"J_half", J_half}, {"J_next", J_next},     {"max_kl_offline", max_kl_offline}};
}

BoundReport theorem1_check(const TabularMdp& mdp, const Matrix& pi_k, const Matrix& pi_half, const Matrix& pi_next,
                           double lambda, const std::optional<Matrix>& adv_estimate) {
    const double g = mdp.gamma;
    const ExactEval ek = exact_eval(mdp, pi_k);
    BoundReport b;
    b.lambda = lambda;
    b.J_k = ek.J;
    b.J_half = exact_eval(mdp, pi_half).J;
    b.J_next = exact_eval(mdp, pi_next).J;

    const Vec kl_half = kl_per_state(pi_half, pi_k);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (ek.d_pi[s] > 0.0) b.G_off += ek.d_pi[s] * kl_half[s];
        b.max_kl_offline = std::max(b.max_kl_offline, kl_half[s]);
    }
    if (adv_estimate) {
        require_same_shape(*adv_estimate, ek.A);
        for (std::size_t i = 0; i < ek.A.data.size(); ++i)
            b.eps_adv = std::max(b.eps_adv, std::abs(adv_estimate->data[i] - ek.A.data[i]));
    }
    b.eps_k = max_abs(ek.A);
    for (double t : tv_per_state(pi_half, pi_k)) b.zeta_k = std::max(b.zeta_k, t);
    for (double t : tv_per_state(pi_next, pi_half)) b.alpha_k = std::max(b.alpha_k, t);
    const double one_m = 1.0 - g;
    b.Lambda_k = b.eps_adv / one_m + 2.0 * g * b.eps_k * b.zeta_k / (one_m * one_m) +
                 4.0 * b.eps_k * g * b.alpha_k * b.alpha_k / (one_m * one_m);
    b.lhs = b.J_next - b.J_k;
    b.rhs = lambda / one_m * b.G_off - b.Lambda_k;
    b.satisfied = b.lhs >= b.rhs - kBoundSlack;
    return b;
}

Envelope fit_envelope(const Vec& delta) {
    Envelope env;
    if (delta.empty()) {
        env.holds = env.monotone_outside_floor = true;
        return env;
    }
    const double d0 = delta[0];
    constexpr double tol = 1e-12;
    auto rho_for = [&](double b) {
        double r = 0.0;
        for (std::size_t k = 1; k < delta.size(); ++k)
            if (delta[k] > b) r = std::max(r, std::pow((delta[k] - b) / d0, 1.0 / static_cast<double>(k)));
        return r;
    };
    if (d0 <= tol) {
        env.rho_constrained = false;
        env.rho = 0.0;
        env.floor = std::max(0.0, *std::max_element(delta.begin(), delta.end()));
    } else {
        Vec candidates{0.0};
        for (std::size_t k = 1; k < delta.size(); ++k)
            if (delta[k] > 0.0) candidates.push_back(delta[k]);
        std::sort(candidates.begin(), candidates.end());
        env.rho = kInf;
        for (double b : candidates) {
            const double r = rho_for(b);
            if (r < 1.0) {
                env.rho = r;
                env.floor = b;
                break;
            }
        }
        if (!std::isfinite(env.rho)) {
            env.floor = candidates.back();
            env.rho = rho_for(env.floor);
        }
    }
    env.holds = true;
    env.monotone_outside_floor = true;
    double rk = 1.0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        if (delta[k] > rk * std::max(d0, 0.0) + env.floor + tol) env.holds = false;
        rk *= env.rho;
        if (k + 1 < delta.size() && delta[k] > env.floor + tol && delta[k + 1] > delta[k] + tol)
            env.monotone_outside_floor = false;
    }
    return env;
}

ConvergenceTrace theorem2_trace(const TabularMdp& mdp, const Vec& J, const Vec& G_off) {
    const double j_star = value_iteration(mdp).J;
    ConvergenceTrace t;
    t.Delta.resize(J.size());
    for (std::size_t k = 0; k < J.size(); ++k) t.Delta[k] = j_star - J[k];
    t.envelope = fit_envelope(t.Delta);
    for (std::size_t k = 0; k < G_off.size() && k < t.Delta.size(); ++k) {
        if (t.Delta[k] <= 1e-12) continue;
        const double ratio = G_off[k] / t.Delta[k];
        t.kappa = std::isnan(t.kappa) ? ratio : std::min(t.kappa, ratio);
    }
    return t;
}

TabularMdp random_mdp(std::size_t S, std::size_t A, double gamma, std::size_t horizon, Rng& rng) {
    TabularMdp m;
    m.name = "random";
    m.n_states = S;
    m.n_actions = A;
    m.gamma = gamma;
    m.horizon = horizon;
    auto simplex = [&rng](std::span<double> out) {
        double total = 0.0;
        for (double& x : out) {
            double u = rng.uniform();
            while (u <= 0.0) u = rng.uniform();
            x = -std::log(u);
            total += x;
        }
        for (double& x : out) x /= total;
    };
    m.P.resize(S * A * S);
    for (std::size_t sa = 0; sa < S * A; ++sa) simplex({m.P.data() + sa * S, S});
    m.r.resize(S * A);
    for (double& x : m.r) x = rng.uniform();
    m.d0.resize(S);
    simplex(m.d0);
    m.validate();
    return m;
}

Matrix random_policy(std::size_t S, std::size_t A, Rng& rng, double scale) {
    Matrix logits(S, A);
    for (double& x : logits.data) x = scale * rng.normal();
    Matrix pi(S, A);
    for (std::size_t s = 0; s < S; ++s) {
        Vec lp(A);
        log_softmax(logits.row(s), lp);
        for (std::size_t a = 0; a < A; ++a) pi(s, a) = std::exp(lp[a]);
    }
    return pi;
}

Matrix tv_projected_step(const TabularMdp& mdp, const Matrix& pi, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must lie in [0, 1]");
    const ExactEval e = exact_eval(mdp, pi);
    Matrix out(pi.rows, pi.cols);
    for (std::size_t s = 0; s < pi.rows; ++s) {
        const auto q = e.Q.row(s);
        const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
        for (std::size_t a = 0; a < pi.cols; ++a) out(s, a) = (1.0 - beta) * pi(s, a) + (a == best ? beta : 0.0);
    }
    return out;
}

ExactRun exact_mode_run(const TabularMdp& mdp, const Matrix& pi0, double lambda, double beta, std::size_t K) {
    ExactRun run;
    Matrix pi = pi0;
    run.policies.push_back(pi);
    run.J.push_back(exact_eval(mdp, pi).J);
    for (std::size_t k = 0; k < K; ++k) {
        const ExactEval e = exact_eval(mdp, pi);
        const Matrix half = awac_closed_form(pi, e.A, lambda).pi;
        const Matrix next = tv_projected_step(mdp, half, beta);
        BoundReport b = theorem1_check(mdp, pi, half, next, lambda);
        b.k = k;
        run.bounds.push_back(b);
        pi = next;
        run.policies.push_back(pi);
        run.J.push_back(b.J_next);
    }
    return run;
}

double pinsker_gap(const Matrix& p, const Matrix& q) {
    const Vec t = tv_per_state(p, q);
    const Vec k = kl_per_state(p, q);
    double worst = -kInf;
    for (std::size_t s = 0; s < t.size(); ++s) worst = std::max(worst, t[s] - std::sqrt(k[s] / 2.0));
    return worst;
}

EmpiricalRun empirical_mode_run(const CoopoConfig& cfg, const Dataset& dataset) {
    const Environment env = make_environment(cfg);
    if (!env.discrete()) throw UnsupportedError("empirical theorem checks need a tabular environment");
    const TabularMdp& mdp = env.mdp();
    const Matrix eye = identity(mdp.n_states);
    EmpiricalRun out;
    auto note_pair = [&out](const Matrix& newer, const Matrix& older) {
        const double gap = pinsker_gap(newer, older);
        ++out.pinsker_pairs;
        if (gap > 1e-12) ++out.pinsker_violations;
        out.pinsker_worst_gap = std::max(out.pinsker_worst_gap, gap);
    };
    RunHooks hooks;
    hooks.on_cycle = [&](const CycleSnapshot& snap) {
        const Matrix start = policy_table(snap.start->pi, env);
        const Matrix mid = policy_table(snap.mid->pi, env);
        const Matrix end = policy_table(snap.end->pi, env);
        const Matrix q = forward_batch(snap.mid->q_spec, snap.mid->q, eye);
        const Matrix v = forward_batch(snap.mid->v_spec, snap.mid->v, eye);
        Matrix adv(mdp.n_states, mdp.n_actions);
        for (std::size_t s = 0; s < mdp.n_states; ++s)
            for (std::size_t a = 0; a < mdp.n_actions; ++a) adv(s, a) = q(s, a) - v(s, 0);
        BoundReport b = theorem1_check(mdp, start, mid, end, cfg.offline.lambda, adv);
        b.k = snap.k;
        out.delta = std::max(out.delta, b.max_kl_offline);
        if (out.J.empty()) out.J.push_back(b.J_k);
        out.J.push_back(b.J_next);
        out.bounds.push_back(b);
        out.concentrability.push_back(concentrability(mdp, start, dataset));
        note_pair(mid, start);
        note_pair(end, mid);
    };
    run_coopo(cfg, dataset, hooks);
    return out;
}

ClosedFormFit fit_closed_form(const Environment& env, double lambda, double tol, std::size_t max_steps, double lr) {
    if (!env.discrete()) throw UnsupportedError("closed-form fit needs a tabular environment");
    const TabularMdp& mdp = env.mdp();
    const Matrix uniform = uniform_policy(mdp.n_states, mdp.n_actions);
    const ExactEval e = exact_eval(mdp, uniform);

    ModelConfig model;
    model.tabular_direct = true;
    Policy pi = make_policy(env, model, 0);
    std::fill(pi.params().begin(), pi.params().end(), 0.0);
    const Policy ref = pi;

    TransitionTable batch(true, 1, 1);
    Vec adv;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            Transition t;
            t.s = {static_cast<double>(s)};
            t.a = {static_cast<double>(a)};
            t.s2 = {static_cast<double>(s)};
            batch.push_back(t);
            adv.push_back(e.A(s, a));
        }

    OfflineConfig cfg;
    cfg.lambda = lambda;
    cfg.kl_weight = 0.0;
    cfg.lr = lr;
    OptimizerState opt = OptimizerState::for_size(pi.params().size(), lr);

    ClosedFormFit fit;
    fit.target = awac_closed_form(uniform, e.A, lambda).pi;
    auto gap = [&] {
        fit.fitted = policy_table(pi, env);
        double worst = 0.0;
        for (double t : tv_per_state(fit.fitted, fit.target)) worst = std::max(worst, t);
        return worst;
    };
    fit.max_tv = gap();
    while (fit.steps < max_steps && fit.max_tv > tol) {
        actor_update(env, batch, adv, pi, ref, cfg, opt);
        ++fit.steps;
        fit.max_tv = gap();
    }
    return fit;
}

CoopoConfig tabular_run_config(const std::string& env_name, std::uint64_t seed) {
    const Environment env = make_benchmark(env_name);
    if (!env.discrete()) throw InputError("'" + env_name + "' is not tabular");
    CoopoConfig c;
    c.env = env_name;
    c.seed = seed;
    c.cycles = 5;
    c.eval_episodes = 20;
    c.offline.epochs = 20;
    c.offline.batch = 64;
    c.offline.lr = 0.01;
    c.offline.gamma = env.gamma();
    c.online.lr = 0.01;
    c.online.gamma = env.gamma();
    c.online.adv_normalize = false;
    c.data.tier = "medium";
    c.data.n = 1000;
    c.data.seed = derive_seed(seed, 0xda7a);
    return c;
}

}  // namespace coopo
