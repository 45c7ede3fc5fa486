#include "coopo/config.hpp"

#include <fstream>
#include <set>

namespace coopo {

using nlohmann::json;

namespace {

std::string type_name(const json& v) {
    if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
    return v.type_name();
}

// Reads keys of one JSON object and remembers which were consumed so that
// anything left over can be reported as unknown.
class Section {
public:
    Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw InputError("config: `" + name() + "` must be an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    Section sub(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(obj_.contains(key) ? obj_.at(key) : empty, qualified(key));
    }

    void count(const std::string& key, std::size_t& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "a non-negative integer", *v);
            out = v->get<std::size_t>();
        }
    }
    void seed(const std::string& key, std::uint64_t& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "a non-negative integer", *v);
            out = v->get<std::uint64_t>();
        }
    }
    void real(const std::string& key, double& out) {
        if (const json* v = get(key)) {
            if (!v->is_number()) fail(key, "a number", *v);
            out = v->get<double>();
        }
    }
    void flag(const std::string& key, bool& out) {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) fail(key, "true or false", *v);
            out = v->get<bool>();
        }
    }
    void text(const std::string& key, std::string& out) {
        if (const json* v = get(key)) {
            if (!v->is_string()) fail(key, "a string", *v);
            out = v->get<std::string>();
        }
    }
    template <class T, class Fn>
    void optional(const std::string& key, std::optional<T>& out, Fn&& read) {
        if (const json* v = get(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            T value{};
            read(key, value);
            out = value;
        }
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw InputError("config: unknown key `" + qualified(key) + "`");
    }

private:
    const json* get(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key) ? &obj_.at(key) : nullptr;
    }
    std::string name() const { return prefix_.empty() ? "<root>" : prefix_; }
    std::string qualified(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
    [[noreturn]] void fail(const std::string& key, const std::string& expected, const json& v) const {
        throw InputError("config: `" + qualified(key) + "` must be " + expected + ", got " + type_name(v));
    }

    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const json& j) {
    RunConfig rc;
    CoopoConfig& c = rc.coopo;
    Section root(j, "");
    root.seed("seed", c.seed);
    root.text("env", c.env);
    root.count("cycles", c.cycles);
    root.count("eval_episodes", c.eval_episodes);
    root.optional("eval_stochastic", c.eval_stochastic, [&](const std::string& k, bool& v) { root.flag(k, v); });
    root.flag("early_stop", c.early_stop);
    root.count("threads", rc.threads);
    double gamma = 0.99;
    root.real("gamma", gamma);
    c.offline.gamma = c.online.gamma = gamma;

    Section optim = root.sub("optim");
    std::string opt_name = "adam";
    optim.text("name", opt_name);
    if (opt_name != "adam") throw InputError("config: `optim.name` must be \"adam\"");
    double lr = 3e-4;
    optim.real("lr", lr);
    c.offline.lr = c.online.lr = lr;
    optim.real("beta_extra", rc.beta_extra);
    optim.finish();

    Section off = root.sub("offline");
    off.count("epochs", c.offline.epochs);
    off.count("batch", c.offline.batch);
    off.real("lambda", c.offline.lambda);
    off.optional("kl_weight", c.offline.kl_weight, [&](const std::string& k, double& v) { off.real(k, v); });
    off.real("w_max", c.offline.w_max);
    off.real("gamma", c.offline.gamma);
    off.real("lr", c.offline.lr);
    off.finish();

    Section on = root.sub("online");
    on.count("episodes", c.online.episodes);
    on.count("rollout_episodes", c.online.rollout_episodes);
    on.count("batch", c.online.batch);
    on.real("clip", c.online.clip);
    on.count("epochs_per_update", c.online.epochs_per_update);
    on.real("gamma", c.online.gamma);
    on.real("lr", c.online.lr);
    on.flag("adv_normalize", c.online.adv_normalize);
    on.flag("gae", c.online.gae);
    on.real("gae_lambda", c.online.gae_lambda);
    on.optional("total_step_budget", c.online.total_step_budget,
                [&](const std::string& k, std::size_t& v) { on.count(k, v); });
    on.count("buffer_size", rc.buffer_size);
    on.finish();

    Section model = root.sub("model");
    model.count("hidden_layers", c.model.hidden_layers);
    model.count("hidden_units", c.model.hidden_units);
    std::string act = to_string(c.model.activation);
    model.text("activation", act);
    try {
        c.model.activation = activation_from_string(act);
    } catch (const InputError&) {
        throw InputError("config: `model.activation` must be \"relu\" or \"tanh\"");
    }
    model.flag("tabular_direct", c.model.tabular_direct);
    model.real("init_log_std", c.model.init_log_std);
    model.finish();

    Section data = root.sub("data");
    data.text("path", c.data.path);
    data.text("tier", c.data.tier);
    data.count("n", c.data.n);
    data.seed("seed", c.data.seed);
    data.finish();

    Section metrics = root.sub("metrics");
    metrics.flag("wall_clock", c.wall_clock);
    metrics.finish();

    Section cmp = root.sub("compare");
    cmp.real("threshold", rc.compare.threshold);
    cmp.count("seeds", rc.compare.seeds);
    cmp.finish();
    root.finish();

    if (rc.threads < 1) throw InputError("config: `threads` must be >= 1");
    if (rc.compare.seeds < 1) throw InputError("config: `compare.seeds` must be >= 1");
    if (c.data.tier != "expert" && c.data.tier != "medium" && c.data.tier != "random")
        throw InputError("config: `data.tier` must be expert, medium or random");
    if (!c.data.path.empty() && !std::filesystem::exists(c.data.path))
        throw InputError("config: `data.path` file '" + c.data.path + "' does not exist");
    if (c.env.ends_with(".json") && !std::filesystem::exists(c.env))
        throw InputError("config: `env` file '" + c.env + "' does not exist");
    try {
        c.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return rc;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config file '" + path.string() + "' not found");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path.string() + "': " + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& rc) {
    const CoopoConfig& c = rc.coopo;
    json j;
    j["seed"] = c.seed;
    j["env"] = c.env;
    j["cycles"] = c.cycles;
    j["eval_episodes"] = c.eval_episodes;
    j["eval_stochastic"] = c.eval_stochastic ? json(*c.eval_stochastic) : json(nullptr);
    j["early_stop"] = c.early_stop;
    j["threads"] = rc.threads;
    j["optim"] = {{"name", "adam"}, {"beta_extra", rc.beta_extra}};
    j["offline"] = {{"epochs", c.offline.epochs},
                    {"batch", c.offline.batch},
                    {"lambda", c.offline.lambda},
                    {"kl_weight", c.offline.kl_coef()},
                    {"w_max", c.offline.w_max},
                    {"gamma", c.offline.gamma},
                    {"lr", c.offline.lr}};
    j["online"] = {{"episodes", c.online.episodes},
                   {"rollout_episodes", c.online.rollout_episodes},
                   {"batch", c.online.batch},
                   {"clip", c.online.clip},
                   {"epochs_per_update", c.online.epochs_per_update},
                   {"gamma", c.online.gamma},
                   {"lr", c.online.lr},
                   {"adv_normalize", c.online.adv_normalize},
                   {"gae", c.online.gae},
                   {"gae_lambda", c.online.gae_lambda},
                   {"total_step_budget",
                    c.online.total_step_budget ? json(*c.online.total_step_budget) : json(nullptr)},
                   {"buffer_size", rc.buffer_size}};
    j["model"] = {{"hidden_layers", c.model.hidden_layers},
                  {"hidden_units", c.model.hidden_units},
                  {"activation", to_string(c.model.activation)},
                  {"tabular_direct", c.model.tabular_direct},
                  {"init_log_std", c.model.init_log_std}};
    j["data"] = {{"path", c.data.path}, {"tier", c.data.tier}, {"n", c.data.n}, {"seed", c.data.seed}};
    j["metrics"] = {{"wall_clock", c.wall_clock}};
    j["compare"] = {{"threshold", rc.compare.threshold}, {"seeds", rc.compare.seeds}};
    return j;
}

}  // namespace coopo
