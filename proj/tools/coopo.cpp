#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "coopo/commands.hpp"
#include "coopo/metrics.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumeric = 2;

struct Options {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    fs::path out = "out";
    std::vector<std::string> algos;
    std::optional<std::string> env;
    std::string tier = "medium";
    std::size_t n = 10000;
    std::string run_id;
    std::vector<double> lambdas;
    std::string suite = "all";
    fs::path in;
    std::string x = "traj_cum";
};

coopo::RunConfig resolve(const Options& o) {
    coopo::RunConfig rc = coopo::load_run_config(o.config, o.seed);
    if (o.env) {
        json j = coopo::to_json(rc);
        j["env"] = *o.env;
        rc = coopo::parse_config(j);
    }
    return rc;
}

int cmd_train(const Options& o) {
    const coopo::RunConfig rc = resolve(o);
    const std::string algo = o.algos.empty() ? "coopo" : o.algos.front();
    if (o.algos.size() > 1) throw coopo::InputError("train takes a single --algo");
    const std::string id = o.run_id.empty() ? algo + "/s" + std::to_string(rc.coopo.seed) : o.run_id;
    const coopo::RunResult r = coopo::train(rc, algo, o.out, id);
    json j = {{"run_id", id}, {"cycles", r.reports.size()}, {"env_steps", r.env_steps},
              {"trajectories", r.trajectories}, {"out", o.out.string()}};
    if (!r.reports.empty()) j["final_return"] = r.reports.back().return_after;
    std::cout << j.dump() << '\n';
    return kExitOk;
}

int cmd_gen_data(const Options& o) {
    const std::string env = o.env.value_or("chain5");
    const std::uint64_t seed = o.seed.value_or(1);
    const fs::path path = o.out.has_extension() ? o.out : o.out / (env + "_" + o.tier + ".jsonl");
    const coopo::Dataset d = coopo::gen_data(env, o.tier, o.n, seed, path);
    std::cout << json{{"path", path.string()}, {"n", d.size()}, {"checksum", coopo::hex64(d.checksum())}}.dump()
              << '\n';
    return kExitOk;
}

int cmd_verify(const Options& o) {
    std::vector<std::string> suites;
    if (o.suite == "all")
        suites = coopo::kSuites;
    else
        suites = {o.suite};
    const std::uint64_t seed = o.seed.value_or(0);
    bool pass = true;
    json all = json::array();
    for (const auto& s : suites) {
        json r = coopo::verify_suite(s, seed);
        pass = pass && r.at("pass").get<bool>();
        all.push_back(r);
    }
    const json report = suites.size() == 1 ? all.front() : json{{"suite", "all"}, {"pass", pass}, {"suites", all}};
    std::cout << report.dump(2) << '\n';
    fs::create_directories(o.out);
    std::ofstream(o.out / ("verify_" + o.suite + ".json")) << report.dump(2) << '\n';
    return pass ? kExitOk : kExitInvalid;
}

int cmd_compare(const Options& o) {
    const coopo::RunConfig rc = resolve(o);
    const std::vector<std::string> algos = o.algos.empty() ? std::vector<std::string>{"ppo", "coopo"} : o.algos;
    std::cout << coopo::compare(rc, algos, o.lambdas, o.out).dump(2) << '\n';
    return kExitOk;
}

int cmd_export(const Options& o) {
    if (o.in.empty()) throw coopo::InputError("export-plots needs --in");
    json files = json::array();
    for (const auto& p : coopo::export_plots(o.in, o.out, o.x)) files.push_back(p.string());
    std::cout << json{{"written", files}}.dump() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"COOPO: cyclic offline-online policy optimization"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* c) {
        c->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        c->add_option("--seed", o.seed, "master seed (overrides COOPO_SEED and the config)");
        c->add_option("--out", o.out, "output directory")->capture_default_str();
    };

    CLI::App* train = app.add_subcommand("train", "run COOPO or the PPO baseline");
    common(train);
    train->add_option("--algo", o.algos, "coopo or ppo");
    train->add_option("--env", o.env, "environment override");
    train->add_option("--run-id", o.run_id, "run_id column value");

    CLI::App* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    gen->add_option("--env", o.env, "environment")->required();
    gen->add_option("--tier", o.tier, "expert, medium or random")->capture_default_str();
    gen->add_option("--n", o.n, "transition count")->capture_default_str();
    gen->add_option("--seed", o.seed, "dataset seed");
    gen->add_option("--out", o.out, "output file (.jsonl) or directory")->capture_default_str();

    CLI::App* verify = app.add_subcommand("verify", "run a theory suite");
    verify->add_option("--suite", o.suite, "lemma1, closed_form, pinsker, theorem1, theorem2, concentrability, all")
        ->capture_default_str();
    verify->add_option("--seed", o.seed, "instance seed");
    verify->add_option("--out", o.out, "directory for the JSON report")->capture_default_str();

    CLI::App* cmp = app.add_subcommand("compare", "multi-seed comparison of algorithms");
    common(cmp);
    cmp->add_option("--algo", o.algos, "repeatable: coopo, ppo");
    cmp->add_option("--lambda", o.lambdas, "repeatable: one COOPO curve per value");
    cmp->add_option("--env", o.env, "environment override");

    CLI::App* exp = app.add_subcommand("export-plots", "per-figure CSV bundles from metrics files");
    exp->add_option("--in", o.in, "metrics directory")->required();
    exp->add_option("--out", o.out, "output directory")->capture_default_str();
    exp->add_option("--x", o.x, "x column")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*train) return cmd_train(o);
        if (*gen) return cmd_gen_data(o);
        if (*verify) return cmd_verify(o);
        if (*cmp) return cmd_compare(o);
        if (*exp) return cmd_export(o);
    } catch (const coopo::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const coopo::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
