#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskdiff/experiments.hpp"

namespace {

int cmd_list() {
    for (const auto& name : maskdiff::experiment_names()) std::cout << name << '\n';
    return 0;
}

int cmd_run(const std::string& config_path, bool have_seed, std::uint64_t seed, bool have_trials,
            long trials, const std::vector<double>& kappas, std::string out, bool force) {
    nlohmann::json cfg;
    {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config file " << config_path << '\n';
            return 2;
        }
        try {
            in >> cfg;
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "error: " << config_path << " is not valid JSON: " << e.what() << '\n';
            return 2;
        }
    }
    if (have_seed) cfg["seed"] = seed;
    if (have_trials) cfg["trials"] = trials;
    if (!kappas.empty()) cfg["schedule"]["kappas"] = kappas;
    if (!out.empty()) cfg["out"] = out;
    if (out.empty() && cfg.contains("out")) out = cfg.at("out").get<std::string>();

    maskdiff::ResultTable table = maskdiff::run_experiment(cfg);

    std::printf("experiment %s  (seed %llu, %zu rows, %.0f ms)\n", table.experiment.c_str(),
                static_cast<unsigned long long>(table.seed), table.rows.size(), table.wall_ms);
    int failed = 0;
    for (const auto& a : table.assertions) {
        std::printf("[%s] %s%s%s\n", a.pass ? "PASS" : "FAIL", a.name.c_str(),
                    a.detail.empty() ? "" : "  ", a.detail.c_str());
        if (!a.pass) ++failed;
    }
    if (!table.assertions.empty()) {
        std::printf("%zu/%zu assertions passed\n", table.assertions.size() - failed,
                    table.assertions.size());
    }
    if (!out.empty()) {
        maskdiff::write_outputs(table, out, force);
        std::printf("wrote %s and %s.meta.json\n", out.c_str(), out.c_str());
    } else {
        std::printf("\n%s", maskdiff::result_csv(table).c_str());
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"verification experiments for masked-diffusion samplers"};
    app.require_subcommand(1);

    auto* list = app.add_subcommand("list", "list available experiments");

    auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
    std::string config_path;
    run->add_option("config", config_path, "path to the experiment config (JSON)")->required();
    std::uint64_t seed = 0;
    auto* seed_opt = run->add_option("--seed", seed, "override the master seed");
    long trials = 0;
    auto* trials_opt = run->add_option("--trials", trials, "override the trial/instance count");
    std::vector<double> kappas;
    run->add_option("--kappa", kappas, "override the step-size list")->delimiter(',');
    std::string out;
    run->add_option("--out", out, "write results to this CSV (plus .meta.json sidecar)");
    bool force = false;
    run->add_flag("--force", force, "overwrite outputs even if the recorded config differs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) return cmd_list();
        return cmd_run(config_path, seed_opt->count() > 0, seed, trials_opt->count() > 0, trials,
                       kappas, out, force);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
