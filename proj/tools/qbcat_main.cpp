#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qbcat/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qbcat-lab: incremental active-learning laboratory for visual triples"};
    app.require_subcommand(1);

    std::string gen_config, run_config, report_dir;
    std::vector<std::string> gen_overrides, run_overrides;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
    gen->add_option("config", gen_config, "JSON generator config")->required();
    gen->add_option("--set", gen_overrides, "override a config key, e.g. --set seed=7");

    CLI::App* run = app.add_subcommand("run", "run the experiment grid");
    run->add_option("config", run_config, "JSON experiment config")->required();
    run->add_option("--set", run_overrides, "override a config key, e.g. --set train.lr=0.02");

    CLI::App* report = app.add_subcommand("report", "aggregate a results directory");
    report->add_option("results_dir", report_dir, "directory written by 'run'")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            qbcat::GenDataConfig cfg;
            try {
                cfg = qbcat::load_gen_data_config(gen_config, gen_overrides);
            } catch (const std::exception& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return kExitConfig;
            }
            qbcat::generate_dataset(cfg);
        } else if (run->parsed()) {
            qbcat::ExperimentConfig cfg;
            try {
                cfg = qbcat::load_experiment_config(run_config, run_overrides);
            } catch (const std::exception& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return kExitConfig;
            }
            qbcat::run_experiment(cfg);
        } else if (report->parsed()) {
            qbcat::write_reports(report_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
