#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "mobnet/error.hpp"
#include "mobnet/pipeline.hpp"
#include "mobnet/synth.hpp"

namespace fs = std::filesystem;
using namespace mobnet;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> permutations;
    std::optional<unsigned> jobs;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--permutations", f.permutations, "permutation replicates B");
    cmd->add_option("--jobs", f.jobs, "worker threads (0 = hardware)");
    cmd->add_option("--out", f.out, "output directory");
}

pipeline::RunConfig resolve(const CommonFlags& f) {
    auto cfg = f.config.empty() ? pipeline::RunConfig{} : pipeline::RunConfig::load(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.permutations) cfg.permutations = *f.permutations;
    if (f.jobs) cfg.jobs = *f.jobs;
    if (f.out) cfg.out = *f.out;
    return cfg;
}

int report(const pipeline::RunResult& r) {
    if (r.exit_code != 0)
        std::cerr << "mobnet: stage " << r.failed_stage.value_or("?") << " failed: " << r.error << "\n";
    return r.exit_code;
}

int run_synth(const CommonFlags& f, const std::optional<int>& regions, const std::optional<int>& years,
              const std::optional<double>& asymmetry) {
    synth::SynthConfig cfg;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InputError("config " + f.config + " is not valid JSON: " + e.what());
        }
        cfg = synth::config_from_json(j);
    }
    if (f.seed) cfg.seed = *f.seed;
    if (regions) cfg.n_regions = *regions;
    if (years) cfg.n_years = *years;
    if (asymmetry) cfg.asymmetry = *asymmetry;
    const auto bundle = synth::generate_synthetic(cfg);
    synth::write_bundle(bundle, f.out.value_or("mobnet-synth"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mobnet: researcher mobility networks, permutation tests and gravity models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mobnet 0.1.0");

    CommonFlags flags;
    std::string selected;
    for (const auto& stage : pipeline::stage_names()) {
        auto* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
        add_common(cmd, flags);
    }
    std::vector<std::string> stages;
    auto* pipe = app.add_subcommand("pipeline", "run the configured stages end to end");
    add_common(pipe, flags);
    pipe->add_option("--stages", stages, "subset of stages to run, in order");

    std::optional<int> synth_regions, synth_years;
    std::optional<double> synth_asymmetry;
    auto* syn = app.add_subcommand("synth", "write a synthetic gravity-law dataset");
    add_common(syn, flags);
    syn->add_option("--regions", synth_regions, "number of regions (>= 5)");
    syn->add_option("--years", synth_years, "number of years (>= 2)");
    syn->add_option("--asymmetry", synth_asymmetry, "sender/receiver asymmetry strength");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        if (name == "synth") return run_synth(flags, synth_regions, synth_years, synth_asymmetry);
        const auto cfg = resolve(flags);
        if (name == "pipeline") {
            auto run = cfg;
            if (!stages.empty()) run.stages = stages;
            return report(pipeline::run_stages(run, {}, "manifest.json"));
        }
        return report(pipeline::run_stages(cfg, {name}, name + ".manifest.json"));
    } catch (const InputError& e) {
        std::cerr << "mobnet: input error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "mobnet: numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "mobnet: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mobnet: " << e.what() << "\n";
        return 3;
    }
}
