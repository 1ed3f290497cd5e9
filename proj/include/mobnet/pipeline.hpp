#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/ingest.hpp"

namespace mobnet::pipeline {

// Ordered stage names; each is also a CLI subcommand.
const std::vector<std::string>& stage_names();

struct Inputs {
    std::filesystem::path affiliations;
    std::filesystem::path regions;
    std::optional<std::filesystem::path> aliases;
    std::optional<std::filesystem::path> denominators;
    std::optional<std::filesystem::path> rankings;
    std::optional<std::filesystem::path> procurements;
    std::optional<std::filesystem::path> gdp_regional;
    std::optional<std::filesystem::path> gdp_national;
    std::optional<std::filesystem::path> gdp_benchmark;
    std::optional<std::filesystem::path> edu;
    std::optional<std::filesystem::path> attainment;
    std::optional<std::filesystem::path> language_families;
};

struct RunConfig {
    Inputs inputs;
    ingest::YearRange years{2009, 2020};
    std::vector<std::string> universe;  // empty: every region of the map
    std::optional<ingest::Normalization> normalization;
    std::optional<double> fuzzy_threshold;
    std::uint64_t seed = 1;
    std::size_t permutations = 999;
    unsigned jobs = 0;
    std::filesystem::path out = "mobnet-out";
    std::vector<std::string> stages;  // empty: all
    double quantile = 0.9;
    double score_cutoff = 0.25;
    double hits_tol = 1e-10;
    int hits_max_iter = 1000;
    double spearman_lambda = 1.0;
    std::vector<std::string> network_variants{"final", "symmetric", "asymmetric_extended"};
    std::vector<std::string> mobility_variants{"final"};
    std::vector<std::string> mobility_responses{"total", "in", "out"};
    std::vector<int> knot_sensitivity{6, 14};
    int n_knots = 10;
    double log10_lambda_min = -6.0;
    double log10_lambda_max = 6.0;
    double log10_lambda_step = 0.5;

    // Relative input paths resolve against `base`.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

struct RunResult {
    int exit_code = 0;
    std::optional<std::string> failed_stage;
    std::string error;
    nlohmann::json manifest;
};

// Runs the listed stages (config.stages when empty, all when both are
// empty) and writes `manifest_name` into the output directory. Stages read
// upstream artifacts from the output directory when they were not produced
// in this run.
RunResult run_stages(const RunConfig& config, const std::vector<std::string>& stages,
                     const std::string& manifest_name = "manifest.json");

RunResult run_pipeline(const RunConfig& config);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace mobnet::pipeline
