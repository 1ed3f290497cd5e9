#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobnet/covariates.hpp"
#include "mobnet/ingest.hpp"

namespace mobnet::synth {

// Poisson gravity law on the log scale:
//   log mu = log(base_rate) + year_effect
//          + beta_uni * (u_s + u_r - 2 mean_u)
//          + beta_ted * tanh((t_s + t_r - 2 mean_t) / (2 sd_t))
//          - gamma * (log d - mean log d) + beta_country * same_country
//          + asymmetry * (beta_uni * (u_r - u_s) + beta_ted * tanh((t_r - t_s) / sd_t))
// With asymmetry = 0 the law is invariant under swapping sender and receiver.
struct SynthConfig {
    int n_regions = 12;
    int first_year = 2009;
    int n_years = 4;
    double base_rate = 20.0;
    double beta_uni = 1.5;
    double beta_ted = 0.6;
    double gamma = 0.8;
    double beta_country = 0.7;
    double year_trend = 0.08;
    double asymmetry = 0.0;
    // Extra people whose affiliations cannot be resolved to any region.
    double unresolved_share = 0.02;
    std::uint64_t seed = 1;
};

SynthConfig config_from_json(const nlohmann::json& j, SynthConfig base = {});
nlohmann::json to_json(const SynthConfig& config);

struct SynthBundle {
    SynthConfig config;
    ingest::YearRange years;
    ingest::RegionMap regions;
    covariates::IndicatorSources sources;
    covariates::RegionYearPanel panel;  // built from the sources
    ingest::FlowTable flows;            // drawn per-year counts
    std::map<ingest::FlowKey, double> means;
    std::map<int, double> year_effects;
    double expected_total = 0.0;
    std::size_t unresolved_people = 0;

    nlohmann::json truth() const;
};

SynthBundle generate_synthetic(const SynthConfig& config);

// Writes the bundle as the CLI's input files: affiliations.csv (two
// affiliations per move), regions.csv, aliases.csv, denominators.csv,
// rankings.csv, procurements.csv, gdp_regional.csv, gdp_national.csv,
// gdp_benchmark.csv, edu.csv, language_families.csv, truth.json and
// flows_truth.csv.
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir);

}  // namespace mobnet::synth
