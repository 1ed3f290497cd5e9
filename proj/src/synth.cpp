#include "mobnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"
#include "mobnet/models.hpp"
#include "mobnet/random.hpp"

namespace mobnet::synth {

namespace {

struct Country {
    const char* code;
    double lat, lon;
};

// Neighbouring families on purpose: same_lan and same_country differ.
constexpr Country kCountries[] = {
    {"DE", 51.0, 10.0}, {"FR", 46.5, 2.5},  {"IT", 42.5, 12.5}, {"ES", 40.0, -3.7},
    {"PL", 52.0, 19.0}, {"NL", 52.2, 5.5},  {"AT", 47.5, 14.5}, {"BE", 50.6, 4.5},
    {"SE", 60.0, 15.0}, {"PT", 39.5, -8.0}, {"CZ", 49.8, 15.5}, {"FI", 62.0, 25.0},
};

std::string two_digits(int v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", v);
    return buf;
}

std::ofstream open(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

}  // namespace

SynthConfig config_from_json(const nlohmann::json& j, SynthConfig c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_regions", c.n_regions);
    get("first_year", c.first_year);
    get("n_years", c.n_years);
    get("base_rate", c.base_rate);
    get("beta_uni", c.beta_uni);
    get("beta_ted", c.beta_ted);
    get("gamma", c.gamma);
    get("beta_country", c.beta_country);
    get("year_trend", c.year_trend);
    get("asymmetry", c.asymmetry);
    get("unresolved_share", c.unresolved_share);
    get("seed", c.seed);
    return c;
}

nlohmann::json to_json(const SynthConfig& c) {
    return {{"n_regions", c.n_regions},   {"first_year", c.first_year}, {"n_years", c.n_years},
            {"base_rate", c.base_rate},   {"beta_uni", c.beta_uni},     {"beta_ted", c.beta_ted},
            {"gamma", c.gamma},           {"beta_country", c.beta_country}, {"year_trend", c.year_trend},
            {"asymmetry", c.asymmetry},   {"unresolved_share", c.unresolved_share}, {"seed", c.seed}};
}

SynthBundle generate_synthetic(const SynthConfig& config) {
    if (config.n_regions < 5) throw InputError("synthetic data needs at least 5 regions");
    if (config.n_years < 2) throw InputError("synthetic data needs at least 2 years");
    if (!(config.base_rate > 0.0)) throw InputError("base_rate must be positive");
    if (!(config.unresolved_share >= 0.0)) throw InputError("unresolved_share must be >= 0");

    SynthBundle b;
    b.config = config;
    b.years = {config.first_year, config.first_year + config.n_years - 1};

    const int n_countries = std::clamp((config.n_regions + 2) / 3, 2, static_cast<int>(std::size(kCountries)));
    Rng geo(config.seed, 1);
    std::vector<std::string> codes;
    std::vector<int> per_country(static_cast<std::size_t>(n_countries), 0);
    for (int i = 0; i < config.n_regions; ++i) {
        const int c = i % n_countries;
        const Country& country = kCountries[c];
        const int k = per_country[static_cast<std::size_t>(c)]++;
        std::string code = country.code;
        // Belgian codes cycle through the three language areas.
        code += std::string(country.code) == "BE" ? std::to_string(1 + k % 3) + std::to_string(k / 3 + 1)
                                                   : two_digits(k + 1);
        const double lat = country.lat + 3.0 * (geo.uniform() - 0.5);
        const double lon = country.lon + 4.0 * (geo.uniform() - 0.5);
        b.regions.add_region(code, country.code, {lat, lon});
        b.regions.add_alias("Région " + code, code);
        codes.push_back(code);
    }
    std::sort(codes.begin(), codes.end());

    Rng cov(config.seed, 2);
    std::map<std::string, double> gdp_level, edu_level, ted_level, population;
    std::map<std::string, std::vector<double>> uni_base;
    for (const auto& r : codes) {
        gdp_level[r] = 15000.0 + 35000.0 * cov.uniform();
        edu_level[r] = 0.6 + 0.3 * cov.uniform();
        ted_level[r] = 16.0 + 1.2 * cov.normal();
        population[r] = 5e5 + 4.5e6 * cov.uniform();
        const int universities = 1 + static_cast<int>(cov.below(3));
        for (int u = 0; u < universities; ++u) uni_base[r].push_back(1.0 + std::floor(449.0 * cov.uniform()));
    }
    for (int y = b.years.first; y <= b.years.last; ++y) {
        const double growth = 1.0 + 0.02 * (y - b.years.first);
        std::map<std::string, std::pair<double, int>> national;
        for (const auto& r : codes) {
            const double g = gdp_level[r] * growth * std::exp(0.03 * cov.normal());
            b.sources.gdp_regional[{r, y}] = g;
            auto& n = national[b.regions.country(r)];
            n.first += g;
            ++n.second;
            b.sources.edu[{r, y}] = std::clamp(edu_level[r] + 0.02 * cov.normal(), 0.0, 1.0);
            const auto& bases = uni_base[r];
            for (std::size_t u = 0; u < bases.size(); ++u) {
                const double jitter = (0.1 * bases[u] + 2.0) * cov.normal();
                const int position = static_cast<int>(std::clamp(std::round(bases[u] + jitter), 1.0, 500.0));
                b.sources.rankings.push_back({y, r + "-U" + std::to_string(u + 1), position, r});
            }
            for (int k = 0; k < 4; ++k) {
                const double value = std::round(std::exp(ted_level[r] + 0.8 * cov.normal()));
                const bool awarded = k == 0 || cov.uniform() < 0.75;
                b.sources.procurements.push_back({y, r, value, awarded});
            }
            b.regions.set_population(r, y, std::round(population[r] * growth));
            b.regions.set_researchers(r, y, std::round(population[r] * growth * (0.002 + 0.004 * cov.uniform())));
        }
        for (const auto& [country, n] : national) {
            const double table = n.first / n.second;
            b.sources.gdp_table_national[{country, y}] = table;
            b.sources.gdp_benchmark[{country, y}] = table * (0.8 + 0.5 * cov.uniform());
        }
    }
    b.panel = covariates::build_panel(b.sources, b.regions, b.years);

    using covariates::Indicator;
    double mean_u = 0.0, mean_t = 0.0, sq_t = 0.0;
    std::size_t cells = 0;
    for (const auto& r : codes)
        for (int y = b.years.first; y <= b.years.last; ++y) {
            mean_u += b.panel.at(r, y, Indicator::uni_score);
            const double t = b.panel.at(r, y, Indicator::ted);
            mean_t += t;
            sq_t += t * t;
            ++cells;
        }
    mean_u /= static_cast<double>(cells);
    mean_t /= static_cast<double>(cells);
    const double sd_t = std::sqrt(std::max(1e-12, sq_t / static_cast<double>(cells) - mean_t * mean_t));

    std::map<std::pair<std::string, std::string>, double> log_dist;
    double mean_ld = 0.0;
    for (const auto& s : codes)
        for (const auto& r : codes)
            if (s != r) {
                const double d = std::log(std::max(1.0, model::geodesic_distance(b.regions.centroid(s), b.regions.centroid(r))));
                log_dist[{s, r}] = d;
                mean_ld += d;
            }
    mean_ld /= static_cast<double>(log_dist.size());

    Rng flow_rng(config.seed, 3);
    for (int y = b.years.first; y <= b.years.last; ++y)
        b.year_effects[y] = config.year_trend * (y - b.years.first) + 0.05 * flow_rng.normal();

    b.flows = ingest::FlowTable(b.years, b.regions.region_set(), ingest::Scope::internal);
    for (int y = b.years.first; y <= b.years.last; ++y) {
        for (const auto& s : codes) {
            for (const auto& r : codes) {
                if (s == r) continue;
                const double us = b.panel.at(s, y, Indicator::uni_score), ur = b.panel.at(r, y, Indicator::uni_score);
                const double ts = b.panel.at(s, y, Indicator::ted), tr = b.panel.at(r, y, Indicator::ted);
                const bool same_country = b.regions.country(s) == b.regions.country(r);
                double eta = std::log(config.base_rate) + b.year_effects[y] +
                             config.beta_uni * (us + ur - 2.0 * mean_u) +
                             config.beta_ted * std::tanh((ts + tr - 2.0 * mean_t) / (2.0 * sd_t)) -
                             config.gamma * (log_dist[{s, r}] - mean_ld) + (same_country ? config.beta_country : 0.0);
                eta += config.asymmetry * (config.beta_uni * (ur - us) + config.beta_ted * std::tanh((tr - ts) / sd_t));
                const double mu = std::exp(eta);
                const ingest::FlowKey key{y, s, r};
                b.means[key] = mu;
                b.expected_total += mu;
                const auto count = flow_rng.poisson(mu);
                if (count > 0) b.flows.add(key, static_cast<double>(count));
            }
        }
    }
    b.unresolved_people = static_cast<std::size_t>(std::ceil(config.unresolved_share * b.flows.total()));
    return b;
}

nlohmann::json SynthBundle::truth() const {
    nlohmann::json j;
    j["config"] = to_json(config);
    j["law"] =
        "log mu = log(base_rate) + year_effect + beta_uni*(u_s+u_r-2*mean_u) + beta_ted*tanh((t_s+t_r-2*mean_t)/(2*sd_t))"
        " - gamma*(log d - mean_log_d) + beta_country*same_country + asymmetry*(beta_uni*(u_r-u_s) + "
        "beta_ted*tanh((t_r-t_s)/sd_t))";
    nlohmann::json years = nlohmann::json::object();
    for (const auto& [y, v] : year_effects) years[std::to_string(y)] = v;
    j["year_effects"] = years;
    j["expected_total"] = expected_total;
    j["drawn_total"] = flows.total();
    j["events"] = flows.total();
    j["unresolved_people"] = unresolved_people;
    return j;
}

void write_bundle(const SynthBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open(dir / "affiliations.csv");
        csv::Writer w(out);
        w.row({"person_id", "place", "start_year", "end_year", "kind"});
        std::size_t person = 0;
        auto id = [](std::size_t p) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "p%07zu", p);
            return std::string(buf);
        };
        for (const auto& [key, count] : b.flows.entries()) {
            const int year = *key.year;
            for (long k = 0; k < static_cast<long>(count); ++k, ++person) {
                std::string from;
                switch (person % 3) {
                    case 0: from = key.sender; break;
                    case 1: from = "RÉGION " + key.sender; break;
                    default: {
                        from = key.sender;
                        std::transform(from.begin(), from.end(), from.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                    }
                }
                const std::string kind = person % 5 == 0 ? "education" : "employment";
                w.row({id(person), from, std::to_string(year - 3), std::to_string(year - 1), kind});
                w.row({id(person), key.receiver, std::to_string(year), "", "employment"});
            }
        }
        const auto codes = b.regions.regions();
        for (std::size_t k = 0; k < b.unresolved_people; ++k, ++person) {
            const int year = b.years.first + static_cast<int>(k % static_cast<std::size_t>(b.years.size()));
            w.row({id(person), codes[k % codes.size()], std::to_string(year - 2), std::to_string(year - 1), "employment"});
            w.row({id(person), "Atlantis", std::to_string(year), "", "employment"});
        }
    }
    {
        auto out = open(dir / "regions.csv");
        b.regions.write_metadata(out);
    }
    {
        auto out = open(dir / "aliases.csv");
        b.regions.write_aliases(out);
    }
    {
        auto out = open(dir / "denominators.csv");
        b.regions.write_denominators(out);
    }
    {
        auto out = open(dir / "rankings.csv");
        covariates::write_rankings(out, b.sources.rankings);
    }
    {
        auto out = open(dir / "procurements.csv");
        covariates::write_procurements(out, b.sources.procurements);
    }
    {
        auto out = open(dir / "gdp_regional.csv");
        covariates::write_region_values(out, b.sources.gdp_regional);
    }
    {
        auto out = open(dir / "gdp_national.csv");
        covariates::write_country_values(out, b.sources.gdp_table_national);
    }
    {
        auto out = open(dir / "gdp_benchmark.csv");
        covariates::write_country_values(out, b.sources.gdp_benchmark);
    }
    {
        auto out = open(dir / "edu.csv");
        covariates::write_region_values(out, b.sources.edu);
    }
    {
        auto out = open(dir / "language_families.csv");
        model::LanguageFamilies::bundled().write(out);
    }
    {
        auto out = open(dir / "flows_truth.csv");
        ingest::write_flow_table(out, b.flows);
    }
    {
        auto out = open(dir / "truth.json");
        out << b.truth().dump(2) << "\n";
    }
}

}  // namespace mobnet::synth
