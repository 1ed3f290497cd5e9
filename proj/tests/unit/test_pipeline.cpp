#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mobnet/covariates.hpp"
#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"
#include "mobnet/models.hpp"
#include "mobnet/network.hpp"
#include "mobnet/pipeline.hpp"
#include "mobnet/synth.hpp"

using namespace mobnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mobnet_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json sample_config(const fs::path& data, int first, int last) {
    return {{"inputs",
             {{"affiliations", (data / "affiliations.csv").string()},
              {"regions", (data / "regions.csv").string()},
              {"aliases", (data / "aliases.csv").string()},
              {"denominators", (data / "denominators.csv").string()},
              {"rankings", (data / "rankings.csv").string()},
              {"procurements", (data / "procurements.csv").string()},
              {"gdp_regional", (data / "gdp_regional.csv").string()},
              {"gdp_national", (data / "gdp_national.csv").string()},
              {"gdp_benchmark", (data / "gdp_benchmark.csv").string()},
              {"edu", (data / "edu.csv").string()},
              {"language_families", (data / "language_families.csv").string()}}},
            {"years", {first, last}},
            {"permutations", 49},
            {"knot_sensitivity", json::array()}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return files;
}

}  // namespace

TEST_CASE("synthetic generator contract") {
    synth::SynthConfig c;
    c.seed = 17;
    const auto a = synth::generate_synthetic(c);
    const auto b = synth::generate_synthetic(c);
    CHECK(a.flows.entries() == b.flows.entries());
    CHECK(a.truth() == b.truth());

    // expected total matches the draw
    CHECK(std::abs(a.flows.total() - a.expected_total) <= 3 * std::sqrt(a.expected_total));
    double sum = 0.0;
    for (const auto& [k, mu] : a.means) sum += mu;
    CHECK(sum == doctest::Approx(a.expected_total).epsilon(1e-12));

    // symmetric law when asymmetry is off
    for (const auto& [k, mu] : a.means) {
        const ingest::FlowKey swapped{k.year, k.receiver, k.sender};
        CHECK(a.means.at(swapped) == doctest::Approx(mu).epsilon(1e-12));
    }
    c.asymmetry = 1.0;
    const auto asym = synth::generate_synthetic(c);
    double max_ratio = 0.0;
    for (const auto& [k, mu] : asym.means)
        max_ratio = std::max(max_ratio, std::abs(std::log(mu / asym.means.at({k.year, k.receiver, k.sender}))));
    CHECK(max_ratio > 0.5);

    synth::SynthConfig bad;
    bad.n_regions = 4;
    CHECK_THROWS_AS(synth::generate_synthetic(bad), InputError);
    bad = {};
    bad.n_years = 1;
    CHECK_THROWS_AS(synth::generate_synthetic(bad), InputError);
}

TEST_CASE("dyad frame contract") {
    synth::SynthConfig c;
    c.n_regions = 10;
    c.n_years = 3;
    const auto b = synth::generate_synthetic(c);
    const auto frame = model::build_dyad_frame(b.flows, covariates::impute_panel(b.panel, b.regions), b.regions,
                                               model::LanguageFamilies::bundled(), b.years);
    CHECK(frame.rows.size() == 10u * 9u * 3u);
    for (const auto& r : frame.rows) {
        CHECK(r.sender != r.receiver);
        CHECK(r.response == doctest::Approx(std::log(r.flow + 1)).epsilon(1e-15));
        CHECK(r.response >= 0);
        const auto country = b.regions.country(r.sender);
        if (r.same_country && country != "BE" && country != "CH") CHECK(r.same_lan);
    }
    std::ostringstream out;
    model::write_dyad_frame(out, frame);
    const auto dir = scratch("dyads");
    std::ofstream(dir / "d.csv") << out.str();
    const auto back = model::read_dyad_frame(dir / "d.csv");
    REQUIRE(back.rows.size() == frame.rows.size());
    CHECK(back.rows[5].response == frame.rows[5].response);
    CHECK(back.rows[5].sender_cov == frame.rows[5].sender_cov);
}

TEST_CASE("network model variants on symmetric synthetic flows") {
    synth::SynthConfig c;
    c.n_regions = 18;
    c.n_years = 4;
    c.base_rate = 100;
    const auto b = synth::generate_synthetic(c);
    const auto panel = covariates::impute_panel(b.panel, b.regions);
    const auto frame =
        model::build_dyad_frame(b.flows, panel, b.regions, model::LanguageFamilies::bundled(), b.years);
    const auto sym = model::fit_network_model(frame, model::NetworkVariant::symmetric);
    const auto ext = model::fit_network_model(frame, model::NetworkVariant::asymmetric_extended);
    const auto fin = model::fit_network_model(frame, model::NetworkVariant::final_model);
    CHECK(std::abs(sym.r_squared - ext.r_squared) < 0.02);
    CHECK(fin.r_squared > 0.5);
    CHECK(fin.has_term("g_log_dist"));
    CHECK(fin.has_term("same_country"));
    CHECK_FALSE(fin.has_term("same_lan"));

    const auto report = model::model_report(fin);
    CHECK(report["variant"] == "network:final");
    CHECK(report.contains("random_intercepts"));

    // sender and receiver smooths agree within pointwise 2 SE
    std::vector<double> grid;
    for (int i = 1; i < 10; ++i) grid.push_back(0.2 + 0.06 * i);
    std::vector<double> ted;
    for (const auto& r : frame.rows) ted.push_back(r.sender_cov[3]);
    std::sort(ted.begin(), ted.end());
    std::vector<double> tgrid;
    for (int i = 1; i < 10; ++i) tgrid.push_back(ted[ted.size() * i / 10]);
    const auto s = fin.curve("f_ted_sender", tgrid), r = fin.curve("f_ted_receiver", tgrid);
    for (std::size_t i = 0; i < tgrid.size(); ++i)
        CHECK(std::abs(s[i].fit - r[i].fit) <= 2 * std::hypot(s[i].se, r[i].se));
}

TEST_CASE("covariate-free flows give a weak model") {
    synth::SynthConfig c;
    c.n_regions = 15;
    c.n_years = 3;
    c.base_rate = 30;
    c.beta_uni = c.beta_ted = c.gamma = c.beta_country = c.year_trend = 0.0;
    const auto b = synth::generate_synthetic(c);
    const auto frame = model::build_dyad_frame(b.flows, covariates::impute_panel(b.panel, b.regions), b.regions,
                                               model::LanguageFamilies::bundled(), b.years);
    const auto fit = model::fit_network_model(frame, model::NetworkVariant::final_model);
    model::GamDesign years_only;
    std::vector<std::string> year;
    std::vector<double> y;
    for (const auto& r : frame.rows) {
        year.push_back(std::to_string(r.year));
        y.push_back(r.response);
    }
    years_only.random.push_back({"year", year});
    const auto base = model::fit_pgam(years_only, y);
    // pure-noise columns raise R^2 by about (extra edf) / n
    const double extra = (fit.edf - base.edf) / static_cast<double>(y.size());
    CHECK(fit.r_squared - base.r_squared < 2 * extra);
}

TEST_CASE("mobility models") {
    synth::SynthConfig c;
    c.n_regions = 24;
    c.n_years = 5;
    c.base_rate = 40;
    const auto b = synth::generate_synthetic(c);
    const auto panel = covariates::impute_panel(b.panel, b.regions);
    const auto frame = model::build_mobility_frame(b.flows, panel, b.regions, b.years);
    CHECK(frame.rows.size() == 24u * 5u);
    const auto total = model::fit_mobility_model(frame, model::MobilityResponse::total, model::MobilityVariant::final_model);
    CHECK(total.has_term("f_uni"));
    CHECK(total.has_term("country"));
    // the uni effect is increasing by construction
    std::vector<double> u;
    for (const auto& r : frame.rows) u.push_back(r.cov[2]);
    std::sort(u.begin(), u.end());
    const double lo = u[u.size() / 20], hi = u[u.size() * 19 / 20];
    const auto curve = total.curve("f_uni", std::vector<double>{lo, hi});
    CHECK(curve[1].fit > curve[0].fit);

    auto zero = frame;
    zero.rows[0].in_flow = zero.rows[0].out_flow = 0;
    const auto fit0 = model::fit_mobility_model(zero, model::MobilityResponse::in, model::MobilityVariant::final_model);
    CHECK(fit0.response[0] == 0.0);
    CHECK(std::isfinite(fit0.r_squared));
}

TEST_CASE("pipeline end to end") {
    const auto data = scratch("data");
    synth::SynthConfig c;
    c.n_regions = 12;
    c.n_years = 4;
    synth::write_bundle(synth::generate_synthetic(c), data);
    auto cfg = pipeline::RunConfig::from_json(sample_config(data, 2009, 2012));

    cfg.out = scratch("run1");
    const auto a = pipeline::run_pipeline(cfg);
    REQUIRE(a.exit_code == 0);
    cfg.out = scratch("run2");
    const auto b = pipeline::run_pipeline(cfg);
    REQUIRE(b.exit_code == 0);
    CHECK(tree(fs::temp_directory_path() / "mobnet_unit_run1") == tree(fs::temp_directory_path() / "mobnet_unit_run2"));

    const auto run = fs::temp_directory_path() / "mobnet_unit_run1";
    // flow table total equals the resolved event count
    const auto resolution = json::parse(slurp(run / "ingest/resolution.json"));
    const auto flows = ingest::read_flow_table(run / "ingest/flows_per_year.csv", ingest::Scope::internal);
    CHECK(flows.total() == resolution["internal_events_in_range"].get<double>());
    CHECK(csv::read_file(run / "ingest/events.csv").rows.size() == resolution["events"].get<std::size_t>());

    // every artifact re-parses
    for (const auto& e : fs::recursive_directory_iterator(run)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension();
        if (ext == ".json") CHECK(json::accept(slurp(e.path())));
        if (ext == ".csv") CHECK_NOTHROW(csv::read_file(e.path()));
    }
    CHECK_NOTHROW(covariates::read_panel(run / "covariates/panel.csv"));
    CHECK_NOTHROW(network::read_partition(run / "partitions/hits_quantile.csv"));
    CHECK_NOTHROW(model::read_dyad_frame(run / "models/dyads.csv"));
    CHECK_NOTHROW(model::read_mobility_frame(run / "models/mobility.csv"));
    std::ifstream edges(run / "network/edges.csv");
    CHECK_NOTHROW(network::read_edge_list(edges));

    // manifest records seed, B and every artifact
    const auto manifest = json::parse(slurp(run / "manifest.json"));
    CHECK(manifest["seed"] == cfg.seed);
    CHECK(manifest["permutations"] == cfg.permutations);
    CHECK(manifest["artifacts"].size() + 1 == tree(run).size());
    CHECK(manifest["inputs"]["affiliations"]["sha256"] == pipeline::sha256_file(data / "affiliations.csv"));

    // one stage rerun against the existing tree
    const auto single = pipeline::run_stages(cfg, {"anova"}, "anova.manifest.json");
    CHECK(single.exit_code == 0);
    CHECK(fs::exists(cfg.out / "anova.manifest.json"));
}

TEST_CASE("manifest digests follow inputs and config") {
    const auto data = scratch("data_digest");
    synth::SynthConfig c;
    c.n_regions = 6;
    c.n_years = 2;
    synth::write_bundle(synth::generate_synthetic(c), data);
    auto cfg = pipeline::RunConfig::from_json(sample_config(data, 2009, 2010));
    cfg.out = scratch("digest");
    const auto base = pipeline::run_stages(cfg, {"ingest"}).manifest;
    const auto again = pipeline::run_stages(cfg, {"ingest"}).manifest;
    CHECK(base == again);
    cfg.seed = 2;
    CHECK(pipeline::run_stages(cfg, {"ingest"}).manifest != base);
    cfg.seed = 1;
    std::ofstream(data / "affiliations.csv", std::ios::app) << "zz,DE01,2009,,employment\n";
    const auto changed = pipeline::run_stages(cfg, {"ingest"}).manifest;
    CHECK(changed["inputs"]["affiliations"]["sha256"] != base["inputs"]["affiliations"]["sha256"]);
}

TEST_CASE("missing denominators fail in the covariates stage") {
    const auto data = scratch("data_noden");
    synth::SynthConfig c;
    c.n_regions = 6;
    c.n_years = 2;
    synth::write_bundle(synth::generate_synthetic(c), data);
    auto j = sample_config(data, 2009, 2010);
    j["inputs"].erase("denominators");
    j["normalization"] = "sender_pop";
    auto cfg = pipeline::RunConfig::from_json(j);
    cfg.out = scratch("noden");
    const auto r = pipeline::run_pipeline(cfg);
    CHECK(r.exit_code == 2);
    REQUIRE(r.failed_stage.has_value());
    CHECK(*r.failed_stage == "covariates");
    const auto manifest = json::parse(slurp(cfg.out / "manifest.json"));
    CHECK(manifest["failed_stage"] == "covariates");
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(pipeline::RunConfig::from_json({{"years", {2012, 2010}}}), InputError);
    CHECK_THROWS_AS(pipeline::RunConfig::from_json({{"stages", {"bogus"}}}), InputError);
    CHECK_THROWS_AS(pipeline::RunConfig::from_json({{"normalization", "per_cat"}}), InputError);
    const auto c = pipeline::RunConfig::from_json({{"inputs", {{"regions", "r.csv"}}}}, "/base");
    CHECK(c.inputs.regions == fs::path("/base/r.csv"));
}

#ifdef MOBNET_CLI
TEST_CASE("cli exit codes") {
    const std::string cli = MOBNET_CLI;
    const auto dir = scratch("cli");
    CHECK(std::system((cli + " synth --out " + (dir / "data").string() + " --regions 6 --years 2 > /dev/null").c_str()) == 0);
    auto j = sample_config(dir / "data", 2009, 2010);
    std::ofstream(dir / "config.json") << j.dump();
    const std::string base = cli + " ingest --config " + (dir / "config.json").string() + " --out " + (dir / "out").string();
    CHECK(std::system((base + " > /dev/null 2>&1").c_str()) == 0);
    CHECK(fs::exists(dir / "out" / "ingest.manifest.json"));
    CHECK(WEXITSTATUS(std::system((cli + " ingest --config /nonexistent.json > /dev/null 2>&1").c_str())) == 2);
    j["inputs"]["affiliations"] = "/nonexistent.csv";
    std::ofstream(dir / "bad.json") << j.dump();
    CHECK(WEXITSTATUS(std::system((cli + " ingest --config " + (dir / "bad.json").string() + " --out " +
                                   (dir / "bad").string() + " > /dev/null 2>&1").c_str())) == 2);
}
#endif
