#include "mobnet/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mobnet/communities.hpp"
#include "mobnet/covariates.hpp"
#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"
#include "mobnet/models.hpp"
#include "mobnet/network.hpp"
#include "mobnet/parallel.hpp"
#include "mobnet/random.hpp"
#include "mobnet/stats.hpp"

namespace mobnet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json number(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
    return a;
}

json test_json(const stats::TestResult& t) {
    return {{"statistic", number(t.statistic)},
            {"p_value", number(t.p_value)},
            {"permutations", t.n_permutations},
            {"seed", t.seed},
            {"mode", stats::to_string(t.mode)},
            {"degenerate", t.degenerate}};
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() || base.empty() ? p : base / p;
}

class Context {
public:
    explicit Context(const RunConfig& config) : cfg(config) {}

    const RunConfig& cfg;
    std::vector<std::string> artifacts;

    void write(const std::string& rel, const std::function<void(std::ostream&)>& body) {
        const fs::path path = cfg.out / rel;
        fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("cannot write " + path.string());
        body(out);
        out.close();
        if (!out) throw InputError("failed writing " + path.string());
        if (std::find(artifacts.begin(), artifacts.end(), rel) == artifacts.end()) artifacts.push_back(rel);
    }

    void write_json(const std::string& rel, const json& j) {
        write(rel, [&](std::ostream& out) { out << j.dump(2) << "\n"; });
    }

    const ingest::RegionMap& regions() {
        if (!regions_) {
            if (cfg.inputs.regions.empty()) throw InputError("config lacks inputs.regions");
            regions_ = ingest::RegionMap::load(cfg.inputs.regions, cfg.inputs.aliases, cfg.inputs.denominators);
        }
        return *regions_;
    }

    std::set<std::string> universe() {
        if (cfg.universe.empty()) return regions().region_set();
        std::set<std::string> u(cfg.universe.begin(), cfg.universe.end());
        for (const auto& r : u)
            if (!regions().contains(r)) throw InputError("universe region " + r + " is not in the region map");
        return u;
    }

    const ingest::FlowTable& per_year() {
        if (!per_year_) {
            const fs::path path = cfg.out / "ingest" / "flows_per_year.csv";
            if (!fs::exists(path)) throw InputError("missing " + path.string() + "; run the ingest stage first");
            const auto read = ingest::read_flow_table(path, ingest::Scope::internal, universe());
            per_year_ = ingest::FlowTable(cfg.years, universe(), ingest::Scope::internal);
            for (const auto& [k, v] : read.entries()) per_year_->add(k, v);
        }
        return *per_year_;
    }
    void set_per_year(ingest::FlowTable t) { per_year_ = std::move(t); }

    const covariates::RegionYearPanel& panel() {
        if (!panel_) {
            const fs::path path = cfg.out / "covariates" / "panel.csv";
            if (!fs::exists(path)) throw InputError("missing " + path.string() + "; run the covariates stage first");
            panel_ = covariates::read_panel(path);
        }
        return *panel_;
    }
    void set_panel(covariates::RegionYearPanel p) { panel_ = std::move(p); }

    const network::MobilityNetwork& network() {
        if (!network_) {
            const auto cumulative =
                ingest::aggregate_flows(per_year(), regions(), ingest::Level::region, ingest::TimeMode::cumulative);
            network_ = network::from_flow_table(cumulative);
        }
        return *network_;
    }

    const network::HitsScores& hits() {
        if (!hits_) hits_ = network::hits_scores(network(), cfg.hits_tol, cfg.hits_max_iter);
        return *hits_;
    }

    std::map<std::string, network::Partition>& partitions() {
        if (partitions_.empty()) {
            const auto& net = network();
            const auto& h = hits();
            std::vector<double> hub(h.hub.data(), h.hub.data() + h.hub.size());
            std::vector<double> aut(h.authority.data(), h.authority.data() + h.authority.size());
            partitions_["hits_quantile"] = network::quantile_partition(net.nodes(), hub, cfg.quantile, aut);
            partitions_["hits_cutoff"] = network::cutoff_partition(net.nodes(), hub, cfg.score_cutoff, aut);
            partitions_["hub_quantile"] = network::quantile_partition(net.nodes(), hub, cfg.quantile);
            partitions_["authority_quantile"] = network::quantile_partition(net.nodes(), aut, cfg.quantile);
            const auto cores = network::s_core_decomposition(net, network::StrengthMode::total);
            const auto coreness = network::coreness_scores(cores);
            partitions_["core_quantile"] = network::quantile_partition(net.nodes(), coreness, cfg.quantile);
        }
        return partitions_;
    }

    const model::DyadFrame& dyads() {
        if (!dyads_) {
            const auto families = cfg.inputs.language_families ? model::LanguageFamilies::load(*cfg.inputs.language_families)
                                                               : model::LanguageFamilies::bundled();
            dyads_ = model::build_dyad_frame(per_year(), panel(), regions(), families, cfg.years);
        }
        return *dyads_;
    }

    const model::MobilityFrame& mobility() {
        if (!mobility_) mobility_ = model::build_mobility_frame(per_year(), panel(), regions(), cfg.years);
        return *mobility_;
    }

    model::ModelOptions model_options(int knots) const {
        model::ModelOptions o;
        o.n_knots = knots;
        o.gam.log10_lambda_min = cfg.log10_lambda_min;
        o.gam.log10_lambda_max = cfg.log10_lambda_max;
        o.gam.log10_lambda_step = cfg.log10_lambda_step;
        return o;
    }

private:
    std::optional<ingest::RegionMap> regions_;
    std::optional<ingest::FlowTable> per_year_;
    std::optional<covariates::RegionYearPanel> panel_;
    std::optional<network::MobilityNetwork> network_;
    std::optional<network::HitsScores> hits_;
    std::map<std::string, network::Partition> partitions_;
    std::optional<model::DyadFrame> dyads_;
    std::optional<model::MobilityFrame> mobility_;
};

void stage_ingest(Context& ctx) {
    const auto& cfg = ctx.cfg;
    if (cfg.inputs.affiliations.empty()) throw InputError("config lacks inputs.affiliations");
    if (cfg.years.size() <= 0) throw InputError("empty year range");
    ingest::ResolveOptions options;
    options.fuzzy_threshold = cfg.fuzzy_threshold;
    const auto parsed = ingest::parse_affiliations(cfg.inputs.affiliations, ctx.regions(), options);
    const auto events = ingest::extract_migrations(parsed.records);
    const auto universe = ctx.universe();

    auto internal = ingest::build_flow_table(events, cfg.years, universe, ingest::Scope::internal);
    const auto all = ingest::build_flow_table(events, cfg.years, universe, ingest::Scope::all);
    const auto cumulative =
        ingest::aggregate_flows(internal, ctx.regions(), ingest::Level::region, ingest::TimeMode::cumulative);
    const auto country =
        ingest::aggregate_flows(internal, ctx.regions(), ingest::Level::country, ingest::TimeMode::cumulative);

    std::size_t in_range = 0;
    for (const auto& e : events)
        if (cfg.years.contains(e.year) && universe.count(e.from_region) && universe.count(e.to_region)) ++in_range;

    json errors = json::array();
    for (const auto& e : parsed.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    ctx.write_json("ingest/resolution.json", {{"records", parsed.records.size()},
                                              {"resolved", parsed.resolved},
                                              {"resolution_rate", parsed.resolution_rate},
                                              {"row_errors", errors},
                                              {"events", events.size()},
                                              {"internal_events_in_range", in_range},
                                              {"internal_flow_total", internal.total()}});
    ctx.write("ingest/events.csv", [&](std::ostream& out) {
        csv::Writer w(out);
        w.row({"person_id", "from_region", "to_region", "year"});
        for (const auto& e : events) w.row({e.person_id, e.from_region, e.to_region, std::to_string(e.year)});
    });
    ctx.write("ingest/flows_per_year.csv", [&](std::ostream& out) { ingest::write_flow_table(out, internal); });
    ctx.write("ingest/flows_all_scope.csv", [&](std::ostream& out) { ingest::write_flow_table(out, all); });
    ctx.write("ingest/flows_cumulative.csv", [&](std::ostream& out) { ingest::write_flow_table(out, cumulative); });
    ctx.write("ingest/flows_country_cumulative.csv", [&](std::ostream& out) { ingest::write_flow_table(out, country); });
    ctx.set_per_year(std::move(internal));
}

void stage_covariates(Context& ctx) {
    const auto& cfg = ctx.cfg;
    covariates::IndicatorSources sources;
    if (cfg.inputs.rankings) sources.rankings = covariates::read_rankings(*cfg.inputs.rankings);
    if (cfg.inputs.procurements) sources.procurements = covariates::read_procurements(*cfg.inputs.procurements);
    if (cfg.inputs.gdp_regional) sources.gdp_regional = covariates::read_region_values(*cfg.inputs.gdp_regional);
    if (cfg.inputs.gdp_national) sources.gdp_table_national = covariates::read_country_values(*cfg.inputs.gdp_national);
    if (cfg.inputs.gdp_benchmark) sources.gdp_benchmark = covariates::read_country_values(*cfg.inputs.gdp_benchmark);
    if (cfg.inputs.edu) sources.edu = covariates::read_region_values(*cfg.inputs.edu);

    auto raw = covariates::build_panel(sources, ctx.regions(), cfg.years);
    ctx.write("covariates/panel_raw.csv", [&](std::ostream& out) { covariates::write_panel(out, raw); });
    json report{{"missing_before", raw.missing_count()}};

    if (cfg.inputs.attainment) {
        const auto attainment = covariates::read_region_values(*cfg.inputs.attainment);
        std::vector<double> x, y;
        for (const auto& [key, a] : attainment)
            if (auto e = raw.value(key.first, key.second, covariates::Indicator::edu_index)) {
                x.push_back(a);
                y.push_back(*e);
            }
        const auto imputer = model::fit_edu_imputer(x, y, ctx.model_options(cfg.n_knots));
        std::size_t filled = 0;
        for (const auto& [key, a] : attainment) {
            const auto* cell = raw.find(key.first, key.second, covariates::Indicator::edu_index);
            if (cell && !cell->value) {
                raw.set(key.first, key.second, covariates::Indicator::edu_index, imputer.predict(a),
                        covariates::Provenance::imputed);
                ++filled;
            }
        }
        report["edu_imputer"] = {{"pairs", x.size()}, {"r_squared", imputer.fit.r_squared}, {"filled", filled}};
    }
    auto panel = covariates::impute_panel(raw, ctx.regions());
    report["missing_after"] = panel.missing_count();
    ctx.write("covariates/panel.csv", [&](std::ostream& out) { covariates::write_panel(out, panel); });

    if (cfg.normalization) {
        const auto normalized = ingest::normalize_flows(ctx.per_year(), ctx.regions(), *cfg.normalization);
        ctx.write("covariates/flows_normalized.csv", [&](std::ostream& out) { ingest::write_flow_table(out, normalized); });
        report["normalization"] = ingest::to_string(*cfg.normalization);
    }
    ctx.write_json("covariates/covariates.json", report);
    ctx.set_panel(std::move(panel));
}

void stage_network(Context& ctx) {
    const auto& net = ctx.network();
    ctx.write("network/edges.csv", [&](std::ostream& out) { network::write_edge_list(out, net); });
    const auto in = network::node_strength(net, network::StrengthMode::in);
    const auto out_s = network::node_strength(net, network::StrengthMode::out);
    const auto total = network::node_strength(net, network::StrengthMode::total);
    ctx.write("network/strengths.csv", [&](std::ostream& out) {
        csv::Writer w(out);
        w.row({"region", "in", "out", "total"});
        for (Eigen::Index i = 0; i < net.size(); ++i)
            w.row({net.nodes()[static_cast<std::size_t>(i)], csv::format_number(in[i]), csv::format_number(out_s[i]),
                   csv::format_number(total[i])});
    });
    ctx.write_json("network/summary.json", {{"nodes", net.size()},
                                            {"arcs", static_cast<Eigen::Index>(net.adjacency().sum())},
                                            {"total_weight", net.weights().sum()},
                                            {"total_in_strength", in.sum()},
                                            {"total_out_strength", out_s.sum()},
                                            {"flow_table_total", ctx.per_year().total()}});
}

void stage_scores(Context& ctx) {
    const auto& net = ctx.network();
    const auto& h = ctx.hits();
    ctx.write("scores/hits.csv", [&](std::ostream& out) { network::write_scores(out, net, h); });
    json shells = json::object();
    for (auto mode : {network::StrengthMode::total, network::StrengthMode::in, network::StrengthMode::out}) {
        const auto cores = network::s_core_decomposition(net, mode);
        const std::string name = network::to_string(mode);
        ctx.write("scores/shells_" + name + ".csv", [&](std::ostream& out) { network::write_shells(out, net, cores); });
        shells[name] = {{"shells", cores.shell_count()}, {"thresholds", cores.thresholds}};
    }
    std::vector<double> hub(h.hub.data(), h.hub.data() + h.hub.size());
    std::vector<double> aut(h.authority.data(), h.authority.data() + h.authority.size());
    ctx.write_json("scores/scores.json", {{"hits_iterations", h.iterations},
                                          {"hits_converged", h.converged},
                                          {"hub_authority_correlation", number(stats::pearson(hub, aut))},
                                          {"s_core", shells}});
}

void stage_score_partition(Context& ctx) {
    auto& parts = ctx.partitions();
    for (const auto& [name, p] : parts)
        ctx.write("partitions/" + name + ".csv", [&](std::ostream& out) { network::write_partition(out, p); });
    json report = json::object();
    report["quantile"] = ctx.cfg.quantile;
    report["cutoff"] = ctx.cfg.score_cutoff;
    report["congruence"] = {
        {"hits_quantile_vs_core_quantile", network::congruence(parts["hits_quantile"], parts["core_quantile"])},
        {"hub_quantile_vs_authority_quantile", network::congruence(parts["hub_quantile"], parts["authority_quantile"])},
        {"hits_quantile_vs_hits_cutoff", network::congruence(parts["hits_quantile"], parts["hits_cutoff"])}};
    json high = json::object();
    for (const auto& [name, p] : parts) high[name] = std::count(p.labels.begin(), p.labels.end(), 1);
    report["high_count"] = high;

    // Year-wise stability of the hub and authority partitions.
    json yearly = json::object();
    for (int y = ctx.cfg.years.first; y <= ctx.cfg.years.last; ++y) {
        const auto net_y = network::from_flow_table(ctx.per_year(), y);
        if (!(net_y.weights().sum() > 0.0)) {
            yearly[std::to_string(y)] = nullptr;
            continue;
        }
        const auto h = network::hits_scores(net_y, ctx.cfg.hits_tol, ctx.cfg.hits_max_iter);
        std::vector<double> hub(h.hub.data(), h.hub.data() + h.hub.size());
        std::vector<double> aut(h.authority.data(), h.authority.data() + h.authority.size());
        const auto ph = network::quantile_partition(net_y.nodes(), hub, ctx.cfg.quantile);
        const auto pa = network::quantile_partition(net_y.nodes(), aut, ctx.cfg.quantile);
        yearly[std::to_string(y)] = {{"hub", network::congruence(ph, parts["hub_quantile"])},
                                     {"authority", network::congruence(pa, parts["authority_quantile"])}};
    }
    report["yearly_congruence"] = yearly;
    ctx.write_json("partitions/partitions.json", report);
}

void stage_communities(Context& ctx) {
    const auto& net = ctx.network();
    const auto gn = network::edge_betweenness_communities(net);
    const auto me = network::map_equation_communities(net, ctx.cfg.seed);
    ctx.write("communities/girvan_newman.csv", [&](std::ostream& out) { network::write_partition(out, gn.partition); });
    ctx.write("communities/map_equation.csv", [&](std::ostream& out) { network::write_partition(out, me.partition); });
    auto count = [](const network::Partition& p) {
        return std::set<int>(p.labels.begin(), p.labels.end()).size();
    };
    ctx.write_json("communities/communities.json",
                   {{"girvan_newman", {{"communities", count(gn.partition)},
                                       {"modularity", number(gn.modularity)},
                                       {"removals", gn.history.size()}}},
                    {"map_equation", {{"communities", count(me.partition)},
                                      {"codelength", number(me.codelength)},
                                      {"one_module_codelength", number(me.one_module_codelength)},
                                      {"passes", me.passes},
                                      {"seed", ctx.cfg.seed}}}});
}

void stage_anova(Context& ctx) {
    const auto& panel = ctx.panel();
    const auto& net = ctx.network();
    auto& parts = ctx.partitions();
    json report = json::object();
    std::uint64_t test_index = 0;
    for (const std::string name : {"hits_quantile", "hits_cutoff", "core_quantile"}) {
        const auto& p = parts[name];
        json rows = json::array();
        std::vector<std::vector<std::string>> table;
        for (auto indicator : covariates::kIndicators) {
            std::vector<double> high, low;
            for (std::size_t i = 0; i < p.nodes.size(); ++i) {
                double sum = 0.0;
                int n = 0;
                for (int y = ctx.cfg.years.first; y <= ctx.cfg.years.last; ++y) {
                    sum += panel.at(p.nodes[i], y, indicator);
                    ++n;
                }
                (p.labels[i] == 1 ? high : low).push_back(sum / n);
            }
            const std::string variable = covariates::to_string(indicator);
            const std::uint64_t seed = splitmix64(ctx.cfg.seed + test_index++);
            if (high.size() < 2 || low.size() < 2) {
                rows.push_back({{"variable", variable}, {"skipped", "a group has fewer than 2 regions"}});
                continue;
            }
            const auto r = stats::npc_anova(high, low, ctx.cfg.permutations, seed);
            rows.push_back({{"variable", variable},
                            {"n_high", high.size()},
                            {"n_low", low.size()},
                            {"location", test_json(r.location)},
                            {"scale", test_json(r.scale)},
                            {"joint", test_json(r.joint)},
                            {"location_p_corrected", r.p_location_corrected},
                            {"scale_p_corrected", r.p_scale_corrected}});
            table.push_back({variable, csv::format_number(r.p_location_corrected),
                             csv::format_number(r.p_scale_corrected)});
        }
        report[name] = rows;
        ctx.write("tests/anova_" + name + ".csv", [&](std::ostream& out) {
            csv::Writer w(out);
            w.row({"variable", "location_p", "scale_p"});
            for (const auto& row : table) w.row(row);
        });
    }
    (void)net;
    ctx.write_json("tests/anova.json", report);
}

// Regions x years matrices of in and out flows.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> yearly_in_out(Context& ctx, std::vector<std::string>& nodes) {
    const auto& table = ctx.per_year();
    nodes.assign(table.universe().begin(), table.universe().end());
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(nodes.size());
    const auto t = static_cast<Eigen::Index>(ctx.cfg.years.size());
    Eigen::MatrixXd in = Eigen::MatrixXd::Zero(n, t), out = Eigen::MatrixXd::Zero(n, t);
    for (const auto& [key, count] : table.entries()) {
        const auto col = static_cast<Eigen::Index>(*key.year - ctx.cfg.years.first);
        in(index[key.receiver], col) += count;
        out(index[key.sender], col) += count;
    }
    return {in, out};
}

void stage_spearman(Context& ctx) {
    std::vector<std::string> nodes;
    const auto [in, out] = yearly_in_out(ctx, nodes);
    std::vector<double> grid;
    for (int y = ctx.cfg.years.first; y <= ctx.cfg.years.last; ++y) grid.push_back(y);
    json report;
    const Eigen::VectorXd in_total = in.rowwise().sum(), out_total = out.rowwise().sum();
    report["in_out_pearson"] = number(stats::pearson(std::span<const double>(in_total.data(), in_total.size()),
                                                     std::span<const double>(out_total.data(), out_total.size())));
    report["ranking"] = "integral of the penalized-spline smooth of each yearly series";
    report["lambda"] = ctx.cfg.spearman_lambda;
    try {
        const auto r = stats::spearman_perm_test(in, out, grid, ctx.cfg.permutations, ctx.cfg.seed,
                                                 ctx.cfg.spearman_lambda, ctx.cfg.n_knots);
        report["test"] = test_json(r);
    } catch (const InputError& e) {
        report["test"] = {{"skipped", e.what()}};
    }
    ctx.write_json("tests/spearman.json", report);
}

void stage_pca(Context& ctx) {
    std::vector<std::string> nodes;
    const auto [in, out] = yearly_in_out(ctx, nodes);
    std::vector<std::string> columns;
    for (int y = ctx.cfg.years.first; y <= ctx.cfg.years.last; ++y) columns.push_back(std::to_string(y));
    json report = json::object();
    const std::map<std::string, Eigen::MatrixXd> data{{"total", in + out}, {"in", in}, {"out", out}};
    for (const auto& [name, m] : data) {
        for (bool standardize : {false, true}) {
            const std::string key = name + (standardize ? "_standardized" : "_raw");
            try {
                const auto r = stats::pca(m, standardize, columns);
                json loadings = json::array();
                for (Eigen::Index k = 0; k < r.loadings.cols(); ++k) loadings.push_back(vector_json(r.loadings.col(k)));
                report[key] = {{"proportions", vector_json(r.proportions)},
                               {"eigenvalues", vector_json(r.eigenvalues)},
                               {"loadings", loadings},
                               {"columns", columns}};
            } catch (const InputError& e) {
                report[key] = {{"skipped", e.what()}};
            }
        }
    }
    ctx.write_json("tests/pca.json", report);

    const Eigen::VectorXd x = in.rowwise().sum(), y = out.rowwise().sum();
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
    json lines;
    lines["x"] = "total in-flow";
    lines["y"] = "total out-flow";
    try {
        lines["pearson"] = number(stats::pearson(xs, ys));
        const auto ols = stats::ols_fit(xs, ys);
        const auto lts = stats::lts_fit(xs, ys, 0, ctx.cfg.seed);
        lines["ols"] = {{"slope", ols.slope}, {"intercept", ols.intercept}, {"r_squared", ols.r_squared}};
        lines["lts"] = {{"slope", lts.slope},
                        {"intercept", lts.intercept},
                        {"r_squared", lts.r_squared},
                        {"h", lts.support.size()},
                        {"seed", ctx.cfg.seed}};
    } catch (const InputError& e) {
        lines["skipped"] = e.what();
    }
    ctx.write_json("tests/lines.json", lines);
}

void write_fit(Context& ctx, const std::string& stem, const model::GamFit& fit) {
    ctx.write_json("models/" + stem + ".json", model::model_report(fit));
    ctx.write("models/" + stem + "_curves.csv", [&](std::ostream& out) { model::write_curves(out, fit); });
}

void stage_fit_network(Context& ctx) {
    const auto& frame = ctx.dyads();
    ctx.write("models/dyads.csv", [&](std::ostream& out) { model::write_dyad_frame(out, frame); });
    for (const auto& name : ctx.cfg.network_variants) {
        const auto variant = model::parse_network_variant(name);
        write_fit(ctx, "network_" + name, model::fit_network_model(frame, variant, ctx.model_options(ctx.cfg.n_knots)));
    }
    if (!ctx.cfg.knot_sensitivity.empty()) {
        json report = json::object();
        for (int k : ctx.cfg.knot_sensitivity) {
            const auto fit = model::fit_network_model(frame, model::NetworkVariant::final_model, ctx.model_options(k));
            report[std::to_string(k)] = {{"r_squared", fit.r_squared}, {"edf", fit.edf}, {"gcv", number(fit.gcv)}};
        }
        ctx.write_json("models/knot_sensitivity.json", {{"variant", "final"}, {"knots", report}});
    }
}

void stage_fit_mobility(Context& ctx) {
    const auto& frame = ctx.mobility();
    ctx.write("models/mobility.csv", [&](std::ostream& out) { model::write_mobility_frame(out, frame); });
    for (const auto& v : ctx.cfg.mobility_variants) {
        const auto variant = model::parse_mobility_variant(v);
        for (const auto& r : ctx.cfg.mobility_responses) {
            const auto response = model::parse_mobility_response(r);
            write_fit(ctx, "mobility_" + v + "_" + r,
                      model::fit_mobility_model(frame, response, variant, ctx.model_options(ctx.cfg.n_knots)));
        }
    }
}

void stage_perm_f(Context& ctx) {
    const auto result = model::symmetry_test(ctx.dyads(), ctx.cfg.permutations, ctx.cfg.seed,
                                             ctx.model_options(ctx.cfg.n_knots));
    json f = json::object();
    for (std::size_t k = 0; k < result.added_terms.size(); ++k) f[result.added_terms[k]] = number(result.observed_f[k]);
    ctx.write_json("models/symmetry.json", {{"null", "symmetric"},
                                            {"extended", "asymmetric_extended"},
                                            {"statistic", "max F over added terms"},
                                            {"test", test_json(result.test)},
                                            {"observed_f", f},
                                            {"extended_r_squared", result.extended.r_squared}});
}

const std::map<std::string, void (*)(Context&)>& stage_table() {
    static const std::map<std::string, void (*)(Context&)> table{
        {"ingest", stage_ingest},          {"covariates", stage_covariates},
        {"network", stage_network},        {"scores", stage_scores},
        {"score-partition", stage_score_partition}, {"communities", stage_communities},
        {"anova", stage_anova},            {"spearman", stage_spearman},
        {"pca", stage_pca},                {"fit-network", stage_fit_network},
        {"fit-mobility", stage_fit_mobility}, {"perm-f", stage_perm_f}};
    return table;
}

}  // namespace

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"ingest", "covariates", "network", "scores",
                                                "score-partition", "communities", "anova", "spearman",
                                                "pca", "fit-network", "fit-mobility", "perm-f"};
    return names;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
    RunConfig c;
    if (j.contains("inputs")) {
        const json& in = j.at("inputs");
        if (auto p = optional_path(in, "affiliations", base)) c.inputs.affiliations = *p;
        if (auto p = optional_path(in, "regions", base)) c.inputs.regions = *p;
        c.inputs.aliases = optional_path(in, "aliases", base);
        c.inputs.denominators = optional_path(in, "denominators", base);
        c.inputs.rankings = optional_path(in, "rankings", base);
        c.inputs.procurements = optional_path(in, "procurements", base);
        c.inputs.gdp_regional = optional_path(in, "gdp_regional", base);
        c.inputs.gdp_national = optional_path(in, "gdp_national", base);
        c.inputs.gdp_benchmark = optional_path(in, "gdp_benchmark", base);
        c.inputs.edu = optional_path(in, "edu", base);
        c.inputs.attainment = optional_path(in, "attainment", base);
        c.inputs.language_families = optional_path(in, "language_families", base);
    }
    if (j.contains("years")) {
        const auto y = j.at("years").get<std::vector<int>>();
        if (y.size() != 2 || y[0] > y[1]) throw InputError("years must be [first, last] with first <= last");
        c.years = {y[0], y[1]};
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("universe", c.universe);
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
        const auto name = j.at("normalization").get<std::string>();
        c.normalization = ingest::parse_normalization(name);
        if (!c.normalization) throw InputError("unknown normalization scheme " + name);
    }
    if (j.contains("fuzzy_threshold") && !j.at("fuzzy_threshold").is_null())
        c.fuzzy_threshold = j.at("fuzzy_threshold").get<double>();
    get("seed", c.seed);
    get("permutations", c.permutations);
    get("jobs", c.jobs);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    get("stages", c.stages);
    get("quantile", c.quantile);
    get("score_cutoff", c.score_cutoff);
    get("hits_tol", c.hits_tol);
    get("hits_max_iter", c.hits_max_iter);
    get("spearman_lambda", c.spearman_lambda);
    get("network_variants", c.network_variants);
    get("mobility_variants", c.mobility_variants);
    get("mobility_responses", c.mobility_responses);
    get("knot_sensitivity", c.knot_sensitivity);
    get("n_knots", c.n_knots);
    get("log10_lambda_min", c.log10_lambda_min);
    get("log10_lambda_max", c.log10_lambda_max);
    get("log10_lambda_step", c.log10_lambda_step);
    for (const auto& s : c.stages)
        if (!stage_table().count(s)) throw InputError("unknown stage " + s);
    if (!(c.quantile > 0.0 && c.quantile < 1.0)) throw InputError("quantile must lie in (0, 1)");
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
    auto opt = [](const std::optional<fs::path>& p) -> json { return p ? json(p->string()) : json(nullptr); };
    json in{{"affiliations", inputs.affiliations.string()},
            {"regions", inputs.regions.string()},
            {"aliases", opt(inputs.aliases)},
            {"denominators", opt(inputs.denominators)},
            {"rankings", opt(inputs.rankings)},
            {"procurements", opt(inputs.procurements)},
            {"gdp_regional", opt(inputs.gdp_regional)},
            {"gdp_national", opt(inputs.gdp_national)},
            {"gdp_benchmark", opt(inputs.gdp_benchmark)},
            {"edu", opt(inputs.edu)},
            {"attainment", opt(inputs.attainment)},
            {"language_families", opt(inputs.language_families)}};
    json j{{"inputs", in},
           {"years", {years.first, years.last}},
           {"universe", universe},
           {"normalization", normalization ? json(ingest::to_string(*normalization)) : json(nullptr)},
           {"fuzzy_threshold", fuzzy_threshold ? json(*fuzzy_threshold) : json(nullptr)},
           {"seed", seed},
           {"permutations", permutations},
           {"jobs", jobs},
           {"stages", stages},
           {"quantile", quantile},
           {"score_cutoff", score_cutoff},
           {"hits_tol", hits_tol},
           {"hits_max_iter", hits_max_iter},
           {"spearman_lambda", spearman_lambda},
           {"network_variants", network_variants},
           {"mobility_variants", mobility_variants},
           {"mobility_responses", mobility_responses},
           {"knot_sensitivity", knot_sensitivity},
           {"n_knots", n_knots},
           {"log10_lambda_min", log10_lambda_min},
           {"log10_lambda_max", log10_lambda_max},
           {"log10_lambda_step", log10_lambda_step}};
    return j;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    EVP_MD_CTX* md = EVP_MD_CTX_new();
    if (!md || EVP_DigestInit_ex(md, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(md);
        throw NumericError("SHA-256 initialisation failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(md, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(md, digest, &len);
    EVP_MD_CTX_free(md);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

RunResult run_stages(const RunConfig& config, const std::vector<std::string>& requested,
                     const std::string& manifest_name) {
    std::vector<std::string> stages = requested.empty() ? config.stages : requested;
    if (stages.empty()) stages = stage_names();
    for (const auto& s : stages)
        if (!stage_table().count(s)) throw InputError("unknown stage " + s);
    set_default_jobs(config.jobs);

    RunResult result;
    Context ctx(config);
    json stage_log = json::array();
    for (const auto& name : stages) {
        try {
            stage_table().at(name)(ctx);
            stage_log.push_back({{"name", name}, {"status", "ok"}});
        } catch (const NumericError& e) {
            result.exit_code = 3;
            result.error = e.what();
        } catch (const InputError& e) {
            result.exit_code = 2;
            result.error = e.what();
        } catch (const fs::filesystem_error& e) {
            result.exit_code = 2;
            result.error = e.what();
        } catch (const json::exception& e) {
            result.exit_code = 2;
            result.error = e.what();
        } catch (const std::exception& e) {
            result.exit_code = 3;
            result.error = e.what();
        }
        if (result.exit_code != 0) {
            result.failed_stage = name;
            stage_log.push_back({{"name", name}, {"status", "failed"}, {"error", result.error}});
            break;
        }
    }

    json manifest;
    manifest["tool"] = "mobnet";
    manifest["version"] = kVersion;
    manifest["seed"] = config.seed;
    manifest["permutations"] = config.permutations;
    manifest["config"] = config.to_json();
    json inputs = json::object();
    auto digest_input = [&](const std::string& name, const std::optional<fs::path>& p) {
        if (!p || p->empty()) return;
        inputs[name] = {{"path", p->string()},
                        {"sha256", fs::exists(*p) ? json(sha256_file(*p)) : json(nullptr)}};
    };
    const auto& in = config.inputs;
    digest_input("affiliations", in.affiliations);
    digest_input("regions", in.regions);
    digest_input("aliases", in.aliases);
    digest_input("denominators", in.denominators);
    digest_input("rankings", in.rankings);
    digest_input("procurements", in.procurements);
    digest_input("gdp_regional", in.gdp_regional);
    digest_input("gdp_national", in.gdp_national);
    digest_input("gdp_benchmark", in.gdp_benchmark);
    digest_input("edu", in.edu);
    digest_input("attainment", in.attainment);
    digest_input("language_families", in.language_families);
    manifest["inputs"] = inputs;
    manifest["stages"] = stage_log;
    std::sort(ctx.artifacts.begin(), ctx.artifacts.end());
    json artifacts = json::array();
    for (const auto& rel : ctx.artifacts)
        artifacts.push_back({{"path", rel}, {"sha256", sha256_file(config.out / rel)}, {"bytes", fs::file_size(config.out / rel)}});
    manifest["artifacts"] = artifacts;
    manifest["exit_code"] = result.exit_code;
    manifest["failed_stage"] = result.failed_stage ? json(*result.failed_stage) : json(nullptr);
    manifest["error"] = result.exit_code ? json(result.error) : json(nullptr);
    result.manifest = manifest;

    fs::create_directories(config.out);
    std::ofstream out(config.out / manifest_name, std::ios::binary);
    out << manifest.dump(2) << "\n";
    return result;
}

RunResult run_pipeline(const RunConfig& config) { return run_stages(config, {}, "manifest.json"); }

}  // namespace mobnet::pipeline
