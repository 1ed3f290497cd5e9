#include "mobnet/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>

#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"

namespace mobnet::model {

using covariates::Indicator;

namespace {

constexpr std::array<const char*, 4> kShortNames = {"gdp", "edu", "uni", "ted"};

void check_coordinate(ingest::Centroid c) {
    if (!std::isfinite(c.lat) || !std::isfinite(c.lon) || c.lat < -90.0 || c.lat > 90.0 || c.lon < -180.0 ||
        c.lon > 180.0)
        throw InputError("invalid coordinates (" + csv::format_number(c.lat) + ", " + csv::format_number(c.lon) + ")");
}

std::array<double, 4> covariates_of(const covariates::RegionYearPanel& panel, const std::string& region, int year) {
    std::array<double, 4> out{};
    for (std::size_t k = 0; k < covariates::kIndicators.size(); ++k)
        out[k] = panel.at(region, year, covariates::kIndicators[k]);
    return out;
}

std::vector<std::string> year_labels(const std::vector<int>& years) {
    std::vector<std::string> out;
    out.reserve(years.size());
    for (int y : years) out.push_back(std::to_string(y));
    return out;
}

std::string number(double v) { return csv::format_number(v); }

}  // namespace

double geodesic_distance(ingest::Centroid a, ingest::Centroid b) {
    check_coordinate(a);
    check_coordinate(b);
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double s1 = std::sin(dlat / 2.0), s2 = std::sin(dlon / 2.0);
    const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

void LanguageFamilies::set(const std::string& key, const std::string& family) {
    if (key.empty() || family.empty()) throw InputError("language family entries need a code and a family");
    families_[key] = family;
}

std::string LanguageFamilies::family_of(std::string_view region, std::string_view country) const {
    for (std::size_t len = region.size(); len > 0; --len) {
        auto it = families_.find(region.substr(0, len));
        if (it != families_.end() && len > country.size()) return it->second;
    }
    auto it = families_.find(country);
    if (it != families_.end()) return it->second;
    return std::string(country);
}

LanguageFamilies LanguageFamilies::bundled() {
    LanguageFamilies f;
    for (const char* c : {"AT", "DE", "DK", "IE", "IS", "LU", "NL", "NO", "SE", "UK", "BE2", "CH"}) f.set(c, "Germanic");
    for (const char* c : {"BG", "CZ", "HR", "PL", "SI", "SK"}) f.set(c, "Slavic");
    for (const char* c : {"ES", "FR", "IT", "MT", "PT", "RO", "BE1", "BE3", "CH01", "CH07"}) f.set(c, "Romance");
    for (const char* c : {"EE", "FI", "HU"}) f.set(c, "Uralic");
    for (const char* c : {"LV", "LT"}) f.set(c, "Baltic");
    for (const char* c : {"EL", "CY"}) f.set(c, "Greek");
    return f;
}

LanguageFamilies LanguageFamilies::load(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto key = table.column("country_or_region");
    const auto fam = table.column("family");
    LanguageFamilies f;
    for (const auto& row : table.rows) f.set(row[key], row[fam]);
    return f;
}

void LanguageFamilies::write(std::ostream& out) const {
    csv::Writer w(out);
    w.row({"country_or_region", "family"});
    for (const auto& [k, v] : families_) w.row({k, v});
}

DyadFrame build_dyad_frame(const ingest::FlowTable& per_year, const covariates::RegionYearPanel& panel,
                           const ingest::RegionMap& regions, const LanguageFamilies& families,
                           ingest::YearRange years) {
    if (years.size() <= 0) throw InputError("empty year range");
    if (per_year.cumulative()) throw InputError("dyad frames need a per-year flow table");
    const std::vector<std::string> nodes(per_year.universe().begin(), per_year.universe().end());
    if (nodes.size() < 2) throw InputError("dyad frames need at least two regions");
    std::map<std::string, std::string> family;
    for (const auto& r : nodes) family[r] = families.family_of(r, regions.country(r));

    DyadFrame frame;
    frame.rows.reserve(nodes.size() * (nodes.size() - 1) * static_cast<std::size_t>(years.size()));
    for (int year = years.first; year <= years.last; ++year) {
        std::map<std::string, std::array<double, 4>> cov;
        for (const auto& r : nodes) cov[r] = covariates_of(panel, r, year);
        for (const auto& s : nodes) {
            for (const auto& r : nodes) {
                if (s == r) continue;
                DyadRow row;
                row.year = year;
                row.sender = s;
                row.receiver = r;
                row.flow = per_year.count({year, s, r});
                row.response = std::log(row.flow + 1.0);
                row.sender_cov = cov[s];
                row.receiver_cov = cov[r];
                row.log_dist = std::log(std::max(1.0, geodesic_distance(regions.centroid(s), regions.centroid(r))));
                row.same_country = regions.country(s) == regions.country(r);
                row.same_lan = family[s] == family[r];
                frame.rows.push_back(std::move(row));
            }
        }
    }
    return frame;
}

void write_dyad_frame(std::ostream& out, const DyadFrame& frame) {
    csv::Writer w(out);
    std::vector<std::string> header{"year", "sender", "receiver", "flow", "response"};
    for (const char* role : {"sender", "receiver"})
        for (const char* name : kShortNames) header.push_back(std::string(name) + "_" + role);
    header.insert(header.end(), {"log_dist", "same_country", "same_lan"});
    w.row(header);
    for (const auto& r : frame.rows) {
        std::vector<std::string> f{std::to_string(r.year), r.sender, r.receiver, number(r.flow), number(r.response)};
        for (double v : r.sender_cov) f.push_back(number(v));
        for (double v : r.receiver_cov) f.push_back(number(v));
        f.push_back(number(r.log_dist));
        f.push_back(r.same_country ? "1" : "0");
        f.push_back(r.same_lan ? "1" : "0");
        w.row(f);
    }
}

DyadFrame read_dyad_frame(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    const auto year = t.column("year"), sender = t.column("sender"), receiver = t.column("receiver");
    const auto flow = t.column("flow"), response = t.column("response");
    std::array<std::size_t, 4> sc{}, rc{};
    for (std::size_t k = 0; k < 4; ++k) {
        sc[k] = t.column(std::string(kShortNames[k]) + "_sender");
        rc[k] = t.column(std::string(kShortNames[k]) + "_receiver");
    }
    const auto dist = t.column("log_dist"), country = t.column("same_country"), lan = t.column("same_lan");
    DyadFrame frame;
    for (const auto& f : t.rows) {
        DyadRow r;
        r.year = csv::parse_int(f[year], "year");
        r.sender = f[sender];
        r.receiver = f[receiver];
        r.flow = csv::parse_double(f[flow], "flow");
        r.response = csv::parse_double(f[response], "response");
        for (std::size_t k = 0; k < 4; ++k) {
            r.sender_cov[k] = csv::parse_double(f[sc[k]], "covariate");
            r.receiver_cov[k] = csv::parse_double(f[rc[k]], "covariate");
        }
        r.log_dist = csv::parse_double(f[dist], "log_dist");
        r.same_country = csv::parse_int(f[country], "same_country") != 0;
        r.same_lan = csv::parse_int(f[lan], "same_lan") != 0;
        frame.rows.push_back(std::move(r));
    }
    return frame;
}

MobilityFrame build_mobility_frame(const ingest::FlowTable& per_year, const covariates::RegionYearPanel& panel,
                                   const ingest::RegionMap& regions, ingest::YearRange years) {
    if (years.size() <= 0) throw InputError("empty year range");
    if (per_year.cumulative()) throw InputError("mobility frames need a per-year flow table");
    std::map<std::pair<int, std::string>, std::pair<double, double>> totals;
    for (const auto& [key, count] : per_year.entries()) {
        totals[{*key.year, key.receiver}].first += count;
        totals[{*key.year, key.sender}].second += count;
    }
    MobilityFrame frame;
    for (int year = years.first; year <= years.last; ++year) {
        for (const auto& region : per_year.universe()) {
            MobilityRow row;
            row.year = year;
            row.region = region;
            row.country = regions.country(region);
            auto it = totals.find({year, region});
            if (it != totals.end()) {
                row.in_flow = it->second.first;
                row.out_flow = it->second.second;
            }
            row.cov = covariates_of(panel, region, year);
            frame.rows.push_back(std::move(row));
        }
    }
    return frame;
}

void write_mobility_frame(std::ostream& out, const MobilityFrame& frame) {
    csv::Writer w(out);
    std::vector<std::string> header{"year", "region", "country", "in_flow", "out_flow"};
    for (const char* name : kShortNames) header.emplace_back(name);
    w.row(header);
    for (const auto& r : frame.rows) {
        std::vector<std::string> f{std::to_string(r.year), r.region, r.country, number(r.in_flow), number(r.out_flow)};
        for (double v : r.cov) f.push_back(number(v));
        w.row(f);
    }
}

MobilityFrame read_mobility_frame(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    const auto year = t.column("year"), region = t.column("region"), country = t.column("country");
    const auto in = t.column("in_flow"), out = t.column("out_flow");
    std::array<std::size_t, 4> c{};
    for (std::size_t k = 0; k < 4; ++k) c[k] = t.column(kShortNames[k]);
    MobilityFrame frame;
    for (const auto& f : t.rows) {
        MobilityRow r;
        r.year = csv::parse_int(f[year], "year");
        r.region = f[region];
        r.country = f[country];
        r.in_flow = csv::parse_double(f[in], "in_flow");
        r.out_flow = csv::parse_double(f[out], "out_flow");
        if (r.in_flow < 0.0 || r.out_flow < 0.0) throw InputError("negative flow in mobility frame");
        for (std::size_t k = 0; k < 4; ++k) r.cov[k] = csv::parse_double(f[c[k]], "covariate");
        frame.rows.push_back(std::move(r));
    }
    return frame;
}

std::string to_string(NetworkVariant variant) {
    switch (variant) {
        case NetworkVariant::full: return "full";
        case NetworkVariant::final_model: return "final";
        case NetworkVariant::symmetric: return "symmetric";
        case NetworkVariant::asymmetric_extended: return "asymmetric_extended";
    }
    return "unknown";
}

NetworkVariant parse_network_variant(std::string_view name) {
    if (name == "full") return NetworkVariant::full;
    if (name == "final") return NetworkVariant::final_model;
    if (name == "symmetric") return NetworkVariant::symmetric;
    if (name == "asymmetric_extended") return NetworkVariant::asymmetric_extended;
    throw InputError("unknown network model variant " + std::string(name));
}

std::string to_string(MobilityResponse response) {
    switch (response) {
        case MobilityResponse::total: return "total";
        case MobilityResponse::in: return "in";
        case MobilityResponse::out: return "out";
    }
    return "unknown";
}

std::string to_string(MobilityVariant variant) {
    return variant == MobilityVariant::full ? "full" : "final";
}

MobilityResponse parse_mobility_response(std::string_view name) {
    if (name == "total") return MobilityResponse::total;
    if (name == "in") return MobilityResponse::in;
    if (name == "out") return MobilityResponse::out;
    throw InputError("unknown mobility response " + std::string(name));
}

MobilityVariant parse_mobility_variant(std::string_view name) {
    if (name == "full") return MobilityVariant::full;
    if (name == "final") return MobilityVariant::final_model;
    throw InputError("unknown mobility model variant " + std::string(name));
}

GamDesign network_design(const DyadFrame& frame, NetworkVariant variant, int n_knots) {
    const auto& rows = frame.rows;
    if (rows.empty()) throw InputError("empty dyad frame");
    std::set<int> distinct_years;
    for (const auto& r : rows) distinct_years.insert(r.year);
    if (distinct_years.size() < 2) throw InputError("network models need at least two years");

    auto column = [&](auto get) {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) v.push_back(get(r));
        return v;
    };
    std::vector<int> years;
    for (const auto& r : rows) years.push_back(r.year);
    const auto year_levels = year_labels(years);

    GamDesign d;
    auto smooth = [&](std::string name, std::vector<double> x, bool by_year) {
        SmoothTerm t{std::move(name), std::move(x), n_knots, {}, std::nullopt};
        if (by_year) t.by = year_levels;
        d.smooths.push_back(std::move(t));
    };
    auto role_smooth = [&](std::size_t k, bool by_year) {
        smooth(std::string("f_") + kShortNames[k] + "_sender", column([k](const DyadRow& r) { return r.sender_cov[k]; }), by_year);
        smooth(std::string("f_") + kShortNames[k] + "_receiver", column([k](const DyadRow& r) { return r.receiver_cov[k]; }), by_year);
    };
    auto sum_smooth = [&](std::size_t k) {
        smooth(std::string("f_") + kShortNames[k] + "_sum",
               column([k](const DyadRow& r) { return r.sender_cov[k] + r.receiver_cov[k]; }), false);
    };
    const std::size_t uni = 2, ted = 3;

    switch (variant) {
        case NetworkVariant::full:
            for (std::size_t k = 0; k < 4; ++k) role_smooth(k, true);
            break;
        case NetworkVariant::final_model:
            role_smooth(uni, false);
            role_smooth(ted, false);
            break;
        case NetworkVariant::symmetric:
            sum_smooth(uni);
            sum_smooth(ted);
            break;
        case NetworkVariant::asymmetric_extended:
            sum_smooth(uni);
            sum_smooth(ted);
            role_smooth(uni, false);
            role_smooth(ted, false);
            break;
    }
    // Shared terms go first so the symmetric design nests in the extension.
    std::vector<SmoothTerm> ordered;
    ordered.push_back(SmoothTerm{"g_log_dist", column([](const DyadRow& r) { return r.log_dist; }), n_knots, {}, std::nullopt});
    for (auto& t : d.smooths) ordered.push_back(std::move(t));
    d.smooths = std::move(ordered);

    if (variant == NetworkVariant::full)
        d.linear.push_back({"same_lan", column([](const DyadRow& r) { return r.same_lan ? 1.0 : 0.0; })});
    d.linear.push_back({"same_country", column([](const DyadRow& r) { return r.same_country ? 1.0 : 0.0; })});
    d.random.push_back({"year", year_levels, std::nullopt});
    return d;
}

GamFit fit_network_model(const DyadFrame& frame, NetworkVariant variant, const ModelOptions& options) {
    std::vector<double> y;
    y.reserve(frame.rows.size());
    for (const auto& r : frame.rows) y.push_back(r.response);
    GamFit fit = fit_pgam(network_design(frame, variant, options.n_knots), y, options.gam);
    fit.variant = "network:" + to_string(variant);
    return fit;
}

GamDesign mobility_design(const MobilityFrame& frame, MobilityVariant variant, int n_knots) {
    const auto& rows = frame.rows;
    if (rows.empty()) throw InputError("empty mobility frame");
    std::vector<int> years;
    std::vector<std::string> countries;
    for (const auto& r : rows) {
        years.push_back(r.year);
        countries.push_back(r.country);
    }
    const auto year_levels = year_labels(years);
    GamDesign d;
    auto add = [&](std::size_t k, bool by_year) {
        std::vector<double> x;
        for (const auto& r : rows) x.push_back(r.cov[k]);
        SmoothTerm t{std::string("f_") + kShortNames[k], std::move(x), n_knots, {}, std::nullopt};
        if (by_year) t.by = year_levels;
        d.smooths.push_back(std::move(t));
    };
    if (variant == MobilityVariant::full) {
        for (std::size_t k = 0; k < 4; ++k) add(k, true);
    } else {
        add(2, false);
        add(3, false);
        add(1, false);
    }
    d.random.push_back({"year", year_levels, std::nullopt});
    d.random.push_back({"country", countries, std::nullopt});
    return d;
}

std::vector<double> mobility_response(const MobilityFrame& frame, MobilityResponse response) {
    std::vector<double> y;
    y.reserve(frame.rows.size());
    for (const auto& r : frame.rows) {
        switch (response) {
            case MobilityResponse::total: y.push_back(std::log(r.in_flow + r.out_flow + 1.0)); break;
            case MobilityResponse::in: y.push_back(std::log(r.in_flow + 1.0)); break;
            case MobilityResponse::out: y.push_back(std::log(r.out_flow + 1.0)); break;
        }
    }
    return y;
}

GamFit fit_mobility_model(const MobilityFrame& frame, MobilityResponse response, MobilityVariant variant,
                          const ModelOptions& options) {
    GamFit fit = fit_pgam(mobility_design(frame, variant, options.n_knots), mobility_response(frame, response),
                          options.gam);
    fit.variant = "mobility:" + to_string(variant) + ":" + to_string(response);
    return fit;
}

PermFResult symmetry_test(const DyadFrame& frame, std::size_t permutations, std::uint64_t seed,
                          const ModelOptions& options) {
    const GamFit null_fit = fit_network_model(frame, NetworkVariant::symmetric, options);
    auto result = perm_f_test(null_fit, network_design(frame, NetworkVariant::asymmetric_extended, options.n_knots),
                              permutations, seed, options.gam);
    result.extended.variant = "network:" + to_string(NetworkVariant::asymmetric_extended);
    return result;
}

double EduImputer::predict(double attainment) const {
    const double at[1] = {attainment};
    const double value = fit.intercept() + fit.curve("f_attainment", at).front().fit;
    return std::clamp(value, 0.0, 1.0);
}

EduImputer fit_edu_imputer(std::span<const double> attainment, std::span<const double> edu_index,
                           const ModelOptions& options) {
    if (attainment.size() != edu_index.size()) throw InputError("attainment and Education Index lengths differ");
    if (attainment.size() < 20) throw InputError("the Education Index imputer needs at least 20 paired observations");
    for (double v : edu_index)
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("Education Index values must lie in [0, 1]");
    GamDesign d;
    d.smooths.push_back({"f_attainment", std::vector<double>(attainment.begin(), attainment.end()), options.n_knots, {}, std::nullopt});
    EduImputer imputer{fit_pgam(d, edu_index, options.gam)};
    imputer.fit.variant = "edu_imputer";
    return imputer;
}

nlohmann::json model_report(const GamFit& fit) {
    using nlohmann::json;
    auto num = [](double v) -> json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    };
    json report;
    report["variant"] = fit.variant;
    report["n"] = fit.response.size();
    report["r_squared"] = num(fit.r_squared);
    report["rss"] = num(fit.rss);
    report["edf"] = num(fit.edf);
    report["sigma2"] = num(fit.sigma2);
    report["gcv"] = num(fit.gcv);
    json terms = json::array();
    for (const auto& t : fit.terms) {
        json item{{"name", t.name}, {"kind", to_string(t.kind)}, {"first", t.first}, {"columns", t.size}};
        if (!t.level.empty()) item["level"] = t.level;
        terms.push_back(item);
    }
    report["terms"] = terms;
    json lambdas = json::object();
    for (std::size_t g = 0; g < fit.lambda_names.size(); ++g) lambdas[fit.lambda_names[g]] = num(fit.lambdas[g]);
    report["lambda"] = lambdas;
    json f = json::object();
    for (const auto& name : fit.lambda_names)
        for (const auto& t : fit.terms)
            if (t.name == name && t.kind == TermKind::smooth) {
                f[name] = num(fit.term_f(name));
                break;
            }
    report["term_f"] = f;
    json coefficients = json::array();
    for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) coefficients.push_back(fit.coefficients[j]);
    report["coefficients"] = coefficients;
    json random = json::object();
    for (const auto& t : fit.terms)
        if (t.kind == TermKind::random) random[t.name][t.level] = t.size ? fit.coefficients[static_cast<Eigen::Index>(t.first)] : 0.0;
    report["random_intercepts"] = random;
    report["absorbed_linear_parts"] = fit.absorbed;
    return report;
}

void write_curves(std::ostream& out, const GamFit& fit, int points) {
    if (points < 2) throw InputError("curves need at least two points");
    csv::Writer w(out);
    w.row({"term", "x", "fit", "se"});
    for (const auto& sc : fit.smooths) {
        std::vector<double> x(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i)
            x[static_cast<std::size_t>(i)] = sc.x_min + (sc.x_max - sc.x_min) * i / (points - 1);
        const std::string label = sc.level.empty() ? sc.name : sc.name + "[" + sc.level + "]";
        for (const auto& p : fit.curve(sc.name, x, sc.level)) w.row({label, number(p.x), number(p.fit), number(p.se)});
    }
}

}  // namespace mobnet::model
