#include "mobnet/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"

namespace mobnet::covariates {

std::string to_string(Indicator indicator) {
    switch (indicator) {
        case Indicator::gdp_pc: return "gdp_pc";
        case Indicator::edu_index: return "edu_index";
        case Indicator::uni_score: return "uni_score";
        case Indicator::ted: return "ted";
    }
    return "unknown";
}

std::optional<Indicator> parse_indicator(std::string_view name) {
    for (auto ind : kIndicators)
        if (to_string(ind) == name) return ind;
    return std::nullopt;
}

std::string to_string(Provenance provenance) {
    switch (provenance) {
        case Provenance::observed: return "observed";
        case Provenance::corrected: return "corrected";
        case Provenance::imputed: return "imputed";
    }
    return "unknown";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
    if (name == "observed") return Provenance::observed;
    if (name == "corrected") return Provenance::corrected;
    if (name == "imputed") return Provenance::imputed;
    return std::nullopt;
}

void RegionYearPanel::set(const std::string& region, int year, Indicator indicator, double value,
                          Provenance provenance) {
    auto where = [&] { return region + "/" + std::to_string(year) + "/" + to_string(indicator); };
    if (!std::isfinite(value)) throw InputError("non-finite value at " + where());
    switch (indicator) {
        case Indicator::gdp_pc:
            if (!(value > 0.0)) throw InputError("gdp_pc must be positive at " + where());
            break;
        case Indicator::edu_index:
            if (value < 0.0 || value > 1.0) throw InputError("edu_index outside [0,1] at " + where());
            break;
        case Indicator::uni_score:
            if (value < 0.0) throw InputError("uni_score negative at " + where());
            break;
        case Indicator::ted: break;
    }
    cells_[{region, year, indicator}] = Cell{value, provenance};
}

void RegionYearPanel::set_missing(const std::string& region, int year, Indicator indicator) {
    cells_[{region, year, indicator}] = Cell{std::nullopt, Provenance::observed};
}

const Cell* RegionYearPanel::find(std::string_view region, int year, Indicator indicator) const {
    auto it = cells_.find({std::string(region), year, indicator});
    return it == cells_.end() ? nullptr : &it->second;
}

std::optional<double> RegionYearPanel::value(std::string_view region, int year, Indicator indicator) const {
    const Cell* cell = find(region, year, indicator);
    return cell ? cell->value : std::nullopt;
}

double RegionYearPanel::at(std::string_view region, int year, Indicator indicator) const {
    if (auto v = value(region, year, indicator)) return *v;
    throw InputError("no " + to_string(indicator) + " value for " + std::string(region) + " in " +
                     std::to_string(year));
}

std::vector<std::string> RegionYearPanel::regions() const {
    std::vector<std::string> out;
    for (const auto& [key, _] : cells_)
        if (out.empty() || out.back() != key.region) out.push_back(key.region);
    return out;
}

std::vector<int> RegionYearPanel::years() const {
    std::set<int> years;
    for (const auto& [key, _] : cells_) years.insert(key.year);
    return {years.begin(), years.end()};
}

std::size_t RegionYearPanel::missing_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells_.begin(), cells_.end(), [](const auto& kv) { return !kv.second.value; }));
}

int ranking_weight_denominator(int position) {
    if (position < 1) throw InputError("ranking position must be >= 1, got " + std::to_string(position));
    if (position <= 10) return 5;
    if (position <= 20) return 10;
    if (position <= 50) return 25;
    if (position <= 100) return 50;
    if (position <= 250) return 125;
    if (position <= 500) return 250;
    return 0;
}

double ranking_weight(int position) {
    const int denom = ranking_weight_denominator(position);
    return denom == 0 ? 0.0 : 1.0 / denom;
}

double university_score(std::span<const RankingEntry> entries, std::string_view region) {
    if (!entries.empty()) {
        const int year = entries.front().year;
        for (const auto& e : entries)
            if (e.year != year) throw InputError("university_score: entries span several years");
    }
    double sum = 0.0;
    for (const auto& e : entries)
        if (e.region == region) sum += ranking_weight(e.position);
    return std::cbrt(sum);
}

std::optional<double> ted_indicator(std::span<const ProcurementNotice> notices, std::string_view region,
                                    int year) {
    double total = 0.0;
    for (const auto& n : notices) {
        if (n.value_euro < 0.0) throw InputError("negative procurement value in " + n.region);
        if (n.awarded && n.year == year && n.region == region) total += n.value_euro;
    }
    if (!(total > 0.0)) return std::nullopt;
    return std::log(total);
}

RegionYearValues gdp_correction(const RegionYearValues& regional, const CountryYearValues& table_national,
                                const CountryYearValues& benchmark, const ingest::RegionMap& regions) {
    RegionYearValues out;
    for (const auto& [key, value] : regional) {
        const auto& [region, year] = key;
        const std::string& country = regions.country(region);
        auto where = [&] { return "(" + country + ", " + std::to_string(year) + ")"; };
        auto nat = table_national.find({country, year});
        if (nat == table_national.end() || !(nat->second > 0.0))
            throw InputError("missing or non-positive national GDP value for " + where());
        auto bench = benchmark.find({country, year});
        if (bench == benchmark.end() || !(bench->second > 0.0))
            throw InputError("missing or non-positive benchmark GDP value for " + where());
        out[key] = value * (bench->second / nat->second);
    }
    return out;
}

double edu_aggregate(std::span<const double> subregion_values) {
    if (subregion_values.empty()) throw InputError("edu_aggregate: no subregion values");
    double sum = 0.0;
    for (double v : subregion_values) {
        if (v < 0.0 || v > 1.0) throw InputError("edu_aggregate: value outside [0,1]");
        sum += v;
    }
    return sum / static_cast<double>(subregion_values.size());
}

RegionYearPanel impute_panel(const RegionYearPanel& panel, const ingest::RegionMap& regions) {
    const auto years = panel.years();
    const auto region_list = panel.regions();
    if (years.empty()) return panel;
    const int first = years.front(), last = years.back();

    RegionYearPanel out = panel;
    for (Indicator ind : kIndicators) {
        // Per-region interpolation pass; regions without any observation wait
        // for the country-year means.
        std::vector<std::string> empty_series;
        for (const auto& region : region_list) {
            std::vector<std::pair<int, double>> observed;
            for (int y = first; y <= last; ++y)
                if (auto v = panel.value(region, y, ind)) observed.emplace_back(y, *v);
            if (observed.empty()) {
                empty_series.push_back(region);
                continue;
            }
            std::size_t next = 0;
            for (int y = first; y <= last; ++y) {
                while (next < observed.size() && observed[next].first < y) ++next;
                if (next < observed.size() && observed[next].first == y) continue;
                double v;
                if (next == 0) {
                    v = observed.front().second;
                } else if (next == observed.size()) {
                    v = observed.back().second;
                } else {
                    const auto [y0, v0] = observed[next - 1];
                    const auto [y1, v1] = observed[next];
                    const double t = static_cast<double>(y - y0) / static_cast<double>(y1 - y0);
                    v = v0 + t * (v1 - v0);
                }
                out.set(region, y, ind, v, Provenance::imputed);
            }
        }
        for (const auto& region : empty_series) {
            const std::string& country = regions.country(region);
            for (int y = first; y <= last; ++y) {
                double sum = 0.0;
                int n = 0;
                for (const auto& other : region_list) {
                    if (other == region || regions.country(other) != country) continue;
                    if (auto v = out.value(other, y, ind)) {
                        sum += *v;
                        ++n;
                    }
                }
                if (n == 0)
                    throw InputError(to_string(ind) + " is missing for every region and year of country " +
                                     country);
                out.set(region, y, ind, sum / n, Provenance::imputed);
            }
        }
    }
    return out;
}

namespace {

template <class Fn>
void for_rows(const std::filesystem::path& path, const csv::Table& table, Fn&& fn) {
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        try {
            if (row.size() != table.header.size()) throw InputError("wrong field count");
            fn(row);
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(table.lines[r]) + ": " + e.what());
        }
    }
}

bool parse_bool(std::string_view field) {
    const std::string f = ingest::fold_name(field);
    if (f == "1" || f == "true" || f == "yes") return true;
    if (f == "0" || f == "false" || f == "no") return false;
    throw InputError("not a boolean: '" + std::string(field) + "'");
}

}  // namespace

std::vector<RankingEntry> read_rankings(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_year = table.column("year"), c_uni = table.column("university"),
               c_pos = table.column("position"), c_region = table.column("region");
    std::vector<RankingEntry> out;
    for_rows(path, table, [&](const auto& row) {
        RankingEntry e{csv::parse_int(row[c_year], "year"), row[c_uni], csv::parse_int(row[c_pos], "position"),
                       row[c_region]};
        if (e.position < 1) throw InputError("position must be >= 1");
        out.push_back(std::move(e));
    });
    return out;
}

std::vector<ProcurementNotice> read_procurements(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_year = table.column("year"), c_region = table.column("region"),
               c_value = table.column("value_euro"), c_awarded = table.column("awarded");
    std::vector<ProcurementNotice> out;
    for_rows(path, table, [&](const auto& row) {
        ProcurementNotice n{csv::parse_int(row[c_year], "year"), row[c_region],
                            csv::parse_double(row[c_value], "value_euro"), parse_bool(row[c_awarded])};
        if (n.value_euro < 0.0) throw InputError("negative value_euro");
        out.push_back(std::move(n));
    });
    return out;
}

RegionYearValues read_region_values(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_region = table.column("region"), c_year = table.column("year"), c_value = table.column("value");
    RegionYearValues out;
    for_rows(path, table, [&](const auto& row) {
        if (auto v = csv::parse_optional_double(row[c_value]))
            out[{row[c_region], csv::parse_int(row[c_year], "year")}] = *v;
    });
    return out;
}

CountryYearValues read_country_values(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_country = table.column("country"), c_year = table.column("year"), c_value = table.column("value");
    CountryYearValues out;
    for_rows(path, table, [&](const auto& row) {
        if (auto v = csv::parse_optional_double(row[c_value]))
            out[{row[c_country], csv::parse_int(row[c_year], "year")}] = *v;
    });
    return out;
}

void write_rankings(std::ostream& out, std::span<const RankingEntry> entries) {
    csv::Writer w(out);
    w.row({"year", "university", "position", "region"});
    for (const auto& e : entries) w.row({std::to_string(e.year), e.university, std::to_string(e.position), e.region});
}

void write_procurements(std::ostream& out, std::span<const ProcurementNotice> notices) {
    csv::Writer w(out);
    w.row({"year", "region", "value_euro", "awarded"});
    for (const auto& n : notices)
        w.row({std::to_string(n.year), n.region, csv::format_number(n.value_euro), n.awarded ? "1" : "0"});
}

void write_region_values(std::ostream& out, const RegionYearValues& values) {
    csv::Writer w(out);
    w.row({"region", "year", "value"});
    for (const auto& [key, v] : values) w.row({key.first, std::to_string(key.second), csv::format_number(v)});
}

void write_country_values(std::ostream& out, const CountryYearValues& values) {
    csv::Writer w(out);
    w.row({"country", "year", "value"});
    for (const auto& [key, v] : values) w.row({key.first, std::to_string(key.second), csv::format_number(v)});
}

void write_panel(std::ostream& out, const RegionYearPanel& panel) {
    csv::Writer w(out);
    w.row({"region", "year", "indicator", "value", "provenance"});
    for (const auto& [key, cell] : panel.cells())
        w.row({key.region, std::to_string(key.year), to_string(key.indicator),
               cell.value ? csv::format_number(*cell.value) : "", to_string(cell.provenance)});
}

RegionYearPanel read_panel(std::istream& in) {
    const auto table = csv::parse(in);
    const auto c_region = table.column("region"), c_year = table.column("year"),
               c_ind = table.column("indicator"), c_value = table.column("value"),
               c_prov = table.column("provenance");
    RegionYearPanel panel;
    for_rows("panel", table, [&](const auto& row) {
        const auto ind = parse_indicator(row[c_ind]);
        if (!ind) throw InputError("unknown indicator '" + row[c_ind] + "'");
        const auto prov = parse_provenance(row[c_prov]);
        if (!prov) throw InputError("unknown provenance '" + row[c_prov] + "'");
        const int year = csv::parse_int(row[c_year], "year");
        if (auto v = csv::parse_optional_double(row[c_value])) panel.set(row[c_region], year, *ind, *v, *prov);
        else panel.set_missing(row[c_region], year, *ind);
    });
    return panel;
}

RegionYearPanel read_panel(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_panel(in);
}

RegionYearPanel build_panel(const IndicatorSources& sources, const ingest::RegionMap& regions,
                            ingest::YearRange years) {
    RegionYearPanel panel;
    const bool correct_gdp = !sources.gdp_table_national.empty() || !sources.gdp_benchmark.empty();
    RegionYearValues gdp = sources.gdp_regional;
    if (correct_gdp) {
        RegionYearValues in_range;
        for (const auto& [key, v] : gdp)
            if (years.contains(key.second) && regions.contains(key.first)) in_range[key] = v;
        gdp = gdp_correction(in_range, sources.gdp_table_national, sources.gdp_benchmark, regions);
    }
    std::map<int, std::vector<RankingEntry>> rankings_by_year;
    for (const auto& e : sources.rankings) rankings_by_year[e.year].push_back(e);

    for (const auto& region : regions.regions()) {
        for (int y = years.first; y <= years.last; ++y) {
            if (auto it = gdp.find({region, y}); it != gdp.end())
                panel.set(region, y, Indicator::gdp_pc, it->second,
                          correct_gdp ? Provenance::corrected : Provenance::observed);
            else
                panel.set_missing(region, y, Indicator::gdp_pc);

            if (auto it = sources.edu.find({region, y}); it != sources.edu.end())
                panel.set(region, y, Indicator::edu_index, it->second);
            else
                panel.set_missing(region, y, Indicator::edu_index);

            if (auto it = rankings_by_year.find(y); it != rankings_by_year.end())
                panel.set(region, y, Indicator::uni_score, university_score(it->second, region));
            else
                panel.set_missing(region, y, Indicator::uni_score);

            if (auto ted = ted_indicator(sources.procurements, region, y))
                panel.set(region, y, Indicator::ted, *ted);
            else
                panel.set_missing(region, y, Indicator::ted);
        }
    }
    return panel;
}

}  // namespace mobnet::covariates
