#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mobnet/ingest.hpp"

namespace mobnet::covariates {

enum class Indicator { gdp_pc, edu_index, uni_score, ted };
inline constexpr std::array<Indicator, 4> kIndicators = {Indicator::gdp_pc, Indicator::edu_index,
                                                         Indicator::uni_score, Indicator::ted};

enum class Provenance { observed, corrected, imputed };

std::string to_string(Indicator indicator);
std::optional<Indicator> parse_indicator(std::string_view name);
std::string to_string(Provenance provenance);
std::optional<Provenance> parse_provenance(std::string_view name);

struct Cell {
    std::optional<double> value;  // empty = missing
    Provenance provenance = Provenance::observed;
};

struct CellKey {
    std::string region;
    int year = 0;
    Indicator indicator = Indicator::gdp_pc;
    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

// Region x year x indicator values with per-cell missingness and provenance.
class RegionYearPanel {
public:
    // Validates the indicator's range (edu in [0,1], uni >= 0, gdp > 0,
    // finite values) and overwrites any existing cell.
    void set(const std::string& region, int year, Indicator indicator, double value,
             Provenance provenance = Provenance::observed);
    void set_missing(const std::string& region, int year, Indicator indicator);

    const Cell* find(std::string_view region, int year, Indicator indicator) const;
    std::optional<double> value(std::string_view region, int year, Indicator indicator) const;
    // Throws InputError when the cell is absent or missing.
    double at(std::string_view region, int year, Indicator indicator) const;

    const std::map<CellKey, Cell>& cells() const { return cells_; }
    std::vector<std::string> regions() const;
    std::vector<int> years() const;
    std::size_t missing_count() const;

private:
    std::map<CellKey, Cell> cells_;
};

// Band weight for a ranking position: 1-10 -> 1/5, 11-20 -> 1/10,
// 21-50 -> 1/25, 51-100 -> 1/50, 101-250 -> 1/125, 251-500 -> 1/250,
// beyond 500 -> 0. Each weight is the inverse of half the band's last
// position.
double ranking_weight(int position);
// Denominator d of the band weight 1/d; 0 when unranked (> 500).
int ranking_weight_denominator(int position);

struct RankingEntry {
    int year = 0;
    std::string university;
    int position = 1;
    std::string region;
};

// Cube root of the summed band weights of the region's ranked universities.
double university_score(std::span<const RankingEntry> entries, std::string_view region);

struct ProcurementNotice {
    int year = 0;
    std::string region;
    double value_euro = 0.0;
    bool awarded = false;
};

// ln of the awarded value in the region-year; empty when nothing was awarded.
std::optional<double> ted_indicator(std::span<const ProcurementNotice> notices, std::string_view region,
                                    int year);

using RegionYearValues = std::map<std::pair<std::string, int>, double>;
using CountryYearValues = std::map<std::pair<std::string, int>, double>;

// Rescales each region by benchmark / table_national for its (country, year).
RegionYearValues gdp_correction(const RegionYearValues& regional, const CountryYearValues& table_national,
                                const CountryYearValues& benchmark, const ingest::RegionMap& regions);

double edu_aggregate(std::span<const double> subregion_values);

// Deterministic gap filling: linear interpolation between observed years,
// nearest observation at the boundaries, country-year mean for regions
// with no observation of an indicator. Fills every region x year x
// indicator cell over the panel's year span.
RegionYearPanel impute_panel(const RegionYearPanel& panel, const ingest::RegionMap& regions);

// Table readers (CSV layouts as documented in the README).
std::vector<RankingEntry> read_rankings(const std::filesystem::path& path);
std::vector<ProcurementNotice> read_procurements(const std::filesystem::path& path);
RegionYearValues read_region_values(const std::filesystem::path& path);
CountryYearValues read_country_values(const std::filesystem::path& path);

void write_rankings(std::ostream& out, std::span<const RankingEntry> entries);
void write_procurements(std::ostream& out, std::span<const ProcurementNotice> notices);
void write_region_values(std::ostream& out, const RegionYearValues& values);
void write_country_values(std::ostream& out, const CountryYearValues& values);

void write_panel(std::ostream& out, const RegionYearPanel& panel);
RegionYearPanel read_panel(std::istream& in);
RegionYearPanel read_panel(const std::filesystem::path& path);

// Raw indicator sources for one panel build. Any may be empty.
struct IndicatorSources {
    std::vector<RankingEntry> rankings;
    std::vector<ProcurementNotice> procurements;
    RegionYearValues gdp_regional;
    CountryYearValues gdp_table_national;
    CountryYearValues gdp_benchmark;
    RegionYearValues edu;
};

// Assembles the four indicators for every region of the map over the year
// range. GDP is corrected when national and benchmark tables are given;
// University Score is 0 for unranked regions in years with a ranking.
RegionYearPanel build_panel(const IndicatorSources& sources, const ingest::RegionMap& regions,
                            ingest::YearRange years);

}  // namespace mobnet::covariates
