#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mobnet::ingest {

enum class AffiliationKind { employment, education };

struct AffiliationRecord {
    std::string person_id;
    std::string place_raw;
    std::optional<std::string> region;
    std::optional<int> start_year;
    std::optional<int> end_year;
    AffiliationKind kind = AffiliationKind::employment;
};

struct MigrationEvent {
    std::string person_id;
    std::string from_region;
    std::string to_region;
    int year = 0;

    friend bool operator==(const MigrationEvent&, const MigrationEvent&) = default;
};

struct Centroid {
    double lat = 0.0;
    double lon = 0.0;
};

struct ResolveOptions {
    // Normalized edit-distance similarity in (0, 1] above which an
    // unmatched place is assigned to its closest known name. Off when empty.
    std::optional<double> fuzzy_threshold;
};

// Lowercases ASCII, strips Latin diacritics (U+00C0..U+017F) and collapses
// runs of whitespace. Non-Latin code points pass through unchanged.
std::string fold_name(std::string_view name);

// Levenshtein similarity 1 - d / max(|a|, |b|) over bytes.
double name_similarity(std::string_view a, std::string_view b);

class RegionMap {
public:
    void add_region(const std::string& code, const std::string& country, Centroid centroid);
    void add_alias(std::string_view raw_name, const std::string& region);
    void set_population(const std::string& region, int year, double population);
    void set_researchers(const std::string& region, int year, double researchers);

    bool contains(std::string_view region) const;
    // Throws InputError naming the region when it is unknown.
    const std::string& country(std::string_view region) const;
    Centroid centroid(std::string_view region) const;
    std::optional<double> population(std::string_view region, int year) const;
    std::optional<double> researchers(std::string_view region, int year) const;

    // Sorted region codes.
    std::vector<std::string> regions() const;
    std::set<std::string> region_set() const;
    std::vector<std::string> regions_of(std::string_view country) const;

    // Exact code, then folded code, then alias table (raw, then folded key),
    // then the optional fuzzy fallback.
    std::optional<std::string> resolve(std::string_view place, const ResolveOptions& options = {}) const;

    static RegionMap load(const std::filesystem::path& metadata,
                          const std::optional<std::filesystem::path>& aliases = std::nullopt,
                          const std::optional<std::filesystem::path>& denominators = std::nullopt);

    void write_metadata(std::ostream& out) const;
    void write_aliases(std::ostream& out) const;
    void write_denominators(std::ostream& out) const;

private:
    struct Region {
        std::string country;
        Centroid centroid;
    };
    std::map<std::string, Region, std::less<>> regions_;
    std::map<std::string, std::string, std::less<>> folded_codes_;
    std::map<std::string, std::string, std::less<>> aliases_;         // raw key
    std::map<std::string, std::string, std::less<>> folded_aliases_;  // folded key
    std::map<std::pair<std::string, int>, double> population_;
    std::map<std::pair<std::string, int>, double> researchers_;
};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

struct ParseResult {
    std::vector<AffiliationRecord> records;
    std::vector<RowError> errors;
    std::size_t resolved = 0;
    // resolved / records.size(); 0 for an empty table.
    double resolution_rate = 0.0;
};

ParseResult parse_affiliations(std::istream& in, const RegionMap& regions,
                               const ResolveOptions& options = {});
ParseResult parse_affiliations(const std::filesystem::path& path, const RegionMap& regions,
                               const ResolveOptions& options = {});

// Orders each person's dated, resolved affiliations by (start, end, region,
// kind) and emits one event per consecutive pair with differing regions.
// Output is sorted by person id, then affiliation order.
std::vector<MigrationEvent> extract_migrations(std::span<const AffiliationRecord> records);

struct YearRange {
    int first = 0;
    int last = 0;
    bool contains(int year) const { return first <= year && year <= last; }
    int size() const { return last - first + 1; }
};

enum class Scope { all, internal };

struct FlowKey {
    // Empty for cumulative entries ("*" in CSV).
    std::optional<int> year;
    std::string sender;
    std::string receiver;

    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

class FlowTable {
public:
    FlowTable() = default;
    FlowTable(YearRange years, std::set<std::string> universe, Scope scope)
        : years_(years), universe_(std::move(universe)), scope_(scope) {}

    // Adds to the entry; rejects negative counts, self-flows and, for
    // internal tables, endpoints outside the universe.
    void add(const FlowKey& key, double count);

    const std::map<FlowKey, double>& entries() const { return entries_; }
    double count(const FlowKey& key) const;
    double total() const;
    bool cumulative() const;
    bool empty() const { return entries_.empty(); }

    YearRange years() const { return years_; }
    const std::set<std::string>& universe() const { return universe_; }
    Scope scope() const { return scope_; }

private:
    std::map<FlowKey, double> entries_;
    YearRange years_;
    std::set<std::string> universe_;
    Scope scope_ = Scope::internal;
};

FlowTable build_flow_table(std::span<const MigrationEvent> events, YearRange years,
                           const std::set<std::string>& universe, Scope scope);

enum class Level { region, country };
enum class TimeMode { per_year, cumulative };

FlowTable aggregate_flows(const FlowTable& table, const RegionMap& regions, Level level,
                          TimeMode time);

enum class Normalization { sender_pop, receiver_pop, both_pop, sender_res, receiver_res, both_res };

std::optional<Normalization> parse_normalization(std::string_view name);
std::string to_string(Normalization scheme);

FlowTable normalize_flows(const FlowTable& table, const RegionMap& regions, Normalization scheme);

// Canonical `year,sender,receiver,count` CSV, entries in key order.
void write_flow_table(std::ostream& out, const FlowTable& table);
// Reads the canonical CSV. The universe defaults to every code that
// appears; the year range to the span of years present.
FlowTable read_flow_table(std::istream& in, Scope scope,
                          std::optional<std::set<std::string>> universe = std::nullopt);
FlowTable read_flow_table(const std::filesystem::path& path, Scope scope,
                          std::optional<std::set<std::string>> universe = std::nullopt);

}  // namespace mobnet::ingest
