#include "mobnet/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"

namespace mobnet::ingest {

namespace {

// Folded ASCII spelling for U+00C0..U+00FF; empty entries keep the code point.
constexpr const char* kLatin1[64] = {
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i",  "i",
    "d", "n", "o", "o", "o", "o", "o",  "",  "o", "u", "u", "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i",  "i",
    "d", "n", "o", "o", "o", "o", "o",  "",  "o", "u", "u", "u", "u", "y", "th", "y",
};

// Latin Extended-A (U+0100..U+017F) folded by code point range.
const char* fold_extended_a(char32_t cp) {
    struct Range {
        char32_t first, last;
        const char* folded;
    };
    static constexpr Range kRanges[] = {
        {0x100, 0x105, "a"},  {0x106, 0x10D, "c"}, {0x10E, 0x111, "d"}, {0x112, 0x11B, "e"},
        {0x11C, 0x123, "g"},  {0x124, 0x127, "h"}, {0x128, 0x131, "i"}, {0x132, 0x133, "ij"},
        {0x134, 0x135, "j"},  {0x136, 0x138, "k"}, {0x139, 0x142, "l"}, {0x143, 0x14B, "n"},
        {0x14C, 0x151, "o"},  {0x152, 0x153, "oe"}, {0x154, 0x159, "r"}, {0x15A, 0x161, "s"},
        {0x162, 0x167, "t"},  {0x168, 0x173, "u"}, {0x174, 0x175, "w"}, {0x176, 0x178, "y"},
        {0x179, 0x17E, "z"},  {0x17F, 0x17F, "s"},
    };
    for (const auto& r : kRanges)
        if (cp >= r.first && cp <= r.last) return r.folded;
    return nullptr;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return std::string(s);
}

void check_centroid(const std::string& code, Centroid c) {
    if (!(c.lat >= -90.0 && c.lat <= 90.0) || !(c.lon >= -180.0 && c.lon <= 180.0))
        throw InputError("region " + code + ": centroid out of range");
}

}  // namespace

std::string fold_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    bool pending_space = false;
    auto emit = [&](std::string_view piece) {
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.append(piece);
    };
    for (std::size_t i = 0; i < name.size();) {
        const auto c = static_cast<unsigned char>(name[i]);
        if (c < 0x80) {
            if (is_space(static_cast<char>(c))) {
                pending_space = true;
            } else {
                const char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                                          : static_cast<char>(c);
                emit(std::string_view(&lower, 1));
            }
            ++i;
            continue;
        }
        // Two-byte sequences cover U+0080..U+07FF, which includes both Latin blocks.
        if ((c & 0xE0) == 0xC0 && i + 1 < name.size()) {
            const auto c2 = static_cast<unsigned char>(name[i + 1]);
            const char32_t cp = (static_cast<char32_t>(c & 0x1F) << 6) | (c2 & 0x3F);
            const char* folded = nullptr;
            if (cp >= 0xC0 && cp <= 0xFF && kLatin1[cp - 0xC0][0] != '\0') folded = kLatin1[cp - 0xC0];
            else if (cp >= 0x100 && cp <= 0x17F) folded = fold_extended_a(cp);
            if (folded) emit(folded);
            else emit(name.substr(i, 2));
            i += 2;
            continue;
        }
        std::size_t len = 1;
        if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        len = std::min(len, name.size() - i);
        emit(name.substr(i, len));
        i += len;
    }
    return out;
}

double name_similarity(std::string_view a, std::string_view b) {
    if (a.empty() && b.empty()) return 1.0;
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
        }
        std::swap(prev, cur);
    }
    const double longest = static_cast<double>(std::max(a.size(), b.size()));
    return 1.0 - static_cast<double>(prev[b.size()]) / longest;
}

void RegionMap::add_region(const std::string& code, const std::string& country, Centroid centroid) {
    if (code.empty()) throw InputError("empty region code");
    if (country.empty()) throw InputError("region " + code + ": empty country code");
    check_centroid(code, centroid);
    auto [it, inserted] = regions_.try_emplace(code, Region{country, centroid});
    if (!inserted && it->second.country != country)
        throw InputError("region " + code + " mapped to two countries: " + it->second.country +
                         " and " + country);
    it->second.centroid = centroid;
    folded_codes_[fold_name(code)] = code;
}

void RegionMap::add_alias(std::string_view raw_name, const std::string& region) {
    if (!contains(region)) throw InputError("alias '" + std::string(raw_name) + "' targets unknown region " + region);
    aliases_[std::string(raw_name)] = region;
    folded_aliases_[fold_name(raw_name)] = region;
}

void RegionMap::set_population(const std::string& region, int year, double population) {
    if (!(population > 0.0)) throw InputError("region " + region + ": population must be positive");
    population_[{region, year}] = population;
}

void RegionMap::set_researchers(const std::string& region, int year, double researchers) {
    if (!(researchers > 0.0)) throw InputError("region " + region + ": researcher count must be positive");
    researchers_[{region, year}] = researchers;
}

bool RegionMap::contains(std::string_view region) const { return regions_.find(region) != regions_.end(); }

const std::string& RegionMap::country(std::string_view region) const {
    auto it = regions_.find(region);
    if (it == regions_.end()) throw InputError("region " + std::string(region) + " has no country mapping");
    return it->second.country;
}

Centroid RegionMap::centroid(std::string_view region) const {
    auto it = regions_.find(region);
    if (it == regions_.end()) throw InputError("region " + std::string(region) + " has no centroid");
    return it->second.centroid;
}

std::optional<double> RegionMap::population(std::string_view region, int year) const {
    auto it = population_.find({std::string(region), year});
    if (it == population_.end()) return std::nullopt;
    return it->second;
}

std::optional<double> RegionMap::researchers(std::string_view region, int year) const {
    auto it = researchers_.find({std::string(region), year});
    if (it == researchers_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> RegionMap::regions() const {
    std::vector<std::string> out;
    out.reserve(regions_.size());
    for (const auto& [code, _] : regions_) out.push_back(code);
    return out;
}

std::set<std::string> RegionMap::region_set() const {
    std::set<std::string> out;
    for (const auto& [code, _] : regions_) out.insert(code);
    return out;
}

std::vector<std::string> RegionMap::regions_of(std::string_view country) const {
    std::vector<std::string> out;
    for (const auto& [code, region] : regions_)
        if (region.country == country) out.push_back(code);
    return out;
}

std::optional<std::string> RegionMap::resolve(std::string_view place, const ResolveOptions& options) const {
    const std::string trimmed = trim(place);
    if (trimmed.empty()) return std::nullopt;
    if (contains(trimmed)) return trimmed;
    const std::string folded = fold_name(trimmed);
    if (auto it = folded_codes_.find(folded); it != folded_codes_.end()) return it->second;
    if (auto it = aliases_.find(trimmed); it != aliases_.end()) return it->second;
    if (auto it = folded_aliases_.find(folded); it != folded_aliases_.end()) return it->second;
    if (options.fuzzy_threshold) {
        double best = -1.0;
        std::optional<std::string> match;
        auto consider = [&](const std::string& key, const std::string& region) {
            const double sim = name_similarity(folded, key);
            if (sim > best) {
                best = sim;
                match = region;
            }
        };
        for (const auto& [key, region] : folded_codes_) consider(key, region);
        for (const auto& [key, region] : folded_aliases_) consider(key, region);
        if (match && best >= *options.fuzzy_threshold) return match;
    }
    return std::nullopt;
}

RegionMap RegionMap::load(const std::filesystem::path& metadata,
                          const std::optional<std::filesystem::path>& aliases,
                          const std::optional<std::filesystem::path>& denominators) {
    RegionMap map;
    {
        const auto table = csv::read_file(metadata);
        const auto c_region = table.column("region"), c_country = table.column("country"),
                   c_lat = table.column("lat"), c_lon = table.column("lon");
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            if (row.size() != table.header.size())
                throw InputError(metadata.string() + ":" + std::to_string(table.lines[r]) + ": wrong field count");
            map.add_region(row[c_region], row[c_country],
                           {csv::parse_double(row[c_lat], "lat"), csv::parse_double(row[c_lon], "lon")});
        }
    }
    if (aliases) {
        const auto table = csv::read_file(*aliases);
        const auto c_raw = table.column("raw_name"), c_region = table.column("region");
        for (const auto& row : table.rows) {
            if (row.size() != table.header.size()) throw InputError(aliases->string() + ": wrong field count");
            map.add_alias(row[c_raw], row[c_region]);
        }
    }
    if (denominators) {
        const auto table = csv::read_file(*denominators);
        const auto c_region = table.column("region"), c_year = table.column("year");
        const auto c_pop = table.find_column("population"), c_res = table.find_column("researchers");
        for (const auto& row : table.rows) {
            if (row.size() != table.header.size()) throw InputError(denominators->string() + ": wrong field count");
            const int year = csv::parse_int(row[c_year], "year");
            if (c_pop)
                if (auto v = csv::parse_optional_double(row[*c_pop])) map.set_population(row[c_region], year, *v);
            if (c_res)
                if (auto v = csv::parse_optional_double(row[*c_res])) map.set_researchers(row[c_region], year, *v);
        }
    }
    return map;
}

void RegionMap::write_metadata(std::ostream& out) const {
    csv::Writer w(out);
    w.row({"region", "country", "lat", "lon"});
    for (const auto& [code, region] : regions_)
        w.row({code, region.country, csv::format_number(region.centroid.lat),
               csv::format_number(region.centroid.lon)});
}

void RegionMap::write_aliases(std::ostream& out) const {
    csv::Writer w(out);
    w.row({"raw_name", "region"});
    for (const auto& [raw, region] : aliases_) w.row({raw, region});
}

void RegionMap::write_denominators(std::ostream& out) const {
    std::set<std::pair<std::string, int>> keys;
    for (const auto& [key, _] : population_) keys.insert(key);
    for (const auto& [key, _] : researchers_) keys.insert(key);
    csv::Writer w(out);
    w.row({"region", "year", "population", "researchers"});
    for (const auto& key : keys) {
        auto pop = population_.find(key);
        auto res = researchers_.find(key);
        w.row({key.first, std::to_string(key.second),
               pop == population_.end() ? "" : csv::format_number(pop->second),
               res == researchers_.end() ? "" : csv::format_number(res->second)});
    }
}

ParseResult parse_affiliations(std::istream& in, const RegionMap& regions, const ResolveOptions& options) {
    const csv::Table table = csv::parse(in);
    const auto c_person = table.column("person_id"), c_place = table.column("place"),
               c_start = table.column("start_year"), c_end = table.column("end_year"),
               c_kind = table.column("kind");
    ParseResult result;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        try {
            if (row.size() != table.header.size())
                throw InputError("expected " + std::to_string(table.header.size()) + " fields, got " +
                                 std::to_string(row.size()));
            AffiliationRecord rec;
            rec.person_id = row[c_person];
            if (rec.person_id.empty()) throw InputError("empty person_id");
            rec.place_raw = row[c_place];
            rec.start_year = csv::parse_optional_int(row[c_start]);
            rec.end_year = csv::parse_optional_int(row[c_end]);
            if (!rec.start_year && !rec.end_year) throw InputError("neither start_year nor end_year present");
            if (rec.start_year && rec.end_year && *rec.start_year > *rec.end_year)
                throw InputError("start_year after end_year");
            const std::string kind = fold_name(row[c_kind]);
            if (kind == "employment" || kind.empty()) rec.kind = AffiliationKind::employment;
            else if (kind == "education") rec.kind = AffiliationKind::education;
            else throw InputError("unknown kind '" + row[c_kind] + "'");
            rec.region = regions.resolve(rec.place_raw, options);
            if (rec.region) ++result.resolved;
            result.records.push_back(std::move(rec));
        } catch (const InputError& e) {
            result.errors.push_back({line, e.what()});
        }
    }
    if (!result.records.empty())
        result.resolution_rate = static_cast<double>(result.resolved) / static_cast<double>(result.records.size());
    return result;
}

ParseResult parse_affiliations(const std::filesystem::path& path, const RegionMap& regions,
                               const ResolveOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return parse_affiliations(in, regions, options);
}

std::vector<MigrationEvent> extract_migrations(std::span<const AffiliationRecord> records) {
    std::map<std::string_view, std::vector<const AffiliationRecord*>> by_person;
    for (const auto& rec : records) {
        if (!rec.region || (!rec.start_year && !rec.end_year)) continue;
        by_person[rec.person_id].push_back(&rec);
    }
    std::vector<MigrationEvent> events;
    for (auto& [person, recs] : by_person) {
        if (recs.size() < 2) continue;
        auto key = [](const AffiliationRecord* r) {
            const int start = r->start_year.value_or(*r->end_year);
            const int end = r->end_year.value_or(*r->start_year);
            return std::tuple(start, end, std::string_view(*r->region), static_cast<int>(r->kind));
        };
        std::stable_sort(recs.begin(), recs.end(),
                         [&](const auto* a, const auto* b) { return key(a) < key(b); });
        for (std::size_t i = 1; i < recs.size(); ++i) {
            const auto& prev = *recs[i - 1];
            const auto& next = *recs[i];
            if (*prev.region == *next.region) continue;
            // Start of the new affiliation, else end of the previous one,
            // else the only date left on the new one.
            const int year = next.start_year ? *next.start_year
                             : prev.end_year ? *prev.end_year
                                             : *next.end_year;
            events.push_back({std::string(person), *prev.region, *next.region, year});
        }
    }
    return events;
}

void FlowTable::add(const FlowKey& key, double count) {
    if (!(count >= 0.0)) throw InputError("negative flow count for " + key.sender + "->" + key.receiver);
    if (key.sender == key.receiver) throw InputError("self-flow for " + key.sender);
    if (scope_ == Scope::internal && (!universe_.contains(key.sender) || !universe_.contains(key.receiver)))
        throw InputError("internal table entry " + key.sender + "->" + key.receiver + " leaves the universe");
    entries_[key] += count;
}

double FlowTable::count(const FlowKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0.0 : it->second;
}

double FlowTable::total() const {
    double sum = 0.0;
    for (const auto& [_, c] : entries_) sum += c;
    return sum;
}

bool FlowTable::cumulative() const {
    return !entries_.empty() && !entries_.begin()->first.year.has_value();
}

FlowTable build_flow_table(std::span<const MigrationEvent> events, YearRange years,
                           const std::set<std::string>& universe, Scope scope) {
    if (years.first > years.last) throw InputError("empty year range");
    FlowTable table(years, universe, scope);
    for (const auto& ev : events) {
        if (!years.contains(ev.year)) continue;
        const bool from_in = universe.contains(ev.from_region);
        const bool to_in = universe.contains(ev.to_region);
        const bool keep = scope == Scope::internal ? (from_in && to_in) : (from_in || to_in);
        if (keep) table.add({ev.year, ev.from_region, ev.to_region}, 1.0);
    }
    return table;
}

FlowTable aggregate_flows(const FlowTable& table, const RegionMap& regions, Level level, TimeMode time) {
    std::set<std::string> universe;
    if (level == Level::country) {
        for (const auto& r : table.universe()) universe.insert(regions.country(r));
    } else {
        universe = table.universe();
    }
    FlowTable out(table.years(), universe, table.scope());
    for (const auto& [key, count] : table.entries()) {
        FlowKey k = key;
        if (level == Level::country) {
            k.sender = regions.country(key.sender);
            k.receiver = regions.country(key.receiver);
            if (k.sender == k.receiver) continue;
        }
        if (time == TimeMode::cumulative) k.year.reset();
        out.add(k, count);
    }
    return out;
}

std::optional<Normalization> parse_normalization(std::string_view name) {
    static const std::pair<std::string_view, Normalization> kNames[] = {
        {"sender_pop", Normalization::sender_pop}, {"receiver_pop", Normalization::receiver_pop},
        {"both_pop", Normalization::both_pop},     {"sender_res", Normalization::sender_res},
        {"receiver_res", Normalization::receiver_res}, {"both_res", Normalization::both_res},
    };
    for (const auto& [n, s] : kNames)
        if (n == name) return s;
    return std::nullopt;
}

std::string to_string(Normalization scheme) {
    switch (scheme) {
        case Normalization::sender_pop: return "sender_pop";
        case Normalization::receiver_pop: return "receiver_pop";
        case Normalization::both_pop: return "both_pop";
        case Normalization::sender_res: return "sender_res";
        case Normalization::receiver_res: return "receiver_res";
        case Normalization::both_res: return "both_res";
    }
    return "unknown";
}

FlowTable normalize_flows(const FlowTable& table, const RegionMap& regions, Normalization scheme) {
    const bool population = scheme == Normalization::sender_pop || scheme == Normalization::receiver_pop ||
                            scheme == Normalization::both_pop;
    const bool use_sender = scheme != Normalization::receiver_pop && scheme != Normalization::receiver_res;
    const bool use_receiver = scheme != Normalization::sender_pop && scheme != Normalization::sender_res;

    std::set<std::pair<std::string, int>> missing;
    auto denominator = [&](const std::string& region, const std::optional<int>& year) -> double {
        if (!year) {
            missing.insert({region, 0});
            return 0.0;
        }
        auto v = population ? regions.population(region, *year) : regions.researchers(region, *year);
        if (!v) {
            missing.insert({region, *year});
            return 0.0;
        }
        return *v;
    };

    FlowTable out(table.years(), table.universe(), table.scope());
    for (const auto& [key, count] : table.entries()) {
        double denom = 0.0;
        if (use_sender) denom += denominator(key.sender, key.year);
        if (use_receiver) denom += denominator(key.receiver, key.year);
        if (population) denom /= 100000.0;
        if (denom > 0.0) out.add(key, count / denom);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "missing " << (population ? "population" : "researcher") << " denominator for";
        for (const auto& [region, year] : missing) {
            msg << " (" << region << ", ";
            if (year == 0) msg << "*";
            else msg << year;
            msg << ")";
        }
        throw InputError(msg.str());
    }
    return out;
}

void write_flow_table(std::ostream& out, const FlowTable& table) {
    csv::Writer w(out);
    w.row({"year", "sender", "receiver", "count"});
    for (const auto& [key, count] : table.entries())
        w.row({key.year ? std::to_string(*key.year) : "*", key.sender, key.receiver, csv::format_number(count)});
}

FlowTable read_flow_table(std::istream& in, Scope scope, std::optional<std::set<std::string>> universe) {
    const auto table = csv::parse(in);
    const auto c_year = table.column("year"), c_sender = table.column("sender"),
               c_receiver = table.column("receiver"), c_count = table.column("count");
    std::vector<std::pair<FlowKey, double>> rows;
    std::set<std::string> seen;
    int first = 0, last = -1;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size())
            throw InputError("flow table line " + std::to_string(table.lines[r]) + ": wrong field count");
        FlowKey key;
        if (row[c_year] != "*") {
            key.year = csv::parse_int(row[c_year], "year");
            if (last < first) first = last = *key.year;
            first = std::min(first, *key.year);
            last = std::max(last, *key.year);
        }
        key.sender = row[c_sender];
        key.receiver = row[c_receiver];
        seen.insert(key.sender);
        seen.insert(key.receiver);
        rows.emplace_back(std::move(key), csv::parse_double(row[c_count], "count"));
    }
    if (last < first) first = last = 0;
    FlowTable out({first, last}, universe ? std::move(*universe) : seen, scope);
    for (const auto& [key, count] : rows) out.add(key, count);
    return out;
}

FlowTable read_flow_table(const std::filesystem::path& path, Scope scope,
                          std::optional<std::set<std::string>> universe) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_flow_table(in, scope, std::move(universe));
}

}  // namespace mobnet::ingest
