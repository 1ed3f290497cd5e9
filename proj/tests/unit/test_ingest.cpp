#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "mobnet/error.hpp"
#include "mobnet/ingest.hpp"
#include "mobnet/network.hpp"
#include "mobnet/random.hpp"

using namespace mobnet;
using namespace mobnet::ingest;

namespace {

RegionMap small_map() {
    RegionMap m;
    m.add_region("ITC4", "IT", {45.6, 9.5});
    m.add_region("ITI4", "IT", {41.9, 12.5});
    m.add_region("DE21", "DE", {48.1, 11.6});
    m.add_region("FR10", "FR", {48.8, 2.3});
    m.add_alias("milnao", "ITC4");
    m.add_alias("Roma", "ITI4");
    return m;
}

AffiliationRecord rec(std::string person, std::string region, std::optional<int> start, std::optional<int> end) {
    AffiliationRecord r;
    r.person_id = person;
    r.place_raw = region;
    r.region = region;
    r.start_year = start;
    r.end_year = end;
    return r;
}

}  // namespace

TEST_CASE("place resolution: alias, identity, folding") {
    const auto m = small_map();
    CHECK(m.resolve("Milnao") == "ITC4");
    CHECK(m.resolve("ITC4") == "ITC4");
    CHECK(m.resolve("itc4") == "ITC4");
    CHECK(m.resolve("  ROMA ") == "ITI4");
    CHECK_FALSE(m.resolve("Atlantis").has_value());
    CHECK(fold_name("Région  Île") == "region ile");
}

TEST_CASE("fuzzy matching is off unless a threshold is given") {
    const auto m = small_map();
    CHECK_FALSE(m.resolve("Milano").has_value());
    ResolveOptions o;
    o.fuzzy_threshold = 0.8;
    CHECK(m.resolve("Milnaoo", o) == "ITC4");
}

TEST_CASE("resolution rate 96 of 100") {
    const auto m = small_map();
    std::ostringstream csv;
    csv << "person_id,place,start_year,end_year,kind\n";
    for (int i = 0; i < 100; ++i)
        csv << "p" << i << "," << (i < 96 ? "DE21" : "Nowhere") << ",2010,,employment\n";
    std::istringstream in(csv.str());
    const auto r = parse_affiliations(in, m);
    CHECK(r.records.size() == 100);
    CHECK(r.resolved == 96);
    CHECK(r.resolution_rate == doctest::Approx(0.96).epsilon(1e-15));
}

TEST_CASE("malformed rows are collected and parsing continues") {
    const auto m = small_map();
    std::istringstream in(
        "person_id,place,start_year,end_year,kind\n"
        "a,DE21,2010,2012,employment\n"
        "b,DE21,,,employment\n"
        "c,DE21,2015,2012,education\n"
        "d,DE21,abc,,employment\n"
        "e,FR10,2011,,education\n");
    const auto r = parse_affiliations(in, m);
    CHECK(r.records.size() == 2);
    CHECK(r.errors.size() == 3);
    CHECK(r.errors.front().line == 3);
    CHECK(r.records.back().kind == AffiliationKind::education);
}

TEST_CASE("unreadable affiliation file is fatal") {
    CHECK_THROWS_AS(parse_affiliations(std::filesystem::path("/nonexistent/affil.csv"), small_map()), InputError);
}

TEST_CASE("migration extraction rules") {
    SUBCASE("start year of the new affiliation") {
        std::vector<AffiliationRecord> r{rec("p", "R1", 2010, 2012), rec("p", "R2", 2013, std::nullopt)};
        const auto e = extract_migrations(r);
        REQUIRE(e.size() == 1);
        CHECK(e[0] == MigrationEvent{"p", "R1", "R2", 2013});
    }
    SUBCASE("same region gives nothing") {
        std::vector<AffiliationRecord> r{rec("p", "R1", 2010, 2012), rec("p", "R1", 2013, 2015)};
        CHECK(extract_migrations(r).empty());
    }
    SUBCASE("fallback to the previous end year") {
        std::vector<AffiliationRecord> r{rec("p", "R1", std::nullopt, 2011), rec("p", "R2", std::nullopt, 2014)};
        const auto e = extract_migrations(r);
        REQUIRE(e.size() == 1);
        CHECK(e[0] == MigrationEvent{"p", "R1", "R2", 2011});
    }
    SUBCASE("unresolved records are skipped for pairing") {
        auto mid = rec("p", "X", 2011, 2011);
        mid.region.reset();
        std::vector<AffiliationRecord> r{rec("p", "R1", 2010, 2010), mid, rec("p", "R2", 2012, std::nullopt)};
        const auto e = extract_migrations(r);
        REQUIRE(e.size() == 1);
        CHECK(e[0].year == 2012);
    }
    SUBCASE("single affiliation") {
        std::vector<AffiliationRecord> r{rec("p", "R1", 2010, 2012)};
        CHECK(extract_migrations(r).empty());
    }
}

TEST_CASE("extraction ignores input order") {
    Rng rng(7);
    std::vector<AffiliationRecord> records;
    const char* regions[] = {"A", "B", "C", "D"};
    for (int p = 0; p < 40; ++p)
        for (int k = 0; k < 5; ++k) {
            const int start = 2000 + static_cast<int>(rng.below(15));
            records.push_back(rec("p" + std::to_string(p), regions[rng.below(4)], start,
                                  start + static_cast<int>(rng.below(3))));
        }
    const auto base = extract_migrations(records);
    for (int trial = 0; trial < 20; ++trial) {
        rng.shuffle(std::span<AffiliationRecord>(records));
        CHECK(extract_migrations(records) == base);
    }
}

TEST_CASE("flow table counting and filters") {
    const std::set<std::string> universe{"R1", "R2"};
    std::vector<MigrationEvent> ev{{"a", "R1", "R2", 2013}, {"b", "R1", "R2", 2013}, {"c", "X", "R1", 2014},
                                   {"d", "R2", "R1", 2008}};
    const auto internal = build_flow_table(ev, {2009, 2020}, universe, Scope::internal);
    CHECK(internal.count({2013, "R1", "R2"}) == 2);
    CHECK(internal.count({2014, "X", "R1"}) == 0);
    CHECK(internal.total() == 2);
    const auto all = build_flow_table(ev, {2009, 2020}, universe, Scope::all);
    CHECK(all.count({2014, "X", "R1"}) == 1);
    CHECK(all.total() == 3);
    CHECK(build_flow_table({}, {2009, 2020}, universe, Scope::internal).empty());
}

TEST_CASE("flow table rejects invalid entries") {
    FlowTable t({2010, 2012}, {"A", "B"}, Scope::internal);
    CHECK_THROWS_AS(t.add({2010, "A", "A"}, 1), InputError);
    CHECK_THROWS_AS(t.add({2010, "A", "B"}, -1), InputError);
    CHECK_THROWS_AS(t.add({2010, "A", "Z"}, 1), InputError);
}

TEST_CASE("aggregation over time and to countries") {
    RegionMap m;
    m.add_region("R1", "C1", {0, 0});
    m.add_region("R2", "C1", {0, 1});
    m.add_region("S1", "C2", {1, 0});
    m.add_region("S2", "C2", {1, 1});
    FlowTable t({2013, 2014}, m.region_set(), Scope::internal);
    t.add({2013, "R1", "R2"}, 2);
    t.add({2014, "R1", "R2"}, 3);
    t.add({2013, "R1", "S1"}, 4);
    t.add({2014, "R2", "S2"}, 1);
    t.add({2014, "S2", "R1"}, 6);

    const auto cum = aggregate_flows(t, m, Level::region, TimeMode::cumulative);
    CHECK(cum.cumulative());
    CHECK(cum.count({std::nullopt, "R1", "R2"}) == 5);

    const auto country = aggregate_flows(t, m, Level::country, TimeMode::per_year);
    CHECK(country.count({2013, "C1", "C1"}) == 0);
    CHECK(country.count({2013, "C1", "C2"}) == 4);
    CHECK(country.total() == 11);

    RegionMap partial;
    partial.add_region("R1", "C1", {0, 0});
    CHECK_THROWS_AS(aggregate_flows(t, partial, Level::country, TimeMode::per_year), InputError);
}

TEST_CASE("normalization schemes") {
    RegionMap m;
    m.add_region("A", "X", {0, 0});
    m.add_region("B", "X", {0, 1});
    m.set_population("A", 2010, 500000);
    m.set_population("B", 2010, 100000);
    m.set_researchers("A", 2010, 4);
    m.set_researchers("B", 2010, 4);
    FlowTable t({2010, 2010}, m.region_set(), Scope::internal);
    t.add({2010, "A", "B"}, 5);
    t.add({2010, "B", "A"}, 8);
    const auto s = normalize_flows(t, m, Normalization::sender_pop);
    CHECK(s.count({2010, "A", "B"}) == doctest::Approx(1.0));
    const auto r = normalize_flows(t, m, Normalization::receiver_pop);
    CHECK(r.count({2010, "A", "B"}) == 5);
    m.set_population("A", 2010, 300000);
    const auto b = normalize_flows(t, m, Normalization::both_pop);
    CHECK(b.count({2010, "B", "A"}) == doctest::Approx(2.0));
    const auto res = normalize_flows(t, m, Normalization::both_res);
    CHECK(res.count({2010, "B", "A"}) == doctest::Approx(1.0));

    RegionMap missing;
    missing.add_region("A", "X", {0, 0});
    missing.add_region("B", "X", {0, 1});
    try {
        normalize_flows(t, missing, Normalization::sender_res);
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("2010") != std::string::npos);
    }
}

TEST_CASE("normalize then multiply back recovers counts") {
    RegionMap m;
    Rng rng(3);
    std::vector<std::string> codes{"A", "B", "C", "D"};
    for (const auto& c : codes) {
        m.add_region(c, "X", {0, 0});
        for (int y = 2010; y <= 2012; ++y) m.set_population(c, y, 1000 + static_cast<double>(rng.below(900000)));
    }
    FlowTable t({2010, 2012}, m.region_set(), Scope::internal);
    for (int y = 2010; y <= 2012; ++y)
        for (const auto& a : codes)
            for (const auto& b : codes)
                if (a != b) t.add({y, a, b}, static_cast<double>(rng.below(50)));
    const auto n = normalize_flows(t, m, Normalization::sender_pop);
    for (const auto& [k, v] : t.entries())
        CHECK(n.count(k) * (*m.population(k.sender, *k.year) / 100000.0) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("flow table csv round trip") {
    FlowTable t({2010, 2011}, {"A", "B", "C"}, Scope::internal);
    t.add({2010, "A", "B"}, 2);
    t.add({2011, "C", "A"}, 0.125);
    std::ostringstream out;
    write_flow_table(out, t);
    CHECK(out.str().rfind("year,sender,receiver,count\n", 0) == 0);
    std::istringstream in(out.str());
    const auto back = read_flow_table(in, Scope::internal, t.universe());
    CHECK(back.entries() == t.entries());
}

TEST_CASE("conservation: table total equals in and out strength totals") {
    Rng rng(11);
    std::set<std::string> u{"A", "B", "C", "D", "E"};
    std::vector<MigrationEvent> ev;
    std::vector<std::string> codes(u.begin(), u.end());
    for (int i = 0; i < 500; ++i) {
        auto a = codes[rng.below(5)], b = codes[rng.below(5)];
        if (a == b) continue;
        ev.push_back({"p" + std::to_string(i), a, b, 2009 + static_cast<int>(rng.below(14))});
    }
    const auto t = build_flow_table(ev, {2009, 2020}, u, Scope::internal);
    std::size_t passing = std::count_if(ev.begin(), ev.end(), [](const auto& e) { return e.year <= 2020; });
    CHECK(t.total() == static_cast<double>(passing));
    const auto net = network::from_flow_table(t);
    CHECK(network::node_strength(net, network::StrengthMode::in).sum() == t.total());
    CHECK(network::node_strength(net, network::StrengthMode::out).sum() == t.total());
}
