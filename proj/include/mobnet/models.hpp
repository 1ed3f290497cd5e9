#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mobnet/covariates.hpp"
#include "mobnet/gam.hpp"
#include "mobnet/ingest.hpp"

namespace mobnet::model {

inline constexpr double kEarthRadiusKm = 6371.0088;

// Haversine great-circle distance in km.
double geodesic_distance(ingest::Centroid a, ingest::Centroid b);

// Dominant-language family per country or region-code prefix. A region
// takes the family of its longest matching prefix, else its country's;
// unmapped countries form their own family.
class LanguageFamilies {
public:
    void set(const std::string& country_or_region, const std::string& family);
    std::string family_of(std::string_view region, std::string_view country) const;

    // Six families: Germanic, Slavic, Romance, Uralic, Baltic, Greek.
    static LanguageFamilies bundled();
    static LanguageFamilies load(const std::filesystem::path& path);
    void write(std::ostream& out) const;

private:
    std::map<std::string, std::string, std::less<>> families_;
};

struct DyadRow {
    int year = 0;
    std::string sender;
    std::string receiver;
    double flow = 0.0;
    double response = 0.0;  // log(flow + 1)
    std::array<double, 4> sender_cov{};    // covariates::kIndicators order
    std::array<double, 4> receiver_cov{};
    double log_dist = 0.0;
    bool same_country = false;
    bool same_lan = false;
};

struct DyadFrame {
    std::vector<DyadRow> rows;
};

// Every ordered pair of distinct universe regions for every year of the
// range, zero flows included. Distances are floored at 1 km before the log.
DyadFrame build_dyad_frame(const ingest::FlowTable& per_year, const covariates::RegionYearPanel& panel,
                           const ingest::RegionMap& regions, const LanguageFamilies& families,
                           ingest::YearRange years);

void write_dyad_frame(std::ostream& out, const DyadFrame& frame);
DyadFrame read_dyad_frame(const std::filesystem::path& path);

struct MobilityRow {
    int year = 0;
    std::string region;
    std::string country;
    double in_flow = 0.0;
    double out_flow = 0.0;
    std::array<double, 4> cov{};
};

struct MobilityFrame {
    std::vector<MobilityRow> rows;
};

MobilityFrame build_mobility_frame(const ingest::FlowTable& per_year, const covariates::RegionYearPanel& panel,
                                   const ingest::RegionMap& regions, ingest::YearRange years);

void write_mobility_frame(std::ostream& out, const MobilityFrame& frame);
MobilityFrame read_mobility_frame(const std::filesystem::path& path);

enum class NetworkVariant { full, final_model, symmetric, asymmetric_extended };
std::string to_string(NetworkVariant variant);
NetworkVariant parse_network_variant(std::string_view name);

enum class MobilityResponse { total, in, out };
enum class MobilityVariant { full, final_model };
std::string to_string(MobilityResponse response);
std::string to_string(MobilityVariant variant);
MobilityResponse parse_mobility_response(std::string_view name);
MobilityVariant parse_mobility_variant(std::string_view name);

struct ModelOptions {
    int n_knots = 10;
    GamOptions gam;
};

GamDesign network_design(const DyadFrame& frame, NetworkVariant variant, int n_knots = 10);
GamFit fit_network_model(const DyadFrame& frame, NetworkVariant variant, const ModelOptions& options = {});

GamDesign mobility_design(const MobilityFrame& frame, MobilityVariant variant, int n_knots = 10);
std::vector<double> mobility_response(const MobilityFrame& frame, MobilityResponse response);
GamFit fit_mobility_model(const MobilityFrame& frame, MobilityResponse response, MobilityVariant variant,
                          const ModelOptions& options = {});

// Symmetric null fit against the asymmetric extension.
PermFResult symmetry_test(const DyadFrame& frame, std::size_t permutations, std::uint64_t seed,
                          const ModelOptions& options = {});

struct EduImputer {
    GamFit fit;
    // Clamped to [0, 1].
    double predict(double attainment) const;
};

EduImputer fit_edu_imputer(std::span<const double> attainment, std::span<const double> edu_index,
                           const ModelOptions& options = {});

nlohmann::json model_report(const GamFit& fit);
// `term,x,fit,se` on `points` evenly spaced values over each smooth's data range.
void write_curves(std::ostream& out, const GamFit& fit, int points = 50);

}  // namespace mobnet::model
