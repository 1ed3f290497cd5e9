#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "mobnet/communities.hpp"
#include "mobnet/covariates.hpp"
#include "mobnet/error.hpp"
#include "mobnet/gam.hpp"
#include "mobnet/network.hpp"
#include "mobnet/pipeline.hpp"
#include "mobnet/stats.hpp"
#include "mobnet/synth.hpp"

namespace py = pybind11;
using namespace mobnet;

namespace {

py::dict test_dict(const stats::TestResult& r) {
    py::dict d;
    d["statistic"] = r.statistic;
    d["p_value"] = r.p_value;
    d["n_permutations"] = r.n_permutations;
    d["seed"] = r.seed;
    d["mode"] = stats::to_string(r.mode);
    d["degenerate"] = r.degenerate;
    return d;
}

network::MobilityNetwork make_network(const Eigen::MatrixXd& weights, std::vector<std::string> nodes) {
    if (nodes.empty())
        for (Eigen::Index i = 0; i < weights.rows(); ++i) nodes.push_back(std::to_string(i));
    return network::MobilityNetwork(std::move(nodes), weights);
}

network::StrengthMode mode_of(const std::string& name) {
    const auto m = network::parse_strength_mode(name);
    if (!m) throw InputError("unknown strength mode '" + name + "' (in, out, total)");
    return *m;
}

}  // namespace

PYBIND11_MODULE(_mobnet, m) {
    m.doc() = "Researcher mobility networks, permutation tests and gravity models.";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def(
        "npc_anova",
        [](const std::vector<double>& g1, const std::vector<double>& g2, std::size_t permutations,
           std::uint64_t seed) {
            const auto r = stats::npc_anova(g1, g2, permutations, seed);
            py::dict d;
            d["location"] = test_dict(r.location);
            d["scale"] = test_dict(r.scale);
            d["joint"] = test_dict(r.joint);
            d["p_location_corrected"] = r.p_location_corrected;
            d["p_scale_corrected"] = r.p_scale_corrected;
            return d;
        },
        py::arg("g1"), py::arg("g2"), py::arg("permutations") = 999, py::arg("seed") = 1);

    m.def(
        "spearman_perm_test",
        [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::vector<double>& grid,
           std::size_t permutations, std::uint64_t seed, double lambda, int n_knots) {
            return test_dict(stats::spearman_perm_test(x, y, grid, permutations, seed, lambda, n_knots));
        },
        py::arg("x_curves"), py::arg("y_curves"), py::arg("grid"), py::arg("permutations") = 999,
        py::arg("seed") = 1, py::arg("lam") = 1.0, py::arg("n_knots") = 10);

    m.def(
        "hits",
        [](const Eigen::MatrixXd& weights, double tol, int max_iter) {
            const auto s = network::hits_scores(make_network(weights, {}), tol, max_iter);
            py::dict d;
            d["hub"] = s.hub;
            d["authority"] = s.authority;
            d["iterations"] = s.iterations;
            d["converged"] = s.converged;
            return d;
        },
        py::arg("weights"), py::arg("tol") = 1e-10, py::arg("max_iter") = 1000);

    m.def(
        "s_core",
        [](const Eigen::MatrixXd& weights, const std::string& mode) {
            const auto r = network::s_core_decomposition(make_network(weights, {}), mode_of(mode));
            py::dict d;
            d["shell"] = r.shell;
            d["thresholds"] = r.thresholds;
            return d;
        },
        py::arg("weights"), py::arg("mode") = "total");

    m.def(
        "girvan_newman",
        [](const Eigen::MatrixXd& weights) {
            const auto r = network::edge_betweenness_communities(make_network(weights, {}));
            py::dict d;
            d["labels"] = r.partition.labels;
            d["modularity"] = r.modularity;
            return d;
        },
        py::arg("weights"));

    m.def("edge_betweenness", &network::edge_betweenness, py::arg("undirected_weights"));

    m.def(
        "map_equation",
        [](const Eigen::MatrixXd& weights, std::uint64_t seed, double teleport) {
            const auto r = network::map_equation_communities(make_network(weights, {}), seed, teleport);
            py::dict d;
            d["labels"] = r.partition.labels;
            d["codelength"] = r.codelength;
            d["one_module_codelength"] = r.one_module_codelength;
            return d;
        },
        py::arg("weights"), py::arg("seed") = 1, py::arg("teleport") = 0.15);

    m.def("ranking_weight", &covariates::ranking_weight, py::arg("position"));
    m.def(
        "university_score",
        [](const std::vector<int>& positions) {
            std::vector<covariates::RankingEntry> entries;
            for (std::size_t i = 0; i < positions.size(); ++i)
                entries.push_back({0, "u" + std::to_string(i), positions[i], "R"});
            return covariates::university_score(entries, "R");
        },
        py::arg("positions"));

    m.def(
        "fit_smooth",
        [](const std::vector<double>& x, const std::vector<double>& y, int n_knots, std::optional<double> lambda) {
            model::GamDesign d;
            d.smooths.push_back({"f_x", x, n_knots, {}, lambda});
            const auto fit = model::fit_pgam(d, y);
            py::dict out;
            out["fitted"] = fit.fitted;
            out["r_squared"] = fit.r_squared;
            out["edf"] = fit.edf;
            out["gcv"] = fit.gcv;
            out["lam"] = fit.lambdas.empty() ? 0.0 : fit.lambdas[0];
            return out;
        },
        py::arg("x"), py::arg("y"), py::arg("n_knots") = 10, py::arg("lam") = py::none());

    m.def(
        "write_synthetic",
        [](const std::string& out, int regions, int years, std::uint64_t seed, double asymmetry) {
            synth::SynthConfig c;
            c.n_regions = regions;
            c.n_years = years;
            c.seed = seed;
            c.asymmetry = asymmetry;
            synth::write_bundle(synth::generate_synthetic(c), out);
        },
        py::arg("out"), py::arg("regions") = 12, py::arg("years") = 4, py::arg("seed") = 1,
        py::arg("asymmetry") = 0.0);

    m.def(
        "run_pipeline",
        [](const std::string& config, const std::string& out, const std::vector<std::string>& stages,
           std::optional<std::uint64_t> seed, std::optional<std::size_t> permutations) {
            auto cfg = pipeline::RunConfig::load(config);
            cfg.out = out;
            if (seed) cfg.seed = *seed;
            if (permutations) cfg.permutations = *permutations;
            pipeline::RunResult r;
            {
                py::gil_scoped_release release;
                r = pipeline::run_stages(cfg, stages, "manifest.json");
            }
            return py::make_tuple(r.exit_code, r.manifest.dump());
        },
        py::arg("config"), py::arg("out"), py::arg("stages") = std::vector<std::string>{},
        py::arg("seed") = py::none(), py::arg("permutations") = py::none());

    m.def("sha256_file", [](const std::string& p) { return pipeline::sha256_file(p); }, py::arg("path"));
}
