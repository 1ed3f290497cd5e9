import json

import numpy as np
import pytest

import mobnet


def test_npc_anova_exhaustive():
    r = mobnet.npc_anova([1, 2, 3], [11, 12, 13], 999, 1)
    assert r["location"]["mode"] == "exhaustive"
    assert r["location"]["n_permutations"] == 20
    assert r["location"]["p_value"] == pytest.approx(4 / 20)
    assert r["p_location_corrected"] >= r["location"]["p_value"]
    assert r["p_scale_corrected"] >= r["scale"]["p_value"]


def test_bad_input_raises():
    with pytest.raises(ValueError):
        mobnet.npc_anova([1.0], [2.0, 3.0])
    with pytest.raises(ValueError):
        mobnet.s_core(np.zeros((3, 3)), "sideways")


def test_hits_matches_eigenvector():
    rng = np.random.default_rng(1)
    w = rng.integers(1, 10, size=(6, 6)).astype(float)
    np.fill_diagonal(w, 0)
    s = mobnet.hits(w, 1e-12, 10000)
    vals, vecs = np.linalg.eigh(w.T @ w)
    v = vecs[:, -1] * np.sign(vecs[:, -1].sum())
    assert np.max(np.abs(s["authority"] - v)) < 1e-8


def test_s_core_and_communities():
    w = np.zeros((6, 6))
    for a, b in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]:
        w[a, b] = w[b, a] = 1
    gn = mobnet.girvan_newman(w)
    assert gn["labels"][:3] == [gn["labels"][0]] * 3
    assert gn["labels"][3:] == [gn["labels"][3]] * 3
    assert gn["labels"][0] != gn["labels"][3]
    cores = mobnet.s_core(w, "total")
    assert len(cores["shell"]) == 6
    assert mobnet.map_equation(w, 1)["codelength"] > 0


def test_university_score():
    assert mobnet.ranking_weight(30) == 1 / 25
    assert mobnet.university_score([3, 120]) ** 3 == pytest.approx(0.2 + 1 / 125)
    assert mobnet.university_score([]) == 0.0


def test_fit_smooth():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 2 * np.pi, 200)
    fit = mobnet.fit_smooth(x, np.sin(x) + 0.1 * rng.normal(size=200))
    assert np.corrcoef(fit["fitted"], np.sin(x))[0, 1] > 0.99


def test_spearman():
    grid = np.arange(6, dtype=float)
    x = np.add.outer(np.arange(10.0) * 5, grid)
    r = mobnet.spearman_perm_test(x, 2 * x, grid, 199, 3)
    assert r["statistic"] == pytest.approx(1.0)
    assert r["p_value"] == pytest.approx(1 / 200)


def test_pipeline_runs(tmp_path):
    data = tmp_path / "data"
    mobnet.write_synthetic(str(data), regions=8, years=2, seed=3)
    inputs = {
        name: str(data / f"{name}.csv")
        for name in [
            "affiliations", "regions", "aliases", "denominators", "rankings", "procurements",
            "gdp_regional", "gdp_national", "gdp_benchmark", "edu", "language_families",
        ]
    }
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"inputs": inputs, "years": [2009, 2010], "permutations": 19,
                                  "knot_sensitivity": []}))
    code, manifest = mobnet.run_pipeline(config, tmp_path / "out", stages=["ingest", "covariates", "network"])
    assert code == 0
    assert manifest["exit_code"] == 0
    for a in manifest["artifacts"]:
        assert mobnet.sha256_file(str(tmp_path / "out" / a["path"])) == a["sha256"]
