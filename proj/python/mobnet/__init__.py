"""Researcher mobility networks, permutation tests and gravity models."""

import json

from ._mobnet import (
    InputError,
    NumericError,
    edge_betweenness,
    fit_smooth,
    girvan_newman,
    hits,
    map_equation,
    npc_anova,
    ranking_weight,
    s_core,
    sha256_file,
    spearman_perm_test,
    university_score,
    write_synthetic,
)
from ._mobnet import run_pipeline as _run_pipeline

__version__ = "0.1.0"


def run_pipeline(config, out, stages=(), seed=None, permutations=None):
    """Run pipeline stages; returns (exit_code, manifest dict)."""
    code, manifest = _run_pipeline(str(config), str(out), list(stages), seed, permutations)
    return code, json.loads(manifest)


__all__ = [
    "InputError",
    "NumericError",
    "edge_betweenness",
    "fit_smooth",
    "girvan_newman",
    "hits",
    "map_equation",
    "npc_anova",
    "ranking_weight",
    "run_pipeline",
    "s_core",
    "sha256_file",
    "spearman_perm_test",
    "university_score",
    "write_synthetic",
]
