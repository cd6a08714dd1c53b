"""Test-time adaptation of query embeddings for dense retrieval."""

import json as _json

from ._core import (
    QShiftError,
    Session,
    apply_corruption as _apply_corruption,
    build_centroids,
    compute_metrics,
    cosine_sim,
    decouple,
    generate_benchmark,
    knn,
    l2_normalize,
    l2_normalize_rows,
    read_embeddings,
    shannon_entropy,
    softmax_temp,
    write_embeddings,
)
from . import _core

__all__ = [
    "QShiftError",
    "Session",
    "adapt",
    "apply_corruption",
    "build_centroids",
    "compute_metrics",
    "cosine_sim",
    "decouple",
    "generate_benchmark",
    "gradcheck",
    "knn",
    "l2_normalize",
    "l2_normalize_rows",
    "metrics",
    "probe",
    "read_embeddings",
    "shannon_entropy",
    "softmax_temp",
    "synth",
    "write_embeddings",
]


def _dump(config):
    return config if isinstance(config, str) else _json.dumps(config)


def apply_corruption(stream, spec, seed=0):
    """Corrupt a query stream. `spec` is a dict like {"kind": "mean_shift", ...}."""
    return _apply_corruption(stream, _dump(spec), seed)


def adapt(config):
    """Run a full adaptation pass from a config dict and return the report."""
    return _json.loads(_core.cmd_adapt(_dump(config)))


def probe(config):
    return _json.loads(_core.cmd_probe(_dump(config)))


def metrics(config):
    return _json.loads(_core.cmd_metrics(_dump(config)))


def gradcheck(config=None):
    return _json.loads(_core.cmd_gradcheck(_dump(config or {})))


def synth(config, out_dir):
    """Write a synthetic benchmark to `out_dir` and return the file summary."""
    return _json.loads(_core.cmd_synth(_dump(config), str(out_dir)))
