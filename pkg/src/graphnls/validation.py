"""Input checks shared by the CLI and the estimator wrappers."""

from __future__ import annotations

import math
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .exceptions import InadmissibleIndex, InvalidExponent
from .graph import MetricGraph, build_graph, interval, lollipop, load_graph, loop, star

BUILTIN_GRAPHS = {"interval": interval, "star": star, "loop": loop, "lollipop": lollipop}
from .spectrum import SpectralData, spectral_gap_indices


def check_graph(graph) -> MetricGraph:
    """Accept a :class:`MetricGraph`, a description mapping, a JSON path or a built-in name."""
    if isinstance(graph, MetricGraph):
        return graph
    if isinstance(graph, Mapping):
        return build_graph(graph)
    if isinstance(graph, str) and graph in BUILTIN_GRAPHS and not Path(graph).exists():
        return BUILTIN_GRAPHS[graph]()
    if isinstance(graph, (str, Path)):
        return load_graph(graph)
    raise TypeError(f"cannot interpret {type(graph).__name__} as a metric graph")


def check_exponent(p) -> float:
    p = float(p)
    if not (math.isfinite(p) and p > 6):
        raise InvalidExponent(f"exponent p must be a finite number > 6, got {p!r}")
    return p


def check_mass(mu) -> float:
    mu = float(mu)
    if not (math.isfinite(mu) and mu > 0):
        raise ValueError(f"mass mu must be a finite positive number, got {mu!r}")
    return mu


def check_field(n_dofs: int, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (n_dofs,):
        raise ValueError(f"field has shape {u.shape}, expected ({n_dofs},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u


def parse_indices(text) -> list[int]:
    """``"2,3"`` or an iterable of integers -> sorted unique list of ints >= 2."""
    items = text.split(",") if isinstance(text, str) else list(text)
    out = sorted({int(str(x).strip()) for x in items if str(x).strip()})
    if not out or out[0] < 2:
        raise ValueError(f"indices must be integers >= 2, got {text!r}")
    return out


def check_indices(spec: SpectralData, indices) -> list[int]:
    ks = parse_indices(indices)
    gaps = spectral_gap_indices(spec)
    bad = [k for k in ks if k not in gaps]
    if bad:
        raise InadmissibleIndex(f"indices {bad} are not spectral gap indices (admissible: {gaps})")
    return ks
