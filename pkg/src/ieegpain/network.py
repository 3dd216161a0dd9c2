"""Electrode graph weighted by summed random-forest importances of MSC pairs."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, EmptyNetworkError, InputFileError, InvalidArgumentError
from .spectral import parse_column

log = logging.getLogger(__name__)
DEFAULT_PRUNE_QUANTILE = 0.75
NETWORK_SCHEMA = "ieegpain.network"


@dataclass
class PainNetwork:
    """Undirected weighted graph; edges are keyed ``(a, b)`` with ``a < b``."""

    edges: dict
    prune_quantile: float = DEFAULT_PRUNE_QUANTILE
    ignored_columns: int = 0
    nodes: list = field(init=False)

    def __post_init__(self):
        clean = {}
        for (a, b), w in self.edges.items():
            if a == b:
                raise InvalidArgumentError(f"self-loop on {a!r}")
            if w < 0:
                raise InvalidArgumentError(f"negative weight on ({a}, {b})")
            key = (a, b) if a < b else (b, a)
            clean[key] = clean.get(key, 0.0) + float(w)
        self.edges = dict(sorted(clean.items()))
        self.nodes = sorted({n for pair in self.edges for n in pair})

    @property
    def node_strength(self):
        s = {n: 0.0 for n in self.nodes}
        for (a, b), w in self.edges.items():
            s[a] += w
            s[b] += w
        return s

    @property
    def degree_threshold(self):
        if not self.edges:
            return 0.0
        return float(np.quantile(np.fromiter(self.edges.values(), dtype=float), self.prune_quantile))

    @property
    def node_degree(self):
        """Edges per node after dropping those at or below the weight quantile."""
        thr = self.degree_threshold
        d = {n: 0 for n in self.nodes}
        for (a, b), w in self.edges.items():
            if w > thr:
                d[a] += 1
                d[b] += 1
        return d

    def __eq__(self, other):
        if not isinstance(other, PainNetwork):
            return NotImplemented
        if self.edges.keys() != other.edges.keys():
            return False
        return all(math.isclose(w, other.edges[k], rel_tol=1e-12, abs_tol=1e-15) for k, w in self.edges.items())


def build_network(importances, prune_quantile=DEFAULT_PRUNE_QUANTILE):
    """Sum MSC importances over bands per electrode pair.

    PIB columns are ignored and counted; zero-weight edges are dropped.
    """
    sums = defaultdict(float)
    n_msc = ignored = 0
    for name in sorted(importances):
        kind, chans, _band = parse_column(name)
        if kind != "MSC":
            ignored += 1
            continue
        n_msc += 1
        a, b = sorted(chans)
        sums[(a, b)] += float(importances[name])
    if n_msc == 0:
        raise EmptyNetworkError("no MSC pair features among the importances")
    if ignored:
        log.info("network: ignored %d non-MSC columns", ignored)
    edges = {k: w for k, w in sums.items() if w > 0}
    return PainNetwork(edges, prune_quantile, ignored)


def top_electrodes(net: PainNetwork, k):
    """Nodes by strength, then degree, then name; at most ``k``."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    strength, degree = net.node_strength, net.node_degree
    ranked = sorted(net.nodes, key=lambda n: (-strength[n], -degree[n], n))
    return ranked[:k]


def network_to_dict(net: PainNetwork, top_k=10):
    return {
        "schema": NETWORK_SCHEMA,
        "version": 1,
        "nodes": list(net.nodes),
        "edges": [{"a": a, "b": b, "weight": w} for (a, b), w in net.edges.items()],
        "strengths": net.node_strength,
        "degrees": net.node_degree,
        "degree_threshold": net.degree_threshold,
        "prune_quantile": net.prune_quantile,
        "ignored_columns": net.ignored_columns,
        "top_k": top_electrodes(net, top_k) if net.nodes else [],
    }


def _edge_csv(path):
    p = str(path)
    return p if p.endswith(".csv") else p + ".csv"


def export_network(net: PainNetwork, path, top_k=10, plot=True):
    """Write ``<path>.csv`` (a,b,weight), ``<path>.json`` and, optionally, ``<path>.png``.

    ``path`` is a stem; a trailing ``.csv`` or ``.json`` is stripped.
    Returns the written paths.
    """
    stem = str(path)
    for ext in (".csv", ".json", ".png"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
    out = {"csv": stem + ".csv", "json": stem + ".json"}
    try:
        with open(out["csv"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "weight"])
            for (a, b), wt in net.edges.items():
                w.writerow([a, b, repr(wt)])
        with open(out["json"], "w") as fh:
            json.dump(network_to_dict(net, top_k), fh, indent=1, sort_keys=True)
    except OSError as exc:
        raise InputFileError(f"{exc.filename or stem}: {exc.strerror or exc}") from exc
    if plot:
        out["png"] = stem + ".png"
        plot_network(net, out["png"])
    return out


def load_network(path, prune_quantile=DEFAULT_PRUNE_QUANTILE):
    """Read an edge-list CSV written by :func:`export_network`."""
    edges = {}
    try:
        with open(_edge_csv(path), newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["a", "b", "weight"]:
                raise DataFormatError(f"{path}: header must be 'a,b,weight'")
            for row in reader:
                edges[(row["a"], row["b"])] = float(row["weight"])
    except OSError as exc:
        raise InputFileError(f"{path}: {exc.strerror or exc}") from exc
    return PainNetwork(edges, prune_quantile)


def plot_network(net: PainNetwork, path, title=None):
    """Circular layout with edge width proportional to weight."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    n = len(net.nodes)
    angles = {node: 2 * math.pi * i / max(n, 1) for i, node in enumerate(net.nodes)}
    pos = {node: (math.cos(a), math.sin(a)) for node, a in angles.items()}
    wmax = max(net.edges.values(), default=1.0) or 1.0
    for (a, b), w in net.edges.items():
        (x0, y0), (x1, y1) = pos[a], pos[b]
        ax.plot([x0, x1], [y0, y1], color="tab:red", alpha=0.6, linewidth=0.3 + 6.0 * w / wmax)
    strength = net.node_strength
    smax = max(strength.values(), default=1.0) or 1.0
    for node, (x, y) in pos.items():
        ax.scatter([x], [y], s=60 + 400 * strength[node] / smax, color="tab:blue", zorder=3)
        ax.annotate(node, (x * 1.12, y * 1.12), ha="center", va="center", fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlim(-1.35, 1.35)
    ax.set_ylim(-1.35, 1.35)
    ax.axis("off")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
