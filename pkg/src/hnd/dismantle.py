"""Adaptive batched node removal driven by pluggable scorers, and ANC."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .centrality import betweenness, collective_influence
from .errors import InvalidArgument, UsageError
from .hypergraph import Hypernetwork, gcc_size, gcc_size_without, hyperdegrees, remove_nodes, two_section
from .model import ModelParams, predict

SCORERS = ("hnd", "hda", "hhda", "ci", "betweenness")


class Scorer:
    """Maps a residual hypernetwork to one score per surviving node; higher goes first."""

    name = "scorer"

    def __call__(self, g: Hypernetwork) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"scorer": self.name}


class HNDScorer(Scorer):
    name = "hnd"

    def __init__(self, params: ModelParams):
        self.params = params

    def __call__(self, g):
        return predict(g, self.params)

    def describe(self):
        return {"scorer": self.name, "layers": self.params.num_layers, "dim": self.params.dim}


class HDAScorer(Scorer):
    """Degree in the 2-section network."""

    name = "hda"

    def __call__(self, g):
        return two_section(g).degrees.astype(np.float64)


class HHDAScorer(Scorer):
    name = "hhda"

    def __call__(self, g):
        return hyperdegrees(g).astype(np.float64)


class CIScorer(Scorer):
    name = "ci"

    def __init__(self, k: int = 2, ball: bool = False):
        self.k = k
        self.ball = ball

    def __call__(self, g):
        return collective_influence(two_section(g), self.k, self.ball)

    def describe(self):
        return {"scorer": self.name, "k": self.k, "ball": self.ball}


class BetweennessScorer(Scorer):
    name = "betweenness"

    def __call__(self, g):
        return betweenness(two_section(g))


def make_scorer(name: str, params: Optional[ModelParams] = None, ci_k: int = 2, ci_ball: bool = False) -> Scorer:
    if name == "hnd":
        if params is None:
            raise UsageError("the hnd scorer needs model parameters (--checkpoint)")
        return HNDScorer(params)
    if name == "hda":
        return HDAScorer()
    if name == "hhda":
        return HHDAScorer()
    if name == "ci":
        return CIScorer(ci_k, ci_ball)
    if name in ("betweenness", "exact_betweenness"):
        return BetweennessScorer()
    raise UsageError(f"unknown scorer {name!r}; expected one of {SCORERS}")


@dataclass
class DismantleResult:
    """Removal order (original ids), per-removal GCC sizes and ratios, and ANC.

    ``anc`` is ``None`` when nothing was removed.
    """

    sequence: list[int]
    gcc_counts: list[int]
    ratios: list[float]
    anc: Optional[float]
    num_nodes: int
    initial_gcc: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "gcc_counts": self.gcc_counts,
            "ratios": self.ratios,
            "anc": self.anc,
            "num_nodes": self.num_nodes,
            "initial_gcc": self.initial_gcc,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DismantleResult":
        return cls(d["sequence"], d["gcc_counts"], d["ratios"], d["anc"], d["num_nodes"],
                   d["initial_gcc"], d.get("config", {}))

    def save(self, path, labels: Optional[tuple[str, ...]] = None, header: Optional[dict] = None):
        d = self.to_dict()
        if labels is not None:
            d["sequence_labels"] = [labels[v] for v in self.sequence]
        if header:
            d["header"] = header
        Path(path).write_text(json.dumps(d, indent=1) + "\n")

    def save_curve(self, path, header: Optional[dict] = None):
        lines = [f"# {k}={v}" for k, v in (header or {}).items()]
        lines.append("# fraction_removed connectivity_ratio")
        lines += [f"{x!r} {y!r}" for x, y in dismantling_curve(self)]
        Path(path).write_text("\n".join(lines) + "\n")


def anc(trace) -> float:
    """Mean of the per-removal connectivity ratios."""
    trace = list(trace)
    if not trace:
        raise InvalidArgument("ANC of an empty removal sequence is undefined")
    return float(np.mean(trace))


def dismantling_curve(result: DismantleResult) -> list[tuple[float, float]]:
    n = result.num_nodes
    return [((k + 1) / n, r) for k, r in enumerate(result.ratios)]


def dismantle(g: Hypernetwork, scorer: Scorer, batch_fraction: float = 0.01, stop_threshold: float = 0.0,
              literal_denominator: bool = False) -> DismantleResult:
    """Remove top-scored nodes in batches, rescoring the residual network between batches.

    Each batch holds ``max(1, ceil(batch_fraction * N))`` nodes; score ties go
    to the smaller original id. A ratio is recorded after every single
    removal: residual GCC size over the initial GCC size (or, with
    ``literal_denominator``, residual connectivity over initial
    connectivity). Stops once the GCC holds at most ``stop_threshold * N``
    nodes or no nodes remain.
    """
    if not 0.0 < batch_fraction <= 1.0:
        raise InvalidArgument("batch_fraction must lie in (0, 1]")
    if not 0.0 <= stop_threshold < 1.0:
        raise InvalidArgument("stop_threshold must lie in [0, 1)")
    n0 = g.num_nodes
    if n0 == 0:
        raise InvalidArgument("cannot dismantle an empty hypernetwork")
    gcc0 = gcc_size(g)
    batch = max(1, math.ceil(batch_fraction * n0))
    config = {"batch_fraction": batch_fraction, "batch_size": batch, "stop_threshold": stop_threshold,
              "literal_denominator": literal_denominator, **scorer.describe()}
    removed = np.zeros(n0, dtype=bool)
    sequence, counts, ratios = [], [], []

    def done(size):
        return size <= stop_threshold * n0 or removed.all()

    size = gcc0
    residual, origin = g, np.arange(n0)
    while not done(size):
        scores = np.asarray(scorer(residual), dtype=np.float64)
        if scores.shape != (residual.num_nodes,):
            raise InvalidArgument(f"scorer {scorer.name} returned {scores.shape}, expected ({residual.num_nodes},)")
        order = np.lexsort((origin, -scores))
        for local in order[:batch]:
            v = int(origin[local])
            removed[v] = True
            size = gcc_size_without(g, removed)
            sequence.append(v)
            counts.append(size)
            if literal_denominator:
                left = n0 - len(sequence)
                ratios.append(0.0 if left == 0 else (size / left) / (gcc0 / n0))
            else:
                ratios.append(size / gcc0)
            if done(size):
                break
        residual = remove_nodes(g, np.flatnonzero(removed))
        origin = residual.parent_ids
    return DismantleResult(sequence, counts, ratios, anc(ratios) if ratios else None, n0, gcc0, config)
