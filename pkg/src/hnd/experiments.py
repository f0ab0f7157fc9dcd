"""Experiment drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dismantle import dismantle, make_scorer
from .generator import HyperFFParams, SynthBatchSpec, draw_params, generate, stream
from .hypergraph import Hypernetwork
from .model import ModelParams, init_params, predict
from .training import TrainConfig, exact_betweenness, make_sample_sets, train

# split ids for seed streams; 0 and 1 are taken by training and validation
TEST_SPLIT = 2
SCALE_SPLIT = 4


def heldout_suite(seed: int, count: int = 20, n: int = 200, p_range=(0.1, 0.4), q_range=(0.1, 0.4)) -> list[Hypernetwork]:
    """Held-out HyperFF networks of a fixed size, disjoint in seed from training and validation."""
    spec = SynthBatchSpec(count, (n, n), tuple(p_range), tuple(q_range), int(stream(seed, TEST_SPLIT).integers(2**63)))
    spec.validate()
    return [generate(draw_params(spec, i)) for i in range(count)]


def anc_table(networks: Sequence[Hypernetwork], scorers: Sequence[str], params: Optional[ModelParams] = None,
              batch_fraction: float = 0.01, threshold: float = 0.0, ci_k: int = 2) -> dict[str, list[float]]:
    """ANC of every (scorer, network) cell."""
    out = {}
    for name in scorers:
        scorer = make_scorer(name, params, ci_k)
        out[name] = [dismantle(g, scorer, batch_fraction, threshold).anc for g in networks]
    return out


def _best_time(fn: Callable[[], object], repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def time_scaling(scales: Sequence[int], params: ModelParams, seed: int = 0, p: float = 0.3, q: float = 0.3,
                 repeats: int = 3, methods: Sequence[str] = ("hnd", "betweenness")) -> list[tuple[str, int, float]]:
    """Best-of-``repeats`` single-inference wall time per method and scale: rows (method, N, seconds)."""
    # warm up compiled code so the first scale is not charged for it
    warm = generate(HyperFFParams(50, p, q, seed))
    predict(warm, params)
    exact_betweenness(warm)
    rows = []
    for k, n in enumerate(scales):
        rng = stream(seed, SCALE_SPLIT, k)
        g = generate(HyperFFParams(int(n), p, q, int(rng.integers(2**63))))
        for method in methods:
            if method == "hnd":
                secs = _best_time(lambda: predict(g, params), repeats)
            elif method == "betweenness":
                secs = _best_time(lambda: exact_betweenness(g), repeats)
            else:
                raise ValueError(f"cannot time method {method!r}")
            rows.append((method, int(n), secs))
    return rows


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def layer_sweep(layers: Sequence[int], config: TrainConfig, networks: Sequence[Hypernetwork],
                batch_fraction: float = 0.01, threshold: float = 0.0,
                progress: Optional[Callable[[int, float], None]] = None) -> list[tuple[int, float, int]]:
    """Train one model per depth and score it on ``networks``: rows (L, mean ANC, best iteration).

    Every depth reuses the same training and validation networks.
    """
    train_sets = make_sample_sets(config.batch_spec(0), config.pairs_ratio)
    val_sets = make_sample_sets(config.batch_spec(1), config.pairs_ratio)
    rows = []
    for L in layers:
        cfg = replace(config, layers=int(L))
        params, tlog = train(cfg, init_params(cfg.layers, cfg.dim, cfg.seed, cfg.readout), train_sets, val_sets)
        ancs = anc_table(networks, ["hnd"], params, batch_fraction, threshold)["hnd"]
        rows.append((int(L), float(np.mean(ancs)), tlog.best_iteration))
        if progress is not None:
            progress(int(L), rows[-1][1])
    return rows
