"""Ranking-pair construction and the supervised training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .centrality import betweenness
from .errors import ConfigurationError, DegenerateNetworkError, InvalidArgument
from .generator import SynthBatchSpec, draw_params, generate, stream
from .hypergraph import Hypernetwork, two_section
from .model import (ModelParams, OptimizerState, adam_step, backward_from_output, config_hash,
                    clip_grad_norm, forward, init_params, network_loss)

log = logging.getLogger(__name__)

MAX_RETRIES = 10


@dataclass
class RankingSampleSet:
    """Labelled node pairs of one network: ``label[k] = 1`` iff node ``i[k]`` has the larger betweenness."""

    network: Hypernetwork
    i: np.ndarray
    j: np.ndarray
    label: np.ndarray

    def __len__(self):
        return len(self.i)

    def __iter__(self):
        return zip(self.i.tolist(), self.j.tolist(), self.label.tolist())


def _equal(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def count_unequal_pairs(b: np.ndarray) -> int:
    """Number of unordered node pairs whose betweenness values differ."""
    vals = np.sort(np.asarray(b, dtype=np.float64))
    n = vals.size
    total = n * (n - 1) // 2
    start = 0
    for k in range(1, n + 1):
        if k == n or not _equal(vals[k], vals[start]):
            run = k - start
            total -= run * (run - 1) // 2
            start = k
    return total


def build_samples(g: Hypernetwork, b: np.ndarray, r: float = 0.9, seed: int = 0) -> RankingSampleSet:
    """Draw ceil(r N) distinct unordered pairs with unequal betweenness, labelled by comparison.

    Pairs with equal values (and repeats) are rejected and redrawn.
    """
    if r <= 0:
        raise InvalidArgument("pair ratio must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = g.num_nodes
    if b.shape != (n,):
        raise InvalidArgument("betweenness vector does not match the network")
    need = math.ceil(r * n)
    available = count_unequal_pairs(b)
    if need > available:
        raise DegenerateNetworkError(f"network offers {available} unequal pairs, {need} needed")
    rng = np.random.Generator(np.random.PCG64(seed))
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    if need * 2 > available:
        # dense regime: sample straight from the enumerated valid pairs
        valid = [(u, w) for u in range(n) for w in range(u + 1, n) if not _equal(b[u], b[w])]
        for k in rng.choice(len(valid), size=need, replace=False):
            u, w = valid[k]
            pairs.append((u, w) if rng.random() < 0.5 else (w, u))
    else:
        while len(pairs) < need:
            u, w = (int(x) for x in rng.integers(n, size=2))
            key = (min(u, w), max(u, w))
            if u == w or key in seen or _equal(b[u], b[w]):
                continue
            seen.add(key)
            pairs.append((u, w))
    arr = np.asarray(pairs, dtype=np.int64)
    label = (b[arr[:, 0]] > b[arr[:, 1]]).astype(np.int64)
    return RankingSampleSet(g, arr[:, 0].copy(), arr[:, 1].copy(), label)


def exact_betweenness(g: Hypernetwork) -> np.ndarray:
    return betweenness(two_section(g))


@dataclass
class TrainConfig:
    networks: int = 1000
    n_range: tuple[int, int] = (100, 150)
    p_range: tuple[float, float] = (0.1, 0.4)
    q_range: tuple[float, float] = (0.1, 0.4)
    pairs_ratio: float = 0.9
    iterations: int = 1000
    val_networks: int = 50
    patience: int = 100
    layers: int = 4
    dim: int = 32
    lr: float = 0.005
    seed: int = 0
    shuffle: bool = False
    readout: str = "identity"
    clip_norm: Optional[float] = 1.0

    def validate(self):
        if self.pairs_ratio <= 0:
            raise ConfigurationError("pairs_ratio must be positive")
        if self.patience < 1 or self.iterations < 1:
            raise ConfigurationError("patience and iterations must be >= 1")
        if self.val_networks < 1:
            raise ConfigurationError("val_networks must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be positive or None")
        try:
            self.batch_spec(0).validate()
            self.batch_spec(1).validate()
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc)) from exc

    def batch_spec(self, split: int) -> SynthBatchSpec:
        """Spec for the training (split 0) or validation (split 1) networks."""
        count = self.networks if split == 0 else self.val_networks
        seed = int(stream(self.seed, split).integers(2**63))
        return SynthBatchSpec(count, tuple(self.n_range), tuple(self.p_range), tuple(self.q_range), seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_range"], d["p_range"], d["q_range"] = list(self.n_range), list(self.p_range), list(self.q_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("n_range", "p_range", "q_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def make_sample_sets(spec: SynthBatchSpec, ratio: float) -> list[RankingSampleSet]:
    """Generate ``spec.count`` networks with ranking samples, regenerating degenerate ones."""
    spec.validate()
    out = []
    for index in range(spec.count):
        for attempt in range(MAX_RETRIES + 1):
            params = draw_params(spec, index, attempt)
            g = generate(params)
            b = exact_betweenness(g)
            try:
                out.append(build_samples(g, b, ratio, seed=params.seed ^ 0x5A5A))
                break
            except DegenerateNetworkError:
                log.debug("network %d attempt %d degenerate; regenerating", index, attempt)
        else:
            log.warning("network %d still degenerate after %d retries; skipped", index, MAX_RETRIES)
    return out


def pairwise_accuracy(params: ModelParams, sample_sets: Sequence[RankingSampleSet]) -> float:
    """Fraction of pairs whose predicted order matches the label; ties count as wrong."""
    correct = total = 0
    for s in sample_sets:
        bhat = forward(s.network, params).bhat
        correct += _correct(bhat, s)
        total += len(s)
    if total == 0:
        raise InvalidArgument("no samples to score")
    return correct / total


def _correct(bhat, s: RankingSampleSet) -> int:
    delta = bhat[s.i] - bhat[s.j]
    return int(np.sum(np.where(s.label == 1, delta > 0, delta < 0)))


def evaluate(params: ModelParams, sample_sets: Sequence[RankingSampleSet]) -> tuple[float, float]:
    """Mean-of-means pairwise loss and pairwise accuracy in one pass."""
    if not sample_sets:
        raise InvalidArgument("no sample sets")
    losses, correct, total = [], 0, 0
    for s in sample_sets:
        bhat = forward(s.network, params).bhat
        losses.append(network_loss(bhat, s)[0])
        correct += _correct(bhat, s)
        total += len(s)
    return float(np.mean(losses)), correct / total


@dataclass
class LogRow:
    iteration: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    wall_clock: float


@dataclass
class TrainingLog:
    config: dict
    rows: list[LogRow] = field(default_factory=list)
    best_iteration: int = 0
    stopped_early: bool = False
    discarded_networks: int = 0

    def deterministic_view(self) -> list[tuple]:
        """Rows without wall-clock times, for reproducibility comparisons."""
        return [(r.iteration, r.train_loss, r.val_loss, r.val_accuracy) for r in self.rows]

    @property
    def best_val_loss(self) -> float:
        return next(r.val_loss for r in self.rows if r.iteration == self.best_iteration)


def train(config: TrainConfig, init: Optional[ModelParams] = None, train_sets=None, val_sets=None,
          progress=None) -> tuple[ModelParams, TrainingLog]:
    """Fit the regressor on synthetic networks with early stopping on validation loss.

    One Adam step per training network per iteration, networks visited in a
    fixed order (or a seeded shuffle). Gradients are clipped to a global norm
    of ``clip_norm`` first; without it, rare dense networks produce gradient
    spikes that push every ReLU unit of the first layer dead. Returns the parameters of the
    iteration with the lowest validation loss. Row 0 of the log scores the
    initial parameters.
    """
    config.validate()
    started = time.perf_counter()
    if train_sets is None:
        train_sets = make_sample_sets(config.batch_spec(0), config.pairs_ratio)
    if val_sets is None:
        val_sets = make_sample_sets(config.batch_spec(1), config.pairs_ratio)
    if not train_sets:
        raise ConfigurationError("every generated training network was degenerate")
    if not val_sets:
        raise ConfigurationError("every generated validation network was degenerate")
    params = init if init is not None else init_params(config.layers, config.dim, config.seed, config.readout)
    state = OptimizerState.for_params(params, lr=config.lr)
    tlog = TrainingLog(config.to_dict(), discarded_networks=config.networks - len(train_sets))

    train_loss0 = float(np.mean([network_loss(forward(s.network, params).bhat, s)[0] for s in train_sets]))
    val_loss, val_acc = evaluate(params, val_sets)
    tlog.rows.append(LogRow(0, train_loss0, val_loss, val_acc, time.perf_counter() - started))
    best, best_loss, stale = params.copy(), np.inf, 0
    shuffler = stream(config.seed, 3)
    order = np.arange(len(train_sets))

    for it in range(1, config.iterations + 1):
        if config.shuffle:
            order = shuffler.permutation(len(train_sets))
        losses = []
        for k in order:
            s = train_sets[k]
            trace = forward(s.network, params)
            loss, d_bhat = network_loss(trace.bhat, s)
            grads, _ = clip_grad_norm(backward_from_output(s.network, params, trace, d_bhat), config.clip_norm)
            params, state = adam_step(state, params, grads)
            losses.append(loss)
        val_loss, val_acc = evaluate(params, val_sets)
        tlog.rows.append(LogRow(it, float(np.mean(losses)), val_loss, val_acc, time.perf_counter() - started))
        if progress is not None:
            progress(tlog.rows[-1])
        log.info("iter %d train %.5f val %.5f acc %.4f", it, tlog.rows[-1].train_loss, val_loss, val_acc)
        if val_loss < best_loss:
            best, best_loss, stale = params.copy(), val_loss, 0
            tlog.best_iteration = it
        else:
            stale += 1
            if stale >= config.patience:
                tlog.stopped_early = True
                break
    return best, tlog
