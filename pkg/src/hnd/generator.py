"""Forest-fire growth model for synthetic hypernetworks.

Every arriving node picks an ambassador, burns outward through the
2-section of the current network and joins a hyperedge with everything it
burned. Burned nodes may then start secondary fires ("expanding") that
produce extra hyperedges around the new node.

Randomness comes from numpy's PCG64. A batch derives the stream of its
``i``-th network from ``SeedSequence([master_seed, i])`` so each network is
reproducible on its own and independent of evaluation order.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .hypergraph import Hypernetwork


@dataclass(frozen=True)
class HyperFFParams:
    n_target: int
    burn_p: float
    expand_q: float
    seed: int = 0

    def validate(self):
        if self.n_target < 1:
            raise InvalidArgument("n_target must be >= 1")
        if not 0.0 <= self.burn_p < 1.0:
            raise InvalidArgument("burn_p must lie in [0, 1)")
        if not 0.0 <= self.expand_q <= 1.0:
            raise InvalidArgument("expand_q must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SynthBatchSpec:
    count: int
    n_range: tuple[int, int] = (100, 150)
    p_range: tuple[float, float] = (0.1, 0.4)
    q_range: tuple[float, float] = (0.1, 0.4)
    seed: int = 0

    def validate(self):
        if self.count < 1:
            raise InvalidArgument("count must be >= 1")
        lo, hi = self.n_range
        if not 1 <= lo <= hi:
            raise InvalidArgument(f"invalid n_range {self.n_range}")
        for name, (a, b) in (("p_range", self.p_range), ("q_range", self.q_range)):
            if not a <= b:
                raise InvalidArgument(f"invalid {name} {(a, b)}")
        if not (0.0 <= self.p_range[0] and self.p_range[1] < 1.0):
            raise InvalidArgument("p_range must lie within [0, 1)")
        if not (0.0 <= self.q_range[0] and self.q_range[1] <= 1.0):
            raise InvalidArgument("q_range must lie within [0, 1]")


def stream(seed: int, *path: int) -> np.random.Generator:
    """Seeded generator for the sub-stream addressed by ``path``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, path)])))


def _burn(rng, adj, start, burned, p):
    """Forest fire from ``start``; returns nodes newly burned (``start`` included)."""
    fire = [start]
    queue = deque([start])
    while queue:
        w = queue.popleft()
        # numpy's geometric counts trials to first success; shift to failures-before-stop
        k = int(rng.geometric(1.0 - p)) - 1 if p > 0 else 0
        if k <= 0:
            continue
        candidates = sorted(u for u in adj[w] if u not in burned)
        if not candidates:
            continue
        if k < len(candidates):
            picked = rng.choice(len(candidates), size=k, replace=False)
            chosen = [candidates[i] for i in sorted(picked)]
        else:
            chosen = candidates
        for u in chosen:
            burned.add(u)
            fire.append(u)
            queue.append(u)
    return fire


def generate(params: HyperFFParams, recursive_expand: bool = False) -> Hypernetwork:
    params.validate()
    rng = np.random.Generator(np.random.PCG64(params.seed))
    n = params.n_target
    if n == 1:
        return Hypernetwork(1, ((0,),))
    adj: list[set[int]] = [set() for _ in range(n)]
    edges: list[tuple[int, ...]] = []

    def add_edge(members):
        edges.append(tuple(sorted(members)))
        for u in members:
            adj[u].update(members)
            adj[u].discard(u)

    for v in range(1, n):
        ambassador = int(rng.integers(v))
        burned = {ambassador, v}
        primary = _burn(rng, adj, ambassador, burned, params.burn_p)
        add_edge([v, *primary])
        seeds = primary[1:]
        while seeds:
            spawned = []
            for s in seeds:
                if rng.random() < params.expand_q:
                    secondary = _burn(rng, adj, s, burned, params.burn_p)
                    add_edge([v, s, *secondary[1:]])
                    spawned.extend(secondary[1:])
            seeds = spawned if recursive_expand else []
    return Hypernetwork(n, tuple(edges))


def draw_params(spec: SynthBatchSpec, index: int, attempt: int = 0) -> HyperFFParams:
    """Parameters of network ``index``; ``attempt > 0`` gives a fresh replacement draw."""
    rng = stream(spec.seed, index) if attempt == 0 else stream(spec.seed, index, attempt)
    n = int(rng.integers(spec.n_range[0], spec.n_range[1] + 1))
    p = float(rng.uniform(*spec.p_range)) if spec.p_range[0] < spec.p_range[1] else spec.p_range[0]
    q = float(rng.uniform(*spec.q_range)) if spec.q_range[0] < spec.q_range[1] else spec.q_range[0]
    seed = int(rng.integers(2**63))
    return HyperFFParams(n, p, q, seed)


def generate_batch(spec: SynthBatchSpec, start: int = 0) -> list[Hypernetwork]:
    spec.validate()
    return [generate(draw_params(spec, i)) for i in range(start, start + spec.count)]


def write_batch(spec: SynthBatchSpec, out_dir: Path, header: Optional[dict] = None) -> Path:
    """Write one hyperedge-list file per network plus ``manifest.json``."""
    from .io import write_hyperedge_list

    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(spec.count):
        params = draw_params(spec, i)
        g = generate(params)
        name = f"net_{i:05d}.txt"
        write_hyperedge_list(g, out_dir / name, header=header)
        rows.append({"file": name, **asdict(params), "num_nodes": g.num_nodes, "num_edges": g.num_edges})
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"header": header or {}, "spec": asdict(spec), "networks": rows}, indent=2))
    return manifest
