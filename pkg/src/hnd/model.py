"""HyperSAGE betweenness regressor with a hand-written reverse pass.

Each layer runs an attention step (member-masked softmax of node scores
within every hyperedge), a hyperedge-level aggregation and a node-level
aggregation, both built from concatenated linear branches followed by a
rectifier. A linear readout maps final node embeddings to scores.
All arithmetic is float64.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import FormatError, InvalidArgument, NumericError
from .hypergraph import Hypernetwork

LAYER_KEYS = ("W1", "W2", "W3", "W4", "W5", "W6", "W7")


@dataclass
class ModelParams:
    """Trainable tensors plus architecture metadata.

    ``layers[l]`` holds W1..W7 mapping width ``widths[l]`` to
    ``widths[l + 1]``; ``widths[0]`` is always 1 (constant input features).
    """

    widths: tuple[int, ...]
    layers: list[dict[str, np.ndarray]]
    W8: np.ndarray
    b: np.ndarray
    readout: str = "identity"

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return self.widths[-1]

    @staticmethod
    def shapes(widths: Sequence[int]) -> dict[str, tuple[int, ...]]:
        out = {}
        for l in range(len(widths) - 1):
            d_in, d_out = widths[l], widths[l + 1]
            out.update({
                f"layers.{l}.W1": (d_in, 1),
                f"layers.{l}.W2": (d_in, d_out),
                f"layers.{l}.W3": (d_in, d_out),
                f"layers.{l}.W4": (2 * d_out, d_out),
                f"layers.{l}.W5": (d_in, d_out),
                f"layers.{l}.W6": (d_out, d_out),
                f"layers.{l}.W7": (2 * d_out, d_out),
            })
        out["W8"] = (widths[-1], 1)
        out["b"] = (1,)
        return out

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for l, layer in enumerate(self.layers):
            items.extend((f"layers.{l}.{k}", layer[k]) for k in LAYER_KEYS)
        items.append(("W8", self.W8))
        items.append(("b", self.b))
        return items

    @classmethod
    def from_named(cls, widths, named: dict[str, np.ndarray], readout="identity") -> "ModelParams":
        widths = tuple(int(w) for w in widths)
        shapes = cls.shapes(widths)
        if set(named) != set(shapes):
            raise InvalidArgument("tensor names do not match the architecture")
        for name, shape in shapes.items():
            if tuple(named[name].shape) != shape:
                raise InvalidArgument(f"{name} has shape {named[name].shape}, expected {shape}")
        layers = [{k: np.asarray(named[f"layers.{l}.{k}"], dtype=np.float64) for k in LAYER_KEYS}
                  for l in range(len(widths) - 1)]
        return cls(widths, layers, np.asarray(named["W8"], dtype=np.float64),
                   np.asarray(named["b"], dtype=np.float64), readout)

    def copy(self) -> "ModelParams":
        return ModelParams.from_named(self.widths, {k: v.copy() for k, v in self.named_tensors()}, self.readout)

    def zeros_like(self) -> "ModelParams":
        return ModelParams.from_named(self.widths, {k: np.zeros_like(v) for k, v in self.named_tensors()},
                                      self.readout)

    def validate(self):
        shapes = self.shapes(self.widths)
        for name, t in self.named_tensors():
            if t.shape != shapes[name]:
                raise InvalidArgument(f"{name} has shape {t.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(t)):
                raise NumericError(f"{name} contains non-finite values")
        if self.widths[0] != 1:
            raise InvalidArgument("input width must be 1")
        if self.readout not in ("relu", "identity"):
            raise InvalidArgument(f"unknown readout {self.readout!r}")


def init_params(num_layers: int = 4, dim: int = 32, seed: int = 0, readout: str = "identity") -> ModelParams:
    """Weights uniform in +-1/sqrt(fan_in), zero bias."""
    if num_layers < 1 or dim < 1:
        raise InvalidArgument("num_layers and dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x484E44])))
    widths = (1,) + (dim,) * num_layers
    named = {}
    for name, shape in ModelParams.shapes(widths).items():
        if name == "b":
            named[name] = np.zeros(shape)
            continue
        limit = 1.0 / np.sqrt(shape[0])
        named[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams.from_named(widths, named, readout)


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass, kept for the reverse pass.

    ``X[l]`` are node embeddings entering layer ``l`` (``X[L]`` is final),
    ``A[l]`` the attention matrices (hyperedge x node, sparse),
    ``Y_att[l]`` the attended hyperedge features and ``Y[l]`` the
    aggregated hyperedge embeddings produced by layer ``l``.
    """

    X: list[np.ndarray]
    A: list[sp.csr_matrix]
    Y_att: list[np.ndarray]
    Y: list[np.ndarray]
    cache: list[dict] = field(repr=False)
    readout_pre: np.ndarray = field(repr=False)
    bhat: np.ndarray
    network_key: tuple = field(repr=False, default=())


def _relu(z):
    return np.maximum(z, 0.0)


def _segment_softmax(scores, ptr):
    """Softmax of ``scores`` within each segment ``ptr[i]:ptr[i+1]`` (all non-empty)."""
    starts = ptr[:-1]
    sizes = np.diff(ptr)
    seg_max = np.maximum.reduceat(scores, starts)
    ex = np.exp(scores - np.repeat(seg_max, sizes))
    seg_sum = np.add.reduceat(ex, starts)
    return ex / np.repeat(seg_sum, sizes)


def _check_finite(arrays, layer):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite activation in layer {layer}", layer=layer)


def _network_key(g: Hypernetwork):
    return (g.num_nodes, g.num_edges, int(g.incidence_node.size))


def forward(g: Hypernetwork, params: ModelParams) -> ForwardTrace:
    params.validate()
    if g.num_nodes == 0:
        raise InvalidArgument("forward needs at least one node")
    H = g.incidence
    Ht = g.incidence_t
    ptr = g.edge_ptr
    members = g.incidence_node
    m = g.num_edges
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward(g, params, H, Ht, ptr, members, m)


def _forward(g, params, H, Ht, ptr, members, m):
    X = np.ones((g.num_nodes, 1))
    xs, attn, y_atts, ys, caches = [X], [], [], [], []
    for l, layer in enumerate(params.layers):
        d_out = layer["W2"].shape[1]
        s = (X @ layer["W1"])[:, 0]
        if m:
            a = _segment_softmax(s[members], ptr)
        else:
            a = np.zeros(0)
        A = sp.csr_matrix((a, Ht.indices, Ht.indptr), shape=Ht.shape)
        Y_att = A @ X
        P = Ht @ (H @ Y_att)
        U = np.hstack([Y_att @ layer["W2"], P @ layer["W3"]])
        Zy = U @ layer["W4"]
        Y = _relu(Zy)
        Q = H @ Y
        V = np.hstack([X @ layer["W5"], Q @ layer["W6"]])
        Zx = V @ layer["W7"]
        X_next = _relu(Zx)
        _check_finite((s, Y, X_next), l)
        caches.append({"a": a, "P": P, "U": U, "Zy": Zy, "Q": Q, "V": V, "Zx": Zx, "d_out": d_out})
        attn.append(A)
        y_atts.append(Y_att)
        ys.append(Y)
        xs.append(X_next)
        X = X_next
    z = (X @ params.W8)[:, 0] + params.b[0]
    bhat = _relu(z) if params.readout == "relu" else z
    _check_finite((bhat,), params.num_layers)
    return ForwardTrace(xs, attn, y_atts, ys, caches, z, bhat, _network_key(g))


def predict(g: Hypernetwork, params: ModelParams) -> np.ndarray:
    return forward(g, params).bhat


def _softplus(x):
    return np.logaddexp(0.0, x)


_sigmoid = expit


def bpr_instance_loss(bhat_i: float, bhat_j: float, label: int) -> tuple[float, float, float]:
    """Cross-entropy of sigmoid(bhat_i - bhat_j) against ``label``, with partials."""
    if label not in (0, 1):
        raise InvalidArgument("label must be 0 or 1")
    delta = float(bhat_i) - float(bhat_j)
    loss = float(_softplus(-delta) if label == 1 else _softplus(delta))
    g = float(_sigmoid(delta)) - label
    return loss, g, -g


def _as_arrays(samples):
    if hasattr(samples, "i") and hasattr(samples, "j"):
        return samples.i, samples.j, samples.label
    arr = np.asarray(list(samples), dtype=np.int64).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def network_loss(bhat: np.ndarray, samples) -> tuple[float, np.ndarray]:
    """Mean pairwise loss over one network's samples and its gradient w.r.t. ``bhat``."""
    i, j, lab = _as_arrays(samples)
    if len(i) == 0:
        raise InvalidArgument("sample set is empty")
    n = bhat.shape[0]
    if i.min() < 0 or j.min() < 0 or max(i.max(), j.max()) >= n:
        raise InvalidArgument("sample references a node outside the network")
    delta = bhat[i] - bhat[j]
    losses = np.where(lab == 1, _softplus(-delta), _softplus(delta))
    coeff = (_sigmoid(delta) - lab) / len(i)
    grad = np.bincount(i, weights=coeff, minlength=n) - np.bincount(j, weights=coeff, minlength=n)
    return float(losses.mean()), grad


def batch_loss(bhats: Sequence[np.ndarray], sample_sets: Sequence) -> float:
    """Mean over networks of the mean pairwise loss within each network."""
    if len(bhats) == 0 or len(bhats) != len(sample_sets):
        raise InvalidArgument("need one non-empty sample set per network")
    return float(np.mean([network_loss(b, s)[0] for b, s in zip(bhats, sample_sets)]))


def backward_from_output(g: Hypernetwork, params: ModelParams, trace: ForwardTrace,
                         d_bhat: np.ndarray) -> ModelParams:
    """Gradients of a scalar whose derivative w.r.t. the outputs is ``d_bhat``."""
    if trace.network_key != _network_key(g) or len(trace.cache) != params.num_layers:
        raise InvalidArgument("trace was not produced by forward on this network and parameters")
    grads = params.zeros_like()
    H = g.incidence
    Ht = g.incidence_t
    ptr = g.edge_ptr
    sizes = np.diff(ptr)
    members = g.incidence_node
    dz = d_bhat * (trace.readout_pre > 0) if params.readout == "relu" else d_bhat.copy()
    X_L = trace.X[-1]
    grads.W8[:] = X_L.T @ dz[:, None]
    grads.b[0] = dz.sum()
    dX = dz[:, None] @ params.W8.T
    for l in range(params.num_layers - 1, -1, -1):
        layer, gl, c = params.layers[l], grads.layers[l], trace.cache[l]
        X = trace.X[l]
        d_out = c["d_out"]
        dZx = dX * (c["Zx"] > 0)
        gl["W7"][:] = c["V"].T @ dZx
        dV = dZx @ layer["W7"].T
        gl["W5"][:] = X.T @ dV[:, :d_out]
        dX_in = dV[:, :d_out] @ layer["W5"].T
        gl["W6"][:] = c["Q"].T @ dV[:, d_out:]
        dQ = dV[:, d_out:] @ layer["W6"].T
        dY = Ht @ dQ
        dZy = dY * (c["Zy"] > 0)
        gl["W4"][:] = c["U"].T @ dZy
        dU = dZy @ layer["W4"].T
        Y_att = trace.Y_att[l]
        gl["W2"][:] = Y_att.T @ dU[:, :d_out]
        gl["W3"][:] = c["P"].T @ dU[:, d_out:]
        dP = dU[:, d_out:] @ layer["W3"].T
        dY_att = dU[:, :d_out] @ layer["W2"].T + Ht @ (H @ dP)
        A = trace.A[l]
        dX_in += A.T @ dY_att
        if members.size:
            a = c["a"]
            # d loss / d attention weight of incidence (e, v) is dY_att[e] . X[v]
            da = np.einsum("ij,ij->i", dY_att[g.incidence_edge], X[members])
            weighted = np.add.reduceat(a * da, ptr[:-1])
            ds_inc = a * (da - np.repeat(weighted, sizes))
            ds = np.bincount(members, weights=ds_inc, minlength=g.num_nodes)
        else:
            ds = np.zeros(g.num_nodes)
        gl["W1"][:] = X.T @ ds[:, None]
        dX_in += ds[:, None] @ layer["W1"].T
        dX = dX_in
    return grads


def backward(g: Hypernetwork, params: ModelParams, trace: ForwardTrace, samples) -> ModelParams:
    """Gradients of the network's mean pairwise loss w.r.t. every parameter."""
    _, d_bhat = network_loss(trace.bhat, samples)
    return backward_from_output(g, params, trace, d_bhat)


def loss_and_grads(g: Hypernetwork, params: ModelParams, samples) -> tuple[float, ModelParams]:
    trace = forward(g, params)
    loss, d_bhat = network_loss(trace.bhat, samples)
    return loss, backward_from_output(g, params, trace, d_bhat)


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float
    redraws: int = 0

    @property
    def flagged(self) -> list[str]:
        return [k for k, v in self.max_rel_error.items() if not v < self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.flagged


def _kink_margin(trace: ForwardTrace, params: ModelParams) -> float:
    pre = [c["Zx"] for c in trace.cache] + [c["Zy"] for c in trace.cache]
    if params.readout == "relu":
        pre.append(trace.readout_pre)
    vals = np.concatenate([np.abs(p).ravel() for p in pre])
    vals = vals[vals > 0]
    return float(vals.min()) if vals.size else np.inf


def grad_check(g: Hypernetwork, params: ModelParams, samples, step: float = 1e-5,
               tolerance: float = 1e-4, grads: Optional[ModelParams] = None, seed: int = 0,
               max_redraws: int = 20, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients with central differences, tensor by tensor.

    If any rectifier input sits within reach of a finite-difference step,
    the parameters are jittered by a random offset and the check re-drawn.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    redraws = 0
    params = params.copy()
    trace = forward(g, params)
    scale = max(1.0, max(float(np.abs(x).max()) for x in trace.X))
    while _kink_margin(trace, params) < 1e3 * step * scale and redraws < max_redraws and grads is None:
        for _, t in params.named_tensors():
            t += rng.normal(scale=1e-2, size=t.shape)
        trace = forward(g, params)
        redraws += 1
    if grads is None:
        grads = backward(g, params, trace, samples)
    analytic = dict(grads.named_tensors())
    report = {}
    for name, t in params.named_tensors():
        worst = 0.0
        for idx in np.ndindex(t.shape):
            orig = t[idx]
            t[idx] = orig + step
            up = network_loss(forward(g, params).bhat, samples)[0]
            t[idx] = orig - step
            down = network_loss(forward(g, params).bhat, samples)[0]
            t[idx] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[name][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
        report[name] = worst
    return GradCheckReport(report, tolerance, redraws)


@dataclass
class OptimizerState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, **kw) -> "OptimizerState":
        st = cls(**kw)
        for name, t in params.named_tensors():
            st.m[name] = np.zeros_like(t)
            st.v[name] = np.zeros_like(t)
        return st


def clip_grad_norm(grads: ModelParams, max_norm: Optional[float]) -> tuple[ModelParams, float]:
    """Rescale all gradient tensors jointly so their global L2 norm is at most ``max_norm``.

    Returns the (possibly rescaled) gradients and the norm before clipping.
    ``max_norm=None`` leaves them untouched.
    """
    norm = float(np.sqrt(sum(float(np.sum(t * t)) for _, t in grads.named_tensors())))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    named = {k: t * scale for k, t in grads.named_tensors()}
    return ModelParams.from_named(grads.widths, named, grads.readout), norm


def adam_step(state: OptimizerState, params: ModelParams, grads: ModelParams) -> tuple[ModelParams, OptimizerState]:
    """One bias-corrected Adam update; returns new params and state (inputs untouched)."""
    g_named = dict(grads.named_tensors())
    for name, g in g_named.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    if set(g_named) != {k for k, _ in params.named_tensors()}:
        raise InvalidArgument("gradient tensors do not match parameters")
    step = state.step + 1
    bc1 = 1.0 - state.beta1 ** step
    bc2 = 1.0 - state.beta2 ** step
    new_named, m_new, v_new = {}, {}, {}
    for name, p in params.named_tensors():
        g = g_named[name]
        if g.shape != p.shape:
            raise InvalidArgument(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = state.m.get(name, np.zeros_like(p)) * state.beta1 + (1.0 - state.beta1) * g
        v = state.v.get(name, np.zeros_like(p)) * state.beta2 + (1.0 - state.beta2) * g * g
        new_named[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        m_new[name], v_new[name] = m, v
    new_state = OptimizerState(state.lr, state.beta1, state.beta2, state.eps, step, m_new, v_new)
    return ModelParams.from_named(params.widths, new_named, params.readout), new_state


# Checkpoint container, all integers little-endian:
#   magic b"HNDCKPT\0" | u32 version | u32 metadata length | metadata (UTF-8 JSON)
#   | u32 tensor count | per tensor: u16 name length, name, u8 ndim, u64 dims...,
#     row-major float64 data | u32 CRC32 of everything before it
MAGIC = b"HNDCKPT\0"
VERSION = 1


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_checkpoint(params: ModelParams, meta: Optional[dict] = None) -> bytes:
    meta = dict(meta or {})
    meta.update({"num_layers": params.num_layers, "widths": list(params.widths), "readout": params.readout})
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<II", VERSION, len(blob)))
    buf.write(blob)
    tensors = params.named_tensors()
    buf.write(struct.pack("<I", len(tensors)))
    for name, t in tensors:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def load_checkpoint(data: bytes) -> tuple[ModelParams, dict]:
    data = bytes(data)
    if len(data) < len(MAGIC) + 12 or data[:len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint (bad magic or truncated)")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint is truncated or corrupt (checksum mismatch)")
    try:
        off = len(MAGIC)
        version, mlen = struct.unpack_from("<II", body, off)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off += 8
        meta = json.loads(body[off:off + mlen].decode())
        off += mlen
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        named = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}Q", body, off)
            off += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if off + 8 * size > len(body):
                raise FormatError("checkpoint tensor data truncated")
            named[name] = np.frombuffer(body, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
        if off != len(body):
            raise FormatError("trailing bytes in checkpoint")
        params = ModelParams.from_named(meta["widths"], named, meta.get("readout", "identity"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, InvalidArgument) as exc:
        raise FormatError(f"malformed checkpoint: {exc}") from exc
    return params, meta
