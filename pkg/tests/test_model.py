import math

import numpy as np
import pytest

from hnd.errors import FormatError, InvalidArgument, NumericError
from hnd.hypergraph import Hypernetwork, relabel
from hnd.model import (ModelParams, OptimizerState, adam_step, backward, batch_loss, bpr_instance_loss, clip_grad_norm,
                       forward, grad_check, init_params, load_checkpoint, loss_and_grads, network_loss, predict,
                       save_checkpoint)

from conftest import random_hypernetwork


def dense_forward(g, params):
    """Straight-line dense re-implementation with explicit loops for the attention."""
    n, m = g.num_nodes, g.num_edges
    H = np.zeros((n, m))
    for e, members in enumerate(g.hyperedges):
        for v in members:
            H[v, e] = 1.0
    relu = lambda z: np.maximum(z, 0.0)
    X = np.ones((n, 1))
    for layer in params.layers:
        s = X @ layer["W1"]
        A = np.zeros((m, n))
        for e in range(m):
            members = [v for v in range(n) if H[v, e] == 1.0]
            top = max(s[v, 0] for v in members)
            w = [math.exp(s[v, 0] - top) for v in members]
            for v, wv in zip(members, w):
                A[e, v] = wv / sum(w)
        Y = A @ X
        Y = relu(np.concatenate([Y @ layer["W2"], H.T @ H @ Y @ layer["W3"]], axis=1) @ layer["W4"])
        X = relu(np.concatenate([X @ layer["W5"], H @ Y @ layer["W6"]], axis=1) @ layer["W7"])
    z = X @ params.W8 + params.b[0]
    return (relu(z) if params.readout == "relu" else z)[:, 0]


def random_samples(rng, n, count=None):
    count = count or max(1, n)
    out = []
    for _ in range(count):
        i, j = rng.choice(n, size=2, replace=False)
        out.append((int(i), int(j), int(rng.integers(2))))
    return out


def test_zero_weights_give_zero_output(g0):
    p = init_params(2, 4, seed=1)
    for _, t in p.named_tensors():
        t[...] = 0.0
    assert np.all(predict(g0, p) == 0.0)


def test_singleton_attention_is_one():
    g = Hypernetwork(3, ((1,), (0, 1, 2)))
    p = init_params(2, 4, seed=3)
    for A in forward(g, p).A:
        assert A[0, 1] == 1.0
        assert A[0].nnz == 1


def test_attention_rows_are_member_distributions(rng):
    for _ in range(20):
        g = random_hypernetwork(rng, 15)
        if g.num_edges == 0:
            continue
        H = g.incidence.toarray()
        for A in forward(g, init_params(3, 5, seed=int(rng.integers(1000)))).A:
            dense = A.toarray()
            assert np.all(dense >= 0)
            assert np.allclose(dense.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(dense[H.T == 0] == 0)


def test_relu_readout_non_negative(rng):
    for _ in range(10):
        g = random_hypernetwork(rng, 12)
        assert np.all(predict(g, init_params(2, 4, seed=int(rng.integers(99)), readout="relu")) >= 0)


@pytest.mark.parametrize("readout", ["identity", "relu"])
def test_matches_dense_reimplementation(g0, readout):
    p = init_params(2, 4, seed=42, readout=readout)
    assert np.max(np.abs(predict(g0, p) - dense_forward(g0, p))) < 1e-12


def test_matches_dense_reimplementation_random(rng):
    for _ in range(10):
        g = random_hypernetwork(rng, 12)
        p = init_params(3, 6, seed=int(rng.integers(10**6)))
        assert np.allclose(predict(g, p), dense_forward(g, p), rtol=1e-12, atol=1e-12)


def test_permutation_equivariance(rng):
    for _ in range(10):
        g = random_hypernetwork(rng, 14)
        p = init_params(2, 5, seed=int(rng.integers(1000)))
        perm = rng.permutation(g.num_nodes)
        edge_order = rng.permutation(g.num_edges)
        h = relabel(g, perm, edge_order)
        assert np.allclose(predict(h, p)[perm], predict(g, p), rtol=1e-10, atol=1e-12)


def test_forward_rejects_empty_and_bad_shapes(g0):
    with pytest.raises(InvalidArgument):
        forward(Hypernetwork(0, ()), init_params(1, 2))
    p = init_params(2, 4)
    p.layers[0]["W2"] = np.zeros((3, 3))
    with pytest.raises(InvalidArgument):
        forward(g0, p)


def test_forward_flags_non_finite_layer(g0):
    p = init_params(2, 4, seed=0)
    p.layers[1]["W4"][:] = 1e308
    p.layers[1]["W7"][:] = 1e308
    p.layers[0]["W4"][:] = 1.0
    p.layers[0]["W7"][:] = 1.0
    with pytest.raises(NumericError) as err:
        forward(g0, p)
    assert err.value.layer == 1


def test_bpr_values():
    assert bpr_instance_loss(0.0, 0.0, 1)[0] == pytest.approx(math.log(2), abs=1e-12)
    assert bpr_instance_loss(1.0, 0.0, 1)[0] == pytest.approx(0.313262, abs=1e-6)
    assert bpr_instance_loss(0.0, 1.0, 0)[0] == pytest.approx(0.313262, abs=1e-6)
    loss, gi, gj = bpr_instance_loss(800.0, 0.0, 1)
    assert loss == 0.0 and abs(gi) < 1e-300 and gj == -gi
    loss, gi, _ = bpr_instance_loss(-800.0, 0.0, 1)
    assert math.isfinite(loss) and loss == pytest.approx(800.0)
    assert gi == pytest.approx(-1.0)
    with pytest.raises(InvalidArgument):
        bpr_instance_loss(0.0, 0.0, 2)


def test_bpr_partials_match_differences():
    for d, lab in ((0.3, 1), (-1.2, 0), (2.5, 0)):
        _, gi, gj = bpr_instance_loss(d, 0.0, lab)
        h = 1e-6
        num = (bpr_instance_loss(d + h, 0.0, lab)[0] - bpr_instance_loss(d - h, 0.0, lab)[0]) / (2 * h)
        assert gi == pytest.approx(num, rel=1e-6)
        assert gj == -gi


def test_batch_loss_cases(rng):
    b = np.array([1.0, 0.0, 0.5])
    assert batch_loss([b], [[(0, 1, 1)]]) == pytest.approx(bpr_instance_loss(1.0, 0.0, 1)[0], abs=1e-15)
    b2 = np.array([0.2, 0.9])
    a = network_loss(b, [(0, 1, 1), (2, 1, 0)])[0]
    c = network_loss(b2, [(1, 0, 1)])[0]
    assert batch_loss([b, b2], [[(0, 1, 1), (2, 1, 0)], [(1, 0, 1)]]) == pytest.approx((a + c) / 2, abs=1e-15)
    bhats, sets = [], []
    for _ in range(5):
        n = int(rng.integers(3, 10))
        bhats.append(rng.normal(size=n))
        sets.append(random_samples(rng, n, int(rng.integers(1, 8))))
    naive = sum(sum(bpr_instance_loss(bh[i], bh[j], l)[0] for i, j, l in s) / len(s)
                for bh, s in zip(bhats, sets)) / len(sets)
    assert abs(batch_loss(bhats, sets) - naive) < 1e-12
    with pytest.raises(InvalidArgument):
        batch_loss([], [])
    with pytest.raises(InvalidArgument):
        batch_loss([b], [[]])


def test_bias_gradient_is_sum_of_output_gradient(g0):
    p = init_params(2, 4, seed=5)
    samples = [(2, 0, 1), (1, 3, 0)]
    trace = forward(g0, p)
    _, d_bhat = network_loss(trace.bhat, samples)
    assert backward(g0, p, trace, samples).b[0] == pytest.approx(d_bhat.sum(), abs=1e-15)


def test_saturated_loss_gives_tiny_gradients(g0):
    p = init_params(2, 4, seed=5)
    p.b[0] = 0.0
    bhat = predict(g0, p)
    i, j = int(np.argmax(bhat)), int(np.argmin(bhat))
    p.W8 *= 1e4 / max(bhat[i] - bhat[j], 1e-9)
    _, grads = loss_and_grads(g0, p, [(i, j, 1)])
    assert max(np.abs(t).max() for _, t in grads.named_tensors()) < 1e-100


def grad_instances(count, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        g = random_hypernetwork(rng, 12, max_size=4)
        if g.num_nodes < 2 or g.num_edges == 0:
            continue
        p = init_params(2, 4, seed=int(rng.integers(10**6)), readout=str(rng.choice(["identity", "relu"])))
        out.append((g, p, random_samples(rng, g.num_nodes)))
    return out


def test_gradients_match_finite_differences():
    for g, p, samples in grad_instances(5, seed=7):
        report = grad_check(g, p, samples)
        assert report.ok, report.max_rel_error


def test_fault_injected_gradient_is_flagged(g0):
    p = init_params(2, 4, seed=11)
    samples = [(2, 0, 1), (2, 3, 1), (1, 3, 0)]
    _, grads = loss_and_grads(g0, p, samples)
    grads.layers[0]["W6"][1, 2] += 1.0
    report = grad_check(g0, p, samples, grads=grads)
    assert "layers.0.W6" in report.flagged
    assert not report.ok


def test_grad_check_at_kink_redraws():
    g = Hypernetwork(3, ((0, 1), (1, 2)))
    p = init_params(2, 3, seed=4)
    p.layers[0]["W7"][:, 0] = 0.0  # first hidden unit sits exactly on the kink
    report = grad_check(g, p, [(1, 0, 1), (2, 1, 0)])
    assert report.redraws >= 1
    assert report.ok, report.max_rel_error


def test_adam_zero_gradient_keeps_params():
    p = init_params(2, 3, seed=0)
    st = OptimizerState.for_params(p)
    q, st2 = adam_step(st, p, p.zeros_like())
    assert st2.step == 1
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(p.named_tensors(), q.named_tensors()))


def test_adam_first_step_closed_form():
    p = init_params(2, 3, seed=0)
    ones = ModelParams.from_named(p.widths, {k: np.ones_like(t) for k, t in p.named_tensors()}, p.readout)
    st = OptimizerState.for_params(p, lr=0.005)
    q, _ = adam_step(st, p, ones)
    for (_, a), (_, b) in zip(p.named_tensors(), q.named_tensors()):
        assert np.allclose(b - a, -0.005 / (1 + 1e-8), rtol=0, atol=1e-15)


def test_adam_deterministic_and_pure():
    rng = np.random.default_rng(0)
    p = init_params(2, 3, seed=0)
    stream = [ModelParams.from_named(p.widths, {k: rng.normal(size=t.shape) for k, t in p.named_tensors()})
              for _ in range(5)]

    def run():
        st, q = OptimizerState.for_params(p), p
        for g in stream:
            q, st = adam_step(st, q, g)
        return q

    a, b = run(), run()
    assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.named_tensors(), b.named_tensors()))
    assert np.array_equal(p.W8, init_params(2, 3, seed=0).W8)


def test_adam_rejects_non_finite():
    p = init_params(1, 2)
    g = p.zeros_like()
    g.W8[0, 0] = np.nan
    with pytest.raises(NumericError):
        adam_step(OptimizerState.for_params(p), p, g)


def test_clip_grad_norm():
    p = init_params(2, 3, seed=0)
    g = ModelParams.from_named(p.widths, {k: np.full_like(t, 2.0) for k, t in p.named_tensors()})
    clipped, norm = clip_grad_norm(g, 1.0)
    assert norm == pytest.approx(2.0 * math.sqrt(sum(t.size for _, t in p.named_tensors())))
    assert math.sqrt(sum((t ** 2).sum() for _, t in clipped.named_tensors())) == pytest.approx(1.0)
    same, _ = clip_grad_norm(g, None)
    assert same is g
    small, _ = clip_grad_norm(g, 1e9)
    assert small is g


def test_overfit_single_instance():
    g = Hypernetwork(7, ((0, 1, 2), (2, 3), (3, 4, 5), (5, 6)))
    # labels follow the exact betweenness (0, 0, 8, 9, 0, 5, 0)
    samples = [(2, 0, 1), (3, 1, 1), (5, 6, 1), (4, 3, 0), (2, 3, 0)]
    p = init_params(2, 8, seed=3)
    st = OptimizerState.for_params(p, lr=0.05)
    first = loss_and_grads(g, p, samples)[0]
    for _ in range(50):
        loss, grads = loss_and_grads(g, p, samples)
        p, st = adam_step(st, p, grads)
    assert loss_and_grads(g, p, samples)[0] < 0.1 * first


def test_checkpoint_round_trip(g0):
    p = init_params(3, 5, seed=9, readout="relu")
    blob = save_checkpoint(p, {"seed": 9, "config_hash": "abc"})
    q, meta = load_checkpoint(blob)
    assert meta["seed"] == 9 and meta["num_layers"] == 3 and meta["widths"] == [1, 5, 5, 5]
    assert q.readout == "relu"
    for (ka, a), (kb, b) in zip(p.named_tensors(), q.named_tensors()):
        assert ka == kb and a.tobytes() == b.tobytes()
    assert np.array_equal(predict(g0, p), predict(g0, q))


def test_checkpoint_corruption_detected():
    blob = save_checkpoint(init_params(2, 3), {})
    for cut in (0, 5, 20, len(blob) // 2, len(blob) - 1):
        with pytest.raises(FormatError):
            load_checkpoint(blob[:cut])
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0xFF
    with pytest.raises(FormatError):
        load_checkpoint(bytes(flipped))
    with pytest.raises(FormatError):
        load_checkpoint(b"NOTACKPT" + blob[8:])
