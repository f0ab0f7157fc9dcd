from dataclasses import replace

import numpy as np
import pytest

from hnd.errors import ConfigurationError, DegenerateNetworkError, InvalidArgument
from hnd.generator import HyperFFParams, generate
from hnd.hypergraph import Hypernetwork, two_section
from hnd.model import forward, init_params, network_loss, save_checkpoint
from hnd.training import (RankingSampleSet, TrainConfig, build_samples, count_unequal_pairs, evaluate,
                          exact_betweenness, make_sample_sets, pairwise_accuracy, train)

from test_centrality import brute_betweenness


def test_g0_labels(g0):
    b = exact_betweenness(g0)
    assert b.tolist() == [0, 0, 2, 0]
    s = build_samples(g0, b, r=0.75, seed=0)
    assert len(s) == 3
    for i, j, lab in s:
        assert lab == int(b[i] > b[j])
        assert 2 in (i, j)


def test_equal_pairs_never_sampled(g0):
    b = exact_betweenness(g0)
    for seed in range(20):
        for i, j, _ in build_samples(g0, b, r=0.5, seed=seed):
            assert b[i] != b[j]


def test_sample_count_and_uniqueness():
    g = generate(HyperFFParams(100, 0.3, 0.3, seed=4))
    s = build_samples(g, exact_betweenness(g), r=0.9, seed=1)
    assert len(s) == 90
    keys = {(min(i, j), max(i, j)) for i, j, _ in s}
    assert len(keys) == 90


def test_labels_audit_against_brute_force():
    for seed in range(5):
        g = generate(HyperFFParams(25, 0.3, 0.3, seed=seed))
        b = brute_betweenness(two_section(g))
        for i, j, lab in build_samples(g, exact_betweenness(g), 0.9, seed):
            assert lab == int(b[i] > b[j])


def test_degenerate_network_raises():
    clique = Hypernetwork(5, ((0, 1, 2, 3, 4),))
    with pytest.raises(DegenerateNetworkError):
        build_samples(clique, exact_betweenness(clique), 0.9)
    with pytest.raises(InvalidArgument):
        build_samples(clique, np.zeros(3), 0.9)


def test_count_unequal_pairs():
    assert count_unequal_pairs(np.array([0, 0, 2, 0])) == 3
    assert count_unequal_pairs(np.array([1.0, 1.0 + 1e-13, 3.0])) == 2
    assert count_unequal_pairs(np.arange(5.0)) == 10


def tiny_config(**kw):
    base = TrainConfig(networks=3, n_range=(20, 30), val_networks=2, iterations=3, patience=5, layers=2, dim=4,
                       seed=7)
    return replace(base, **kw)


def test_smoke_single_network():
    cfg = tiny_config(networks=1, iterations=1, val_networks=1)
    init = init_params(cfg.layers, cfg.dim, cfg.seed)
    params, log = train(cfg, init=init.copy())
    assert any(not np.array_equal(a, b) for (_, a), (_, b) in zip(init.named_tensors(), params.named_tensors()))
    (tr,) = make_sample_sets(cfg.batch_spec(0), cfg.pairs_ratio)
    after = network_loss(forward(tr.network, params).bhat, tr)[0]
    assert after < log.rows[0].train_loss


def test_training_deterministic():
    a_params, a_log = train(tiny_config())
    b_params, b_log = train(tiny_config())
    assert a_log.deterministic_view() == b_log.deterministic_view()
    assert save_checkpoint(a_params) == save_checkpoint(b_params)


def test_early_stopping_returns_best():
    cfg = tiny_config(iterations=12, patience=2, networks=4)
    params, log = train(cfg)
    best = log.best_val_loss
    assert all(best <= r.val_loss for r in log.rows if r.iteration >= log.best_iteration)
    if log.stopped_early:
        assert log.rows[-1].iteration - log.best_iteration == cfg.patience
    val = make_sample_sets(cfg.batch_spec(1), cfg.pairs_ratio)
    assert evaluate(params, val)[0] == pytest.approx(best, abs=1e-12)


def test_train_and_validation_disjoint():
    cfg = tiny_config()
    tr = make_sample_sets(cfg.batch_spec(0), 0.9)
    va = make_sample_sets(cfg.batch_spec(1), 0.9)
    assert all(t.network != v.network for t in tr for v in va)


def test_config_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        train(tiny_config(pairs_ratio=0))
    with pytest.raises(ConfigurationError):
        tiny_config(patience=0).validate()
    with pytest.raises(ConfigurationError):
        tiny_config(n_range=(30, 20)).validate()
    with pytest.raises(ConfigurationError):
        tiny_config(clip_norm=-1.0).validate()
    cfg = tiny_config()
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.hash() == TrainConfig.from_dict(cfg.to_dict()).hash()
    assert cfg.hash() != tiny_config(seed=8).hash()


def test_all_degenerate_is_configuration_error(monkeypatch):
    import hnd.training as tr

    def always_degenerate(*a, **k):
        raise DegenerateNetworkError("forced")

    monkeypatch.setattr(tr, "build_samples", always_degenerate)
    with pytest.raises(ConfigurationError):
        train(tiny_config())


def test_accuracy_cases(g0):
    b = exact_betweenness(g0)
    s = build_samples(g0, b, 0.75, 0)
    p = init_params(1, 2)
    for _, t in p.named_tensors():
        t[...] = 0.0
    assert pairwise_accuracy(p, [s]) == 0.0
    # an all-positive path through the hyperedge branch sums hyperedge features per node,
    # so node 3 (id 2), the only node in two hyperedges, ranks first
    p.layers[0]["W5"][:] = 0.0
    p.layers[0]["W2"][:] = 1.0
    p.layers[0]["W4"][:] = 1.0
    p.layers[0]["W6"][:] = 1.0
    p.layers[0]["W7"][:] = 1.0
    p.W8[:] = 1.0
    assert pairwise_accuracy(p, [s]) == 1.0
    with pytest.raises(InvalidArgument):
        pairwise_accuracy(p, [])


def test_random_params_near_chance():
    rng = np.random.default_rng(3)
    sets = []
    while sum(len(s) for s in sets) < 1000:
        g = generate(HyperFFParams(60, 0.3, 0.3, seed=int(rng.integers(10**9))))
        sets.append(RankingSampleSet(g, *_random_pairs(rng, g.num_nodes)))
    accs = [pairwise_accuracy(init_params(2, 4, seed=k), sets) for k in range(5)]
    # labels are random, so any fixed scorer sits near one half
    assert all(abs(a - 0.5) < 0.1 for a in accs)


def _random_pairs(rng, n):
    i = rng.integers(n, size=40)
    j = (i + rng.integers(1, n, size=40)) % n
    return i, j, rng.integers(2, size=40)
