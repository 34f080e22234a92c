import numpy as np
import pytest

from cdtriplet.data import Dataset
from cdtriplet.exceptions import CapacityError, DatasetError
from cdtriplet.sampler import (S_NODEFECT, T_NODEFECT, UNION_NODEFECT, Pool, PoolHandles, Triplet,
                               benchmark_pools, pool_images, sample_epoch)


def pools(a, p, n, shared=False):
    anchors = Pool("A", a)
    return PoolHandles(anchors, anchors if shared else Pool("P", p), Pool("N", n))


def fake_domain(domain, n_def, n_nodef):
    n = n_def + n_nodef
    images = np.arange(n, dtype=np.float32).reshape(n, 1, 1, 1) + (0 if domain == "source" else 1000)
    return Dataset(images, ["defect"] * n_def + ["noDefect"] * n_nodef, [domain] * n)


def test_single_constellation():
    out, used = sample_epoch(pools(1, 1, 1), 1, seed=0, used=set())
    assert out == [Triplet(0, 0, 0)] and used == {Triplet(0, 0, 0)}


def test_exhausted_single_constellation():
    with pytest.raises(CapacityError, match="0 distinct"):
        sample_epoch(pools(1, 1, 1), 1, seed=0, used={Triplet(0, 0, 0)})


def test_five_epochs_all_distinct():
    handles = pools(10, 10, 10)
    used: set = set()
    emitted = []
    for epoch in range(5):
        out, used = sample_epoch(handles, 100, seed=epoch, used=used)
        emitted += out
    assert len(emitted) == 500
    assert len(set(emitted)) == 500
    assert all(0 <= t.a_idx < 10 and 0 <= t.p_idx < 10 and 0 <= t.n_idx < 10 for t in emitted)


def test_deterministic():
    a, _ = sample_epoch(pools(5, 6, 7), 50, seed=3, used=set())
    b, _ = sample_epoch(pools(5, 6, 7), 50, seed=3, used=set())
    assert a == b


def test_exhausts_capacity_exactly():
    handles = pools(3, 2, 2)
    out, used = sample_epoch(handles, 12, seed=1, used=set())
    assert sorted(out) == sorted(Triplet(a, p, n) for a in range(3) for p in range(2) for n in range(2))
    with pytest.raises(CapacityError):
        sample_epoch(handles, 1, seed=2, used=used)


def test_shared_pool_forbids_same_anchor_and_positive():
    handles = pools(4, 4, 3, shared=True)
    assert handles.capacity == 4 * 3 * 3
    out, _ = sample_epoch(handles, handles.capacity, seed=0, used=set())
    assert len(set(out)) == handles.capacity
    assert all(t.a_idx != t.p_idx for t in out)


def test_mode_pools():
    src = fake_domain("source", 4, 6)
    tgt = fake_domain("target", 0, 5)
    ours = benchmark_pools("ours", src, tgt)
    assert ours.positives.pool_id == T_NODEFECT and ours.positives.size == 5
    assert ours.anchors.pool_id == S_NODEFECT and ours.negatives.size == 4

    b1 = benchmark_pools("bench1", src)
    assert b1.anchors == b1.positives and b1.shared_anchor_positive

    b2 = benchmark_pools("bench2", src, tgt)
    assert b2.anchors.pool_id == UNION_NODEFECT and b2.anchors.size == 6 + 5
    assert b2.shared_anchor_positive
    union = pool_images(UNION_NODEFECT, src, tgt)
    assert len(union) == 11 and union[6, 0, 0, 0] >= 1000


def test_bench_modes_never_pair_a_sample_with_itself():
    src = fake_domain("source", 5, 6)
    tgt = fake_domain("target", 0, 4)
    for mode in ("bench1", "bench2"):
        handles = benchmark_pools(mode, src, tgt)
        out, _ = sample_epoch(handles, 100, seed=9, used=set())
        assert all(t.a_idx != t.p_idx for t in out)


def test_balanced_union_draws_both_domains():
    src = fake_domain("source", 5, 90)
    tgt = fake_domain("target", 0, 10)
    handles = benchmark_pools("bench2", src, tgt, balance_union=True)
    out, _ = sample_epoch(handles, 400, seed=0, used=set())
    frac_target = np.mean([t.a_idx >= 90 for t in out])
    assert 0.4 < frac_target < 0.6


def test_missing_class_is_dataset_error():
    src = fake_domain("source", 0, 5)
    with pytest.raises(DatasetError):
        benchmark_pools("ours", src, fake_domain("target", 0, 5))
    with pytest.raises(DatasetError):
        benchmark_pools("ours", fake_domain("source", 3, 3), None)
