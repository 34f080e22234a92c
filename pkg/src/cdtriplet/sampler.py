"""Triplet construction with globally unique (anchor, positive, negative) constellations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import CapacityError, ConfigError, DatasetError

MODES = ("ours", "bench1", "bench2")

S_NODEFECT = "source/noDefect"
S_DEFECT = "source/defect"
T_NODEFECT = "target/noDefect"
UNION_NODEFECT = "source+target/noDefect"

# below this fraction of free constellations, enumerate instead of rejection sampling
_ENUMERATE_BELOW = 0.25


class Triplet(NamedTuple):
    a_idx: int
    p_idx: int
    n_idx: int


@dataclass(frozen=True)
class Pool:
    pool_id: str
    size: int


@dataclass(frozen=True)
class PoolHandles:
    anchors: Pool
    positives: Pool
    negatives: Pool
    # per-domain sizes of a union pool, used when balance_union is on
    union_parts: tuple = ()
    balance_union: bool = False

    def __post_init__(self):
        for role in (self.anchors, self.positives, self.negatives):
            if role.size < 1:
                raise ConfigError(f"pool {role.pool_id!r} is empty")

    @property
    def shared_anchor_positive(self) -> bool:
        """Anchor and positive index the same pool, so a_idx == p_idx is forbidden."""
        return self.anchors.pool_id == self.positives.pool_id

    @property
    def capacity(self) -> int:
        a, p, n = self.anchors.size, self.positives.size, self.negatives.size
        if self.shared_anchor_positive:
            return a * (a - 1) * n
        return a * p * n


def _draw_index(rng: np.random.Generator, pool: Pool, handles: PoolHandles, size: int) -> np.ndarray:
    if handles.balance_union and pool.pool_id == UNION_NODEFECT and len(handles.union_parts) == 2:
        n_s, n_t = handles.union_parts
        part = rng.integers(0, 2, size=size)
        within = np.where(part == 0, rng.integers(0, n_s, size=size), n_s + rng.integers(0, n_t, size=size))
        return within
    return rng.integers(0, pool.size, size=size)


def _valid(t: Triplet, handles: PoolHandles) -> bool:
    return not (handles.shared_anchor_positive and t.a_idx == t.p_idx)


def sample_epoch(pools: PoolHandles, n_triplets: int, seed: int, used: set | None = None):
    """Draw ``n_triplets`` new constellations, none of which is in ``used``.

    Returns ``(triplets, used)``; ``used`` is updated in place (a fresh set is
    created when None is passed).
    """
    if n_triplets < 1:
        raise ConfigError("n_triplets must be positive")
    used = set() if used is None else used
    remaining = pools.capacity - len(used)
    if n_triplets > remaining:
        raise CapacityError(
            f"requested {n_triplets} triplets but only {remaining} distinct constellations remain")

    rng = np.random.default_rng(seed)
    out: list[Triplet] = []
    if remaining and (remaining - n_triplets) / pools.capacity < _ENUMERATE_BELOW and not pools.balance_union:
        free = [t for t in _all_triplets(pools) if t not in used]
        pick = rng.choice(len(free), size=n_triplets, replace=False)
        out = [free[i] for i in pick]
        used.update(out)
        return out, used

    while len(out) < n_triplets:
        k = 2 * (n_triplets - len(out))
        a = _draw_index(rng, pools.anchors, pools, k)
        p = _draw_index(rng, pools.positives, pools, k)
        n = rng.integers(0, pools.negatives.size, size=k)
        for t in zip(a.tolist(), p.tolist(), n.tolist()):
            t = Triplet(*t)
            if t in used or not _valid(t, pools):
                continue
            used.add(t)
            out.append(t)
            if len(out) == n_triplets:
                break
    return out, used


def _all_triplets(pools: PoolHandles):
    for a in range(pools.anchors.size):
        for p in range(pools.positives.size):
            if pools.shared_anchor_positive and a == p:
                continue
            for n in range(pools.negatives.size):
                yield Triplet(a, p, n)


def benchmark_pools(mode: str, source, target=None, balance_union: bool = False) -> PoolHandles:
    """Training pools for one experiment mode.

    ours:   A = S noDefect, P = T noDefect, N = S defect
    bench1: A = P = S noDefect, N = S defect
    bench2: A = P = S noDefect + T noDefect (concatenated), N = S defect
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    s_nd = _count(source, "noDefect", "source")
    s_d = _count(source, "defect", "source")
    negatives = Pool(S_DEFECT, s_d)
    if mode == "bench1":
        anchors = Pool(S_NODEFECT, s_nd)
        return PoolHandles(anchors, anchors, negatives)
    t_nd = _count(target, "noDefect", "target")
    if mode == "ours":
        return PoolHandles(Pool(S_NODEFECT, s_nd), Pool(T_NODEFECT, t_nd), negatives)
    union = Pool(UNION_NODEFECT, s_nd + t_nd)
    return PoolHandles(union, union, negatives, union_parts=(s_nd, t_nd), balance_union=balance_union)


def _count(dataset, label: str, domain: str) -> int:
    if dataset is None:
        raise DatasetError(f"{domain} dataset is required for this mode")
    n = int(np.sum(dataset.labels == label))
    if n == 0:
        raise DatasetError(f"{domain} dataset has no {label!r} images")
    return n


def pool_images(pool_id: str, source, target=None) -> np.ndarray:
    """Image array backing a pool id, in the index order the sampler uses."""
    if pool_id == S_NODEFECT:
        return source.images[source.labels == "noDefect"]
    if pool_id == S_DEFECT:
        return source.images[source.labels == "defect"]
    if pool_id == T_NODEFECT:
        return target.images[target.labels == "noDefect"]
    if pool_id == UNION_NODEFECT:
        return np.concatenate([pool_images(S_NODEFECT, source), pool_images(T_NODEFECT, source, target)])
    raise DatasetError(f"unknown pool id {pool_id!r}")
