"""Exact equilibrium machinery for enumerable instances.

The measure on E_{xi,sigma} gives each configuration a weight
``exp(-2 alpha V)`` where ``V`` is the excess volume below the ceiling.
Weights are handled in the log domain.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .core_model import (
    BoundaryPair,
    DimensionError,
    InvalidConfigError,
    PolymerConfig,
    wedge,
)

DEFAULT_STATE_CAP = 10**6
DEFAULT_VOLUME_CAP = 5000
DOMINATION_EXACT_CAP = 1000


class CapExceeded(RuntimeError):
    """An instance is larger than the configured enumeration cap."""

    def __init__(self, what: str, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds cap {cap}")


def state_cap() -> int:
    return int(os.environ.get("PPFLIP_STATE_CAP", DEFAULT_STATE_CAP))


# --- enumeration -------------------------------------------------------------


def enumerate_paths(lower, upper) -> np.ndarray:
    """All +/-1 paths between two single paths, '+' steps explored first.

    Returns an ``(m, n+1)`` array in lexicographic order of the increment
    strings ('+' < '-').
    """
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    n = lower.size - 1
    h = int(upper[-1])
    out: list[list[int]] = []
    cur = [0] * (n + 1)

    def rec(x: int) -> None:
        if x == n:
            out.append(cur.copy())
            return
        for step in (1, -1):
            y = cur[x] + step
            if lower[x + 1] <= y <= upper[x + 1] and abs(h - y) <= n - x - 1:
                cur[x + 1] = y
                rec(x + 1)

    rec(0)
    return np.array(out, dtype=np.int64).reshape(len(out), n + 1)


def _dominance(paths: np.ndarray) -> np.ndarray:
    m = len(paths)
    dom = np.empty((m, m), dtype=bool)
    step = max(1, 2_000_000 // max(1, m * paths.shape[1]))
    for s in range(0, m, step):
        dom[s : s + step] = np.all(paths[s : s + step, None, :] >= paths[None, :, :], axis=2)
    return dom


def count_states(bounds: BoundaryPair, k: int) -> int:
    """|E_{xi,sigma}| by dynamic programming over the dominance relation."""
    paths = enumerate_paths(bounds.sigma, bounds.xi)
    return _count_from_paths(paths, k)


def _count_from_paths(paths: np.ndarray, k: int) -> int:
    dom = _dominance(paths)
    ways = [1] * len(paths)
    for _ in range(k - 1):
        # ways_j(p) = number of ways to place polymers j..k below p
        ways = [sum(w for w, ok in zip(ways, dom[p]) if ok) for p in range(len(paths))]
    return sum(ways)


def enumerate_states(bounds: BoundaryPair, k: int, cap: int | None = None) -> list[PolymerConfig]:
    """Every configuration of E_{xi,sigma} in canonical order.

    Canonical order is lexicographic on the concatenated increment strings,
    top polymer first, with '+' before '-'.
    """
    return [PolymerConfig(H, h=bounds.h) for H in enumerate_state_array(bounds, k, cap)]


def enumerate_state_array(bounds: BoundaryPair, k: int, cap: int | None = None) -> np.ndarray:
    """Same as :func:`enumerate_states` but as an ``(S, k, n+1)`` array."""
    if k < 1:
        raise DimensionError("k must be >= 1")
    cap = state_cap() if cap is None else cap
    paths = enumerate_paths(bounds.sigma, bounds.xi)
    if k == 1:
        if len(paths) > cap:
            raise CapExceeded("state count", len(paths), cap)
        return paths[:, None, :].copy()
    total = _count_from_paths(paths, k)
    if total > cap:
        raise CapExceeded("state count", total, cap)
    dom = _dominance(paths)
    below = [np.flatnonzero(dom[p]) for p in range(len(paths))]
    idx: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...]) -> None:
        if len(prefix) == k:
            idx.append(prefix)
            return
        for q in below[prefix[-1]]:
            rec(prefix + (int(q),))

    for p in range(len(paths)):
        rec((p,))
    return paths[np.array(idx, dtype=np.int64)]


# --- exact measure -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExactMeasure:
    """Enumerated state space with its equilibrium weights.

    ``heights`` is the ``(S, k, n+1)`` stack of states; ``volumes`` their
    excess volumes; ``log_weights = -2 alpha V``.
    """

    bounds: BoundaryPair
    k: int
    alpha: float
    heights: np.ndarray
    volumes: np.ndarray
    log_weights: np.ndarray
    log_Z: float

    @property
    def size(self) -> int:
        return len(self.heights)

    @property
    def states(self) -> list[PolymerConfig]:
        return [PolymerConfig(H, h=self.bounds.h) for H in self.heights]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def Z_hat(self) -> float:
        return math.exp(self.log_Z)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_Z)

    def index_of(self, config) -> int:
        H = config.heights if isinstance(config, PolymerConfig) else np.asarray(config)
        return self._index[np.ascontiguousarray(H, dtype=np.int64).tobytes()]

    @property
    def _index(self) -> dict:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {H.tobytes(): s for s, H in enumerate(self.heights)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def indices_of(self, heights: np.ndarray) -> np.ndarray:
        """State indices for a stack of height arrays."""
        heights = np.ascontiguousarray(heights, dtype=np.int64)
        idx = self._index
        return np.array([idx[h.tobytes()] for h in heights], dtype=np.int64)

    def expect(self, f) -> float:
        return float(np.dot(self.probs, f))


def exact_measure(bounds: BoundaryPair, k: int, alpha: float, cap: int | None = None) -> ExactMeasure:
    if not alpha > 0:
        raise ValueError(f"bias alpha must be positive, got {alpha}")
    H = enumerate_state_array(bounds, k, cap)
    vol = ((bounds.xi[None, None, 1:-1] - H[:, :, 1:-1]).sum(axis=(1, 2)) // 2).astype(np.int64)
    logw = -2.0 * alpha * vol.astype(float)
    return ExactMeasure(bounds, k, float(alpha), H, vol, logw, float(logsumexp(logw)))


def height_sum_log_weights(measure: ExactMeasure) -> np.ndarray:
    """Unconditioned weights ``alpha * sum of all heights``, normalised on the support."""
    s = measure.heights.sum(axis=(1, 2)).astype(float) * measure.alpha
    return s - logsumexp(s)


# --- plane partitions by volume ----------------------------------------------


@dataclass(frozen=True)
class VolumeCountTable:
    max_v: int
    counts: tuple[int, ...]

    def __getitem__(self, v: int) -> int:
        return self.counts[v]


@lru_cache(maxsize=None)
def _sigma2(j: int) -> int:
    total = 0
    d = 1
    while d * d <= j:
        if j % d == 0:
            total += d * d
            e = j // d
            if e != d:
                total += e * e
        d += 1
    return total


_PP_COUNTS: list[int] = [1]


def _plane_partition_counts(max_v: int) -> tuple[int, ...]:
    # Euler transform of prod_m (1 - q^m)^(-m): v N(v) = sum_j sigma_2(j) N(v - j)
    N = _PP_COUNTS
    for v in range(len(N), max_v + 1):
        N.append(sum(_sigma2(j) * N[v - j] for j in range(1, v + 1)) // v)
    return tuple(N[: max_v + 1])


def plane_partitions_bruteforce(v: int) -> int:
    """Count plane partitions of volume ``v`` by listing stacks of rows.

    A plane partition is a sequence of ordinary partitions (rows), each
    dominated entrywise by the previous one.
    """

    def rows(remaining: int, bound: tuple[int, ...]):
        # partitions of 'remaining' with parts dominated entrywise by 'bound'
        def rec(pos: int, left: int, maxpart: int, acc: tuple[int, ...]):
            if left == 0:
                yield acc
                return
            if pos >= len(bound):
                return
            for p in range(min(maxpart, bound[pos], left), 0, -1):
                yield from rec(pos + 1, left - p, p, acc + (p,))

        yield from rec(0, remaining, remaining, ())

    def stacks(left: int, bound: tuple[int, ...]) -> int:
        if left == 0:
            return 1
        total = 0
        for size in range(1, left + 1):
            for row in rows(size, bound):
                total += stacks(left - size, row)
        return total

    return stacks(v, (v,) * v) if v else 1


def count_by_volume(max_v: int, cap: int = DEFAULT_VOLUME_CAP) -> VolumeCountTable:
    """Exact counts of (unboxed) plane partitions of each volume 0..max_v."""
    if max_v < 0:
        raise ValueError("max_v must be non-negative")
    if max_v > cap:
        raise CapExceeded("max volume", max_v, cap)
    counts = _plane_partition_counts(max_v)
    for v in range(min(max_v, 10) + 1):
        if plane_partitions_bruteforce(v) != counts[v]:
            raise ArithmeticError(f"generating-function count disagrees with enumeration at v={v}")
    return VolumeCountTable(max_v, counts)


def _log_N(v: int) -> float:
    if v >= len(_PP_COUNTS):
        _plane_partition_counts(v)
    return math.log(_PP_COUNTS[v])


def volume_tail_bound(alpha: float, i: int) -> float:
    """sum_{v>=i} e^{-2 alpha v} N(v) / sum_{v>=0} e^{-2 alpha v} N(v)."""
    if i <= 0:
        return 1.0
    q = -2.0 * alpha
    # summation range: stop once terms are negligible beyond the mode
    terms = []
    v = 0
    total_log = -math.inf
    while True:
        t = q * v + (_log_N(v) if v else 0.0)
        terms.append(t)
        total_log = np.logaddexp(total_log, t)
        if v > 20 and t < total_log - 60 and t < terms[-2]:
            break
        v += 1
        if v > DEFAULT_VOLUME_CAP:
            raise CapExceeded("volume series length", v, DEFAULT_VOLUME_CAP)
    if i >= len(terms):
        return 0.0
    return float(np.exp(logsumexp(terms[i:]) - total_log))


# --- derived exact probabilities ---------------------------------------------


def tail_excess_volume(measure: ExactMeasure) -> list[tuple[int, float]]:
    """Exact ``(i, P(V >= i))`` for i = 0..max volume, ceiling must be the wedge."""
    b = measure.bounds
    if b.h != 0 or not np.array_equal(b.xi, wedge(b.n, 0)):
        raise InvalidConfigError("tail_excess_volume needs h=0 and the wedge ceiling")
    p = measure.probs
    vmax = int(measure.volumes.max())
    mass = np.bincount(measure.volumes, weights=p, minlength=vmax + 1)
    tail = np.cumsum(mass[::-1])[::-1]
    return [(i, float(min(1.0, tail[i]))) for i in range(vmax + 1)]


def sticking_probability(measure: ExactMeasure, j: int, x: int) -> float:
    """P(polymer j is detached from the ceiling at site x)."""
    if not 1 <= j <= measure.k or not 0 <= x <= measure.bounds.n:
        raise IndexError(f"(j={j}, x={x}) out of range")
    off = measure.heights[:, j - 1, x] != measure.bounds.xi[x]
    return float(measure.probs[off].sum())


def detachment_run_probability(measure: ExactMeasure, a: int, b: int) -> float:
    """P(the bottom polymer differs from the ceiling at every site of [a, b])."""
    n = measure.bounds.n
    if not (0 < a <= b < n):
        raise ValueError(f"window [{a}, {b}] must satisfy 0 < a <= b < n={n}")
    seg = measure.heights[:, -1, a : b + 1] != measure.bounds.xi[None, a : b + 1]
    return float(measure.probs[np.all(seg, axis=1)].sum())


# --- stochastic domination ---------------------------------------------------


@dataclass(frozen=True)
class DominationResult:
    """Outcome of a domination check; ``exact`` is False for sampled checks."""

    dominates: bool
    exact: bool
    max_violation: float = 0.0

    @property
    def verdict(self) -> str:
        if not self.dominates:
            return "false"
        return "true" if self.exact else "not falsified"

    def __bool__(self) -> bool:
        return self.dominates


def _pair_order(HA: np.ndarray, HB: np.ndarray) -> np.ndarray:
    a = HA.reshape(len(HA), -1)
    b = HB.reshape(len(HB), -1)
    return np.all(a[:, None, :] >= b[None, :, :], axis=2)


def check_stochastic_domination(
    mA: ExactMeasure,
    mB: ExactMeasure,
    tol: float = 1e-9,
    exact_cap: int = DOMINATION_EXACT_CAP,
    n_samples: int = 2000,
    seed: int = 0,
) -> DominationResult:
    """Does ``mA`` stochastically dominate ``mB`` for the pointwise order?

    Up to ``exact_cap`` states this is decided exactly by Strassen's
    theorem: domination holds iff a coupling supported on ordered pairs
    exists, i.e. a max-flow from ``mA`` to ``mB`` along ordered pairs
    saturates.  That is equivalent to ``mA(U) >= mB(U)`` for every up-set
    ``U``.  Larger instances fall back to testing random up-sets, which can
    only falsify.
    """
    if (mA.k, mA.bounds.n, mA.bounds.h) != (mB.k, mB.bounds.n, mB.bounds.h):
        raise DimensionError("measures live on different configuration spaces")
    if np.any(mA.bounds.xi < mB.bounds.xi) or np.any(mA.bounds.sigma < mB.bounds.sigma):
        raise InvalidConfigError("boundaries must be ordered: xi_A >= xi_B and sigma_A >= sigma_B")
    pA, pB = mA.probs, mB.probs
    if max(mA.size, mB.size) <= exact_cap:
        return _domination_flow(mA.heights, pA, mB.heights, pB, tol)
    rng = np.random.default_rng(seed)
    a = mA.heights.reshape(mA.size, -1)
    b = mB.heights.reshape(mB.size, -1)
    worst = 0.0
    for _ in range(n_samples):
        # up-set generated by a few random seeds, tested on both supports
        gens = a[rng.choice(mA.size, size=rng.integers(1, 4))] if rng.random() < 0.5 else \
            b[rng.choice(mB.size, size=rng.integers(1, 4))]
        inA = np.any(np.all(a[:, None, :] >= gens[None], axis=2), axis=1)
        inB = np.any(np.all(b[:, None, :] >= gens[None], axis=2), axis=1)
        worst = max(worst, pB[inB].sum() - pA[inA].sum())
    return DominationResult(worst <= tol, exact=False, max_violation=float(worst))


def _domination_flow(HA, pA, HB, pB, tol) -> DominationResult:
    import networkx as nx

    scale = 2**50
    capA = np.floor(pA * scale).astype(np.int64)
    capB = np.floor(pB * scale).astype(np.int64)
    order = _pair_order(HA, HB)
    G = nx.DiGraph()
    for i, c in enumerate(capA):
        if c:
            G.add_edge("s", ("a", i), capacity=int(c))
    for j, c in enumerate(capB):
        if c:
            G.add_edge(("b", j), "t", capacity=int(c))
    ii, jj = np.nonzero(order)
    for i, j in zip(ii.tolist(), jj.tolist()):
        if capA[i] and capB[j]:
            G.add_edge(("a", i), ("b", j))
    if "s" not in G or "t" not in G:
        return DominationResult(False, exact=True, max_violation=1.0)
    value = nx.maximum_flow_value(G, "s", "t")
    # rounding loses at most one unit per state on each side
    slack = (len(pA) + len(pB)) / scale
    deficit = capB.sum() / scale - value / scale
    return DominationResult(bool(deficit <= tol + slack), exact=True, max_violation=float(max(deficit, 0.0)))
