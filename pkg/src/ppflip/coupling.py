"""Grand monotone coupling of the single-flip chain and what it buys.

All coupled members see the same clock rings, sites and uniforms, and the
threshold heat-bath rule keeps ordered members ordered.  On top of that:
coalescence-based gap estimates, exact sampling by coupling from the past,
hitting times of the maximal configuration and the distances used in the
block contraction arguments.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import _kernels
from .core_model import (
    BoundaryPair,
    DimensionError,
    InvalidConfigError,
    PolymerConfig,
    dominates,
    maximal_config,
    minimal_config,
    to_particles,
    validate,
)
from .equilibrium import CapExceeded, enumerate_state_array
from .glauber import DynamicsParams, p_high
from .seeding import replica_seed

CFTP_EVENT_CAP = 2**30
PATH_METRIC_CAP = 1000


# --- coupled evolution -------------------------------------------------------


@dataclass
class CoupledBundle:
    """Configurations (each with its own boundaries) driven by one random stream."""

    members: list[tuple[PolymerConfig, BoundaryPair]]
    alpha: float
    seed: int = 0
    events: int = 0
    violations: int = 0

    def __post_init__(self):
        if not self.members:
            raise ValueError("a bundle needs at least one member")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        dims = {(c.k, c.n, c.h) for c, _ in self.members}
        if len(dims) != 1 or any(b.n != c.n or b.h != c.h for c, b in self.members):
            raise DimensionError("bundle members must share (k, n, h)")
        for c, b in self.members:
            if not validate(c, b):
                raise InvalidConfigError("member configuration violates its boundaries")

    def ordered_pairs(self) -> np.ndarray:
        """(upper, lower) index pairs ordered in both configuration and boundaries."""
        out = []
        for a, b in itertools.permutations(range(len(self.members)), 2):
            (ca, ba), (cb, bb) = self.members[a], self.members[b]
            if (dominates(ca, cb) and np.all(ba.xi >= bb.xi) and np.all(ba.sigma >= bb.sigma)
                    and (ca != cb or a < b)):
                out.append((a, b))
        return np.array(out, dtype=np.int64).reshape(-1, 2)


def evolve_coupled(bundle: CoupledBundle, horizon: float, max_events: int | None = None) -> CoupledBundle:
    """Run the bundle for ``horizon`` time units (or ``max_events`` events).

    Order between members that start ordered is checked at the updated site
    after every event; the count is carried in ``violations``.
    """
    Hs = np.stack([np.array(c.heights, dtype=np.int64) for c, _ in bundle.members])
    xis = np.stack([b.xi for _, b in bundle.members])
    sigmas = np.stack([b.sigma for _, b in bundle.members])
    cap = np.iinfo(np.int64).max if max_events is None else int(max_events)
    horizon = math.inf if horizon is None else float(horizon)
    ev, _, bad = _kernels.evolve_coupled(
        Hs, xis, sigmas, p_high(bundle.alpha), horizon, cap, replica_seed(bundle.seed, bundle.events),
        bundle.ordered_pairs(),
    )
    members = [(PolymerConfig(H, h=c.h), b) for H, (c, b) in zip(Hs, bundle.members)]
    return CoupledBundle(members, bundle.alpha, bundle.seed, bundle.events + int(ev), bundle.violations + int(bad))


def monotone_update_exhaustive(bounds_hi: BoundaryPair, bounds_lo: BoundaryPair, k: int) -> int:
    """Count order violations of the one-site update map over every case.

    Every ordered pair (a >= b) of configurations, every site, and one
    uniform from each side of the threshold.  Returns the number of
    violations (0 when the update map is monotone).
    """
    A = enumerate_state_array(bounds_hi, k)
    B = enumerate_state_array(bounds_lo, k)
    p = 0.6
    bad = 0
    n = bounds_hi.n
    for Ha in A:
        above = np.all((Ha[None] >= B).reshape(len(B), -1), axis=1)
        for Hb in B[above]:
            for i in range(k):
                for x in range(1, n):
                    for u in (0.3, 0.9):
                        a, b = Ha.copy(), Hb.copy()
                        _kernels.heat_bath_update(a, i, x, u, p, bounds_hi.xi, bounds_hi.sigma)
                        _kernels.heat_bath_update(b, i, x, u, p, bounds_lo.xi, bounds_lo.sigma)
                        bad += int(np.any(a < b))
    return bad


# --- distances ----------------------------------------------------------------

DISTANCE_KINDS = ("particle_count", "particle_weighted", "height_l1", "height_weighted")


@dataclass(frozen=True)
class DistanceSpec:
    """``particle_*``: sum over labels i, polymers j of exp(-decay*i)[x_i != y_i].

    ``height_*``: sum over polymers j of exp(-decay*j) * sum_x |diff| / 2.
    The ``*_count`` / ``*_l1`` kinds force ``decay`` to 0.
    """

    kind: str
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}; expected one of {DISTANCE_KINDS}")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")
        if self.kind in ("particle_count", "height_l1") and self.decay != 0:
            raise ValueError(f"{self.kind} has no decay parameter")

    @property
    def particle(self) -> bool:
        return self.kind.startswith("particle")


def _as_heights(c) -> np.ndarray:
    return np.asarray(c.heights if isinstance(c, PolymerConfig) else c)


def distance(spec: DistanceSpec, a, b) -> float:
    Ha, Hb = _as_heights(a), _as_heights(b)
    if Ha.shape != Hb.shape:
        raise DimensionError(f"shapes differ: {Ha.shape} vs {Hb.shape}")
    k = Ha.shape[0]
    if spec.particle:
        if Ha[0, -1] != Hb[0, -1]:
            raise DimensionError("particle distances need equal particle numbers")
        pa = to_particles(PolymerConfig(Ha)).positions
        pb = to_particles(PolymerConfig(Hb)).positions
        w = np.exp(-spec.decay * np.arange(1, pa.shape[1] + 1))
        return float(((pa != pb) * w[None, :]).sum())
    w = np.exp(-spec.decay * np.arange(1, k + 1))
    return float((np.abs(Ha - Hb).sum(axis=1) / 2 * w).sum())


def _unit_distance(spec: DistanceSpec) -> DistanceSpec:
    return DistanceSpec("particle_count" if spec.particle else "height_l1")


def path_metric_table(spec: DistanceSpec, bounds: BoundaryPair, k: int, cap: int = PATH_METRIC_CAP):
    """Enumerated states, direct distances and graph shortest paths.

    Edges join states at unit distance (one particle moved, resp. one
    height flipped) and carry the weighted distance of their endpoints.
    """
    H = enumerate_state_array(bounds, k, cap=cap)
    S = len(H)
    unit = _unit_distance(spec)
    direct = np.zeros((S, S))
    rows, cols, vals = [], [], []
    for a in range(S):
        for b in range(a + 1, S):
            d = distance(spec, H[a], H[b])
            direct[a, b] = direct[b, a] = d
            if distance(unit, H[a], H[b]) == 1:
                rows += [a, b]
                cols += [b, a]
                vals += [d, d]
    graph = csr_matrix((vals, (rows, cols)), shape=(S, S))
    return H, direct, dijkstra(graph, directed=False)


def path_metric_check(spec: DistanceSpec, a: PolymerConfig, b: PolymerConfig, bounds: BoundaryPair,
                      cap: int = PATH_METRIC_CAP, tol: float = 1e-12) -> bool:
    """Is distance(a, b) the cheapest unit-step path between them inside E?"""
    if a.k != b.k:
        raise DimensionError("configurations differ in k")
    H, direct, short = path_metric_table(spec, bounds, a.k, cap)
    index = {h.tobytes(): i for i, h in enumerate(H)}
    try:
        i, j = index[np.asarray(a.heights).tobytes()], index[np.asarray(b.heights).tobytes()]
    except KeyError:
        raise InvalidConfigError("configuration outside the state space") from None
    return bool(abs(direct[i, j] - short[i, j]) <= tol * max(1.0, direct[i, j]))


# --- coalescence and gap estimate --------------------------------------------


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if successes == 0 else stats.beta.ppf(a / 2, successes, trials - successes + 1)
    hi = 1.0 if successes == trials else stats.beta.ppf(1 - a / 2, successes + 1, trials - successes)
    return float(lo), float(hi)


@dataclass(frozen=True)
class GapEstimate:
    """Decay rate of P(max and min starts not coalesced).

    ``rate`` is the slope of -log P(T > t) between ``t1`` and ``t2``.  The
    interval comes from the binomial law of survivors at ``t2`` among those
    alive at ``t1``.  ``censored`` means no run survived to ``t2`` and the
    rate falls back to the single-time value at ``t1``.
    """

    rate: float
    ci_low: float
    ci_high: float
    t1: float
    t2: float
    alive_t1: int
    alive_t2: int
    replicas: int
    censored: bool
    statistical: bool = True


def coalescence_samples(params: DynamicsParams, replicas: int, horizon: float | None = None) -> np.ndarray:
    top = maximal_config(params.bounds, params.k).heights
    bot = minimal_config(params.bounds, params.k).heights
    horizon = params.horizon if horizon is None else horizon
    return _kernels.coalescence_times(
        np.array(top), np.array(bot), params.bounds.xi, params.bounds.sigma, p_high(params.alpha),
        float(horizon), int(replicas), replica_seed(params.seed, 0),
    )


def gap_lower_bound_coupling(params: DynamicsParams, horizon: float, replicas: int, level: float = 0.95) -> GapEstimate:
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    T = coalescence_samples(params, replicas, horizon)
    t1, t2 = horizon / 2, horizon
    n1 = int(np.sum(T > t1))
    n2 = int(np.sum(T > t2))
    if n1 == 0:
        lo, hi = clopper_pearson(0, replicas, level)
        return GapEstimate(math.inf, -math.log(hi) / t1, math.inf, t1, t2, 0, 0, replicas, True)
    if n2 == 0:
        p = n1 / replicas
        lo, hi = clopper_pearson(n1, replicas, level)
        return GapEstimate(-math.log(p) / t1, -math.log(hi) / t1, -math.log(lo) / t1 if lo > 0 else math.inf,
                           t1, t2, n1, 0, replicas, True)
    dt = t2 - t1
    lo, hi = clopper_pearson(n2, n1, level)
    return GapEstimate(-math.log(n2 / n1) / dt, -math.log(hi) / dt, -math.log(lo) / dt if lo > 0 else math.inf,
                       t1, t2, n1, n2, replicas, False)


# --- exact sampling ----------------------------------------------------------


class CftpCapExceeded(CapExceeded):
    pass


def cftp_samples(params: DynamicsParams, n_samples: int, max_events: int = CFTP_EVENT_CAP) -> np.ndarray:
    """``n_samples`` exact draws from the equilibrium measure, as height arrays.

    The backward search runs on the embedded jump chain (uniform site per
    step), whose stationary law is the same as the continuous-time chain's.
    """
    out, used = _kernels.cftp_batch(
        int(params.k), params.bounds.xi, params.bounds.sigma, p_high(params.alpha),
        int(n_samples), replica_seed(params.seed, 0), int(max_events),
    )
    if np.any(used < 0):
        raise CftpCapExceeded("coupling-from-the-past look-back", int(max_events) * 2, int(max_events))
    return out


def cftp_sample(params: DynamicsParams, max_events: int = CFTP_EVENT_CAP) -> PolymerConfig:
    H = cftp_samples(params, 1, max_events)[0]
    return PolymerConfig(H, h=params.bounds.h)


def empirical_distribution(heights: np.ndarray, measure) -> np.ndarray:
    """Histogram of sampled height arrays over ``measure``'s enumeration."""
    idx = measure.indices_of(heights)
    return np.bincount(idx, minlength=measure.size) / len(idx)


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# --- hitting times -----------------------------------------------------------


@dataclass(frozen=True)
class HittingResult:
    time: float
    censored: bool


def hitting_times_max(params: DynamicsParams, replicas: int, init: PolymerConfig | None = None,
                      horizon: float | None = None) -> np.ndarray:
    """First-hitting times of the maximal configuration, one per replica.

    Replica ``r`` uses its own seed split from ``params.seed``; censored
    replicas are ``inf``.
    """
    init = minimal_config(params.bounds, params.k) if init is None else init
    if not validate(init, params.bounds):
        raise InvalidConfigError("initial configuration is not in E_{xi,sigma}")
    horizon = params.horizon if horizon is None else horizon
    H0 = np.array(init.heights, dtype=np.int64)
    ph = p_high(params.alpha)
    return np.array([
        _kernels.hitting_times(H0, params.bounds.xi, params.bounds.sigma, ph, float(horizon), 1,
                               replica_seed(params.seed, r))[0]
        for r in range(replicas)
    ])


def hitting_time_max(params: DynamicsParams, init: PolymerConfig | None = None) -> HittingResult:
    t = float(hitting_times_max(params, 1, init)[0])
    return HittingResult(t, math.isinf(t))


def survival_curve(times: np.ndarray, grid) -> np.ndarray:
    """Empirical P(T > t) on ``grid``; censored (inf) samples count as survivors."""
    times = np.asarray(times)
    return np.array([(times > t).mean() for t in grid])
