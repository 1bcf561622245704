"""Block dynamics: particle blocks, polymer slabs and the crude window chain.

Each block move resamples some coordinates from their conditional law
given all the others.  On an enumerated state space a block is described by
a boolean mask over a coordinate array; states sharing the coordinates
outside the mask form one group, and the move is the projection onto the
group's conditional law.  Particle blocks use the up-step positions as
coordinates, polymer slabs use the height rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .core_model import (
    BoundaryPair,
    InvalidConfigError,
    PolymerConfig,
    path_particles,
    path_from_particles,
    to_particles,
)
from .coupling import DistanceSpec
from .equilibrium import CapExceeded, ExactMeasure, exact_measure
from .glauber import ExactChain, chain_from_generator, single_flip_generator, spectral_gap_exact

WINDOW_CAP = 200_000
KINDS = ("particle", "polymer", "crude")
# default window half-widths and distance decays for the contraction checks
DEFAULT_ELL, DEFAULT_GAMMA = 2, 0.5
DEFAULT_S, DEFAULT_RHO = 1, 0.5


# --- windows -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParticleWindow:
    """Labels i-ell..i+ell (1-based) of every polymer are free.

    ``left`` and ``right`` are the frozen positions of labels i-ell-1 and
    i+ell+1 per polymer (sentinels -1 and n outside 1..N); only these enter
    the conditional law, together with the ceiling and floor particles.
    """

    i: int
    ell: int
    left: tuple
    right: tuple

    @property
    def labels(self) -> range:
        return range(self.i - self.ell, self.i + self.ell + 1)


def particle_window(config: PolymerConfig, i: int, ell: int) -> ParticleWindow:
    N = config.N
    if not 1 <= i <= N:
        raise IndexError(f"particle label {i} outside 1..{N}")
    if ell < 0:
        raise ValueError("ell must be non-negative")
    p = to_particles(config)
    left = tuple(p.position(i - ell - 1, j) for j in range(1, config.k + 1))
    right = tuple(p.position(i + ell + 1, j) for j in range(1, config.k + 1))
    return ParticleWindow(i, ell, left, right)


@dataclass(frozen=True, eq=False)
class PolymerWindow:
    """Polymers max(j-s,1)..min(j+s,k) are free between two fixed paths."""

    j: int
    s: int
    fixed_above: np.ndarray
    fixed_below: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.fixed_above) < np.asarray(self.fixed_below)):
            raise InvalidConfigError("fixed paths of a polymer window are not ordered")


def slab_range(j: int, s: int, k: int) -> tuple[int, int]:
    """1-based inclusive range of polymers updated by slab ``j``."""
    return max(j - s, 1), min(j + s, k)


def polymer_window(config: PolymerConfig, j: int, s: int, bounds: BoundaryPair) -> PolymerWindow:
    k = config.k
    if not 1 <= j <= k:
        raise IndexError(f"polymer label {j} outside 1..{k}")
    if s < 0:
        raise ValueError("s must be non-negative")
    lo, hi = slab_range(j, s, k)
    above = bounds.xi if lo == 1 else config.heights[lo - 2]
    below = bounds.sigma if hi == k else config.heights[hi]
    return PolymerWindow(j, s, np.array(above), np.array(below))


# --- local exact resampling --------------------------------------------------


def _window_states(k, left, right, ceil_pos, floor_pos, width, cap=WINDOW_CAP):
    """All window particle arrays (k, width) with their position sums.

    Constraints: left_u < x_1 < ... < x_width < right_u per polymer,
    labelwise interlacing x^(u) <= x^(u+1), and ceiling/floor particles
    bounding the top and bottom polymers labelwise.
    """
    out: list[np.ndarray] = []
    cur = np.zeros((k, width), dtype=np.int64)

    def rec(u: int, v: int) -> None:
        if u == k:
            out.append(cur.copy())
            if len(out) > cap:
                raise CapExceeded("window state count", len(out), cap)
            return
        if v == width:
            rec(u + 1, 0)
            return
        lo = left[u] + 1 if v == 0 else cur[u, v - 1] + 1
        lo = max(lo, ceil_pos[v] if u == 0 else cur[u - 1, v])
        hi = right[u] - (width - v)
        if u == k - 1:
            hi = min(hi, floor_pos[v])
        for x in range(lo, hi + 1):
            cur[u, v] = x
            rec(u, v + 1)

    rec(0, 0)
    return np.array(out, dtype=np.int64).reshape(-1, k, width)


_particle_cache: dict = {}
_polymer_cache: dict = {}


def _particle_conditional(window: ParticleWindow, bounds: BoundaryPair, alpha: float, N: int, k: int):
    lo = max(window.i - window.ell, 1)
    hi = min(window.i + window.ell, N)
    width = hi - lo + 1
    cp = path_particles(bounds.xi)[lo - 1 : hi]
    fp = path_particles(bounds.sigma)[lo - 1 : hi]
    key = (window.left, window.right, cp.tobytes(), fp.tobytes(), alpha, k, width)
    hit = _particle_cache.get(key)
    if hit is None:
        X = _window_states(k, window.left, window.right, cp, fp, width)
        if len(X) == 0:
            raise InvalidConfigError("frozen particles admit no window configuration")
        lw = -2.0 * alpha * X.reshape(len(X), -1).sum(axis=1)
        p = np.exp(lw - lw.max())
        hit = (X, p / p.sum(), lo, hi)
        if len(_particle_cache) > 4096:
            _particle_cache.clear()
        _particle_cache[key] = hit
    return hit


def particle_block_law(config: PolymerConfig, window: ParticleWindow, bounds: BoundaryPair, alpha: float):
    """Conditional law of the window: (list of configs, probabilities)."""
    X, p, lo, hi = _particle_conditional(window, bounds, alpha, config.N, config.k)
    base = to_particles(config).positions.copy()
    outs = []
    for x in X:
        P = base.copy()
        P[:, lo - 1 : hi] = x
        outs.append(PolymerConfig(np.stack([path_from_particles(r, config.n) for r in P]), h=config.h))
    return outs, p


def resample_particle_block(config: PolymerConfig, window: ParticleWindow, alpha: float, rng,
                            bounds: BoundaryPair | None = None) -> PolymerConfig:
    """Exact draw of particles i-ell..i+ell of all polymers given the rest."""
    bounds = BoundaryPair.full(config.n, config.h) if bounds is None else bounds
    X, p, lo, hi = _particle_conditional(window, bounds, alpha, config.N, config.k)
    x = X[rng.choice(len(X), p=p)]
    P = to_particles(config).positions.copy()
    P[:, lo - 1 : hi] = x
    return PolymerConfig(np.stack([path_from_particles(r, config.n) for r in P]), h=config.h)


def _polymer_conditional(window: PolymerWindow, m: int, alpha: float) -> ExactMeasure:
    above = np.asarray(window.fixed_above, dtype=np.int64)
    below = np.asarray(window.fixed_below, dtype=np.int64)
    key = (above.tobytes(), below.tobytes(), m, alpha)
    hit = _polymer_cache.get(key)
    if hit is None:
        hit = exact_measure(BoundaryPair(above, below), m, alpha, cap=WINDOW_CAP)
        if len(_polymer_cache) > 1024:
            _polymer_cache.clear()
        _polymer_cache[key] = hit
    return hit


def resample_polymer_block(config: PolymerConfig, window: PolymerWindow, alpha: float, rng) -> PolymerConfig:
    """Exact draw of the slab polymers given the two fixed paths."""
    lo, hi = slab_range(window.j, window.s, config.k)
    m = _polymer_conditional(window, hi - lo + 1, alpha)
    H = np.array(config.heights)
    H[lo - 1 : hi] = m.heights[rng.choice(m.size, p=m.probs)]
    return PolymerConfig(H, h=config.h)


# --- block families on enumerated spaces -------------------------------------


def particle_array(heights: np.ndarray) -> np.ndarray:
    """Up-step positions of every polymer of every state, shape (S, k, N)."""
    up = np.diff(heights, axis=-1) == 1
    S, k, n = up.shape
    N = int(up[0, 0].sum()) if S else 0
    pos = np.nonzero(up.reshape(S * k, n))[1].reshape(S, k, N)
    return pos.astype(np.int64)


@dataclass(eq=False)
class BlockFamily:
    """Blocks over an enumerated measure, given by masks on a coordinate array.

    ``coords`` is (S, k, m); ``masks[b]`` is a (k, m) boolean array of the
    coordinates resampled by block ``b``.  All blocks ring at rate 1.
    """

    measure: ExactMeasure
    coords: np.ndarray
    masks: list
    kind: str
    param: int
    group_id: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    _outcomes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        S = self.measure.size
        flat = self.coords.reshape(S, -1)
        for W in self.masks:
            key = flat[:, ~W.reshape(-1)]
            _, gid = np.unique(key, axis=0, return_inverse=True)
            gid = gid.reshape(-1)
            self.group_id.append(gid)
            order = np.argsort(gid, kind="stable")
            bounds = np.flatnonzero(np.diff(gid[order])) + 1
            self.groups.append(np.split(order, bounds))

    @property
    def n_blocks(self) -> int:
        return len(self.masks)

    def generator(self) -> np.ndarray:
        S = self.measure.size
        pi = self.measure.probs
        L = np.zeros((S, S))
        for groups in self.groups:
            for g in groups:
                q = pi[g] / pi[g].sum()
                L[np.ix_(g, g)] += q[None, :]
        L[np.diag_indices(S)] -= self.n_blocks
        return L

    def chain(self) -> ExactChain:
        return chain_from_generator(self.measure, self.generator())

    def members(self, b: int, s: int) -> np.ndarray:
        return self.groups[b][self.group_id[b][s]]

    def conditional_variance_sum(self, f) -> float:
        """sum_b mu[var(f | coordinates outside block b)], the Dirichlet form."""
        f = np.asarray(f, dtype=float)
        pi = self.measure.probs
        tot = 0.0
        for groups in self.groups:
            for g in groups:
                w = pi[g]
                m = w.sum()
                mean = w @ f[g] / m
                tot += float(w @ (f[g] - mean) ** 2)
        return tot

    # coupled moves: identity when the two groups coincide, otherwise
    # independent sampling polymer by polymer from the top, sharing the draw
    # whenever the two conditional laws of the next polymer agree
    def _split(self, b, idx, u):
        W = self.masks[b][u]
        parts = self.coords[idx][:, u, W]
        uniq, inv = np.unique(parts, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        w = self.measure.probs[idx]
        mass = np.bincount(inv, weights=w, minlength=len(uniq))
        return uniq, inv, mass / mass.sum()

    def coupled_outcomes(self, b: int, sa: int, sb: int):
        """Exact joint law of the coupled update of block ``b`` from (sa, sb)."""
        hit = self._outcomes.get((b, sa, sb))
        if hit is not None:
            return hit
        out: list[tuple[int, int, float]] = []
        k = self.coords.shape[1]

        def rec(u, ia, ib, prob):
            if u == k:
                out.append((int(ia[0]), int(ib[0]), prob))
                return
            ua, inva, pa = self._split(b, ia, u)
            ub, invb, pb = self._split(b, ib, u)
            if ua.shape == ub.shape and np.array_equal(ua, ub) and np.allclose(pa, pb, rtol=1e-12, atol=0):
                for r in range(len(ua)):
                    rec(u + 1, ia[inva == r], ib[invb == r], prob * pa[r])
            else:
                for ra in range(len(ua)):
                    for rb in range(len(ub)):
                        rec(u + 1, ia[inva == ra], ib[invb == rb], prob * pa[ra] * pb[rb])

        rec(0, self.members(b, sa), self.members(b, sb), 1.0)
        self._outcomes[(b, sa, sb)] = out
        return out

    def coupled_step(self, b: int, sa: int, sb: int, rng) -> tuple[int, int]:
        k = self.coords.shape[1]
        ia, ib = self.members(b, sa), self.members(b, sb)
        for u in range(k):
            ua, inva, pa = self._split(b, ia, u)
            ub, invb, pb = self._split(b, ib, u)
            if ua.shape == ub.shape and np.array_equal(ua, ub) and np.allclose(pa, pb, rtol=1e-12, atol=0):
                r = rng.choice(len(pa), p=pa)
                ia, ib = ia[inva == r], ib[invb == r]
            else:
                ia = ia[inva == rng.choice(len(pa), p=pa)]
                ib = ib[invb == rng.choice(len(pb), p=pb)]
        return int(ia[0]), int(ib[0])


def particle_family(measure: ExactMeasure, ell: int) -> BlockFamily:
    P = particle_array(measure.heights)
    k, N = P.shape[1], P.shape[2]
    masks = []
    for i in range(1, N + 1):
        W = np.zeros((k, N), dtype=bool)
        W[:, max(i - ell, 1) - 1 : min(i + ell, N)] = True
        masks.append(W)
    return BlockFamily(measure, P, masks, "particle", ell)


def polymer_family(measure: ExactMeasure, s: int) -> BlockFamily:
    H = measure.heights
    k, m = H.shape[1], H.shape[2]
    masks = []
    for j in range(1, k + 1):
        lo, hi = slab_range(j, s, k)
        W = np.zeros((k, m), dtype=bool)
        W[lo - 1 : hi] = True
        masks.append(W)
    return BlockFamily(measure, H, masks, "polymer", s)


def _submeasure(measure: ExactMeasure, idx: np.ndarray) -> ExactMeasure:
    from scipy.special import logsumexp

    lw = measure.log_weights[idx]
    return ExactMeasure(measure.bounds, measure.k, measure.alpha, measure.heights[idx],
                        measure.volumes[idx], lw, float(logsumexp(lw)))


def crude_family(measure: ExactMeasure, window: tuple[int, int], reference: int = 0) -> BlockFamily:
    """Whole-polymer resampling inside a particle window.

    ``window = (j, m)`` freezes labels <= j and >= m; the state space is the
    set of states agreeing with state ``reference`` there, and block ``u``
    resamples the free particles of polymer ``u`` given the other polymers.
    """
    j, m = window
    P = particle_array(measure.heights)
    S, k, N = P.shape
    if not 0 <= j < m <= N + 1:
        raise ValueError(f"need 0 <= j < m <= N+1, got ({j}, {m})")
    frozen = np.ones(N, dtype=bool)
    frozen[j : m - 1] = False
    ref = P[reference][:, frozen]
    keep = np.flatnonzero(np.all((P[:, :, frozen] == ref[None]).reshape(S, -1), axis=1))
    sub = _submeasure(measure, keep)
    masks = []
    for u in range(k):
        W = np.zeros((k, N), dtype=bool)
        W[u, ~frozen] = True
        masks.append(W)
    return BlockFamily(sub, P[keep], masks, "crude", m - j - 1)


def block_family(kind: str, measure: ExactMeasure, param, reference: int = 0) -> BlockFamily:
    if kind == "particle":
        return particle_family(measure, int(param))
    if kind == "polymer":
        return polymer_family(measure, int(param))
    if kind == "crude":
        return crude_family(measure, tuple(param), reference)
    raise ValueError(f"unknown block kind {kind!r}; expected one of {KINDS}")


def block_generator_exact(kind: str, bounds: BoundaryPair, k: int, alpha: float, param,
                          reference: int = 0, cap: int | None = 5000) -> ExactChain:
    measure = exact_measure(bounds, k, alpha, cap=cap)
    return block_family(kind, measure, param, reference).chain()


def block_gap(kind: str, bounds: BoundaryPair, k: int, alpha: float, param, cap: int | None = 5000) -> float:
    return spectral_gap_exact(block_generator_exact(kind, bounds, k, alpha, param, cap=cap))


# --- trend report ------------------------------------------------------------


@dataclass(frozen=True)
class TrendRow:
    kind: str
    n: int
    k: int
    alpha: float
    param: int
    gap: float


@dataclass(frozen=True)
class TrendReport:
    rows: tuple
    first_above_one: dict  # (n, k) -> smallest param with gap >= 1, or None

    def nondecreasing(self, tol: float = 1e-9) -> bool:
        by = {}
        for r in self.rows:
            by.setdefault((r.n, r.k), []).append((r.param, r.gap))
        return all(all(b[1] >= a[1] - tol for a, b in zip(v, v[1:])) for v in map(sorted, by.values()))


def gap_trend_report(kind: str, instances, params, alpha: float, cap: int | None = 5000) -> TrendReport:
    """Exact block gaps over ``instances`` (pairs (n, k), h=0) and ``params``."""
    if kind not in ("particle", "polymer"):
        raise ValueError("trend reports cover the particle and polymer kinds")
    rows, first = [], {}
    for n, k in instances:
        measure = exact_measure(BoundaryPair.full(n, 0), k, alpha, cap=cap)
        first[(n, k)] = None
        for p in params:
            g = spectral_gap_exact(block_family(kind, measure, p).chain())
            rows.append(TrendRow(kind, n, k, alpha, int(p), g))
            if first[(n, k)] is None and g >= 1 - 1e-12:
                first[(n, k)] = int(p)
    return TrendReport(tuple(rows), first)


# --- contraction -------------------------------------------------------------


@dataclass(frozen=True)
class DriftEstimate:
    """Per-unit-time drift of the distance under the coupled block dynamics."""

    mean: float
    ci_low: float
    ci_high: float
    distance: float
    n_events: int

    @property
    def normalized(self) -> float:
        return self.mean / self.distance if self.distance else 0.0


def _spec_for(kind: str, decay: float) -> DistanceSpec:
    return DistanceSpec("particle_weighted" if kind == "particle" else "height_weighted", decay)


def _weights(family: "BlockFamily", decay: float) -> np.ndarray:
    """Per-coordinate weights so that the distance is sum w * |coordinate change|."""
    k, m = family.coords.shape[1:]
    if family.kind == "particle":
        return np.broadcast_to(np.exp(-decay * np.arange(1, m + 1))[None, :], (k, m))
    return np.broadcast_to(np.exp(-decay * np.arange(1, k + 1))[:, None] / 2, (k, m))


def _dist(family: "BlockFamily", w: np.ndarray, a: int, b: int) -> float:
    diff = family.coords[a] - family.coords[b]
    return float((w * ((diff != 0) if family.kind == "particle" else np.abs(diff))).sum())


def contraction_exact(family: BlockFamily, decay: float, pair: tuple[int, int]) -> float:
    """Exact drift sum_b E_b[d(after)] - d(before) for state indices ``pair``."""
    w = _weights(family, decay)
    a, b = pair
    d0 = _dist(family, w, a, b)
    tot = 0.0
    for blk in range(family.n_blocks):
        for x, y, p in family.coupled_outcomes(blk, a, b):
            tot += p * (_dist(family, w, x, y) - d0)
    return tot


def contraction_estimate(family: BlockFamily, decay: float, pair: tuple[int, int], n_events: int,
                         seed: int = 0, level: float = 0.95) -> DriftEstimate:
    """Monte-Carlo drift from one-event coupled updates.

    Each event picks a block uniformly; the drift per unit time is the
    number of blocks times the mean one-event change.  The interval is a
    normal approximation on the sample mean.
    """
    if family.kind == "crude":
        raise ValueError("the crude chain is used for gaps only")
    w = _weights(family, decay)
    a, b = pair
    if _unit_distance(family, a, b) != 1:
        raise ValueError("contraction pairs must be at unit distance")
    d0 = _dist(family, w, a, b)
    rng = np.random.default_rng(seed)
    B = family.n_blocks
    blocks = rng.integers(0, B, size=n_events)
    deltas = np.empty(n_events)
    # the pair is fixed, so each block's coupled kernel is drawn from a table
    table = {}
    for blk in np.unique(blocks):
        out = family.coupled_outcomes(int(blk), a, b)
        p = np.array([o[2] for o in out])
        d = np.array([_dist(family, w, x, y) - d0 for x, y, _ in out])
        table[int(blk)] = (d, p / p.sum())
    for blk in table:
        sel = blocks == blk
        d, p = table[blk]
        deltas[sel] = d[rng.choice(len(d), size=int(sel.sum()), p=p)]
    mean = B * deltas.mean()
    se = B * deltas.std(ddof=1) / math.sqrt(n_events) if n_events > 1 else math.inf
    z = stats.norm.ppf(0.5 + level / 2)
    return DriftEstimate(float(mean), float(mean - z * se), float(mean + z * se), d0, n_events)


def _unit_distance(family: BlockFamily, a: int, b) -> np.ndarray:
    diff = family.coords[a] - family.coords[b]
    axes = (-2, -1)
    if family.kind == "particle":
        return (diff != 0).sum(axis=axes)
    return np.abs(diff).sum(axis=axes) // 2


def unit_pairs(family: BlockFamily) -> list[tuple[int, int]]:
    """All ordered index pairs at unit distance (one particle / one flip apart)."""
    S = family.measure.size
    out = []
    for a in range(S):
        d = _unit_distance(family, a, np.arange(S))
        out.extend((a, int(b)) for b in np.flatnonzero(d == 1))
    return out


# --- matching probability ----------------------------------------------------


def matching_probability(measure: ExactMeasure, i: int, m: int, pair: tuple[int, int]) -> float:
    """Probability that the independent window coupling fully matches label i-1.

    Particles labelled i-m..i-1 are resampled on both states of ``pair``
    (which must agree on labels <= i-m-1), frozen at labels <= i-m-1 and
    >= i, using the top-to-bottom independent coupling.  Returns the exact
    probability that label i-1 agrees on every polymer.
    """
    P = particle_array(measure.heights)
    S, k, N = P.shape
    if not (1 <= m and i - m >= 1 and i <= N + 1):
        raise ValueError("window must fit inside the labels")
    a, b = pair
    if not np.array_equal(P[a, :, : i - m - 1], P[b, :, : i - m - 1]):
        raise ValueError("pair must agree up to label i-m-1")
    W = np.zeros((k, N), dtype=bool)
    W[:, i - m - 1 : i - 1] = True
    fam = BlockFamily(measure, P, [W], "particle", m)
    tot = 0.0
    for x, y, p in fam.coupled_outcomes(0, a, b):
        if np.array_equal(P[x, :, i - 2], P[y, :, i - 2]):
            tot += p
    return tot


# --- comparison chain --------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    """Slacks rhs - lhs of the three comparison steps for each test function.

    step_slab: var(f) <= sum_j mu[var_slab_j(f)]
    step_block: sum_j mu[var_slab_j(f)] <= sum_j sum_i mu[var_block_{j,i}(f)]
    step_local: mu[var_block_{j,i}(f)] <= c^{-1} * local flip form in the block,
    with ``c`` the smallest exact gap of the in-block flip chain.
    """

    step_slab: np.ndarray
    step_block: np.ndarray
    step_local: np.ndarray
    local_constant: float

    def holds(self, slack: float = 1e-9) -> bool:
        return bool(min(self.step_slab.min(), self.step_block.min(), self.step_local.min()) >= -slack)


def _flip_form_by_site(measure: ExactMeasure, f) -> np.ndarray:
    """Per state and site (u, x): heat-bath variance of f at that site, (S, k, n+1)."""
    H = measure.heights
    S, k, n1 = H.shape
    out = np.zeros((S, k, n1))
    idx = measure._index
    f = np.asarray(f, dtype=float)
    from .glauber import p_high

    p = p_high(measure.alpha)
    for s in range(S):
        for u in range(k):
            for x in range(1, n1 - 1):
                G = H[s].copy()
                if G[u, x - 1] != G[u, x + 1]:
                    continue
                G[u, x] = 2 * G[u, x - 1] - G[u, x]
                t = idx.get(G.tobytes())
                if t is None:
                    continue
                out[s, u, x] = p * (1 - p) * (f[s] - f[t]) ** 2
    return out


def comparison_chain_check(bounds: BoundaryPair, k: int, alpha: float, s: int, ell: int,
                           n_functions: int = 10, seed: int = 0) -> ComparisonReport:
    """Check the three steps on random test functions.

    The slab step is equivalent to gap(slab chain) >= 1 and the block step
    to the particle-block gap on each slab being >= 1, so they can only
    hold when ``s`` and ``ell`` are large enough (s, ell >= 1 at alpha = 1).
    """
    measure = exact_measure(bounds, k, alpha, cap=2000)
    pi = measure.probs
    P = particle_array(measure.heights)
    S, _, N = P.shape
    H = measure.heights
    rng = np.random.default_rng(seed)
    slab_fam = polymer_family(measure, s)
    # slab j, block i: free = slab polymers at window labels; frozen = the rest
    block_masks, block_sites = [], []
    for j in range(1, k + 1):
        lo, hi = slab_range(j, s, k)
        for i in range(1, N + 1):
            W = np.zeros((k, N), dtype=bool)
            W[lo - 1 : hi, max(i - ell, 1) - 1 : min(i + ell, N)] = True
            block_masks.append(W)
            block_sites.append((lo, hi, i))
    blk_fam = BlockFamily(measure, P, block_masks, "particle", ell)

    # sites of the in-block flip chain for each state: x between the frozen
    # neighbours of the window on each slab polymer
    def site_mask(b):
        lo, hi, i = block_sites[b]
        M = np.zeros((S, k, H.shape[2]), dtype=bool)
        left = np.full((S, k), -1) if i - ell - 1 < 1 else P[:, :, i - ell - 2]
        right = np.full((S, k), bounds.n) if i + ell + 1 > N else P[:, :, i + ell]
        xs = np.arange(H.shape[2])
        for u in range(lo - 1, hi):
            M[:, u, :] = (xs[None, :] >= left[:, u, None] + 2) & (xs[None, :] <= right[:, u, None] - 1) \
                & (xs[None, :] >= 1) & (xs[None, :] <= bounds.n - 1)
        return M

    masks = [site_mask(b) for b in range(blk_fam.n_blocks)]
    # smallest gap of the in-block flip chain over all groups
    L = single_flip_generator(measure)
    c = math.inf
    for b, groups in enumerate(blk_fam.groups):
        for g in groups:
            if len(g) < 2:
                continue
            sub = np.zeros((len(g), len(g)))
            pos = {int(x): r for r, x in enumerate(g)}
            for r, x in enumerate(g):
                for y in np.flatnonzero(L[x]):
                    if y != x and int(y) in pos:
                        d = np.flatnonzero((H[x] != H[y]).reshape(-1))
                        u, xx = divmod(int(d[0]), H.shape[2])
                        if masks[b][x, u, xx]:
                            sub[r, pos[int(y)]] = L[x, y]
            sub[np.diag_indices(len(g))] = -sub.sum(axis=1)
            q = pi[g] / pi[g].sum()
            rq = np.sqrt(q)
            A = rq[:, None] * sub / rq[None, :]
            ev = linalg.eigh(-0.5 * (A + A.T), eigvals_only=True)
            c = min(c, float(ev[1]))
    slab_s, block_s, local_s = [], [], []
    for _ in range(n_functions):
        f = rng.normal(size=S)
        var = float(pi @ (f - pi @ f) ** 2)
        slab_sum = slab_fam.conditional_variance_sum(f)
        block_terms = []
        for b, groups in enumerate(blk_fam.groups):
            t = 0.0
            for g in groups:
                w = pi[g]
                mean = w @ f[g] / w.sum()
                t += float(w @ (f[g] - mean) ** 2)
            block_terms.append(t)
        site_var = _flip_form_by_site(measure, f)
        slab_s.append(slab_sum - var)
        block_s.append(sum(block_terms) - slab_sum)
        local = [float(pi @ (site_var * masks[b]).sum(axis=(1, 2))) / c - block_terms[b]
                 for b in range(blk_fam.n_blocks)]
        local_s.append(min(local))
    return ComparisonReport(np.array(slab_s), np.array(block_s), np.array(local_s), c)
