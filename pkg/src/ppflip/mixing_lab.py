"""Square-case experiments in the cube picture.

k = M polymers of length 2M under the wedge ceiling correspond to monotone
subsets of the M x M x M cube; an upward flip removes one unit cube.  The
dynamics started from the full cube should empty it in time about
M (log M)^6 rather than M^3.  This module builds the deterministic block
envelopes that sandwich a censored copy of the dynamics, the halo sets for
jagged ceilings, and the scaling and confinement experiments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core_model import (
    BoundaryPair,
    DimensionError,
    InvalidConfigError,
    MonotoneCubeSet,
    PolymerConfig,
    from_cube_set,
    to_cube_set,
    vee,
    wedge,
)
from .glauber import p_high
from .seeding import replica_rng, replica_seed

TAIL_LEVEL = 1.0 - 1.0 / (2.0 * math.e)


def log_scale(M: int) -> float:
    """(log M)^2, the ideal block side."""
    return math.log(M) ** 2


def block_side_for(M: int) -> int:
    """Smallest even integer >= (log M)^2 (at least 2)."""
    b = max(2, math.ceil(log_scale(M)))
    return b + (b % 2)


def padded_size(M: int) -> int:
    b = block_side_for(M)
    return b * math.ceil(M / b)


def square_bounds(M: int, xi=None) -> BoundaryPair:
    xi = wedge(2 * M, 0) if xi is None else np.asarray(xi, dtype=np.int64)
    return BoundaryPair(xi, vee(2 * M, 0))


def cube_set_heights(column_heights: np.ndarray) -> np.ndarray:
    """Polymer height array of the cube set with the given column heights."""
    M = column_heights.shape[0]
    return np.array(from_cube_set(MonotoneCubeSet(M, column_heights)).heights)


# --- envelopes ---------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeSchedule:
    """Block envelopes S^-_t (inner) and S^+_t (outer) for the full-cube start.

    Blocks are indexed by v in {0..K-1}^3.  For (i-1) tau < t <= i tau the
    inner set holds the blocks with v3 + 2(v1 + v2) <= 5(K-1) - i.  The outer
    set on [i tau, (i+1) tau) is built from the inner set at time i tau: a
    removed block with a removed lower neighbour is removed entirely; a
    removed block without one keeps its bottom half.
    """

    M: int
    C_alpha: float
    block_side: int
    K: int
    tau: float

    def inner_index(self, t: float) -> int:
        """Rule index of S^- at time t (0 means the full cube)."""
        return 0 if t <= 0 else math.ceil(t / self.tau - 1e-12)

    def outer_index(self, t: float) -> int:
        return max(0, math.floor(t / self.tau + 1e-12))

    def inner_blocks(self, i: int) -> np.ndarray:
        """Boolean (K, K, K) membership of blocks for rule index ``i``."""
        K = self.K
        v1, v2, v3 = np.meshgrid(np.arange(K), np.arange(K), np.arange(K), indexing="ij")
        if i <= 0:
            return np.ones((K, K, K), dtype=bool)
        return v3 + 2 * (v1 + v2) <= 5 * (K - 1) - i

    def outer_parts(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(full blocks, bottom half-blocks) of S^+ built from inner rule ``i``."""
        inside = self.inner_blocks(i)
        out = ~inside
        lower_out = np.zeros_like(out)
        lower_out[1:, :, :] |= out[:-1, :, :]
        lower_out[:, 1:, :] |= out[:, :-1, :]
        lower_out[:, :, 1:] |= out[:, :, :-1]
        half = out & ~lower_out
        return inside, half

    def column_heights_inner(self, i: int) -> np.ndarray:
        return self._columns(self.inner_blocks(i), np.zeros((self.K,) * 3, dtype=bool))

    def column_heights_outer(self, i: int) -> np.ndarray:
        return self._columns(*self.outer_parts(i))

    def _columns(self, full: np.ndarray, half: np.ndarray) -> np.ndarray:
        b = self.block_side
        level = full * b + half * (b // 2)
        # monotone sets: a column's height is the top of its highest occupied block
        colblocks = np.zeros((self.K, self.K), dtype=np.int64)
        for v3 in range(self.K):
            top = v3 * b + level[:, :, v3]
            colblocks = np.where(level[:, :, v3] > 0, top, colblocks)
        return np.kron(colblocks, np.ones((b, b), dtype=np.int64))

    def inner(self, t: float) -> MonotoneCubeSet:
        return MonotoneCubeSet(self.M, self.column_heights_inner(self.inner_index(t)))

    def outer(self, t: float) -> MonotoneCubeSet:
        return MonotoneCubeSet(self.M, self.column_heights_outer(self.outer_index(t)))

    def block_in_inner(self, v, t: float) -> bool:
        return bool(self.inner_blocks(self.inner_index(t))[tuple(v)])

    @property
    def empty_index(self) -> int:
        """First rule index at which the inner set is empty."""
        return 5 * (self.K - 1) + 1

    @property
    def final_time(self) -> float:
        return 6 * self.K * self.tau


def build_envelope(M: int, C_alpha: float, pad: bool = False) -> EnvelopeSchedule:
    """Envelope schedule with tau = C (log M)^8 / 7 and even block side >= (log M)^2.

    With ``pad`` the cube side is rounded up to a multiple of the block side;
    otherwise an M that is not a multiple is rejected.
    """
    if M < 2:
        raise DimensionError("envelopes need M >= 2")
    if not C_alpha > 0:
        raise ValueError("C_alpha must be positive")
    b = block_side_for(M)
    if M % b:
        if not pad:
            raise DimensionError(f"M={M} is not a multiple of the block side {b}; pass pad=True")
        M = padded_size(M)
    return EnvelopeSchedule(M, C_alpha, b, M // b, C_alpha * math.log(M) ** 8 / 7)


def default_horizon(M: int, C_alpha: float) -> float:
    return min(M * M, 100 * C_alpha * M * math.log(M) ** 6)


@dataclass(frozen=True)
class EnvelopeRun:
    first_violation: float  # first time the censored copy left S^+ (inf if never)
    worst_excess: np.ndarray  # per slab, max |s_hat minus S^+| in cubes
    domination_violations: int
    final_censored: MonotoneCubeSet
    final_free: MonotoneCubeSet


def _slab_arrays(schedule: EnvelopeSchedule, horizon: float) -> tuple[np.ndarray, np.ndarray]:
    ns = min(math.ceil(horizon / schedule.tau) + 1, schedule.empty_index + 1)
    caps = np.stack([cube_set_heights(schedule.column_heights_inner(s + 1)) for s in range(ns)])
    plus = np.stack([cube_set_heights(schedule.column_heights_outer(s)) for s in range(ns)])
    return caps, plus


def run_censored_dynamics(schedule: EnvelopeSchedule, alpha: float, horizon: float | None = None,
                          seed: int = 0, replica: int = 0, censor: bool = True) -> EnvelopeRun:
    """Full-cube start, removals that would break S^-_t are rejected.

    The free dynamics runs alongside on the same randomness; the censored
    copy must always contain it.  ``censor=False`` drops the constraint.
    """
    M = schedule.M
    horizon = default_horizon(M, schedule.C_alpha) if horizon is None else horizon
    b = square_bounds(M)
    caps, plus = _slab_arrays(schedule, horizon)
    if not censor:
        caps = np.broadcast_to(b.xi, caps.shape).copy()
    H0 = np.array(from_cube_set(MonotoneCubeSet(M, np.full((M, M), M))).heights)
    Hc, Hu = H0.copy(), H0.copy()
    first, worst, bad = _kernels.envelope_run(Hc, Hu, b.xi, b.sigma, p_high(alpha), caps, plus,
                                              float(schedule.tau), float(horizon), replica_seed(seed, replica))
    return EnvelopeRun(float(first), worst, int(bad), to_cube_set(PolymerConfig(Hc)),
                       to_cube_set(PolymerConfig(Hu)))


@dataclass(frozen=True)
class ContainmentReport:
    M: int
    alpha: float
    C_alpha: float
    replicas: int
    first_violation: np.ndarray
    worst_excess: np.ndarray  # (replicas, slabs)
    lower_violations: int
    horizon: float

    @property
    def violation_frequency(self) -> float:
        return float(np.isfinite(self.first_violation).mean())


def check_envelope_containment(M: int, alpha: float, C_alpha: float, replicas: int, seed: int = 0,
                               horizon: float | None = None, pad: bool = False) -> ContainmentReport:
    sched = build_envelope(M, C_alpha, pad=pad)
    horizon = float(default_horizon(sched.M, C_alpha) if horizon is None else horizon)
    runs = [run_censored_dynamics(sched, alpha, horizon, seed, r) for r in range(replicas)]
    # the lower inclusion holds by construction; count breaches of the cap anyway
    lower = sum(r.domination_violations for r in runs)
    return ContainmentReport(sched.M, alpha, C_alpha, replicas, np.array([r.first_violation for r in runs]),
                             np.stack([r.worst_excess for r in runs]), lower, horizon)


# --- hitting-time scaling ----------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    M: int
    replicas: int
    censored: int
    median: float
    quantile: float  # at level 1 - 1/(2e)


@dataclass(frozen=True)
class ScalingTable:
    alpha: float
    rows: tuple
    exponent_a: float  # fit of quantile ~ M^a
    exponent_b: float  # fit of quantile / M ~ (log M)^b

    def ratios_m3(self) -> np.ndarray:
        return np.array([r.quantile / r.M**3 for r in self.rows])


def hitting_samples(M: int, alpha: float, replicas: int, horizon: float, seed: int = 0) -> np.ndarray:
    """t(M) per replica from the full cube; inf when censored at ``horizon``."""
    b = square_bounds(M)
    H0 = np.array(from_cube_set(MonotoneCubeSet(M, np.full((M, M), M))).heights)
    ph = p_high(alpha)
    return np.array([
        _kernels.hitting_times(H0, b.xi, b.sigma, ph, float(horizon), 1, replica_seed(seed, r))[0]
        for r in range(replicas)
    ])


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def hitting_scaling_experiment(M_list, alpha: float, replicas: int, seed: int = 0,
                               horizon_factor: float = 1.0) -> ScalingTable:
    """Median and 1-1/(2e) quantile of t(M); censored runs count as +inf.

    The horizon is ``horizon_factor * M^3``; a quantile falling on a
    censored sample is reported as inf and makes the fits inf.
    """
    rows = []
    for M in M_list:
        T = hitting_samples(M, alpha, replicas, horizon_factor * M**3, seed + M)
        rows.append(ScalingRow(M, replicas, int(np.isinf(T).sum()), float(np.quantile(T, 0.5, method="higher")),
                               float(np.quantile(T, TAIL_LEVEL, method="higher"))))
    Ms = np.array([r.M for r in rows], dtype=float)
    q = np.array([r.quantile for r in rows])
    if len(rows) >= 2 and np.all(np.isfinite(q)):
        a = _fit_slope(Ms, q)
        b = _fit_slope(np.log(Ms), q / Ms) if np.all(Ms > 1) else math.nan
    else:
        a = b = math.inf
    return ScalingTable(alpha, tuple(rows), a, b)


def two_state_mean_hitting_time(alpha: float) -> float:
    """M=1: the single site flips up at rate P(high), so E t = 1 / P(high)."""
    return 1.0 / p_high(alpha)


# --- post-hit volume ---------------------------------------------------------


@dataclass(frozen=True)
class VolumeAfterHit:
    M: int
    hit_times: np.ndarray
    fraction_above: np.ndarray  # time fraction with volume > M/10 after the hit
    max_volume: np.ndarray


def volume_after_hit(M: int, alpha: float, replicas: int, horizon: float, seed: int = 0) -> VolumeAfterHit:
    b = square_bounds(M)
    H0 = np.array(from_cube_set(MonotoneCubeSet(M, np.full((M, M), M))).heights)
    out = [_kernels.post_hit_volume(H0.copy(), b.xi, b.sigma, p_high(alpha), float(horizon), M / 10,
                                    replica_seed(seed, r)) for r in range(replicas)]
    h, f, v = (np.array(c) for c in zip(*out))
    return VolumeAfterHit(M, h, f, v)


# --- jagged ceilings and halo sets -------------------------------------------


def random_ceiling(M: int, rng) -> np.ndarray:
    """Uniform +/-1 bridge of length 2M from 0 to 0."""
    steps = np.array([1] * M + [-1] * M)
    rng.shuffle(steps)
    return np.concatenate(([0], np.cumsum(steps)))


def ground_state_columns(xi, M: int) -> np.ndarray:
    """Column heights of the ground state: column (r1, r2) is full iff
    xi at M - r1 + r2 lies below M - r1 - r2, else empty."""
    xi = np.asarray(xi)
    r1, r2 = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    return np.where(xi[M - r1 + r2] < M - r1 - r2, M, 0)


@dataclass(frozen=True)
class HaloSets:
    """Ground state and base-layer halo blocks, all as column-height maps.

    ``A2`` and ``A3`` are boolean (K, K) maps of base-layer blocks.
    """

    M: int
    block_side: int
    ground: MonotoneCubeSet
    A2: np.ndarray
    A3: np.ndarray

    @property
    def A1(self) -> np.ndarray:
        return self.A2 | self.A3

    @property
    def K(self) -> int:
        return self.M // self.block_side

    def region(self) -> MonotoneCubeSet:
        """s^- union A1 as a cube set."""
        base = np.kron(self.A1.astype(np.int64), np.ones((self.block_side,) * 2, dtype=np.int64)) * self.block_side
        return MonotoneCubeSet(self.M, np.maximum(self.ground.column_heights, base))

    def excess_volume(self) -> int:
        """|A1 minus s^-| in unit cubes."""
        return len(self.region()) - len(self.ground)

    def volume_bound(self) -> float:
        return 4 * self.M * math.log(self.M) ** 4


def build_halo(xi, M: int) -> HaloSets:
    xi = np.asarray(xi, dtype=np.int64)
    if xi.shape != (2 * M + 1,) or xi[0] != 0 or xi[-1] != 0 or np.any(np.abs(np.diff(xi)) != 1):
        raise InvalidConfigError("ceiling must be a +/-1 path of length 2M from 0 to 0")
    b = block_side_for(M)
    if M % b:
        raise DimensionError(f"M={M} is not a multiple of the block side {b}")
    K = M // b
    ground = ground_state_columns(xi, M)
    # a base block meets s^- iff any column in its footprint is occupied
    A2 = (ground.reshape(K, b, K, b) > 0).any(axis=(1, 3))
    # out-of-cube neighbours count as "not in C_M minus A2"
    left = np.ones((K, K), dtype=bool)
    left[1:, :] = A2[:-1, :]
    down = np.ones((K, K), dtype=bool)
    down[:, 1:] = A2[:, :-1]
    A3 = left & down
    return HaloSets(M, b, MonotoneCubeSet(M, ground), A2, A3)


@dataclass(frozen=True)
class HaloReport:
    M: int
    alpha: float
    C_alpha: float
    window: tuple[float, float]
    confined: np.ndarray  # (replicas, snapshots) booleans
    excess_volume: int
    volume_bound: float

    @property
    def frequency(self) -> float:
        """Fraction of (replica, snapshot) pairs inside s^- union A1."""
        return float(self.confined.mean()) if self.confined.size else math.nan

    @property
    def all_window_frequency(self) -> float:
        """Fraction of replicas confined at every snapshot of the window."""
        return float(self.confined.all(axis=1).mean()) if self.confined.size else math.nan


def check_halo_confinement(xi, M: int, alpha: float, C_alpha: float, replicas: int, seed: int = 0,
                           horizon: float | None = None, n_snapshots: int = 20) -> HaloReport:
    """Snapshots of the full-cube start under ceiling ``xi`` over the window
    [(6/7) C M (log M)^6, horizon]."""
    halo = build_halo(xi, M)
    horizon = float(M * M if horizon is None else horizon)
    start = 6.0 / 7.0 * C_alpha * M * math.log(M) ** 6
    b = square_bounds(M, xi)
    limit = cube_set_heights(halo.region().column_heights)
    if start > horizon:
        conf = np.zeros((replicas, 0), dtype=bool)
    else:
        times = np.linspace(start, horizon, n_snapshots)
        H0 = cube_set_heights(np.full((M, M), M))
        conf = np.empty((replicas, n_snapshots), dtype=bool)
        for r in range(replicas):
            snaps = _kernels.snapshots(H0.copy(), b.xi, b.sigma, p_high(alpha), times, replica_seed(seed, r))
            conf[r] = np.all((snaps >= limit[None]).reshape(n_snapshots, -1), axis=1)
    return HaloReport(M, alpha, C_alpha, (start, horizon), conf, halo.excess_volume(), halo.volume_bound())


# --- single block with a jagged ceiling --------------------------------------


def upper_half_exceptions(side: int, alpha: float, replicas: int, burn_in: float, n_snapshots: int = 20,
                          spacing: float = 1.0, seed: int = 0) -> float:
    """Exception frequency of unforced cubes in the upper half of one block.

    A block of side ``side`` with a random jagged ceiling is started full and
    run past ``burn_in``; at each snapshot we ask whether some cube with
    r3 >= side/2 lies outside the ground state.
    """
    out = []
    for r in range(replicas):
        rng = replica_rng(seed, r)
        xi = random_ceiling(side, rng)
        ground = ground_state_columns(xi, side)
        b = square_bounds(side, xi)
        times = burn_in + spacing * np.arange(n_snapshots)
        H0 = cube_set_heights(np.full((side, side), side))
        snaps = _kernels.snapshots(H0, b.xi, b.sigma, p_high(alpha), times, replica_seed(seed, r))
        for H in snaps:
            cols = to_cube_set(PolymerConfig(H)).column_heights
            extra = (cols > side // 2) & (cols > ground)
            out.append(bool(extra.any()))
    return float(np.mean(out))
