"""Continuous-time single-flip heat-bath dynamics and its exact spectral data.

Every interior site (i, x) carries a rate-1 clock; the simulation realises
the k(n-1) clocks as one exponential race with a uniformly chosen site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .core_model import BoundaryPair, DimensionError, InvalidConfigError, PolymerConfig, validate
from .equilibrium import CapExceeded, ExactMeasure, exact_measure
from .seeding import replica_seed

TV_THRESHOLD = 1.0 / (2.0 * math.e)
DENSE_CAP = 5000

EVENT_DTYPE = np.dtype([("time", "<f8"), ("polymer", "<u2"), ("site", "<u2"), ("new_height", "<i2")])


def p_high(alpha: float) -> float:
    """Heat-bath probability of the higher of two admissible heights."""
    return 1.0 / (1.0 + math.exp(-2.0 * alpha))


@dataclass(frozen=True)
class DynamicsParams:
    alpha: float
    bounds: BoundaryPair
    k: int
    seed: int = 0
    horizon: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.k < 1:
            raise DimensionError("k must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


def local_update_law(config: PolymerConfig, i: int, x: int, bounds: BoundaryPair, alpha: float) -> dict[int, float]:
    """Conditional law of the height of polymer ``i`` (1-based) at site ``x``."""
    if not (1 <= i <= config.k and 1 <= x <= config.n - 1):
        raise IndexError(f"site (i={i}, x={x}) outside 1..{config.k} x 1..{config.n - 1}")
    H = config.heights
    left, right = int(H[i - 1, x - 1]), int(H[i - 1, x + 1])
    if left != right:
        return {(left + right) // 2: 1.0}
    above = bounds.xi[x] if i == 1 else H[i - 2, x]
    below = bounds.sigma[x] if i == config.k else H[i, x]
    hi, lo = left + 1, left - 1
    hi_ok, lo_ok = hi <= above, lo >= below
    if hi_ok and lo_ok:
        p = p_high(alpha)
        return {hi: p, lo: 1.0 - p}
    return {hi: 1.0} if hi_ok else {lo: 1.0}


@dataclass(frozen=True)
class Trajectory:
    final: PolymerConfig
    n_events: int
    events: np.ndarray | None = None


def simulate(params: DynamicsParams, init: PolymerConfig, record: bool = False) -> Trajectory:
    """One trajectory of the heat-bath chain from ``init`` up to ``params.horizon``."""
    if not validate(init, params.bounds) or init.k != params.k:
        raise InvalidConfigError("initial configuration is not in E_{xi,sigma}")
    H = np.array(init.heights, dtype=np.int64)
    count, t, pol, site, hts = _kernels.simulate_path(
        H, params.bounds.xi, params.bounds.sigma, p_high(params.alpha), float(params.horizon),
        _numba_seed(params.seed), record,
    )
    events = None
    if record:
        events = np.empty(count, dtype=EVENT_DTYPE)
        events["time"], events["polymer"], events["site"], events["new_height"] = t, pol + 1, site, hts
    return Trajectory(PolymerConfig(H, h=init.h), int(count), events)


def write_event_log(events: np.ndarray, path) -> None:
    """Packed little-endian records (float64 time, u16 polymer, u16 site, i16 height)."""
    np.asarray(events, dtype=EVENT_DTYPE).tofile(path)


def read_event_log(path) -> np.ndarray:
    return np.fromfile(path, dtype=EVENT_DTYPE)


def _numba_seed(seed: int) -> int:
    # numba's generator takes a 32-bit seed; replica 0 of the master seed
    return replica_seed(seed, 0)


def final_states(params: DynamicsParams, init: PolymerConfig, n_rep: int) -> np.ndarray:
    """Final height arrays of ``n_rep`` independent trajectories."""
    return _kernels.simulate_batch(
        np.array(init.heights, dtype=np.int64), params.bounds.xi, params.bounds.sigma,
        p_high(params.alpha), float(params.horizon), int(n_rep), _numba_seed(params.seed),
    )


# --- exact chain -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExactChain:
    """Generator over an enumerated state space and its symmetrised form."""

    measure: ExactMeasure
    generator: np.ndarray
    symmetrized: np.ndarray

    @property
    def size(self) -> int:
        return self.measure.size

    def detailed_balance_residual(self) -> float:
        """Largest |pi(a) L(a,b) - pi(b) L(b,a)|, relative to the largest flux."""
        F = self.measure.probs[:, None] * self.generator
        np.fill_diagonal(F, 0.0)
        scale = max(float(np.abs(F).max()), 1e-300)
        return float(np.abs(F - F.T).max()) / scale


def symmetrize(L: np.ndarray, probs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    r = np.sqrt(probs)
    A = r[:, None] * L / r[None, :]
    resid = float(np.abs(A - A.T).max()) if A.size else 0.0
    if resid > tol * max(1.0, float(np.abs(A).max())):
        raise ArithmeticError(f"generator is not reversible: symmetry residual {resid:.3e}")
    return 0.5 * (A + A.T)


def single_flip_generator(measure: ExactMeasure) -> np.ndarray:
    S = measure.size
    H = measure.heights
    k, n = measure.k, measure.bounds.n
    xi, sigma = measure.bounds.xi, measure.bounds.sigma
    p = p_high(measure.alpha)
    L = np.zeros((S, S))
    index = measure._index
    for i in range(k):
        above = np.broadcast_to(xi, (S, n + 1)) if i == 0 else H[:, i - 1]
        below = np.broadcast_to(sigma, (S, n + 1)) if i == k - 1 else H[:, i + 1]
        for x in range(1, n):
            left, right = H[:, i, x - 1], H[:, i, x + 1]
            flat = left == right
            hi_ok = flat & (left + 1 <= above[:, x])
            lo_ok = flat & (left - 1 >= below[:, x])
            both = hi_ok & lo_ok
            cur = H[:, i, x]
            # a move changes the height only when both candidates are admissible
            for s in np.flatnonzero(both):
                G = H[s].copy()
                if cur[s] == left[s] - 1:
                    G[i, x] = left[s] + 1
                    rate = p
                else:
                    G[i, x] = left[s] - 1
                    rate = 1.0 - p
                L[s, index[G.tobytes()]] += rate
    L[np.diag_indices(S)] = -L.sum(axis=1)
    return L


def build_exact_chain(bounds: BoundaryPair, k: int, alpha: float, cap: int | None = DENSE_CAP) -> ExactChain:
    measure = exact_measure(bounds, k, alpha, cap=cap)
    L = single_flip_generator(measure)
    return ExactChain(measure, L, symmetrize(L, measure.probs))


def chain_from_generator(measure: ExactMeasure, L: np.ndarray) -> ExactChain:
    return ExactChain(measure, L, symmetrize(L, measure.probs))


def spectral_gap_exact(chain: ExactChain) -> float:
    """Smallest non-zero eigenvalue of minus the generator."""
    if chain.size == 1:
        return math.inf
    ev = linalg.eigh(-chain.symmetrized, eigvals_only=True)
    resid = abs(ev[0])
    if resid > 1e-8 * max(1.0, abs(ev[-1])):
        raise ArithmeticError(f"zero eigenvalue not recovered: residual {resid:.3e}")
    return float(ev[1])


def dirichlet_form(chain: ExactChain, f) -> float:
    """(1/2) sum_{a,b} pi(a) L(a,b) (f(a) - f(b))^2."""
    f = np.asarray(f, dtype=float)
    F = chain.measure.probs[:, None] * chain.generator
    np.fill_diagonal(F, 0.0)
    return 0.5 * float(np.sum(F * (f[:, None] - f[None, :]) ** 2))


def variance(measure: ExactMeasure, f) -> float:
    f = np.asarray(f, dtype=float)
    p = measure.probs
    m = float(p @ f)
    return float(p @ (f - m) ** 2)


def rayleigh_quotient(chain: ExactChain, f) -> float:
    return dirichlet_form(chain, f) / variance(chain.measure, f)


class _Propagator:
    def __init__(self, chain: ExactChain):
        lam, U = linalg.eigh(chain.symmetrized)
        self.lam = lam
        self.U = U
        self.r = np.sqrt(chain.measure.probs)
        self.pi = chain.measure.probs

    def rows(self, t: float, starts=None) -> np.ndarray:
        U = self.U if starts is None else self.U[starts]
        r = self.r if starts is None else self.r[starts]
        P = (U * np.exp(self.lam * t)[None, :]) @ self.U.T
        return P * self.r[None, :] / r[:, None]

    def worst_tv(self, t: float) -> float:
        P = self.rows(t)
        return float(0.5 * np.abs(P - self.pi[None, :]).sum(axis=1).max())


def distribution_at(chain: ExactChain, start: int, t: float) -> np.ndarray:
    """Law at time ``t`` of the chain started in state index ``start``."""
    row = _Propagator(chain).rows(t, np.array([start]))[0]
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def worst_case_tv(chain: ExactChain, t: float) -> float:
    return _Propagator(chain).worst_tv(t)


def tv_profile(chain: ExactChain, t: float) -> np.ndarray:
    """TV distance to equilibrium at time ``t`` from every start."""
    prop = _Propagator(chain)
    return 0.5 * np.abs(prop.rows(t) - prop.pi[None, :]).sum(axis=1)


def tv_mixing_exact(chain: ExactChain, threshold: float = TV_THRESHOLD, resolution: float = 1e-6,
                    cap: int = DENSE_CAP) -> float:
    """Smallest t with worst-case TV distance at most ``threshold``.

    Worst-case TV is non-increasing in t, so the crossing is bracketed by
    doubling and then bisected to ``resolution``.
    """
    if chain.size > cap:
        raise CapExceeded("state count for mixing time", chain.size, cap)
    prop = _Propagator(chain)
    if prop.worst_tv(0.0) <= threshold:
        return 0.0
    hi = 1.0
    while prop.worst_tv(hi) > threshold:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("mixing time bracket diverged")
    lo = 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if prop.worst_tv(mid) > threshold:
            lo = mid
        else:
            hi = mid
    return hi


def mixing_time_gap_bound(chain: ExactChain) -> float:
    """gap^{-1} (1 - log min pi), the classical upper bound on t_mix."""
    return (1.0 - math.log(float(chain.measure.probs.min()))) / spectral_gap_exact(chain)
