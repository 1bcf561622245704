"""Configurations of ordered lattice paths and their equivalent encodings.

A configuration holds ``k`` non-crossing +/-1 paths of length ``n`` from
height 0 to height ``h``.  Polymer 1 is the top path.  The same object can
be read as a particle array (positions of the up-steps), as a boxed plane
partition, or, in the square case ``h=0, n=2M, k=M``, as a monotone set of
unit cubes in ``[0, M]^3``.

Polymer and particle labels exposed by accessors are 1-based; arrays are
0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised for inconsistent or degenerate dimensions (k, n, h, box sizes)."""


class InvalidConfigError(ValueError):
    """Raised when a configuration violates a hard precondition of an operation."""


def _check_nh(n: int, h: int) -> None:
    if n < 1:
        raise DimensionError(f"path length must be >= 1, got n={n}")
    if abs(h) > n:
        raise DimensionError(f"|h| must not exceed n (n={n}, h={h})")
    if (n - h) % 2:
        raise DimensionError(f"n and h must have the same parity (n={n}, h={h})")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PolymerConfig:
    """``k`` paths stored as a ``(k, n+1)`` height array (row 0 is polymer 1).

    Only the shape and the (n, h) parity rule are enforced here; path and
    ordering constraints are checked by :func:`validate`, so that invalid
    candidates can still be represented and rejected.
    """

    heights: np.ndarray
    h: int = field(default=None)

    def __post_init__(self):
        heights = _frozen(self.heights)
        if heights.ndim == 1:
            heights = _frozen(heights[None, :])
        if heights.ndim != 2 or heights.shape[0] < 1:
            raise DimensionError("heights must be a non-empty (k, n+1) array")
        object.__setattr__(self, "heights", heights)
        h = int(heights[0, -1]) if self.h is None else int(self.h)
        object.__setattr__(self, "h", h)
        _check_nh(self.n, h)

    @property
    def k(self) -> int:
        return self.heights.shape[0]

    @property
    def n(self) -> int:
        return self.heights.shape[1] - 1

    @property
    def N(self) -> int:
        return (self.n + self.h) // 2

    def polymer(self, j: int) -> np.ndarray:
        """Heights of polymer ``j`` (1-based)."""
        if not 1 <= j <= self.k:
            raise IndexError(f"polymer label {j} outside 1..{self.k}")
        return self.heights[j - 1]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.heights, axis=1)

    def key(self) -> bytes:
        return self.heights.tobytes()

    def __eq__(self, other):
        if not isinstance(other, PolymerConfig):
            return NotImplemented
        return self.heights.shape == other.heights.shape and bool(
            np.array_equal(self.heights, other.heights)
        )

    def __hash__(self):
        return hash((self.heights.shape, self.key()))

    def __repr__(self):
        return f"PolymerConfig(k={self.k}, n={self.n}, h={self.h}, {format_paths(self)!r})"

    @classmethod
    def replicate(cls, path, k: int) -> "PolymerConfig":
        """The configuration with all ``k`` polymers equal to ``path``."""
        if k < 1:
            raise DimensionError("k must be >= 1")
        path = np.asarray(path, dtype=np.int64)
        return cls(np.tile(path, (k, 1)))


@dataclass(frozen=True, eq=False)
class BoundaryPair:
    """Ceiling ``xi`` and floor ``sigma``; both single paths with xi >= sigma."""

    xi: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        xi, sigma = _frozen(self.xi), _frozen(self.sigma)
        if xi.ndim != 1 or xi.shape != sigma.shape:
            raise DimensionError("ceiling and floor must be paths of equal length")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "sigma", sigma)
        n = xi.size - 1
        h = int(xi[-1])
        _check_nh(n, h)
        for name, p in (("ceiling", xi), ("floor", sigma)):
            if not _is_path(p, h):
                raise InvalidConfigError(f"{name} is not a +/-1 path from 0 to {h}")
        if np.any(xi < sigma):
            raise InvalidConfigError("ceiling must dominate floor")

    @property
    def n(self) -> int:
        return self.xi.size - 1

    @property
    def h(self) -> int:
        return int(self.xi[-1])

    @classmethod
    def full(cls, n: int, h: int = 0) -> "BoundaryPair":
        """The unconstrained pair (wedge, vee)."""
        return cls(wedge(n, h), vee(n, h))

    def __eq__(self, other):
        if not isinstance(other, BoundaryPair):
            return NotImplemented
        return np.array_equal(self.xi, other.xi) and np.array_equal(self.sigma, other.sigma)

    def __hash__(self):
        return hash((self.xi.tobytes(), self.sigma.tobytes()))


def _is_path(p: np.ndarray, h: int) -> bool:
    return p[0] == 0 and p[-1] == h and bool(np.all(np.abs(np.diff(p)) == 1))


def wedge(n: int, h: int = 0) -> np.ndarray:
    """Maximal single path: up to (n+h)/2, then down."""
    _check_nh(n, h)
    x = np.arange(n + 1, dtype=np.int64)
    return np.minimum(x, (n + h) - x)


def vee(n: int, h: int = 0) -> np.ndarray:
    """Minimal single path: down to -(n-h)/2, then up."""
    _check_nh(n, h)
    x = np.arange(n + 1, dtype=np.int64)
    return np.maximum(-x, (h - n) + x)


def maximal_config(bounds: BoundaryPair, k: int) -> PolymerConfig:
    return PolymerConfig.replicate(bounds.xi, k)


def minimal_config(bounds: BoundaryPair, k: int) -> PolymerConfig:
    return PolymerConfig.replicate(bounds.sigma, k)


def _check_same_dims(config: PolymerConfig, bounds: BoundaryPair) -> None:
    if config.n != bounds.n or config.h != bounds.h:
        raise DimensionError(
            f"config (n={config.n}, h={config.h}) does not match boundaries "
            f"(n={bounds.n}, h={bounds.h})"
        )


def validate(config: PolymerConfig, bounds: BoundaryPair | None = None) -> bool:
    """True iff ``config`` is a valid element of E_{xi,sigma}.

    Dimension mismatches raise :class:`DimensionError` instead of returning
    False.  Without ``bounds`` only the path and ordering rules are checked.
    """
    H = config.heights
    if bounds is not None:
        _check_same_dims(config, bounds)
    if np.any(H[:, 0] != 0) or np.any(H[:, -1] != config.h):
        return False
    if np.any(np.abs(np.diff(H, axis=1)) != 1):
        return False
    if config.k > 1 and np.any(H[:-1] < H[1:]):
        return False
    if bounds is not None:
        if np.any(H[0] > bounds.xi) or np.any(H[-1] < bounds.sigma):
            return False
    return True


def excess_volume(config: PolymerConfig, xi) -> int:
    """Total area between the ceiling and all polymers, halved."""
    xi = np.asarray(xi, dtype=np.int64)
    if xi.shape != (config.n + 1,):
        raise DimensionError("ceiling length does not match configuration")
    if np.any(config.heights[0] > xi):
        raise InvalidConfigError("ceiling lies below the top polymer")
    diff = int((xi[None, 1:-1] - config.heights[:, 1:-1]).sum())
    return diff // 2


def dominates(a: PolymerConfig, b: PolymerConfig) -> bool:
    """Pointwise order: every polymer of ``a`` lies weakly above that of ``b``."""
    if a.heights.shape != b.heights.shape or a.h != b.h:
        raise DimensionError("configurations have different (k, n, h)")
    return bool(np.all(a.heights >= b.heights))


# --- particles ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParticleConfig:
    """Positions of the up-steps, a ``(k, N)`` array of values in 0..n-1.

    ``position(i, j)`` uses 1-based labels and extends the array with
    sentinels: labels below 1 sit at -1 and labels above N sit at n, so that
    the free particles of any window lie strictly between its two frozen
    neighbours.
    """

    n: int
    h: int
    positions: np.ndarray

    def __post_init__(self):
        _check_nh(self.n, self.h)
        pos = _frozen(self.positions)
        if pos.ndim == 1:
            pos = _frozen(pos[None, :])
        if pos.shape[1] != (self.n + self.h) // 2:
            raise DimensionError(
                f"expected N={(self.n + self.h) // 2} particles per polymer, got {pos.shape[1]}"
            )
        object.__setattr__(self, "positions", pos)

    @property
    def k(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    def position(self, i: int, j: int) -> int:
        if not 1 <= j <= self.k:
            raise IndexError(f"polymer label {j} outside 1..{self.k}")
        if i < 1:
            return -1
        if i > self.N:
            return self.n
        return int(self.positions[j - 1, i - 1])

    def is_interlaced(self) -> bool:
        P = self.positions
        if P.shape[1] > 1 and np.any(np.diff(P, axis=1) <= 0):
            return False
        if P.size and (P.min() < 0 or P.max() > self.n - 1):
            return False
        return self.k == 1 or bool(np.all(P[:-1] <= P[1:]))

    def __eq__(self, other):
        if not isinstance(other, ParticleConfig):
            return NotImplemented
        return (self.n, self.h) == (other.n, other.h) and np.array_equal(
            self.positions, other.positions
        )

    def __hash__(self):
        return hash((self.n, self.h, self.positions.tobytes()))


def path_particles(path) -> np.ndarray:
    return np.flatnonzero(np.diff(np.asarray(path)) == 1).astype(np.int64)


def to_particles(config: PolymerConfig) -> ParticleConfig:
    pos = np.stack([path_particles(row) for row in config.heights])
    return ParticleConfig(config.n, config.h, pos)


def path_from_particles(positions, n: int) -> np.ndarray:
    inc = -np.ones(n, dtype=np.int64)
    inc[np.asarray(positions, dtype=np.int64)] = 1
    return np.concatenate(([0], np.cumsum(inc)))


def from_particles(p: ParticleConfig) -> PolymerConfig:
    H = np.stack([path_from_particles(row, p.n) for row in p.positions])
    return PolymerConfig(H, h=p.h)


# --- plane partitions and cube sets ------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanePartition:
    """Heights on the ``a x b`` rectangle, weakly decreasing along both axes."""

    a: int
    b: int
    c: int
    heights: np.ndarray

    def __post_init__(self):
        H = _frozen(self.heights).reshape(self.a, self.b)
        object.__setattr__(self, "heights", H)

    def is_valid(self) -> bool:
        H = self.heights
        if H.size and (H.min() < 0 or H.max() > self.c):
            return False
        return bool(np.all(np.diff(H, axis=0) <= 0) and np.all(np.diff(H, axis=1) <= 0))

    @property
    def volume(self) -> int:
        return int(self.heights.sum())

    def __le__(self, other: "PlanePartition") -> bool:
        return bool(np.all(self.heights <= other.heights))

    def __eq__(self, other):
        if not isinstance(other, PlanePartition):
            return NotImplemented
        return (self.a, self.b, self.c) == (other.a, other.b, other.c) and np.array_equal(
            self.heights, other.heights
        )

    def __hash__(self):
        return hash((self.a, self.b, self.c, self.heights.tobytes()))


def _box_dims(k: int, n: int, h: int) -> tuple[int, int, int]:
    return (n - h) // 2, (n + h) // 2, k


def _diagonal_index(a: int, b: int):
    # site x and position t along the anti-corner diagonal of every cell;
    # the corner cell sits under the peak of the wedge at x = b
    r1, r2 = np.meshgrid(np.arange(a), np.arange(b), indexing="ij")
    return b + r1 - r2, np.minimum(r1, r2)


def to_plane_partition(config: PolymerConfig) -> PlanePartition:
    """Stack layers of unit height, bottom layer from polymer k.

    Cell ``(r1, r2)`` lies on site ``x = b + r1 - r2`` and is covered by
    polymer j when ``min(r1, r2) < (wedge_x - eta^(j)_x) / 2``.  The map is
    order-reversing: higher paths give lower surfaces.
    """
    a, b, c = _box_dims(config.k, config.n, config.h)
    if a == 0 or b == 0:
        return PlanePartition(a, b, c, np.zeros((a, b), dtype=np.int64))
    w = wedge(config.n, config.h)
    x, t = _diagonal_index(a, b)
    depth = (w[None, :] - config.heights) // 2  # (k, n+1)
    covered = t[None, :, :] < depth[:, x]
    return PlanePartition(a, b, c, covered.sum(axis=0))


def from_plane_partition(pp: PlanePartition, k: int, n: int, h: int) -> PolymerConfig:
    a, b, c = _box_dims(k, n, h)
    if (pp.a, pp.b, pp.c) != (a, b, c):
        raise DimensionError(
            f"plane partition box {(pp.a, pp.b, pp.c)} does not match {(a, b, c)}"
        )
    w = wedge(n, h)
    H = np.tile(w, (k, 1))
    if a and b:
        x, _ = _diagonal_index(a, b)
        for j in range(1, k + 1):
            layer = pp.heights >= (k - j + 1)
            counts = np.bincount(x[layer], minlength=n + 1)
            H[j - 1] = w - 2 * counts
    return PolymerConfig(H, h=h)


@dataclass(frozen=True, eq=False)
class MonotoneCubeSet:
    """Monotone union of unit cubes in [0, M]^3 as an ``M x M`` column-height map."""

    M: int
    column_heights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "column_heights", _frozen(self.column_heights).reshape(self.M, self.M))

    def is_monotone(self) -> bool:
        return PlanePartition(self.M, self.M, self.M, self.column_heights).is_valid()

    def __contains__(self, r) -> bool:
        r1, r2, r3 = r
        return bool(self.column_heights[r1, r2] > r3)

    def __len__(self) -> int:
        return int(self.column_heights.sum())

    def cubes(self) -> np.ndarray:
        """Boolean ``(M, M, M)`` occupancy array indexed by (r1, r2, r3)."""
        return self.column_heights[:, :, None] > np.arange(self.M)[None, None, :]

    def issubset(self, other: "MonotoneCubeSet") -> bool:
        return bool(np.all(self.column_heights <= other.column_heights))

    def __eq__(self, other):
        if not isinstance(other, MonotoneCubeSet):
            return NotImplemented
        return self.M == other.M and np.array_equal(self.column_heights, other.column_heights)

    def __hash__(self):
        return hash((self.M, self.column_heights.tobytes()))


def _square_M(k: int, n: int, h: int) -> int:
    if h != 0 or n != 2 * k:
        raise DimensionError(f"cube representation needs h=0, n=2M, k=M (got k={k}, n={n}, h={h})")
    return k


def to_cube_set(config: PolymerConfig) -> MonotoneCubeSet:
    M = _square_M(config.k, config.n, config.h)
    # transposed so that cube (r1, r2, r3) sits at site M - r1 + r2
    return MonotoneCubeSet(M, to_plane_partition(config).heights.T)


def from_cube_set(s: MonotoneCubeSet) -> PolymerConfig:
    M = s.M
    return from_plane_partition(PlanePartition(M, M, M, s.column_heights.T), M, 2 * M, 0)


# --- text encoding -----------------------------------------------------------


def path_to_string(path) -> str:
    return "".join("+" if d > 0 else "-" for d in np.diff(np.asarray(path)))


def path_from_string(text: str) -> np.ndarray:
    text = text.strip()
    bad = set(text) - {"+", "-"}
    if bad:
        raise ValueError(f"increment string may only contain '+' and '-', got {sorted(bad)}")
    steps = np.array([1 if ch == "+" else -1 for ch in text], dtype=np.int64)
    return np.concatenate(([0], np.cumsum(steps)))


def format_paths(config: PolymerConfig) -> str:
    """One '+'/'-' increment string per polymer, top polymer first."""
    return "\n".join(path_to_string(row) for row in config.heights)


def parse_paths(text: str) -> PolymerConfig:
    rows = [line for line in text.split() if line]
    if not rows:
        raise ValueError("empty configuration text")
    paths = [path_from_string(r) for r in rows]
    if len({p.size for p in paths}) != 1:
        raise DimensionError("all polymers must have the same length")
    return PolymerConfig(np.stack(paths))


def format_plane_partition(pp: PlanePartition) -> str:
    return "\n".join(" ".join(str(int(v)) for v in row) for row in pp.heights)
