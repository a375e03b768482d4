"""Integer-lattice and dense-field primitives.

Lattice coordinates and the Diophantine algebra are exact integers; only
field values are floating point.  Neighbour sums are accumulated in a
canonical order (per-axis pair sums, sorted before adding) so that every
operator here is bitwise equivariant under the hyperoctahedral group.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityExceeded, OutOfBox, UsageError, ZeroVector

MAX_DIM = 4


@dataclass(frozen=True)
class Slope:
    """Primitive nonzero integer direction."""

    coords: tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        if not 1 <= len(coords) <= MAX_DIM:
            raise UsageError(f"dimension {len(coords)} not in 1..{MAX_DIM}")
        if not any(coords):
            raise ZeroVector("slope must have a nonzero entry")
        if reduce(math.gcd, (abs(c) for c in coords)) != 1:
            raise UsageError(f"slope {coords} is not gcd-reduced")

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def n(self) -> int:
        """Largest absolute entry."""
        return max(abs(c) for c in self.coords)

    @property
    def m(self) -> int:
        """Number of entries attaining the largest absolute value."""
        n = self.n
        return sum(1 for c in self.coords if abs(c) == n)

    @property
    def norm2(self) -> int:
        return sum(c * c for c in self.coords)

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm2)

    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.int64)

    def canonical(self) -> "Slope":
        """Representative of the orbit under coordinate signs and permutations."""
        return Slope(tuple(sorted((abs(c) for c in self.coords), reverse=True)))

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)

    def __str__(self):
        return ",".join(str(c) for c in self.coords)


def reduce_slope(v: Iterable[int]) -> Slope:
    """Divide an integer vector by the gcd of its entries (signs preserved).

    >>> reduce_slope((-6, 9))
    Slope(coords=(-2, 3))
    """
    v = tuple(int(c) for c in v)
    if not any(v):
        raise ZeroVector("cannot reduce the zero vector")
    g = reduce(math.gcd, (abs(c) for c in v))
    return Slope(tuple(c // g for c in v))


def as_int_vector(v) -> tuple[int, ...]:
    if isinstance(v, Slope):
        return v.coords
    out = []
    for c in v:
        if isinstance(c, (float, np.floating)) and not float(c).is_integer():
            raise UsageError(f"non-integer lattice coordinate {c!r}")
        out.append(int(c))
    return tuple(out)


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned box ``lo <= x <= hi`` (inclusive) in Z^d."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo, hi = tuple(map(int, self.lo)), tuple(map(int, self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise UsageError("lo and hi must be nonempty and of equal length")
        if any(a > b for a, b in zip(lo, hi)):
            raise UsageError(f"empty box lo={lo} hi={hi}")

    @classmethod
    def centered(cls, half_width: int, d: int) -> "LatticeBox":
        return cls((-half_width,) * d, (half_width,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(a <= c <= b for a, c, b in zip(self.lo, x, self.hi))

    def index(self, x: Sequence[int]) -> tuple[int, ...]:
        if not self.contains(x):
            raise OutOfBox(f"site {tuple(x)} outside box {self.lo}..{self.hi}")
        return tuple(int(c) - a for c, a in zip(x, self.lo))

    def coordinates(self) -> list[np.ndarray]:
        """Open meshgrid of coordinate arrays, one per axis."""
        return np.ogrid[tuple(slice(a, b + 1) for a, b in zip(self.lo, self.hi))]

    def frame_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.d):
            sl = [slice(None)] * self.d
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def grown(self, factor: int = 2) -> "LatticeBox":
        """Box scaled about its centre by ``factor`` (used by the retry policy)."""
        lo, hi = [], []
        for a, b in zip(self.lo, self.hi):
            c, r = (a + b) // 2, (b - a + 1) // 2
            lo.append(c - factor * r - 1)
            hi.append(c + factor * r + 1)
        return LatticeBox(tuple(lo), tuple(hi))


@dataclass
class ScalarField:
    """Dense real field on a box; sites outside read ``exterior_value``."""

    box: LatticeBox
    values: np.ndarray
    exterior_value: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.box.shape:
            raise UsageError(f"values shape {self.values.shape} != box shape {self.box.shape}")
        if not np.all(np.isfinite(self.values)):
            raise UsageError("field values must be finite")

    @classmethod
    def zeros(cls, box: LatticeBox, exterior_value: float = 0.0) -> "ScalarField":
        return cls(box, np.zeros(box.shape), exterior_value)

    @property
    def d(self) -> int:
        return self.box.d

    def __getitem__(self, x: Sequence[int]) -> float:
        if self.box.contains(x):
            return float(self.values[self.box.index(x)])
        return float(self.exterior_value)

    def padded(self, width: int = 1) -> np.ndarray:
        return np.pad(self.values, width, mode="constant", constant_values=self.exterior_value)

    def copy(self) -> "ScalarField":
        return ScalarField(self.box, self.values.copy(), self.exterior_value)


class SiteSet:
    """Sorted, deduplicated set of lattice sites stored as an ``(n, d)`` array."""

    __slots__ = ("_sites", "_d")

    def __init__(self, sites=(), d: int | None = None):
        arr = np.asarray(list(sites) if not isinstance(sites, np.ndarray) else sites, dtype=np.int64)
        if arr.size == 0:
            if d is None:
                raise UsageError("dimension required for an empty SiteSet")
            arr = np.zeros((0, d), dtype=np.int64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1) if d == 1 else arr.reshape(1, -1)
        self._d = arr.shape[1]
        if d is not None and d != self._d:
            raise UsageError(f"sites have dimension {self._d}, expected {d}")
        self._sites = np.unique(arr, axis=0) if len(arr) else arr
        self._sites.setflags(write=False)

    @classmethod
    def from_mask(cls, box: LatticeBox, mask: np.ndarray) -> "SiteSet":
        idx = np.argwhere(mask)
        return cls(idx + np.array(box.lo, dtype=np.int64), d=box.d)

    def to_mask(self, box: LatticeBox) -> np.ndarray:
        mask = np.zeros(box.shape, dtype=bool)
        if len(self):
            rel = self._sites - np.array(box.lo)
            inside = np.all((rel >= 0) & (rel < np.array(box.shape)), axis=1)
            if not inside.all():
                raise OutOfBox("site set does not fit in box")
            mask[tuple(rel.T)] = True
        return mask

    @property
    def d(self) -> int:
        return self._d

    @property
    def array(self) -> np.ndarray:
        return self._sites

    def __len__(self):
        return len(self._sites)

    def __iter__(self):
        return (tuple(int(c) for c in row) for row in self._sites)

    def __contains__(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64)
        return bool(len(self) and np.any(np.all(self._sites == x, axis=1)))

    def __eq__(self, other):
        return isinstance(other, SiteSet) and self.d == other.d and np.array_equal(self._sites, other._sites)

    def __repr__(self):
        return f"SiteSet({[tuple(s) for s in self][:8]}{'...' if len(self) > 8 else ''}, d={self.d})"

    def to_set(self) -> set[tuple[int, ...]]:
        return set(self)

    def bounding_box(self) -> LatticeBox:
        return LatticeBox(tuple(self._sites.min(axis=0)), tuple(self._sites.max(axis=0)))


def unit_vectors(d: int) -> list[tuple[int, ...]]:
    return [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]


def _symmetric_neighbour_sum(pair_sums: list[np.ndarray]) -> np.ndarray:
    # Sort the per-axis pair sums so the result does not depend on axis order.
    if len(pair_sums) == 1:
        return pair_sums[0]
    if len(pair_sums) == 2:
        return pair_sums[0] + pair_sums[1]
    stacked = np.sort(np.stack(pair_sums), axis=0)
    total = stacked[0]
    for s in stacked[1:]:
        total = total + s
    return total


def neighbour_sum_array(padded: np.ndarray) -> np.ndarray:
    """Sum of the 2d nearest neighbours for every interior site of a padded array."""
    d = padded.ndim
    core = tuple(slice(1, -1) for _ in range(d))
    pairs = []
    for ax in range(d):
        plus = list(core)
        minus = list(core)
        plus[ax] = slice(2, None)
        minus[ax] = slice(0, -2)
        pairs.append(padded[tuple(plus)] + padded[tuple(minus)])
    return _symmetric_neighbour_sum(pairs)


def laplacian_array(u: ScalarField) -> np.ndarray:
    """Unnormalised graph Laplacian at every site of the box."""
    return neighbour_sum_array(u.padded(1)) - 2 * u.d * u.values


def discrete_laplacian(u: ScalarField, x: Sequence[int]) -> float:
    """``sum_i u(x+e_i) + u(x-e_i) - 2 u(x)``; neighbours off the box read the exterior value."""
    x = tuple(int(c) for c in x)
    if not u.box.contains(x):
        raise OutOfBox(f"site {x} outside box")
    centre = u[x]
    pairs = []
    for e in unit_vectors(u.d):
        xp = tuple(a + b for a, b in zip(x, e))
        xm = tuple(a - b for a, b in zip(x, e))
        pairs.append(np.float64(u[xp]) + np.float64(u[xm]))
    return float(_symmetric_neighbour_sum(pairs) - 2 * u.d * centre)


def boundary_sets(X: SiteSet) -> tuple[SiteSet, SiteSet]:
    """Outer and inner lattice boundary of a finite site set.

    ``outer`` holds sites outside ``X`` adjacent to ``X``; ``inner`` holds
    sites of ``X`` adjacent to the complement.
    """
    pts = X.to_set()
    outer, inner = set(), set()
    units = unit_vectors(X.d)
    for x in pts:
        for e in units:
            for s in (1, -1):
                y = tuple(a + s * b for a, b in zip(x, e))
                if y not in pts:
                    outer.add(y)
                    inner.add(x)
    return SiteSet(sorted(outer), d=X.d), SiteSet(sorted(inner), d=X.d)


def boundary_masks(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array version of :func:`boundary_sets`; sites beyond the array count as outside."""
    pad = np.pad(mask, 1, constant_values=False).astype(np.int8)
    nbr_in = neighbour_sum_array(pad) > 0
    nbr_out = neighbour_sum_array(1 - pad) > 0
    return nbr_in & ~mask, nbr_out & mask


# --- Diophantine lattice -------------------------------------------------


@dataclass(frozen=True)
class DiophantineLattice:
    """Integer vectors orthogonal to a primitive slope."""

    p: Slope
    basis: tuple[tuple[int, ...], ...]
    rank: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rank", len(self.basis))
        for b in self.basis:
            if sum(x * y for x, y in zip(b, self.p.coords)) != 0:
                raise UsageError(f"basis vector {b} not orthogonal to {self.p}")

    def basis_array(self) -> np.ndarray:
        return np.array(self.basis, dtype=np.int64).reshape(self.rank, self.p.d)

    @property
    def covolume(self) -> float:
        """Volume of a fundamental cell; equals |p| for primitive p."""
        if self.rank == 0:
            return 1.0
        B = self.basis_array().astype(float)
        return math.sqrt(abs(np.linalg.det(B @ B.T)))


def _lll(basis: list[list[int]], delta: Fraction = Fraction(3, 4)) -> list[list[int]]:
    b = [list(v) for v in basis]
    n = len(b)
    if n <= 1:
        return b

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gram_schmidt():
        bstar, mu = [], [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            v = [Fraction(x) for x in b[i]]
            for j in range(i):
                mu[i][j] = dot(b[i], bstar[j]) / dot(bstar[j], bstar[j])
                v = [x - mu[i][j] * y for x, y in zip(v, bstar[j])]
            bstar.append(v)
        return bstar, mu

    bstar, mu = gram_schmidt()
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                bstar, mu = gram_schmidt()
        if dot(bstar[k], bstar[k]) >= (delta - mu[k][k - 1] ** 2) * dot(bstar[k - 1], bstar[k - 1]):
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bstar, mu = gram_schmidt()
            k = max(k - 1, 1)
    return b


def diophantine_basis(p: Slope) -> DiophantineLattice:
    """Integer basis of ``{q : p.q = 0}`` by unimodular column elimination.

    Columns of a unimodular ``U`` are combined Euclid-style until ``p U`` has a
    single nonzero entry; the remaining columns span the kernel.  The result is
    LLL-reduced and each vector sign-normalised (first nonzero entry positive).
    """
    d = p.d
    row = list(p.coords)
    U = [[int(i == j) for j in range(d)] for i in range(d)]  # U[i] is column i
    while sum(1 for r in row if r) > 1:
        piv = min((i for i in range(d) if row[i]), key=lambda i: (abs(row[i]), i))
        for j in range(d):
            if j != piv and row[j]:
                q = row[j] // row[piv]
                row[j] -= q * row[piv]
                U[j] = [a - q * b for a, b in zip(U[j], U[piv])]
    g_idx = next(i for i in range(d) if row[i])
    kernel = [U[j] for j in range(d) if j != g_idx]
    kernel = _lll(kernel)
    normed = []
    for v in kernel:
        first = next(x for x in v if x)
        normed.append(tuple(x if first > 0 else -x for x in v))
    return DiophantineLattice(p, tuple(normed))


def enumerate_lattice(L: DiophantineLattice, R: float, limit: int = 10_000_000) -> np.ndarray:
    """All ``q`` in the lattice with ``|q| <= R``, as a lexicographically sorted ``(N, d)`` array.

    Coefficients are bounded by ``|c_i| <= R sqrt((G^-1)_ii)`` with ``G`` the
    basis Gram matrix, then filtered exactly in integer arithmetic.
    """
    if R < 0:
        raise UsageError("radius must be nonnegative")
    d = L.p.d
    if L.rank == 0:
        return np.zeros((1, d), dtype=np.int64)
    B = L.basis_array()
    Ginv = np.linalg.inv((B @ B.T).astype(float))
    bounds = [int(math.floor(R * math.sqrt(Ginv[i, i]) + 1e-9)) for i in range(L.rank)]
    count = math.prod(2 * b + 1 for b in bounds)
    if count > limit:
        raise CapacityExceeded(f"enumeration of {count} coefficient tuples exceeds limit {limit}")
    axes = [np.arange(-b, b + 1, dtype=np.int64) for b in bounds]
    coeffs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, L.rank)
    q = coeffs @ B
    keep = np.einsum("ij,ij->i", q, q) <= R * R
    q = q[keep]
    order = np.lexsort(q.T[::-1])
    return q[order]


def primitive_vectors(d: int, max_coord: int, canonical: bool = False) -> list[Slope]:
    """All primitive integer vectors with ``max|p_k| <= max_coord``.

    With ``canonical=True`` only orbit representatives (nonnegative entries
    in non-increasing order) are returned.  Both lists are lexicographic.
    """
    out = []
    if canonical:
        for v in itertools.combinations_with_replacement(range(max_coord, -1, -1), d):
            if any(v) and reduce(math.gcd, v) == 1:
                out.append(Slope(v))
        return sorted(out, key=lambda s: s.coords)
    for v in itertools.product(range(-max_coord, max_coord + 1), repeat=d):
        if any(v) and reduce(math.gcd, (abs(c) for c in v)) == 1:
            out.append(Slope(v))
    return out
