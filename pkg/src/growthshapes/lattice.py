"""Coordinates, direction maps and finite site sets on Z^d.

A :class:`Cluster` is a boolean membership array over the origin-centred box
``[-R, R]^d``; array axis ``k`` is coordinate ``k`` and index ``x_k + R``.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Coord = tuple  # tuple of d ints


def as_coord(x, d: int | None = None) -> tuple:
    c = tuple(int(v) for v in np.atleast_1d(x))
    if d is not None and len(c) != d:
        raise ValueError(f"expected a {d}-dimensional coordinate, got {c}")
    return c


class DirectionMap:
    """Fixed assignment of direction indices 0..2d-1 to signed unit vectors."""

    def __init__(self, table: Sequence[Sequence[int]]):
        vecs = np.asarray(table, dtype=np.int64)
        if vecs.ndim != 2 or vecs.shape[0] != 2 * vecs.shape[1] or vecs.shape[1] < 1:
            raise ValueError("a direction map needs exactly 2d vectors of length d")
        d = vecs.shape[1]
        seen = set()
        for v in vecs:
            nz = np.flatnonzero(v)
            if len(nz) != 1 or abs(v[nz[0]]) != 1:
                raise ValueError(f"{tuple(v)} is not a signed unit vector")
            seen.add((int(nz[0]), int(v[nz[0]])))
        if len(seen) != 2 * d:
            raise ValueError("each of the 2d unit vectors must appear exactly once")
        vecs.setflags(write=False)
        self.table = vecs
        self.d = d

    @classmethod
    def default(cls, d: int) -> "DirectionMap":
        """left, right, up, down for d = 2; otherwise e_{2k} = -u_k, e_{2k+1} = +u_k."""
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if d == 2:
            return cls([(-1, 0), (1, 0), (0, 1), (0, -1)])
        eye = np.eye(d, dtype=np.int64)
        return cls([s * eye[k] for k in range(d) for s in (-1, 1)])

    def __len__(self):
        return 2 * self.d

    def __eq__(self, other):
        return isinstance(other, DirectionMap) and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(self.table.tobytes())

    def __repr__(self):
        return f"DirectionMap({[tuple(int(c) for c in v) for v in self.table]})"

    def vector(self, i: int) -> tuple:
        return direction_vector(self, i)

    def offsets(self, strides: Sequence[int]) -> np.ndarray:
        """Flat-index offsets of each direction for an array with ``strides``
        (in elements)."""
        return self.table @ np.asarray(strides, dtype=np.int64)

    def to_text(self) -> str:
        return " ".join(",".join(str(int(c)) for c in v) for v in self.table)

    @classmethod
    def from_text(cls, text: str) -> "DirectionMap":
        return cls([[int(c) for c in tok.split(",")] for tok in text.split()])


def direction_vector(dirmap: DirectionMap, i: int) -> tuple:
    if not 0 <= i < len(dirmap):
        raise IndexError(f"direction index {i} out of range 0..{len(dirmap) - 1}")
    return tuple(int(c) for c in dirmap.table[i])


class Cluster:
    """Immutable finite set of lattice sites stored as a box bitmap."""

    __slots__ = ("mask",)

    def __init__(self, mask: np.ndarray):
        mask = np.array(mask, dtype=bool)
        if mask.ndim < 1 or len(set(mask.shape)) != 1 or mask.shape[0] % 2 != 1:
            raise ValueError("cluster mask must be an odd-sided hypercube")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    def __setattr__(self, name, value):
        raise AttributeError("Cluster is immutable")

    @classmethod
    def empty(cls, d: int, radius: int = 0) -> "Cluster":
        return cls(np.zeros((2 * radius + 1,) * d, dtype=bool))

    @classmethod
    def from_sites(cls, sites: Iterable, d: int) -> "Cluster":
        pts = np.asarray(list(sites), dtype=np.int64).reshape(-1, d)
        R = int(np.abs(pts).max()) if len(pts) else 0
        mask = np.zeros((2 * R + 1,) * d, dtype=bool)
        if len(pts):
            mask[tuple((pts + R).T)] = True
        return cls(mask)

    @property
    def d(self) -> int:
        return self.mask.ndim

    @property
    def radius(self) -> int:
        return self.mask.shape[0] // 2

    def __len__(self):
        return int(np.count_nonzero(self.mask))

    def __bool__(self):
        return bool(self.mask.any())

    def __contains__(self, x):
        c = as_coord(x, self.d)
        R = self.radius
        if max(abs(v) for v in c) > R:
            return False
        return bool(self.mask[tuple(v + R for v in c)])

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.sites())

    def sites(self) -> np.ndarray:
        """Member coordinates as an (m, d) array in lexicographic order."""
        return np.argwhere(self.mask) - self.radius

    def linf_radius(self) -> int:
        """Smallest r >= 0 with self inside the cube C(r)."""
        if not self:
            return 0
        return int(np.abs(self.sites()).max())

    def with_radius(self, R: int) -> "Cluster":
        r0 = self.radius
        if R == r0:
            return self
        if R > r0:
            out = np.zeros((2 * R + 1,) * self.d, dtype=bool)
            out[(slice(R - r0, R + r0 + 1),) * self.d] = self.mask
            return Cluster(out)
        if self.linf_radius() > R:
            raise ValueError("cropping would drop members")
        return Cluster(self.mask[(slice(r0 - R, r0 + R + 1),) * self.d])

    def tight(self) -> "Cluster":
        return self.with_radius(self.linf_radius())

    def _aligned(self, other: "Cluster"):
        if not isinstance(other, Cluster):
            return NotImplemented
        if other.d != self.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")
        R = max(self.radius, other.radius)
        return self.with_radius(R).mask, other.with_radius(R).mask

    def __or__(self, other):
        a, b = self._aligned(other)
        return Cluster(a | b)

    def __and__(self, other):
        a, b = self._aligned(other)
        return Cluster(a & b)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return Cluster(a & ~b)

    def __xor__(self, other):
        a, b = self._aligned(other)
        return Cluster(a ^ b)

    def issubset(self, other: "Cluster") -> bool:
        a, b = self._aligned(other)
        return not np.any(a & ~b)

    __le__ = issubset

    def __eq__(self, other):
        if not isinstance(other, Cluster) or other.d != self.d:
            return NotImplemented
        a, b = self._aligned(other)
        return bool(np.array_equal(a, b))

    def __hash__(self):
        t = self.tight()
        return hash((t.d, t.mask.tobytes()))

    def __repr__(self):
        return f"Cluster(d={self.d}, sites={len(self)}, radius={self.radius})"


def _grid(R: int, d: int):
    ax = np.arange(-R, R + 1, dtype=np.int64)
    return np.meshgrid(*([ax] * d), indexing="ij", sparse=True)


def shape_sites(kind: str, r: int, d: int) -> Cluster:
    """The cube ``max_i |x_i| <= r`` or the diamond ``sum_i |x_i| <= r``.

    A negative radius gives the empty set; non-integer radii act through
    their floor.
    """
    r = math.floor(r)
    if kind not in ("cube", "diamond"):
        raise ValueError(f"unknown shape {kind!r}")
    if r < 0:
        return Cluster.empty(d)
    if kind == "cube":
        return Cluster(np.ones((2 * r + 1,) * d, dtype=bool))
    total = sum(np.abs(g) for g in _grid(r, d))
    return Cluster(np.broadcast_to(total <= r, (2 * r + 1,) * d))


def cube(r, d: int) -> Cluster:
    return shape_sites("cube", r, d)


def diamond(r, d: int) -> Cluster:
    return shape_sites("diamond", r, d)


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def lattice_ball(n: int, d: int) -> Cluster:
    """First ``n`` sites by Euclidean distance, ties broken lexicographically."""
    if n < 1:
        raise ValueError("lattice ball needs n >= 1")
    R = int(math.ceil((n / _unit_ball_volume(d)) ** (1.0 / d))) + 1
    while True:
        dist2 = sum(g * g for g in _grid(R, d))
        dist2 = np.broadcast_to(dist2, (2 * R + 1,) * d)
        # every site within distance R lies inside the box, so the first n are
        # all present once that many sites fit in the radius-R ball
        if np.count_nonzero(dist2 <= R * R) >= n:
            break
        R += max(1, R // 2)
    flat = dist2.reshape(-1)
    # C-order flat index is lexicographic order on coordinates
    order = np.argsort(flat, kind="stable")[:n]
    mask = np.zeros(flat.shape, dtype=bool)
    mask[order] = True
    return Cluster(mask.reshape(dist2.shape)).tight()


def sym_diff_count(a: Cluster, b: Cluster) -> int:
    return len(a ^ b)


def neighbor_dilation(a: Cluster) -> Cluster:
    """``a`` together with every lattice neighbour of a member."""
    m = a.with_radius(a.radius + 1).mask
    out = m.copy()
    for k in range(a.d):
        lo = [slice(None)] * a.d
        hi = [slice(None)] * a.d
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        out[tuple(lo)] |= m[tuple(hi)]
        out[tuple(hi)] |= m[tuple(lo)]
    return Cluster(out)


def exterior_boundary(a: Cluster) -> Cluster:
    return neighbor_dilation(a) - a
