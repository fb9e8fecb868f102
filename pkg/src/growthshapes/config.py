"""Model parameters, the (H, T, D) configuration and single-site moves."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Cluster, DirectionMap, as_coord

H_DTYPE = np.int64
T_DTYPE = np.int64
D_DTYPE = np.int8


class Model(str, enum.Enum):
    RR = "RR"
    DR = "DR"
    SP = "SP"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown model {value!r}; expected RR, DR or SP") from None


class SeedMode(str, enum.Enum):
    ABSOLUTE = "absolute"  # H(0) = n
    ADDITIVE = "additive"  # H(0) = h + n

    @classmethod
    def parse(cls, value) -> "SeedMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown seed mode {value!r}") from None


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: Model
    d: int
    h: int
    dirmap: DirectionMap = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Model.parse(self.kind))
        if self.d < 1:
            raise InvalidSpec("dimension must be >= 1")
        if self.dirmap is None:
            object.__setattr__(self, "dirmap", DirectionMap.default(self.d))
        elif self.dirmap.d != self.d:
            raise InvalidSpec("direction map dimension does not match d")
        if not self.h < self.h_max:
            raise InvalidSpec(
                f"{self.kind.value} in d={self.d} requires h < h_max = {self.h_max} "
                f"(got h={self.h})"
            )

    @property
    def c(self) -> int:
        return {Model.RR: 1, Model.DR: 2, Model.SP: 2 * self.d}[self.kind]

    @property
    def h_max(self) -> int:
        return self.c - 1

    @property
    def ndir(self) -> int:
        return 2 * self.d

    def with_h(self, h: int) -> "ModelSpec":
        return ModelSpec(self.kind, self.d, h, self.dirmap)


def initial_radius(spec: ModelSpec, n: int) -> int:
    """Box radius guess from the volume each visited site must absorb.

    For SP this follows the sandwich D(r-1) in T in C(r) together with the
    average-height bounds; for the routers every toppled site holds at least
    -h particles above background. Too small is harmless: the box grows.
    """
    per_site = -spec.h + (spec.d if spec.kind is Model.SP else 0)
    vol = max(n, 1) / max(per_site, 1)
    ball = math.pi ** (spec.d / 2) / math.gamma(spec.d / 2 + 1)
    return int(math.ceil(1.1 * (vol / ball) ** (1.0 / spec.d))) + 4


class Configuration:
    """Particle count H, toppling count T and direction index D over [-R, R]^d.

    Sites outside the box are implicitly at background: H = h, T = 0,
    D = ``d0_fill``. The box grows on demand and never shrinks.
    """

    def __init__(self, spec: ModelSpec, H, T, D, *, n=0, mode=SeedMode.ABSOLUTE, d0_fill=0):
        self.spec = spec
        self.H = np.ascontiguousarray(H, dtype=H_DTYPE)
        self.T = np.ascontiguousarray(T, dtype=T_DTYPE)
        self.D = np.ascontiguousarray(D, dtype=D_DTYPE)
        shape = self.H.shape
        if (
            self.H.ndim != spec.d
            or len(set(shape)) != 1
            or shape[0] % 2 != 1
            or self.T.shape != shape
            or self.D.shape != shape
        ):
            raise ValueError("H, T, D must share an odd-sided hypercube shape of dimension d")
        self.n = int(n)
        self.mode = SeedMode.parse(mode)
        self.d0_fill = int(d0_fill)

    # geometry ---------------------------------------------------------------
    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def radius(self) -> int:
        return self.H.shape[0] // 2

    @property
    def side(self) -> int:
        return self.H.shape[0]

    @property
    def strides(self) -> tuple:
        s = self.side
        return tuple(s ** (self.d - 1 - k) for k in range(self.d))

    def offsets(self) -> np.ndarray:
        return self.spec.dirmap.offsets(self.strides)

    def index(self, x) -> tuple:
        c = as_coord(x, self.d)
        R = self.radius
        if max(abs(v) for v in c) > R:
            raise IndexError(f"site {c} outside box of radius {R}")
        return tuple(v + R for v in c)

    def flat_index(self, x) -> int:
        return int(np.ravel_multi_index(self.index(x), self.H.shape))

    def coord_of(self, flat: int) -> tuple:
        return tuple(int(i) - self.radius for i in np.unravel_index(flat, self.H.shape))

    def edge_mask(self) -> np.ndarray:
        """Flat uint8 mask of the outermost box layer, where toppling would
        deposit outside the box."""
        m = np.zeros(self.H.shape, dtype=np.uint8)
        for k in range(self.d):
            sl = [slice(None)] * self.d
            sl[k] = 0
            m[tuple(sl)] = 1
            sl[k] = -1
            m[tuple(sl)] = 1
        return m.reshape(-1)

    def grow(self, new_radius: int | None = None) -> None:
        """Embed the fields into a larger box; default doubles (min +8)."""
        R = self.radius
        if new_radius is None:
            new_radius = max(2 * R, R + 8)
        if new_radius <= R:
            return
        side = 2 * new_radius + 1
        inner = (slice(new_radius - R, new_radius + R + 1),) * self.d
        H = np.full((side,) * self.d, self.spec.h, dtype=H_DTYPE)
        T = np.zeros((side,) * self.d, dtype=T_DTYPE)
        D = np.full((side,) * self.d, self.d0_fill, dtype=D_DTYPE)
        H[inner], T[inner], D[inner] = self.H, self.T, self.D
        self.H, self.T, self.D = H, T, D

    def ensure_interior(self, x) -> None:
        """Grow until ``x`` and all its neighbours lie inside the box."""
        need = max(abs(v) for v in as_coord(x, self.d)) + 1
        while self.radius < need:
            self.grow()

    def with_radius(self, R: int) -> "Configuration":
        out = self.copy()
        out.grow(R)
        return out

    # bookkeeping --------------------------------------------------------------
    def copy(self) -> "Configuration":
        return Configuration(
            self.spec, self.H.copy(), self.T.copy(), self.D.copy(),
            n=self.n, mode=self.mode, d0_fill=self.d0_fill,
        )

    def fields_equal(self, other: "Configuration", compare_d: bool = True) -> bool:
        """Site-wise equality of (H, T[, D]) after aligning boxes."""
        R = max(self.radius, other.radius)
        a, b = self.with_radius(R), other.with_radius(R)
        ok = np.array_equal(a.H, b.H) and np.array_equal(a.T, b.T)
        if compare_d:
            ok = ok and np.array_equal(a.D, b.D)
        return bool(ok)

    def total_mass(self) -> int:
        """Sum of H - h over the box (particles above background)."""
        return int(np.sum(self.H - self.spec.h))

    def is_allowed(self) -> bool:
        T, H = self.T, self.H
        return bool(
            np.all(T >= 0)
            and np.all(H[T > 0] >= 0)
            and np.all(H[T == 0] >= self.spec.h)
            and np.all((self.D >= 0) & (self.D < self.spec.ndir))
        )

    def is_stable(self) -> bool:
        return bool(np.all(self.H <= self.spec.h_max))

    def unstable_sites(self) -> np.ndarray:
        return np.argwhere(self.H > self.spec.h_max) - self.radius

    def toppled(self) -> Cluster:
        return Cluster(self.T > 0)

    def visited(self) -> Cluster:
        return Cluster((self.T > 0) | (self.H > self.spec.h))

    def __repr__(self):
        s = self.spec
        return (
            f"Configuration({s.kind.value}, d={s.d}, h={s.h}, n={self.n}, "
            f"mode={self.mode.value}, radius={self.radius})"
        )


def seed(spec: ModelSpec, n: int, mode=SeedMode.ABSOLUTE, d0=0, radius=None) -> Configuration:
    """Initial configuration: n at the origin (or h + n when additive), h elsewhere.

    ``d0`` is a constant direction index or a full D array whose box is
    embedded at the centre (sites outside it start at direction 0).
    """
    if n < 0:
        raise ValueError("particle count must be >= 0")
    mode = SeedMode.parse(mode)
    if radius is None:
        radius = initial_radius(spec, n)
    d0_fill = 0
    if np.ndim(d0) == 0:
        d0_fill = int(d0)
        if not 0 <= d0_fill < spec.ndir:
            raise ValueError(f"initial direction {d0_fill} out of range")
    else:
        table = np.asarray(d0)
        if table.ndim != spec.d:
            raise ValueError("direction table dimension does not match d")
        if np.any((table < 0) | (table >= spec.ndir)):
            raise ValueError("direction table entries out of range")
        radius = max(radius, table.shape[0] // 2 + 1)
    side = 2 * radius + 1
    H = np.full((side,) * spec.d, spec.h, dtype=H_DTYPE)
    H[(radius,) * spec.d] = n if mode is SeedMode.ABSOLUTE else spec.h + n
    T = np.zeros_like(H, dtype=T_DTYPE)
    D = np.full((side,) * spec.d, d0_fill, dtype=D_DTYPE)
    if np.ndim(d0) != 0:
        r0 = table.shape[0] // 2
        D[(slice(radius - r0, radius + r0 + 1),) * spec.d] = table
    return Configuration(spec, H, T, D, n=n, mode=mode, d0_fill=d0_fill)


def phi_r(d: int, r: int) -> Configuration:
    """SP configuration with 2d at the origin, h_max on the rest of C(r) and
    h_max - 1 outside (background h = 2d - 2)."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    spec = ModelSpec(Model.SP, d, 2 * d - 2)
    R = r + 2
    side = 2 * R + 1
    H = np.full((side,) * d, 2 * d - 2, dtype=H_DTYPE)
    H[(slice(R - r, R + r + 1),) * d] = 2 * d - 1
    H[(R,) * d] = 2 * d
    T = np.zeros_like(H)
    D = np.zeros(H.shape, dtype=D_DTYPE)
    return Configuration(spec, H, T, D, n=2 * d, mode=SeedMode.ABSOLUTE)


def is_site_stable(cfg: Configuration, x) -> bool:
    return bool(cfg.H[cfg.index(x)] <= cfg.spec.h_max)


def _emit(cfg: Configuration, idx: tuple, start: int, count: int, sign: int) -> None:
    """Add ``sign`` to the neighbours in directions start+1 .. start+count;
    whole turns of 2d hit every neighbour equally."""
    nd = cfg.spec.ndir
    full, rem = divmod(count, nd)
    table = cfg.spec.dirmap.table
    for i in range(nd):
        amount = full + (1 if (i - start - 1) % nd < rem else 0)
        if amount:
            j = tuple(a + int(b) for a, b in zip(idx, table[i]))
            cfg.H[j] += sign * amount


def topple_bulk(cfg: Configuration, x, k: int) -> bool:
    """Perform k successive topplings of x; returns the legality flag of the
    last one (H(x) >= 0 afterwards)."""
    if k < 1:
        raise ValueError("toppling count must be >= 1")
    cfg.ensure_interior(x)
    idx = cfg.index(x)
    c, nd = cfg.spec.c, cfg.spec.ndir
    D0 = int(cfg.D[idx])
    cfg.T[idx] += k
    cfg.H[idx] -= k * c
    _emit(cfg, idx, D0, k * c, +1)
    cfg.D[idx] = (D0 + k * c) % nd
    return bool(cfg.H[idx] >= 0)


def topple(cfg: Configuration, x) -> bool:
    """One toppling of x: T += 1, H -= c, one particle to each of the next c
    directions, arrow advanced by c. Returns True when legal."""
    return topple_bulk(cfg, x, 1)


class IllegalUntoppling(ValueError):
    pass


def untopple(cfg: Configuration, x) -> None:
    """Exact inverse of the most recent toppling of x; requires T(x) > 0."""
    site = as_coord(x, cfg.d)
    if max(abs(v) for v in site) > cfg.radius or cfg.T[cfg.index(site)] <= 0:
        raise IllegalUntoppling(f"untoppling {site} with T = 0")
    cfg.ensure_interior(x)
    idx = cfg.index(x)
    c, nd = cfg.spec.c, cfg.spec.ndir
    cfg.T[idx] -= 1
    cfg.H[idx] += c
    D = (int(cfg.D[idx]) - c) % nd
    cfg.D[idx] = D
    _emit(cfg, idx, D, c, -1)
