"""Cluster extraction and shape measurements of stabilised runs."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

from . import _backend
from . import kernels as K
from .config import Configuration, Model
from .lattice import Cluster, diamond, exterior_boundary, lattice_ball, sym_diff_count


def toppling_cluster(cfg: Configuration) -> Cluster:
    return Cluster(cfg.T > 0)


def particle_cluster(cfg: Configuration) -> Cluster:
    return Cluster((cfg.T > 0) | (cfg.H > cfg.spec.h))


@dataclass(frozen=True)
class RadiusFit:
    r: int  # smallest r with t inside C(r)
    diamond_ok: bool  # D(r - 1) inside t
    diamond_V_ok: bool  # D(r) inside v
    cube_V_ok: bool  # v inside C(r + 1)


def fit_radii(t: Cluster, v: Cluster) -> RadiusFit:
    r = t.linf_radius()
    return RadiusFit(
        r=r,
        diamond_ok=diamond(r - 1, t.d) <= t,
        diamond_V_ok=diamond(r, v.d) <= v,
        cube_V_ok=v.linf_radius() <= r + 1,
    )


def simply_connected(a: Cluster) -> bool:
    """True iff the complement of ``a`` inside a box one layer larger than
    its bounding box is a single face-connected component."""
    t = a.tight()
    box = t.with_radius(t.radius + 1).mask
    structure = ndimage.generate_binary_structure(a.d, 1)
    _, count = ndimage.label(~box, structure=structure)
    return count == 1


def _burn_mask(H: np.ndarray, member: np.ndarray, spec) -> np.ndarray:
    """Unburnt members; ``member`` must be empty on the outermost layer."""
    if _backend.backend() == "numba":
        side = H.shape[0]
        offs = spec.dirmap.offsets([side ** (H.ndim - 1 - k) for k in range(H.ndim)])
        burnt = np.zeros(H.size, dtype=np.uint8)
        m = member.reshape(-1).astype(np.uint8)
        K.burn_jit(H.reshape(-1), m, offs, burnt)
        return ((m == 1) & (burnt == 0)).reshape(H.shape)
    return K.burn_numpy(H, member, spec.dirmap.table)


def burning_recurrent(cfg: Configuration, a: Cluster) -> bool:
    """Burning test on ``a``: with everything outside ``a`` burnt, a site
    burns once H is at least its number of unburnt neighbours in ``a``.
    True iff all of ``a`` burns."""
    if cfg.spec.kind is not Model.SP:
        raise ValueError("the burning test is defined for the sandpile model")
    if not a:
        raise ValueError("burning test needs a nonempty cluster")
    R = max(cfg.radius, a.linf_radius()) + 1
    big = cfg.with_radius(R)
    member = a.with_radius(R).mask
    return not _burn_mask(big.H, member, cfg.spec).any()


@dataclass(frozen=True)
class DensityStats:
    rho: Fraction  # mean H over the cluster
    sigma: int  # sites
    beta: int  # internal bonds
    height_sum: int

    def bounds_hold(self, d: int) -> bool:
        """beta / sigma <= rho <= 2d - 1, in integers."""
        return self.beta <= self.height_sum <= (2 * d - 1) * self.sigma


def internal_bonds(a: Cluster) -> int:
    m = a.mask
    total = 0
    for k in range(a.d):
        lo = [slice(None)] * a.d
        hi = [slice(None)] * a.d
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        total += int(np.count_nonzero(m[tuple(lo)] & m[tuple(hi)]))
    return total


def cluster_stats(cfg: Configuration, a: Cluster) -> DensityStats:
    if not a:
        raise ValueError("density statistics of an empty cluster")
    R = max(cfg.radius, a.radius)
    H = cfg.with_radius(R).H
    total = int(H[a.with_radius(R).mask].sum())
    sigma = len(a)
    return DensityStats(Fraction(total, sigma), sigma, internal_bonds(a), total)


def sphere_deviation(v: Cluster, m: int) -> Fraction:
    """|v symmetric-difference B_m| / m as an exact fraction."""
    if m < 1:
        raise ValueError("reference ball size must be >= 1")
    return Fraction(sym_diff_count(v, lattice_ball(m, v.d)), m)


def _nnn_offsets(d: int):
    eye = np.eye(d, dtype=np.int64)
    units = [s * eye[k] for k in range(d) for s in (-1, 1)]
    out = set()
    for a, b in itertools.product(units, repeat=2):
        v = a + b
        if v.any():
            out.add(tuple(int(c) for c in v))
    return sorted(out)


def nnn_violations(T: np.ndarray, limit: int = 10) -> list:
    """Next-nearest-neighbour pairs (x, z) with |x| <= |z| but T(x) < T(z).

    Pairs are z = x + a + b for unit vectors a != -b with
    sum_i ||x_i| - |z_i|| = 2. Returns up to ``limit`` offending pairs.
    """
    d = T.ndim
    R = T.shape[0] // 2 + 2
    pad = np.zeros((2 * R + 1,) * d, dtype=T.dtype)
    r0 = T.shape[0] // 2
    pad[(slice(R - r0, R + r0 + 1),) * d] = T
    ax = np.arange(-R, R + 1)
    coords = np.meshgrid(*[ax] * d, indexing="ij", sparse=True)
    dist2 = np.broadcast_to(sum(c * c for c in coords), pad.shape)
    bad = []
    for v in _nnn_offsets(d):
        xs = []
        zs = []
        for k in range(d):
            if v[k] >= 0:
                xs.append(slice(0, 2 * R + 1 - v[k]))
                zs.append(slice(v[k], 2 * R + 1))
            else:
                xs.append(slice(-v[k], 2 * R + 1))
                zs.append(slice(0, 2 * R + 1 + v[k]))
        xs, zs = tuple(xs), tuple(zs)
        Tx, Tz = pad[xs], pad[zs]
        absdiff = 0
        for k in range(d):
            shape = [1] * d
            shape[k] = -1
            absdiff = absdiff + np.abs(np.abs(ax[xs[k]]) - np.abs(ax[zs[k]])).reshape(shape)
        closer = dist2[xs] <= dist2[zs]
        viol = (absdiff == 2) & closer & (Tx < Tz)
        if viol.any():
            for idx in np.argwhere(viol)[: limit - len(bad)]:
                x = tuple(int(i) - R for i in idx)
                bad.append((x, tuple(a + b for a, b in zip(x, v))))
            if len(bad) >= limit:
                break
    return bad


def nnn_monotone(T: np.ndarray) -> bool:
    return not nnn_violations(T, limit=1)


def boundary_share(t: Cluster, v: Cluster) -> Fraction:
    """Share of V minus T lying on V's inner boundary (a neighbour outside V)."""
    extra = v - t
    if not extra:
        return Fraction(0)
    rim = exterior_boundary(exterior_boundary(v)) & v
    return Fraction(len(extra & rim), len(extra))


def default_ball_size(cfg: Configuration, v: Cluster) -> int:
    """Reference ball for the particle cluster: n / |h| sites for negative
    background, otherwise a ball of the cluster's own size."""
    h = cfg.spec.h
    if h < 0:
        return max(1, round(cfg.n / -h))
    return max(1, len(v))


@dataclass
class ShapeReport:
    model: str
    d: int
    h: int
    n: int
    seed_mode: str
    total_topplings: int
    sigma: int
    beta: int
    rho: Fraction
    r_linf_T: int
    diamond_ok: bool
    r_linf_V: int
    diamond_V_ok: bool
    cube_V_ok: bool
    ball_m: int
    ball_dev: Fraction
    simply_connected: bool
    recurrent: bool | None  # sandpile only
    boundary_share: Fraction

    def as_dict(self) -> dict:
        return asdict(self)


def shape_report(cfg: Configuration, total_topplings: int | None = None, m: int | None = None) -> ShapeReport:
    t, v = toppling_cluster(cfg), particle_cluster(cfg)
    fit = fit_radii(t, v)
    if m is None:
        m = default_ball_size(cfg, v)
    if t:
        stats = cluster_stats(cfg, t)
        sigma, beta, rho = stats.sigma, stats.beta, stats.rho
    else:
        sigma, beta, rho = 0, 0, Fraction(0)
    recurrent = None
    if cfg.spec.kind is Model.SP and t:
        recurrent = burning_recurrent(cfg, t)
    return ShapeReport(
        model=cfg.spec.kind.value,
        d=cfg.d,
        h=cfg.spec.h,
        n=cfg.n,
        seed_mode=cfg.mode.value,
        total_topplings=int(cfg.T.sum()) if total_topplings is None else int(total_topplings),
        sigma=sigma,
        beta=beta,
        rho=rho,
        r_linf_T=fit.r,
        diamond_ok=fit.diamond_ok,
        r_linf_V=v.linf_radius(),
        diamond_V_ok=fit.diamond_V_ok,
        cube_V_ok=fit.cube_V_ok,
        ball_m=m,
        ball_dev=sphere_deviation(v, m),
        simply_connected=simply_connected(t) and simply_connected(v),
        recurrent=recurrent,
        boundary_share=boundary_share(t, v),
    )
