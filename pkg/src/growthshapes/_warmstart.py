"""Starting odometers for large runs.

The odometer of n particles at scale 2x is close to four times the odometer
of n / 2^d particles at x. In the plane this fails near the origin, where
the lattice Green's function departs from its logarithmic asymptote. The
planar guess therefore splits off the point-source part with the potential kernel ``a`` (lattice Laplacian
of a is the unit mass at 0, a(0) = 0), rescales the smooth remainder and puts
the fine-scale singular part back.

A guess only has to be cheap and close; exactness is restored afterwards by
the repair and certification steps in :mod:`growthshapes.stabilize`.
"""
from __future__ import annotations

import functools
import itertools
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

_LAMBDA = (2 * np.euler_gamma + math.log(8)) / math.pi
_CORE = 32  # exact values are solved for inside [-_CORE, _CORE]^2


def _asymptotic(x, y):
    """Potential kernel for the unnormalised Laplacian (one quarter of the
    random-walk kernel), expanded to order |x|^-2."""
    r2 = x * x + y * y
    theta = np.arctan2(y, x)
    return ((2 / math.pi) * 0.5 * np.log(r2) + _LAMBDA - np.cos(4 * theta) / (6 * math.pi * r2)) / 4


@functools.lru_cache(maxsize=1)
def _core_kernel() -> np.ndarray:
    # Dirichlet problem on the box with asymptotic boundary values; the
    # truncation error of the expansion at radius ~2 * _CORE is ~1e-8.
    B = 2 * _CORE
    m = 2 * B - 1
    ax = np.arange(-B + 1, B)
    idx = np.arange(m * m).reshape(m, m)
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.full(m * m, -4.0)]
    rhs = np.zeros((m, m))
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        src = idx[max(0, -di):m - max(0, di), max(0, -dj):m - max(0, dj)]
        dst = idx[max(0, di):m - max(0, -di), max(0, dj):m - max(0, -dj)]
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.ones(src.size))
        # neighbours beyond the box contribute known boundary values
        bx, by = X + di, Y + dj
        outside = (np.abs(bx) >= B) | (np.abs(by) >= B)
        rhs[outside] -= _asymptotic(bx[outside].astype(float), by[outside].astype(float))
    rhs[B - 1, B - 1] += 1.0
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m))
    a = spl.spsolve(A.tocsc(), rhs.ravel()).reshape(m, m)
    a -= a[B - 1, B - 1]
    c = B - 1
    return a[c - _CORE:c + _CORE + 1, c - _CORE:c + _CORE + 1].copy()


def potential_kernel(R: int) -> np.ndarray:
    """a(x) on [-R, R]^2."""
    ax = np.arange(-R, R + 1, dtype=float)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        a = _asymptotic(X, Y)
    core = _core_kernel()
    r = min(R, _CORE)
    a[R - r:R + r + 1, R - r:R + r + 1] = core[_CORE - r:_CORE + r + 1, _CORE - r:_CORE + r + 1]
    return a


def _upsample4(f: np.ndarray, R: int) -> np.ndarray:
    """4 f(x/2) on [-R, R]^d by multilinear interpolation (zero beyond f's box)."""
    d = f.ndim
    Rc = f.shape[0] // 2
    pad = np.zeros((2 * Rc + 3,) * d)
    pad[(slice(1, -1),) * d] = f
    x = np.arange(-R, R + 1)
    lo = np.clip(np.floor_divide(x, 2) + Rc + 1, 0, 2 * Rc + 2)
    hi = np.clip(-np.floor_divide(-x, 2) + Rc + 1, 0, 2 * Rc + 2)
    out = np.zeros((2 * R + 1,) * d)
    for corner in itertools.product((lo, hi), repeat=d):
        out += pad[np.ix_(*corner)]
    return out * (4 / 2 ** d)


def odometer_guess(coarse_T: np.ndarray, excess: int, coarse_excess: int, R: int) -> np.ndarray:
    """Integer odometer guess on [-R, R]^d from the exact odometer of the
    coarse problem, whose clusters are half as wide. ``excess`` is the
    origin's initial height over the background, for the fine and the
    coarse problem. In one dimension the point-source part is linear and
    survives interpolation, so only d = 2 needs the kernel correction."""
    d = coarse_T.ndim
    if d == 1:
        g = _upsample4(coarse_T.astype(float), R)
    elif d == 2:
        Rc = coarse_T.shape[0] // 2
        smooth = coarse_T + coarse_excess * potential_kernel(Rc)
        g = _upsample4(smooth, R)
        support = np.count_nonzero(coarse_T)
        rho = 2 * math.sqrt(max(support, 1) / math.pi)
        # fix the additive constant so that the singular parts of both
        # scales agree near the cluster boundary
        const = excess * _asymptotic(rho, 0.0) - 4 * coarse_excess * _asymptotic(rho / 2, 0.0)
        g = g - excess * potential_kernel(R) + const
    else:
        raise ValueError("odometer guesses exist for d = 1 and d = 2 only")
    inside = _upsample4((coarse_T > 0).astype(float), R) > 0
    g = np.where(inside, np.floor(g), 0)
    return np.maximum(g, 0).astype(np.int64)
