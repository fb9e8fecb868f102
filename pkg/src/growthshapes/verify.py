"""Checkers for the growth theorems.

Each checker runs a parameter grid through seeding, stabilisation and
analysis and returns a :class:`CheckReport` with one verdict per case. Cases
are labelled ``exact`` (a finite-n statement that must hold site by site),
``trend`` (a finite-n stand-in for a limit statement) or ``reported``
(measured, never asserted). A failing exact or trend case writes a dump of
the offending configuration.

Default grids are the acceptance grids; :data:`ACCEPTANCE` lists them per
criterion.
"""
from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _backend
from . import io as gio
from .analysis import (
    burning_recurrent,
    cluster_stats,
    fit_radii,
    nnn_monotone,
    particle_cluster,
    simply_connected,
    sphere_deviation,
    toppling_cluster,
)
from .config import Configuration, Model, ModelSpec, SeedMode, phi_r, seed
from .lattice import Cluster, DirectionMap
from .stabilize import (
    resolve_to_optimal,
    stabilize,
    stabilize_kcolor,
    stabilize_queue,
    stabilize_single,
    toppling_fixed_point,
)

EXACT, TREND, REPORTED = "exact", "trend", "reported"


@dataclass
class Case:
    params: dict
    passed: bool
    label: str = EXACT
    detail: dict = field(default_factory=dict)
    skipped: str | None = None  # why the statement is vacuous here


@dataclass
class CheckReport:
    name: str
    grid: dict
    cases: list = field(default_factory=list)
    seed: int | None = None
    dumps: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def failures(self) -> list:
        return [c for c in self.cases if not c.passed]

    def counts(self) -> dict:
        out = {}
        for c in self.cases:
            key = "skipped" if c.skipped else c.label
            out[key] = out.get(key, 0) + 1
        return out

    def format(self, verbose: bool = False) -> str:
        status = "PASS" if self.passed else "FAIL"
        counts = ", ".join(f"{v} {k}" for k, v in sorted(self.counts().items()))
        lines = [f"{status} {self.name}: {len(self.cases)} cases ({counts}) in {self.wall_time:.1f} s"]
        lines.append(f"  grid: {_jsonable(self.grid)}")
        if self.seed is not None:
            lines.append(f"  seed: {self.seed}")
        shown = self.cases if verbose else self.failures()
        for c in shown[:50]:
            mark = "ok  " if c.passed else "FAIL"
            extra = f" skipped: {c.skipped}" if c.skipped else ""
            lines.append(f"  {mark} [{c.label}] {_jsonable(c.params)} {_jsonable(c.detail)}{extra}")
        if len(shown) > 50:
            lines.append(f"  ... {len(shown) - 50} more")
        for p in self.dumps:
            lines.append(f"  dump: {p}")
        return "\n".join(lines)


def _jsonable(obj):
    def conv(v):
        if isinstance(v, Fraction):
            return f"{v.numerator}/{v.denominator}"
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, (np.floating, float)):
            return round(float(v), 4)
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v

    return json.dumps(conv(obj), separators=(",", ":"))


class _Report:
    """Collects cases and writes dumps for failures."""

    def __init__(self, name, grid, dump_dir=None, seed=None):
        self.report = CheckReport(name, grid, seed=seed)
        self.dump_dir = dump_dir
        self.t0 = time.perf_counter()

    def add(self, params, passed, label=EXACT, cfg=None, skipped=None, **detail):
        passed = bool(passed)
        self.report.cases.append(Case(dict(params), passed, label, detail, skipped))
        if not passed and label != REPORTED and cfg is not None:
            self._dump(cfg, params)
        return passed

    def _dump(self, cfg, params):
        if self.dump_dir is None:
            self.dump_dir = tempfile.mkdtemp(prefix="growthshapes-")
        os.makedirs(self.dump_dir, exist_ok=True)
        tag = "-".join(f"{k}{v}" for k, v in params.items() if isinstance(v, (int, str)))
        path = os.path.join(self.dump_dir, f"{self.report.name}-{len(self.report.dumps)}-{tag}.ltcfg")
        gio.dump(cfg, path)
        self.report.dumps.append(path)

    def done(self) -> CheckReport:
        self.report.wall_time = time.perf_counter() - self.t0
        return self.report


# --- shared helpers --------------------------------------------------------------

def _valid(kind: str, d: int, h: int) -> bool:
    c = {"RR": 1, "DR": 2, "SP": 2 * d}[kind]
    return h < c - 1


class _Runs:
    """Memo of final configurations keyed by (model, d, h, n, mode)."""

    def __init__(self):
        self._memo = {}

    def get(self, kind, d, h, n, mode=SeedMode.ABSOLUTE) -> Configuration:
        key = (str(kind), d, h, n, SeedMode.parse(mode))
        if key not in self._memo:
            cfg = seed(ModelSpec(kind, d, h), n, mode)
            if cfg.is_stable() and not cfg.is_allowed():
                # absolute n < h: nothing can topple, the seed is final
                self._memo[key] = cfg
            else:
                self._memo[key] = stabilize_queue(cfg, inplace=True).config
        return self._memo[key]


def int_root_floor(q: Fraction, d: int) -> int:
    """Largest integer k >= 0 with k^d <= q (0 when q < 1)."""
    if q < 1:
        return 0
    k = int(math.floor(float(q) ** (1.0 / d)))
    while (k + 1) ** d <= q:
        k += 1
    while k > 0 and k ** d > q:
        k -= 1
    return k


def diamond_radius_bound(n: int, d: int, h: int):
    """floor(1/2 (n / (2d - 1 - h))^(1/d) - 3/2), or None when negative."""
    # k <= (q^(1/d) - 3) / 2  <=>  (2k + 3)^d <= q
    q = Fraction(n, 2 * d - 1 - h)
    m = int_root_floor(q, d)
    if m < 3:
        return None
    return (m - 3) // 2


def _linf(mask: np.ndarray) -> np.ndarray:
    R = mask.shape[0] // 2
    ax = np.abs(np.arange(-R, R + 1))
    grids = np.meshgrid(*[ax] * mask.ndim, indexing="ij", sparse=True)
    out = grids[0]
    for g in grids[1:]:
        out = np.maximum(out, g)
    return np.broadcast_to(out, mask.shape)


def cube_verdict(cfg: Configuration) -> dict | None:
    """Cube statements for a final SP configuration with h = 2d - 2, or
    None if nothing toppled. Computed straight from the arrays, independent of
    :func:`growthshapes.analysis.fit_radii`."""
    d = cfg.d
    t = cfg.T > 0
    if not t.any():
        return None
    linf = _linf(t)
    r = int(linf[t].max())
    cube_ok = int(np.count_nonzero(t)) == (2 * r + 1) ** d
    R = cfg.radius
    ax = np.abs(np.arange(-R, R + 1))
    grids = np.meshgrid(*[ax] * d, indexing="ij", sparse=True)
    excess = sum(np.maximum(g - r, 0) for g in grids)
    closure = np.broadcast_to(excess <= 1, t.shape)  # C(r) plus its face neighbours
    v = t | (cfg.H > cfg.spec.h)
    shell = linf == r
    rim = closure & ~t
    return {
        "r": r,
        "cube": cube_ok,
        "closure": bool(np.array_equal(v, closure)),
        "shell_once": bool(np.all(cfg.T[shell] == 1)),
        "rim_full": bool(np.all(cfg.H[rim] == cfg.spec.h_max)),
    }


# --- cube theorem -----------------------------------------------------------------

def check_cube(n_max: int = 60_000, d: int = 2, *, exhaustive_max: int = 2_000, samples: int = 16,
               dump_dir=None) -> CheckReport:
    """SP with h = 2d - 2: T_n is a cube C(r_n), V_n is the cube with its face
    neighbours, the cube's outer shell toppled exactly once, the face
    neighbours are full, and n <= (2 r_n + 3)^d, r_n <= n.

    Every n up to ``exhaustive_max`` is covered in both seed modes by one
    chain that adds a particle at a time (additive n and absolute n + h are
    the same configuration); a logarithmic sample above runs from scratch.
    """
    h = 2 * d - 2
    spec = ModelSpec(Model.SP, d, h)
    top = min(exhaustive_max, n_max)
    sample = []
    if n_max > top:
        sample = sorted({int(round(x)) for x in np.geomspace(top + 1, n_max, samples)} | {n_max})
    rep = _Report("cube", {"d": d, "h": h, "exhaustive_max": top, "sample": sample}, dump_dir)

    def judge(cfg, n, mode):
        params = {"n": n, "mode": mode.value}
        v = cube_verdict(cfg)
        if v is None:
            rep.add(params, True, skipped="nothing topples")
            return
        r = v["r"]
        ok = v["cube"] and v["closure"] and v["shell_once"] and v["rim_full"]
        # 1/2 n^(1/d) - 3/2 <= r  <=>  n <= (2r + 3)^d
        bounds = n <= (2 * r + 3) ** d and r <= n
        rep.add(params, ok and bounds, cfg=cfg, **v, bounds=bounds, r_over_root=r / n ** (1 / d))

    cfg = seed(spec, 0, SeedMode.ADDITIVE)
    for k in range(0, top + 1):
        if k:
            cfg.H[(cfg.radius,) * d] += 1
            stabilize_queue(cfg, inplace=True, warm_start=False)
        cfg.n = k
        if k >= 1:
            judge(cfg, k, SeedMode.ADDITIVE)
        m = k + h  # the same configuration as an absolute seed
        if 1 <= m <= top:
            judge(cfg, m, SeedMode.ABSOLUTE)
    for m in range(1, min(h, top + 1)):
        judge(seed(spec, m), m, SeedMode.ABSOLUTE)
    for n in sample:
        for mode in (SeedMode.ABSOLUTE, SeedMode.ADDITIVE):
            start = seed(spec, n, mode)
            if start.is_allowed():  # an absolute pile below h is already final
                start = stabilize_queue(start, inplace=True).config
            judge(start, n, mode)
    return rep.done()


# --- wave lemma --------------------------------------------------------------------

def check_wave_lemma(r_max: int = 8, d: int = 2, *, dump_dir=None) -> CheckReport:
    """Stabilising phi_r by waves topples x exactly max(r + 1 - |x|_inf, 0)
    times. Also reports whether every wave toppled a cube."""
    from .stabilize import stabilize_waves

    rep = _Report("waves", {"d": d, "r_max": r_max}, dump_dir)
    for r in range(r_max + 1):
        res = stabilize_waves(phi_r(d, r))
        cfg = res.config
        expected = np.maximum(r + 1 - _linf(cfg.T), 0)
        ok = np.array_equal(cfg.T, expected)
        cubes = []
        for w in res.waves:
            t = w.mask
            rr = int(_linf(t)[t].max()) if t.any() else -1
            cubes.append(rr >= 0 and int(np.count_nonzero(t)) == (2 * rr + 1) ** d)
        rep.add({"r": r}, ok, cfg=cfg, waves=len(res.waves), waves_are_cubes=all(cubes))
    return rep.done()


# --- inclusions ---------------------------------------------------------------------

def check_inclusions(d: int = 2, h_range=None, n_list=(200, 1000, 5000), *, runs: _Runs | None = None,
                     dump_dir=None) -> CheckReport:
    """Particle-cluster inclusions, absolute seeds:
    (1) V[SP,h] in V[DR,h] in V[RR,h];
    (2) V[i,h-1] in V[i,h] for every model i;
    (3) V[RR,h-1] in V[DR,h] and V[RR,h-(2d-1)] in V[SP,h].
    Each statement is checked wherever both of its models accept the h values.
    """
    if h_range is None:
        h_range = range(-6, 2 * d - 1)
    h_range = list(h_range)
    runs = runs or _Runs()
    rep = _Report("inclusions", {"d": d, "h": h_range, "n": list(n_list)}, dump_dir)

    def incl(part, n, small, big):
        ka, ha = small
        kb, hb = big
        if not (_valid(ka, d, ha) and _valid(kb, d, hb)):
            return
        A = particle_cluster(runs.get(ka, d, ha, n))
        B = particle_cluster(runs.get(kb, d, hb, n))
        extra = len(A - B)
        rep.add({"part": part, "n": n, "small": f"{ka},{ha}", "big": f"{kb},{hb}"}, extra == 0,
                cfg=runs.get(ka, d, ha, n), size_small=len(A), size_big=len(B), outside=extra)

    for n in n_list:
        for h in h_range:
            incl(1, n, ("SP", h), ("DR", h))
            incl(1, n, ("DR", h), ("RR", h))
        for kind in ("RR", "DR", "SP"):
            for h in h_range:
                incl(2, n, (kind, h - 1), (kind, h))
        for h in h_range:
            incl(3, n, ("RR", h - 1), ("DR", h))
            incl(3, n, ("RR", h - (2 * d - 1)), ("SP", h))
    return rep.done()


# --- toppling-cluster bounds -------------------------------------------------------------

def check_bounds(d: int = 2, h_range=None, n_list=(1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 3000, 5000, 7000, 10000, 14000, 20000), *,
                 runs: _Runs | None = None, dump_dir=None) -> CheckReport:
    """SP, absolute seeds, r_n = |T_n|_inf: D(r_n - 1) in T_n in C(r_n),
    D(r_n) in V_n in C(r_n + 1) and n <= (2d - 1 - h)(2 r_n + 3)^d. For h < d
    the ratio 2 r_n / (dn / (d - h))^(1/d) is reported."""
    if h_range is None:
        h_range = range(-10, 2 * d - 1)
    h_range = list(h_range)
    runs = runs or _Runs()
    rep = _Report("bounds", {"d": d, "h": h_range, "n": list(n_list)}, dump_dir)
    for h in h_range:
        for n in n_list:
            cfg = runs.get("SP", d, h, n)
            t, v = toppling_cluster(cfg), particle_cluster(cfg)
            params = {"h": h, "n": n}
            if not t:
                rep.add(params, True, skipped="nothing topples")
                continue
            fit = fit_radii(t, v)
            r = fit.r
            lower = n <= (2 * d - 1 - h) * (2 * r + 3) ** d
            ok = fit.diamond_ok and fit.diamond_V_ok and fit.cube_V_ok and lower
            rep.add(params, ok, cfg=cfg, r=r, diamond_T=fit.diamond_ok, diamond_V=fit.diamond_V_ok,
                    cube_V=fit.cube_V_ok, lower_bound=lower)
            if h < d:
                ratio = 2 * r / (d * n / (d - h)) ** (1 / d)
                rep.add({**params, "upper": "ratio"}, True, label=REPORTED, ratio=ratio)
    return rep.done()


# --- rotor-router sphere and diamond ---------------------------------------------------------

def check_rr_sphere(d: int = 2, h_list=(-1,), n_list=(1000, 4000, 16000), *, strict: bool = True,
                    runs: _Runs | None = None, dump_dir=None) -> CheckReport:
    """Additive seeds. For every (h, n): the k-colour construction with
    k = |h| followed by untoppling avalanches equals direct RR,h, both
    deviations |V or W symmetric-difference B_(n/|h|)| / (n/|h|) are reported,
    where W is the set of full sites of V (H = 0). The V deviation must
    decrease along ``n_list`` (strictly unless ``strict`` is off)."""
    runs = runs or _Runs()
    rep = _Report("rr-sphere", {"d": d, "h": list(h_list), "n": list(n_list), "strict": strict}, dump_dir)
    for h in h_list:
        k = -h
        devs = []
        for n in n_list:
            direct = runs.get("RR", d, h, n, SeedMode.ADDITIVE)
            params = {"h": h, "n": n}
            if n % k == 0:
                kc = stabilize_kcolor(d, k, n).config
                res = resolve_to_optimal(kc, inplace=True)
                rep.add({**params, "kcolor": True}, res.config.fields_equal(direct, True), cfg=res.config,
                        avalanches=res.avalanches)
            else:
                rep.add({**params, "kcolor": True}, True, skipped=f"n not divisible by {k}")
            m = max(1, n // k)
            v = particle_cluster(direct)
            w = v & Cluster(direct.H == 0)
            dv, dw = sphere_deviation(v, m), sphere_deviation(w, m)
            devs.append(dv)
            rep.add({**params, "deviation": True}, True, label=REPORTED, ball=m, dev_V=dv, dev_W=dw)
        for (n0, a), (n1, b) in zip(zip(n_list, devs), zip(n_list[1:], devs[1:])):
            ok = b < a if strict else b <= a
            rep.add({"h": h, "from": n0, "to": n1}, ok, label=TREND, cfg=runs.get("RR", d, h, n1, SeedMode.ADDITIVE),
                    dev_from=a, dev_to=b)
    return rep.done()


def check_rr_diamond(d: int = 2, h_list=(-1, -4), n_list=(4, 100, 500, 1000, 2000, 4000, 8000, 16000), *,
                     runs: _Runs | None = None, dump_dir=None) -> CheckReport:
    """Absolute seeds. V[RR,h] contains D(1/2 (n/(2d-1-h))^(1/d) - 3/2) and,
    for -d <= h < 0, lies in C(n + 1). For h < -d the ratio of r_V to the
    asymptotic cube radius 1/2 (dn/(d-h))^(1/d) is reported."""
    runs = runs or _Runs()
    rep = _Report("rr-diamond", {"d": d, "h": list(h_list), "n": list(n_list)}, dump_dir)
    from .lattice import diamond

    for h in h_list:
        for n in n_list:
            cfg = runs.get("RR", d, h, n)
            v = particle_cluster(cfg)
            params = {"h": h, "n": n}
            k = diamond_radius_bound(n, d, h)
            if k is None:
                rep.add({**params, "diamond": True}, True, skipped="diamond radius below 0")
            else:
                rep.add({**params, "diamond": True}, diamond(k, d) <= v, cfg=cfg, radius=k)
            rv = v.linf_radius()
            if h < -d:
                # the cube radius 1/2 (dn/(d-h))^(1/d) inherits an o(n^(1/d))
                # correction from the sandpile bound, so only the ratio is shown
                ratio = 2 * rv / (d * n / (d - h)) ** (1 / d)
                rep.add({**params, "cube": "asymptotic"}, True, label=REPORTED, r_V=rv,
                        ratio=ratio, within=(2 * rv) ** d * (d - h) <= d * n)
            else:
                rep.add({**params, "cube": "n+1"}, rv <= n + 1, cfg=cfg, r_V=rv)
    return rep.done()


def check_sphere_trend(model: str = "SP", d: int = 2, h_list=(-2, -8, -20), n_per: int = 1000, *,
                       runs: _Runs | None = None, dump_dir=None) -> CheckReport:
    """Absolute seeds with n = n_per |h|, compared with the ball B_(n_per).
    The deviation at the last h must be below the one at the first; the
    sandwich V[RR,h-c'] in V[model,h] in V[RR,h] (c' = 2d - 1 for SP, 1 for
    DR) must hold wherever the models are defined."""
    kind = Model.parse(model).value
    if kind == "RR":
        raise ValueError("the sphere trend compares SP or DR with the rotor router")
    runs = runs or _Runs()
    h_list = list(h_list)
    rep = _Report("sphere-trend", {"model": kind, "d": d, "h": h_list, "n_per": n_per}, dump_dir)
    gap = 2 * d - 1 if kind == "SP" else 1
    devs = []
    for h in h_list:
        n = n_per * max(1, -h)
        cfg = runs.get(kind, d, h, n)
        v = particle_cluster(cfg)
        dev = sphere_deviation(v, n_per)
        devs.append(dev)
        rep.add({"h": h, "n": n, "deviation": True}, True, label=REPORTED, ball=n_per, dev=dev)
        low = particle_cluster(runs.get("RR", d, h - gap, n))
        rep.add({"h": h, "n": n, "inner": f"RR,{h - gap}"}, low <= v, cfg=cfg, outside=len(low - v))
        if _valid("RR", d, h):
            high = particle_cluster(runs.get("RR", d, h, n))
            rep.add({"h": h, "n": n, "outer": f"RR,{h}"}, v <= high, cfg=cfg, outside=len(v - high))
    if len(devs) >= 2:
        rep.add({"from": h_list[0], "to": h_list[-1]}, devs[-1] < devs[0], label=TREND,
                dev_from=devs[0], dev_to=devs[-1])
    return rep.done()


# --- sandpile structure ------------------------------------------------------------------

def check_sp_structure(d: int = 2, h_range=(-3, 0, 2), n_list=(10, 100, 1000, 3000, 10000), *,
                       runs: _Runs | None = None, dump_dir=None) -> CheckReport:
    """SP, absolute seeds: T_n and V_n simply connected, T_n passes the
    burning test, beta / sigma <= rho <= 2d - 1 on T_n, and T is monotone
    along next-nearest-neighbour pairs."""
    runs = runs or _Runs()
    rep = _Report("sp-structure", {"d": d, "h": list(h_range), "n": list(n_list)}, dump_dir)
    for h in h_range:
        for n in n_list:
            cfg = runs.get("SP", d, h, n)
            t, v = toppling_cluster(cfg), particle_cluster(cfg)
            params = {"h": h, "n": n}
            if not t:
                rep.add(params, True, skipped="nothing topples")
                continue
            st = cluster_stats(cfg, t)
            verdict = {
                "T_simply_connected": simply_connected(t),
                "V_simply_connected": simply_connected(v),
                "recurrent": burning_recurrent(cfg, t),
                "density": st.bounds_hold(d),
                "nnn_monotone": nnn_monotone(cfg.T),
            }
            rep.add(params, all(verdict.values()), cfg=cfg, **verdict, rho=st.rho)
    return rep.done()


# --- abelian property ---------------------------------------------------------------------

DEFAULT_H = {"RR": -1, "DR": 0, "SP": 0}


def check_abelian(models=("RR", "DR", "SP"), d: int = 2, h=None, n: int = 500, trials: int = 20, seed: int = 0,
                  *, dump_dir=None) -> CheckReport:
    """Random legal orders and every scheduler give the same (H, T), and the
    same D for the routers. ``h`` is one value for all models or None for
    each model's default."""
    from . import stabilize as S

    rng = np.random.default_rng(seed)
    trial_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=trials)]
    rep = _Report("abelian", {"models": list(models), "d": d, "h": h, "n": n, "trials": trials},
                  dump_dir, seed=seed)
    for kind in models:
        kind = Model.parse(kind).value
        hh = DEFAULT_H[kind] if h is None else h
        start = S.seed(ModelSpec(kind, d, hh), n)
        ref = stabilize_queue(start, warm_start=False).config
        cmp_d = kind != "SP"
        variants = []
        for s in trial_seeds:
            variants.append((f"random-{s}", lambda s=s: stabilize_single(start, order="random", seed=s).config))
        variants.append(("single-fifo", lambda: stabilize_single(start, order="fifo").config))

        def numpy_queue():
            with _backend.use_backend("numpy"):
                return stabilize_queue(start, warm_start=False).config

        def numpy_random():
            with _backend.use_backend("numpy"):
                return stabilize_single(start, order="random", seed=seed).config

        variants.append(("numpy-sweeps", numpy_queue))
        variants.append(("numpy-random", numpy_random))
        if S._warm_applicable(start) is not None:
            variants.append(("queue-warm", lambda: stabilize_queue(start, warm_start=True).config))
        if kind == "SP":
            for name in ("waves", "sync", "fixed-point"):
                variants.append((name, lambda name=name: stabilize(start, name)[0]))
        for name, run in variants:
            out = run()
            rep.add({"model": kind, "h": hh, "order": name}, out.fields_equal(ref, cmp_d), cfg=out)
    return rep.done()


# --- fixed point -----------------------------------------------------------------------------

def check_fixed_point(d: int = 2, h_list=(-5, 0, 2), n_list=(1000, 10000), *, runs: _Runs | None = None,
                      dump_dir=None) -> CheckReport:
    """The Jacobi fixed point of T = max(floor((H0 + sum of neighbour T) / 2d),
    0) equals the simulated toppling function (absolute seeds)."""
    runs = runs or _Runs()
    rep = _Report("fixed-point", {"d": d, "h": list(h_list), "n": list(n_list)}, dump_dir)
    for h in h_list:
        for n in n_list:
            cfg = runs.get("SP", d, h, n)
            T = toppling_fixed_point(ModelSpec(Model.SP, d, h), n)
            R = max(cfg.radius, T.shape[0] // 2)
            a = cfg.with_radius(R).T
            b = np.zeros_like(a)
            r0 = T.shape[0] // 2
            b[(slice(R - r0, R + r0 + 1),) * d] = T
            rep.add({"h": h, "n": n}, np.array_equal(a, b), cfg=cfg, topplings=int(b.sum()))
    return rep.done()


# --- k-colour construction ----------------------------------------------------------------------

def check_kcolor(d: int = 2, h_list=(-2, -3), n_list=(2000, 6000), *, runs: _Runs | None = None,
                 dump_dir=None) -> CheckReport:
    """k = |h| colours plus untoppling avalanches reproduce direct RR,h
    (additive seeds) in H, T and D, and every avalanche changes H at exactly
    two sites.

    The equality is judged after the resolver's loop phase. How many
    untopplings that phase needed, and how many avalanches closed on their
    own start (changing no site), is reported alongside.
    """
    runs = runs or _Runs()
    rep = _Report("kcolor", {"d": d, "h": list(h_list), "n": list(n_list)}, dump_dir)
    for h in h_list:
        k = -h
        for n in n_list:
            params = {"h": h, "n": n}
            if n % k:
                rep.add(params, True, skipped=f"n not divisible by {k}")
                continue
            kc = stabilize_kcolor(d, k, n)
            res = resolve_to_optimal(kc.config, audit=True, inplace=True)
            direct = runs.get("RR", d, h, n, SeedMode.ADDITIVE)
            same = res.config.fields_equal(direct, True)
            rep.add({**params, "equal": True}, same, cfg=res.config, X=len(kc.colors.X))
            sizes = sorted(set(res.changed_sites))
            rep.add({**params, "two_sites": True}, all(c == 2 for c in res.changed_sites),
                    cfg=res.config, avalanches=res.avalanches, sizes=sizes)
            rep.add({**params, "loops": True}, True, label=REPORTED, avalanches=res.avalanches,
                    closed=res.changed_sites.count(0), loop_untopplings=res.loop_untopplings)
    return rep.done()


# --- rendering and dumps ---------------------------------------------------------------------------

def random_configuration(rng: np.random.Generator) -> Configuration:
    """Arbitrary (not necessarily reachable) configuration for round trips."""
    kind = ("RR", "DR", "SP")[int(rng.integers(3))]
    d = int(rng.integers(1, 4))
    c = {"RR": 1, "DR": 2, "SP": 2 * d}[kind]
    h = int(rng.integers(-6, c - 1))
    table = DirectionMap.default(d).table[rng.permutation(2 * d)]
    for i in range(2 * d):
        if rng.random() < 0.3:
            table[i] = -table[i]
    # keep it a valid map: each vector once
    if len({tuple(v) for v in table}) != 2 * d:
        table = DirectionMap.default(d).table
    spec = ModelSpec(kind, d, h, DirectionMap(table))
    R = int(rng.integers(0, {1: 30, 2: 8, 3: 3}[d]))
    shape = (2 * R + 1,) * d
    H = rng.integers(-(10**12), 10**12, size=shape)
    T = rng.integers(0, 10**15, size=shape)
    D = rng.integers(0, 2 * d, size=shape)
    mode = (SeedMode.ABSOLUTE, SeedMode.ADDITIVE)[int(rng.integers(2))]
    return Configuration(spec, H, T, D, n=int(rng.integers(0, 10**9)), mode=mode,
                         d0_fill=int(rng.integers(0, 2 * d)))


def check_render(n: int = 60_000, h: int = 2, *, roundtrips: int = 100, rng_seed: int = 0, dump_dir=None) -> CheckReport:
    """The SP d = 2 H image is square, shows the full square toppling cluster,
    and is byte-identical across two independent runs; dump/load is the
    identity on random configurations."""
    rep = _Report("render", {"n": n, "h": h, "roundtrips": roundtrips}, dump_dir, seed=rng_seed)
    spec = ModelSpec(Model.SP, 2, h)
    images = []
    cfgs = []
    for _ in range(2):
        cfg = stabilize_queue(seed(spec, n), inplace=True).config
        cfgs.append(cfg)
        images.append(gio.pgm_bytes(cfg, "H"))
    pixels = np.frombuffer(images[0].split(b"\n", 3)[3], dtype=np.uint8)
    w, hgt = map(int, images[0].split(b"\n", 3)[1].split())
    v = cube_verdict(cfgs[0]) if h == 2 else None
    square = w == hgt and pixels.size == w * hgt
    if v is not None:
        square = square and v["cube"] and v["closure"] and w == 2 * v["r"] + 5
    rep.add({"figure": "square"}, square, cfg=cfgs[0], width=w, height=hgt)
    rep.add({"figure": "deterministic"}, images[0] == images[1], cfg=cfgs[0], bytes=len(images[0]))
    rng = np.random.default_rng(rng_seed)
    for i in range(roundtrips):
        cfg = random_configuration(rng)
        data = gio.dumps(cfg)
        back = gio.loads(data)
        same = (
            back.spec == cfg.spec and back.n == cfg.n and back.mode == cfg.mode
            and back.d0_fill == cfg.d0_fill and back.radius == cfg.radius
            and np.array_equal(back.H, cfg.H) and np.array_equal(back.T, cfg.T)
            and np.array_equal(back.D, cfg.D) and gio.dumps(back) == data
        )
        rep.add({"roundtrip": i, "model": cfg.spec.kind.value, "d": cfg.d}, same, cfg=cfg)
    return rep.done()


# --- performance floor --------------------------------------------------------------------------------

_PERF_SNIPPET = r"""
import json, resource, sys, time
from growthshapes.config import ModelSpec, seed
from growthshapes.stabilize import stabilize_queue
n = int(sys.argv[1]); h = int(sys.argv[2])
stabilize_queue(seed(ModelSpec("SP", 2, h), 50000))  # compile outside the clock
t = time.perf_counter()
res = stabilize_queue(seed(ModelSpec("SP", 2, h), n), inplace=True)
wall = time.perf_counter() - t
rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
print(json.dumps({"wall": wall, "rss": rss, "topplings": res.stats.total_topplings,
                  "stable": res.config.is_stable()}))
"""


def check_performance(n: int = 1_000_000, h: int = 0, *, max_seconds: float = 60.0, max_bytes: int = 1 << 30,
                      dump_dir=None) -> CheckReport:
    """SP d = 2 with the queue scheduler in a fresh process: wall time of the
    stabilisation and peak resident memory of the whole process."""
    rep = _Report("performance", {"n": n, "h": h, "max_seconds": max_seconds, "max_bytes": max_bytes}, dump_dir)
    out = subprocess.run([sys.executable, "-c", _PERF_SNIPPET, str(n), str(h)], capture_output=True, text=True)
    if out.returncode != 0:
        rep.add({"n": n}, False, error=out.stderr.strip().splitlines()[-1:] or ["no output"])
        return rep.done()
    m = json.loads(out.stdout.strip().splitlines()[-1])
    rep.add({"n": n, "limit": "time"}, m["wall"] <= max_seconds, seconds=m["wall"], topplings=m["topplings"])
    rep.add({"n": n, "limit": "memory"}, m["rss"] <= max_bytes, peak_rss_mib=m["rss"] / 2**20)
    rep.add({"n": n, "limit": "stable"}, m["stable"])
    return rep.done()


# --- registry ---------------------------------------------------------------------------------------

CHECKERS = {
    "cube": check_cube,
    "waves": check_wave_lemma,
    "inclusions": check_inclusions,
    "bounds": check_bounds,
    "rr-sphere": check_rr_sphere,
    "rr-diamond": check_rr_diamond,
    "sphere-trend": check_sphere_trend,
    "sp-structure": check_sp_structure,
    "abelian": check_abelian,
    "fixed-point": check_fixed_point,
    "kcolor": check_kcolor,
    "render": check_render,
    "performance": check_performance,
}


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    seconds: float  # runtime budget
    calls: tuple  # (checker name, kwargs) pairs


ACCEPTANCE = (
    Criterion(1, "cube theorem", 60, (("cube", {"n_max": 60_000, "d": 2}),)),
    Criterion(2, "wave lemma", 10, (("waves", {"r_max": 8, "d": 2}), ("waves", {"r_max": 8, "d": 3}))),
    Criterion(3, "inclusions", 120, (("inclusions", {"d": 1}), ("inclusions", {"d": 2}))),
    Criterion(4, "toppling-cluster bounds", 120, (("bounds", {"d": 2}), ("bounds", {"d": 3}))),
    Criterion(5, "abelian property", 30, (("abelian", {}),)),
    Criterion(6, "fixed-point equivalence", 60, (("fixed-point", {}),)),
    Criterion(7, "k-colour construction", 60, (("kcolor", {}),)),
    Criterion(8, "sandpile structure", 60, (("sp-structure", {}),)),
    Criterion(9, "sphere statements", 180, (
        ("rr-diamond", {}), ("rr-sphere", {}), ("sphere-trend", {"model": "SP"}),
    )),
    Criterion(10, "rendering and dumps", 60, (("render", {}),)),
    Criterion(11, "performance floor", 60, (("performance", {}),)),
)


def run_criterion(crit: Criterion, dump_dir=None) -> tuple:
    """Run one acceptance criterion; returns (passed, reports, seconds)."""
    t0 = time.perf_counter()
    reports = [CHECKERS[name](**kw, dump_dir=dump_dir) for name, kw in crit.calls]
    return all(r.passed for r in reports), reports, time.perf_counter() - t0
