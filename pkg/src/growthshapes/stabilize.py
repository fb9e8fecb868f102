"""Stabilisation schedulers and the k-colour / untoppling constructions.

Every scheduler works in place on a copy of the input configuration (pass
``inplace=True`` to skip the copy) and returns a named tuple whose first
field is the stabilised configuration and whose last is a
:class:`StabilizeStats`.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _backend
from . import kernels as K
from ._warmstart import odometer_guess
from .config import (
    Configuration,
    IllegalUntoppling,
    Model,
    ModelSpec,
    SeedMode,
    seed,
)
from .lattice import Cluster

# automatic warm start once the origin excess reaches this size, per dimension
WARM_START_MIN = {1: 200, 2: 5_000}
# below this excess the coarsest level is solved from scratch
WARM_START_BASE = {1: 200, 2: 20_000}


@dataclass
class StabilizeStats:
    scheduler: str
    total_topplings: int = 0
    sites_toppled: int = 0
    rounds: int = 0  # queue pops, waves, synchronous steps or sweeps
    wall_time: float = 0.0
    peak_radius: int = 0
    extra: dict = field(default_factory=dict)


class QueueResult(NamedTuple):
    config: Configuration
    stats: StabilizeStats


class WaveResult(NamedTuple):
    config: Configuration
    waves: list
    stats: StabilizeStats


class SyncResult(NamedTuple):
    config: Configuration
    snapshots: list
    stats: StabilizeStats


@dataclass
class ColorDecomposition:
    k: int
    clusters: list  # V^1 .. V^k
    W: Cluster
    X: Cluster


class KColorResult(NamedTuple):
    config: Configuration
    colors: ColorDecomposition
    stats: StabilizeStats


class ResolveResult(NamedTuple):
    config: Configuration
    avalanches: int
    changed_sites: list  # per avalanche, number of sites whose H changed
    stats: StabilizeStats
    loop_untopplings: int = 0  # undone in the loop phase


def _flat(cfg: Configuration):
    return cfg.H.reshape(-1), cfg.T.reshape(-1), cfg.D.reshape(-1)


def _prepare(cfg: Configuration, inplace: bool, name: str):
    if not cfg.is_allowed():
        raise ValueError(f"{name} needs an allowed configuration")
    return cfg if inplace else cfg.copy()


def _finish(cfg, stats, T0_sum, t0):
    stats.total_topplings = int(cfg.T.sum()) - T0_sum
    stats.sites_toppled = int(np.count_nonzero(cfg.T))
    stats.wall_time = time.perf_counter() - t0
    stats.peak_radius = cfg.radius
    return stats


def _require_sp(cfg_or_spec, name):
    spec = getattr(cfg_or_spec, "spec", cfg_or_spec)
    if spec.kind is not Model.SP:
        raise ValueError(f"{name} is defined for the sandpile model only")


# --- queue ---------------------------------------------------------------------

def _queue_pass(cfg: Configuration) -> tuple:
    """Topple until stable, growing the box whenever the kernel asks.
    Returns (pops or sweeps, boxes grown)."""
    spec = cfg.spec
    rounds = grown = 0
    while True:
        H, T, D = _flat(cfg)
        if _backend.backend() == "numba":
            if spec.kind is Model.SP:
                st, _, pops = K.fifo_sp_jit(H, T, cfg.offsets(), spec.h_max, cfg.edge_mask())
            else:
                st, _, pops = K.fifo_bulk_jit(H, T, D, cfg.offsets(), spec.c, spec.h_max, cfg.edge_mask())
        else:
            st, _, pops = K.sweep_bulk_numpy(
                cfg.H, cfg.T, cfg.D, spec.dirmap.table, spec.c, spec.h_max, cfg.edge_mask()
            )
        rounds += pops
        if st == K.OK:
            return rounds, grown
        cfg.grow()
        grown += 1


def _fresh_excess(cfg: Configuration):
    """Origin excess over background if cfg is an untouched origin seed."""
    h = cfg.spec.h
    origin = (cfg.radius,) * cfg.d
    excess = int(cfg.H[origin]) - h
    if cfg.T.any():
        return None
    H = cfg.H.copy()
    H[origin] = h
    if not np.all(H == h):
        return None
    return excess


def _warm_kind(spec: ModelSpec):
    """Which certified repair applies: ``"sand"`` when every toppling feeds
    all neighbours (the sandpile, and DR on the line), ``"rotor"`` for the
    rotor router on the line."""
    if spec.c == spec.ndir and spec.d in (1, 2):
        return "sand"
    if spec.kind is Model.RR and spec.d == 1:
        return "rotor"
    return None


def _warm_applicable(cfg: Configuration):
    if _warm_kind(cfg.spec) is None:
        return None
    excess = _fresh_excess(cfg)
    if excess is None or excess >> cfg.d < 1:
        return None
    return excess


def stabilize_queue(cfg: Configuration, *, inplace: bool = False, warm_start="auto") -> QueueResult:
    """FIFO bulk-toppling stabilisation: every pop topples a site
    ``H // c`` times at once.

    ``warm_start`` applies to fresh origin seeds of the sandpile in d = 1, 2
    and of RR and DR on the line: the queue then starts from a multiscale
    odometer guess instead of from T = 0, and the result is certified equal
    to the from-scratch one (see :func:`_warm_queue`). ``"auto"`` enables it
    from an origin excess of ``WARM_START_MIN[d]``; ``True`` forces it;
    ``False`` never uses it.
    """
    t0 = time.perf_counter()
    cfg = _prepare(cfg, inplace, "stabilize_queue")
    T0 = int(cfg.T.sum())
    excess = _warm_applicable(cfg) if warm_start is not False else None
    if warm_start is True and excess is None:
        raise ValueError("warm start needs a fresh origin seed of a supported model")
    if excess is not None and (warm_start is True or excess >= WARM_START_MIN[cfg.d]):
        stats = StabilizeStats("queue")
        stats.extra = _warm_queue(cfg, excess)
        stats.rounds = stats.extra["pops"]
        stats.extra["warm_start"] = True
    else:
        rounds, _ = _queue_pass(cfg)
        stats = StabilizeStats("queue", rounds=rounds)
    return QueueResult(cfg, _finish(cfg, stats, T0, t0))


def _fire(cfg: Configuration, w: np.ndarray) -> None:
    """Apply odometer ``w`` to a T = 0 configuration in one go, legal or
    not. The per-direction counts follow the bulk toppling rule."""
    spec = cfg.spec
    nd = spec.ndir
    tot = spec.c * w
    full, rem = np.divmod(tot, nd)
    d0 = cfg.D.astype(np.int64)
    for i, v in enumerate(spec.dirmap.table):
        amt = full if spec.c == nd else full + ((i - d0 - 1) % nd < rem)
        K._shift_add(cfg.H, amt, v)
    cfg.H -= tot
    cfg.T += w
    cfg.D[...] = (d0 + tot) % nd


def _warm_queue(cfg: Configuration, excess: int) -> dict:
    """Exact stabilisation from a multiscale starting odometer.

    1. Solve the problem with excess // 2^d (recursively), rescale its
       odometer into a guess w and fire w at once.
    2. Relief: undo topplings at sites left with T > 0 and H < 0 until
       every toppled site has H >= 0.
    3. Run the FIFO queue. The result is stable and allowed, and every
       stable outcome of some toppling vector w has w >= u, the true
       odometer (least action).
    4. Descent: lower T by one on the largest set of toppled sites that
       stays stable when lowered (for sandpiles the unburnt part of
       supp(T), for rotors the cycles of last-exit arrows), relieve again
       and repeat. Stability is kept throughout, so w >= u stays true.
       When the set is empty no sequence of legal untopplings ends in a
       stable configuration, and the only such stable, allowed
       configuration reachable from the seed is the true final one.
    """
    spec = cfg.spec
    kind = _warm_kind(spec)
    coarse_excess = excess >> cfg.d
    coarse_cfg = seed(spec, coarse_excess, SeedMode.ADDITIVE)
    nested = coarse_excess >> cfg.d >= WARM_START_BASE[cfg.d]
    coarse = stabilize_queue(coarse_cfg, inplace=True, warm_start=nested).config
    rc = coarse.toppled().linf_radius()
    R = max(cfg.radius, 2 * rc + 8)
    cfg.grow(R)
    guess = odometer_guess(coarse.T, excess, coarse_excess, R)
    guess[cfg.edge_mask().reshape(guess.shape) == 1] = 0
    _fire(cfg, guess)
    info = {"guess_topplings": int(guess.sum())}
    numba = _backend.backend() == "numba"
    H, T, D = _flat(cfg)
    if kind == "rotor":
        info["untopplings"] = int(K.rotor_relieve_all_jit(H, T, D, cfg.offsets()))
    elif numba:
        info["untopplings"] = int(K.relieve_all_jit(H, T, cfg.offsets()))
    else:
        info["untopplings"] = K.relieve_numpy(cfg.H, cfg.T, spec.dirmap.table)
    info["pops"], info["grown"] = _queue_pass(cfg)
    H, T, D = _flat(cfg)
    if kind == "rotor":
        st, rounds, lowered, un = K.rotor_descend_jit(H, T, D, cfg.offsets(), 1 << 40)
    elif numba:
        st, rounds, lowered, un = K.descend_jit(H, T, cfg.offsets(), 1 << 40)
    else:
        st, rounds, lowered, un = K.descend_numpy(cfg.H, cfg.T, spec.dirmap.table, 1 << 40)
    if st != K.OK or not cfg.is_stable() or not cfg.is_allowed():
        raise RuntimeError("warm-start repair did not reach a certified fixed point")
    info.update(descent_rounds=int(rounds), descent_lowered=int(lowered))
    info["untopplings"] += int(un)
    return info


# --- single-toppling reference ----------------------------------------------

def stabilize_single(cfg: Configuration, *, order: str = "fifo", seed: int = 0,
                     inplace: bool = False) -> QueueResult:
    """Reference scheduler: one toppling per step, at the head of a FIFO
    queue (``order="fifo"``) or at a uniformly random unstable site
    (``order="random"``, reproducible through ``seed``)."""
    if order not in ("fifo", "random"):
        raise ValueError(f"unknown order {order!r}")
    t0 = time.perf_counter()
    cfg = _prepare(cfg, inplace, "stabilize_single")
    T0 = int(cfg.T.sum())
    spec = cfg.spec
    numba = _backend.backend() == "numba"
    fifo = K.single_fifo_jit if numba else K._single_fifo
    rand = K.single_random_jit if numba else K._single_random
    attempt = 0
    while True:
        H, T, D = _flat(cfg)
        args = (H, T, D, cfg.offsets(), spec.c, spec.h_max, cfg.edge_mask())
        if order == "fifo":
            st, _ = fifo(*args)
        else:
            # a fresh sub-seed per attempt keeps reruns reproducible
            st, _ = rand(*args, seed + attempt)
        if st == K.OK:
            break
        cfg.grow()
        attempt += 1
    stats = StabilizeStats(f"single-{order}", extra={"seed": seed} if order == "random" else {})
    _finish(cfg, stats, T0, t0)
    stats.rounds = stats.total_topplings
    return QueueResult(cfg, stats)


# --- waves ---------------------------------------------------------------------

def stabilize_waves(cfg: Configuration, *, inplace: bool = False, record: bool = True) -> WaveResult:
    """Stabilise a sandpile with one unstable site p by waves: topple p
    once, then every site that becomes unstable, but not p again; repeat
    while p is unstable. Returns the toppling set of every wave."""
    _require_sp(cfg, "stabilize_waves")
    t0 = time.perf_counter()
    cfg = _prepare(cfg, inplace, "stabilize_waves")
    T0 = int(cfg.T.sum())
    unstable = cfg.unstable_sites()
    if len(unstable) > 1:
        raise ValueError("waves need a single unstable site")
    waves = []
    stats = StabilizeStats("waves")
    if len(unstable) == 0:
        return WaveResult(cfg, waves, _finish(cfg, stats, T0, t0))
    p_coord = tuple(int(v) for v in unstable[0])
    hmax = cfg.spec.h_max
    numba = _backend.backend() == "numba"
    wave = K.one_wave_jit if numba else K._one_wave
    buf = np.empty(cfg.H.size, dtype=np.int64)
    while cfg.H[cfg.index(p_coord)] > hmax:
        cfg.ensure_interior(p_coord)
        if buf.size < cfg.H.size:
            buf = np.empty(cfg.H.size, dtype=np.int64)
        H, T, _ = _flat(cfg)
        st, count = wave(H, T, cfg.offsets(), hmax, cfg.edge_mask(), cfg.flat_index(p_coord), buf)
        if st != K.OK:
            cfg.grow()
            continue
        stats.rounds += 1
        if record:
            mask = np.zeros(cfg.H.size, dtype=bool)
            mask[buf[:count]] = True
            waves.append(Cluster(mask.reshape(cfg.H.shape)))
    return WaveResult(cfg, waves, _finish(cfg, stats, T0, t0))


# --- synchronous steps -----------------------------------------------------------

def _parity(cfg: Configuration) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(-cfg.radius, cfg.radius + 1)] * cfg.d, indexing="ij", sparse=True)
    return (sum(grids) % 2).astype(np.uint8).reshape(-1) if cfg.d > 1 else (grids[0] % 2).astype(np.uint8)


class ParityViolation(RuntimeError):
    """Unstable sites of both parity classes appeared in one step."""


def stabilize_sync(cfg: Configuration, *, inplace: bool = False, record: bool = True) -> SyncResult:
    """Synchronous steps: each step fully stabilises every currently unstable
    site at once. The unstable sites of a step must share one parity class
    (checked every step); ``record`` keeps a copy of T after each step."""
    _require_sp(cfg, "stabilize_sync")
    t0 = time.perf_counter()
    cfg = _prepare(cfg, inplace, "stabilize_sync")
    T0 = int(cfg.T.sum())
    hmax = cfg.spec.h_max
    snapshots = []
    stats = StabilizeStats("sync")
    numba = _backend.backend() == "numba"
    step_fn = K.sync_steps_jit if numba else K._sync_steps
    while True:
        parity = np.ascontiguousarray(_parity(cfg).reshape(-1))
        edge = cfg.edge_mask()
        H, T, _ = _flat(cfg)
        if numba:
            front = np.flatnonzero(H > hmax).astype(np.int64)
            nf = front.size
            front = np.concatenate([front, np.empty(H.size, dtype=np.int64)])
            stamp = np.zeros(H.size, dtype=np.int64)
            st = K.OK
            while nf > 0:
                st, nf, steps, _ = step_fn(H, T, cfg.offsets(), hmax, edge, parity, front, nf,
                                           stamp, stats.rounds, 1 if record else 1 << 62)
                if st != K.OK:
                    break
                stats.rounds += steps
                if record:
                    snapshots.append(cfg.T.copy())
        else:
            while True:
                st, top = K.sync_step_numpy(cfg.H, cfg.T, cfg.spec.dirmap.table, hmax, edge, parity)
                if st != K.OK or top == 0:
                    break
                stats.rounds += 1
                if record:
                    snapshots.append(cfg.T.copy())
        if st == K.PARITY:
            raise ParityViolation(f"unstable sites of both parities at step {stats.rounds + 1}")
        if st == K.OK:
            break
        cfg.grow()
    return SyncResult(cfg, snapshots, _finish(cfg, stats, T0, t0))


# --- toppling-function fixed point ----------------------------------------------

def toppling_fixed_point(spec: ModelSpec, n: int, mode=SeedMode.ABSOLUTE, *, max_sweeps: int = 10**8):
    """Iterate T <- max(floor((H0 + sum of neighbour T) / 2d), 0) in Jacobi
    sweeps from T = 0 until a sweep changes nothing; returns T as an
    origin-centred array.

    Each iterate is a lower bound of the final toppling function, so the box
    simply grows (keeping T) when mass nears its edge.
    """
    _require_sp(spec, "toppling_fixed_point")
    cfg = seed(spec, n, mode)
    nd = spec.ndir
    numba = _backend.backend() == "numba"
    T = np.zeros_like(cfg.T)
    sweeps = 0
    while True:
        edge = cfg.edge_mask()
        near = _near_edge(cfg)
        if numba:
            st, s = K.jacobi_jit(cfg.H.reshape(-1), T.reshape(-1), cfg.offsets(), nd, edge, near, max_sweeps - sweeps)
        else:
            st, s = K.jacobi_numpy(cfg.H, T, spec.dirmap.table, nd, edge, near, max_sweeps - sweeps)
        sweeps += s
        if st == K.OK:
            return T
        if st == K.BUSTED:
            raise RuntimeError("fixed-point iteration did not converge")
        cfg.grow()
        T = _embed(T, cfg.radius, 0)


def _near_edge(cfg: Configuration) -> np.ndarray:
    """Flat mask of the second-outermost layer."""
    inner = Configuration(
        cfg.spec,
        np.zeros((cfg.side - 2,) * cfg.d, dtype=cfg.H.dtype),
        np.zeros((cfg.side - 2,) * cfg.d, dtype=cfg.T.dtype),
        np.zeros((cfg.side - 2,) * cfg.d, dtype=cfg.D.dtype),
    ).edge_mask().reshape((cfg.side - 2,) * cfg.d)
    out = np.zeros(cfg.H.shape, dtype=np.uint8)
    out[(slice(1, -1),) * cfg.d] = inner
    return out.reshape(-1)


# --- k-colour rotor-router -----------------------------------------------------------

def stabilize_kcolor(d: int, k: int, n: int, d0=0, *, dirmap=None) -> KColorResult:
    """k colours of n/k particles each, stabilised one colour after the
    other as rotor-router walks with background -1 per colour; rotors and
    toppling counts carry over between colours.

    The colourless configuration (background -k, origin -k + n) is returned
    together with the per-colour visited sets. It is stable but in general
    not allowed; :func:`resolve_to_optimal` finishes it.
    """
    if k < 1:
        raise ValueError("need at least one colour")
    if n % k:
        raise ValueError(f"n = {n} is not a multiple of k = {k}")
    t0 = time.perf_counter()
    color_spec = ModelSpec(Model.RR, d, -1, dirmap)
    start = seed(color_spec.with_h(-k), n, SeedMode.ADDITIVE, d0=d0)
    T, D = start.T, start.D
    heights = []
    pops = 0
    for _ in range(k):
        H = np.full(T.shape, -1, dtype=start.H.dtype)
        H[(T.shape[0] // 2,) * d] += n // k
        cur = Configuration(color_spec, H, T, D, d0_fill=start.d0_fill)
        pops += _queue_pass(cur)[0]
        T, D = cur.T, cur.D
        heights = [_embed(h, cur.radius, -1) for h in heights] + [cur.H]
    spec = ModelSpec(Model.RR, d, -k, dirmap)
    cfg = Configuration(spec, sum(heights[1:], heights[0].copy()), T, D, n=n,
                        mode=SeedMode.ADDITIVE, d0_fill=start.d0_fill)
    clusters = [Cluster(h == 0) for h in heights]
    W = clusters[0]
    union = clusters[0]
    for c in clusters[1:]:
        W = W & c
        union = union | c
    stats = StabilizeStats("kcolor", rounds=pops)
    _finish(cfg, stats, 0, t0)
    return KColorResult(cfg, ColorDecomposition(k, clusters, W, union - W), stats)


def _embed(a: np.ndarray, R: int, fill) -> np.ndarray:
    r0 = a.shape[0] // 2
    if r0 == R:
        return a
    out = np.full((2 * R + 1,) * a.ndim, fill, dtype=a.dtype)
    out[(slice(R - r0, R + r0 + 1),) * a.ndim] = a
    return out


# --- untoppling avalanches ----------------------------------------------------------

def resolve_to_optimal(cfg: Configuration, *, order: str = "lex", seed: int = 0,
                       audit: bool = False, inplace: bool = False, loops: bool = True) -> ResolveResult:
    """Run untoppling avalanches (rotor-router, c = 1) until no site has
    T > 0 and H < 0, then undo closed loops of toppled sites.

    Each avalanche starts at a deficient site chosen by lexicographic scan
    (``order="lex"``) or uniformly at random (``order="random"``). With
    ``audit`` the number of sites whose H changed is measured for every
    avalanche by comparing the whole field before and after.

    Avalanches alone can stop at a stable, allowed state that is not
    optimal: toppled sites whose last-exit arrows form a cycle can all be
    untoppled together without changing H. The loop phase (``loops=True``)
    removes every such set, which leaves the unique optimal configuration.
    Its untoppling count is ``loop_untopplings``; 0 means the avalanches
    had already reached it.
    """
    if cfg.spec.kind is not Model.RR:
        raise ValueError("untoppling avalanches are implemented for the rotor-router model")
    if order not in ("lex", "random"):
        raise ValueError(f"unknown order {order!r}")
    t0 = time.perf_counter()
    cfg = cfg if inplace else cfg.copy()
    if not cfg.is_stable():
        raise ValueError("resolve_to_optimal needs a stable configuration")
    rng = np.random.default_rng(seed)
    numba = _backend.backend() == "numba"
    aval = K.avalanche_jit if numba else K._avalanche
    H, T, D = _flat(cfg)
    offs = cfg.offsets()
    chain = np.empty(4096, dtype=np.int64)
    changed = []
    count = 0
    untopplings = 0
    while True:
        bad = np.flatnonzero((T > 0) & (H < 0))
        if bad.size == 0:
            break
        p = int(bad[0] if order == "lex" else bad[rng.integers(bad.size)])
        before = H.copy() if audit else None
        while True:
            # an overflowing chain buffer just pauses the avalanche at p
            st, L, p = aval(H, T, D, offs, p, chain)
            untopplings += L
            if st == K.OK:
                break
        count += 1
        if audit:
            changed.append(int(np.count_nonzero(H != before)))
    if np.any(T < 0):
        raise IllegalUntoppling("an avalanche untoppled a site with T = 0")
    looped = 0
    if loops:
        st, _, lowered, un = K.rotor_descend_jit(H, T, D, offs, 1 << 40)
        if st != K.OK:  # pragma: no cover - the round limit is unreachable
            raise RuntimeError("loop removal did not finish")
        looped = lowered + un
        untopplings += looped
    stats = StabilizeStats(f"resolve-{order}", rounds=count,
                           extra={"untopplings": untopplings, "loop_untopplings": looped})
    stats.wall_time = time.perf_counter() - t0
    stats.peak_radius = cfg.radius
    stats.total_topplings = -untopplings
    stats.sites_toppled = int(np.count_nonzero(T))
    if order == "random":
        stats.extra["seed"] = seed
    return ResolveResult(cfg, count, changed, stats, looped)


SCHEDULERS = ("queue", "single-fifo", "single-random", "waves", "sync", "fixed-point")


def stabilize(cfg: Configuration, scheduler: str = "queue", *, seed: int = 0, **kw):
    """Dispatch by scheduler name; returns (configuration, stats)."""
    if scheduler == "queue":
        out = stabilize_queue(cfg, **kw)
    elif scheduler == "single-fifo":
        out = stabilize_single(cfg, order="fifo")
    elif scheduler == "single-random":
        out = stabilize_single(cfg, order="random", seed=seed)
    elif scheduler == "waves":
        out = stabilize_waves(cfg, record=False)
    elif scheduler == "sync":
        out = stabilize_sync(cfg, record=False)
    elif scheduler == "fixed-point":
        return _fixed_point_run(cfg)
    else:
        raise ValueError(f"unknown scheduler {scheduler!r}; choose from {SCHEDULERS}")
    return out.config, out.stats


def _fixed_point_run(cfg: Configuration):
    """Fixed-point scheduler for a fresh seed: fire the fixed-point T."""
    _require_sp(cfg, "fixed-point scheduler")
    t0 = time.perf_counter()
    excess = _fresh_excess(cfg)
    if excess is None:
        raise ValueError("the fixed-point scheduler needs a fresh origin seed")
    T = toppling_fixed_point(cfg.spec, excess, SeedMode.ADDITIVE)
    out = cfg.copy()
    out.grow(T.shape[0] // 2)
    T = _embed(T, out.radius, 0)
    _fire(out, T)
    stats = StabilizeStats("fixed-point")
    return out, _finish(out, stats, 0, t0)
