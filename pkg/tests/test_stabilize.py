import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthshapes.analysis import nnn_monotone, particle_cluster, toppling_cluster
from growthshapes.config import Configuration, ModelSpec, SeedMode, phi_r, seed, untopple
from growthshapes.lattice import Cluster, cube
from growthshapes.stabilize import (
    SCHEDULERS,
    ParityViolation,
    resolve_to_optimal,
    stabilize,
    stabilize_kcolor,
    stabilize_queue,
    stabilize_single,
    stabilize_sync,
    stabilize_waves,
    toppling_fixed_point,
)

H_MAX = lambda kind, d: {"RR": 0, "DR": 1, "SP": 2 * d - 1}[kind]  # noqa: E731


def _at(cfg, field, x):
    return int(getattr(cfg, field)[cfg.index(x)])


# --- queue ------------------------------------------------------------------------

def test_queue_sp_h2_n5(backend):
    out = stabilize_queue(seed(ModelSpec("SP", 2, 2), 5)).config
    assert _at(out, "H", (0, 0)) == 1
    for x in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert _at(out, "H", x) == 3
    assert _at(out, "T", (0, 0)) == 1 and out.T.sum() == 1


def test_queue_sp_h0_n4(backend):
    out = stabilize_queue(seed(ModelSpec("SP", 2, 0), 4)).config
    assert _at(out, "H", (0, 0)) == 0 and _at(out, "H", (1, 0)) == 1
    assert out.T.sum() == 1


def test_queue_rr_stable_seed(backend):
    res = stabilize_queue(seed(ModelSpec("RR", 2, -1), 1, SeedMode.ADDITIVE))
    assert res.stats.total_topplings == 0 and _at(res.config, "H", (0, 0)) == 0
    # an absolute pile of one sits above the router maximum and must move
    res = stabilize_queue(seed(ModelSpec("RR", 2, -1), 1))
    assert res.stats.total_topplings == 1 and _at(res.config, "H", (0, 0)) == 0
    assert res.config.total_mass() == 2


def test_queue_rejects_disallowed_input():
    cfg = seed(ModelSpec("SP", 2, 0), 10)
    cfg.H[cfg.index((1, 0))] = -1  # below background, never toppled
    with pytest.raises(ValueError, match="allowed"):
        stabilize_queue(cfg)


def test_queue_does_not_mutate_unless_asked():
    cfg = seed(ModelSpec("SP", 2, 0), 100)
    before = cfg.copy()
    stabilize_queue(cfg)
    assert cfg.fields_equal(before)
    stabilize_queue(cfg, inplace=True)
    assert cfg.is_stable()


def test_stats_count_topplings(backend):
    cfg = seed(ModelSpec("DR", 2, -1), 700)
    res = stabilize_queue(cfg)
    assert res.stats.total_topplings == int(res.config.T.sum())
    assert res.stats.sites_toppled == int(np.count_nonzero(res.config.T))
    assert res.stats.peak_radius == res.config.radius


@given(st.sampled_from(["RR", "DR", "SP"]), st.integers(1, 3), st.integers(-6, 4), st.integers(0, 400))
def test_queue_result_is_stable_and_allowed(kind, d, h, n):
    if h >= H_MAX(kind, d) or n < h:
        return
    out = stabilize_queue(seed(ModelSpec(kind, d, h), n)).config
    assert out.is_stable() and out.is_allowed()
    assert out.total_mass() == n - h  # absolute seed: origin holds n - h above background
    t, v = toppling_cluster(out), particle_cluster(out)
    assert t <= v


# --- abelian property ------------------------------------------------------------------

def _schedulers(kind):
    names = ["queue", "single-fifo", "single-random"]
    if kind == "SP":
        names += ["waves", "sync", "fixed-point"]
    return names


@given(
    st.sampled_from(["RR", "DR", "SP"]),
    st.integers(1, 3),
    st.integers(-5, 4),
    st.integers(1, 300),
    st.integers(0, 10**6),
)
def test_schedulers_agree(kind, d, h, n, rng_seed):
    if h >= H_MAX(kind, d) or n < h:
        return
    start = seed(ModelSpec(kind, d, h), n)
    ref, _ = stabilize(start, "queue", warm_start=False)
    for name in _schedulers(kind):
        out, _ = stabilize(start, name, seed=rng_seed)
        assert out.fields_equal(ref, kind != "SP"), name


@pytest.mark.parametrize("kind,h", [("RR", -1), ("DR", 0), ("SP", 0), ("SP", 2), ("RR", -3)])
def test_backends_agree(kind, h):
    from growthshapes import _backend

    outs = []
    for name in _backend.BACKENDS:
        with _backend.use_backend(name):
            cfg = seed(ModelSpec(kind, 2, h), 800, d0=1)
            outs.append([stabilize(cfg, s, seed=3)[0] for s in _schedulers(kind)])
    for a, b in zip(*outs):
        assert a.fields_equal(b, True)


def test_random_order_is_reproducible():
    cfg = seed(ModelSpec("RR", 2, -2), 300)
    a = stabilize_single(cfg, order="random", seed=7).config
    b = stabilize_single(cfg, order="random", seed=7).config
    assert a.fields_equal(b)


def test_unknown_scheduler():
    with pytest.raises(ValueError, match="unknown scheduler"):
        stabilize(seed(ModelSpec("SP", 2, 0), 10), "gauss")
    assert "queue" in SCHEDULERS


def test_sp_only_schedulers_reject_routers():
    cfg = seed(ModelSpec("RR", 2, -1), 10)
    for fn in (stabilize_waves, stabilize_sync):
        with pytest.raises(ValueError):
            fn(cfg)
    with pytest.raises(ValueError):
        toppling_fixed_point(ModelSpec("DR", 2, 0), 10)


# --- warm start --------------------------------------------------------------------------

@pytest.mark.parametrize(
    "kind,d,h,n",
    [
        ("SP", 2, 2, 20_001),
        ("SP", 2, 0, 30_000),
        ("SP", 2, -3, 25_000),
        ("SP", 2, -7, 9_000),
        ("SP", 1, 0, 1_201),
        ("SP", 1, -4, 2_500),
        ("DR", 1, 0, 1_000),
        ("DR", 1, -3, 1_500),
        ("RR", 1, -1, 700),
        ("RR", 1, -4, 900),
    ],
)
def test_warm_start_is_exact(kind, d, h, n):
    cfg = seed(ModelSpec(kind, d, h), n)
    warm = stabilize_queue(cfg, warm_start=True)
    plain = stabilize_queue(cfg, warm_start=False)
    assert warm.stats.extra["warm_start"]
    assert warm.config.fields_equal(plain.config, True)


@given(st.sampled_from([("RR", -1), ("RR", -2), ("DR", 0), ("DR", -2)]), st.integers(50, 700),
       st.integers(0, 2**32 - 1))
def test_warm_start_exact_with_random_directions_1d(model, n, rng_seed):
    kind, h = model
    rng = np.random.default_rng(rng_seed)
    table = rng.integers(0, 2, size=2 * (n // max(1, -h)) + 41)
    cfg = seed(ModelSpec(kind, 1, h), n, d0=table)
    warm = stabilize_queue(cfg, warm_start=True).config
    plain = stabilize_queue(cfg, warm_start=False).config
    assert warm.fields_equal(plain, True)


def test_warm_start_numpy_backend_2d():
    from growthshapes import _backend

    cfg = seed(ModelSpec("SP", 2, 1), 12_000)
    with _backend.use_backend("numpy"):
        warm = stabilize_queue(cfg, warm_start=True).config
    plain = stabilize_queue(cfg, warm_start=False).config
    assert warm.fields_equal(plain)


def test_warm_start_refuses_unsupported_input():
    with pytest.raises(ValueError, match="warm start"):
        stabilize_queue(seed(ModelSpec("RR", 2, -1), 500), warm_start=True)
    cfg = seed(ModelSpec("SP", 2, 0), 500)
    cfg.H[cfg.index((1, 0))] += 1  # not a single origin pile
    with pytest.raises(ValueError, match="warm start"):
        stabilize_queue(cfg, warm_start=True)


# --- waves, synchronous steps, fixed point --------------------------------------------------

def test_waves_phi_1():
    res = stabilize_waves(phi_r(2, 1))
    assert len(res.waves) == 2
    assert res.waves[0] == cube(1, 2)
    assert res.waves[1] == cube(0, 2)


def test_waves_phi_0_and_single_site():
    assert [len(w) for w in stabilize_waves(phi_r(2, 0)).waves] == [1]
    res = stabilize_waves(seed(ModelSpec("SP", 2, 0), 4))
    assert len(res.waves) == 1 and res.waves[0] == cube(0, 2)


def test_waves_need_one_unstable_site():
    cfg = seed(ModelSpec("SP", 2, 0), 4)
    cfg.H[cfg.index((2, 2))] = 4
    with pytest.raises(ValueError):
        stabilize_waves(cfg)


@pytest.mark.parametrize("d,r", [(2, 3), (3, 2), (1, 5)])
def test_wave_lemma_counts(d, r, backend):
    out = stabilize_waves(phi_r(d, r)).config
    R = out.radius
    linf = np.abs(np.indices(out.T.shape) - R).max(axis=0)
    assert np.array_equal(out.T, np.maximum(r + 1 - linf, 0))


def test_sync_examples(backend):
    res = stabilize_sync(seed(ModelSpec("SP", 2, 0), 4))
    assert res.stats.rounds == 1 and res.snapshots[0][(res.config.radius,) * 2] == 1


def test_sync_detects_mixed_parity(backend):
    cfg = seed(ModelSpec("SP", 2, 0), 4)
    cfg.H[cfg.index((1, 0))] = 4
    with pytest.raises(ParityViolation):
        stabilize_sync(cfg)


def test_sync_matches_queue_each_parity(backend):
    cfg = seed(ModelSpec("SP", 2, 2), 3000)
    res = stabilize_sync(cfg)
    assert res.config.fields_equal(stabilize_queue(cfg).config, False)
    # T only grows along the steps
    for a, b in zip(res.snapshots, res.snapshots[1:]):
        R = b.shape[0] // 2
        r0 = a.shape[0] // 2
        assert np.all(b[(slice(R - r0, R + r0 + 1),) * 2] >= a)


@pytest.mark.slow
def test_sync_matches_queue_large():
    cfg = seed(ModelSpec("SP", 2, 2), 60_000)
    assert stabilize_sync(cfg, record=False).config.fields_equal(stabilize_queue(cfg).config, False)


def test_fixed_point_examples(backend):
    T = toppling_fixed_point(ModelSpec("SP", 2, 0), 4)
    R = T.shape[0] // 2
    assert T[R, R] == 1 and T.sum() == 1
    for h in (2, -5):
        spec = ModelSpec("SP", 2, h)
        T = toppling_fixed_point(spec, 1000)
        out = stabilize_queue(seed(spec, 1000)).config
        R = max(out.radius, T.shape[0] // 2)
        assert out.with_radius(R).T.sum() == T.sum()
        from growthshapes.stabilize import _embed

        assert np.array_equal(_embed(T, R, 0), out.with_radius(R).T)


@pytest.mark.parametrize("h", [2, 0, -4])
def test_nnn_monotone_toppling_function(h):
    out = stabilize_queue(seed(ModelSpec("SP", 2, h), 3000)).config
    assert nnn_monotone(out.T)


# --- k colours and untoppling avalanches ---------------------------------------------------------

def test_kcolor_one_colour_is_plain_rr(backend):
    kc = stabilize_kcolor(2, 1, 800)
    direct = stabilize_queue(seed(ModelSpec("RR", 2, -1), 800, SeedMode.ADDITIVE)).config
    assert kc.config.fields_equal(direct)


def test_kcolor_colour_clusters():
    kc = stabilize_kcolor(2, 3, 3000)
    assert kc.colors.k == 3
    assert [len(c) for c in kc.colors.clusters] == [1000, 1000, 1000]
    for c in kc.colors.clusters:
        assert kc.colors.W <= c
    union = kc.colors.clusters[0] | kc.colors.clusters[1] | kc.colors.clusters[2]
    assert kc.colors.X == union - kc.colors.W


def test_kcolor_heights_count_colours():
    k = 2
    kc = stabilize_kcolor(2, k, 2000)
    cfg = kc.config
    R = cfg.radius
    count = sum(c.with_radius(R).mask.astype(int) for c in kc.colors.clusters)
    assert np.array_equal(cfg.H, -k + count)
    assert np.all(cfg.H[kc.colors.W.with_radius(R).mask] == 0)
    assert np.all(cfg.H[kc.colors.X.with_radius(R).mask] < 0)


def test_kcolor_rejects_bad_split():
    with pytest.raises(ValueError):
        stabilize_kcolor(2, 3, 1000)
    with pytest.raises(ValueError):
        stabilize_kcolor(2, 0, 10)


def test_resolve_reproduces_direct_run(backend):
    kc = stabilize_kcolor(2, 2, 2000)
    res = resolve_to_optimal(kc.config)
    direct = stabilize_queue(seed(ModelSpec("RR", 2, -2), 2000, SeedMode.ADDITIVE)).config
    assert res.config.fields_equal(direct, True)
    assert res.avalanches > 0
    assert res.stats.extra["loop_untopplings"] == res.loop_untopplings


def test_avalanches_change_at_most_two_sites():
    for k, n in ((2, 2000), (2, 6000), (3, 6000)):
        res = resolve_to_optimal(stabilize_kcolor(2, k, n).config, audit=True)
        assert all(c in (0, 2) for c in res.changed_sites)


@pytest.mark.parametrize("k,n", [(2, 300), (3, 600), (4, 400)])
def test_resolve_order_does_not_matter(k, n):
    kc = stabilize_kcolor(2, k, n, d0=2)
    ref = resolve_to_optimal(kc.config).config
    for s in range(5):
        out = resolve_to_optimal(kc.config, order="random", seed=s).config
        assert out.fields_equal(ref, True)


def test_resolve_leaves_optimal_input_alone():
    direct = stabilize_queue(seed(ModelSpec("RR", 2, -2), 900)).config
    res = resolve_to_optimal(direct)
    assert res.avalanches == 0 and res.loop_untopplings == 0
    assert res.config.fields_equal(direct, True)


def test_avalanches_alone_can_stop_short():
    kc = stabilize_kcolor(2, 2, 2000)
    short = resolve_to_optimal(kc.config, loops=False).config
    assert short.is_stable() and short.is_allowed()
    full = resolve_to_optimal(kc.config).config
    assert not short.fields_equal(full, True)
    assert np.all(short.with_radius(full.radius).T >= full.T)


def _stable_after_untopplings(cfg, depth):
    """True if some sequence of at most ``depth`` legal untopplings ends stable."""
    sites = [tuple(int(v) for v in x) for x in np.argwhere(cfg.T > 0) - cfg.radius]
    frontier = [cfg]
    for _ in range(depth):
        nxt = []
        for c in frontier:
            for x in sites:
                if c.T[c.index(x)] > 0:
                    u = c.copy()
                    untopple(u, x)
                    if u.is_stable():
                        return True
                    nxt.append(u)
        frontier = nxt
    return False


@pytest.mark.parametrize("k,n", [(2, 12), (2, 20), (3, 15)])
def test_resolved_configuration_is_optimal(k, n):
    out = resolve_to_optimal(stabilize_kcolor(2, k, n).config).config
    assert out.is_allowed() and out.is_stable()
    assert not _stable_after_untopplings(out, 3)


def test_resolve_requires_rotor_and_stability():
    with pytest.raises(ValueError):
        resolve_to_optimal(seed(ModelSpec("SP", 2, 0), 10))
    with pytest.raises(ValueError):
        resolve_to_optimal(seed(ModelSpec("RR", 2, -1), 10))
