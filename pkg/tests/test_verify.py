from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthshapes import io as gio
from growthshapes import verify as V
from growthshapes.config import ModelSpec, seed


def _case(rep, **params):
    hits = [c for c in rep.cases if all(c.params.get(k) == v for k, v in params.items())]
    assert len(hits) == 1, hits
    return hits[0]


# --- integer helpers ----------------------------------------------------------------------

@given(st.fractions(min_value=0, max_value=10**9, max_denominator=50), st.integers(1, 4))
def test_int_root_floor(q, d):
    k = V.int_root_floor(q, d)
    assert k >= 0 and (k == 0 or k**d <= q) and (k + 1) ** d > q


def test_diamond_radius_bound_examples():
    # 1/2 (100 / 4)^(1/2) - 3/2 = 1
    assert V.diamond_radius_bound(100, 2, -1) == 1
    assert V.diamond_radius_bound(99, 2, -1) == 0
    assert V.diamond_radius_bound(10, 2, -1) is None


@given(st.integers(1, 10**7), st.integers(1, 3), st.integers(-20, 4))
def test_diamond_radius_bound_matches_real_formula(n, d, h):
    if h >= 2 * d - 1:
        return
    k = V.diamond_radius_bound(n, d, h)
    exact = 0.5 * (n / (2 * d - 1 - h)) ** (1 / d) - 1.5
    if k is None:
        assert exact < 1e-9
    else:
        assert k <= exact + 1e-9 < k + 1


# --- checkers on small grids ----------------------------------------------------------------

def test_cube_checker():
    rep = V.CHECKERS["cube"](n_max=3000, d=2, samples=5, exhaustive_max=40)
    assert rep.passed and len(rep.cases) >= 80
    assert _case(rep, n=8, mode="additive").detail["cube"]
    assert V.CHECKERS["cube"](n_max=2000, d=3, samples=2, exhaustive_max=4).passed


def test_cube_checker_radius_bound_at_full_size():
    rep = V.CHECKERS["cube"](n_max=60000, d=2, samples=1, exhaustive_max=0)
    c = _case(rep, n=60000, mode="absolute")
    assert c.passed and c.detail["r"] >= 121


def test_wave_checker():
    assert V.CHECKERS["waves"](r_max=4, d=2).passed
    assert V.CHECKERS["waves"](r_max=3, d=3).passed
    assert V.CHECKERS["waves"](r_max=6, d=1).passed


@pytest.mark.parametrize("d", [1, 2])
def test_inclusions_checker(d):
    rep = V.CHECKERS["inclusions"](d=d, h_range=(-3, -1, 0), n_list=(100, 400))
    assert rep.passed and rep.cases


def test_bounds_checker():
    rep = V.CHECKERS["bounds"](d=2, h_range=(0, -3), n_list=(10, 1000, 10000))
    assert rep.passed
    exact = [c for c in rep.cases if c.label == V.EXACT and c.params == {"h": 0, "n": 10000}]
    assert exact[0].detail["r"] * 2 >= 55
    assert any(c.label == V.REPORTED and "ratio" in c.detail for c in rep.cases)
    assert V.CHECKERS["bounds"](d=3, h_range=(4, -2), n_list=(50, 2000)).passed


def test_rr_sphere_checker():
    rep = V.CHECKERS["rr-sphere"](d=2, h_list=(-1,), n_list=(1000, 16000))
    assert rep.passed
    assert any(c.label == V.TREND for c in rep.cases)


def test_rr_diamond_checker():
    rep = V.CHECKERS["rr-diamond"](d=2, h_list=(-1, -5), n_list=(100, 10000))
    assert rep.passed
    assert _case(rep, h=-1, n=100, diamond=True).detail["radius"] == 1
    asym = _case(rep, h=-5, n=10000, cube="asymptotic")
    assert asym.label == V.REPORTED and asym.detail["within"]


@pytest.mark.parametrize("model", ["SP", "DR"])
def test_sphere_trend_checker(model):
    rep = V.CHECKERS["sphere-trend"](model=model, d=2, h_list=(-2, -8), n_per=300)
    assert rep.passed


def test_sp_structure_checker():
    rep = V.CHECKERS["sp-structure"](d=2, h_range=(-2, 0), n_list=(100, 2000))
    assert rep.passed
    assert V.CHECKERS["sp-structure"](d=3, h_range=(1,), n_list=(300,)).passed


def test_abelian_checker():
    rep = V.CHECKERS["abelian"](models=("RR", "DR", "SP"), n=60, trials=3, seed=11)
    assert rep.passed and rep.seed == 11


def test_fixed_point_checker():
    assert V.CHECKERS["fixed-point"](h_list=(-5, 2), n_list=(1000,)).passed


def test_kcolor_checker_small():
    rep = V.CHECKERS["kcolor"](h_list=(-2,), n_list=(2000,))
    eq = _case(rep, h=-2, n=2000, equal=True)
    assert eq.passed
    loops = _case(rep, h=-2, n=2000, loops=True)
    assert loops.label == V.REPORTED and loops.detail["loop_untopplings"] > 0


def test_kcolor_two_site_claim_fails_at_finite_size(tmp_path):
    rep = V.CHECKERS["kcolor"](h_list=(-2,), n_list=(6000,), dump_dir=str(tmp_path))
    assert _case(rep, h=-2, n=6000, equal=True).passed
    two = _case(rep, h=-2, n=6000, two_sites=True)
    assert not two.passed and 0 in two.detail["sizes"]
    assert not rep.passed
    assert rep.dumps and all(p.startswith(str(tmp_path)) for p in rep.dumps)
    gio.load(rep.dumps[0])


def test_render_checker(tmp_path):
    rep = V.CHECKERS["render"](n=3000, roundtrips=5, dump_dir=str(tmp_path))
    assert rep.passed and len(rep.cases) == 7


def test_performance_checker_small():
    rep = V.CHECKERS["performance"](n=20000)
    assert rep.passed
    assert _case(rep, limit="time").detail["seconds"] < 60


def test_failed_case_writes_a_dump(tmp_path):
    r = V._Report("demo", {}, str(tmp_path))
    cfg = seed(ModelSpec("SP", 2, 0), 4)
    assert r.add({"n": 4}, True, cfg=cfg)
    assert not r.add({"n": 4}, False, cfg=cfg)
    assert not r.add({"n": 5}, False, label=V.REPORTED, cfg=cfg)
    rep = r.done()
    assert len(rep.dumps) == 1 and not rep.passed
    assert "FAIL demo" in rep.format() and "dump:" in rep.format()
    assert rep.counts() == {V.EXACT: 2, V.REPORTED: 1}


def test_report_format_fractions():
    assert V._jsonable({"a": Fraction(1, 3), "b": (1, 2)}) == '{"a":"1/3","b":[1,2]}'


def test_acceptance_table_covers_every_checker():
    used = {name for c in V.ACCEPTANCE for name, _ in c.calls}
    assert used == set(V.CHECKERS)
    assert [c.number for c in V.ACCEPTANCE] == list(range(1, 12))
