import subprocess
import sys

import pytest

from growthshapes import io as gio
from growthshapes.cli import _int_list, main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_summary_and_outputs(tmp_path, capsys):
    img, csv, dump = tmp_path / "h.pgm", tmp_path / "m.csv", tmp_path / "r.ltcfg"
    code, out, _ = _run(
        capsys, "run", "--model", "sp", "--dim", "2", "--h", "2", "--n", "3000",
        "--render-h", str(img), "--metrics", str(csv), "--dump", str(dump),
    )
    assert code == 0
    assert out.startswith("SP d=2 h=2 n=3000 absolute: topplings=")
    assert img.read_bytes().startswith(b"P5\n")
    assert len(csv.read_text().splitlines()) == 2
    cfg = gio.load(dump)
    assert cfg.spec.h == 2 and cfg.n == 3000


def test_run_is_reproducible(tmp_path, capsys):
    paths = []
    for k in range(2):
        p = tmp_path / f"{k}.pgm"
        d = tmp_path / f"{k}.ltcfg"
        assert main(["run", "--model", "dr", "--h", "-1", "--n", "900", "--render-d", str(p), "--dump", str(d)]) == 0
        paths.append((p.read_bytes(), d.read_bytes()))
    capsys.readouterr()
    assert paths[0] == paths[1]


def test_run_random_scheduler_seeded(tmp_path, capsys):
    outs = []
    for _ in range(2):
        d = tmp_path / "x.ltcfg"
        assert main(["run", "--model", "rr", "--h", "-2", "--n", "200", "--scheduler", "single-random",
                     "--seed", "5", "--dump", str(d)]) == 0
        outs.append(d.read_bytes())
    assert outs[0] == outs[1]


def test_run_rr_metrics(tmp_path, capsys):
    csv = tmp_path / "m.csv"
    code, _, _ = _run(capsys, "run", "--model", "rr", "--dim", "2", "--h", "-1", "--n", "4000", "--metrics", str(csv))
    assert code == 0
    row = csv.read_text().splitlines()[1].split(",")
    assert int(row[13]) >= 1  # the ball deviation denominator


def test_run_invalid_background(capsys):
    code, _, err = _run(capsys, "run", "--model", "rr", "--dim", "2", "--h", "0", "--n", "10")
    assert code == 2 and "h" in err


def test_run_default_background(capsys):
    code, out, _ = _run(capsys, "run", "--model", "sp", "--dim", "1", "--n", "50")
    assert code == 0 and " h=0 " in out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--model", "xx"],
        ["run", "--dim", "0"],
        ["run", "--n", "ten"],
        ["frobnicate"],
        [],
        ["run", "--dim", "3", "--n", "20", "--render-h", "x.pgm"],
        ["run", "--warm-start", "on", "--model", "rr", "--h", "-1", "--n", "50"],
    ],
)
def test_usage_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_io_errors(tmp_path, capsys):
    assert main(["run", "--n", "10", "--dump", str(tmp_path / "missing" / "x.ltcfg")]) == 3
    bad = tmp_path / "bad.ltcfg"
    bad.write_text("LTCFG1\nmodel SP\n")
    code, _, err = _run(capsys, "render", str(bad), "H", str(tmp_path / "o.pgm"))
    assert code == 3 and "line 3" in err
    assert main(["render", str(tmp_path / "nope.ltcfg"), "H", str(tmp_path / "o.pgm")]) == 3


def test_render(tmp_path, capsys):
    dump = tmp_path / "r.ltcfg"
    assert main(["run", "--model", "dr", "--h", "0", "--n", "2000", "--dump", str(dump)]) == 0
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    assert main(["render", str(dump), "D", str(a)]) == 0
    assert main(["render", str(dump), "D", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    dump3 = tmp_path / "r3.ltcfg"
    assert main(["run", "--dim", "3", "--n", "30", "--dump", str(dump3)]) == 0
    code, _, err = _run(capsys, "render", str(dump3), "H", str(a))
    assert code == 2 and "d = 3" in err


def test_d0_options(tmp_path, capsys):
    d1, d2, d3 = (tmp_path / f"{k}.ltcfg" for k in range(3))
    assert main(["run", "--model", "rr", "--h", "-1", "--n", "300", "--d0", "const:2", "--dump", str(d1)]) == 0
    src = gio.load(d1)
    assert src.d0_fill == 2
    # a dump's D field seeds the next run
    assert main(["run", "--model", "rr", "--h", "-1", "--n", "300", "--d0", str(d1), "--dump", str(d2)]) == 0
    assert main(["run", "--model", "rr", "--h", "-1", "--n", "300", "--dump", str(d3)]) == 0
    a, b = gio.load(d2), gio.load(d3)
    assert (a.T > 0).sum() > 0 and a.d0_fill == 2
    assert main(["run", "--model", "rr", "--h", "-1", "--dim", "1", "--n", "30", "--d0", str(d1)]) == 2
    assert main(["run", "--model", "rr", "--h", "-1", "--n", "30", "--d0", "const:9"]) == 2


def test_config_file_precedence(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# defaults\nmodel = dr\nh = -2\nn = 400\nwarm-start = off\n")
    code, out, _ = _run(capsys, "run", "--config", str(conf))
    assert code == 0 and out.startswith("DR d=2 h=-2 n=400 ")
    code, out, _ = _run(capsys, "run", "--config", str(conf), "--n", "500", "--model", "sp")
    assert code == 0 and out.startswith("SP d=2 h=-2 n=500 ")
    conf.write_text("colour = red\n")
    assert main(["run", "--config", str(conf)]) == 2
    conf.write_text("just words\n")
    assert main(["run", "--config", str(conf)]) == 2
    assert main(["run", "--config", str(tmp_path / "absent.conf")]) == 3


def test_check_named(capsys):
    code, out, _ = _run(capsys, "check", "cube", "--dim", "2", "--n-max", "3000", "--samples", "4",
                        "--exhaustive-max", "50")
    assert code == 0 and out.startswith("PASS cube")
    code, out, _ = _run(capsys, "check", "waves", "--dim", "3", "--r-max", "6")
    assert code == 0 and out.startswith("PASS waves")
    code, out, _ = _run(capsys, "check", "abelian", "--model", "rr,sp", "--n", "100", "--trials", "3")
    assert code == 0
    code, out, _ = _run(capsys, "check", "inclusions", "--dim", "1", "--h", "-2:-1", "--n", "50,100")
    assert code == 0 and "\"h\":[-2,-1]" in out


def test_check_failure_exit_code(capsys):
    # one avalanche at this size closes on its own start, so the two-site claim fails
    code, out, _ = _run(capsys, "check", "kcolor", "--h", "-2", "--n", "6000")
    assert code == 1 and out.startswith("FAIL kcolor")


def test_check_usage(capsys):
    assert main(["check", "nosuch"]) == 2
    assert main(["check", "waves", "--n-per", "3"]) == 2
    assert main(["check", "abelian", "--h", "-1,-2"]) == 2
    assert main(["check", "--dim", "2"]) == 2
    code, out, _ = _run(capsys, "check", "--list")
    assert code == 0 and "criterion 11" in out and "rr-sphere" in out


def test_int_list():
    assert _int_list("-3,0,2") == (-3, 0, 2)
    assert _int_list("-2:1") == (-2, -1, 0, 1)


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "growthshapes", "run", "--model", "sp", "--n", "20"],
        capture_output=True, text=True, cwd=tmp_path, timeout=300,
    )
    assert res.returncode == 0 and "topplings=" in res.stdout
    res = subprocess.run([sys.executable, "-m", "growthshapes", "check", "nosuch"],
                         capture_output=True, text=True, cwd=tmp_path, timeout=300)
    assert res.returncode == 2 and "unknown checker" in res.stderr
