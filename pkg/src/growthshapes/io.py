"""Configuration dumps, grayscale images and CSV metrics.

A dump is plain ASCII::

    LTCFG1
    model SP
    d 2
    h 2
    n 60000
    seed_mode absolute
    dirmap -1,0 1,0 0,1 0,-1
    radius 130
    d0 0
    H
    <one line per row of the last axis>
    T
    ...
    D
    ...

Rows run over the box in C order, so a d-dimensional block has side^(d-1)
lines of side integers. ``d0`` is the direction of sites beyond the box.
"""
from __future__ import annotations

import csv
import os
from fractions import Fraction

import numpy as np

from .analysis import particle_cluster
from .config import D_DTYPE, H_DTYPE, T_DTYPE, Configuration, Model, ModelSpec, SeedMode
from .lattice import DirectionMap

TAG = "LTCFG1"
_HEADER = ("model", "d", "h", "n", "seed_mode", "dirmap", "radius", "d0")
CSV_HEADER = (
    "model,d,h,n,seed_mode,total_topplings,sigma,beta,rho,r_linf_T,diamond_ok,"
    "r_linf_V,ball_dev_num,ball_dev_den,simply_connected,recurrent"
).split(",")


class DumpParseError(ValueError):
    """Malformed dump; ``line`` is 1-based."""

    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}, field {field}: {message}")
        self.line = line
        self.field = field


def dumps(cfg: Configuration) -> bytes:
    s = cfg.spec
    out = [
        TAG,
        f"model {s.kind.value}",
        f"d {s.d}",
        f"h {s.h}",
        f"n {cfg.n}",
        f"seed_mode {cfg.mode.value}",
        f"dirmap {s.dirmap.to_text()}",
        f"radius {cfg.radius}",
        f"d0 {cfg.d0_fill}",
    ]
    for name, a in (("H", cfg.H), ("T", cfg.T), ("D", cfg.D)):
        out.append(name)
        rows = a.reshape(-1, cfg.side)
        out.extend(" ".join(map(str, r)) for r in rows.tolist())
    return ("\n".join(out) + "\n").encode("ascii")


def dump(cfg: Configuration, path) -> None:
    with open(path, "wb") as f:
        f.write(dumps(cfg))


def loads(data: bytes | str) -> Configuration:
    try:
        text = data.decode("ascii") if isinstance(data, bytes) else data
    except UnicodeDecodeError as e:
        raise DumpParseError(data[: e.start].count(b"\n") + 1, "encoding", "not ASCII") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != TAG:
        raise DumpParseError(1, "tag", f"expected {TAG}")
    vals = {}
    for k, key in enumerate(_HEADER, start=2):
        if k > len(lines):
            raise DumpParseError(k, key, "missing header line")
        name, _, rest = lines[k - 1].partition(" ")
        if name != key:
            raise DumpParseError(k, key, f"expected {key!r}, found {name!r}")
        vals[key] = (k, rest.strip())

    def num(key):
        k, v = vals[key]
        try:
            return int(v)
        except ValueError:
            raise DumpParseError(k, key, f"not an integer: {v!r}") from None

    d, h, n, R, d0 = num("d"), num("h"), num("n"), num("radius"), num("d0")
    if R < 0:
        raise DumpParseError(vals["radius"][0], "radius", "negative radius")
    try:
        kind = Model.parse(vals["model"][1])
    except ValueError as e:
        raise DumpParseError(vals["model"][0], "model", str(e)) from None
    try:
        dirmap = DirectionMap.from_text(vals["dirmap"][1])
        if dirmap.d != d:
            raise ValueError("direction map dimension does not match d")
    except ValueError as e:
        raise DumpParseError(vals["dirmap"][0], "dirmap", str(e)) from None
    try:
        spec = ModelSpec(kind, d, h, dirmap)
    except ValueError as e:
        raise DumpParseError(vals["h"][0], "h", str(e)) from None
    try:
        mode = SeedMode.parse(vals["seed_mode"][1])
    except ValueError as e:
        raise DumpParseError(vals["seed_mode"][0], "seed_mode", str(e)) from None
    side = 2 * R + 1
    nrows = side ** (d - 1)
    pos = len(_HEADER) + 1
    blocks = {}
    for name, dtype in (("H", H_DTYPE), ("T", T_DTYPE), ("D", D_DTYPE)):
        if pos >= len(lines) or lines[pos].strip() != name:
            raise DumpParseError(pos + 1, name, f"expected block marker {name!r}")
        pos += 1
        if pos + nrows > len(lines):
            raise DumpParseError(len(lines), name, "block truncated")
        rows = []
        for j in range(nrows):
            toks = lines[pos + j].split()
            if len(toks) != side:
                raise DumpParseError(pos + j + 1, name, f"expected {side} values, found {len(toks)}")
            try:
                rows.append([int(t) for t in toks])
            except ValueError:
                raise DumpParseError(pos + j + 1, name, "non-integer value") from None
        pos += nrows
        blocks[name] = np.array(rows, dtype=dtype).reshape((side,) * d)
    if pos != len(lines):
        raise DumpParseError(pos + 1, "trailer", "unexpected content after D block")
    bad = (blocks["D"] < 0) | (blocks["D"] >= spec.ndir)
    if bad.any():
        row = int(np.argmax(bad.reshape(nrows, side).any(axis=1)))
        raise DumpParseError(pos - nrows + row + 1, "D", f"direction index outside 0..{spec.ndir - 1}")
    if not 0 <= d0 < spec.ndir:
        raise DumpParseError(vals["d0"][0], "d0", f"direction index {d0} outside 0..{spec.ndir - 1}")
    return Configuration(spec, blocks["H"], blocks["T"], blocks["D"], n=n, mode=mode, d0_fill=d0)


def load(path) -> Configuration:
    with open(path, "rb") as f:
        return loads(f.read())


# --- images ---------------------------------------------------------------------

def pgm_bytes(cfg: Configuration, field: str = "H") -> bytes:
    """Binary PGM of one field over the visited cluster's box plus one layer.

    Gray is round(255 (v - vmin) / (vmax - vmin)) with halves rounded up, 0
    for a constant field. The top row is the largest second coordinate.
    """
    if cfg.d != 2:
        raise ValueError(f"images need d = 2 (got d = {cfg.d})")
    if field not in ("H", "T", "D"):
        raise ValueError(f"unknown field {field!r}; choose H, T or D")
    v = particle_cluster(cfg)
    r = (v.linf_radius() if v else 0) + 1
    a = getattr(cfg.with_radius(r), field).astype(np.int64)
    R = a.shape[0] // 2
    a = a[R - r:R + r + 1, R - r:R + r + 1]
    lo, hi = int(a.min()), int(a.max())
    if hi == lo:
        gray = np.zeros(a.shape, dtype=np.uint8)
    else:
        span = hi - lo
        gray = ((510 * (a - lo) + span) // (2 * span)).astype(np.uint8)
    img = gray[:, ::-1].T  # rows: y from top, columns: x from left
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def render_pgm(cfg: Configuration, field: str, path) -> None:
    data = pgm_bytes(cfg, field)
    with open(path, "wb") as f:
        f.write(data)


def read_pgm(path) -> np.ndarray:
    """Pixels of a binary PGM written by :func:`render_pgm`."""
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not an 8-bit binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# --- CSV -------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return str(v)


def metrics_rows(reports):
    for r in reports:
        yield [
            _cell(x) for x in (
                r.model, r.d, r.h, r.n, r.seed_mode, r.total_topplings, r.sigma, r.beta,
                r.rho, r.r_linf_T, r.diamond_ok, r.r_linf_V, r.ball_dev.numerator,
                r.ball_dev.denominator, r.simply_connected, r.recurrent,
            )
        ]


def metrics_csv(reports, path) -> None:
    """One row per :class:`~growthshapes.analysis.ShapeReport`, in order.
    rho is written as an exact fraction ``p/q``."""
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(metrics_rows(reports))
    os.replace(tmp, path)
