"""Backend benchmark: the same stabilisations under the numba kernels and
the numpy fallback, plus the warm start against a plain queue run.

Every case runs once untimed first so compile time stays out of the
numbers. Results of the two backends are compared field by field.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

from . import _backend
from .config import ModelSpec, seed
from .stabilize import stabilize_queue

# (model, d, h, n, warm start); the numpy sizes stay small because the
# sequential kernels run interpreted there
BACKEND_CASES = (
    ("SP", 2, 2, 2_000, False),
    ("SP", 2, 0, 2_000, False),
    ("RR", 2, -1, 1_000, False),
    ("DR", 2, 0, 1_000, False),
    ("SP", 3, 4, 1_000, False),
)
WARM_CASES = (
    ("SP", 2, 2, 20_000),
    ("SP", 2, 0, 50_000),
    ("RR", 1, -1, 1_000),
)


@dataclass
class Timing:
    label: str
    seconds: float
    topplings: int
    same: bool | None = None


def _run(model, d, h, n, warm):
    cfg = seed(ModelSpec(model, d, h), n)
    t0 = time.perf_counter()
    out = stabilize_queue(cfg, inplace=True, warm_start=warm)
    return time.perf_counter() - t0, out.config


def backend_timings(cases=BACKEND_CASES, repeat: int = 1):
    """Per case: numba time, numpy time and whether the results agree."""
    rows = []
    for model, d, h, n, warm in cases:
        label = f"{model} d={d} h={h} n={n}"
        results = {}
        for name in ("numba", "numpy"):
            if name == "numba" and not _backend.HAVE_NUMBA:
                continue
            with _backend.use_backend(name):
                _run(model, d, h, min(n, 50), warm)
                best = None
                for _ in range(repeat):
                    sec, cfg = _run(model, d, h, n, warm)
                    best = sec if best is None else min(best, sec)
                results[name] = (best, cfg)
        same = None
        if len(results) == 2:
            same = results["numba"][1].fields_equal(results["numpy"][1], True)
        for name, (sec, cfg) in results.items():
            rows.append(Timing(f"{label} [{name}]", sec, int(cfg.T.sum()), same))
    return rows


def warm_timings(cases=WARM_CASES):
    """Warm start against a plain queue run on the numba backend."""
    rows = []
    for model, d, h, n in cases:
        label = f"{model} d={d} h={h} n={n}"
        _run(model, d, h, 5_000, True)
        ws, wc = _run(model, d, h, n, True)
        ps, pc = _run(model, d, h, n, False)
        same = wc.fields_equal(pc, True)
        rows.append(Timing(f"{label} [warm]", ws, int(wc.T.sum()), same))
        rows.append(Timing(f"{label} [plain]", ps, int(pc.T.sum()), same))
    return rows


def format_rows(rows) -> str:
    out = [f"{'case':<40} {'seconds':>9} {'topplings':>14}  agree"]
    for r in rows:
        agree = "-" if r.same is None else ("yes" if r.same else "NO")
        out.append(f"{r.label:<40} {r.seconds:>9.3f} {r.topplings:>14}  {agree}")
    return "\n".join(out)


def main(warm: bool = True) -> int:
    rows = backend_timings()
    print(format_rows(rows))
    ok = all(r.same is not False for r in rows)
    if warm:
        wrows = warm_timings()
        print()
        print(format_rows(wrows))
        ok = ok and all(r.same for r in wrows)
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
