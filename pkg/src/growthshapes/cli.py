"""Command-line entry point.

Subcommands::

    growthshapes run --model sp --dim 2 --h 2 --n 60000 --render-h out.pgm
    growthshapes check cube --dim 2 --n-max 60000
    growthshapes check            # the full acceptance suite
    growthshapes render run.ltcfg H out.pgm
    growthshapes bench

Exit codes: 0 pass, 1 a check failed, 2 usage or invalid parameters,
3 input/output failure.
"""
from __future__ import annotations

import argparse
import inspect
import re
import sys
import time

from . import analysis
from . import io as gio
from . import verify
from .config import InvalidSpec, ModelSpec, SeedMode, seed
from .stabilize import SCHEDULERS, stabilize

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple:
    """``-3,0,2`` or a range ``-6:2`` (inclusive)."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(t) for t in text.split(",") if t)


def _d0(text: str):
    """``const:<i>`` or the path of a dump whose D field is used."""
    if text.startswith("const:"):
        return int(text[len("const:"):])
    return text


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(prog="growthshapes", description="Growth-cluster simulator and checkers.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    run = sub.add_parser("run", help="seed, stabilise, analyse and write outputs")
    run.add_argument("--config", help="key=value file; flags take precedence")
    run.add_argument("--model", default="SP", help="RR, DR or SP")
    run.add_argument("--dim", type=int, default=2)
    run.add_argument("--h", type=int, default=None, help="background height (default: model maximum)")
    run.add_argument("--n", type=int, default=1000)
    run.add_argument("--seed-mode", default="absolute", choices=[m.value for m in SeedMode])
    run.add_argument("--scheduler", default="queue", choices=SCHEDULERS)
    run.add_argument("--warm-start", default="auto", choices=("auto", "on", "off"))
    run.add_argument("--d0", type=_d0, default=0, help="const:<i> or a dump path")
    run.add_argument("--seed", type=int, default=0, help="RNG seed of the random scheduler")
    run.add_argument("--ball", type=int, default=None, help="reference ball size (default: n/|h| or |V|)")
    run.add_argument("--render-h", metavar="PATH")
    run.add_argument("--render-t", metavar="PATH")
    run.add_argument("--render-d", metavar="PATH")
    run.add_argument("--metrics", metavar="PATH", help="CSV metrics row")
    run.add_argument("--dump", metavar="PATH", help="configuration dump")
    subs["run"] = run

    check = sub.add_parser("check", help="run checkers; no name runs the acceptance suite")
    check.add_argument("names", nargs="*", metavar="NAME", help=f"'all' or any of: {', '.join(verify.CHECKERS)}")
    check.add_argument("--config", help="key=value file; flags take precedence")
    check.add_argument("--list", action="store_true", help="list checker ids and criteria")
    check.add_argument("--dim", type=int)
    check.add_argument("--n-max", type=int)
    check.add_argument("--r-max", type=int)
    check.add_argument("--h", type=_int_list, help="list '-3,0,2' or range '-6:2'")
    check.add_argument("--n", type=_int_list, help="list of particle counts")
    check.add_argument("--model")
    check.add_argument("--n-per", type=int)
    check.add_argument("--trials", type=int)
    check.add_argument("--samples", type=int)
    check.add_argument("--exhaustive-max", type=int)
    check.add_argument("--roundtrips", type=int)
    check.add_argument("--seed", type=int)
    check.add_argument("--strict", type=_bool)
    check.add_argument("--max-seconds", type=float)
    check.add_argument("--dump-dir")
    check.add_argument("-v", "--verbose", action="store_true")
    subs["check"] = check

    render = sub.add_parser("render", help="render one field of a dump as PGM")
    render.add_argument("dump")
    render.add_argument("field", choices=("H", "T", "D"))
    render.add_argument("out")
    subs["render"] = render

    bench = sub.add_parser("bench", help="numba against numpy, warm start against plain")
    bench.add_argument("--no-warm", action="store_true")
    subs["bench"] = bench
    return parser, subs


def read_config(path) -> dict:
    out = {}
    with open(path) as f:
        for k, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{k}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


_NUMBERS = re.compile(r"^-?\d+([,:]-?\d+)*$")


def _join_numeric(argv) -> list:
    """``--h -2:-1`` to ``--h=-2:-1``: argparse takes a leading minus for an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--h", "--n"):
            nxt = next(it, None)
            if nxt is not None and _NUMBERS.match(nxt):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def parse(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    argv = _join_numeric(argv)
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if path:
        values = read_config(path)
        sp = subs[args.command]
        known = {a.dest: a for a in sp._actions}
        for key, value in values.items():
            action = known.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"{path}: unknown key {key!r}")
            if action.nargs == 0:
                value = _bool(value)
            elif action.type is not None:
                value = action.type(value)
            sp.set_defaults(**{key: value})
        args = parser.parse_args(argv)
    return args


# --- run ----------------------------------------------------------------------------

def _seed_from_args(args):
    probe = ModelSpec(args.model, args.dim, -1 if args.model.upper() != "SP" else 0)
    h = args.h if args.h is not None else probe.h_max - 1
    spec = ModelSpec(args.model, args.dim, h)
    if isinstance(args.d0, int):
        return seed(spec, args.n, args.seed_mode, d0=args.d0)
    src = gio.load(args.d0)
    if src.d != spec.d or src.spec.ndir != spec.ndir:
        raise InvalidSpec("the --d0 dump has a different dimension")
    cfg = seed(spec, args.n, args.seed_mode, d0=src.d0_fill)
    R = max(cfg.radius, src.radius + 1)
    cfg.grow(R)
    r0 = src.radius
    cfg.D[(slice(R - r0, R + r0 + 1),) * spec.d] = src.D
    return cfg


def cmd_run(args) -> int:
    cfg = _seed_from_args(args)
    t0 = time.perf_counter()
    kw = {}
    if args.scheduler == "queue":
        kw["warm_start"] = {"auto": "auto", "on": True, "off": False}[args.warm_start]
    out, stats = stabilize(cfg, args.scheduler, seed=args.seed, **kw)
    wall = time.perf_counter() - t0
    renders = ((args.render_h, "H"), (args.render_t, "T"), (args.render_d, "D"))
    if any(p for p, _ in renders) and out.d != 2:
        raise InvalidSpec(f"images need d = 2 (got d = {out.d})")
    for path, field in renders:
        if path:
            gio.render_pgm(out, field, path)
    if args.dump:
        gio.dump(out, args.dump)
    report = analysis.shape_report(out, stats.total_topplings, m=args.ball)
    if args.metrics:
        gio.metrics_csv([report], args.metrics)
    s = out.spec
    print(
        f"{s.kind.value} d={s.d} h={s.h} n={out.n} {out.mode.value}: "
        f"topplings={report.total_topplings} r_linf_T={report.r_linf_T} "
        f"r_linf_V={report.r_linf_V} ball_dev={report.ball_dev} wall={wall:.2f}s"
    )
    return EXIT_OK


# --- check ----------------------------------------------------------------------------

# flag -> candidate keyword names, first match wins
_CHECK_FLAGS = {
    "dim": ("d",),
    "n_max": ("n_max",),
    "r_max": ("r_max",),
    "h": ("h_list", "h_range", "h"),
    "n": ("n_list", "n"),
    "model": ("model", "models"),
    "n_per": ("n_per",),
    "trials": ("trials",),
    "samples": ("samples",),
    "exhaustive_max": ("exhaustive_max",),
    "roundtrips": ("roundtrips",),
    "seed": ("seed", "rng_seed"),
    "strict": ("strict",),
    "max_seconds": ("max_seconds",),
}


def _checker_kwargs(name, args) -> dict:
    params = inspect.signature(verify.CHECKERS[name]).parameters
    kw = {}
    for flag, targets in _CHECK_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        target = next((t for t in targets if t in params), None)
        if target is None:
            raise UsageError(f"checker {name!r} does not take --{flag.replace('_', '-')}")
        if target in ("h", "n"):
            if len(value) != 1:
                raise UsageError(f"checker {name!r} takes a single --{flag}")
            value = value[0]
        elif target == "models":
            value = tuple(value.upper().split(","))
        elif target == "model":
            value = value.upper()
        kw[target] = value
    if args.dump_dir:
        kw["dump_dir"] = args.dump_dir
    return kw


def _list_checkers() -> None:
    for name, fn in verify.CHECKERS.items():
        doc = (fn.__doc__ or "").strip().split("\n")[0]
        print(f"{name:<14} {doc}")
    print()
    for c in verify.ACCEPTANCE:
        calls = ", ".join(name for name, _ in c.calls)
        print(f"criterion {c.number:>2}: {c.title} ({calls}; budget {c.seconds} s)")


def cmd_check(args) -> int:
    if args.list:
        _list_checkers()
        return EXIT_OK
    names = args.names
    if not names or names == ["all"]:
        overrides = [f for f in _CHECK_FLAGS if getattr(args, f) is not None]
        if overrides:
            raise UsageError("grid flags need an explicit checker name")
        ok = True
        for crit in verify.ACCEPTANCE:
            passed, reports, seconds = verify.run_criterion(crit, dump_dir=args.dump_dir)
            in_budget = seconds <= crit.seconds
            status = "PASS" if passed and in_budget else "FAIL"
            print(f"{status} criterion {crit.number}: {crit.title} ({seconds:.1f} s of {crit.seconds} s)")
            for r in reports:
                if args.verbose or not r.passed:
                    print(r.format(args.verbose))
            ok = ok and passed and in_budget
        return EXIT_OK if ok else EXIT_FAIL
    unknown = [n for n in names if n not in verify.CHECKERS]
    if unknown:
        raise UsageError(f"unknown checker {unknown[0]!r}; choose from {', '.join(verify.CHECKERS)}")
    ok = True
    for name in names:
        report = verify.CHECKERS[name](**_checker_kwargs(name, args))
        print(report.format(args.verbose))
        ok = ok and report.passed
    return EXIT_OK if ok else EXIT_FAIL


# --- render / bench -------------------------------------------------------------------

def cmd_render(args) -> int:
    cfg = gio.load(args.dump)
    if cfg.d != 2:
        raise InvalidSpec(f"images need d = 2 (got d = {cfg.d})")
    gio.render_pgm(cfg, args.field, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench

    return bench.main(warm=not args.no_warm)


COMMANDS = {"run": cmd_run, "check": cmd_check, "render": cmd_render, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except SystemExit as e:  # argparse usage errors and --help
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except gio.DumpParseError as e:
        print(f"error: unreadable dump: {e}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, InvalidSpec, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
