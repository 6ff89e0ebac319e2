"""Command-line front end: ``keane-mixer {search,build,check,verify,inspect}``.

Exit codes: 0 certified, 10 sampled pass, 20 counterexample or failed
condition, 30 budget exhausted, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from .exact import BudgetExceeded, format_rational, parse_rational, rescale_to_integer
from .harness import (
    KeaneSystem, PreconditionError, insertion_facts, lemma2_check, lemma3_check,
    obstruction_check, theorem1_check,
)
from .keane import (
    SearchPolicy, StageParams, UNIFORM_SEED, build_iet, check_conditions, matrix_A,
    lengths_from_params, primality, return_table, search, units_ratio,
)

EXIT_CERTIFIED = 0
EXIT_SAMPLED = 10
EXIT_COUNTEREXAMPLE = 20
EXIT_BUDGET = 30
EXIT_USAGE = 64

log = logging.getLogger("keane_mixer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit(obj, out: str | None, name: str):
    text = _dump(obj)
    print(text)
    if out:
        path = Path(out)
        if path.suffix == ".json":
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text + "\n")
        else:
            path.mkdir(parents=True, exist_ok=True)
            (path / f"{name}.json").write_text(text + "\n")


def _parse_seed(text: str | None) -> tuple:
    if not text:
        return UNIFORM_SEED
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 4:
        raise UsageError("--seed needs four rationals, e.g. 1/4,1/4,1/4,1/4")
    try:
        return tuple(parse_rational(p) if "/" in p else Fraction(p) for p in parts)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad --seed: {exc}") from None


def _load_params(args, need: int) -> StageParams:
    """Params from --params, or the searched stages when none are given."""
    seed = _parse_seed(getattr(args, "seed", None))
    if getattr(args, "params", None):
        try:
            data = json.loads(Path(args.params).read_text())
            p = StageParams.from_json(data)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read params {args.params}: {exc}") from None
        if getattr(args, "seed", None):
            p = StageParams(p.stages, seed)
        return p
    log.info("no --params given; searching %d stages", need)
    return search(max(need, 1), seed=seed)


def _config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ----------------------------------------------------------------------------
# commands


def cmd_search(args) -> int:
    if args.stages < 1:
        raise UsageError("--stages must be at least 1")
    cap = args.budget_steps if args.budget_steps is not None else 1_000_000
    policy = SearchPolicy(n_cap=cap, m_cap=cap)
    seed = _parse_seed(args.seed)
    try:
        p = search(args.stages, policy, seed=seed,
                   progress=lambda ch: log.info("stage: m=%d n=%d prime=%d", ch.m, ch.n, ch.prime))
    except BudgetExceeded as exc:
        partial = getattr(exc, "partial", None)
        out = {"error": str(exc), "partial": partial.to_json() if partial is not None else None, "config": _config(args)}
        _emit(out, args.out, "search")
        return EXIT_BUDGET
    tab = return_table(p)
    primes = [tab.b[k][1] for k in range(1, tab.depth + 1)]
    ratios = [format_rational(units_ratio(primes[:k])) for k in range(1, len(primes) + 1)]
    report = check_conditions(p)
    out = {
        "params": p.to_json(),
        "table": tab.to_json(),
        "primality": [primality(x) for x in primes],
        "units_ratio": ratios,
        "conditions_passed": report.passed,
        "config": _config(args),
    }
    if args.out:
        target = Path(args.out)
        if target.suffix != ".json":
            target.mkdir(parents=True, exist_ok=True)
            target = target / "params.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(_dump(p.to_json()) + "\n")
    print(_dump(out))
    return EXIT_CERTIFIED if report.passed else EXIT_COUNTEREXAMPLE


def cmd_build(args) -> int:
    depth = args.depth if args.depth is not None else 4
    p = _load_params(args, depth)
    if depth > len(p):
        raise UsageError(f"--depth {depth} exceeds the {len(p)} available stages")
    T = build_iet(p, depth)
    TI = rescale_to_integer(T)
    out = {
        "params": p.truncated(depth).to_json(),
        "depth": depth,
        "iet": T.to_json(),
        "scale": str(TI.scale),
        "integer_lengths": [str(x) for x in TI.lengths],
        "scale_bits": TI.scale.bit_length(),
        "fits_int128": TI.fits_int128,
    }
    _emit(out, args.out, "iet")
    return EXIT_CERTIFIED


def cmd_check(args) -> int:
    p = _load_params(args, args.depth or 2)
    depth = args.depth if args.depth is not None else len(p)
    if depth > len(p):
        raise UsageError(f"--depth {depth} exceeds the {len(p)} available stages")
    rep = check_conditions(p, depth)
    out = {"params": p.to_json(), "depth": depth, "report": rep.to_json(),
           "table": return_table(p, depth).to_json()}
    _emit(out, args.out, "conditions")
    return EXIT_CERTIFIED if rep.passed else EXIT_COUNTEREXAMPLE


def _write_csv(args, name: str, segments):
    if not args.out or Path(args.out).suffix == ".json":
        return
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    for i, seg in enumerate(segments):
        (d / f"{name}_segment{i}.csv").write_text(seg.to_csv())


def cmd_verify(args) -> int:
    kind = args.kind
    k = args.k
    default_depth = {"lemma2": k + 3, "lemma3": k + 4, "theorem1": k + 4, "obstruction": 4}[kind]
    depth = args.depth if args.depth is not None else max(default_depth, 4)
    p = _load_params(args, depth)
    if depth > len(p):
        raise UsageError(f"--depth {depth} exceeds the {len(p)} available stages")
    rep = check_conditions(p, depth)
    if not rep.passed:
        _emit({"error": "parameters fail conditions 1-5", "report": rep.to_json()}, args.out, kind)
        return EXIT_COUNTEREXAMPLE
    progress = lambda n, c: log.debug("n=%d pieces=%d", n, c)
    system = KeaneSystem(p, depth)
    head = {"check": kind, "params": p.truncated(depth).to_json(), "depth": depth, "config": _config(args)}
    if kind == "lemma2":
        res = lemma2_check(system, k, args.level, args.budget_steps, args.budget_pieces,
                           args.spot_checks, args.rng_seed, progress)
        out = {**head, **res.to_json()}
        _emit(out, args.out, kind)
        _write_csv(args, kind, res.segments)
        seg = res.segments[0]
        if seg.misses:
            return EXIT_COUNTEREXAMPLE
        return EXIT_CERTIFIED if seg.complete else EXIT_BUDGET
    if kind == "lemma3":
        stride = args.stride if args.stride is not None else 10_000
        res = lemma3_check(system, k, args.level, args.span, stride or None, args.budget_steps,
                           args.budget_pieces, args.threads, args.spot_checks, args.rng_seed, progress)
        out = {**head, **res.to_json()}
        _emit(out, args.out, kind)
        _write_csv(args, kind, res.segments)
        if any(s.misses for s in res.segments) or not res.extra.get("passed", True):
            return EXIT_COUNTEREXAMPLE
        if not all(s.complete for s in res.segments):
            return EXIT_BUDGET
        if res.certified:
            return EXIT_CERTIFIED
        return EXIT_SAMPLED if res.passed else EXIT_BUDGET
    if kind == "theorem1":
        res = theorem1_check(system, k, budget_steps=args.budget_steps, max_pieces=args.budget_pieces,
                             spot_checks=args.spot_checks, seed=args.rng_seed, progress=progress)
        out = {**head, **res.to_json()}
        _emit(out, args.out, kind)
        _write_csv(args, kind, res.segments)
        seg = res.segments[0]
        if seg.misses:
            return EXIT_COUNTEREXAMPLE
        d0 = system.table.d[k]
        reached = seg.reached if seg.reached is not None else seg.window[1]
        return EXIT_CERTIFIED if reached >= d0 else EXIT_BUDGET
    # obstruction
    vk = args.v_level
    if vk > depth - 1:
        raise UsageError(f"--v-level {vk} is beyond the faithful levels of depth {depth}")
    J = system.level(vk, 2)
    Jp = system.level(vk, 3)
    thresholds = [int(x) for x in args.thresholds.split(",")] if args.thresholds else []
    V = system.towers.base(vk)
    res = obstruction_check(system.TI, args.l, thresholds, J, Jp, V=V, chain=system.chain,
                            spot_checks=args.spot_checks, seed=args.rng_seed)
    res.scale = system.scale
    out = {**head, **res.to_json()}
    _emit(out, args.out, kind)
    return EXIT_CERTIFIED if res.verdict else EXIT_COUNTEREXAMPLE


def cmd_inspect(args) -> int:
    what = args.what
    if what == "matrix":
        if args.m is not None or args.n is not None:
            if args.m is None or args.n is None:
                raise UsageError("inspect matrix needs both --m and --n")
            A = matrix_A(args.m, args.n)
            print("\n".join(" ".join(f"{x:>4}" for x in row) for row in A))
            print(_dump({"m": args.m, "n": args.n, "matrix": [list(r) for r in A]}))
            return EXIT_CERTIFIED
        depth = args.depth if args.depth is not None else 2
        p = _load_params(args, depth)
        mats = [[list(r) for r in matrix_A(m, n)] for m, n in p.stages[:depth]]
        print(_dump({"params": p.to_json(), "matrices": mats}))
        return EXIT_CERTIFIED
    depth = args.depth if args.depth is not None else 2
    p = _load_params(args, depth)
    if depth > len(p):
        raise UsageError(f"--depth {depth} exceeds the {len(p)} available stages")
    if what == "lengths":
        ls = lengths_from_params(p, depth)
        print("[" + ", ".join(format_rational(x) for x in ls) + "]")
        out = {"params": p.truncated(depth).to_json(), "depth": depth,
               "lengths": [format_rational(x) for x in ls]}
    elif what == "table":
        tab = return_table(p, depth)
        for k, row in enumerate(tab.b):
            print(f"b[{k}] = " + ", ".join(str(x) for x in row))
        for k, (c, d) in enumerate(zip(tab.c, tab.d)):
            print(f"c_{k} = {c}, d_{k} = {d}")
        out = {"params": p.truncated(depth).to_json(), "depth": depth, "table": tab.to_json()}
    else:  # towers
        if depth < 2:
            raise UsageError("inspect towers needs --depth >= 2")
        system = KeaneSystem(p, depth)
        levels = []
        for k, ind in enumerate(system.chain, start=1):
            levels.append({
                "level": k,
                "induced": ind.to_json(fmt=lambda x: format_rational(Fraction(x, system.scale))),
                "tower_heights": [str(h) for h in ind.return_time_vector()],
            })
            print(f"level {k}: heights " + ", ".join(str(h) for h in ind.return_time_vector())
                  + f"; permutation {ind.permutation}")
        out = {"params": p.truncated(depth).to_json(), "depth": depth, "levels": levels,
               "insertion": insertion_facts(system) if len(system.chain) > 1 else []}
    if args.out:
        _emit(out, args.out, f"inspect_{what}")
    return EXIT_CERTIFIED


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="keane-mixer", description="Keane's mixing 4-IET: search, build, verify.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, params=True):
        if params:
            sp.add_argument("--params", help="StageParams JSON file (default: searched stages)")
        sp.add_argument("--seed", help="seed length vector, four rationals (default uniform)")
        sp.add_argument("--out", help="output directory or .json file")

    sp = sub.add_parser("search", help="search stage parameters satisfying conditions 1-5")
    sp.add_argument("--stages", type=int, required=True)
    sp.add_argument("--budget-steps", type=int, help="cap for each scan (default 10^6)")
    common(sp, params=False)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("build", help="emit the truncated IET")
    sp.add_argument("--depth", type=int)
    common(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("check", help="evaluate conditions 1-5")
    sp.add_argument("--depth", type=int)
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("verify", help="run a mixing or obstruction check")
    sp.add_argument("kind", choices=["lemma2", "lemma3", "theorem1", "obstruction"])
    sp.add_argument("--k", type=int, default=0)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--level", type=int, default=0, help="which level of the source tower to start from")
    sp.add_argument("--budget-steps", type=int)
    sp.add_argument("--budget-pieces", type=int)
    sp.add_argument("--stride", type=int, help="lemma3 sampling stride (0 disables sampling)")
    sp.add_argument("--span", type=int, default=10_000, help="lemma3 exhaustive span past d_k")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--spot-checks", type=int, default=100)
    sp.add_argument("--rng-seed", type=int, default=0)
    sp.add_argument("--l", type=int, default=1, help="obstruction: J, J' bounded by discontinuities of T^l")
    sp.add_argument("--thresholds", help="obstruction: comma-separated n_1,...")
    sp.add_argument("--v-level", type=int, default=2, help="obstruction: V = I^(v)")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("inspect", help="print lengths, towers, matrices or the return table")
    sp.add_argument("what", choices=["lengths", "towers", "matrix", "table"])
    sp.add_argument("--depth", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--n", type=int)
    common(sp)
    sp.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("KEANE_MIXER_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, PreconditionError) as exc:
        print(f"keane-mixer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"keane-mixer: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
