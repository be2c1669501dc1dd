"""Command line entry point: ``gtalab {cost,roofline,check,bench,presets}``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .bench import BENCH_HEADER, run_bench
from .config import Mechanism
from .cost import Phase, cache_formula, cost_ratio, phase_flops
from .errors import ConfigError
from .oracles import GRIDS, all_passed, run_suite
from .presets import PRESET_FIELDS, ModelPreset, get_preset, load_presets
from .roofline import SWEEP_HEADER, load_profiles, parse_profiles, rows_to_csv, sweep

COST_HEADER = ("preset", "mechanism", "phase", "N", "linear", "attention", "cache_floats")
TABLE_HEADER = ("preset", "cache_floats", "breakdown")
RATIO_HEADER = ("kind", "numerator", "denominator", "ratio", "fraction")


class UsageError(Exception):
    pass


def _split(values: Optional[Sequence[str]]) -> list[str]:
    out = []
    for v in values or []:
        out.extend(p.strip() for p in v.split(",") if p.strip())
    return out


def _ints(values, name: str, minimum: int = 1) -> list[int]:
    try:
        out = [int(v) for v in _split(values)]
    except ValueError:
        raise UsageError(f"--{name} takes integers") from None
    if any(v < minimum for v in out):
        raise UsageError(f"--{name} values must be >= {minimum}")
    return out


def _presets(args) -> list[ModelPreset]:
    table = load_presets(args.presets_file)
    names = _split(args.preset)
    if not names:
        raise UsageError("at least one --preset is required")
    return [get_preset(n, table) for n in names]


def _emit(rows: list[dict], header: Sequence[str], fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps([{h: r[h] for h in header} for r in rows], indent=None) + "\n")
    else:
        out.write(rows_to_csv(rows, header))


def cache_breakdown(p: ModelPreset) -> str:
    """Cache/layer decomposition in the style of the model tables, e.g. ``3x2x64`` or ``64+128``."""
    c = p.config
    m = c.mechanism
    if m is Mechanism.MHA:
        return f"{c.n_heads}x2x{c.head_dim}"
    if m is Mechanism.GQA:
        return f"{c.n_k}x2x{c.head_dim}"
    if m is Mechanism.MLA:
        return f"{c.mla_d_c}+{c.mla_d_rope}"
    if m is Mechanism.GVA:
        return f"{c.hidden_dim}+{c.n_k * c.head_dim}"
    if m is Mechanism.GHA:
        return f"{c.n_k * c.head_dim}+{c.n_c * c.head_dim}"
    return f"{c.n_k * c.head_dim}+{c.n_c * c.latent_dim}"


def cmd_cost(args, out) -> int:
    presets = _presets(args)
    fmt = args.format
    if args.ratio:
        if len(presets) != 2:
            raise UsageError("--ratio needs exactly two presets: numerator,denominator")
        n = (_ints(args.N, "N") or [1])[0]
        r = cost_ratio(presets[0], presets[1], args.ratio, n)
        rows = [dict(kind=args.ratio, numerator=presets[0].name, denominator=presets[1].name,
                     ratio=float(r), fraction=f"{r.numerator}/{r.denominator}")]
        _emit(rows, RATIO_HEADER, fmt, out)
        return 0
    if args.table_1:
        rows = [dict(preset=p.name, cache_floats=cache_formula(p.config, 1), breakdown=cache_breakdown(p))
                for p in presets]
        _emit(rows, TABLE_HEADER, fmt, out)
        return 0
    n_values = _ints(args.N, "N") or [1]
    phases = [Phase.PREFILL, Phase.DECODE] if args.phase == "both" else [Phase(args.phase)]
    rows = []
    for p in presets:
        for phase in phases:
            for n in n_values:
                c = phase_flops(p.config, n, phase)
                rows.append(dict(preset=p.name, mechanism=p.config.mechanism.value, phase=phase.value, N=n,
                                 linear=c.linear_flops, attention=c.attention_flops, cache_floats=c.cache_floats))
    _emit(rows, COST_HEADER, fmt, out)
    return 0


def cmd_roofline(args, out) -> int:
    presets = _presets(args)
    if args.hardware:
        try:
            with open(args.hardware) as fh:
                profiles = parse_profiles(fh.read())
        except json.JSONDecodeError as exc:
            print(f"error: {args.hardware}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                  file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"error: cannot read {args.hardware}: {exc}", file=sys.stderr)
            return 2
    else:
        profiles = load_profiles()
    if args.profile:
        match = [p for p in profiles if p.name == args.profile]
        if not match:
            raise UsageError(f"no profile {args.profile!r}; have {', '.join(p.name for p in profiles)}")
        hw = match[0]
    else:
        hw = profiles[0]
    n_values = _ints(args.N, "N") or [128, 512, 1024, 2048]
    batches = _ints(args.batch, "batch") or [1]
    rows = sweep(presets, hw, n_values, batches, Phase(args.phase), offload=args.offload)
    _emit(rows, SWEEP_HEADER, args.format, out)
    return 0


def cmd_check(args, out) -> int:
    grid = GRIDS[args.grid]
    seeds = _ints(args.seed, "seed", minimum=0) or list(grid["seeds"])
    reports = run_suite(seeds=seeds, n_values=grid["n_values"], gradients=not args.no_gradients)
    lines = "".join(r.to_json() + "\n" for r in reports)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(lines)
    else:
        out.write(lines)
    ok = all_passed(reports)
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} cases passed", file=sys.stderr)
    return 0 if ok else 1


def cmd_bench(args, out) -> int:
    mechanisms = _split(args.mechanism) or [m.value for m in Mechanism]
    try:
        mechanisms = [Mechanism(m) for m in mechanisms]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n_values = _ints(args.N, "N") or [64, 256]
    rows = run_bench(mechanisms, n_values, repeats=args.repeats, warmup=args.warmup, seed=args.seed)
    _emit(rows, BENCH_HEADER, args.format, out)
    return 0


def cmd_presets(args, out) -> int:
    table = load_presets(args.presets_file)
    _emit([p.to_record() for p in table.values()], PRESET_FIELDS, args.format, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtalab", description="Grouped-head latent attention lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, presets=True):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--presets-file", help="preset JSON file (default: bundled presets)")
        if presets:
            p.add_argument("--preset", action="append", help="preset name(s), comma separated or repeated")

    p = sub.add_parser("cost", help="analytic FLOP and KV-cache table")
    common(p)
    p.add_argument("--N", action="append", help="sequence length(s)")
    p.add_argument("--phase", choices=("prefill", "decode", "both"), default="prefill")
    p.add_argument("--table-1", action="store_true", help="cache/layer column with its decomposition")
    p.add_argument("--ratio", choices=("attention", "cache", "linear"),
                   help="exact per-layer ratio of the first preset to the second")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("roofline", help="roofline latency sweep")
    common(p)
    p.add_argument("--N", action="append")
    p.add_argument("--batch", action="append")
    p.add_argument("--phase", choices=("prefill", "decode"), default="decode")
    p.add_argument("--hardware", help="hardware profile JSON (default: bundled profiles)")
    p.add_argument("--profile", help="profile name inside the hardware file (default: first)")
    p.add_argument("--offload", action="store_true", help="route KV-cache traffic over the offload link")
    p.set_defaults(func=cmd_roofline)

    p = sub.add_parser("check", help="run the oracle verification suite")
    p.add_argument("--grid", choices=tuple(GRIDS), default="default")
    p.add_argument("--seed", action="append", help="seed(s); default depends on grid")
    p.add_argument("--report", help="write JSON lines here instead of stdout")
    p.add_argument("--no-gradients", action="store_true", help="skip finite-difference gradient cases")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="wall-clock prefill/decode timings")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--mechanism", action="append")
    p.add_argument("--N", action="append")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("presets", help="list model presets")
    common(p, presets=False)
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
