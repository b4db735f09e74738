"""Command-line entry point: build / disc / sweep / tails / length-study /
oracle-check / plot.

Every subcommand is a thin adapter over the library modules; no numeric
logic lives here.  Exit codes: 0 success, 1 validation error (message names
the offending field), 2 internal assertion failure (full counterexample
printed).  A --config JSON file supplies defaults for any flag of its
subcommand (unknown keys rejected); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import harness as hz
from . import rng
from . import steinhaus as sh
from .counting import ExceptionalLineError
from .discrepancy import SupConfig, estimate_sup, format_report, save_report
from .geometry import ValidationError, load_body

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit(1)
        raise ValidationError("arguments", message)


_REQUIRED = {
    "build": ("body", "length", "out"),
    "disc": ("set",),
    "sweep": ("body", "l_min", "l_max", "out"),
    "tails": ("body", "n", "eps", "x0", "y0", "x1", "y1"),
    "length-study": ("body", "n", "eps"),
    "oracle-check": ("body", "n", "eps"),
    "plot": ("csv", "out"),
}


def _build_parser() -> tuple[_Parser, dict]:
    parser = _Parser(prog="buffon", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="command")
    by_name = {}

    def sub(name, help_text):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults (strict keys)")
        p.add_argument("--seed", type=int, default=0)
        by_name[name] = p
        return p

    p = sub("build", "build a set at an exact target length, save a manifest")
    p.add_argument("--body", help="body JSON file")
    p.add_argument("--length", type=float, help="target total length L")
    p.add_argument("--mode", choices=("shifted", "zero"), default="shifted")
    p.add_argument("--out", help="manifest output path")

    p = sub("disc", "estimate the discrepancy sup of a saved set")
    p.add_argument("--set", dest="set", help="set manifest path")
    p.add_argument("--theta-res", type=int, default=192)
    p.add_argument("--offset-res", type=int, default=192)
    p.add_argument("--refine", type=int, default=2)
    p.add_argument("--out", default=None, help="report JSON output path")

    p = sub("sweep", "scaling sweep over a geometric grid of target lengths")
    p.add_argument("--body", help="body JSON file")
    p.add_argument("--mode", choices=("shifted", "zero"), default="shifted")
    p.add_argument("--l-min", type=float)
    p.add_argument("--l-max", type=float)
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--theta-res", type=int, default=96)
    p.add_argument("--offset-res", type=int, default=96)
    p.add_argument("--refine", type=int, default=2)
    p.add_argument("--workers", type=int, default=1,
                   help="row parallelism (0 = one per CPU)")
    p.add_argument("--out", help="CSV output path")

    p = sub("tails", "empirical |Z| tail of a fixed segment vs the bound")
    p.add_argument("--body", help="body JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--y0", type=float)
    p.add_argument("--x1", type=float)
    p.add_argument("--y1", type=float)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--s-values", default="8,16,24,32",
                   help="comma-separated thresholds")
    p.add_argument("--out", default=None, help="also write the table here")

    p = sub("length-study", "Monte Carlo length concentration check")
    p.add_argument("--body", help="body JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--out", default=None, help="also write the summary here")

    p = sub("oracle-check", "cross-validate counting against the oracle")
    p.add_argument("--body", help="body JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--mode", choices=("shifted", "zero"), default="shifted")
    p.add_argument("--lines", type=int, default=10_000)

    p = sub("plot", "emit a gnuplot data+script pair from a sweep CSV")
    p.add_argument("--csv", help="sweep CSV path")
    p.add_argument("--y-field", default="sup_estimate")
    p.add_argument("--deflate", type=float, default=None,
                   help="divide y by (log L)^this before plotting")
    p.add_argument("--out", help="output prefix (.dat and .gp)")

    return parser, by_name


def _merge_config(parser, sub_parsers, argv):
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise ValidationError("command", "a subcommand is required")
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValidationError("config", "config file must hold a JSON object")
        sub = sub_parsers[ns.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        for key in cfg:
            if key not in known:
                raise ValidationError(
                    "config", f"unknown field {key!r} for {ns.command}; "
                    f"known: {sorted(known)}")
        sub.set_defaults(**cfg)
        ns = parser.parse_args(argv)  # explicit flags still win
    for field in _REQUIRED[ns.command]:
        if getattr(ns, field) is None:
            raise ValidationError(field, f"--{field.replace('_', '-')} is required")
    return ns


def _emit(text: str, out_path) -> None:
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)


def _cmd_build(ns) -> int:
    body = load_body(ns.body)
    sset, plan = sh.build_exact(body, ns.length, ns.mode, ns.seed)
    sh.save_manifest(sset, ns.out)
    actual = sh.total_length(sset)
    print(f"n={plan.n} eps={plan.eps!r} L_actual={actual!r} "
          f"padding={sset.padding_count} -> {ns.out}")
    return 0


def _cmd_disc(ns) -> int:
    sset = sh.load_manifest(ns.set)
    config = SupConfig(
        theta_resolution=ns.theta_res, offset_resolution=ns.offset_res,
        refine_rounds=ns.refine, seed=ns.seed)
    report = estimate_sup(sset, sh.total_length(sset), config)
    sys.stdout.write(format_report(report))
    if ns.out:
        save_report(report, ns.out)
    return 0


def _cmd_sweep(ns) -> int:
    body = load_body(ns.body)
    if ns.points < 2:
        raise ValidationError("points", "need at least 2 grid points")
    if not (0 < ns.l_min < ns.l_max):
        raise ValidationError("l_min", "need 0 < l-min < l-max")
    ratio = ns.l_max / ns.l_min
    l_values = [ns.l_min * ratio ** (i / (ns.points - 1)) for i in range(ns.points)]
    config = SupConfig(
        theta_resolution=ns.theta_res, offset_resolution=ns.offset_res,
        refine_rounds=ns.refine, seed=ns.seed)
    rows = hz.run_sweep(body, l_values, ns.mode, config, seed=ns.seed,
                        workers=ns.workers)
    hz.write_sweep_csv(rows, ns.out)
    for row in rows:
        status = row.error or (
            f"n={row.n} eps={row.eps:.3e} sup={row.sup_estimate!r} "
            f"({row.wall_time_seconds:.1f}s)")
        print(f"L={row.L_target!r}: {status}")
    print(f"wrote {len(rows)} rows -> {ns.out}")
    return 0


def _cmd_tails(ns) -> int:
    body = load_body(ns.body)
    try:
        s_values = [float(s) for s in ns.s_values.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError("s_values", f"bad threshold list: {exc}")
    study = hz.z_tail_study(
        body, ns.n, ns.eps, (ns.x0, ns.y0), (ns.x1, ns.y1), ns.trials,
        s_values, seed=ns.seed)
    lines = [
        f"s={row.s!r} empirical={row.empirical_tail!r} "
        f"bound={row.hoeffding_bound!r} band={row.sampling_band!r}"
        for row in study.rows
    ]
    lines.append(f"mean_z={study.mean_z!r} trials={study.trials} "
                 f"violations={study.violations}")
    _emit("\n".join(lines) + "\n", ns.out)
    return 0


def _cmd_length_study(ns) -> int:
    body = load_body(ns.body)
    res = hz.length_study(body, ns.n, ns.eps, ns.trials, seed=ns.seed)
    text = "".join(f"{key}={res[key]!r}\n" for key in sorted(res))
    _emit(text, ns.out)
    return 0


def _cmd_oracle_check(ns) -> int:
    body = load_body(ns.body)
    shifts = (sh.sample_shifts(ns.n, ns.seed) if ns.mode == "shifted"
              else np.zeros(ns.n))
    sset = sh.SteinhausSet(body=body, n=ns.n, eps=ns.eps, shifts=shifts,
                           seed=ns.seed)
    check = hz.run_oracle_check(sset, ns.lines, seed=rng.derive_seed(ns.seed, "lines"))
    print(f"{check.agreements}/{check.comparisons} agree")
    if not check.all_agree:
        for theta, offset, fast, reference in check.mismatches:
            print(f"mismatch: theta={theta!r} offset={offset!r} "
                  f"count_line={fast} oracle={reference}")
        raise AssertionError(
            f"oracle disagreement on {len(check.mismatches)} lines "
            f"({check.skipped} lines unresolvable after jitter)")
    return 0


def _cmd_plot(ns) -> int:
    rows = hz.read_sweep_csv(ns.csv)
    fit = hz.fit_slope(rows, y_field=ns.y_field, log_correction=ns.deflate)
    dat_path = f"{ns.out}.dat"
    gp_path = f"{ns.out}.gp"
    dat_lines = ["# L y_plotted y_raw"]
    for row in rows:
        if row.n < hz.MIN_ASYMPTOTIC_N:
            continue
        y = getattr(row, ns.y_field)
        plotted = y
        if ns.deflate is not None and row.L_target > 1.0:
            plotted = y / math.log(row.L_target) ** ns.deflate
        if not (math.isfinite(plotted) and plotted > 0):
            continue
        dat_lines.append(f"{row.L_target!r} {plotted!r} {y!r}")
    with open(dat_path, "w") as fh:
        fh.write("\n".join(dat_lines) + "\n")
    dat_name = dat_path.rsplit("/", 1)[-1]
    deflate_note = ("" if ns.deflate is None
                    else f" / (log L)^{ns.deflate!r}")
    script = "\n".join([
        "set logscale xy",
        'set xlabel "L"',
        f'set ylabel "{ns.y_field}{deflate_note}"',
        f'set title "fitted exponent {fit.exponent!r} '
        f'(r^2 {fit.r_squared!r}, {fit.points_used} points)"',
        f"a = {fit.exponent!r}",
        f"b = {fit.intercept!r}",
        f'plot "{dat_name}" using 1:2 with linespoints title "measured", \\',
        '     exp(b) * x**a title "fit"',
        "",
    ])
    with open(gp_path, "w") as fh:
        fh.write(script)
    print(f"exponent={fit.exponent!r} r_squared={fit.r_squared!r} "
          f"points={fit.points_used}")
    print(f"wrote {dat_path} and {gp_path}")
    return 0


_DISPATCH = {
    "build": _cmd_build,
    "disc": _cmd_disc,
    "sweep": _cmd_sweep,
    "tails": _cmd_tails,
    "length-study": _cmd_length_study,
    "oracle-check": _cmd_oracle_check,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser, sub_parsers = _build_parser()
    try:
        ns = _merge_config(parser, sub_parsers, sys.argv[1:] if argv is None else argv)
        return _DISPATCH[ns.command](ns)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ExceptionalLineError as exc:
        print(f"error: line: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
