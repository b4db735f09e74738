"""Experiment drivers: scaling sweeps over the target length, Hoeffding-tail
and length-concentration studies, the unshifted-vs-shifted coherence probe,
CSV emission, and log-log slope fitting.

Determinism contract: every study takes an integer seed and derives all
randomness from named streams, so identical inputs give byte-identical CSV
output regardless of worker count or completion order.  Wall-clock timings
are kept on the row objects for console display but never serialized.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import rng
from .counting import (
    ExceptionalLineError,
    count_line,
    endpoint_error,
    jitter_delta,
    oracle_count,
    oracle_padding_hits,
    z_samples,
)
from .discrepancy import SupConfig, estimate_sup
from .geometry import ConvexBody, Line, ValidationError, body_from_dict, body_to_dict
from .steinhaus import SteinhausSet, build_exact, directions, family_length_many, total_length

__all__ = [
    "SweepRow",
    "SlopeFit",
    "ZTailRow",
    "ZTailStudy",
    "CoherenceRow",
    "OracleCheck",
    "run_sweep",
    "write_sweep_csv",
    "read_sweep_csv",
    "fit_slope",
    "z_tail_study",
    "length_study",
    "coherence_study",
    "coherence_probe",
    "run_oracle_check",
]

MIN_FIT_POINTS = 4
MIN_ASYMPTOTIC_N = 8


@dataclass(frozen=True)
class SweepRow:
    """One point of a scaling sweep: build at L_target, estimate the sup.

    The first ten fields are the CSV columns, in order.  wall_time_seconds
    and error are runtime-only: timings are not reproducible and failed rows
    carry their message here instead of aborting the sweep.
    """

    L_target: float
    M: float
    n: int
    eps: float
    seed: int
    L_actual: float
    sup_estimate: float
    max_abs_z: float
    quadrature_max: float
    padding_count: int
    wall_time_seconds: float = 0.0
    error: Optional[str] = None

    CSV_FIELDS = (
        "L_target", "M", "n", "eps", "seed", "L_actual", "sup_estimate",
        "max_abs_z", "quadrature_max", "padding_count",
    )
    _INT_FIELDS = frozenset({"n", "seed", "padding_count"})


@dataclass(frozen=True)
class SlopeFit:
    """Ordinary least squares fit of log(y) against log(x)."""

    exponent: float
    intercept: float
    r_squared: float
    points_used: int


def _row_seed(seed: int, mode: str, l_target: float) -> int:
    return rng.derive_seed(seed, f"sweep/{mode}/{float(l_target)!r}")


def _sweep_worker(payload) -> dict:
    """Run one sweep row from a fully picklable payload; never raises."""
    body_json, l_target, mode, row_seed, config_dict = payload
    started = time.perf_counter()
    try:
        body = body_from_dict(json.loads(body_json))
        config = SupConfig(**config_dict)
        sset, plan = build_exact(body, l_target, mode, row_seed)
        l_actual = total_length(sset)
        if abs(l_actual - l_target) > 1e-9 * l_target:
            raise AssertionError(
                f"adjusted length {l_actual!r} misses target {l_target!r}")
        report = estimate_sup(sset, l_actual, config)
        return {
            "L_target": float(l_target),
            "M": plan.expected_length,
            "n": plan.n,
            "eps": plan.eps,
            "seed": row_seed,
            "L_actual": l_actual,
            "sup_estimate": report.sup_estimate,
            "max_abs_z": report.max_abs_z,
            "quadrature_max": report.max_abs_quadrature,
            "padding_count": sset.padding_count,
            "wall_time_seconds": time.perf_counter() - started,
            "error": None,
        }
    except Exception as exc:  # per-row capture keeps the sweep going
        return {
            "L_target": float(l_target),
            "M": math.nan,
            "n": 0,
            "eps": math.nan,
            "seed": row_seed,
            "L_actual": math.nan,
            "sup_estimate": math.nan,
            "max_abs_z": math.nan,
            "quadrature_max": math.nan,
            "padding_count": 0,
            "wall_time_seconds": time.perf_counter() - started,
            "error": f"{type(exc).__name__}: {exc}",
        }


def run_sweep(
    body: ConvexBody,
    l_values: Sequence[float],
    mode: str,
    config: SupConfig,
    seed: int = 0,
    workers: int = 1,
) -> list[SweepRow]:
    """Full pipeline per target length: plan, build, pad to exact length,
    estimate the sup.  Rows are deterministic per (L, seed) — each draws its
    own derived seed — so worker count never changes the result, only the
    wall time.  Build or estimation failures are recorded on the row.
    """
    l_values = [float(l) for l in l_values]
    if any(b <= a for a, b in zip(l_values, l_values[1:])):
        raise ValidationError("l_values", "target lengths must be increasing")
    if workers < 0:
        raise ValidationError("workers", "worker count must be >= 0")
    if workers == 0:
        import os

        workers = os.cpu_count() or 1
    body_json = json.dumps(body_to_dict(body))
    config_dict = asdict(config)
    payloads = [
        (body_json, l, mode, _row_seed(seed, mode, l), config_dict)
        for l in l_values
    ]
    if workers == 1 or len(payloads) <= 1:
        results = [_sweep_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, payloads))
    return [SweepRow(**r) for r in results]


def _format_cell(name: str, value) -> str:
    if name in SweepRow._INT_FIELDS:
        return str(int(value))
    return repr(float(value))


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    """Header plus one line per row, shortest round-trip float representation.

    Byte-identical for identical rows: timings and error text are excluded
    (failed rows serialize their numeric fields as nan).
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SweepRow.CSV_FIELDS)
        for row in rows:
            writer.writerow(
                [_format_cell(f, getattr(row, f)) for f in SweepRow.CSV_FIELDS])


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(SweepRow.CSV_FIELDS):
            raise ValidationError(
                "csv", f"unexpected header {header!r}; expected "
                f"{list(SweepRow.CSV_FIELDS)!r}")
        rows = []
        for record in reader:
            if len(record) != len(SweepRow.CSV_FIELDS):
                raise ValidationError(
                    "csv", f"expected {len(SweepRow.CSV_FIELDS)} cells, got "
                    f"{len(record)}")
            values = {
                name: int(cell) if name in SweepRow._INT_FIELDS else float(cell)
                for name, cell in zip(SweepRow.CSV_FIELDS, record)
            }
            rows.append(SweepRow(**values))
    return rows


def fit_slope(
    rows: Sequence[SweepRow],
    x_field: str = "L_target",
    y_field: str = "sup_estimate",
    log_correction: Optional[float] = None,
) -> SlopeFit:
    """OLS on (log x, log y).  With log_correction = c, y is divided by
    (log x)^c before fitting, deflating a known logarithmic factor so the
    fitted exponent isolates the power law.

    Rows are skipped when they carry an error, when n < MIN_ASYMPTOTIC_N
    (non-asymptotic builds), or when either coordinate is non-finite or
    non-positive.
    """
    valid_names = {f.name for f in fields(SweepRow)}
    for name in (x_field, y_field):
        if name not in valid_names:
            raise ValidationError("field", f"unknown SweepRow field {name!r}")
    xs, ys = [], []
    for row in rows:
        if row.error is not None or row.n < MIN_ASYMPTOTIC_N:
            continue
        x = float(getattr(row, x_field))
        y = float(getattr(row, y_field))
        if not (math.isfinite(x) and math.isfinite(y) and x > 0 and y > 0):
            continue
        if log_correction is not None:
            if x <= 1.0:
                continue
            y = y / math.log(x) ** log_correction
        xs.append(math.log(x))
        ys.append(math.log(y))
    if len(xs) < MIN_FIT_POINTS:
        raise ValidationError(
            "rows", f"need at least {MIN_FIT_POINTS} usable rows, got {len(xs)}")
    mx = math.fsum(xs) / len(xs)
    my = math.fsum(ys) / len(ys)
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise ValidationError("rows", "degenerate fit: all x values equal")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = math.fsum(
        (y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = math.fsum((y - my) ** 2 for y in ys)
    r_squared = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return SlopeFit(
        exponent=slope, intercept=intercept, r_squared=r_squared,
        points_used=len(xs))


# -- endpoint-error tail study ------------------------------------------------


@dataclass(frozen=True)
class ZTailRow:
    s: float
    empirical_tail: float
    hoeffding_bound: float
    sampling_band: float


@dataclass(frozen=True)
class ZTailStudy:
    n: int
    eps: float
    trials: int
    mean_z: float
    rows: tuple[ZTailRow, ...]

    @property
    def violations(self) -> int:
        """Rows where the empirical tail exceeds bound + band."""
        return sum(
            1 for r in self.rows
            if r.empirical_tail > r.hoeffding_bound + r.sampling_band)


def z_tail_study(
    body: ConvexBody,
    n: int,
    eps: float,
    x,
    y,
    trials: int,
    s_values: Sequence[float],
    seed: int = 0,
) -> ZTailStudy:
    """Empirical tail of |Z(x, y)| over independently resampled shifts,
    against the bound 2 exp(-2 s^2 / n) plus a 3-sigma binomial band.

    The segment endpoints are fixed; only the lattice shifts resample.  The
    body argument pins the study to a concrete geometry (endpoints should
    lie inside it) but Z itself depends only on the segment.
    """
    if trials < 10_000:
        raise ValidationError("trials", "tail study needs at least 10^4 trials")
    if n < 1 or eps <= 0:
        raise ValidationError("n", "need n >= 1 and eps > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for name, point in (("x", x), ("y", y)):
        if not body.contains(point, tol=1e-9):
            raise ValidationError(name, f"segment endpoint {point} outside body")
    shifts = rng.stream(seed, "ztail").random((trials, n))
    z = z_samples(n, eps, x, y, shifts)
    rows = []
    for s in s_values:
        s = float(s)
        empirical = float(np.count_nonzero(np.abs(z) > s)) / trials
        bound = 2.0 * math.exp(-2.0 * s * s / n)
        p_eff = min(bound, 1.0)
        band = 3.0 * math.sqrt(p_eff * (1.0 - p_eff) / trials)
        rows.append(ZTailRow(s, empirical, bound, band))
    return ZTailStudy(
        n=n, eps=eps, trials=trials, mean_z=float(np.mean(z)),
        rows=tuple(rows))


# -- length concentration ------------------------------------------------------


def length_study(
    body: ConvexBody, n: int, eps: float, trials: int, seed: int = 0
) -> dict:
    """Monte Carlo check of grid-length concentration.

    Every per-direction deviation from area/eps is asserted <= 2 * diameter
    (a hard geometric bound); the returned band is a 3-sigma sub-Gaussian
    envelope for the mean of the total over trials.
    """
    if trials < 1_000:
        raise ValidationError("trials", "length study needs at least 10^3 trials")
    if n < 1 or eps <= 0:
        raise ValidationError("n", "need n >= 1 and eps > 0")
    per_direction = body.area / eps
    u = rng.stream(seed, "length").random((trials, n))
    dirs = directions(n)
    totals = np.zeros(trials)
    max_abs_deviation = 0.0
    bound = 2.0 * body.diameter
    for k in range(n):
        lengths = family_length_many(body, dirs[k], eps, u[:, k])
        dev = lengths - per_direction
        worst = float(np.max(np.abs(dev)))
        if worst > bound + 1e-9:
            raise AssertionError(
                f"family {k} deviates by {worst!r} > 2*diameter = {bound!r}")
        max_abs_deviation = max(max_abs_deviation, worst)
        totals += lengths
    return {
        "mean_L": float(np.mean(totals)),
        "expected": n * body.area / eps,
        "max_abs_deviation": max_abs_deviation,
        "hoeffding_band": 3.0 * body.diameter * math.sqrt(n / trials),
    }


# -- unshifted-vs-shifted coherence probe --------------------------------------


def _ray_exit(body: ConvexBody, origin: np.ndarray, direction: np.ndarray):
    """Farthest intersection of the ray origin + t*direction with the
    boundary, or None if the ray immediately leaves the body."""
    if body.kind == "disk":
        w = origin - body.center
        half_b = float(direction @ w)
        c = float(w @ w) - body.radius**2
        disc = half_b * half_b - c
        if disc < 0:
            return None
        t = -half_b + math.sqrt(disc)
        return origin + t * direction if t > 1e-9 else None
    v0 = body.vertices
    v1 = np.roll(v0, -1, axis=0)
    e = v1 - v0
    w = v0 - origin[None, :]
    denom = direction[0] * e[:, 1] - direction[1] * e[:, 0]
    ok = np.abs(denom) > 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / denom
        s = (w[:, 0] * direction[1] - w[:, 1] * direction[0]) / denom
    ok &= (t > 1e-9) & (s >= -1e-9) & (s <= 1.0 + 1e-9)
    if not np.any(ok):
        return None
    return origin + float(np.max(t[ok])) * direction


def coherence_probe(body: ConvexBody, n: int, eps: float, fan: int = 17) -> float:
    """Max |Z| over a fan of unshifted probe chords from the origin.

    With all shifts zero, every family has a lattice line through the
    origin, so chords leaving the origin at angles within pi/n of the
    steepest direction accumulate same-sign endpoint errors across all
    families.  The fan spans exactly that window.
    """
    if not body.contains(np.zeros(2), tol=1e-9):
        raise ValidationError(
            "body", "coherence probe needs the origin inside the body")
    sset = SteinhausSet(body=body, n=n, eps=eps, shifts=np.zeros(n))
    origin = np.zeros(2)
    best = 0.0
    for angle in np.linspace(math.pi / 2 - math.pi / n, math.pi / 2, fan + 1)[1:]:
        exit_point = _ray_exit(
            body, origin, np.array([math.cos(angle), math.sin(angle)]))
        if exit_point is None:
            continue
        best = max(best, abs(endpoint_error(sset, origin, exit_point)))
    return best


@dataclass(frozen=True)
class CoherenceRow:
    n: int
    eps: float
    zero_probe: float
    random_max: float
    random_bound: float


def coherence_study(
    body: ConvexBody,
    n_values: Sequence[int],
    eps_values: Sequence[float],
    trials: int = 2_000,
    seed: int = 0,
) -> list[CoherenceRow]:
    """Same probe chord, zero shifts versus resampled shifts.

    Zero shifts align every family's error at the origin (|Z| grows like n);
    random shifts keep the max over trials below ~ sqrt(n log(n/eps)).
    """
    if len(n_values) != len(eps_values):
        raise ValidationError("n_values", "need one eps per n")
    rows = []
    for n, eps in zip(n_values, eps_values):
        n = int(n)
        eps = float(eps)
        zero = coherence_probe(body, n, eps)
        shifts = rng.stream(seed, f"coherence/{n}").random((trials, n))
        random_max = 0.0
        fan = np.linspace(math.pi / 2 - math.pi / n, math.pi / 2, 18)[1:]
        for angle in fan:
            exit_point = _ray_exit(
                body, np.zeros(2), np.array([math.cos(angle), math.sin(angle)]))
            if exit_point is None:
                continue
            z = z_samples(n, eps, np.zeros(2), exit_point, shifts)
            random_max = max(random_max, float(np.max(np.abs(z))))
        rows.append(CoherenceRow(
            n=n, eps=eps, zero_probe=zero,
            random_max=random_max,
            random_bound=4.0 * math.sqrt(n * math.log(n / eps)),
        ))
    return rows


# -- oracle cross-validation ---------------------------------------------------


@dataclass(frozen=True)
class OracleCheck:
    comparisons: int
    agreements: int
    skipped: int
    mismatches: tuple[tuple[float, float, int, int], ...]
    max_family_deviation: float = 0.0

    @property
    def all_agree(self) -> bool:
        return self.skipped == 0 and self.agreements == self.comparisons


def run_oracle_check(
    sset: SteinhausSet, lines: int, seed: int = 0, max_attempts: int = 6
) -> OracleCheck:
    """Compare the lattice counter against the geometric crossing oracle on
    random lines.

    Both counters see the identical line: when either side screens a line as
    exceptional, the offset is jittered deterministically and both retry, so
    every comparison is on a line both accept.  Grid totals and padding hits
    must both agree.
    """
    if lines < 1:
        raise ValidationError("lines", "need at least one line")
    stream = rng.stream(seed, "oracle")
    u = stream.random((lines, 2))
    thetas = math.pi * u[:, 0]
    lo, hi = sset.body.offset_extents(thetas)
    margin = 0.05 * sset.body.diameter
    offsets = (lo - margin) + (hi - lo + 2 * margin) * u[:, 1]
    agreements = 0
    skipped = 0
    max_family_deviation = 0.0
    mismatches = []
    for theta, offset in zip(thetas, offsets):
        theta = float(theta)
        offset = float(offset)
        resolved = None
        for attempt in range(max_attempts):
            delta = jitter_delta(theta, offset, sset.eps, attempt) if attempt else 0.0
            line = Line(theta, offset + delta)
            try:
                fast = count_line(sset, line)
                reference = oracle_count(sset, line)
            except ExceptionalLineError:
                continue
            resolved = (fast, reference, oracle_padding_hits(sset, line))
            break
        if resolved is None:
            skipped += 1
            continue
        fast, reference, pad_ref = resolved
        max_family_deviation = max(max_family_deviation, fast.max_abs_dev)
        if fast.total == reference and fast.padding_hits == pad_ref:
            agreements += 1
        else:
            mismatches.append((theta, offset, fast.total, reference))
    return OracleCheck(
        comparisons=lines - skipped, agreements=agreements, skipped=skipped,
        mismatches=tuple(mismatches),
        max_family_deviation=max_family_deviation)
