"""Crofton target, local discrepancy, quadrature sum, and a sup estimator.

The estimator reports a certified lower bound for the essential supremum of
|crossings - Crofton target| over lines: every value it returns was attained
by an explicitly evaluated, non-exceptional line (the witness), and the
witness value is recomputed independently at report time.  Alongside, the
report carries the envelope upper bound implied by the exact decomposition

    count + padding_hits - crofton
        = quadrature_term + z_term + padding_term + length_normalization_term,

whose per-line validity is asserted on every sampled line.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import ConvexBody, Line, ValidationError
from .steinhaus import SteinhausSet
from .counting import LineBatch, count_line, evaluate_lines
from . import rng as rng_mod

GOLDEN_FRACTION = 0.6180339887498949  # for deterministic in-row resampling
DELTA_LOG2_MIN = -40.0  # targeted points sit 2^-40 .. 2^-3 lattice units away
DELTA_LOG2_MAX = -3.0
TOP_CANDIDATES = 100
LOCAL_GRID = 11  # 11 x 11 refinement stencil per candidate
EQUALITY_TOL = 1e-9


def crofton_target(length: float, area: float, h: float) -> float:
    """Expected crossing count of a chord of length h: 2 * length * h / (pi * area)."""
    if not (length >= 0.0):
        raise ValidationError("length", f"length must be >= 0, got {length}")
    if not (area > 0.0):
        raise ValidationError("area", f"area must be > 0, got {area}")
    if not (h >= 0.0):
        raise ValidationError("h", f"chord length must be >= 0, got {h}")
    return 2.0 * length * h / (math.pi * area)


def angular_sum(n: int, theta: float) -> float:
    """Sum over the n equispaced unit normals of |cos(theta - pi k / n)|."""
    if n < 1:
        raise ValidationError("n", f"n must be >= 1, got {n}")
    k = np.arange(n, dtype=float)
    return float(np.abs(np.cos(theta - math.pi * k / n)).sum())


def max_quadrature_deviation(n: int, thetas: np.ndarray, chunk: int = 200_000) -> float:
    """max over thetas of |angular_sum(n, theta) - 2 n / pi|, chunked."""
    if n < 1:
        raise ValidationError("n", f"n must be >= 1, got {n}")
    thetas = np.asarray(thetas, dtype=float)
    mean = 2.0 * n / math.pi
    angles = (math.pi / n) * np.arange(n)
    rows = max(1, chunk // n)
    worst = 0.0
    for lo in range(0, thetas.size, rows):
        block = thetas[lo:lo + rows]
        sums = np.abs(np.cos(block[:, None] - angles[None, :])).sum(axis=1)
        worst = max(worst, float(np.abs(sums - mean).max()))
    return worst


def decompose(sset: SteinhausSet, line: Line, length: float) -> dict:
    """Exact decomposition terms of the signed error at one line.

    Raises on exceptional lines (propagated from the counting kernel).
    """
    bd = count_line(sset, line)
    ch = sset.body.chord(line)
    h = ch.length if ch is not None else 0.0
    area = sset.body.area
    quad = bd.mean_term - (2.0 * sset.n / math.pi) * (h / sset.eps)
    norm = (2.0 * h / (math.pi * area)) * (sset.n * area / sset.eps - length)
    crof = crofton_target(length, area, h)
    signed = bd.total + bd.padding_hits - crof
    return {
        "quadrature_term": quad,
        "z_term": bd.z,
        "padding_term": float(bd.padding_hits),
        "length_normalization_term": norm,
        "chord_length": h,
        "crofton": crof,
        "total": bd.total,
        "signed_error": signed,
    }


def local_discrepancy(sset: SteinhausSet, line: Line, length: float) -> float:
    """|crossings + padding hits - crofton_target| at one line."""
    return abs(decompose(sset, line, length)["signed_error"])


@dataclass(frozen=True)
class SupConfig:
    theta_resolution: int = 192
    offset_resolution: int = 192
    refine_rounds: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("theta_resolution", "offset_resolution"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 8:
                raise ValidationError(name, f"{name} must be an integer >= 8, got {value!r}")
        if not isinstance(self.refine_rounds, int) or self.refine_rounds < 0:
            raise ValidationError(
                "refine_rounds", f"refine_rounds must be an integer >= 0, got {self.refine_rounds!r}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed", f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class DiscrepancyReport:
    sup_estimate: float
    witness_theta: float
    witness_offset: float
    witness_total: int
    witness_quadrature_term: float
    witness_z_term: float
    witness_padding_term: float
    witness_length_normalization_term: float
    witness_chord_length: float
    witness_crofton: float
    samples_evaluated: int
    excluded_lines: int
    theta_resolution: int
    offset_resolution: int
    refine_rounds: int
    seed: int
    length: float
    max_abs_z: float
    max_abs_quadrature: float
    max_padding_hits: int
    envelope_upper: float

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "DiscrepancyReport":
        names = {f.name for f in fields(DiscrepancyReport)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError("report", f"unknown report keys: {sorted(unknown)}")
        missing = names - set(data)
        if missing:
            raise ValidationError("report", f"missing report keys: {sorted(missing)}")
        return DiscrepancyReport(**data)


def format_report(report: DiscrepancyReport) -> str:
    """Human-readable multi-line rendering with every report field."""
    lines = []
    for f in fields(DiscrepancyReport):
        value = getattr(report, f.name)
        if isinstance(value, float):
            lines.append(f"{f.name} = {value!r}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_report(report: DiscrepancyReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_report(path) -> DiscrepancyReport:
    with open(path, "r", encoding="utf-8") as fh:
        return DiscrepancyReport.from_dict(json.load(fh))


def _normalize_lines(thetas: np.ndarray, offsets: np.ndarray):
    """Map (theta, p) into [0, pi) x R with the (theta+pi, -p) identification.

    Mirrors the scalar Line normalization so that a winning sample can be
    reconstructed as a Line with bitwise-identical fields.
    """
    k = np.floor(thetas / math.pi)
    th = thetas - k * math.pi
    seam = th >= math.pi
    th = np.where(seam, th - math.pi, th)
    k = k + seam
    flip = (k.astype(np.int64) % 2) != 0
    return th, np.where(flip, -offsets, offsets)


class _RunningMax:
    """Order-independent max with total tie-break on (theta, offset)."""

    def __init__(self):
        self.value = -1.0
        self.theta = 0.0
        self.offset = 0.0

    def update(self, values, thetas, offsets):
        if values.size == 0:
            return
        order = np.lexsort((offsets, thetas, -values))
        i = order[0]
        v, t, p = float(values[i]), float(thetas[i]), float(offsets[i])
        if v > self.value or (
            v == self.value and (t, p) < (self.theta, self.offset)
        ):
            self.value, self.theta, self.offset = v, t, p


def _targeted_lines(sset: SteinhausSet, count: int, seed: int):
    """Deterministic prefix-stable stream of lines through near-lattice points.

    Rows draw a fixed number of uniforms each, so the first k lines of a
    longer stream equal the k lines of a shorter one (doubling monotonicity).
    Three variants: (A) a line through two independently chosen near-lattice
    points; (B) a line at a uniform angle through a perturbed intersection
    point of two lattice lines from distinct families, with indices biased
    toward the lattice lines nearest the origin (where all unshifted families
    meet); (C) a line through a perturbed body vertex, tilted off an adjacent
    edge direction by a log-spread angle — endpoint errors align along chords
    that hug a boundary edge near a lattice-heavy corner.
    """
    if count <= 0:
        return np.empty(0), np.empty(0)
    n, eps = sset.n, sset.eps
    body = sset.body
    dirs = sset.directions
    tangents = np.column_stack([-dirs[:, 1], dirs[:, 0]])
    qlo = sset.q_ranges[:, 0].astype(float)
    qhi = sset.q_ranges[:, 1].astype(float)
    qspan = qhi - qlo + 1.0
    q_anchor = np.clip(np.rint(-sset.shifts), qlo, qhi)

    u = rng_mod.stream(seed, "targeted").random((count, 12))

    def lattice_offset(col_k, col_q, anchored):
        """Family pick and lattice offset; anchored rows favor small offsets."""
        k = np.minimum((col_k * n).astype(np.int64), n - 1)
        q = qlo[k] + np.floor(col_q * qspan[k])
        if anchored:
            anchor = col_q < 0.25
            rescaled = qlo[k] + np.floor((col_q - 0.25) / 0.75 * qspan[k])
            q = np.where(anchor, q_anchor[k], np.clip(rescaled, qlo[k], qhi[k]))
        return k, eps * (q + sset.shifts[k])

    delta = eps * np.exp2(DELTA_LOG2_MIN + (DELTA_LOG2_MAX - DELTA_LOG2_MIN) * u[:, 4])
    sign1 = np.where(u[:, 5] < 0.5, -1.0, 1.0)
    sign2 = np.where(u[:, 10] < 0.5, -1.0, 1.0)

    # variant A: two near-lattice points, the line through them
    k1, s1 = lattice_offset(u[:, 1], u[:, 2], anchored=False)
    ka2, sa2 = lattice_offset(u[:, 6], u[:, 7], anchored=False)
    tan1, tan2 = tangents[k1], tangents[ka2]
    t1lo, t1hi = _support_many(body, tan1)
    t2lo, t2hi = _support_many(body, tan2)
    p1 = (s1 + sign1 * delta)[:, None] * dirs[k1] + (
        t1lo + u[:, 3] * (t1hi - t1lo))[:, None] * tan1
    p2 = (sa2 + sign2 * delta)[:, None] * dirs[ka2] + (
        t2lo + u[:, 8] * (t2hi - t2lo))[:, None] * tan2
    d = p2 - p1
    dist = np.hypot(d[:, 0], d[:, 1])
    tiny = dist < 1e-9 * body.diameter
    d[tiny] = tan1[tiny]
    thetas = np.arctan2(d[:, 1], d[:, 0]) + math.pi / 2.0
    offsets = np.cos(thetas) * p1[:, 0] + np.sin(thetas) * p1[:, 1]

    # variant B: perturbed intersection of two distinct families' lattice lines
    if n >= 2:
        _, s1b = lattice_offset(u[:, 1], u[:, 2], anchored=True)
        kb2 = (k1 + 1 + np.minimum((u[:, 6] * (n - 1)).astype(np.int64), n - 2)) % n
        anchor2 = u[:, 7] < 0.25
        qb2 = np.where(
            anchor2,
            q_anchor[kb2],
            np.clip(qlo[kb2] + np.floor((u[:, 7] - 0.25) / 0.75 * qspan[kb2]),
                    qlo[kb2], qhi[kb2]),
        )
        sb2 = eps * (qb2 + sset.shifts[kb2])
        n1, n2 = dirs[k1], dirs[kb2]
        det = n1[:, 0] * n2[:, 1] - n1[:, 1] * n2[:, 0]
        bx = (s1b * n2[:, 1] - sb2 * n1[:, 1]) / det
        by = (sb2 * n1[:, 0] - s1b * n2[:, 0]) / det
        wobble = 2.0 * math.pi * u[:, 9]
        bx = bx + delta * np.cos(wobble)
        by = by + delta * np.sin(wobble)
        theta_b = math.pi * u[:, 3]
        offs_b = np.cos(theta_b) * bx + np.sin(theta_b) * by
        pick_b = u[:, 0] >= 0.5
        thetas = np.where(pick_b, theta_b, thetas)
        offsets = np.where(pick_b, offs_b, offsets)

    # variant C: perturbed body vertex, tilted off an adjacent edge direction
    if body.kind == "polygon":
        verts = body.vertices
        n_verts = len(verts)
        vidx = np.minimum((u[:, 1] * n_verts).astype(np.int64), n_verts - 1)
        edge_prev = verts[vidx] - verts[(vidx - 1) % n_verts]
        edge_next = verts[(vidx + 1) % n_verts] - verts[vidx]
        pick_edge = u[:, 7] < 0.5
        ex = np.where(pick_edge, edge_prev[:, 0], edge_next[:, 0])
        ey = np.where(pick_edge, edge_prev[:, 1], edge_next[:, 1])
        # lines parallel to the edge have normal angle = edge angle + pi/2
        base_angle = np.arctan2(ey, ex) + math.pi / 2.0
        tilt = (math.pi / 2.0) * np.exp2(-20.0 * u[:, 8]) * np.where(
            u[:, 5] < 0.5, -1.0, 1.0)
        theta_c = np.where(u[:, 6] < 0.5, math.pi * u[:, 3], base_angle + tilt)
        wobble = 2.0 * math.pi * u[:, 9]
        cx = verts[vidx, 0] + delta * np.cos(wobble)
        cy = verts[vidx, 1] + delta * np.sin(wobble)
        offs_c = np.cos(theta_c) * cx + np.sin(theta_c) * cy
        pick_c = u[:, 0] >= 0.75
        thetas = np.where(pick_c, theta_c, thetas)
        offsets = np.where(pick_c, offs_c, offsets)
    return _normalize_lines(thetas, offsets)


def _support_many(body: ConvexBody, units: np.ndarray):
    """Support interval per row of an (N, 2) array of unit directions."""
    if body.kind == "disk":
        c = units @ body.center
        return c - body.radius, c + body.radius
    proj = units @ body.vertices.T
    return proj.min(axis=1), proj.max(axis=1)


class _Accumulator:
    """Evaluates candidate lines, keeps aggregates, and remembers samples."""

    def __init__(self, sset: SteinhausSet, length: float):
        self.sset = sset
        self.length = length
        self.coef = 2.0 * length / (math.pi * sset.body.area)
        self.norm_factor = (
            sset.n * sset.body.area / sset.eps - length) * 2.0 / (math.pi * sset.body.area)
        self.best = _RunningMax()
        self.samples = 0
        self.excluded = 0
        self.max_abs_z = 0.0
        self.max_abs_quad = 0.0
        self.max_padding_hits = 0
        self.max_abs_norm = 0.0
        self.thetas: list[np.ndarray] = []
        self.offsets: list[np.ndarray] = []
        self.locals: list[np.ndarray] = []

    def evaluate(self, thetas: np.ndarray, offsets: np.ndarray) -> None:
        if thetas.size == 0:
            return
        batch = evaluate_lines(self.sset, thetas, offsets)
        include = batch.valid & ~batch.exceptional
        signed = batch.total + batch.padding_hits - self.coef * batch.h
        signed[~include] = 0.0
        local = np.abs(signed)

        quad = batch.mean_term - (2.0 * self.sset.n / math.pi) * (
            batch.h / self.sset.eps)
        norm = self.norm_factor * batch.h
        # slack: 1e-9 absolute plus a few ulps of the large cancelling terms
        slack = EQUALITY_TOL + 1e-13 * (
            np.abs(self.coef * batch.h) + np.abs(batch.mean_term))
        envelope = (np.abs(quad) + np.abs(batch.z) + batch.padding_hits
                    + np.abs(norm) + slack)
        bad = include & (local > envelope)
        if np.any(bad):
            i = int(np.where(bad)[0][0])
            raise AssertionError(
                "decomposition inequality violated: "
                f"theta={batch.theta[i]!r} offset={batch.offset[i]!r} "
                f"local={local[i]!r} envelope={envelope[i]!r}")

        self.samples += int(thetas.size)
        self.excluded += int(batch.exceptional.sum())
        if include.any():
            self.max_abs_z = max(self.max_abs_z, float(np.abs(batch.z[include]).max()))
            self.max_abs_quad = max(
                self.max_abs_quad, float(np.abs(quad[include]).max()))
            self.max_padding_hits = max(
                self.max_padding_hits, int(batch.padding_hits[include].max()))
            self.max_abs_norm = max(
                self.max_abs_norm, float(np.abs(norm[include]).max()))
        kept_theta = batch.theta.copy()
        kept_offset = batch.offset.copy()
        self.best.update(local[include], kept_theta[include], kept_offset[include])
        self.thetas.append(kept_theta[include])
        self.offsets.append(kept_offset[include])
        self.locals.append(local[include])

    def top_candidates(self, count: int):
        th = np.concatenate(self.thetas) if self.thetas else np.empty(0)
        po = np.concatenate(self.offsets) if self.offsets else np.empty(0)
        lv = np.concatenate(self.locals) if self.locals else np.empty(0)
        if th.size == 0:
            return th, po
        order = np.lexsort((po, th, -lv))[: min(count, th.size)]
        return th[order], po[order]


def estimate_sup(
    sset: SteinhausSet, length: float, config: SupConfig
) -> DiscrepancyReport:
    """Structured search for the largest local discrepancy.

    Base grid: theta_resolution angles uniform on [0, pi), offset_resolution
    offsets spanning the body's support slab per angle (both nested under
    doubling).  Plus a prefix-stable targeted stream of lines through
    near-lattice points, then refine_rounds rounds of 10x-finer local grids
    around the current top candidates.  Returns a certified lower bound: the
    reported value is re-attained by the witness line at report time.
    """
    if not (length >= 0.0) or not math.isfinite(length):
        raise ValidationError("length", f"length must be finite and >= 0, got {length}")
    acc = _Accumulator(sset, length)
    r_theta, r_off = config.theta_resolution, config.offset_resolution

    theta_grid = math.pi * np.arange(r_theta) / r_theta
    lo, hi = sset.body.offset_extents(theta_grid)
    frac = np.arange(r_off) / r_off
    offs = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    acc.evaluate(np.repeat(theta_grid, r_off), offs.ravel())

    t_th, t_off = _targeted_lines(sset, (r_theta * r_off) // 8, config.seed)
    acc.evaluate(t_th, t_off)

    d_theta = math.pi / r_theta
    d_off = float(np.median(hi - lo)) / r_off
    stencil = np.arange(LOCAL_GRID) - LOCAL_GRID // 2
    for round_idx in range(config.refine_rounds):
        step_t = d_theta / (10.0 ** (round_idx + 1))
        step_p = d_off / (10.0 ** (round_idx + 1))
        cth, cpo = acc.top_candidates(TOP_CANDIDATES)
        if cth.size == 0:
            break
        grid_t = cth[:, None, None] + step_t * stencil[None, :, None]
        grid_p = cpo[:, None, None] + step_p * stencil[None, None, :]
        grid_t, grid_p = np.broadcast_arrays(grid_t, grid_p)
        nth, npo = _normalize_lines(grid_t.ravel(), grid_p.ravel())
        acc.evaluate(nth, npo)

    if acc.best.value < 0.0:
        # no admissible sample at all: report a line that misses the body
        miss = float(lo.min()) - 1.0 - sset.body.diameter
        witness = Line(0.0, miss)
    else:
        witness = Line(acc.best.theta, acc.best.offset)
    terms = decompose(sset, witness, length)
    sup_value = abs(terms["signed_error"])
    recheck_tol = EQUALITY_TOL + 1e-13 * abs(terms["crofton"])
    if acc.best.value >= 0.0 and abs(sup_value - acc.best.value) > recheck_tol:
        raise AssertionError(
            "witness recomputation mismatch: "
            f"search={acc.best.value!r} recomputed={sup_value!r} "
            f"theta={witness.theta!r} offset={witness.offset!r}")
    envelope_upper = (acc.max_abs_quad + acc.max_abs_z + sset.padding_count
                      + acc.max_abs_norm)
    return DiscrepancyReport(
        sup_estimate=sup_value,
        witness_theta=witness.theta,
        witness_offset=witness.offset,
        witness_total=terms["total"],
        witness_quadrature_term=terms["quadrature_term"],
        witness_z_term=terms["z_term"],
        witness_padding_term=terms["padding_term"],
        witness_length_normalization_term=terms["length_normalization_term"],
        witness_chord_length=terms["chord_length"],
        witness_crofton=terms["crofton"],
        samples_evaluated=acc.samples,
        excluded_lines=acc.excluded,
        theta_resolution=r_theta,
        offset_resolution=r_off,
        refine_rounds=config.refine_rounds,
        seed=config.seed,
        length=length,
        max_abs_z=acc.max_abs_z,
        max_abs_quadrature=acc.max_abs_quad,
        max_padding_hits=acc.max_padding_hits,
        envelope_upper=envelope_upper,
    )
