"""Exact crossing counts of lines against a Steinhaus set.

For a chord whose endpoint projections onto family k's normal are a <= b,
the number of lattice lines of that family the chord crosses is

    N_k = #{q : eps (q + U_k) in [a, b)} = ceil(b/eps - U_k) - ceil(a/eps - U_k),

an O(1) integer formula.  The half-open convention resolves boundary ties
deterministically; N_k differs from the mean (b - a)/eps by less than one.

A line is *exceptional* when its count is ambiguous under perturbation
(a measure-zero set of line space).  Three conditions, all at
EXCEPTIONAL_TOL absolute in offset units:

  1. parallel-and-coincident: the projection interval degenerates (width
     below tolerance) on top of a lattice value — the line runs along a
     grid line;
  2. a chord endpoint projects within tolerance of a lattice value, i.e.
     the line passes next to the point where that grid segment meets the
     boundary, so the crossing may sit just outside the segment.  When the
     boundary edge carrying the chord endpoint is itself collinear with
     that family's lattice line (an axis-aligned body under zero shifts),
     the crossing is pinned — it stays strictly inside the segment for
     every nearby line — so this case is NOT exceptional; a pinned
     crossing is counted exactly once (the min-side lattice value is
     included despite float noise, and the max-side value that the
     half-open convention would drop is added back);
  3. the line passes within tolerance of a padding-segment endpoint.

Exceptional lines are never counted: scalar entry points raise, and the
batch evaluator retries with a deterministic offset jitter of
+-(attempt * JITTER_SCALE * eps).  The geometric oracle additionally
screens every grid-segment endpoint exactly and raises when one lies
within tolerance of the query line.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import Line
from .steinhaus import SteinhausSet, directions

__all__ = [
    "EXCEPTIONAL_TOL",
    "JITTER_SCALE",
    "ExceptionalLineError",
    "count_in_interval",
    "CountBreakdown",
    "LineBatch",
    "evaluate_lines",
    "count_line",
    "is_exceptional",
    "oracle_count",
    "oracle_padding_hits",
    "endpoint_error",
    "z_samples",
    "jitter_delta",
]

EXCEPTIONAL_TOL = 1e-9
JITTER_SCALE = 1e-7


class ExceptionalLineError(ValueError):
    """The line's crossing count is ambiguous under perturbation."""

    def __init__(self, theta: float, offset: float, reason: str):
        self.theta = theta
        self.offset = offset
        super().__init__(
            f"exceptional line theta={theta!r} offset={offset!r}: {reason}"
        )


def count_in_interval(a: float, b: float, eps: float, u: float) -> int:
    """#{q : eps (q + u) in [a, b)}; zero when a == b."""
    return math.ceil(b / eps - u) - math.ceil(a / eps - u)


def jitter_delta(theta: float, offset: float, eps: float, attempt: int) -> float:
    """Deterministic jitter for an exceptional line, scaled by attempt."""
    digest = hashlib.blake2b(
        struct.pack("<ddq", theta, offset, attempt), digest_size=8
    ).digest()
    sign = 1.0 if digest[0] & 1 else -1.0
    return sign * attempt * JITTER_SCALE * eps


@dataclass(frozen=True, eq=False)
class CountBreakdown:
    """Per-family counts with the exact decomposition total = mean_term + z."""

    per_family: np.ndarray
    total: int
    mean_term: float
    z: float
    padding_hits: int
    max_abs_dev: float


@dataclass(eq=False)
class LineBatch:
    """Vectorized evaluation results; offsets reflect any applied jitter."""

    theta: np.ndarray
    offset: np.ndarray
    valid: np.ndarray
    h: np.ndarray
    total: np.ndarray
    z: np.ndarray
    mean_term: np.ndarray
    padding_hits: np.ndarray
    max_abs_dev: np.ndarray
    exceptional: np.ndarray
    jittered: np.ndarray

    def __len__(self) -> int:
        return len(self.theta)


_ALIGNED_CACHE: dict = {}


def _aligned_lattice_edges(sset: SteinhausSet):
    """Boundary edges collinear with (and sitting on) a family's lattice line.

    Returns a list of (family k, offset, edge tangent, span lo, span hi) for
    every polygon edge whose direction is perpendicular to nu_k and whose
    offset along nu_k is itself a lattice value: chord endpoints on such an
    edge are pinned crossings, not exceptional ones.
    """
    cached = _ALIGNED_CACHE.get(id(sset))
    if cached is not None and cached[0] is sset:
        return cached[1]
    pairs = []
    if sset.body.kind == "polygon":
        v, e, elen = sset.body._edge_data
        tau = e / elen[:, None]
        dots = sset.directions @ tau.T  # (n families, E edges)
        for k, j in zip(*np.nonzero(np.abs(dots) <= 1e-12)):
            off = float(sset.directions[k] @ v[j])
            frac = off / sset.eps - sset.shifts[k]
            if abs(frac - round(frac)) * sset.eps <= EXCEPTIONAL_TOL:
                t0 = float(tau[j] @ v[j])
                t1 = t0 + float(elen[j])
                pairs.append((
                    int(k), off, tau[j].copy(),
                    min(t0, t1) - EXCEPTIONAL_TOL, max(t0, t1) + EXCEPTIONAL_TOL,
                ))
    result = pairs or None
    _ALIGNED_CACHE[id(sset)] = (sset, result)
    if len(_ALIGNED_CACHE) > 64:
        _ALIGNED_CACHE.pop(next(iter(_ALIGNED_CACHE)))
    return result


def _eval_arrays(sset: SteinhausSet, thetas, ps, keep_per_family=False):
    """One pass of the counting kernel over a batch of lines."""
    start, end, h, valid = sset.body.chord_batch(thetas, ps)
    dirs_t = sset.directions.T
    proj_s = start @ dirs_t
    proj_e = end @ dirs_t
    a = np.minimum(proj_s, proj_e)
    b = np.maximum(proj_s, proj_e)
    alpha = a / sset.eps - sset.shifts[None, :]
    beta = b / sset.eps - sset.shifts[None, :]
    n_lo = np.ceil(alpha)
    n_hi = np.ceil(beta)

    # Chord endpoints sitting on a lattice-aligned boundary edge are pinned,
    # stable crossings (the lattice line there IS part of the set): include
    # the min-side value despite float noise around the lattice point, and
    # include the max-side value that the half-open convention would drop.
    pinned = _aligned_lattice_edges(sset)
    pinned_s = pinned_e = None
    if pinned is not None:
        pinned_s = np.zeros(proj_s.shape, dtype=bool)
        pinned_e = np.zeros(proj_e.shape, dtype=bool)
        for k, off, tau, span_lo, span_hi in pinned:
            ts = start @ tau
            te = end @ tau
            pinned_s[:, k] |= (
                (np.abs(proj_s[:, k] - off) <= EXCEPTIONAL_TOL)
                & (ts >= span_lo) & (ts <= span_hi))
            pinned_e[:, k] |= (
                (np.abs(proj_e[:, k] - off) <= EXCEPTIONAL_TOL)
                & (te >= span_lo) & (te <= span_hi))
        s_is_min = proj_s <= proj_e
        pinned_a = np.where(s_is_min, pinned_s, pinned_e)
        pinned_b = np.where(s_is_min, pinned_e, pinned_s)
        n_lo = np.where(pinned_a, np.rint(alpha), n_lo)
        n_hi = np.where(pinned_b, np.rint(beta) + 1.0, n_hi)

    per_family = n_hi - n_lo
    diffs = per_family - (b - a) / sset.eps
    z = np.sum(diffs, axis=1)
    total = np.sum(per_family, axis=1)
    mean_term = total - z
    max_abs_dev = np.max(np.abs(diffs), axis=1) if per_family.size else np.zeros(len(h))

    # chord endpoint next to the point where a grid segment meets the boundary
    fr_s = proj_s / sset.eps - sset.shifts[None, :]
    fr_e = proj_e / sset.eps - sset.shifts[None, :]
    near_s = np.abs(fr_s - np.rint(fr_s)) * sset.eps <= EXCEPTIONAL_TOL
    near_e = np.abs(fr_e - np.rint(fr_e)) * sset.eps <= EXCEPTIONAL_TOL
    if pinned_s is not None:
        near_s &= ~pinned_s
        near_e &= ~pinned_e
    exceptional = np.any(near_s | near_e, axis=1)

    # parallel to a family and lying on one of its lattice lines
    width = (beta - alpha) * sset.eps
    mid = 0.5 * (alpha + beta)
    par_co = (width <= EXCEPTIONAL_TOL) & (
        np.abs(mid - np.rint(mid)) * sset.eps <= EXCEPTIONAL_TOL + 0.5 * width)
    exceptional |= np.any(par_co, axis=1)

    hits = np.zeros(len(h), dtype=np.int64)
    if sset.padding_count:
        nu = np.column_stack([np.cos(thetas), np.sin(thetas)])
        sig0 = nu @ sset.padding[:, 0, :].T - ps[:, None]
        sig1 = nu @ sset.padding[:, 1, :].T - ps[:, None]
        hits = np.sum(sig0 * sig1 < 0.0, axis=1, dtype=np.int64)
        near_pad = np.minimum(np.abs(sig0), np.abs(sig1)) <= EXCEPTIONAL_TOL
        exceptional |= np.any(near_pad, axis=1)

    exceptional &= valid
    zero = ~valid
    total = np.where(zero, 0.0, total).astype(np.int64)
    z = np.where(zero, 0.0, z)
    mean_term = np.where(zero, 0.0, mean_term)
    hits = np.where(zero, 0, hits)
    max_abs_dev = np.where(zero, 0.0, max_abs_dev)
    out = (h, valid, total, z, mean_term, hits, max_abs_dev, exceptional)
    if keep_per_family:
        pf = np.where(zero[:, None], 0.0, per_family).astype(np.int64)
        return out + (pf,)
    return out


def evaluate_lines(
    sset: SteinhausSet,
    thetas: np.ndarray,
    offsets: np.ndarray,
    jitter: bool = True,
    max_attempts: int = 4,
    chunk: int | None = None,
) -> LineBatch:
    """Count every line, jittering exceptional ones deterministically.

    Lines still exceptional after max_attempts jitters keep exceptional=True
    and zeroed counts; callers exclude them from suprema (they form a null
    set of line space).  Processes in chunks to bound the (lines x families)
    working memory.
    """
    thetas = np.asarray(thetas, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    n_lines = len(thetas)
    if chunk is None:
        chunk = max(256, 2_000_000 // max(sset.n, 1))

    fields = {
        "theta": thetas.copy(),
        "offset": offsets.copy(),
        "valid": np.zeros(n_lines, dtype=bool),
        "h": np.zeros(n_lines),
        "total": np.zeros(n_lines, dtype=np.int64),
        "z": np.zeros(n_lines),
        "mean_term": np.zeros(n_lines),
        "padding_hits": np.zeros(n_lines, dtype=np.int64),
        "max_abs_dev": np.zeros(n_lines),
        "exceptional": np.zeros(n_lines, dtype=bool),
        "jittered": np.zeros(n_lines, dtype=bool),
    }

    for lo in range(0, n_lines, chunk):
        hi = min(lo + chunk, n_lines)
        th = thetas[lo:hi]
        ps = offsets[lo:hi].copy()
        h, valid, total, z, mean, hits, dev, exc = _eval_arrays(sset, th, ps)
        if jitter and np.any(exc):
            for attempt in range(1, max_attempts + 1):
                idx = np.where(exc)[0]
                if idx.size == 0:
                    break
                for i in idx:
                    ps[i] = offsets[lo + i] + jitter_delta(
                        th[i], offsets[lo + i], sset.eps, attempt
                    )
                rh, rvalid, rtotal, rz, rmean, rhits, rdev, rexc = _eval_arrays(
                    sset, th[idx], ps[idx]
                )
                h[idx], valid[idx], total[idx] = rh, rvalid, rtotal
                z[idx], mean[idx], hits[idx], dev[idx] = rz, rmean, rhits, rdev
                exc[idx] = rexc
                fields["jittered"][lo + idx] = True
        still = exc
        total = np.where(still, 0, total)
        z = np.where(still, 0.0, z)
        mean = np.where(still, 0.0, mean)
        hits = np.where(still, 0, hits)
        dev = np.where(still, 0.0, dev)
        fields["offset"][lo:hi] = ps
        fields["h"][lo:hi] = h
        fields["valid"][lo:hi] = valid
        fields["total"][lo:hi] = total
        fields["z"][lo:hi] = z
        fields["mean_term"][lo:hi] = mean
        fields["padding_hits"][lo:hi] = hits
        fields["max_abs_dev"][lo:hi] = dev
        fields["exceptional"][lo:hi] = still

    return LineBatch(**fields)


def is_exceptional(sset: SteinhausSet, line: Line) -> bool:
    """True when the line's count would be ambiguous under perturbation."""
    out = _eval_arrays(sset, np.array([line.theta]), np.array([line.offset]))
    return bool(out[7][0])


def count_line(sset: SteinhausSet, line: Line) -> CountBreakdown:
    """Exact per-family crossing counts of one line; raises on exceptional.

    Invariants: total = sum(per_family) and mean_term = total - z exactly
    (z accumulates per-family differences; mean_term is defined as their
    complement, and independently equals (h/eps) * sum_k |t . nu_k|).
    """
    h, valid, total, z, mean, hits, dev, exc, pf = _eval_arrays(
        sset,
        np.array([line.theta]),
        np.array([line.offset]),
        keep_per_family=True,
    )
    if exc[0]:
        raise ExceptionalLineError(
            line.theta, line.offset, "line within tolerance of a grid-segment "
            "endpoint, parallel-coincident with a lattice line, or near a "
            "padding endpoint; jitter the offset and retry"
        )
    return CountBreakdown(
        per_family=pf[0],
        total=int(total[0]),
        mean_term=float(mean[0]),
        z=float(z[0]),
        padding_hits=int(hits[0]),
        max_abs_dev=float(dev[0]),
    )


def oracle_count(sset: SteinhausSet, line: Line) -> int:
    """Geometric reference count: strict sign-change crossings against every
    clipped grid segment.  Shares no arithmetic with count_in_interval.

    Screens every segment endpoint exactly: raises when one lies within
    EXCEPTIONAL_TOL of the query line (the caller must jitter), since a
    strict sign test is unreliable there.
    """
    segments, _ = sset.grid_segments
    if segments.shape[0] == 0:
        return 0
    nu = line.normal
    sig0 = segments[:, 0, :] @ nu - line.offset
    sig1 = segments[:, 1, :] @ nu - line.offset
    if float(np.minimum(np.abs(sig0), np.abs(sig1)).min()) <= EXCEPTIONAL_TOL:
        raise ExceptionalLineError(
            line.theta, line.offset,
            "grid-segment endpoint within tolerance of the line "
            "(caller must jitter)",
        )
    return int(np.sum(sig0 * sig1 < 0.0))


def oracle_padding_hits(sset: SteinhausSet, line: Line) -> int:
    """Strict crossings of the line with the padding segments."""
    if sset.padding_count == 0:
        return 0
    nu = line.normal
    sig0 = sset.padding[:, 0, :] @ nu - line.offset
    sig1 = sset.padding[:, 1, :] @ nu - line.offset
    return int(np.sum(sig0 * sig1 < 0.0))


def endpoint_error(sset: SteinhausSet, x, y) -> float:
    """The endpoint-error functional Z(x, y) = sum_k (N_k - (b_k - a_k)/eps).

    A pure formula on the segment [x, y] (points need not span a full
    chord); no exceptional-line screening is applied, so probes may sit
    exactly on lattice points and resolve by the half-open convention.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(z_samples(sset.n, sset.eps, x, y, sset.shifts[None, :])[0])


def z_samples(
    n: int, eps: float, x, y, shifts: np.ndarray, chunk: int = 262_144
) -> np.ndarray:
    """Z(x, y) for each row of a (trials, n) shift matrix, vectorized."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    dirs = directions(n)
    px = dirs @ x
    py = dirs @ y
    a = np.minimum(px, py)
    b = np.maximum(px, py)
    mean_k = (b - a) / eps
    out = np.empty(len(shifts))
    rows = max(1, chunk // max(n, 1))
    for lo in range(0, len(shifts), rows):
        u = shifts[lo : lo + rows]
        counts = np.ceil(b[None, :] / eps - u) - np.ceil(a[None, :] / eps - u)
        out[lo : lo + rows] = np.sum(counts - mean_k[None, :], axis=1)
    return out
