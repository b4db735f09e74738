"""Convex bodies, lines, chords, and slice lengths in the plane.

A line is parameterized by its unit normal angle ``theta`` in [0, pi) and
signed offset ``p``: the point set {x : x . nu(theta) = p} with
nu(theta) = (cos theta, sin theta).  The pairs (theta + pi, -p) and
(theta, p) describe the same line; constructors normalize to theta in
[0, pi).

A convex body is either a strictly convex polygon with counter-clockwise
vertices or a disk.  All chord and slice computations clip against the
closed body; chords shorter than ``TANGENCY_CUTOFF * diameter`` are treated
as absent (tangency).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "TANGENCY_CUTOFF",
    "ValidationError",
    "Line",
    "Chord",
    "ConvexBody",
    "unit_square",
    "body_from_dict",
    "body_to_dict",
    "load_body",
    "dump_body",
]

# Chords shorter than this fraction of the diameter count as tangencies.
TANGENCY_CUTOFF = 1e-12


class ValidationError(ValueError):
    """Invalid user-supplied data; carries the offending field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class Line:
    """An unoriented line with normal angle in [0, pi) and signed offset."""

    theta: float
    offset: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.offset)):
            raise ValidationError("line", "theta and offset must be finite")
        k = math.floor(self.theta / math.pi)
        if k != 0:
            theta = self.theta - k * math.pi
            offset = self.offset if k % 2 == 0 else -self.offset
            if theta >= math.pi:  # guard against rounding at the seam
                theta -= math.pi
                offset = -offset
            object.__setattr__(self, "theta", theta)
            object.__setattr__(self, "offset", offset)

    @property
    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-math.sin(self.theta), math.cos(self.theta)])


@dataclass(frozen=True, eq=False)
class Chord:
    """The closed segment (line intersect body), with precomputed length."""

    start: np.ndarray
    end: np.ndarray

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))


def _as_vertex_array(vertices) -> np.ndarray:
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValidationError("polygon", "need an (m, 2) array with m >= 3")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("polygon", "vertices must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """A strictly convex polygon (CCW vertices) or a disk."""

    kind: str
    vertices: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def polygon(vertices) -> "ConvexBody":
        arr = _as_vertex_array(vertices)
        nxt = np.roll(arr, -1, axis=0)
        edges = nxt - arr
        scale2 = float(np.max(np.abs(arr))) ** 2 + 1.0
        nxt_edges = np.roll(edges, -1, axis=0)
        crosses = edges[:, 0] * nxt_edges[:, 1] - edges[:, 1] * nxt_edges[:, 0]
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) == 0.0):
            raise ValidationError("polygon", "repeated consecutive vertices")
        if np.any(np.abs(crosses) <= 1e-12 * scale2):
            i = int(np.argmin(np.abs(crosses)))
            raise ValidationError(
                "polygon", f"collinear triple at vertex index {i} (not strictly convex)"
            )
        if np.any(crosses < 0.0):
            i = int(np.argmax(crosses < 0.0))
            raise ValidationError(
                "polygon",
                f"vertices must wind counter-clockwise and be strictly convex "
                f"(reflex turn at index {i})",
            )
        return ConvexBody(kind="polygon", vertices=arr)

    @staticmethod
    def disk(center, radius: float) -> "ConvexBody":
        c = np.asarray(center, dtype=float)
        if c.shape != (2,) or not np.all(np.isfinite(c)):
            raise ValidationError("disk.center", "need a finite point [x, y]")
        if not (math.isfinite(radius) and radius > 0.0):
            raise ValidationError("disk.radius", "radius must be positive and finite")
        return ConvexBody(kind="disk", center=c, radius=float(radius))

    # -- cached scalar properties -----------------------------------------

    @cached_property
    def area(self) -> float:
        if self.kind == "disk":
            return math.pi * self.radius**2
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))

    @cached_property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self.radius
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return math.sqrt(float(np.max(d2)))

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        if self.kind == "disk":
            cx, cy = self.center
            r = self.radius
            return (cx - r, cy - r, cx + r, cy + r)
        v = self.vertices
        return (
            float(v[:, 0].min()),
            float(v[:, 1].min()),
            float(v[:, 0].max()),
            float(v[:, 1].max()),
        )

    @cached_property
    def centroid(self) -> np.ndarray:
        if self.kind == "disk":
            return self.center.copy()
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        w = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        return np.asarray((v + nxt).T @ w / (6.0 * self.area))

    @cached_property
    def _edge_data(self):
        """Per-edge start point, edge vector, and length (polygon only)."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        return v, e, np.hypot(e[:, 0], e[:, 1])

    # -- support and membership -------------------------------------------

    def support_interval(self, nu) -> tuple[float, float]:
        """(min, max) of x . nu over the body, for a unit direction nu."""
        nu = np.asarray(nu, dtype=float)
        if self.kind == "disk":
            c = float(self.center @ nu)
            return (c - self.radius, c + self.radius)
        proj = self.vertices @ nu
        return (float(proj.min()), float(proj.max()))

    def offset_extent(self, theta: float) -> tuple[float, float]:
        """Offset range of lines at normal angle theta that can meet the body."""
        return self.support_interval((math.cos(theta), math.sin(theta)))

    def contains(self, point, tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        if self.kind == "disk":
            return float(np.hypot(*(p - self.center))) <= self.radius + tol * self.diameter
        v, e, elen = self._edge_data
        rel = p[None, :] - v
        cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
        return bool(np.all(cross >= -tol * self.diameter * elen))

    def contains_many(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Vectorized membership test for an (N, 2) array of points."""
        pts = np.asarray(points, dtype=float)
        if self.kind == "disk":
            d = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
            return d <= self.radius + tol * self.diameter
        v, e, elen = self._edge_data
        rel = pts[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return np.all(cross >= -tol * self.diameter * elen[None, :], axis=1)

    def offset_extents(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized offset_extent over an array of normal angles."""
        th = np.asarray(thetas, dtype=float)
        nus = np.column_stack([np.cos(th), np.sin(th)])
        if self.kind == "disk":
            d = nus @ self.center
            return d - self.radius, d + self.radius
        proj = nus @ self.vertices.T
        return proj.min(axis=1), proj.max(axis=1)

    # -- chords -------------------------------------------------------------

    def chord_batch(self, thetas: np.ndarray, offsets: np.ndarray):
        """Clip many lines at once.

        Returns (start (N,2), end (N,2), length (N,), valid (N,)); entries of
        invalid lines are zero.  A line is invalid when it misses the body or
        meets it in a chord shorter than the tangency cutoff.
        """
        thetas = np.asarray(thetas, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        nu = np.column_stack([np.cos(thetas), np.sin(thetas)])
        tangent = np.column_stack([-nu[:, 1], nu[:, 0]])
        base = offsets[:, None] * nu
        cutoff = TANGENCY_CUTOFF * self.diameter

        if self.kind == "disk":
            d = nu @ self.center - offsets
            h2 = self.radius**2 - d * d
            valid = h2 > (0.5 * cutoff) ** 2
            half = np.sqrt(np.where(valid, h2, 0.0))
            foot = self.center[None, :] - d[:, None] * nu
            start = foot - half[:, None] * tangent
            end = foot + half[:, None] * tangent
            length = 2.0 * half
        else:
            v, e, elen = self._edge_data
            # constraint per edge: cross(e, base + t*tangent - v) >= 0
            rel = base[:, None, :] - v[None, :, :]  # (N, E, 2)
            alpha = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
            beta = e[:, 0][None, :] * tangent[:, 1][:, None] - e[:, 1][None, :] * tangent[:, 0][:, None]
            tiny = 1e-14 * elen[None, :]
            pos = beta > tiny
            neg = beta < -tiny
            safe = np.where(pos | neg, beta, 1.0)
            bound = -alpha / safe
            t_lo = np.max(np.where(pos, bound, -np.inf), axis=1)
            t_hi = np.min(np.where(neg, bound, np.inf), axis=1)
            feasible = ~np.any(~(pos | neg) & (alpha < -1e-12 * elen[None, :] * self.diameter), axis=1)
            length = t_hi - t_lo
            valid = feasible & np.isfinite(length) & (length > cutoff)
            t_lo = np.where(valid, t_lo, 0.0)
            length = np.where(valid, length, 0.0)
            start = base + t_lo[:, None] * tangent
            end = start + length[:, None] * tangent

        start = np.where(valid[:, None], start, 0.0)
        end = np.where(valid[:, None], end, 0.0)
        return start, end, np.where(valid, length, 0.0), valid

    def chord(self, line: Line) -> Optional[Chord]:
        """The chord cut by ``line``, or None for a miss/tangency."""
        start, end, _, valid = self.chord_batch(
            np.array([line.theta]), np.array([line.offset])
        )
        if not valid[0]:
            return None
        return Chord(start=start[0], end=end[0])

    # -- slices --------------------------------------------------------------

    def slice_lengths(self, nu, svals: np.ndarray) -> np.ndarray:
        """Lengths of the slices {x . nu = s} intersect body, vectorized in s.

        Handles polygon edges lying inside a slice line (the slice then has
        the full edge length, which matters for unshifted grids aligned with
        the boundary).
        """
        nu = np.asarray(nu, dtype=float)
        norm = math.hypot(nu[0], nu[1])
        if norm == 0.0 or not math.isfinite(norm):
            raise ValidationError("nu", "direction must be a nonzero finite vector")
        nu = nu / norm
        s = np.asarray(svals, dtype=float)

        if self.kind == "disk":
            h2 = self.radius**2 - (s - float(self.center @ nu)) ** 2
            return 2.0 * np.sqrt(np.maximum(h2, 0.0))

        v = self.vertices
        tang = np.array([-nu[1], nu[0]])
        z = v @ nu
        w = v @ tang
        zj = np.roll(z, -1)
        wj = np.roll(w, -1)
        lo = np.minimum(z, zj)[:, None]
        hi = np.maximum(z, zj)[:, None]
        sb = s[None, :]
        crossed = (sb >= lo) & (sb <= hi)
        dz = zj - z
        degenerate = dz == 0.0
        t = (sb - z[:, None]) / np.where(degenerate, 1.0, dz)[:, None]
        wcut = w[:, None] + t * (wj - w)[:, None]
        cand_a = np.where(degenerate[:, None], w[:, None], wcut)
        cand_b = np.where(degenerate[:, None], wj[:, None], wcut)
        wmin = np.minimum(
            np.where(crossed, cand_a, np.inf), np.where(crossed, cand_b, np.inf)
        ).min(axis=0)
        wmax = np.maximum(
            np.where(crossed, cand_a, -np.inf), np.where(crossed, cand_b, -np.inf)
        ).max(axis=0)
        return np.where(np.any(crossed, axis=0), np.maximum(wmax - wmin, 0.0), 0.0)

    def slice_length(self, nu, s: float) -> float:
        return float(self.slice_lengths(nu, np.array([s]))[0])

    # -- inscribed disk ------------------------------------------------------

    @cached_property
    def inscribed_disk(self) -> tuple[np.ndarray, float]:
        """(center, radius) of the largest disk inside the body.

        For a polygon this is the Chebyshev-center linear program; for a disk
        it is the disk itself.
        """
        if self.kind == "disk":
            return self.center.copy(), self.radius
        from scipy.optimize import linprog

        v, e, elen = self._edge_data
        outward = np.column_stack([e[:, 1], -e[:, 0]]) / elen[:, None]
        b = np.sum(outward * v, axis=1)
        a_ub = np.column_stack([outward, np.ones(len(v))])
        res = linprog(
            c=[0.0, 0.0, -1.0],
            A_ub=a_ub,
            b_ub=b,
            bounds=[(None, None), (None, None), (0.0, None)],
            method="highs",
        )
        if not res.success:  # pragma: no cover - LP on a valid polygon succeeds
            raise RuntimeError(f"Chebyshev center LP failed: {res.message}")
        return np.array(res.x[:2]), float(res.x[2])


def unit_square() -> ConvexBody:
    return ConvexBody.polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


# -- body specification files ---------------------------------------------


def body_from_dict(spec: dict) -> ConvexBody:
    if not isinstance(spec, dict):
        raise ValidationError("body", "specification must be a JSON object")
    keys = set(spec)
    if keys == {"polygon"}:
        return ConvexBody.polygon(spec["polygon"])
    if keys == {"disk"}:
        disk = spec["disk"]
        if not isinstance(disk, dict) or set(disk) != {"center", "radius"}:
            raise ValidationError("disk", 'need exactly {"center": [x, y], "radius": r}')
        return ConvexBody.disk(disk["center"], disk["radius"])
    raise ValidationError(
        "body", f'need exactly one of "polygon" or "disk", got keys {sorted(keys)}'
    )


def body_to_dict(body: ConvexBody) -> dict:
    if body.kind == "disk":
        return {"disk": {"center": [float(x) for x in body.center], "radius": body.radius}}
    return {"polygon": [[float(x), float(y)] for x, y in body.vertices]}


def load_body(path) -> ConvexBody:
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("body", f"invalid JSON in {path}: {exc}") from exc
    return body_from_dict(spec)


def dump_body(body: ConvexBody, path) -> None:
    Path(path).write_text(json.dumps(body_to_dict(body), sort_keys=True) + "\n")
