"""Randomly shifted Steinhaus line sets clipped to a convex body.

The set S(n, eps, U) is the union over families k = 0..n-1 of the parallel
line family {x : x . nu_k = eps (q + U_k), q integer} intersected with the
body, where nu_k = (cos(pi k / n), sin(pi k / n)) and the shifts U_k are iid
uniform on [0, 1) (all zero for the unshifted baseline).  An optional set of
pairwise disjoint padding segments inside an inscribed disk tops the total
length up to an exact target.

Parameter planning follows the balance that makes the Buffon discrepancy of
the shifted construction scale like Phi(L) = L^(1/5) (log L)^(2/5): reserve a
margin below the target length, take n ~ M^(2/5) (log M)^(-1/5) directions,
and couple the lattice pitch through eps = n |Omega| / M so the expected
total grid length is exactly M.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import ConvexBody, ValidationError, body_from_dict, body_to_dict
from .rng import stream

__all__ = [
    "direction",
    "directions",
    "sample_shifts",
    "SteinhausSet",
    "family_length",
    "family_length_many",
    "grid_length",
    "total_length",
    "phi",
    "BuildPlan",
    "plan_build",
    "plan_build_zero",
    "build_set",
    "padding_direction",
    "padding_disk",
    "make_padding",
    "adjust_length",
    "build_exact",
    "set_to_manifest",
    "set_from_manifest",
    "save_manifest",
    "load_manifest",
]


def direction(k: int, n: int) -> np.ndarray:
    """Unit normal of family k: angle pi * k / n."""
    if not 0 <= k < n:
        raise ValidationError("k", f"family index must satisfy 0 <= k < n, got {k}")
    a = math.pi * k / n
    return np.array([math.cos(a), math.sin(a)])


def directions(n: int) -> np.ndarray:
    """All family normals, shape (n, 2)."""
    a = np.pi * np.arange(n) / n
    return np.column_stack([np.cos(a), np.sin(a)])


def sample_shifts(n: int, seed: int) -> np.ndarray:
    """One uniform [0,1) shift per family, from a per-family labeled stream.

    Family k's shift depends only on (seed, k), so any prefix of families is
    reproducible regardless of n-order of evaluation.
    """
    return np.array([stream(seed, f"shift/{k}").random() for k in range(n)])


@dataclass(eq=False)
class SteinhausSet:
    """A built set: body, n families at pitch eps, shifts, padding segments."""

    body: ConvexBody
    n: int
    eps: float
    shifts: np.ndarray
    padding: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n", "need at least one family")
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValidationError("eps", "pitch must be positive and finite")
        self.shifts = np.asarray(self.shifts, dtype=float)
        if self.shifts.shape != (self.n,):
            raise ValidationError("shifts", f"need exactly n={self.n} shifts")
        if np.any((self.shifts < 0.0) | (self.shifts >= 1.0)):
            raise ValidationError("shifts", "shifts must lie in [0, 1)")
        self.padding = np.asarray(self.padding, dtype=float).reshape(-1, 2, 2)

    @cached_property
    def directions(self) -> np.ndarray:
        return directions(self.n)

    @cached_property
    def q_ranges(self) -> np.ndarray:
        """Per-family inclusive lattice index range, support extremes +- 1."""
        lo = np.empty(self.n, dtype=np.int64)
        hi = np.empty(self.n, dtype=np.int64)
        for k in range(self.n):
            smin, smax = self.body.support_interval(self.directions[k])
            lo[k] = math.ceil(smin / self.eps - self.shifts[k]) - 1
            hi[k] = math.floor(smax / self.eps - self.shifts[k]) + 1
        return np.column_stack([lo, hi])

    def family_offsets(self, k: int) -> np.ndarray:
        lo, hi = self.q_ranges[k]
        return self.eps * (np.arange(lo, hi + 1, dtype=float) + self.shifts[k])

    @property
    def padding_count(self) -> int:
        return int(self.padding.shape[0])

    @cached_property
    def padding_length(self) -> float:
        if self.padding_count == 0:
            return 0.0
        d = self.padding[:, 1] - self.padding[:, 0]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @cached_property
    def grid_segments(self) -> tuple[np.ndarray, np.ndarray]:
        """All clipped lattice segments: (segments (S,2,2), family index (S,)).

        Only lattice lines that actually meet the body appear.
        """
        segs = []
        fams = []
        for k in range(self.n):
            offs = self.family_offsets(k)
            theta = math.pi * k / self.n
            start, end, _, valid = self.body.chord_batch(
                np.full(offs.shape, theta), offs
            )
            if np.any(valid):
                segs.append(np.stack([start[valid], end[valid]], axis=1))
                fams.append(np.full(int(valid.sum()), k, dtype=np.int64))
        if not segs:
            return np.zeros((0, 2, 2)), np.zeros(0, dtype=np.int64)
        return np.concatenate(segs, axis=0), np.concatenate(fams)


def family_length_many(
    body: ConvexBody, nu: np.ndarray, eps: float, u_values: np.ndarray
) -> np.ndarray:
    """Total slice length of one family for each shift value in u_values."""
    u = np.asarray(u_values, dtype=float)
    smin, smax = body.support_interval(nu)
    qlo = math.floor(smin / eps) - 2
    qhi = math.ceil(smax / eps) + 1
    q = np.arange(qlo, qhi + 1, dtype=float)
    offsets = eps * (q[None, :] + u[:, None])
    g = body.slice_lengths(nu, offsets.ravel()).reshape(offsets.shape)
    return g.sum(axis=1)


def family_length(sset: SteinhausSet, k: int) -> float:
    """H^1 length of family k inside the body: sum of slice lengths."""
    g = sset.body.slice_lengths(sset.directions[k], sset.family_offsets(k))
    return float(g.sum())


def grid_length(sset: SteinhausSet) -> float:
    return float(math.fsum(family_length(sset, k) for k in range(sset.n)))


def total_length(sset: SteinhausSet) -> float:
    """Grid length plus padding length."""
    return grid_length(sset) + sset.padding_length


# -- parameter planning ------------------------------------------------------


def phi(length: float) -> float:
    """The shifted-construction discrepancy scale L^(1/5) (log L)^(2/5)."""
    if length <= 1.0:
        raise ValidationError("L", "phi(L) needs L > 1")
    return length ** 0.2 * math.log(length) ** 0.4


@dataclass(frozen=True)
class BuildPlan:
    """Planned parameters: grid aims at expected length M <= target L."""

    target_length: float
    expected_length: float
    n: int
    eps: float
    k0: float

    def __post_init__(self):
        if self.expected_length <= 0 or self.expected_length > self.target_length:
            raise ValidationError("plan", "need 0 < M <= L")
        if self.n < 1:
            raise ValidationError("plan", "need n >= 1")


def _minimal_admissible_length(margin, lo: float = math.e) -> float:
    """Smallest L with L - margin(L) > e, by bisection on a bracket."""
    hi = max(4.0 * lo, 8.0)
    while hi - margin(hi) <= math.e:
        hi *= 2.0
        if hi > 1e18:  # pragma: no cover
            return hi
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid - margin(mid) > math.e:
            b = mid
        else:
            a = mid
    return b


def _finish_plan(body: ConvexBody, target: float, m_expected: float, n: int, k0: float):
    eps = n * body.area / m_expected
    if eps > 1.0:
        raise ValidationError(
            "L",
            f"target length {target} gives lattice pitch eps={eps:.3g} > 1 for this "
            f"body; increase L or shrink the body",
        )
    return BuildPlan(
        target_length=float(target),
        expected_length=float(m_expected),
        n=n,
        eps=float(eps),
        k0=float(k0),
    )


def plan_build(body: ConvexBody, target_length: float, k0: float) -> BuildPlan:
    """Shifted-mode parameters: M = L - k0 Phi(L), n = floor(M^(2/5) / (log M)^(1/5)),
    eps = n |Omega| / M."""
    if not (math.isfinite(target_length) and target_length > 1.0):
        raise ValidationError("L", "target length must be finite and > 1")
    margin = lambda length: k0 * phi(length) if length > 1.0 else 0.0
    m_expected = target_length - margin(target_length)
    if m_expected <= math.e:
        minimal = _minimal_admissible_length(margin)
        raise ValidationError(
            "L",
            f"target length {target_length} too small for k0={k0}: expected grid "
            f"length M={m_expected:.6g} must exceed e; minimal admissible L is "
            f"about {minimal:.6g}",
        )
    n = int(m_expected**0.4 / math.log(m_expected) ** 0.2)
    return _finish_plan(body, target_length, m_expected, n, k0)


def plan_build_zero(body: ConvexBody, target_length: float, k0: float) -> BuildPlan:
    """Unshifted-baseline parameters: n = floor(L^(1/3)), margin k0 * n * diam.

    The zero-shift grid length deviates deterministically by O(n diam) from
    n |Omega| / eps, so the reserved margin scales with n rather than Phi(L).
    """
    if not (math.isfinite(target_length) and target_length > 1.0):
        raise ValidationError("L", "target length must be finite and > 1")
    # exact floor of the cube root (float powers round 100.0 down to 99.999...)
    n = int(target_length ** (1.0 / 3.0))
    while (n + 1) ** 3 <= target_length:
        n += 1
    while n > 0 and n**3 > target_length:
        n -= 1
    if n < 1:
        raise ValidationError("L", "target length too small for n = floor(L^(1/3)) >= 1")
    m_expected = target_length - k0 * n * body.diameter
    if m_expected <= math.e:
        margin = lambda length: k0 * int(length ** (1.0 / 3.0)) * body.diameter
        minimal = _minimal_admissible_length(margin)
        raise ValidationError(
            "L",
            f"target length {target_length} too small for k0={k0}: expected grid "
            f"length M={m_expected:.6g} must exceed e; minimal admissible L is "
            f"about {minimal:.6g}",
        )
    return _finish_plan(body, target_length, m_expected, n, k0)


def build_set(
    body: ConvexBody, plan: BuildPlan, seed: int, mode: str = "shifted"
) -> SteinhausSet:
    """Realize a plan: sample shifts (or zeros) — no padding yet."""
    if mode == "shifted":
        shifts = sample_shifts(plan.n, seed)
    elif mode == "zero":
        shifts = np.zeros(plan.n)
    else:
        raise ValidationError("mode", f"expected 'shifted' or 'zero', got {mode!r}")
    return SteinhausSet(body=body, n=plan.n, eps=plan.eps, shifts=shifts, seed=seed)


# -- exact-length padding ---------------------------------------------------


def padding_direction(n: int) -> np.ndarray:
    """Unit segment direction at angle pi (2n + 3) / (4n).

    An odd multiple of pi/(4n) is never parallel to a family normal nor to a
    family's lattice lines (those all sit at even multiples), for every n.
    """
    a = math.pi * (2 * n + 3) / (4 * n)
    return np.array([math.cos(a), math.sin(a)])


def padding_disk(body: ConvexBody) -> tuple[np.ndarray, float]:
    """Disk that receives padding: largest inscribed disk at the Chebyshev
    center for polygons, the concentric half-radius disk for a disk body."""
    if body.kind == "disk":
        return body.center.copy(), 0.5 * body.radius
    return body.inscribed_disk


def make_padding(body: ConvexBody, n: int, delta: float) -> np.ndarray:
    """Pairwise disjoint parallel segments of total length exactly delta.

    Segments of length rho (the padding-disk radius), the last one shortened,
    stacked at spacing rho / ceil(delta / rho) inside the padding disk.
    """
    if delta <= 0.0:
        return np.zeros((0, 2, 2))
    center, rho = padding_disk(body)
    count = math.ceil(delta / rho)
    spacing = rho / count
    if spacing < 1e-9 * rho:
        raise ValidationError(
            "delta",
            f"padding length {delta} needs {count} segments in a disk of radius "
            f"{rho:.3g}; spacing would collapse below float resolution",
        )
    t = padding_direction(n)
    normal = np.array([-t[1], t[0]])
    lengths = np.full(count, rho)
    lengths[-1] = delta - rho * (count - 1)
    offsets = (np.arange(count) - 0.5 * (count - 1)) * spacing
    centers = center[None, :] + offsets[:, None] * normal[None, :]
    half = 0.5 * lengths[:, None] * t[None, :]
    segments = np.stack([centers - half, centers + half], axis=1)

    cos_norm = directions(n) @ t
    cos_tang = directions(n) @ normal
    if np.any(cos_norm == 0.0) or np.any(cos_tang == 0.0):  # pragma: no cover
        raise AssertionError(
            f"padding direction parallel to a family direction at n={n}"
        )
    return segments


def adjust_length(sset: SteinhausSet, target_length: float) -> SteinhausSet:
    """Top the set up to exactly target_length with padding segments.

    Replaces any existing padding.  Errors if the grid alone already exceeds
    the target beyond tolerance (rebuild with a larger margin instead).
    """
    base = grid_length(sset)
    delta = target_length - base
    tol = 1e-9 * max(abs(target_length), 1.0)
    if delta < -tol:
        raise ValidationError(
            "target_length",
            f"grid length {base:.6g} already exceeds target {target_length:.6g}; "
            f"rebuild with a larger margin (k0)",
        )
    padding = make_padding(sset.body, sset.n, delta) if delta > tol else np.zeros((0, 2, 2))
    return SteinhausSet(
        body=sset.body,
        n=sset.n,
        eps=sset.eps,
        shifts=sset.shifts.copy(),
        padding=padding,
        seed=sset.seed,
    )


def build_exact(
    body: ConvexBody,
    target_length: float,
    mode: str,
    seed: int,
    k0: float = 0.5,
    max_retries: int = 8,
) -> tuple[SteinhausSet, BuildPlan]:
    """Plan, build, and pad to the exact target length.

    If the realized grid overshoots the target (the reserved margin was too
    small for the sampled shifts), the margin coefficient doubles and the
    build retries; after max_retries doublings the last error propagates.
    """
    planner = plan_build if mode == "shifted" else plan_build_zero
    if mode not in ("shifted", "zero"):
        raise ValidationError("mode", f"expected 'shifted' or 'zero', got {mode!r}")
    k = k0
    last_exc: Exception = AssertionError("unreachable")
    for _ in range(max_retries + 1):
        plan = planner(body, target_length, k)
        sset = build_set(body, plan, seed, mode)
        try:
            return adjust_length(sset, target_length), plan
        except ValidationError as exc:
            last_exc = exc
            k = 2.0 * k if k > 0 else 0.25
    raise ValidationError(
        "k0",
        f"could not reach target length {target_length} within {max_retries} margin "
        f"doublings (last: {last_exc})",
    )


# -- manifests ---------------------------------------------------------------


def set_to_manifest(sset: SteinhausSet) -> dict:
    return {
        "body": body_to_dict(sset.body),
        "n": sset.n,
        "eps": sset.eps,
        "seed": sset.seed,
        "shifts": [float(u) for u in sset.shifts],
        "padding": [
            [[float(a), float(b)] for a, b in seg] for seg in sset.padding
        ],
        "total_length": total_length(sset),
    }


_MANIFEST_KEYS = {"body", "n", "eps", "seed", "shifts", "padding", "total_length"}


def set_from_manifest(manifest: dict) -> SteinhausSet:
    if not isinstance(manifest, dict):
        raise ValidationError("manifest", "must be a JSON object")
    extra = set(manifest) - _MANIFEST_KEYS
    missing = _MANIFEST_KEYS - set(manifest)
    if extra:
        raise ValidationError("manifest", f"unknown fields {sorted(extra)}")
    if missing:
        raise ValidationError("manifest", f"missing fields {sorted(missing)}")
    sset = SteinhausSet(
        body=body_from_dict(manifest["body"]),
        n=int(manifest["n"]),
        eps=float(manifest["eps"]),
        shifts=np.asarray(manifest["shifts"], dtype=float),
        padding=np.asarray(manifest["padding"], dtype=float).reshape(-1, 2, 2),
        seed=manifest["seed"],
    )
    stored = float(manifest["total_length"])
    actual = total_length(sset)
    if abs(actual - stored) > 1e-9 * max(abs(stored), 1.0):
        raise ValidationError(
            "total_length",
            f"manifest states {stored!r} but the set measures {actual!r}",
        )
    return sset


def save_manifest(sset: SteinhausSet, path) -> None:
    Path(path).write_text(
        json.dumps(set_to_manifest(sset), sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_manifest(path) -> SteinhausSet:
    try:
        manifest = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("manifest", f"invalid JSON in {path}: {exc}") from exc
    return set_from_manifest(manifest)
