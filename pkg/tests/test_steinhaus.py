"""Construction tests: directions, shifts, lengths, planning, padding, manifests.

Length oracles are geometric: the grid length must match the sum of chord
lengths of every clipped lattice line (an independent code path from the
slice-profile summation used by family_length).
"""

import json
import math

import numpy as np
import pytest

from buffon.geometry import ConvexBody, ValidationError, unit_square
from buffon import steinhaus as sh

from test_geometry import random_polygon


def test_direction_exact_formula():
    assert np.allclose(sh.direction(0, 7), [1.0, 0.0])
    d = sh.direction(2, 4)
    assert d[0] == pytest.approx(0.0, abs=1e-15)
    assert d[1] == pytest.approx(1.0)
    n = 12
    for k in range(n):
        a = math.pi * k / n
        assert np.allclose(sh.direction(k, n), [math.cos(a), math.sin(a)])
    assert np.allclose(sh.directions(n), [sh.direction(k, n) for k in range(n)])
    with pytest.raises(ValidationError):
        sh.direction(7, 7)


def test_sample_shifts_deterministic_and_uniform():
    a = sh.sample_shifts(3, 99)
    b = sh.sample_shifts(3, 99)
    assert np.array_equal(a, b)
    c = sh.sample_shifts(3, 100)
    assert not np.array_equal(a, c)
    # prefix stability: family k's shift does not depend on n
    long = sh.sample_shifts(10, 99)
    assert np.array_equal(long[:3], a)
    big = sh.sample_shifts(100_000, 7)
    assert np.all((big >= 0.0) & (big < 1.0))
    assert abs(big.mean() - 0.5) < 0.01


def test_family_length_unit_square_midshift():
    """Four interior slices of the unit square: exactly |Omega| / eps."""
    sset = sh.SteinhausSet(
        body=unit_square(), n=1, eps=0.25, shifts=np.array([0.5])
    )
    assert sh.family_length(sset, 0) == pytest.approx(4.0, abs=1e-12)


def test_family_length_unit_square_zero_shift_counts_boundary():
    """With U=0 the lattice lines x=0 and x=1 lie in the boundary: 5 slices."""
    sset = sh.SteinhausSet(
        body=unit_square(), n=1, eps=0.25, shifts=np.array([0.0])
    )
    assert sh.family_length(sset, 0) == pytest.approx(5.0, abs=1e-12)
    # deviation 1 respects the two-sided variation bound 2 * diam
    assert abs(5.0 - 1.0 / 0.25) <= 2.0 * sset.body.diameter


def test_family_length_matches_chord_clipping_oracle():
    rng = np.random.default_rng(11)
    bodies = [random_polygon(rng) for _ in range(3)]
    bodies.append(ConvexBody.disk((0.1, 0.4), 0.9))
    for body in bodies:
        n = int(rng.integers(1, 9))
        eps = float(rng.uniform(0.05, 0.3))
        sset = sh.SteinhausSet(
            body=body, n=n, eps=eps, shifts=rng.uniform(0, 1, size=n)
        )
        segments, fams = sset.grid_segments
        d = segments[:, 1] - segments[:, 0]
        seg_lengths = np.hypot(d[:, 0], d[:, 1])
        for k in range(n):
            want = float(seg_lengths[fams == k].sum())
            assert sh.family_length(sset, k) == pytest.approx(
                want, rel=1e-9, abs=1e-9
            )
        assert sh.grid_length(sset) == pytest.approx(
            float(seg_lengths.sum()), rel=1e-9
        )


def test_family_length_mean_and_deviation_bound():
    """E_U[family length] = |Omega| / eps; |deviation| <= 2 diam always."""
    rng = np.random.default_rng(12)
    for body in [unit_square(), ConvexBody.disk((0.0, 0.0), 1.0), random_polygon(rng)]:
        eps = 0.08
        nu = sh.direction(3, 7)
        u = rng.uniform(0, 1, size=4000)
        lengths = sh.family_length_many(body, nu, eps, u)
        expected = body.area / eps
        dev = lengths - expected
        assert np.max(np.abs(dev)) <= 2.0 * body.diameter + 1e-9
        sd = 2.0 * body.diameter / math.sqrt(len(u))
        assert abs(float(lengths.mean()) - expected) < 6.0 * sd


def test_grid_segments_lie_on_their_lattice_lines():
    rng = np.random.default_rng(13)
    body = random_polygon(rng)
    sset = sh.SteinhausSet(
        body=body, n=5, eps=0.11, shifts=rng.uniform(0, 1, size=5)
    )
    segments, fams = sset.grid_segments
    for seg, k in zip(segments, fams):
        nu = sset.directions[k]
        for pt in seg:
            v = float(pt @ nu) / sset.eps - sset.shifts[k]
            assert abs(v - round(v)) < 1e-9
            assert body.contains(pt, tol=1e-9)


def test_phi_golden_value():
    want = 10.0**1.2 * math.log(1e6) ** 0.4
    assert sh.phi(1e6) == pytest.approx(want, rel=1e-14)
    assert sh.phi(1e6) == pytest.approx(45.3083, rel=1e-4)


def test_plan_build_golden_n_for_unit_area():
    plan = sh.plan_build(unit_square(), 1e6, k0=0.0)
    assert plan.expected_length == 1e6
    assert plan.n == 148  # floor(1e6^(2/5) / (ln 1e6)^(1/5))
    assert plan.eps == pytest.approx(148 / 1e6, rel=1e-12)
    # the coupling n / eps = M / |Omega| is exact by construction
    assert plan.n * unit_square().area / plan.eps == pytest.approx(
        plan.expected_length, rel=1e-12
    )


def test_plan_build_margin_and_errors():
    body = unit_square()
    plan = sh.plan_build(body, 1e6, k0=2.0)
    assert plan.expected_length == pytest.approx(1e6 - 2.0 * sh.phi(1e6))
    with pytest.raises(ValidationError, match="minimal admissible"):
        sh.plan_build(body, 2.5, k0=3.0)
    big = ConvexBody.polygon([(0, 0), (10, 0), (10, 10), (0, 10)])
    with pytest.raises(ValidationError, match="eps"):
        sh.plan_build(big, 30.0, k0=0.0)


def test_plan_build_zero_exact_cube_root():
    body = unit_square()
    plan = sh.plan_build_zero(body, 1e6, k0=0.0)
    assert plan.n == 100  # floor((10^6)^(1/3)) exactly, despite float cube roots
    assert sh.plan_build_zero(body, 999.0, k0=0.0).n == 9
    assert sh.plan_build_zero(body, 1000.0, k0=0.0).n == 10


def test_padding_direction_never_parallel_to_families():
    for n in range(1, 80):
        t = sh.padding_direction(n)
        dirs = sh.directions(n)
        tangents = np.column_stack([-dirs[:, 1], dirs[:, 0]])
        assert np.min(np.abs(dirs @ t)) > 1e-12, n
        assert np.min(np.abs(tangents @ t)) > 1e-12, n


def test_make_padding_lengths_and_disjointness():
    body = ConvexBody.polygon([(0, 0), (2, 0), (2, 2), (0, 2)])  # rho = 1
    segs = sh.make_padding(body, n=4, delta=1.7)
    assert segs.shape[0] == 2
    d = segs[:, 1] - segs[:, 0]
    lengths = np.hypot(d[:, 0], d[:, 1])
    assert sorted(lengths) == pytest.approx([0.7, 1.0])
    assert float(lengths.sum()) == pytest.approx(1.7, abs=1e-12)
    # pairwise disjoint: parallel segments at distinct offsets
    t = sh.padding_direction(4)
    normal = np.array([-t[1], t[0]])
    offs = segs[:, 0] @ normal
    assert len(np.unique(np.round(offs, 12))) == len(offs)
    center, rho = sh.padding_disk(body)
    for seg in segs:
        for pt in seg:
            assert np.hypot(*(pt - center)) <= rho + 1e-12
    assert sh.make_padding(body, 4, 0.0).shape == (0, 2, 2)
    # segment count bound: ceil(delta / rho) + 1
    for delta in [0.3, 1.0, 2.45, 7.2]:
        got = sh.make_padding(body, 9, delta)
        assert got.shape[0] <= math.ceil(delta / rho) + 1
        dd = got[:, 1] - got[:, 0]
        assert np.hypot(dd[:, 0], dd[:, 1]).sum() == pytest.approx(delta, abs=1e-9)


def test_padding_disk_for_disk_body_is_half_radius():
    body = ConvexBody.disk((2.0, 1.0), 0.8)
    center, rho = sh.padding_disk(body)
    assert np.allclose(center, [2.0, 1.0])
    assert rho == pytest.approx(0.4)


def test_adjust_length_exact_and_errors():
    rng = np.random.default_rng(14)
    body = unit_square()
    sset = sh.SteinhausSet(body=body, n=8, eps=0.07, shifts=rng.uniform(0, 1, 8))
    base = sh.grid_length(sset)
    target = base + 3.21
    adjusted = sh.adjust_length(sset, target)
    assert sh.total_length(adjusted) == pytest.approx(target, rel=1e-12)
    assert abs(sh.total_length(adjusted) - target) <= 1e-9 * target
    # delta = 0: unchanged geometry, no padding
    same = sh.adjust_length(sset, base)
    assert same.padding_count == 0
    assert sh.total_length(same) == pytest.approx(base, rel=1e-12)
    with pytest.raises(ValidationError, match="exceeds target"):
        sh.adjust_length(sset, base - 1.0)


def test_build_exact_hits_target_both_modes():
    body = unit_square()
    for mode in ("shifted", "zero"):
        for L in (2000.0, 35000.0):
            sset, plan = sh.build_exact(body, L, mode, seed=5)
            actual = sh.total_length(sset)
            assert abs(actual - L) <= 1e-9 * L, (mode, L)
            assert plan.expected_length <= L
            if mode == "zero":
                assert np.all(sset.shifts == 0.0)
            # padding segment count stays within the layout bound
            _, rho = sh.padding_disk(body)
            delta = actual - sh.grid_length(sset)
            assert sset.padding_count <= math.ceil(max(delta, 0.0) / rho) + 1


def test_build_exact_retries_with_tiny_margin():
    """A margin too small for zero-shift overshoot forces k0 doubling."""
    body = unit_square()
    sset, plan = sh.build_exact(body, 5000.0, "zero", seed=1, k0=0.004)
    assert abs(sh.total_length(sset) - 5000.0) <= 1e-9 * 5000.0
    assert plan.k0 > 0.004  # at least one doubling happened
    # an unrecoverable margin within the retry budget errors out, per contract
    with pytest.raises(ValidationError, match="k0"):
        sh.build_exact(body, 5000.0, "zero", seed=1, k0=1e-9, max_retries=3)


def test_manifest_round_trip_and_strictness(tmp_path):
    body = unit_square()
    sset, _ = sh.build_exact(body, 1500.0, "shifted", seed=42)
    path = tmp_path / "set.json"
    sh.save_manifest(sset, path)
    again = sh.load_manifest(path)
    assert again.n == sset.n
    assert again.eps == sset.eps
    assert np.array_equal(again.shifts, sset.shifts)
    assert np.array_equal(again.padding, sset.padding)
    assert sh.total_length(again) == pytest.approx(sh.total_length(sset), rel=1e-12)
    # byte-identical re-serialization
    path2 = tmp_path / "set2.json"
    sh.save_manifest(again, path2)
    assert path.read_bytes() == path2.read_bytes()

    manifest = json.loads(path.read_text())
    manifest["flavor"] = "ranch"
    with pytest.raises(ValidationError, match="unknown"):
        sh.set_from_manifest(manifest)
    del manifest["flavor"]
    del manifest["eps"]
    with pytest.raises(ValidationError, match="missing"):
        sh.set_from_manifest(manifest)
    manifest = json.loads(path.read_text())
    manifest["total_length"] = manifest["total_length"] * 1.001
    with pytest.raises(ValidationError, match="total_length"):
        sh.set_from_manifest(manifest)


def test_set_validation():
    body = unit_square()
    with pytest.raises(ValidationError, match="shifts"):
        sh.SteinhausSet(body=body, n=3, eps=0.1, shifts=np.array([0.1, 0.2]))
    with pytest.raises(ValidationError, match="shifts"):
        sh.SteinhausSet(body=body, n=2, eps=0.1, shifts=np.array([0.1, 1.0]))
    with pytest.raises(ValidationError, match="eps"):
        sh.SteinhausSet(body=body, n=1, eps=0.0, shifts=np.array([0.1]))
    with pytest.raises(ValidationError, match="n"):
        sh.SteinhausSet(body=body, n=0, eps=0.1, shifts=np.zeros(0))
