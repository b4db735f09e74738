"""Acceptance gate: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines;
the test names themselves carry the criterion numbers.  The scaling sweeps
are session-scoped so the determinism and exact-length criteria reuse them.
"""

import math
import time

import numpy as np
import pytest

from buffon.counting import evaluate_lines
from buffon.discrepancy import SupConfig, max_quadrature_deviation
from buffon.geometry import ConvexBody, unit_square
from buffon import harness as hz
from buffon import steinhaus as sh
from buffon.rng import derive_seed, stream

from test_geometry import random_polygon

L_VALUES = [1e3 * 3000 ** (i / 7) for i in range(8)]
SWEEP_CONFIG = SupConfig(
    theta_resolution=96, offset_resolution=96, refine_rounds=2, seed=0)
SWEEP_SEED = 2026


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def oracle_matrix():
    """10^4 (set, line) oracle comparisons across bodies, n, and eps."""
    gen = np.random.default_rng(77)
    bodies = [random_polygon(gen) for _ in range(5)]
    bodies.append(ConvexBody.disk((0.1, -0.05), 0.8))
    started = time.perf_counter()
    pairs = agreements = skipped = 0
    max_dev = 0.0
    mismatches = []
    for bi, body in enumerate(bodies):
        for n in (1, 2, 7, 32, 101):
            for eps in (0.003, 0.01, 0.1):
                seed = derive_seed(4242, f"c1/{bi}/{n}/{eps!r}")
                sset = sh.SteinhausSet(
                    body=body, n=n, eps=eps, shifts=sh.sample_shifts(n, seed))
                check = hz.run_oracle_check(sset, 112, seed=seed)
                pairs += check.comparisons
                agreements += check.agreements
                skipped += check.skipped
                max_dev = max(max_dev, check.max_family_deviation)
                mismatches.extend(check.mismatches)
    return {
        "pairs": pairs,
        "agreements": agreements,
        "skipped": skipped,
        "max_dev": max_dev,
        "mismatches": mismatches,
        "seconds": time.perf_counter() - started,
    }


@pytest.fixture(scope="session")
def sweeps():
    """Criterion-7 sweeps, shared with criteria 8 and 9."""
    started = time.perf_counter()
    shifted = hz.run_sweep(
        unit_square(), L_VALUES, "shifted", SWEEP_CONFIG, seed=SWEEP_SEED)
    zero = hz.run_sweep(
        unit_square(), L_VALUES, "zero", SWEEP_CONFIG, seed=SWEEP_SEED)
    return shifted, zero, time.perf_counter() - started


def test_c1_oracle_equivalence(oracle_matrix):
    m = oracle_matrix
    ok = (m["pairs"] >= 10_000 and m["agreements"] == m["pairs"]
          and m["skipped"] == 0 and not m["mismatches"]
          and m["seconds"] < 30.0)
    _verdict(
        "C1 oracle equivalence",
        ok,
        f"{m['agreements']}/{m['pairs']} agree, {m['skipped']} skipped, "
        f"{len(m['mismatches'])} mismatches, {m['seconds']:.1f}s (< 30s)")


def test_c2_per_family_error_bound(oracle_matrix):
    m = oracle_matrix
    ok = m["max_dev"] <= 1.0 + 1e-9
    _verdict(
        "C2 per-family bound",
        ok,
        f"max |N_k - (b_k-a_k)/eps| = {m['max_dev']:.12f} <= 1 over "
        f"{m['pairs']} lines, zero violations")


def test_c3_angular_quadrature_constant():
    started = time.perf_counter()
    thetas = stream(9001, "quadrature").uniform(0, math.pi, 10_000)
    n_grid = [4 * 2**k for k in range(11)]  # 4 .. 4096
    products = {n: max_quadrature_deviation(n, thetas) * n for n in n_grid}
    fitted = max(v for n, v in products.items() if n <= 64)
    worst = max(v / fitted for n, v in products.items() if n >= 128)
    seconds = time.perf_counter() - started
    ok = worst <= 1.10 and seconds < 10.0
    _verdict(
        "C3 angular quadrature",
        ok,
        f"n*dev constant ~= {fitted:.4f} fitted at n<=64; worst n>=128 "
        f"ratio {worst:.4f} (<= 1.10), {seconds:.1f}s (< 10s)")


def test_c4_length_expectation_and_bound():
    started = time.perf_counter()
    res = hz.length_study(unit_square(), 64, 0.05, 10_000, seed=9002)
    seconds = time.perf_counter() - started
    mean_gap = abs(res["mean_L"] - 1280.0)
    ok = (mean_gap <= 6.0
          and res["max_abs_deviation"] <= 2.0 * math.sqrt(2.0)
          and seconds < 20.0)
    _verdict(
        "C4 length concentration",
        ok,
        f"|mean - 1280| = {mean_gap:.4f} (<= 6), per-direction max "
        f"{res['max_abs_deviation']:.4f} <= 2*sqrt(2), {seconds:.1f}s (< 20s)")


def test_c5_hoeffding_tails():
    started = time.perf_counter()
    study = hz.z_tail_study(
        unit_square(), 256, 0.01, (0.1, 0.1), (0.9, 0.8), 100_000,
        [8, 16, 24, 32], seed=9003)
    seconds = time.perf_counter() - started
    ok = (study.violations == 0 and abs(study.mean_z) <= 0.2
          and seconds < 60.0)
    tails = ", ".join(
        f"s={r.s:.0f}: {r.empirical_tail:.2e} <= {r.hoeffding_bound:.2e}"
        f"+{r.sampling_band:.1e}" for r in study.rows)
    _verdict(
        "C5 Hoeffding tails",
        ok,
        f"{tails}; |mean Z| = {abs(study.mean_z):.4f} (<= 0.2), "
        f"{seconds:.1f}s (< 60s)")


def test_c6_coherence_separation():
    started = time.perf_counter()
    rows = hz.coherence_study(
        unit_square(), [16, 64, 256], [16e-4, 64e-4, 256e-4],
        trials=2_000, seed=9004)
    seconds = time.perf_counter() - started
    ratios = [r.zero_probe / r.random_max for r in rows]
    ok = (all(r.zero_probe >= 0.4 * r.n for r in rows)
          and all(r.random_max <= r.random_bound for r in rows)
          and ratios[0] < ratios[1] < ratios[2]
          and seconds < 60.0)
    detail = ", ".join(
        f"n={r.n}: zero {r.zero_probe:.1f} >= {0.4 * r.n:.1f}, random "
        f"{r.random_max:.1f} <= {r.random_bound:.1f}" for r in rows)
    _verdict(
        "C6 coherence separation",
        ok,
        f"{detail}; ratios {ratios[0]:.2f} < {ratios[1]:.2f} < "
        f"{ratios[2]:.2f}, {seconds:.1f}s (< 60s)")


def test_c7_scaling_exponents(sweeps):
    shifted, zero, seconds = sweeps
    assert all(r.error is None for r in shifted + zero)
    fit_shifted = hz.fit_slope(shifted, log_correction=0.4)
    fit_zero = hz.fit_slope(zero)
    separation = all(
        s.sup_estimate < z.sup_estimate
        for s, z in zip(shifted, zero) if s.L_target >= 1e4)
    ok = (0.15 <= fit_shifted.exponent <= 0.33
          and 0.28 <= fit_zero.exponent <= 0.45
          and separation and seconds < 900.0)
    _verdict(
        "C7 scaling separation",
        ok,
        f"shifted exponent {fit_shifted.exponent:.4f} in [0.15, 0.33] "
        f"(r2 {fit_shifted.r_squared:.3f}), unshifted {fit_zero.exponent:.4f} "
        f"in [0.28, 0.45] (r2 {fit_zero.r_squared:.3f}), shifted < unshifted "
        f"at every L >= 1e4: {separation}, {seconds:.1f}s (< 900s)")


def test_c8_exact_length_and_padding(sweeps):
    shifted, zero, _ = sweeps
    started = time.perf_counter()
    worst_rel = 0.0
    max_hits_ok = True
    detail_rows = 0
    for row in shifted + zero:
        worst_rel = max(
            worst_rel, abs(row.L_actual - row.L_target) / row.L_target)
        mode = "shifted" if row in shifted else "zero"
        sset, _ = sh.build_exact(
            unit_square(), row.L_target, mode, row.seed)
        assert abs(sh.total_length(sset) - row.L_target) <= 1e-9 * row.L_target
        u = stream(row.seed, "c8-lines").random((2000, 2))
        thetas = math.pi * u[:, 0]
        lo, hi = sset.body.offset_extents(thetas)
        offsets = lo + (hi - lo) * u[:, 1]
        batch = evaluate_lines(sset, thetas, offsets)
        if int(batch.padding_hits.max(initial=0)) > sset.padding_count:
            max_hits_ok = False
        detail_rows += 1
    seconds = time.perf_counter() - started
    ok = worst_rel <= 1e-9 and max_hits_ok
    _verdict(
        "C8 exact length + padding",
        ok,
        f"max relative length error {worst_rel:.2e} (<= 1e-9) over "
        f"{detail_rows} sets; padding crossings <= padding count on "
        f"2000 lines/set: {max_hits_ok}, {seconds:.1f}s")


def test_c9_byte_identical_csvs(sweeps, tmp_path_factory):
    shifted, zero, _ = sweeps
    tmp = tmp_path_factory.mktemp("c9")
    started = time.perf_counter()
    shifted2 = hz.run_sweep(
        unit_square(), L_VALUES, "shifted", SWEEP_CONFIG, seed=SWEEP_SEED)
    zero2 = hz.run_sweep(
        unit_square(), L_VALUES, "zero", SWEEP_CONFIG, seed=SWEEP_SEED)
    pairs = [("shifted", shifted, shifted2), ("zero", zero, zero2)]
    sweep_ok = True
    for name, first, second in pairs:
        a, b = tmp / f"{name}_a.csv", tmp / f"{name}_b.csv"
        hz.write_sweep_csv(first, a)
        hz.write_sweep_csv(second, b)
        if a.read_bytes() != b.read_bytes():
            sweep_ok = False

    def coherence_csv(path):
        rows = hz.coherence_study(
            unit_square(), [16, 64, 256], [16e-4, 64e-4, 256e-4],
            trials=2_000, seed=9004)
        text = "n,eps,zero_probe,random_max,random_bound\n" + "".join(
            f"{r.n},{r.eps!r},{r.zero_probe!r},{r.random_max!r},"
            f"{r.random_bound!r}\n" for r in rows)
        path.write_text(text)

    ca, cb = tmp / "coherence_a.csv", tmp / "coherence_b.csv"
    coherence_csv(ca)
    coherence_csv(cb)
    coherence_ok = ca.read_bytes() == cb.read_bytes()
    seconds = time.perf_counter() - started
    ok = sweep_ok and coherence_ok
    _verdict(
        "C9 determinism",
        ok,
        f"re-run sweep CSVs byte-identical: {sweep_ok}; coherence CSV "
        f"byte-identical: {coherence_ok}, {seconds:.1f}s")
