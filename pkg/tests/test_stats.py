import math

import numpy as np
import pytest

from gridmc.network import GridError
from gridmc.rng import rng_for_sample
from gridmc.stats import (BinaryEstimate, ci_binary, ci_boundary_triplet,
                          histogram)


def test_clt_half_width_hand_value():
    # 2.58 * sqrt(0.25 / 10000) = 0.0129 by hand
    ci = ci_binary(5000, 10000, 99)
    assert ci.kind == "clt"
    assert ci.half_width == pytest.approx(0.0129, abs=1e-6)
    assert 0.5 - ci.lower == pytest.approx(0.0129, abs=1e-12)


def test_zero_event_intervals():
    ci99 = ci_binary(0, 1000, 99)
    assert (ci99.lower, ci99.upper) == (0.0, pytest.approx(0.004605))
    assert ci99.kind == "zero_event"
    ci95 = ci_binary(0, 1000, 95)
    assert (ci95.lower, ci95.upper) == (0.0, pytest.approx(0.003))


def test_all_event_mirror():
    ci = ci_binary(1000, 1000, 99)
    assert ci.kind == "zero_event"
    assert ci.upper == 1.0
    assert ci.lower == pytest.approx(1.0 - 0.004605)


def test_clamping_to_unit_interval():
    ci = ci_binary(1, 20, 99)
    assert ci.lower == 0.0  # raw lower end would be negative
    ci = ci_binary(19, 20, 99)
    assert ci.upper == 1.0


def test_domain_errors():
    with pytest.raises(GridError):
        ci_binary(5, 4, 99)
    with pytest.raises(GridError):
        ci_binary(0, 0, 99)
    with pytest.raises(GridError):
        ci_binary(1, 10, 90)


def test_exact_formula_identity():
    # the implementation must be plain arithmetic of the formula
    for s, n in ((17, 400), (123, 5000), (4999, 10000)):
        p = s / n
        expected = 2.58 * math.sqrt(p * (1 - p) / n)
        ci = ci_binary(s, n, 99)
        assert abs((ci.upper - p) - expected) <= 1e-15 * expected


def test_boundary_triplet_near_zero():
    # one event in 5159 samples: point ~0.019%, lower clamped at 0
    lower, p_hat, upper = ci_boundary_triplet(1, 5159, 99)
    assert lower == 0.0
    assert p_hat == pytest.approx(1 / 5159)
    assert 100 * p_hat == pytest.approx(0.0194, abs=1e-3)
    assert 0.0004 < upper < 0.0007    # ~0.05-0.06 %


def test_boundary_triplet_degenerate_ends():
    assert ci_boundary_triplet(0, 50, 95) == (0.0, 0.0, pytest.approx(0.06))
    lo, p, up = ci_boundary_triplet(50, 50, 95)
    assert (p, up) == (1.0, 1.0) and lo == pytest.approx(1.0 - 0.06)


def test_zero_event_dominates_clt_tail():
    # as successes -> 0 the CLT upper end stays below the zero-event bound
    for n in range(10, 2000, 37):
        clt_upper = ci_binary(1, n, 99).upper
        zero_upper = min(4.605 / n, 1.0)
        assert clt_upper <= zero_upper or clt_upper == 1.0


def test_half_width_decreases_with_n():
    widths = [ci_binary(n // 5, n, 95).half_width
              for n in (100, 1000, 10000, 100000)]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_coverage_calibration():
    """CL99 covers a Bernoulli(0.3) truth in >= 985/1000 replicates and
    CL95 in >= 935 (binomial slack below the nominal levels)."""
    p, n, reps = 0.3, 1000, 1000
    hits99 = hits95 = 0
    for r in range(reps):
        u = rng_for_sample(2024, r).uniforms(n)
        s = int((u < p).sum())
        c99 = ci_binary(s, n, 99)
        c95 = ci_binary(s, n, 95)
        hits99 += c99.lower <= p <= c99.upper
        hits95 += c95.lower <= p <= c95.upper
    assert hits99 >= 985
    assert hits95 >= 935


def test_sigma_hat_consistency():
    est = BinaryEstimate.from_counts(123, 999)
    assert est.sigma_hat == pytest.approx(
        math.sqrt(est.p_hat * (1 - est.p_hat) / est.n), abs=1e-15)


def test_histogram_single_value():
    h = histogram([2.5] * 1000, ["a"] * 1000)
    d = h.density("a")
    assert (d > 0).sum() == 1
    assert float((d * h.widths).sum()) == pytest.approx(1.0)


def test_histogram_normal_density():
    z = rng_for_sample(7, 0).normals(1_000_000)
    h = histogram(z, ["x"] * len(z))
    dens = h.density("x")
    centers = 0.5 * (h.edges[:-1] + h.edges[1:])
    mode = np.argmin(np.abs(centers))
    assert abs(dens[mode] - 1 / math.sqrt(2 * math.pi)) < 0.02


def test_histogram_classes_stack():
    rng = rng_for_sample(8, 1)
    vals = rng.normals(5000)
    labels = ["red" if v > 0.5 else "green" for v in vals]
    h = histogram(vals, labels)
    stacked = h.density("red") + h.density("green")
    assert np.allclose(stacked, h.total_density())
    # per-class integral equals the class share; total integrates to one
    share = labels.count("red") / len(labels)
    assert float((h.density("red") * h.widths).sum()) == pytest.approx(share)
    assert float((h.total_density() * h.widths).sum()) == pytest.approx(1.0, abs=1e-9)


def test_histogram_empty_and_mismatch():
    h = histogram([], [])
    assert h.n_total == 0 and h.counts == {}
    with pytest.raises(GridError):
        histogram([1.0], [])
