"""Closed forms and variational properties of the smoothed weights."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ouelliptic.proximal import (affine_minorant, check_optimality,
                                 envelope_gradient, moreau_envelope,
                                 prox_point)
from ouelliptic.weights import (abs_weight, huber_weight, quadratic_weight,
                                standard_family, zero_weight)

HALF_QUAD = quadratic_weight(np.eye(1))      # x^2/2
SQUARED = quadratic_weight(2.0 * np.eye(1))  # x^2
ABS1 = abs_weight(1)


def test_prox_half_quadratic_closed_form():
    res = prox_point(HALF_QUAD, np.array([1.0]), 1.0)
    assert res.minimizer == pytest.approx([-0.5], rel=1e-8)
    assert res.envelope == pytest.approx(0.25, rel=1e-8)
    assert np.allclose(res.gradient, -res.minimizer / 1.0)
    assert res.residual <= 1e-8


def test_prox_zero_weight():
    res = prox_point(zero_weight(3), np.array([0.3, -2.0, 5.0]), 0.7)
    assert np.allclose(res.minimizer, 0.0)
    assert res.envelope == 0.0


def test_prox_abs_soft_threshold():
    res = prox_point(ABS1, np.array([2.0]), 1.0)
    assert res.minimizer == pytest.approx([-1.0], abs=1e-7)
    assert res.envelope == pytest.approx(1.5, abs=1e-7)


def test_envelope_quadratic_values():
    assert moreau_envelope(HALF_QUAD, np.array([1.0]), 1.0) == pytest.approx(0.25)
    assert moreau_envelope(HALF_QUAD, np.array([2.0]), 0.01) == pytest.approx(
        4.0 / 2.02, rel=1e-8)


def test_envelope_abs_huber_region():
    # inside the soft region the envelope is x^2/(2 alpha)
    assert moreau_envelope(ABS1, np.array([0.5]), 1.0) == pytest.approx(
        0.125, abs=1e-7)


def test_envelope_gradient_values():
    g = envelope_gradient(HALF_QUAD, np.array([1.0]), 1.0)
    assert g == pytest.approx([0.5], rel=1e-8)
    g = envelope_gradient(ABS1, np.array([2.0]), 1.0)
    assert g == pytest.approx([1.0], abs=1e-7)
    g = envelope_gradient(zero_weight(2), np.array([1.0, -1.0]), 0.5)
    assert np.allclose(g, 0.0)


def test_prox_rejects_bad_alpha():
    with pytest.raises(ValueError):
        prox_point(HALF_QUAD, np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        prox_point(HALF_QUAD, np.array([1.0]), -2.0)


def test_optimality_margin_true_minimizer():
    probes = np.array([[-1.0], [0.0], [1.0]])
    m = check_optimality(HALF_QUAD, np.array([1.0]), 1.0, np.array([-0.5]), probes)
    assert m >= -1e-12


def test_optimality_margin_rejects_bad_candidate():
    m = check_optimality(HALF_QUAD, np.array([1.0]), 1.0, np.array([0.0]),
                         np.array([[-0.5]]))
    assert m < 0.0


def test_optimality_zero_weight():
    probes = np.array([[0.5], [-0.7], [2.0]])
    m = check_optimality(zero_weight(1), np.array([3.0]), 1.0,
                         np.array([0.0]), probes)
    assert m >= -1e-12


def test_optimality_certificate_random_probes():
    rng = np.random.default_rng(7)
    for w in standard_family(2, rng):
        x = rng.standard_normal(2)
        res = prox_point(w, x, 0.8)
        probes = res.minimizer + 0.5 * rng.standard_normal((100, 2))
        m = check_optimality(w, x, 0.8, res.minimizer, probes)
        assert m >= -1e-7, w.label


def test_affine_minorant_examples():
    slope, intercept = affine_minorant(SQUARED, np.array([1.0]))
    assert slope == pytest.approx([2.0])
    assert intercept == pytest.approx(1.0)
    slope, intercept = affine_minorant(ABS1, np.array([0.0]))
    assert slope == pytest.approx([0.0])
    assert intercept == pytest.approx(0.0)
    slope, intercept = affine_minorant(quadratic_weight(np.zeros((1, 1)), c=3.0),
                                       np.array([0.4]))
    assert slope == pytest.approx([0.0])
    assert intercept == pytest.approx(3.0)


def test_affine_minorant_lies_below():
    rng = np.random.default_rng(3)
    for w in standard_family(3, rng):
        x0 = rng.standard_normal(3)
        slope, intercept = affine_minorant(w, x0)
        pts = x0 + rng.standard_normal((200, 3))
        lower = pts @ slope - x0 @ slope + intercept
        assert np.all(w.eval(pts) >= lower - 1e-9), w.label


def test_prox_nonexpansive_family():
    rng = np.random.default_rng(11)
    trials = 0
    for dim in (1, 2, 3):
        for w in standard_family(dim, rng):
            for _ in range(48):
                x = 2.0 * rng.standard_normal(dim)
                h = rng.standard_normal(dim)
                alpha = float(rng.uniform(0.1, 4.0))
                a = x + prox_point(w, x, alpha).minimizer
                b = (x + h) + prox_point(w, x + h, alpha).minimizer
                assert np.linalg.norm(b - a) <= np.linalg.norm(h) + 1e-6, w.label
                trials += 1
    assert trials >= 1000


def test_envelope_monotone_in_alpha():
    grid = np.linspace(-3.0, 3.0, 25)
    rng = np.random.default_rng(5)
    for w in standard_family(1, rng):
        for x in grid:
            xv = np.array([x])
            f1 = moreau_envelope(w, xv, 2.0)
            f2 = moreau_envelope(w, xv, 0.5)
            f = float(w.eval(xv))
            assert f1 <= f2 + 1e-7, w.label
            assert f2 <= f + 1e-7, w.label


def test_envelope_midpoint_convex():
    rng = np.random.default_rng(13)
    for w in standard_family(2, rng):
        for _ in range(20):
            x, y = 2.0 * rng.standard_normal((2, 2))
            fx = moreau_envelope(w, x, 0.7)
            fy = moreau_envelope(w, y, 0.7)
            fm = moreau_envelope(w, 0.5 * (x + y), 0.7)
            assert fm <= 0.5 * (fx + fy) + 1e-7, w.label


def test_envelope_gradient_matches_differences():
    rng = np.random.default_rng(17)
    for w in standard_family(1, rng):
        for x in (-1.3, 0.2, 2.4):
            xv = np.array([x])
            step = 1e-4 * (1.0 + abs(x))
            g = envelope_gradient(w, xv, 0.9)[0]
            fd = (moreau_envelope(w, np.array([x + step]), 0.9)
                  - moreau_envelope(w, np.array([x - step]), 0.9)) / (2 * step)
            scale = max(abs(fd), 1e-3)
            assert abs(g - fd) / scale <= 1e-4, (w.label, x)


def test_envelope_gradient_lipschitz():
    rng = np.random.default_rng(19)
    for w in standard_family(2, rng):
        for _ in range(10):
            x = rng.standard_normal(2)
            h = 0.5 * rng.standard_normal(2)
            alpha = float(rng.uniform(0.3, 2.0))
            g1 = envelope_gradient(w, x, alpha)
            g2 = envelope_gradient(w, x + h, alpha)
            bound = np.linalg.norm(h) / alpha + 1e-6
            assert np.linalg.norm(g2 - g1) <= bound, w.label


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 4.0), st.floats(0.1, 3.0))
def test_prox_scaled_quadratic_property(x, alpha, coeff):
    w = quadratic_weight(coeff * np.eye(1))
    res = prox_point(w, np.array([x]), alpha)
    # stationarity: coeff (x+h) + h/alpha = 0
    expected = -alpha * coeff * x / (1.0 + alpha * coeff)
    assert res.minimizer[0] == pytest.approx(expected, abs=1e-7)
    assert res.envelope == pytest.approx(
        0.5 * coeff * x * x / (1.0 + alpha * coeff), abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(0.1, 3.0), st.floats(0.2, 2.0))
def test_envelope_below_weight_property(x, alpha, delta):
    w = huber_weight(1, delta=delta)
    xv = np.array([x])
    assert moreau_envelope(w, xv, alpha) <= float(w.eval(xv)) + 1e-9
