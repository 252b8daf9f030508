import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treedisp.decay import decay_fit, log_subset, phase_peaks, window_max
from treedisp.discrete import line_kernel
from treedisp.errors import DomainError


def test_exact_power_law():
    t = np.geomspace(1, 1000, 10)
    fit = decay_fit(t, 2.0 * t**-1.5)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(fit.residuals)) < 1e-12


def test_half_power():
    t = np.linspace(2, 50, 9)
    assert decay_fit(t, 0.3 * t**-0.5).slope == pytest.approx(-0.5, abs=1e-12)


def test_line_envelope():
    # peaks of |J_0(2t)| sit near 2t = pi/4 mod pi
    t = phase_peaks(2.0, 0.25 * math.pi, 20, 2000, 12)
    mags = [abs(line_kernel(x, 0)) for x in t]
    assert decay_fit(t, mags).slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("t,y", [
    (np.ones(8), np.ones(8)),
    (np.arange(1, 8), np.ones(7)),
    (np.arange(1, 9), -np.ones(8)),
    (np.arange(0, 8), np.ones(8)),
    (np.arange(1, 9), np.ones(9)),
])
def test_degenerate(t, y):
    with pytest.raises(DomainError):
        decay_fit(t, y)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-3, 1), c=st.floats(1e-6, 1e6))
def test_slope_recovered(p, c):
    t = np.geomspace(1, 1e4, 8)
    assert decay_fit(t, c * t**p).slope == pytest.approx(p, abs=1e-9)


def test_window_max_single_call():
    calls = []

    def f(x):
        calls.append(x.size)
        return np.cos(x)

    out = window_max(f, [0.0, 10.0, 20.0], 2 * math.pi, 49)
    assert calls == [147]
    np.testing.assert_allclose(out, 1.0, atol=1e-2)


def test_phase_peaks():
    t = phase_peaks(3.0, 1.0, 10, 30)
    assert np.all((t >= 10) & (t <= 30))
    np.testing.assert_allclose(np.mod(3.0 * t - 1.0 + 1e-9, 2 * math.pi), 1e-9, atol=1e-8)
    np.testing.assert_allclose(np.diff(t), 2 * math.pi / 3)
    with pytest.raises(DomainError):
        phase_peaks(0.0, 0.0, 1, 2)


def test_log_subset():
    full = np.arange(1.0, 101.0)
    sub = log_subset(full, 10)
    assert sub[0] == 1.0 and sub[-1] == 100.0
    assert np.all(np.diff(sub) > 0) and sub.size <= 10
    assert log_subset(full, None) is full
