import math

import numpy as np
import pytest

from conftest import THETA_Q2
from treedisp.bands import (band_of, bracketed_newton, compute_bands, dirichlet_values,
                            invert_w_on_band)
from treedisp.edge import QuantumTreeModel, endpoint_values, w_eval
from treedisp.errors import DomainError, InvariantError

# first Dirichlet value for W = cos(2 pi x), L = 1, from mpmath.findroot on a
# 30-digit Taylor ODE solution
DELTA1_COSINE = 9.36645812155391284662952324986


class TestDirichlet:
    def test_free(self, free_model):
        n = np.arange(1, 13)
        np.testing.assert_allclose(dirichlet_values(free_model, 12), (n * math.pi) ** 2,
                                   rtol=0, atol=1e-10)

    def test_cosine_reference(self, cosine_model):
        d = dirichlet_values(cosine_model, 3)
        assert d[0] == pytest.approx(DELTA1_COSINE, abs=1e-11)
        assert math.pi**2 - 1 < d[0] < math.pi**2 + 1

    def test_sign_change(self, cosine_model):
        d = dirichlet_values(cosine_model, 8)
        s = endpoint_values(cosine_model, np.concatenate([d - 1e-6, d + 1e-6]))["s"]
        assert np.all(s[:8] * s[8:] < 0)

    def test_stable_when_extended(self):
        m = QuantumTreeModel(2, 1.0, 0.0, "cosine:0.3")
        first = dirichlet_values(m, 3)
        np.testing.assert_array_equal(dirichlet_values(m, 9)[:3], first)


class TestBands:
    def test_free_closed_form(self, free_model):
        bands = compute_bands(free_model, 12)
        for b in bands:
            assert b.a == pytest.approx(((b.n - 1) * math.pi + THETA_Q2) ** 2, abs=1e-10)
            assert b.b == pytest.approx((b.n * math.pi - THETA_Q2) ** 2, abs=1e-10)

    def test_first_edge(self, free_model):
        assert compute_bands(free_model, 1)[0].a == pytest.approx(0.115489, abs=5e-7)
        assert THETA_Q2 == pytest.approx(0.339837, abs=5e-7)

    @pytest.mark.parametrize("fixture", ["free_model", "cosine_model", "coupled_model"])
    def test_invariants(self, fixture, request):
        model = request.getfixturevalue(fixture)
        q = model.q
        edge = 2 * math.sqrt(q)
        bands = compute_bands(model, 12)
        prev = -math.inf
        for b in bands:
            wa, wb = w_eval(model, b.a), w_eval(model, b.b)
            assert abs(abs(wa) - edge) < 1e-9 and abs(wa + wb) < 1e-9
            assert b.w_sign == (-1) ** b.n
            assert prev < b.dirichlet_below < b.a < b.b < b.dirichlet_above
            prev = b.dirichlet_above - 1e-9
            inner = np.linspace(b.a, b.b, 7)[1:-1]
            s = endpoint_values(model, inner)["s"]
            assert np.all(np.sign(s) == (-1) ** (b.n + 1))
            grid = np.linspace(b.a, b.b, 41)
            assert np.min(np.abs(w_eval(model, grid, 1))) > 0
            assert np.all(np.sign(w_eval(model, grid, 1)) == b.w_sign)

    @pytest.mark.parametrize("fixture", ["free_model", "cosine_model", "coupled_model"])
    def test_vertex_identity(self, fixture, request):
        model = request.getfixturevalue(fixture)
        d = dirichlet_values(model, 10)
        n = np.arange(1, 11)
        np.testing.assert_allclose(w_eval(model, d), (-1.0) ** n * (model.q + 1), atol=1e-9)

    def test_large_n_floor(self, cosine_model):
        q, L = cosine_model.q, cosine_model.L
        for b in compute_bands(cosine_model, 12)[4:]:
            lam = np.linspace(b.a, b.b, 61)
            floor = np.min(np.abs(w_eval(cosine_model, lam, 1)) * np.sqrt(lam))
            assert floor >= L * (q - 1) / 4 - 1e-9

    def test_band_of(self, free_model):
        b = compute_bands(free_model, 3)[2]
        assert band_of(free_model, 0.5 * (b.a + b.b)).n == 3
        with pytest.raises(DomainError):
            band_of(free_model, 0.5 * (b.b + b.dirichlet_above))

    def test_alpha_limit(self):
        s = [abs(compute_bands(QuantumTreeModel(2, 1.0, a), 1)[0].s_a) for a in (0, 10, 100, 1000)]
        assert all(np.diff(s) < 0)
        widths = [compute_bands(QuantumTreeModel(2, 1.0, a), 1)[0].width for a in (0, 10, 1000)]
        assert all(np.diff(widths) < 0)

    def test_well_potential(self):
        m = QuantumTreeModel(2, 1.0, -3.0, "well:20,0.3")
        bands = compute_bands(m, 5)
        assert bands[0].a < 0
        assert all(b1.b < b2.a for b1, b2 in zip(bands, bands[1:]))


class TestInversion:
    @pytest.mark.parametrize("fixture", ["free_model", "cosine_model", "coupled_model"])
    def test_round_trip(self, fixture, request):
        model = request.getfixturevalue(fixture)
        edge = 2 * math.sqrt(model.q)
        th = np.linspace(0, math.pi, 33)
        for b in compute_bands(model, 8):
            lam = invert_w_on_band(model, b, edge * np.cos(th))
            np.testing.assert_allclose(w_eval(model, lam), edge * np.cos(th), atol=1e-10)
            assert np.all((lam >= b.a) & (lam <= b.b))

    def test_endpoints_exact(self, cosine_model):
        edge = 2 * math.sqrt(2)
        b = compute_bands(cosine_model, 2)[1]
        assert invert_w_on_band(cosine_model, b, -b.w_sign * edge) == b.a
        assert invert_w_on_band(cosine_model, b, b.w_sign * edge) == b.b

    def test_free_inverse(self, free_model):
        for b in compute_bands(free_model, 6):
            tgt = np.linspace(-2.5, 2.5, 9)
            lam = invert_w_on_band(free_model, b, tgt)
            ac = np.arccos(tgt / 3)
            k = b.n - 1
            # branch of arccos on band n: sqrt(lam) = k pi + ac (k even) or (k+1) pi - ac
            expected = (k * math.pi + ac) ** 2 if k % 2 == 0 else ((k + 1) * math.pi - ac) ** 2
            np.testing.assert_allclose(lam, expected, rtol=1e-13)

    def test_out_of_range(self, free_model):
        with pytest.raises(DomainError):
            invert_w_on_band(free_model, compute_bands(free_model, 1)[0], 3.0)


class TestNewton:
    def test_simple_roots(self):
        targets = np.array([2.0, 3.0, 10.0])

        def fun(x, idx):
            return x * x - targets[idx], 2 * x

        r = bracketed_newton(fun, [1, 1, 1], [2, 2, 4], [-1, -1, -1])
        np.testing.assert_allclose(r, np.sqrt(targets), rtol=1e-15)

    def test_converges_from_flat_start(self):
        def fun(x, idx):
            return np.arctan(x - 0.3), 1 / (1 + (x - 0.3) ** 2)

        r = bracketed_newton(fun, [-50.0], [60.0], [-1.0], [59.0])
        assert r[0] == pytest.approx(0.3, abs=1e-15)


def test_miscount_raises():
    # a potential so rough that a coarse gap sampling sees several crossings
    m = QuantumTreeModel(2, 1.0, 0.0, "cosine:0.1")
    with pytest.raises(InvariantError):
        from treedisp import bands as B
        orig = B.endpoint_values

        def noisy(model, lam):
            out = orig(model, lam)
            lam = np.atleast_1d(np.asarray(lam, dtype=float))
            out["c"] = out["c"] + 2.0 * np.sin(40 * lam)
            return out

        B.endpoint_values = noisy
        try:
            compute_bands(m, 3)
        finally:
            B.endpoint_values = orig
