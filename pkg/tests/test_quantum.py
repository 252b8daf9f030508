import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treedisp.bands import compute_bands
from treedisp.decay import decay_fit, window_max
from treedisp.edge import QuantumTreeModel
from treedisp.errors import DomainError, TruncationWarning
from treedisp.quantum import (DIAGONAL, KernelQuery, band_contributions, band_integrals,
                              band_main_terms, correlation, free_line_kernel,
                              free_line_numeric, kernel_main_term, kernel_numeric,
                              main_term_prefactor, mu_minus, psi1, theta_nodes)

QUERIES = [DIAGONAL, KernelQuery("same_edge", 0.3, 0.7), KernelQuery("distinct_edges", 0.2, 0.9, 3)]


def band_grid(model, n, count=9, inner=True):
    b = compute_bands(model, n)[n - 1]
    x = np.linspace(b.a, b.b, count + 2)
    return x[1:-1] if inner else x


class TestQuery:
    @pytest.mark.parametrize("text,expected", [
        ("diag", KernelQuery("diagonal_vertex")),
        ("same-edge:0.25,0.5", KernelQuery("same_edge", 0.25, 0.5)),
        ("edges:4,0,1", KernelQuery("distinct_edges", 0.0, 1.0, 4)),
    ])
    def test_parse_round_trip(self, text, expected):
        q = KernelQuery.parse(text)
        assert q == expected
        assert KernelQuery.parse(q.spec()) == q

    @pytest.mark.parametrize("text", ["", "diag:1", "same-edge:1", "edges:1,0,0", "edges:x,0,0",
                                      "corner:1,2"])
    def test_parse_errors(self, text):
        with pytest.raises(DomainError):
            KernelQuery.parse(text)

    def test_position_checked(self, free_model):
        with pytest.raises(DomainError):
            band_integrals(free_model, 1.0, KernelQuery("same_edge", 1.5, 0.0), 2)

    def test_route_checked(self, free_model):
        with pytest.raises(DomainError):
            band_integrals(free_model, 1.0, None, 2, route="simpson")


class TestSpectralData:
    @pytest.mark.parametrize("fixture", ["free_model", "cosine_model", "coupled_model"])
    def test_psi1_positive_vanishing(self, fixture, request):
        model = request.getfixturevalue(fixture)
        for n in (1, 2, 5):
            assert np.all(psi1(model, band_grid(model, n)) > 0)
            b = compute_bands(model, n)[n - 1]
            for q in QUERIES:
                vals = psi1(model, np.array([b.a, b.b])) * correlation(model, np.array([b.a, b.b]), q)
                np.testing.assert_array_equal(vals, 0.0)

    def test_psi1_free_closed_form(self, free_model):
        q = 2
        for n in (1, 3):
            lam = band_grid(free_model, n)
            k = np.sqrt(lam)
            w = (q + 1) * np.cos(k)
            psi = (q + 1) * np.sqrt(4 * q - w**2) / (2 * ((q + 1) ** 2 - w**2))
            np.testing.assert_allclose(psi1(free_model, lam), np.abs(np.sin(k) / k) * psi,
                                       rtol=1e-12)

    def test_outside_spectrum(self, free_model):
        b = compute_bands(free_model, 1)[0]
        with pytest.raises(DomainError):
            psi1(free_model, 0.5 * (b.b + compute_bands(free_model, 2)[1].a))

    @pytest.mark.parametrize("fixture", ["free_model", "coupled_model"])
    def test_mu_minus(self, fixture, request):
        model = request.getfixturevalue(fixture)
        lam = band_grid(model, 2)
        mu = mu_minus(model, lam)
        np.testing.assert_allclose(np.abs(mu), model.q**-0.5, rtol=1e-13)
        np.testing.assert_allclose(model.q * mu * np.conj(mu), 1.0, rtol=1e-13)
        b = compute_bands(model, 2)[1]
        edge = mu_minus(model, b.a)
        assert edge.imag == 0.0 and abs(abs(edge) - model.q**-0.5) < 1e-12

    def test_same_edge_origin(self, cosine_model):
        lam = band_grid(cosine_model, 3)
        np.testing.assert_allclose(correlation(cosine_model, lam, KernelQuery("same_edge")),
                                   1.0, atol=1e-13)

    @pytest.mark.parametrize("x,y", [(0.1, 0.4), (0.5, 0.5), (0.9, 0.2)])
    def test_same_edge_free(self, free_model, x, y):
        lam = band_grid(free_model, 2)
        got = correlation(free_model, lam, KernelQuery("same_edge", x, y))
        # with W = 0 the correlation of the two edge-end eigenfunctions is a plane wave
        np.testing.assert_allclose(got, np.cos(np.sqrt(lam) * (x - y)), atol=1e-12)

    def test_distinct_edges_continuity(self, cosine_model):
        lam = band_grid(cosine_model, 2)
        same = correlation(cosine_model, lam, KernelQuery("same_edge", 1.0, 0.0))
        np.testing.assert_allclose(
            correlation(cosine_model, lam, KernelQuery("distinct_edges", 1.0, 0.0, 2)), 1.0,
            atol=1e-12)
        assert np.all(np.isfinite(same))
        for k in (3, 5):
            a = correlation(cosine_model, lam, KernelQuery("distinct_edges", 1.0, 0.0, k))
            b = correlation(cosine_model, lam, KernelQuery("distinct_edges", 0.0, 0.0, k - 1))
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_distinct_edges_decay(self, free_model):
        lam = band_grid(free_model, 1, 31)
        peaks = []
        for k in range(2, 13):
            vals = correlation(free_model, lam, KernelQuery("distinct_edges", 0.5, 0.5, k))
            peaks.append(np.max(np.abs(vals)) * 2.0 ** (k / 2))
        # q^{-k/2} decay up to a factor at most linear in k
        assert max(peaks) < 2.0 * 12 and peaks[-1] / peaks[0] < 12

    @settings(max_examples=25, deadline=None)
    @given(x=st.floats(0, 1), y=st.floats(0, 1))
    def test_same_edge_symmetric(self, x, y):
        model = QuantumTreeModel(2, 1.0, 0.0, "cosine:1")
        lam = band_grid(model, 2, 5)
        np.testing.assert_allclose(correlation(model, lam, KernelQuery("same_edge", x, y)),
                                   correlation(model, lam, KernelQuery("same_edge", y, x)),
                                   rtol=1e-12, atol=1e-12)


class TestIntegrals:
    @pytest.mark.parametrize("query", QUERIES, ids=lambda q: q.kind)
    def test_routes_agree(self, cosine_model, query):
        t = np.array([0.0, 0.7, 3.0, 20.0])
        a = band_integrals(cosine_model, t, query, 6, route="bessel")
        b = band_integrals(cosine_model, t, query, 6, route="theta")
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_time_zero_positive(self, coupled_model):
        k0 = [kernel_numeric(coupled_model, 0.0, n_bands=n, warn=False).value for n in (5, 10, 20)]
        assert all(v.imag == pytest.approx(0.0, abs=1e-14) for v in k0)
        assert 0 < k0[0].real < k0[1].real < k0[2].real

    def test_conjugation(self, cosine_model):
        t = np.array([0.4, 2.5, 30.0])
        pos = kernel_numeric(cosine_model, t, n_bands=10, warn=False).value
        neg = kernel_numeric(cosine_model, -t, n_bands=10, warn=False).value
        np.testing.assert_allclose(neg, np.conj(pos), rtol=1e-13)

    def test_theta_nodes_rule(self, free_model):
        b = compute_bands(free_model, 4)[3]
        assert theta_nodes(0.0, b) == 64
        assert theta_nodes(1000.0, b) == math.ceil(40 * 1000 * b.width / (2 * math.pi))

    def test_evaluation_shapes(self, free_model):
        ev = kernel_numeric(free_model, 2.0, n_bands=4, warn=False)
        assert isinstance(ev.value, complex) and complex(ev) == ev.value
        ev = kernel_numeric(free_model, [[1.0, 2.0]], n_bands=4, warn=False)
        assert ev.value.shape == (1, 2) and ev.tail_bound.shape == (1, 2)


class TestMainTerm:
    def test_prefactor(self):
        assert main_term_prefactor(2, 1.0) == pytest.approx(2**0.25 * 3 / math.sqrt(math.pi))

    def test_free_amplitude(self, free_model):
        q, t = 2, 50.0
        main, bound = band_main_terms(free_model, [t], None, 6)
        for b, m_n, bd in zip(compute_bands(free_model, 6), main[:, 0], bound[:, 0]):
            # sqrt(L (q + 1) / 2) (|sin(sqrt(lam) L)| / sqrt(lam))^{3/2}
            A = [math.sqrt((q + 1) / 2) * (abs(math.sin(math.sqrt(x))) / math.sqrt(x)) ** 1.5
                 for x in (b.a, b.b)]
            pref = float(main_term_prefactor(q, t))
            expect = 0.5j * pref * (np.exp(1j * (b.a * t + math.pi / 4)) * A[0]
                                    - np.exp(1j * (b.b * t - math.pi / 4)) * A[1])
            assert m_n == pytest.approx(expect, rel=1e-10)
            assert bd == pytest.approx(0.5 * pref * sum(A), rel=1e-10)

    @pytest.mark.parametrize("query", QUERIES, ids=lambda q: q.kind)
    def test_bound_dominates(self, coupled_model, query):
        t = np.geomspace(1, 500, 15)
        main, bound = band_main_terms(coupled_model, t, query, 12)
        assert np.all(np.abs(main) <= bound * (1 + 1e-12))

    def test_bound_decay_in_n(self, cosine_model):
        _, bound = band_main_terms(cosine_model, [1.0], None, 30)
        n = np.arange(1, 31)
        scaled = bound[:, 0] * n**1.5
        assert scaled[10:].max() / scaled[10:].min() < 1.5

    def test_positive_time_required(self, free_model):
        with pytest.raises(DomainError):
            band_main_terms(free_model, [0.0], None, 2)

    @pytest.mark.parametrize("fixture", ["free_model", "cosine_model"])
    def test_band_residual_faster(self, fixture, request):
        model = request.getfixturevalue(fixture)
        b = compute_bands(model, 2)
        period = 2 * math.pi / b[0].width
        t = np.geomspace(30, 600, 10)

        def resid(ts):
            num = band_integrals(model, ts, None, 2, route="bessel")
            main, _ = band_main_terms(model, ts, None, 2)
            return np.abs(num - main).max(axis=0)

        fit = decay_fit(t, window_max(resid, t, period, 24))
        assert fit.slope <= -2.2

    def test_contributions(self, cosine_model):
        rows = band_contributions(cosine_model, 80.0, None, 8)
        assert [r.n for r in rows] == list(range(1, 9))
        for r in rows:
            assert abs(r.main) <= r.magnitude_bound * (1 + 1e-12)
            assert abs(r.numeric - r.main) < 0.2 * r.magnitude_bound

    def test_kernel_main_term_sum(self, cosine_model):
        main, bound = band_main_terms(cosine_model, [10.0], None, 8)
        ev = kernel_main_term(cosine_model, 10.0, None, 8)
        assert ev.value == pytest.approx(complex(main.sum()), rel=1e-14)
        assert ev.tail_bound > 0


class TestTruncation:
    def test_warning_when_tail_large(self, cosine_model):
        with pytest.warns(TruncationWarning):
            kernel_numeric(cosine_model, 5.0, n_bands=3)

    def test_silenced(self, cosine_model):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            kernel_numeric(cosine_model, 5.0, n_bands=3, warn=False)

    def test_tail_shrinks(self, cosine_model):
        tails = [kernel_numeric(cosine_model, 5.0, n_bands=n, warn=False).tail_bound
                 for n in (5, 20, 40)]
        assert tails[0] > tails[1] > tails[2]

    def test_truncation_convergence(self, cosine_model):
        # successive partial sums settle at the n^{-1/2} rate the tail estimate encodes
        v20 = kernel_numeric(cosine_model, 5.0, n_bands=20, warn=False)
        v40 = kernel_numeric(cosine_model, 5.0, n_bands=40, warn=False)
        assert abs(v40.value - v20.value) < 2 * v20.tail_bound


class TestFreeLine:
    @pytest.mark.parametrize("t,v", [(0.5, 0.0), (3.0, 1.0), (40.0, 2.5)])
    def test_closed_form(self, t, v):
        assert free_line_numeric(t, v) == pytest.approx(free_line_kernel(t, v), abs=1e-10)

    def test_decay(self):
        t = np.geomspace(1, 100, 8)
        mags = [abs(free_line_numeric(x, 0.0)) for x in t]
        assert decay_fit(t, mags).slope == pytest.approx(-0.5, abs=1e-6)

    def test_errors(self):
        with pytest.raises(DomainError):
            free_line_kernel(0.0, 1.0)
        with pytest.raises(DomainError):
            free_line_numeric(1.0, -1.0)
