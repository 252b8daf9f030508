"""Absolutely continuous part of the Schrödinger evolution on the quantum tree.

The kernel of :math:`e^{itH}\\mathbf 1_{ac}(H)` is

.. math:: K_t(x, y) = \\frac1\\pi \\sum_n \\int_{a_n}^{b_n}
          e^{it\\lambda}\\,\\Psi_1(\\lambda)\\,\\Phi(\\lambda, x, y)\\,d\\lambda,

with the diagonal density :math:`\\Psi_1(\\lambda) = -\\epsilon_\\lambda s(\\lambda)
\\Psi(w(\\lambda))` (:math:`\\epsilon_\\lambda` the sign of :math:`w'` on the
band) and the correlation :math:`\\Phi`, which depends on where ``x`` and
``y`` sit relative to each other (see :class:`KernelQuery`).

Two quadratures of the band integrals are provided.

``"bessel"``
    On band ``n`` write :math:`\\lambda = m + h\\cos\\varphi`.  The density
    vanishes like a square root at both edges, so
    :math:`\\Psi_1\\Phi = r(\\lambda)\\sqrt{(\\lambda-a)(b-\\lambda)}` with ``r``
    analytic on the band.  Expanding :math:`r\\sin^2\\varphi` in a cosine
    series turns every band integral into a finite sum of Bessel functions
    :math:`J_j(th)`, so the cost does not grow with ``t``.
``"theta"``
    Substitutes :math:`w(\\lambda) = 2\\sqrt q\\cos\\theta` and applies
    composite Gauss-Legendre in :math:`\\theta` with
    ``max(64, ceil(40 t (b - a) / 2 pi))`` nodes.  :math:`\\lambda(\\theta)` and
    the amplitude are smooth in :math:`\\theta` and are represented by
    Chebyshev interpolants built from exact inversions of ``w``.

``"auto"`` uses the θ rule while its node count stays below a budget and the
Bessel sum otherwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct
from scipy.special import jv

from .bands import Band, compute_bands, invert_w_on_band
from .discrete import density_factor
from .edge import QuantumTreeModel, edge_values
from .errors import ConvergenceError, DomainError, TruncationWarning
from .specfun import spherical_table

__all__ = [
    "KernelQuery",
    "BandContribution",
    "KernelEvaluation",
    "psi1",
    "mu_minus",
    "correlation",
    "band_integrals",
    "band_main_terms",
    "band_contributions",
    "kernel_numeric",
    "kernel_main_term",
    "main_term_prefactor",
    "free_line_kernel",
    "free_line_numeric",
]

_KINDS = ("diagonal_vertex", "same_edge", "distinct_edges")
_PANEL = 16
_XG, _WG = np.polynomial.legendre.leggauss(_PANEL)
_THETA_BUDGET = 4096


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelQuery:
    """Relative position of the two points of a kernel value.

    Attributes
    ----------
    kind : {"diagonal_vertex", "same_edge", "distinct_edges"}
        ``diagonal_vertex`` is ``x = y = o`` for a vertex ``o``.
        ``same_edge`` puts both points on one edge at distances ``x`` and
        ``y`` from the same endpoint.  ``distinct_edges`` uses the path
        :math:`(v_0, \\dots, v_k)` with :math:`e_1 = (v_0, v_1)` and
        :math:`e_2 = (v_{k-1}, v_k)`; ``x`` is measured from :math:`v_0`
        along :math:`e_1` and ``y`` from :math:`v_{k-1}` along :math:`e_2`.
    x, y : float
        Positions in ``[0, L]``.
    k : int
        Path length, at least 2, for ``distinct_edges``.
    """

    kind: str
    x: float = 0.0
    y: float = 0.0
    k: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown query kind {self.kind!r}")
        if self.kind == "distinct_edges" and int(self.k) < 2:
            raise DomainError("distinct_edges needs a path length k >= 2")

    @classmethod
    def parse(cls, text: str) -> "KernelQuery":
        """Build a query from ``diag``, ``same-edge:x,y`` or ``edges:k,x,y``.

        >>> KernelQuery.parse("edges:3,0.5,0.25")
        KernelQuery(kind='distinct_edges', x=0.5, y=0.25, k=3)
        """
        head, _, rest = text.strip().partition(":")
        try:
            vals = [v for v in rest.split(",") if v.strip()] if rest else []
            if head == "diag" and not vals:
                return cls("diagonal_vertex")
            if head == "same-edge" and len(vals) == 2:
                return cls("same_edge", float(vals[0]), float(vals[1]))
            if head == "edges" and len(vals) == 3:
                return cls("distinct_edges", float(vals[1]), float(vals[2]), int(vals[0]))
        except ValueError as exc:
            raise DomainError(f"cannot parse query {text!r}: {exc}") from None
        raise DomainError(f"cannot parse query {text!r}; expected diag, same-edge:x,y "
                          "or edges:k,x,y")

    def check(self, L: float) -> None:
        if self.kind != "diagonal_vertex":
            for v in (self.x, self.y):
                if not 0.0 <= v <= L:
                    raise DomainError(f"position {v} outside [0, {L}]")

    @property
    def key(self) -> tuple:
        if self.kind == "diagonal_vertex":
            return (self.kind,)
        return (self.kind, float(self.x), float(self.y), int(self.k))

    def spec(self) -> str:
        if self.kind == "diagonal_vertex":
            return "diag"
        if self.kind == "same_edge":
            return f"same-edge:{self.x!r},{self.y!r}"
        return f"edges:{self.k},{self.x!r},{self.y!r}"


DIAGONAL = KernelQuery("diagonal_vertex")


@dataclass(frozen=True)
class BandContribution:
    """Contribution of band ``n`` at a single time.

    ``magnitude_bound`` is the sum of the moduli of the two endpoint terms,
    so it dominates ``|main|`` and decays like :math:`n^{-3/2}`.
    """

    n: int
    main: complex
    numeric: complex
    magnitude_bound: float


@dataclass(frozen=True)
class KernelEvaluation:
    """Kernel value(s) with the estimated band-truncation tail.

    Attributes
    ----------
    t : float or ndarray
    value : complex or ndarray
    tail_bound : float or ndarray
        Estimate :math:`2C N^{-1/2}` of the omitted bands ``n > N``, with
        ``C`` fitted to the :math:`n^{-3/2}` envelope of the last bands kept.
    n_bands : int
    """

    t: object
    value: object
    tail_bound: object
    n_bands: int

    def __complex__(self) -> complex:
        return complex(self.value)


# ---------------------------------------------------------------------------
# pointwise spectral quantities
# ---------------------------------------------------------------------------

def _band_count_for(model: QuantumTreeModel, lam_max: float) -> int:
    n = len(model._bands)
    if lam_max > 0:
        n = max(n, int(model.L * math.sqrt(lam_max) / math.pi) + 3)
    return max(n, 1)


def _locate(model: QuantumTreeModel, lam: np.ndarray) -> tuple[list[Band], np.ndarray]:
    """Band index (0-based) of each entry of `lam`; DomainError outside the AC spectrum."""
    bands = compute_bands(model, _band_count_for(model, float(np.max(lam))))
    a = np.array([b.a for b in bands])
    b = np.array([b.b for b in bands])
    idx = np.searchsorted(a, lam, side="right") - 1
    ok = (idx >= 0) & (lam <= b[np.clip(idx, 0, None)])
    if not np.all(ok):
        bad = lam[~ok][0]
        raise DomainError(f"lambda = {bad!r} is not in the AC spectrum")
    return bands, idx


def _spectral_samples(model: QuantumTreeModel, lam: np.ndarray, query: KernelQuery,
                      w_sign: np.ndarray, snap_a: np.ndarray | None = None,
                      snap_b: np.ndarray | None = None) -> dict:
    """``s``, ``w``, ``w'``, ``Psi_1`` and ``Phi`` at points of known bands.

    `w` is clipped to the band levels, and set exactly to them where
    `snap_a` / `snap_b` flag the stored band edges.
    """
    q, L = model.q, model.L
    edge = 2.0 * math.sqrt(q)
    if query.kind == "diagonal_vertex":
        pts = [L]
    else:
        pts = [L, query.x, L - query.x, query.y, L - query.y]
    ev = edge_values(model, lam, np.clip(pts, 0.0, L))
    S = ev["S"]
    s = S[:, 0]
    w = (q + 1.0) * ev["C"][:, 0] + model.alpha * s
    wp = (q + 1.0) * ev["dC"][:, 0] + model.alpha * ev["dS"][:, 0]
    w = np.clip(w, -edge, edge)
    if snap_a is not None:
        w = np.where(snap_a, -w_sign * edge, w)
    if snap_b is not None:
        w = np.where(snap_b, w_sign * edge, w)
    p1 = -w_sign * s * density_factor(w, q)
    phi = _correlation_from(S, s, w, q, query)
    return {"s": s, "w": w, "wp": wp, "psi1": p1, "phi": phi}


def _correlation_from(S: np.ndarray, s: np.ndarray, w: np.ndarray, q: int,
                      query: KernelQuery) -> np.ndarray:
    if query.kind == "diagonal_vertex":
        return np.ones_like(s)
    if np.any(s == 0):
        raise DomainError("s(lambda) = 0 inside the AC spectrum")
    sx, slx, sy, sly = S[:, 1], S[:, 2], S[:, 3], S[:, 4]
    s2 = s * s
    if query.kind == "same_edge":
        num = slx * sly + sx * sy + w / (q + 1.0) * (slx * sy + sx * sly)
        return num / s2
    k = int(query.k)
    phis = spherical_table(k, w, q)
    return (slx * sy * phis[k] + (slx * sly + sx * sy) * phis[k - 1]
            + sx * sly * phis[k - 2]) / s2


def _prepare(model: QuantumTreeModel, lam, query: KernelQuery | None):
    query = DIAGONAL if query is None else query
    query.check(model.L)
    arr = np.atleast_1d(np.asarray(lam, dtype=float)).ravel()
    bands, idx = _locate(model, arr)
    sign = np.array([bands[i].w_sign for i in idx], dtype=float)
    snap_a = arr == np.array([bands[i].a for i in idx])
    snap_b = arr == np.array([bands[i].b for i in idx])
    return _spectral_samples(model, arr, query, sign, snap_a, snap_b), sign


def _shape(lam, out):
    return float(out[0]) if np.ndim(lam) == 0 else out.reshape(np.shape(lam))


def psi1(model: QuantumTreeModel, lam):
    """Diagonal spectral density :math:`\\Psi_1(\\lambda) = \\operatorname{Im}G^{\\lambda+i0}(o, o)`.

    Parameters
    ----------
    model : QuantumTreeModel
    lam : float or ndarray
        Points of the AC spectrum.

    Returns
    -------
    float or ndarray
        Nonnegative values; zero at the band edges.

    Raises
    ------
    DomainError
        If some `lam` is outside every band.
    """
    vals, _ = _prepare(model, lam, None)
    return _shape(lam, vals["psi1"])


def mu_minus(model: QuantumTreeModel, lam):
    """Boundary value :math:`\\mu^-(\\lambda) = (w - i\\epsilon_\\lambda\\sqrt{4q - w^2})/2q`.

    Its modulus is :math:`q^{-1/2}` on the AC spectrum; :math:`\\epsilon_\\lambda`
    is the orientation of ``w`` on the band containing `lam`.
    """
    vals, sign = _prepare(model, lam, None)
    q = model.q
    w = vals["w"]
    edge = 2.0 * math.sqrt(q)
    root = np.sqrt(np.clip((edge - np.abs(w)) * (edge + np.abs(w)), 0.0, None))
    out = (w - 1j * sign * root) / (2.0 * q)
    return complex(out[0]) if np.ndim(lam) == 0 else out.reshape(np.shape(lam))


def correlation(model: QuantumTreeModel, lam, query: KernelQuery):
    """Correlation :math:`\\Phi(\\lambda, x, y)` of generalized eigenfunctions.

    Parameters
    ----------
    model : QuantumTreeModel
    lam : float or ndarray
        Points of the AC spectrum.
    query : KernelQuery

    Returns
    -------
    float or ndarray

    Notes
    -----
    With :math:`S = S_\\lambda` and :math:`s = S_\\lambda(L)`:

    * ``diagonal_vertex``: 1.
    * ``same_edge``: :math:`[S(L-x)S(L-y) + S(x)S(y) + \\frac{w}{q+1}(S(L-x)S(y)
      + S(x)S(L-y))]/s^2`.
    * ``distinct_edges``: :math:`[S(L-x)S(y)\\Phi_k(w) + (S(L-x)S(L-y) +
      S(x)S(y))\\Phi_{k-1}(w) + S(x)S(L-y)\\Phi_{k-2}(w)]/s^2`, with
      :math:`\\Phi_m` the spherical functions of the combinatorial tree.

    Examples
    --------
    >>> m = QuantumTreeModel(2, 1.0)
    >>> round(correlation(m, 1.0, KernelQuery("same_edge", 0.0, 0.0)), 12)
    1.0
    """
    vals, _ = _prepare(model, lam, query)
    return _shape(lam, vals["phi"])


# ---------------------------------------------------------------------------
# band integrals
# ---------------------------------------------------------------------------

@dataclass
class _BesselBand:
    mid: float
    half: float
    d: np.ndarray


@dataclass
class _ThetaBand:
    lam: C.Chebyshev
    amp: C.Chebyshev


@dataclass
class _QueryCache:
    bessel: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)


def _query_cache(model: QuantumTreeModel, query: KernelQuery) -> _QueryCache:
    with model._lock:
        return model._spectral.setdefault(query.key, _QueryCache())


def _bessel_coefficients(model: QuantumTreeModel, bands: list[Band], query: KernelQuery,
                         tol: float = 1e-15, start: int = 64, max_nodes: int = 2048):
    """Cosine coefficients of :math:`r(m + h\\cos\\varphi)\\sin^2\\varphi` per band."""
    cache = _query_cache(model, query)
    todo = [b for b in bands if b.n not in cache.bessel]
    nodes = start
    q = model.q
    while todo:
        phi = math.pi * (np.arange(nodes) + 0.5) / nodes
        cphi = np.cos(phi)
        mids = np.array([0.5 * (b.a + b.b) for b in todo])
        halfs = np.array([0.5 * (b.b - b.a) for b in todo])
        lam = (mids[:, None] + halfs[:, None] * cphi[None, :]).ravel()
        sign = np.repeat([float(b.w_sign) for b in todo], nodes)
        v = _spectral_samples(model, lam, query, sign)
        w = v["w"]
        # Psi_1 * Phi / sqrt((lam - a)(b - lam)), with the square-root factor of
        # Psi evaluated as sqrt((4q - w^2) / ((lam - a)(b - lam)))
        gap = (np.repeat(halfs, nodes) * np.tile(np.sin(phi), len(todo))) ** 2
        edge = 2.0 * math.sqrt(q)
        ratio = np.sqrt(np.clip((edge - np.abs(w)) * (edge + np.abs(w)), 0.0, None) / gap)
        r = (-sign * v["s"] * (q + 1.0) / (2.0 * ((q + 1.0) ** 2 - w * w))
             * ratio * v["phi"]).reshape(len(todo), nodes)
        c = dct(r, type=2, axis=1) / nodes
        c[:, 0] *= 0.5
        scale = np.max(np.abs(c), axis=1)
        tail = np.max(np.abs(c[:, -8:]), axis=1)
        done = tail <= tol * np.maximum(scale, np.finfo(float).tiny) * nodes
        for i, band in enumerate(todo):
            if done[i] or nodes >= max_nodes:
                if not done[i]:
                    raise ConvergenceError(
                        f"band {band.n}: density expansion did not converge with {nodes} nodes")
                cj = c[i]
                d = np.zeros(nodes + 2)
                d[:nodes] += 0.5 * cj
                d[2:] -= 0.25 * cj
                j = np.arange(nodes)
                np.add.at(d, np.abs(j - 2), -0.25 * cj)
                with model._lock:
                    cache.bessel.setdefault(band.n, _BesselBand(mids[i], halfs[i], d))
        todo = [b for i, b in enumerate(todo) if not done[i]]
        nodes *= 2
    return [cache.bessel[b.n] for b in bands]


def _bessel_eval(coef: _BesselBand, t: np.ndarray) -> np.ndarray:
    ta = np.abs(t)
    j = np.arange(coef.d.size)
    ipow = np.array([1, 1j, -1, -1j])[j % 4]
    J = jv(j[None, :], coef.half * ta[:, None])
    val = coef.half**2 * np.exp(1j * coef.mid * ta) * (J @ (coef.d * ipow))
    return np.where(t < 0, np.conj(val), val)


def _theta_interpolants(model: QuantumTreeModel, band: Band, query: KernelQuery,
                        tol: float = 1e-14, start: int = 33, max_deg: int = 1025) -> _ThetaBand:
    cache = _query_cache(model, query)
    hit = cache.theta.get(band.n)
    if hit is not None:
        return hit
    q = model.q
    root = math.sqrt(q)
    deg = start
    while True:
        th = 0.5 * math.pi * (1.0 - np.cos(math.pi * np.arange(deg + 1) / deg))
        target = 2.0 * root * np.cos(th)
        target[0], target[-1] = 2.0 * root, -2.0 * root
        lam = invert_w_on_band(model, band, target)
        sign = np.full(lam.size, float(band.w_sign))
        v = _spectral_samples(model, lam, query, sign)
        sin_t = np.sin(th)
        # Psi(2 sqrt(q) cos(theta)) written in theta, free of cancellation at the edges
        psi = (q + 1.0) * 2.0 * root * sin_t / (2.0 * ((q + 1.0) ** 2 - 4.0 * q * np.cos(th) ** 2))
        amp = (-sign * v["s"] * psi * v["phi"]) * 2.0 * root * sin_t / np.abs(v["wp"])
        f_lam = C.Chebyshev.fit(th, lam, deg, domain=[0.0, math.pi])
        f_amp = C.Chebyshev.fit(th, amp, deg, domain=[0.0, math.pi])
        ok = all(np.max(np.abs(f.coef[-4:])) <= tol * max(np.max(np.abs(f.coef)), 1e-300) * 10
                 for f in (f_lam, f_amp))
        if ok or deg >= max_deg:
            if not ok:
                raise ConvergenceError(f"band {band.n}: theta interpolation did not converge")
            out = _ThetaBand(f_lam, f_amp)
            with model._lock:
                cache.theta.setdefault(band.n, out)
            return out
        deg = 2 * deg - 1


def theta_nodes(t: float, band: Band) -> int:
    """Gauss-Legendre node count of the θ rule for one band."""
    return max(64, math.ceil(40.0 * abs(t) * (band.b - band.a) / (2.0 * math.pi)))


def _theta_eval(model, band, query, t: np.ndarray) -> np.ndarray:
    interp = _theta_interpolants(model, band, query)
    out = np.empty(t.size, dtype=complex)
    for i, ti in enumerate(t):
        n = theta_nodes(ti, band)
        panels = math.ceil(n / _PANEL)
        edges = np.linspace(0.0, math.pi, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        th = (0.5 * (edges[1:] + edges[:-1])[:, None] + half * _XG[None, :]).ravel()
        w = np.tile(half * _WG, panels)
        out[i] = np.sum(w * np.exp(1j * ti * interp.lam(th)) * interp.amp(th))
    return out / math.pi


def band_integrals(model: QuantumTreeModel, t, query: KernelQuery | None = None,
                   n_bands: int = 40, *, route: str = "auto") -> np.ndarray:
    """Per-band integrals :math:`\\pi^{-1}\\int_{I_n} e^{it\\lambda}\\Psi_1\\Phi\\,d\\lambda`.

    Parameters
    ----------
    model : QuantumTreeModel
    t : float or array_like
    query : KernelQuery, optional
        Defaults to the diagonal at a vertex.
    n_bands : int
    route : {"auto", "bessel", "theta"}

    Returns
    -------
    ndarray of complex, shape ``(n_bands, len(t))``
    """
    if route not in ("auto", "bessel", "theta"):
        raise DomainError(f"unknown route {route!r}")
    if n_bands < 1:
        raise DomainError("n_bands must be at least 1")
    query = DIAGONAL if query is None else query
    query.check(model.L)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    bands = compute_bands(model, n_bands)
    out = np.empty((n_bands, ts.size), dtype=complex)
    use_theta = np.zeros((n_bands, ts.size), dtype=bool)
    if route == "theta":
        use_theta[:] = True
    elif route == "auto":
        for i, band in enumerate(bands):
            use_theta[i] = [theta_nodes(x, band) <= _THETA_BUDGET for x in ts]
    if not np.all(use_theta):
        coefs = _bessel_coefficients(model, bands, query)
    for i, band in enumerate(bands):
        sel = use_theta[i]
        if np.any(sel):
            out[i, sel] = _theta_eval(model, band, query, ts[sel])
        if not np.all(sel):
            out[i, ~sel] = _bessel_eval(coefs[i], ts[~sel])
    return out


# ---------------------------------------------------------------------------
# endpoint asymptotics
# ---------------------------------------------------------------------------

def main_term_prefactor(q: int, t) -> np.ndarray:
    """:math:`q^{1/4}(q+1)/((q-1)^2\\sqrt\\pi\\,t^{3/2})`."""
    t = np.asarray(t, dtype=float)
    return q**0.25 * (q + 1.0) / ((q - 1.0) ** 2 * math.sqrt(math.pi) * t**1.5)


def _edge_amplitudes(model: QuantumTreeModel, bands: list[Band], query: KernelQuery):
    """:math:`|w'|^{1/2}|s|\\Phi` at ``a_n`` and ``b_n``, shape ``(n_bands, 2)``."""
    cache = _query_cache(model, query)
    todo = [b for b in bands if b.n not in cache.edges]
    if todo:
        lam = np.array([[b.a, b.b] for b in todo]).ravel()
        sign = np.repeat([float(b.w_sign) for b in todo], 2)
        snap = np.tile([True, False], len(todo))
        v = _spectral_samples(model, lam, query, sign, snap, ~snap)
        amp = (np.sqrt(np.abs(v["wp"])) * np.abs(v["s"]) * v["phi"]).reshape(-1, 2)
        with model._lock:
            for b, row in zip(todo, amp):
                cache.edges.setdefault(b.n, row)
    return np.array([cache.edges[b.n] for b in bands])


def band_main_terms(model: QuantumTreeModel, t, query: KernelQuery | None = None,
                    n_bands: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint (stationary-phase) terms of each band and their moduli bound.

    The term of band ``n`` is

    .. math:: \\frac{i q^{1/4}(q+1)}{(q-1)^2\\sqrt\\pi\\,t^{3/2}}
              \\Big[\\frac{e^{i\\pi/4}e^{ia_nt}A(a_n)}{2}
              - \\frac{e^{-i\\pi/4}e^{ib_nt}A(b_n)}{2}\\Big],
              \\qquad A = |w'|^{1/2}|s|\\Phi,

    i.e. the contribution of the square-root vanishing of the density at
    each edge.

    Returns
    -------
    main : ndarray of complex, shape ``(n_bands, len(t))``
    bound : ndarray, shape ``(n_bands, len(t))``
        ``pref * (|A(a_n)| + |A(b_n)|) / 2``.
    """
    query = DIAGONAL if query is None else query
    query.check(model.L)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise DomainError("the endpoint asymptotics need t > 0")
    bands = compute_bands(model, n_bands)
    amp = _edge_amplitudes(model, bands, query)
    a = np.array([b.a for b in bands])
    b = np.array([b.b for b in bands])
    pref = main_term_prefactor(model.q, ts)[None, :]
    ea = np.exp(1j * (a[:, None] * ts[None, :] + 0.25 * math.pi))
    eb = np.exp(1j * (b[:, None] * ts[None, :] - 0.25 * math.pi))
    main = 0.5j * pref * (ea * amp[:, :1] - eb * amp[:, 1:])
    bound = 0.5 * pref * (np.abs(amp[:, :1]) + np.abs(amp[:, 1:]))
    return main, bound


def _tail(envelope: np.ndarray) -> np.ndarray:
    """``2 C N^{-1/2}`` with ``C = max n^{3/2} env_n`` over the last bands."""
    n_bands = envelope.shape[0]
    last = np.arange(max(1, n_bands - 4), n_bands + 1)
    C_fit = np.max(envelope[last - 1] * last[:, None] ** 1.5, axis=0)
    return 2.0 * C_fit / math.sqrt(n_bands)


def _pack(t, value, tail, n_bands) -> KernelEvaluation:
    if np.ndim(t) == 0:
        return KernelEvaluation(float(t), complex(value[0]), float(tail[0]), n_bands)
    shape = np.shape(t)
    return KernelEvaluation(np.asarray(t, dtype=float), value.reshape(shape),
                            tail.reshape(shape), n_bands)


def kernel_numeric(model: QuantumTreeModel, t, query: KernelQuery | None = None,
                   n_bands: int = 40, *, route: str = "auto",
                   warn: bool = True) -> KernelEvaluation:
    """Kernel of :math:`e^{itH}\\mathbf 1_{ac}(H)` summed over bands ``1..n_bands``.

    Parameters
    ----------
    model : QuantumTreeModel
    t : float or array_like
        Times; negative values give the complex conjugate.
    query : KernelQuery, optional
        Defaults to the diagonal at a vertex.
    n_bands : int, optional
    route : {"auto", "bessel", "theta"}, optional
    warn : bool, optional
        Emit :class:`TruncationWarning` when the tail estimate exceeds
        ``1e-3 |value|``.

    Returns
    -------
    KernelEvaluation
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    per_band = band_integrals(model, ts, query, n_bands, route=route)
    value = per_band.sum(axis=0)
    env = np.abs(per_band)
    pos = ts != 0
    if np.any(pos):
        _, bound = band_main_terms(model, np.abs(ts[pos]), query, n_bands)
        env[:, pos] = np.maximum(env[:, pos], bound)
    tail = _tail(env)
    if warn and np.any(tail > 1e-3 * np.abs(value)):
        warnings.warn(f"band truncation at n = {n_bands} leaves an estimated tail up to "
                      f"{np.max(tail):.3e}", TruncationWarning, stacklevel=2)
    return _pack(t, value, tail, n_bands)


def kernel_main_term(model: QuantumTreeModel, t, query: KernelQuery | None = None,
                     n_bands: int = 40) -> KernelEvaluation:
    """Sum of the endpoint terms of :func:`band_main_terms` over bands ``1..n_bands``.

    The reported tail bounds the omitted bands from the :math:`n^{-3/2}`
    decay of the term moduli.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    main, bound = band_main_terms(model, ts, query, n_bands)
    return _pack(t, main.sum(axis=0), _tail(bound), n_bands)


def band_contributions(model: QuantumTreeModel, t: float, query: KernelQuery | None = None,
                       n_bands: int = 40, *, route: str = "auto") -> list[BandContribution]:
    """Per-band numeric values and endpoint terms at one time ``t > 0``."""
    numeric = band_integrals(model, [t], query, n_bands, route=route)[:, 0]
    main, bound = band_main_terms(model, [t], query, n_bands)
    return [BandContribution(n=i + 1, main=complex(main[i, 0]), numeric=complex(numeric[i]),
                             magnitude_bound=float(bound[i, 0]))
            for i in range(n_bands)]


# ---------------------------------------------------------------------------
# free line
# ---------------------------------------------------------------------------

def free_line_kernel(t: float, v: float) -> complex:
    """Free Schrödinger kernel on the line, :math:`\\tfrac12\\sqrt{i/(\\pi t)}\\,e^{-itv^2/4}`.

    Here ``v = |x - y| / t``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    return 0.5 * np.sqrt(1j / (math.pi * t)) * np.exp(-0.25j * t * v * v)


def _ibp_tail(t: float, K: float, v: float, terms: int) -> complex:
    # int_K^inf e^{it(k^2 + sigma k v)} dk by repeated integration by parts
    total = 0j
    for sigma in (1.0, -1.0):
        u = 2.0 * K + sigma * v
        phase = np.exp(1j * t * (K * K + sigma * K * v))
        acc, coef = 0j, 1.0
        for m in range(terms):
            acc += coef / ((1j * t) ** (m + 1) * u ** (2 * m + 1))
            coef *= 2.0 * (2 * m + 1)
        total += -phase * acc / 2.0
    return total


def free_line_numeric(t: float, v: float, *, tol: float = 1e-10, max_doublings: int = 8) -> complex:
    """Quadrature of :math:`\\int_0^\\infty e^{it\\lambda}\\cos(\\sqrt\\lambda\\,vt)\\,(2\\pi\\sqrt\\lambda)^{-1}d\\lambda`.

    After :math:`k = \\sqrt\\lambda` the integrand is
    :math:`\\pi^{-1}e^{itk^2}\\cos(kvt)`.  The range ``[0, K]`` is covered by
    Gauss-Legendre panels (doubled until stable) and ``[K, inf)`` by an
    integration-by-parts expansion, which is accurate once ``t K^2`` is
    large.

    Raises
    ------
    ConvergenceError
        If the panel doubling does not settle within `tol`.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    if v < 0:
        raise DomainError("v must be nonnegative")
    K = v + max(4.0, 12.0 / math.sqrt(t))
    tail = _ibp_tail(t, K, v, 12)
    panels = max(8, math.ceil(t * K * K / math.pi + t * v * K / (2 * math.pi)))

    def run(p: int) -> complex:
        edges = np.linspace(0.0, K, p + 1)
        half = 0.5 * (edges[1] - edges[0])
        k = (0.5 * (edges[1:] + edges[:-1])[:, None] + half * _XG[None, :]).ravel()
        w = np.tile(half * _WG, p)
        return complex(np.sum(w * np.exp(1j * t * k * k) * np.cos(k * v * t)))

    prev = run(panels)
    for _ in range(max_doublings):
        panels *= 2
        cur = run(panels)
        if abs(cur - prev) < tol:
            return (cur + tail) / math.pi
        prev = cur
    raise ConvergenceError(f"free-line quadrature at t={t}, v={v} did not converge")
