"""Absolutely continuous spectrum of the quantum tree.

The AC spectrum is :math:`\\{\\lambda : |w(\\lambda)| \\le 2\\sqrt q\\}`, a union of
bands :math:`I_n = [a_n, b_n]`.  Band ``n`` sits between the Dirichlet values
:math:`\\delta_{n-1} < \\delta_n` (roots of :math:`s`), on which
:math:`w(\\delta_n) = (-1)^n(q+1)`; inside that gap ``w`` is monotone, so each
band edge is the unique solution of :math:`w = \\pm 2\\sqrt q` there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .edge import QuantumTreeModel, endpoint_values
from .errors import ConvergenceError, DomainError, InvariantError

__all__ = [
    "Band",
    "dirichlet_values",
    "compute_bands",
    "invert_w_on_band",
    "band_of",
    "bracketed_newton",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Band:
    """One band :math:`[a_n, b_n]` of the AC spectrum.

    Attributes
    ----------
    n : int
        Band index, starting at 1.
    a, b : float
        Band edges.
    w_sign : int
        Sign of :math:`w'` on the band, equal to :math:`(-1)^n`.
    dirichlet_above : float
        :math:`\\delta_n`, the Dirichlet value just above the band.
    dirichlet_below : float
        :math:`\\delta_{n-1}`, or for ``n = 1`` a point below the band where
        :math:`w \\ge q+1`.
    wp_a, wp_b : float
        :math:`w'(a_n)` and :math:`w'(b_n)`.
    s_a, s_b : float
        :math:`s(a_n)` and :math:`s(b_n)`.
    """

    n: int
    a: float
    b: float
    w_sign: int
    dirichlet_above: float
    dirichlet_below: float
    wp_a: float
    wp_b: float
    s_a: float
    s_b: float

    @property
    def width(self) -> float:
        return self.b - self.a

    def contains(self, lam, tol: float = 0.0):
        lam = np.asarray(lam, dtype=float)
        return (lam >= self.a - tol) & (lam <= self.b + tol)


def bracketed_newton(fun, lo, hi, sign_lo, x0=None, *, maxiter: int = 80):
    """Vectorized safeguarded Newton iteration on brackets ``[lo, hi]``.

    Parameters
    ----------
    fun : callable
        ``fun(x, idx) -> (f, fprime)`` where ``x`` holds the current iterates
        of the still-active roots and ``idx`` their positions.
    lo, hi : ndarray
        Brackets with ``sign(f(lo)) == sign_lo`` and a sign change inside.
    sign_lo : ndarray
        Sign of ``f`` at the lower bracket end.
    x0 : ndarray, optional
        Starting points inside the brackets (default: midpoints).
    maxiter : int, optional

    Returns
    -------
    ndarray
        Roots, converged to a few units in the last place.

    Raises
    ------
    ConvergenceError
        When some root has not converged after `maxiter` iterations.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    sign_lo = np.array(sign_lo, dtype=float) * np.ones_like(lo)
    x = 0.5 * (lo + hi) if x0 is None else np.array(x0, dtype=float)
    active = np.ones(lo.shape, dtype=bool)
    for it in range(maxiter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return x
        xi = x[idx]
        f, fp = fun(xi, idx)
        f = np.asarray(f, dtype=float)
        fp = np.asarray(fp, dtype=float)
        exact = f == 0
        below = np.sign(f) == sign_lo[idx]
        lo[idx] = np.where(below & ~exact, xi, lo[idx])
        hi[idx] = np.where(~below & ~exact, xi, hi[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xi - f / fp
        # rounding noise in f can keep Newton hopping by a few ulps; widen the
        # acceptance window gradually after the quadratic phase is over
        widen = 1.0 if it < 20 else 10.0 ** ((it - 20) // 5 + 1)
        tol = 4.0 * widen * _EPS * np.maximum(np.abs(xi), 1.0)
        converged = exact | (np.isfinite(xn) & (np.abs(xn - xi) <= tol))
        bad = ~np.isfinite(xn) | (xn < lo[idx]) | (xn > hi[idx])
        xn = np.where(bad & ~converged, 0.5 * (lo[idx] + hi[idx]), xn)
        xn = np.where(exact, xi, xn)
        done = converged | (hi[idx] - lo[idx] <= tol)
        x[idx] = xn
        active[idx[done]] = False
    if np.any(active):
        raise ConvergenceError(f"root iteration did not converge for {int(active.sum())} roots")
    return x


# ---------------------------------------------------------------------------
# Dirichlet values
# ---------------------------------------------------------------------------

def _s_and_ds(model: QuantumTreeModel):
    def fun(lam, idx=None):
        ev = endpoint_values(model, lam)
        return ev["s"], ev["ds"]
    return fun


def _scan_dirichlet(model: QuantumTreeModel, n_max: int, density: int):
    L = model.L
    wmin, wmax = model.potential.w_min, model.potential.w_max
    osc = wmax - wmin
    unit = math.pi / L
    # an irrational offset keeps grid points away from the exact roots of
    # the unperturbed problem
    nu_lo = (0.5 - 0.0731 * math.sqrt(2.0)) * unit
    nu_hi = math.sqrt((n_max * unit) ** 2 + osc) + 0.5 * unit
    per = density * (1 + math.ceil(osc / unit**2))
    count = max(16, math.ceil((nu_hi - nu_lo) / unit * per))
    nu = np.linspace(nu_lo, nu_hi, count + 1)
    lam = wmin + nu * nu
    s = endpoint_values(model, lam)["s"]
    neg = np.signbit(s)
    change = np.nonzero(neg[:-1] != neg[1:])[0]
    return lam, s, change


def dirichlet_values(model: QuantumTreeModel, n_max: int) -> np.ndarray:
    """The first `n_max` Dirichlet values :math:`\\delta_1 < \\delta_2 < \\dots`.

    The roots of :math:`s(\\lambda) = S_\\lambda(L)` are bracketed by a scan
    in :math:`\\nu = \\sqrt{\\lambda - \\min W}` that starts below
    :math:`\\delta_1 \\ge (\\pi/L)^2 + \\min W` and extends beyond
    :math:`\\delta_{n_{max}} \\le (n_{max}\\pi/L)^2 + \\max W`, and then refined
    by safeguarded Newton with the variational derivative of ``s``.

    Parameters
    ----------
    model : QuantumTreeModel
    n_max : int
        Number of values, ``>= 1``.

    Returns
    -------
    ndarray, shape (n_max,)

    Raises
    ------
    InvariantError
        If the scan finds fewer roots than expected even at doubled density.
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    cached = model._dirichlet
    if len(cached) >= n_max:
        return np.array(cached[:n_max])
    for density in (8, 16):
        lam, s, change = _scan_dirichlet(model, n_max, density)
        if change.size >= n_max:
            break
    else:
        raise InvariantError(
            f"found {change.size} sign changes of s, expected at least {n_max}")
    change = change[:n_max]
    lo, hi = lam[change], lam[change + 1]
    slo, shi = s[change], s[change + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        x0 = np.where(shi != slo, lo - slo * (hi - lo) / (shi - slo), 0.5 * (lo + hi))
    x0 = np.clip(x0, lo, hi)
    roots = bracketed_newton(_s_and_ds(model), lo, hi, np.sign(slo), x0)
    with model._lock:
        merged = model._dirichlet + [float(v) for v in roots[len(model._dirichlet):]]
        if len(model._dirichlet) < n_max:
            model._dirichlet = merged
    return np.array(merged[:n_max])


# ---------------------------------------------------------------------------
# bands
# ---------------------------------------------------------------------------

def _w_minus(model: QuantumTreeModel, targets):
    """Residual ``w - target`` and ``w'`` for root positions ``idx``."""
    targets = np.asarray(targets, dtype=float)

    def fun(lam, idx):
        ev = endpoint_values(model, lam)
        w = (model.q + 1.0) * ev["c"] + model.alpha * ev["s"]
        dw = (model.q + 1.0) * ev["dc"] + model.alpha * ev["ds"]
        return w - targets[idx], dw

    return fun


def _lower_wall(model: QuantumTreeModel, delta1: float) -> float:
    step = (math.pi / model.L) ** 2
    for k in range(60):
        lam = delta1 - step * 2.0**k
        ev = endpoint_values(model, lam)
        w = (model.q + 1.0) * ev["c"][0] + model.alpha * ev["s"][0]
        if w >= model.q + 1.0:
            return lam
    raise InvariantError("could not find a point below the first band with w >= q + 1")


def compute_bands(model: QuantumTreeModel, n_max: int, *, samples: int = 33) -> list[Band]:
    """Band table of the AC spectrum for bands ``1..n_max``.

    Parameters
    ----------
    model : QuantumTreeModel
    n_max : int
    samples : int, optional
        Points per Dirichlet gap used to check monotonicity of ``w`` and to
        seed the edge root-finding.

    Returns
    -------
    list of Band

    Raises
    ------
    InvariantError
        If ``w`` crosses a band-edge level more than once inside a gap, the
        vertex values :math:`w(\\delta_n) = (-1)^n(q+1)` fail, or the
        orientation of ``w`` disagrees with :math:`(-1)^n`.

    Examples
    --------
    >>> m = QuantumTreeModel(2, 1.0)
    >>> round(compute_bands(m, 1)[0].a, 6)
    0.115489
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    if len(model._bands) >= n_max:
        return list(model._bands[:n_max])
    q = model.q
    edge = 2.0 * math.sqrt(q)
    delta = dirichlet_values(model, n_max)
    walls = np.concatenate([[_lower_wall(model, float(delta[0]))], delta])

    # vertex identity at the Dirichlet values
    ev = endpoint_values(model, delta)
    wd = (q + 1.0) * ev["c"] + model.alpha * ev["s"]
    expect = (q + 1.0) * (-1.0) ** np.arange(1, n_max + 1)
    bad = np.nonzero(np.abs(wd - expect) > 1e-7 * (q + 1.0))[0]
    if bad.size:
        n = int(bad[0]) + 1
        raise InvariantError(f"w(delta_{n}) = {wd[bad[0]]:.12g}, expected {expect[bad[0]]:.12g}")

    frac = np.linspace(0.0, 1.0, samples)
    grid = walls[:-1, None] + (walls[1:] - walls[:-1])[:, None] * frac[None, :]
    ev = endpoint_values(model, grid.ravel())
    wgrid = ((q + 1.0) * ev["c"] + model.alpha * ev["s"]).reshape(grid.shape)
    # the wall values are known exactly; use them to avoid rounding ambiguity
    wgrid[0, 0] = max(wgrid[0, 0], q + 1.0)
    wgrid[1:, 0] = expect[:-1]
    wgrid[:, -1] = expect

    ns = np.arange(1, n_max + 1)
    sign = (-1.0) ** ns                     # orientation of w on band n
    t_a = -sign * edge                      # w(a_n)
    t_b = sign * edge                       # w(b_n)
    lo_list, hi_list, sl_list, x0_list, tgt = [], [], [], [], []
    for i, n in enumerate(ns):
        for target in (t_a[i], t_b[i]):
            g = wgrid[i] - target
            neg = np.signbit(g)
            ch = np.nonzero(neg[:-1] != neg[1:])[0]
            if ch.size != 1:
                raise InvariantError(
                    f"w - ({target:+.6g}) changes sign {ch.size} times on "
                    f"({walls[i]:.12g}, {walls[i + 1]:.12g}) (band {n}); w is not monotone")
            j = ch[0]
            lo, hi = grid[i, j], grid[i, j + 1]
            glo, ghi = g[j], g[j + 1]
            lo_list.append(lo)
            hi_list.append(hi)
            sl_list.append(np.sign(glo) if glo != 0 else -np.sign(ghi))
            x0_list.append(lo - glo * (hi - lo) / (ghi - glo) if ghi != glo else 0.5 * (lo + hi))
            tgt.append(target)
    roots = bracketed_newton(_w_minus(model, tgt), lo_list, hi_list, sl_list, x0_list)
    a = roots[0::2]
    b = roots[1::2]
    if np.any(b <= a):
        raise InvariantError("band edges out of order")
    ev_a = endpoint_values(model, a)
    ev_b = endpoint_values(model, b)
    wp_a = (q + 1.0) * ev_a["dc"] + model.alpha * ev_a["ds"]
    wp_b = (q + 1.0) * ev_b["dc"] + model.alpha * ev_b["ds"]
    for i, n in enumerate(ns):
        if np.sign(wp_a[i]) != sign[i] or np.sign(wp_b[i]) != sign[i]:
            raise InvariantError(f"orientation of w on band {n} disagrees with (-1)^n")
    bands = [
        Band(n=int(n), a=float(a[i]), b=float(b[i]), w_sign=int(sign[i]),
             dirichlet_above=float(delta[i]), dirichlet_below=float(walls[i]),
             wp_a=float(wp_a[i]), wp_b=float(wp_b[i]),
             s_a=float(ev_a["s"][i]), s_b=float(ev_b["s"][i]))
        for i, n in enumerate(ns)
    ]
    with model._lock:
        # bands already handed out stay fixed when the table is extended
        bands = model._bands + bands[len(model._bands):]
        if len(model._bands) < n_max:
            model._bands = bands
    return list(bands)


def band_of(model: QuantumTreeModel, lam: float, n_max: int = 40, tol: float = 1e-12) -> Band:
    """The band containing `lam`, searching bands ``1..n_max``."""
    for band in compute_bands(model, n_max):
        if band.contains(lam, tol * max(1.0, abs(lam))):
            return band
    raise DomainError(f"lambda = {lam} is not in the first {n_max} bands of the AC spectrum")


def invert_w_on_band(model: QuantumTreeModel, band: Band, target):
    """Solve :math:`w(\\lambda) = \\text{target}` for :math:`\\lambda \\in [a_n, b_n]`.

    Parameters
    ----------
    model : QuantumTreeModel
    band : Band
    target : float or ndarray
        Values in :math:`[-2\\sqrt q, 2\\sqrt q]`.

    Returns
    -------
    float or ndarray

    Notes
    -----
    Safeguarded Newton on the bracket ``[a, b]``; since ``w`` is monotone
    there the solution is unique.  Targets equal to the edge levels return
    the stored edges exactly.
    """
    edge = 2.0 * math.sqrt(model.q)
    tgt = np.atleast_1d(np.asarray(target, dtype=float))
    if np.any(np.abs(tgt) > edge * (1 + 1e-12)):
        raise DomainError("target outside [-2 sqrt(q), 2 sqrt(q)]")
    tgt = np.clip(tgt, -edge, edge)
    w_a = -band.w_sign * edge
    out = np.empty_like(tgt)
    at_a = tgt == w_a
    at_b = tgt == -w_a
    out[at_a] = band.a
    out[at_b] = band.b
    rest = ~(at_a | at_b)
    if np.any(rest):
        tr = tgt[rest]
        # monotone interpolation of w between the edges as a starting point
        frac = (tr - w_a) / (-2.0 * w_a)
        x0 = band.a + frac * (band.b - band.a)
        m = tr.size
        out[rest] = bracketed_newton(_w_minus(model, tr), np.full(m, band.a),
                                     np.full(m, band.b), np.full(m, -float(band.w_sign)), x0)
    return float(out[0]) if np.ndim(target) == 0 else out.reshape(np.shape(target))
