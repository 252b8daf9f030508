"""Solutions of :math:`-\\psi'' + W\\psi = \\lambda\\psi` on one edge of the quantum tree.

The fundamental pair :math:`C_\\lambda, S_\\lambda` (``C(0)=1, C'(0)=0,
S(0)=0, S'(0)=1``) and their first two :math:`\\lambda`-derivatives are
integrated together.  Differentiating the equation in :math:`\\lambda` gives
the variational system

.. math:: u'' = (W-\\lambda)u - y, \\qquad v'' = (W-\\lambda)v - 2u,

with zero initial data, where ``y`` is ``C`` or ``S``, ``u`` its first and
``v`` its second :math:`\\lambda`-derivative.  The integrator is the
six-stage Gauss-Legendre collocation method (order 12), which is symplectic
and keeps the Wronskian at rounding level.  Its stage equations are linear
and are solved exactly at every step for a whole batch of :math:`\\lambda`.
"""
from __future__ import annotations

import csv
import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import ConvergenceError, DomainError, SymmetryWarning
from .specfun import validate_degree

__all__ = [
    "Potential",
    "make_potential",
    "QuantumTreeModel",
    "EdgeSolutionTable",
    "edge_values",
    "solve_edge",
    "endpoint_values",
    "w_eval",
    "volterra_s",
    "volterra_c",
]


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """A bounded real edge potential.

    Attributes
    ----------
    func : callable
        Vectorized evaluator on :math:`[0, L]`.
    spec : str
        Text form, e.g. ``'cosine:0.5'``.
    breakpoints : tuple of float
        Interior points where the potential is not smooth.  The integrators
        never step across them.
    w_min, w_max : float
        Range of the potential on the edge.
    """

    func: Callable[[np.ndarray], np.ndarray]
    spec: str
    breakpoints: tuple = ()
    w_min: float = 0.0
    w_max: float = 0.0
    is_zero: bool = False

    def __call__(self, x):
        return self.func(x)

    @property
    def sup_norm(self) -> float:
        return max(abs(self.w_min), abs(self.w_max))


def _range_of(func, L: float, breakpoints=()) -> tuple[float, float]:
    x = np.concatenate([np.linspace(0.0, L, 4097), np.asarray(breakpoints, dtype=float)])
    vals = np.asarray(func(x), dtype=float)
    return float(vals.min()), float(vals.max())


def make_potential(spec, L: float) -> Potential:
    """Build a :class:`Potential` from a text spec or a callable.

    Accepted text forms are ``'zero'``, ``'cosine:A'`` for
    :math:`A\\cos(2\\pi x/L)`, ``'well:depth,width'`` for a square well of the
    given depth centred on the edge midpoint, and ``'table:PATH'`` for a CSV
    file with header ``x,value`` interpolated by a cubic spline.

    Parameters
    ----------
    spec : str, callable or Potential
    L : float
        Edge length.

    Returns
    -------
    Potential
    """
    if isinstance(spec, Potential):
        return spec
    if callable(spec):
        lo, hi = _range_of(spec, L)
        return Potential(func=spec, spec="callable", w_min=lo, w_max=hi)
    if not isinstance(spec, str):
        raise DomainError(f"cannot interpret potential {spec!r}")
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "zero":
        return Potential(func=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                         spec="zero", is_zero=True)
    if kind == "cosine":
        try:
            amp = float(arg)
        except ValueError:
            raise DomainError(f"bad cosine amplitude in {spec!r}") from None
        if amp == 0.0:
            return make_potential("zero", L)
        return Potential(
            func=lambda x: amp * np.cos(2.0 * math.pi * np.asarray(x, dtype=float) / L),
            spec=f"cosine:{amp!r}", w_min=-abs(amp), w_max=abs(amp),
        )
    if kind == "well":
        try:
            depth, width = (float(v) for v in arg.split(","))
        except ValueError:
            raise DomainError(f"expected well:depth,width, got {spec!r}") from None
        if not 0.0 < width < L:
            raise DomainError("well width must lie in (0, L)")
        lo, hi = 0.5 * (L - width), 0.5 * (L + width)

        def well(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= lo) & (x <= hi), -depth, 0.0)

        return Potential(func=well, spec=f"well:{depth!r},{width!r}", breakpoints=(lo, hi),
                         w_min=min(0.0, -depth), w_max=max(0.0, -depth))
    if kind == "table":
        return _table_potential(arg, L)
    raise DomainError(f"unknown potential kind {kind!r}")


def _table_potential(path: str, L: float) -> Potential:
    from scipy.interpolate import CubicSpline

    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DomainError(f"cannot read potential table {path!r}: {exc}") from None
    if not rows or [h.strip().lower() for h in rows[0]] != ["x", "value"]:
        raise DomainError("potential table needs the header row 'x,value'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError:
        raise DomainError("potential table has non-numeric entries") from None
    if data.shape[0] < 4:
        raise DomainError("potential table needs at least 4 rows")
    x, y = data[:, 0], data[:, 1]
    if np.any(np.diff(x) <= 0):
        raise DomainError("potential table x column must be strictly increasing")
    if abs(x[0]) > 1e-12 or abs(x[-1] - L) > 1e-9 * max(1.0, L):
        raise DomainError(f"potential table must span [0, {L}]")
    spline = CubicSpline(x, y)
    knots = tuple(float(v) for v in x[1:-1])
    lo, hi = _range_of(spline, L, knots)
    return Potential(func=lambda s: spline(np.asarray(s, dtype=float)), spec=f"table:{path}",
                     breakpoints=knots, w_min=lo, w_max=hi)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class QuantumTreeModel:
    """Equilateral quantum tree with edge potential and vertex coupling.

    Parameters
    ----------
    q : int
        Branching number; every vertex has ``q + 1`` edges.
    L : float
        Edge length.
    alpha : float, optional
        Coupling constant of the delta vertex conditions (0 is Kirchhoff).
    potential : str, callable or Potential, optional
        Edge potential, see :func:`make_potential`.
    min_steps : int, optional
        Minimal number of integrator steps per edge.
    step_density : float, optional
        Steps per unit of :math:`L\\sqrt{|\\lambda|+\\|W\\|_\\infty}`.

    Notes
    -----
    Band tables and edge solutions are cached on the instance; the caches
    are filled once and then only read.
    """

    def __init__(self, q: int, L: float = 1.0, alpha: float = 0.0, potential="zero", *,
                 min_steps: int = 64, step_density: float = 2.0):
        self.q = validate_degree(q)
        self.L = float(L)
        if not self.L > 0:
            raise DomainError(f"edge length must be positive, got {L}")
        self.alpha = float(alpha)
        self.potential = make_potential(potential, self.L)
        self.min_steps = int(min_steps)
        self.step_density = float(step_density)
        self._lock = threading.Lock()
        self._tables: dict = {}
        self._bands: list = []
        self._dirichlet: list = []
        self._spectral: dict = {}
        self.symmetric = self._check_symmetry()

    def __repr__(self) -> str:
        return (f"QuantumTreeModel(q={self.q}, L={self.L!r}, alpha={self.alpha!r}, "
                f"potential={self.potential.spec!r})")

    def W(self, x):
        return self.potential(x)

    def _check_symmetry(self) -> bool:
        x = np.linspace(0.0, self.L, 257)
        gap = float(np.max(np.abs(self.W(self.L - x) - self.W(x))))
        if gap > 1e-10:
            warnings.warn(f"edge potential is not symmetric (max gap {gap:.3e}); "
                          "the vertex identities assume W(L-x) = W(x)", SymmetryWarning,
                          stacklevel=3)
            return False
        return True

    def config(self) -> dict:
        return {"q": self.q, "L": self.L, "alpha": self.alpha,
                "potential": self.potential.spec}


# ---------------------------------------------------------------------------
# Gauss-Legendre collocation
# ---------------------------------------------------------------------------

def _gauss_tableau(s: int):
    """Butcher tableau of the s-stage Gauss method, built in extended precision."""
    import mpmath

    with mpmath.workdps(40):
        guess = np.polynomial.legendre.leggauss(s)[0]
        roots = [mpmath.findroot(lambda x: mpmath.legendre(s, x), mpmath.mpf(float(g)))
                 for g in guess]
        c = [(r + 1) / 2 for r in roots]
        A = np.empty((s, s))
        b = np.empty(s)
        for j in range(s):
            # Lagrange basis polynomial through the nodes, as coefficients
            coef = [mpmath.mpf(1)]
            denom = mpmath.mpf(1)
            for m in range(s):
                if m == j:
                    continue
                coef = [x - c[m] * y for x, y in zip([mpmath.mpf(0)] + coef, coef + [mpmath.mpf(0)])]
                denom *= c[j] - c[m]

            def prim(x, coef=coef, denom=denom):
                return sum(a * x ** (k + 1) / (k + 1) for k, a in enumerate(coef)) / denom

            for i in range(s):
                A[i, j] = float(prim(c[i]))
            b[j] = float(prim(mpmath.mpf(1)))
        return A, b, np.array([float(v) for v in c])


_STAGES = 6
_A, _B, _C = _gauss_tableau(_STAGES)
_A2 = _A @ _A
_EYE = np.eye(_STAGES)

# column layout of the state: C, S, dC, dS, d2C, d2S (value and x-derivative
# arrays share it)
_COLS = ("C", "S", "dC", "dS", "d2C", "d2S")


def _step_count(model: QuantumTreeModel, lam: np.ndarray) -> int:
    scale = math.sqrt(float(np.max(np.abs(lam))) + model.potential.sup_norm)
    return max(model.min_steps, math.ceil(model.step_density * model.L * scale))


def _propagate(model: QuantumTreeModel, lam: np.ndarray, points: np.ndarray,
               steps: int | None = None):
    """Integrate the augmented system and sample it at sorted `points`.

    Returns ``(P, R)`` of shape ``(m, len(points), 6)``: values and
    x-derivatives.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    m = lam.size
    L = model.L
    if steps is None:
        steps = _step_count(model, lam)
    knots = np.unique(np.concatenate([[0.0, L], points,
                                      [b for b in model.potential.breakpoints if 0 < b < L]]))
    want = {float(p): i for i, p in enumerate(points)}
    P = np.empty((m, len(points), 6))
    R = np.empty((m, len(points), 6))
    p = np.zeros((m, 6))
    r = np.zeros((m, 6))
    p[:, 0] = 1.0
    r[:, 1] = 1.0
    # compensation terms of Kahan summation for the state update
    ep = np.zeros_like(p)
    er = np.zeros_like(r)
    if 0.0 in want:
        P[:, want[0.0]] = p
        R[:, want[0.0]] = r
    W = model.potential
    zero = W.is_zero
    for x0, x1 in zip(knots[:-1], knots[1:]):
        n = max(1, math.ceil(steps * (x1 - x0) / L))
        h = (x1 - x0) / n
        hA, hC, hB, h2A2 = h * _A, h * _C, h * _B, h * h * _A2
        if zero:
            om_fixed = np.broadcast_to(-lam[:, None], (m, _STAGES))
            Gi_fixed = np.linalg.inv(_EYE - om_fixed[:, :, None] * h2A2)
        for k in range(n):
            if zero:
                om, Gi = om_fixed, Gi_fixed
            else:
                om = np.asarray(W(x0 + k * h + hC), dtype=float)[None, :] - lam[:, None]
                Gi = np.linalg.inv(_EYE - om[:, :, None] * h2A2)
            dp, dr = _gauss_increment(p, r, om, Gi, hA, hC, hB)
            p, ep = _kahan(p, ep, dp)
            r, er = _kahan(r, er, dr)
        key = float(x1)
        if key in want:
            P[:, want[key]] = p
            R[:, want[key]] = r
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(R))):
        raise ConvergenceError("edge integration overflowed")
    return P, R


def _kahan(total, comp, inc):
    y = inc - comp
    t = total + y
    return t, (t - total) - y


def _gauss_increment(p, r, om, Gi, hA, hC, hB):
    kps, krs = [], []
    forcing = None
    for blk in range(3):
        pc = p[:, 2 * blk:2 * blk + 2]
        rc = r[:, 2 * blk:2 * blk + 2]
        rhs = om[:, :, None] * (pc[:, None, :] + hC[None, :, None] * rc[:, None, :])
        if forcing is not None:
            rhs -= forcing
        kr = Gi @ rhs
        kp = rc[:, None, :] + hA @ kr
        stage_vals = pc[:, None, :] + hA @ kp
        forcing = stage_vals if blk == 0 else 2.0 * stage_vals
        kps.append(kp)
        krs.append(kr)
    kp = np.concatenate(kps, axis=2)
    kr = np.concatenate(krs, axis=2)
    return np.einsum("j,mjc->mc", hB, kp), np.einsum("j,mjc->mc", hB, kr)


def edge_values(model: QuantumTreeModel, lam, x=None) -> dict:
    """Batched solution values at the points `x` (default: the far end ``L``).

    Parameters
    ----------
    model : QuantumTreeModel
    lam : float or ndarray
        Spectral parameters, shape ``(m,)`` after flattening.
    x : sequence of float, optional
        Sample points in ``[0, L]``.

    Returns
    -------
    dict
        Keys ``C, S, dC, dS, d2C, d2S`` (values) and ``Cx, Sx`` (x-derivatives
        of C and S), each of shape ``(m, len(x))``.
    """
    pts = np.array([model.L] if x is None else x, dtype=float)
    if np.any(pts < 0) or np.any(pts > model.L):
        raise DomainError("sample points must lie in [0, L]")
    uniq, inv = np.unique(pts, return_inverse=True)
    P, R = _propagate(model, lam, uniq)
    out = {name: P[:, inv, i] for i, name in enumerate(_COLS)}
    out["Cx"] = R[:, inv, 0]
    out["Sx"] = R[:, inv, 1]
    return out


@dataclass(frozen=True)
class EdgeSolutionTable:
    """Edge solutions for one spectral parameter on a uniform grid.

    Attributes
    ----------
    lam : float
    x_grid : ndarray
    C, S, Cx, Sx : ndarray
        Values and x-derivatives of the fundamental solutions.
    dC, dS, d2C, d2S : ndarray
        First and second :math:`\\lambda`-derivatives of C and S.
    """

    lam: float
    x_grid: np.ndarray
    C: np.ndarray
    S: np.ndarray
    Cx: np.ndarray
    Sx: np.ndarray
    dC: np.ndarray
    dS: np.ndarray
    d2C: np.ndarray
    d2S: np.ndarray

    @property
    def wronskian(self) -> np.ndarray:
        return self.C * self.Sx - self.Cx * self.S


def solve_edge(model: QuantumTreeModel, lam: float, grid_size: int = 512) -> EdgeSolutionTable:
    """Tabulate :math:`C_\\lambda, S_\\lambda` and derivatives on ``grid_size`` panels.

    Results are cached on the model per ``(lam, grid_size)``.

    Raises
    ------
    DomainError
        If ``grid_size < 16``.
    ConvergenceError
        If the integration overflows.
    """
    if grid_size < 16:
        raise DomainError("grid_size must be at least 16")
    key = (float(lam), int(grid_size))
    table = model._tables.get(key)
    if table is not None:
        return table
    grid = np.linspace(0.0, model.L, grid_size + 1)
    lam_arr = np.array([float(lam)])
    steps = max(_step_count(model, lam_arr), grid_size)
    steps = grid_size * math.ceil(steps / grid_size)
    P, R = _propagate(model, lam_arr, grid, steps=steps)
    table = EdgeSolutionTable(
        lam=float(lam), x_grid=grid, C=P[0, :, 0], S=P[0, :, 1], Cx=R[0, :, 0],
        Sx=R[0, :, 1], dC=P[0, :, 2], dS=P[0, :, 3], d2C=P[0, :, 4], d2S=P[0, :, 5],
    )
    with model._lock:
        model._tables.setdefault(key, table)
    return table


def endpoint_values(model: QuantumTreeModel, lam) -> dict:
    """``c, s, c', s'`` (x-derivatives at L) and their lambda-derivatives, batched."""
    v = edge_values(model, lam)
    return {
        "c": v["C"][:, 0], "s": v["S"][:, 0], "cx": v["Cx"][:, 0], "sx": v["Sx"][:, 0],
        "dc": v["dC"][:, 0], "ds": v["dS"][:, 0], "d2c": v["d2C"][:, 0], "d2s": v["d2S"][:, 0],
    }


def w_eval(model: QuantumTreeModel, lam, order: int = 0):
    """The discriminant :math:`w(\\lambda) = (q+1)c(\\lambda) + \\alpha s(\\lambda)` or a derivative.

    Parameters
    ----------
    model : QuantumTreeModel
    lam : float or ndarray
    order : {0, 1, 2}

    Returns
    -------
    float or ndarray
    """
    if order not in (0, 1, 2):
        raise DomainError("order must be 0, 1 or 2")
    ev = endpoint_values(model, lam)
    key_c, key_s = (("c", "s"), ("dc", "ds"), ("d2c", "d2s"))[order]
    out = (model.q + 1.0) * ev[key_c] + model.alpha * ev[key_s]
    return float(out[0]) if np.ndim(lam) == 0 else out.reshape(np.shape(lam))


# ---------------------------------------------------------------------------
# Volterra series
# ---------------------------------------------------------------------------

def _volterra(model: QuantumTreeModel, lam: float, K: int, start):
    lam = float(lam)
    if not lam > 0:
        raise DomainError("the Volterra series needs lambda > 0")
    if K < 0:
        raise DomainError("K must be nonnegative")
    L = model.L
    k = math.sqrt(lam)
    cuts = np.unique(np.concatenate([[0.0, L],
                                     [b for b in model.potential.breakpoints if 0 < b < L]]))
    segs = []
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        n = max(48, math.ceil(2.0 * k * (x1 - x0)) + 32)
        # Chebyshev points of the second kind including the segment ends
        u = np.cos(np.pi * np.arange(n)[::-1] / (n - 1))
        segs.append((x0, x1, u, 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * u))
    x = np.concatenate([s[3] for s in segs])
    # at interior cuts W is sampled a hair inside the segment, so that a jump
    # takes the one-sided value belonging to that segment
    xw = []
    for x0, x1, _, xs in segs:
        xs = xs.copy()
        if x0 > 0.0:
            xs[0] = x0 + 1e-14 * (x1 - x0)
        if x1 < L:
            xs[-1] = x1 - 1e-14 * (x1 - x0)
        xw.append(xs)
    Wx = model.W(np.concatenate(xw))
    sx, cx = np.sin(k * x), np.cos(k * x)
    F = start(k, x)
    total = F[-1]
    terms = []
    for _ in range(K):
        gs = cx * Wx * F
        gc = sx * Wx * F
        Ic = _cumulative(segs, gs)
        Is = _cumulative(segs, gc)
        F = (sx * Ic - cx * Is) / k
        terms.append(F[-1])
        total += F[-1]
    return total, terms


def _cumulative(segs, g):
    """Cumulative integral from 0 of samples `g` laid out segment by segment."""
    out = np.empty_like(g)
    offset = 0.0
    pos = 0
    for x0, x1, u, _ in segs:
        n = u.size
        vals = g[pos:pos + n]
        coef = C.chebfit(u, vals, n - 1)
        prim = C.chebint(coef, lbnd=-1.0) * (0.5 * (x1 - x0))
        local = C.chebval(u, prim)
        out[pos:pos + n] = offset + local
        offset += local[-1]
        pos += n
    return out


def _tail(ratio: float, K: int, extra: float) -> float:
    # sum_{j>K} ratio^j / j!  times `extra`
    total = 0.0
    term = 1.0
    for j in range(1, K + 200):
        term *= ratio / j
        if j > K:
            total += term
            if term < 1e-300 or (j > ratio + K + 5 and term < 1e-20 * total):
                break
    return total * extra


def volterra_s(model: QuantumTreeModel, lam: float, K: int) -> tuple[float, float]:
    """Partial Volterra sum for :math:`s(\\lambda) = S_\\lambda(L)`.

    .. math:: s(\\lambda) = \\frac{\\sin\\sqrt\\lambda L}{\\sqrt\\lambda} + \\sum_{k\\ge1} S_k(\\lambda)

    where :math:`S_k` is the k-fold iterated integral of the potential against
    the free kernel :math:`\\sin(\\sqrt\\lambda(x-\\tau))/\\sqrt\\lambda`.  The
    iterated integrals are computed by repeated spectral (Chebyshev)
    cumulative integration, one segment per smooth piece of ``W``.

    Parameters
    ----------
    model : QuantumTreeModel
    lam : float
        Positive spectral parameter.
    K : int
        Number of correction terms.

    Returns
    -------
    value : float
    tail_bound : float
        :math:`\\sum_{k>K}\\|W\\|_\\infty^k L^k/(\\lambda^{(k+1)/2}k!)`.
    """
    value, _ = _volterra(model, lam, K, lambda k, x: np.sin(k * x) / k)
    r = model.potential.sup_norm * model.L / math.sqrt(lam)
    return float(value), _tail(r, K, 1.0 / math.sqrt(lam))


def volterra_c(model: QuantumTreeModel, lam: float, K: int) -> tuple[float, float]:
    """Partial Volterra sum for :math:`c(\\lambda) = C_\\lambda(L)`.

    Same construction as :func:`volterra_s` starting from
    :math:`\\cos\\sqrt\\lambda x`; the tail bound is
    :math:`\\sum_{k>K}\\|W\\|_\\infty^k L^k/(\\lambda^{k/2}k!)`.
    """
    value, _ = _volterra(model, lam, K, lambda k, x: np.cos(k * x))
    r = model.potential.sup_norm * model.L / math.sqrt(lam)
    return float(value), _tail(r, K, 1.0)


def volterra_terms(model: QuantumTreeModel, lam: float, K: int) -> list:
    """The individual terms :math:`S_1, \\dots, S_K` of the sine series."""
    _, terms = _volterra(model, lam, K, lambda k, x: np.sin(k * x) / k)
    return [float(t) for t in terms]
