"""Certified endpoint stationary phase for :math:`\\int_a^b e^{itp(x)}q(x)\\,dx`.

The phase :math:`p` is assumed to have a single nondegenerate critical point
located at one end of the interval.  The leading term is

.. math:: e^{itp(c)} e^{\\epsilon\\pi i/4}\\sqrt{\\frac{\\pi}{2|p''(c)|t}}\\,q(c),
          \\qquad \\epsilon = \\operatorname{sgn} p''(c),

and the remainder is bounded by ``C / t`` where ``C`` is assembled from the
profile

.. math:: Q_{1,1}(x) = \\frac{q(x)}{\\epsilon p'(x)}
          - \\frac{q(a)}{\\sqrt{2\\epsilon p''(a)}\\sqrt{\\epsilon(p(x)-p(a))}}

and its total variation.  A critical point at the right end is handled by the
reflection :math:`x \\mapsto -x`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "PhaseProblem",
    "PhaseEstimate",
    "q11_profile",
    "q11_critical_value",
    "endpoint_estimate",
    "total_variation",
    "oscillatory_integral",
    "fresnel_problem",
    "tree_phase_problem",
    "tree_q11_closed_form",
]

Func = Callable[[np.ndarray], np.ndarray]

# relative half-width of the zone around the critical point where the raw
# profile formula is replaced by its Taylor limit
_NEAR = 1e-4


@dataclass
class PhaseProblem:
    """An oscillatory integral whose phase is critical at one endpoint.

    Parameters
    ----------
    p, dp, d2p, d3p : callable
        Phase and its first three derivatives.  Must accept ndarrays.
    amp, damp : callable
        Amplitude :math:`q` and its derivative.
    a, b : float
        Interval endpoints, ``a < b``.
    critical_end : {'a', 'b'}
        Endpoint carrying the critical point.
    validate : bool, optional
        Check the critical-point hypotheses on construction.
    pdiff : callable, optional
        Accurate evaluator of ``p(x) - p(c)`` with ``c`` the critical point.
        Near ``c`` the naive difference cancels catastrophically; supplying a
        closed form keeps the profile accurate there.
    """

    p: Func
    dp: Func
    d2p: Func
    d3p: Func
    amp: Func
    damp: Func
    a: float
    b: float
    critical_end: Literal["a", "b"] = "a"
    validate: bool = True
    pdiff: Func | None = None
    _tv_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.a = float(self.a)
        self.b = float(self.b)
        if not self.a < self.b:
            raise DomainError(f"need a < b, got [{self.a}, {self.b}]")
        if self.critical_end not in ("a", "b"):
            raise DomainError(f"critical_end must be 'a' or 'b', got {self.critical_end!r}")
        if self.validate:
            self.check()

    @property
    def c(self) -> float:
        """Location of the critical point."""
        return self.a if self.critical_end == "a" else self.b

    @property
    def other(self) -> float:
        return self.b if self.critical_end == "a" else self.a

    @property
    def epsilon(self) -> int:
        return 1 if _scalar(self.d2p, self.c) > 0 else -1

    def check(self, samples: int = 257) -> None:
        """Verify ``p'(c) = 0``, ``p''(c) != 0`` and that ``p'`` keeps one sign elsewhere."""
        c = self.c
        scale = max(1.0, float(np.max(np.abs(self.dp(np.linspace(self.a, self.b, 33))))))
        if abs(_scalar(self.dp, c)) > 1e-8 * scale:
            raise DomainError(f"p'({c}) = {_scalar(self.dp, c):.3e} is not zero")
        if _scalar(self.d2p, c) == 0.0:
            raise DomainError(f"p''({c}) vanishes: degenerate critical point")
        x = np.linspace(self.a, self.b, samples)
        x = x[1:] if self.critical_end == "a" else x[:-1]
        d = self.dp(x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("p' changes sign or vanishes away from the critical endpoint")

    def reflected(self) -> "PhaseProblem":
        """The problem after ``x -> -x``; the critical end switches sides."""
        p, dp, d2p, d3p, amp, damp = self.p, self.dp, self.d2p, self.d3p, self.amp, self.damp
        return PhaseProblem(
            p=lambda y: p(-np.asarray(y)),
            dp=lambda y: -dp(-np.asarray(y)),
            d2p=lambda y: d2p(-np.asarray(y)),
            d3p=lambda y: -d3p(-np.asarray(y)),
            amp=lambda y: amp(-np.asarray(y)),
            damp=lambda y: -damp(-np.asarray(y)),
            a=-self.b,
            b=-self.a,
            critical_end="a" if self.critical_end == "b" else "b",
            validate=False,
            pdiff=None if self.pdiff is None else (lambda y, f=self.pdiff: f(-np.asarray(y))),
        )

    def phase_gap(self, x):
        """``p(x) - p(c)``, using `pdiff` when available."""
        if self.pdiff is not None:
            return self.pdiff(x)
        return self.p(x) - _scalar(self.p, self.c)


@dataclass(frozen=True)
class PhaseEstimate:
    """Leading term and certified error bound of an endpoint stationary-phase problem.

    Attributes
    ----------
    main : complex
        Leading term.
    bound : float
        Upper bound for ``|integral - main|``; equals ``sum(terms) / t``.
    tv_estimate : float
        Total variation of the profile (after the safety inflation).
    terms : tuple of float
        The four nonnegative summands of ``t * bound``.
    t : float
        Time parameter.
    """

    main: complex
    bound: float
    tv_estimate: float
    terms: tuple
    t: float


def _scalar(f: Func, x: float) -> float:
    return float(np.asarray(f(np.asarray(float(x)))))


def _left(prob: PhaseProblem) -> PhaseProblem:
    return prob if prob.critical_end == "a" else prob.reflected()


def q11_critical_value(prob: PhaseProblem) -> float:
    """Limit of :math:`Q_{1,1}` at the critical endpoint.

    .. math:: Q_{1,1}(c) = \\epsilon\\Big(\\frac{q'(c)}{p''(c)}
              - \\frac{q(c)p'''(c)}{3p''(c)^2}\\Big)

    evaluated on the left-critical form of the problem.

    Examples
    --------
    >>> prob = PhaseProblem(p=lambda x: x**2, dp=lambda x: 2*x,
    ...                     d2p=lambda x: 2 + 0*x, d3p=lambda x: 0*x,
    ...                     amp=lambda x: 1 + 0*x, damp=lambda x: 0*x, a=0, b=1)
    >>> q11_critical_value(prob)
    0.0
    """
    lp = _left(prob)
    c = lp.a
    p2 = _scalar(lp.d2p, c)
    p3 = _scalar(lp.d3p, c)
    eps = 1.0 if p2 > 0 else -1.0
    return eps * (_scalar(lp.damp, c) / p2 - _scalar(lp.amp, c) * p3 / (3.0 * p2 * p2))


def _q11_raw(lp: PhaseProblem, x: np.ndarray) -> np.ndarray:
    a = lp.a
    p2 = _scalar(lp.d2p, a)
    eps = 1.0 if p2 > 0 else -1.0
    dpx = eps * lp.phase_gap(x)
    if np.any(dpx <= 0):
        raise DomainError("eps*(p(x) - p(a)) <= 0: the phase is not monotone away from a")
    # a single square root of the product keeps exact cancellations exact
    return lp.amp(x) / (eps * lp.dp(x)) - _scalar(lp.amp, a) / np.sqrt(2.0 * eps * p2 * dpx)


def q11_profile(prob: PhaseProblem, x):
    """Evaluate :math:`Q_{1,1}` at `x`.

    The raw formula is 0/0 at the critical point, so within a relative
    distance of 1e-4 of it the Taylor limit plus a one-sided linear
    correction is used instead.  For a right-critical problem the profile of
    the reflected problem is evaluated at ``-x``.

    Parameters
    ----------
    prob : PhaseProblem
    x : float or ndarray
        Points in ``[a, b]``.

    Returns
    -------
    float or ndarray

    Raises
    ------
    DomainError
        If the sign condition on ``p(x) - p(c)`` fails away from the critical
        point, which means the phase is not monotone there.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < prob.a - 1e-14 * (1 + abs(prob.a))) or np.any(
        x > prob.b + 1e-14 * (1 + abs(prob.b))
    ):
        raise DomainError("profile evaluated outside [a, b]")
    lp = _left(prob)
    y = x if prob.critical_end == "a" else -x
    delta = _NEAR * (lp.b - lp.a)
    out = np.empty_like(y)
    far = (y - lp.a) >= delta
    if np.any(far):
        out[far] = _q11_raw(lp, y[far])
    if np.any(~far):
        q0 = q11_critical_value(lp)
        q1 = float(_q11_raw(lp, np.array([lp.a + delta]))[0])
        out[~far] = q0 + (q1 - q0) * (y[~far] - lp.a) / delta
    return float(out[0]) if scalar else out


def total_variation(f: Func, a: float, b: float, tol: float = 1e-8, *,
                    margin: float = 0.1, start: int = 64, max_depth: int = 16) -> float:
    """Estimate :math:`\\int_a^b |f'|` by refined-mesh absolute-difference sums.

    The mesh is doubled until two successive sums differ by less than `tol`;
    the last sum is returned multiplied by ``1 + margin``.

    Parameters
    ----------
    f : callable
        Function accepting an ndarray.
    a, b : float
        Interval.
    tol : float, optional
        Convergence threshold between successive refinements.
    margin : float, optional
        Relative safety inflation applied to the converged sum.
    start : int, optional
        Initial number of mesh intervals.
    max_depth : int, optional
        Maximum number of doublings.

    Returns
    -------
    float

    Raises
    ------
    ConvergenceError
        When the sums have not settled after `max_depth` doublings.

    Examples
    --------
    >>> round(total_variation(np.sin, 0, 2 * np.pi, 1e-10, margin=0.0), 8)
    4.0
    """
    n = int(start)
    prev = None
    for _ in range(max_depth + 1):
        x = np.linspace(a, b, n + 1)
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            vals = np.array([float(f(xi)) for xi in x])
        cur = float(np.sum(np.abs(np.diff(vals))))
        if prev is not None and abs(cur - prev) < tol:
            return cur * (1.0 + margin)
        prev = cur
        n *= 2
    raise ConvergenceError(
        f"total variation did not settle after {max_depth} refinements (last {prev:.6g})"
    )


def _tv(prob: PhaseProblem, tol: float, margin: float) -> float:
    key = (tol, margin)
    if key not in prob._tv_cache:
        prob._tv_cache[key] = total_variation(
            lambda x: q11_profile(prob, x), prob.a, prob.b, tol, margin=margin
        )
    return prob._tv_cache[key]


def endpoint_estimate(prob: PhaseProblem, t: float, *, form: str = "compact",
                      tv_tol: float = 1e-8, tv_margin: float = 0.1) -> PhaseEstimate:
    """Leading term and certified error bound at time `t`.

    Parameters
    ----------
    prob : PhaseProblem
    t : float
        Positive time.
    form : {'compact', 'precise'}, optional
        ``'compact'`` uses the summands
        :math:`|Q_{1,1}(c)|, |Q_{1,1}(d)|, V(Q_{1,1}), 2|q(c)|/\\sqrt{2|p''(c)||p(b)-p(a)|}`
        with ``d`` the noncritical end.  ``'precise'`` replaces the second
        summand with :math:`|q(d)/p'(d)|` and uses ``3|q(c)|`` in the last; it is
        never smaller than the first form.
    tv_tol, tv_margin : float, optional
        Passed to :func:`total_variation`.

    Returns
    -------
    PhaseEstimate

    Examples
    --------
    >>> est = endpoint_estimate(fresnel_problem(1.0, 1.0), 100.0)
    >>> round(est.bound, 12)
    0.01
    """
    t = float(t)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if form not in ("compact", "precise"):
        raise DomainError(f"unknown bound form {form!r}")
    c, d = prob.c, prob.other
    p2 = _scalar(prob.d2p, c)
    eps = 1 if p2 > 0 else -1
    qc = _scalar(prob.amp, c)
    main = (
        np.exp(1j * t * _scalar(prob.p, c))
        * np.exp(eps * 1j * math.pi / 4)
        * math.sqrt(math.pi / (2.0 * abs(p2) * t))
        * qc
    )
    tv = _tv(prob, tv_tol, tv_margin)
    span = math.sqrt(2.0 * abs(p2)) * math.sqrt(abs(_scalar(prob.p, prob.b) - _scalar(prob.p, prob.a)))
    t1 = abs(q11_critical_value(prob))
    if form == "compact":
        t2 = abs(q11_profile(prob, d))
        t4 = 2.0 * abs(qc) / span
    else:
        t2 = abs(_scalar(prob.amp, d) / _scalar(prob.dp, d))
        t4 = 3.0 * abs(qc) / span
    terms = (t1, t2, tv, t4)
    return PhaseEstimate(main=complex(main), bound=sum(terms) / t, tv_estimate=tv,
                         terms=terms, t=t)


def oscillatory_integral(p: Func, amp: Func, a: float, b: float, t: float, *,
                         nodes_per_period: int = 20, panel_order: int = 20,
                         tol: float = 1e-13, max_doublings: int = 6) -> complex:
    """Composite Gauss-Legendre value of :math:`\\int_a^b e^{itp(x)}q(x)\\,dx`.

    Panels are sized so that every local oscillation period of
    :math:`e^{itp}` receives at least `nodes_per_period` nodes; the panel
    count is then doubled until the result changes by less than `tol`
    relative to the integrand scale.
    """
    xs = np.linspace(a, b, 2049)
    slope = float(np.max(np.abs(np.gradient(p(xs), xs))))
    periods = t * slope * (b - a) / (2.0 * math.pi)
    panels = max(8, math.ceil(periods * nodes_per_period / panel_order))
    xg, wg = np.polynomial.legendre.leggauss(panel_order)
    scale = float(np.max(np.abs(amp(xs)))) * (b - a) + 1e-300

    def run(m: int) -> complex:
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        w = (half[:, None] * wg[None, :]).ravel()
        return complex(np.sum(w * np.exp(1j * t * p(x)) * amp(x)))

    prev = run(panels)
    for _ in range(max_doublings):
        panels *= 2
        cur = run(panels)
        if abs(cur - prev) <= tol * scale:
            return cur
        prev = cur
    raise ConvergenceError("oscillatory quadrature did not converge")


def fresnel_problem(alpha: float, A: float) -> PhaseProblem:
    """:math:`p(x) = \\alpha x^2`, :math:`q \\equiv 1` on :math:`[0, A]`."""
    alpha = float(alpha)
    if alpha == 0.0:
        raise DomainError("alpha must be nonzero")
    return PhaseProblem(
        p=lambda x: alpha * np.asarray(x) ** 2,
        dp=lambda x: 2.0 * alpha * np.asarray(x),
        d2p=lambda x: 2.0 * alpha + 0.0 * np.asarray(x),
        d3p=lambda x: 0.0 * np.asarray(x),
        amp=lambda x: 1.0 + 0.0 * np.asarray(x),
        damp=lambda x: 0.0 * np.asarray(x),
        a=0.0,
        b=float(A),
        critical_end="a",
    )


def _tree_g(q: int):
    sq = math.sqrt(q)
    k = 6.0 * q - q * q - 1.0

    def g(th):
        c = np.cos(th)
        D = (q + 1.0) ** 2 - 4.0 * q * c * c
        return sq * c * (q + 1.0) * (k - 4.0 * q * c * c) / (D * D)

    def dg(th):
        c = np.cos(th)
        D = (q + 1.0) ** 2 - 4.0 * q * c * c
        dgdc = sq * (q + 1.0) * (
            (k - 12.0 * q * c * c) / D**2 + c * (k - 4.0 * q * c * c) * 16.0 * q * c / D**3
        )
        return -np.sin(th) * dgdc

    return g, dg


def tree_phase_problem(q: int, half: Literal["left", "right"] = "left") -> PhaseProblem:
    """Phase :math:`2\\sqrt q\\cos\\theta` with the tree amplitude :math:`g(\\theta)`.

    The amplitude

    .. math:: g(\\theta) = \\frac{\\sqrt q\\cos\\theta\\,(q+1)(6q - 4q\\cos^2\\theta - q^2 - 1)}
              {((q+1)^2 - 4q\\cos^2\\theta)^2}

    is the :math:`\\theta`-form of the derivative of the diagonal spectral
    density.  ``half='left'`` gives :math:`[0, \\pi/2]` (critical at 0) and
    ``half='right'`` gives :math:`[\\pi/2, \\pi]` (critical at :math:`\\pi`).
    """
    from .specfun import validate_degree

    q = validate_degree(q)
    sq = math.sqrt(q)
    g, dg = _tree_g(q)
    a, b, end = (0.0, math.pi / 2, "a") if half == "left" else (math.pi / 2, math.pi, "b")
    return PhaseProblem(
        p=lambda th: 2.0 * sq * np.cos(th),
        dp=lambda th: -2.0 * sq * np.sin(th),
        d2p=lambda th: -2.0 * sq * np.cos(th),
        d3p=lambda th: 2.0 * sq * np.sin(th),
        amp=g,
        damp=dg,
        a=a,
        b=b,
        critical_end=end,
        pdiff=(lambda th: -4.0 * sq * np.sin(0.5 * np.asarray(th)) ** 2)
        if half == "left"
        else (lambda th: 4.0 * sq * np.cos(0.5 * np.asarray(th)) ** 2),
    )


def tree_q11_closed_form(q: int, theta):
    """De-singularized closed form of :math:`Q_{1,1}` for the left tree problem.

    Finite at :math:`\\theta = 0`; used to cross-check :func:`q11_profile`.
    """
    th = np.asarray(theta, dtype=float)
    s = np.sin(th)
    qm = (q - 1.0) ** 2
    D = qm + 4.0 * q * s * s
    bracket = (
        qm * qm / 4.0 * (np.tan(th / 4) + np.tan(th / 2))
        + 2.0 * q * qm * s * (np.cos(th) + 2.0 * np.cos(th / 2))
        + 8.0 * q * q * s**3 * np.cos(th / 2)
    )
    return (q + 1.0) / (D * D * qm) * bracket
