"""Chebyshev polynomials, the spherical function of the regular tree, and Bessel values.

The spherical function of the :math:`(q+1)`-regular tree is

.. math:: \\Phi_n(\\lambda) = q^{-n/2}\\Big(\\tfrac{2}{q+1}P_n(x)
          + \\tfrac{q-1}{q+1}Q_n(x)\\Big), \\qquad x = \\lambda / 2\\sqrt{q},

with :math:`P_n` and :math:`Q_n` the Chebyshev polynomials of the first and
second kind.  All polynomial values are produced by three-term recurrences so
arguments outside :math:`[-1, 1]` need no special treatment.
"""
from __future__ import annotations

import math
import numbers

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "validate_degree",
    "chebyshev_pair",
    "chebyshev_table",
    "spherical",
    "spherical_table",
    "spherical_deriv",
    "spherical_edge_value",
    "bessel_j",
    "bessel_j_series",
]


def validate_degree(q) -> int:
    """Return `q` as an int after checking it is an integer branching number >= 2."""
    if isinstance(q, bool) or not isinstance(q, numbers.Integral):
        if isinstance(q, numbers.Real) and float(q).is_integer():
            q = int(q)
        else:
            raise DomainError(f"tree degree q must be an integer, got {q!r}")
    q = int(q)
    if q < 2:
        raise DomainError(f"tree degree q must satisfy q >= 2, got {q}")
    return q


def _validate_order(n) -> int:
    if isinstance(n, bool) or not isinstance(n, numbers.Integral) or n < 0:
        raise DomainError(f"polynomial degree must be a nonnegative integer, got {n!r}")
    return int(n)


def chebyshev_table(n_max: int, x):
    """Tabulate :math:`P_m(x)` and :math:`Q_m(x)` for ``m = 0..n_max``.

    Parameters
    ----------
    n_max : int
        Largest degree.
    x : float or ndarray
        Evaluation points (any real values).

    Returns
    -------
    P, Q : ndarray
        Arrays of shape ``(n_max + 1,) + np.shape(x)``.
    """
    n_max = _validate_order(n_max)
    x = np.asarray(x, dtype=float)
    P = np.empty((n_max + 1,) + x.shape)
    Q = np.empty_like(P)
    P[0] = 1.0
    Q[0] = 1.0
    if n_max >= 1:
        P[1] = x
        Q[1] = 2.0 * x
    for m in range(1, n_max):
        P[m + 1] = 2.0 * x * P[m] - P[m - 1]
        Q[m + 1] = 2.0 * x * Q[m] - Q[m - 1]
    return P, Q


def chebyshev_pair(n: int, x):
    """Chebyshev polynomials of the first and second kind.

    Parameters
    ----------
    n : int
        Nonnegative degree.
    x : float or ndarray
        Argument; values outside ``[-1, 1]`` are allowed.

    Returns
    -------
    P, Q : float or ndarray
        :math:`P_n(x)` with :math:`P_n(\\cos\\theta) = \\cos n\\theta` and
        :math:`Q_n(x)` with :math:`Q_n(\\cos\\theta) = \\sin((n+1)\\theta)/\\sin\\theta`.

    Examples
    --------
    >>> chebyshev_pair(3, 0.5)
    (-1.0, -1.0)
    """
    P, Q = chebyshev_table(n, x)
    p, qv = P[-1], Q[-1]
    if p.ndim == 0:
        return float(p), float(qv)
    return p, qv


def _spherical_from_table(P, Q, q: int):
    n_max = P.shape[0] - 1
    scale = q ** (-0.5 * np.arange(n_max + 1))
    scale = scale.reshape((n_max + 1,) + (1,) * (P.ndim - 1))
    return scale * ((2.0 / (q + 1)) * P + ((q - 1.0) / (q + 1)) * Q)


def spherical_table(n_max: int, lam, q: int):
    """Spherical functions :math:`\\Phi_m(\\lambda)` for ``m = 0..n_max``.

    Returns an array of shape ``(n_max + 1,) + np.shape(lam)``.
    """
    q = validate_degree(q)
    P, Q = chebyshev_table(n_max, np.asarray(lam, dtype=float) / (2.0 * math.sqrt(q)))
    return _spherical_from_table(P, Q, q)


def spherical(n: int, lam, q: int):
    """Spherical function :math:`\\Phi_n(\\lambda)` of the :math:`(q+1)`-regular tree.

    Parameters
    ----------
    n : int
        Graph distance, ``n >= 0``.
    lam : float or ndarray
        Spectral parameter.  Values outside :math:`[-2\\sqrt q, 2\\sqrt q]` are
        evaluated by the same polynomial formula.
    q : int
        Branching number, ``q >= 2``.

    Returns
    -------
    float or ndarray

    Examples
    --------
    >>> round(spherical(1, 2 * 2 ** 0.5, 2), 5)
    0.94281
    """
    out = spherical_table(_validate_order(n), lam, q)[-1]
    return float(out) if out.ndim == 0 else out


def spherical_edge_value(n: int, q: int) -> float:
    """Closed form :math:`\\Phi_n(2\\sqrt q) = q^{-n/2}(2 + (n+1)(q-1))/(q+1)`."""
    q = validate_degree(q)
    n = _validate_order(n)
    return q ** (-n / 2.0) * (2.0 + (n + 1) * (q - 1.0)) / (q + 1.0)


def spherical_deriv(n: int, lam, q: int, order: int = 1):
    """First or second :math:`\\lambda`-derivative of :math:`\\Phi_n`.

    The derivatives use :math:`P_m' = m Q_{m-1}` and the expansion of
    :math:`Q_m` as twice the sum of the :math:`P_j` with ``j`` of the same
    parity as ``m`` (minus one when ``m`` is even).  Everything stays
    polynomial, so the endpoints :math:`\\pm 2\\sqrt q` are regular.

    Parameters
    ----------
    n : int
        Graph distance.
    lam : float or ndarray
        Spectral parameter, normally in :math:`[-2\\sqrt q, 2\\sqrt q]`.
    q : int
        Branching number.
    order : {1, 2}
        Derivative order.

    Returns
    -------
    float or ndarray
    """
    q = validate_degree(q)
    n = _validate_order(n)
    if order not in (1, 2):
        raise DomainError(f"order must be 1 or 2, got {order!r}")
    lam = np.asarray(lam, dtype=float)
    x = lam / (2.0 * math.sqrt(q))
    _, Q = chebyshev_table(max(n, 1), x)
    # dQ[m] = Q_m'(x) = 2 * sum_{1<=j<=m, j = m mod 2} j Q_{j-1}(x)
    dQ = _parity_sum(Q)
    if order == 1:
        dP_n = n * Q[n - 1] if n >= 1 else np.zeros_like(x)
        dQ_n = dQ[n]
    else:
        d2Q = _parity_sum(dQ)
        dP_n = n * dQ[n - 1] if n >= 1 else np.zeros_like(x)
        dQ_n = d2Q[n]
    val = q ** (-n / 2.0) * ((2.0 / (q + 1)) * dP_n + ((q - 1.0) / (q + 1)) * dQ_n)
    val = val / (2.0 * math.sqrt(q)) ** order
    return float(val) if np.ndim(val) == 0 else val


def _parity_sum(F):
    """Return ``G[m] = 2 * sum_{1<=j<=m, j = m mod 2} j F[j-1]``."""
    G = np.zeros_like(F)
    for m in range(1, F.shape[0]):
        G[m] = 2.0 * m * F[m - 1] + (G[m - 2] if m >= 2 else 0.0)
    return G


def bessel_j(k: int, tau: float, *, tol: float = 1e-12) -> float:
    """Bessel function :math:`J_k(\\tau)` from its Fourier integral.

    Evaluates

    .. math:: J_k(\\tau) = \\frac{i^{-k}}{2\\pi}\\int_0^{2\\pi}
              e^{ikx} e^{i\\tau\\cos x}\\,dx

    with the periodic trapezoidal rule.  The rule is spectrally accurate; its
    error is estimated by comparing against a rule with twice as many nodes.

    Parameters
    ----------
    k : int
        Integer order (negative allowed).
    tau : float
        Real argument.
    tol : float, optional
        Largest accepted error estimate.

    Returns
    -------
    float

    Raises
    ------
    ConvergenceError
        If the estimated error stays above `tol`, or the imaginary residue
        (which must vanish for real arguments) exceeds `tol`.
    """
    k = int(k)
    tau = float(tau)
    m = 32
    need = abs(tau) + abs(k) + 40.0
    while m < need:
        m *= 2
    prev = _bessel_trapezoid(k, tau, m)
    for _ in range(8):
        m *= 2
        cur = _bessel_trapezoid(k, tau, m)
        if abs(cur - prev) <= tol:
            if abs(cur.imag) > tol:
                raise ConvergenceError(f"J_{k}({tau}) has imaginary residue {cur.imag:.3e}")
            return float(cur.real)
        prev = cur
    raise ConvergenceError(f"trapezoidal J_{k}({tau}) did not reach tolerance {tol}")


def _bessel_trapezoid(k: int, tau: float, m: int) -> complex:
    x = 2.0 * np.pi * np.arange(m) / m
    vals = np.exp(1j * (k * x + tau * np.cos(x)))
    # i^{-k} computed exactly from k mod 4
    ik = (1, -1j, -1, 1j)[k % 4]
    return complex(ik * vals.mean())


def bessel_j_series(k: int, tau: float, *, dps: int | None = None) -> float:
    """Reference :math:`J_k(\\tau)` from the power series in extended precision.

    The series :math:`\\sum_m (-1)^m (\\tau/2)^{2m+k} / (m!(m+k)!)` suffers
    catastrophic cancellation in double precision once :math:`|\\tau|` exceeds
    a few units, so it is summed with :mod:`mpmath` at a working precision
    that grows with :math:`|\\tau|`.
    """
    import mpmath

    k = int(k)
    sign = 1
    if k < 0:
        k = -k
        sign = -1 if k % 2 else 1
    if dps is None:
        dps = 30 + int(abs(tau) * 0.9)
    with mpmath.workdps(dps):
        half = mpmath.mpf(tau) / 2
        term = half**k / mpmath.factorial(k)
        total = term
        m = 0
        while True:
            m += 1
            term = -term * half * half / (m * (m + k))
            total += term
            if m > abs(half) and abs(term) < mpmath.mpf(10) ** (-(dps - 5)):
                break
        return sign * float(total)
