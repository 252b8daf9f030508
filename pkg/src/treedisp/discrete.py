"""Evolution kernel :math:`e^{itA}(v,w)` of the adjacency operator on the regular tree.

The spectral measure of the pair ``(v, w)`` at graph distance ``n`` has the
density :math:`\\pi^{-1}\\Psi(\\lambda)\\Phi_n(\\lambda)` on
:math:`[-2\\sqrt q, 2\\sqrt q]` with

.. math:: \\Psi(\\lambda) = \\frac{(q+1)\\sqrt{4q-\\lambda^2}}{2((q+1)^2-\\lambda^2)}.

Besides the quadrature of the spectral integral this module offers two
independent references: the radial Jacobi matrix of the tree and the Bessel
identity on the integer line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceError, DomainError
from .specfun import bessel_j, spherical_table, validate_degree

__all__ = [
    "DiscreteKernelSample",
    "density_factor",
    "spectral_density",
    "kernel_numeric",
    "kernel_main_term",
    "main_term_coefficient",
    "radial_oracle",
    "shell_sizes",
    "shell_norm",
    "line_kernel",
    "peak_times",
]

_PANEL = 16
_XG, _WG = np.polynomial.legendre.leggauss(_PANEL)


@dataclass(frozen=True)
class DiscreteKernelSample:
    """One kernel value ``K(t, n)`` together with how it was obtained."""

    t: float
    n: int
    value: complex
    method: str

    def __post_init__(self):
        if self.method not in ("quadrature", "asymptotic", "oracle"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.method != "asymptotic" and abs(self.value) > 1.0 + 1e-9:
            raise DomainError(f"|K| = {abs(self.value)} exceeds 1")


def density_factor(lam, q: int):
    """The diagonal factor :math:`\\Psi(\\lambda)`; zero outside the spectrum."""
    q = validate_degree(q)
    lam = np.asarray(lam, dtype=float)
    edge = 2.0 * math.sqrt(q)
    rad = np.clip((edge - np.abs(lam)) * (edge + np.abs(lam)), 0.0, None)
    out = (q + 1.0) * np.sqrt(rad) / (2.0 * ((q + 1.0) ** 2 - lam * lam))
    return float(out) if out.ndim == 0 else out


def spectral_density(lam, n: int, q: int):
    """Imaginary part of the boundary Green's function, :math:`\\Psi(\\lambda)\\Phi_n(\\lambda)`.

    Parameters
    ----------
    lam : float or ndarray
        Points of :math:`[-2\\sqrt q, 2\\sqrt q]`.
    n : int
        Graph distance.
    q : int
        Branching number.

    Returns
    -------
    float or ndarray

    Raises
    ------
    DomainError
        If some ``|lam| > 2 sqrt(q)``.

    Examples
    --------
    >>> round(spectral_density(0.0, 0, 2), 5)
    0.4714
    """
    q = validate_degree(q)
    lam = np.asarray(lam, dtype=float)
    edge = 2.0 * math.sqrt(q)
    if np.any(np.abs(lam) > edge * (1 + 1e-14)):
        raise DomainError(f"spectral parameter outside [-{edge:.6g}, {edge:.6g}]")
    out = density_factor(lam, q) * spherical_table(n, lam, q)[-1]
    return float(out) if np.ndim(out) == 0 else out


def _theta_amplitude(theta: np.ndarray, n: int, q: int) -> np.ndarray:
    # Psi(lambda) * dlambda/dtheta with lambda = 2 sqrt(q) cos(theta), times Phi_n
    c = np.cos(theta)
    s2 = np.sin(theta) ** 2
    jac = (q + 1.0) * 4.0 * q * s2 / (2.0 * ((q + 1.0) ** 2 - 4.0 * q * c * c))
    return jac * spherical_table(n, 2.0 * math.sqrt(q) * c, q)[-1]


def _theta_quadrature(t: float, n: int, q: int, nodes: int) -> complex:
    panels = max(1, math.ceil(nodes / _PANEL))
    edges = np.linspace(0.0, math.pi, panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mid = 0.5 * (edges[1:] + edges[:-1])
    th = (mid[:, None] + half * _XG[None, :]).ravel()
    w = np.tile(half * _WG, panels)
    phase = np.exp(1j * t * 2.0 * math.sqrt(q) * np.cos(th))
    return complex(np.sum(w * phase * _theta_amplitude(th, n, q)) / math.pi)


def kernel_numeric(t: float, n: int, q: int, *, tol: float = 1e-11,
                   max_doublings: int = 4, return_nodes: bool = False):
    """Evolution kernel from the spectral integral.

    Evaluates :math:`\\pi^{-1}\\int e^{it\\lambda}\\Psi(\\lambda)\\Phi_n(\\lambda)\\,d\\lambda`
    after :math:`\\lambda = 2\\sqrt q\\cos\\theta`, which leaves an analytic
    periodic-free integrand on :math:`[0, \\pi]`.  Composite Gauss-Legendre
    (16-node panels) with ``max(64, ceil(40 sqrt(q) |t|), 2n + 34)`` nodes is
    used and the node count is doubled until the value moves by less than
    `tol`.

    Parameters
    ----------
    t : float
        Time (any sign).
    n : int
        Graph distance.
    q : int
        Branching number.
    tol : float, optional
        Self-convergence threshold.
    max_doublings : int, optional
    return_nodes : bool, optional
        Also return the final node count.

    Returns
    -------
    complex or (complex, int)

    Raises
    ------
    ConvergenceError
        If the doubling test fails `max_doublings` times in a row.
    """
    q = validate_degree(q)
    t = float(t)
    nodes = max(64, math.ceil(40.0 * math.sqrt(q) * abs(t)), 2 * n + 34)
    prev = _theta_quadrature(t, n, q, nodes)
    for _ in range(max_doublings):
        nodes *= 2
        cur = _theta_quadrature(t, n, q, nodes)
        if abs(cur - prev) < tol:
            return (cur, nodes) if return_nodes else cur
        prev = cur
    raise ConvergenceError(f"kernel quadrature at t={t}, n={n} did not converge")


def main_term_coefficient(n: int, q: int) -> float:
    """:math:`q^{1/4-n/2}(2+(n+1)(q-1))/(q-1)^2`."""
    q = validate_degree(q)
    return q ** (0.25 - 0.5 * n) * (2.0 + (n + 1) * (q - 1.0)) / (q - 1.0) ** 2


def kernel_main_term(t, n: int, q: int):
    """Leading large-time term of the tree kernel.

    .. math:: \\frac{1}{\\sqrt\\pi\\,t^{3/2}}\\,C_{n,q}\\times
              \\begin{cases}\\sin(2\\sqrt q\\,t - \\pi/4) & n \\text{ even}\\\\
              -i\\sin(2\\sqrt q\\,t + \\pi/4) & n \\text{ odd}\\end{cases}

    with :math:`C_{n,q}` from :func:`main_term_coefficient`.

    Parameters
    ----------
    t : float or ndarray
        Positive time(s).
    n : int
    q : int

    Returns
    -------
    complex or ndarray of complex
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("main term requires t > 0")
    coef = main_term_coefficient(n, q) / (math.sqrt(math.pi) * t**1.5)
    arg = 2.0 * math.sqrt(q) * t
    if n % 2 == 0:
        out = coef * np.sin(arg - math.pi / 4) + 0j
    else:
        out = -1j * coef * np.sin(arg + math.pi / 4)
    return complex(out) if np.ndim(out) == 0 else out


def shell_sizes(n_max: int, q: int) -> np.ndarray:
    """Sphere sizes ``N_0 = 1``, ``N_n = (q+1) q^(n-1)`` as floats."""
    q = validate_degree(q)
    n = np.arange(n_max + 1)
    out = (q + 1.0) * float(q) ** (n - 1.0)
    out[0] = 1.0
    return out


def radial_oracle(t: float, n_max: int, q: int, N: int | None = None) -> np.ndarray:
    """Kernel at distances ``0..n_max`` from the radial Jacobi matrix.

    The adjacency operator restricted to radial functions around a vertex,
    written in the orthonormal basis of normalized sphere indicators, is the
    tridiagonal matrix with off-diagonal entries :math:`\\sqrt{q+1}, \\sqrt q,
    \\sqrt q, \\dots`.  Truncating it at size `N` is exact up to rounding as
    long as the wave has not reached the cut.

    Parameters
    ----------
    t : float
        Time.
    n_max : int
        Largest distance returned.
    q : int
        Branching number.
    N : int, optional
        Matrix size; defaults to the propagation margin
        ``n_max + ceil(2 sqrt(q) |t|) + 50``.

    Returns
    -------
    ndarray of complex, shape (n_max + 1,)

    Raises
    ------
    DomainError
        If `N` is below the propagation margin.
    """
    q = validate_degree(q)
    need = n_max + math.ceil(2.0 * math.sqrt(q) * abs(t)) + 50
    if N is None:
        N = need
    if N < need:
        raise DomainError(f"matrix size {N} below propagation margin {need}")
    off = np.full(N - 1, math.sqrt(q))
    off[0] = math.sqrt(q + 1.0)
    evals, evecs = eigh_tridiagonal(np.zeros(N), off)
    u = evecs @ (np.exp(1j * t * evals) * evecs[0, :])
    return u[: n_max + 1] / np.sqrt(shell_sizes(n_max, q))


def shell_norm(values, q: int, cutoff: float = 1e-12) -> float:
    """Shell Parseval sum :math:`\\sum_n N_n|K(n)|^2` over entries with ``|K| >= cutoff``.

    Entries are scanned in order of increasing distance and the sum stops at
    the first one whose modulus drops below `cutoff`.
    """
    values = np.asarray(values)
    sizes = shell_sizes(values.size - 1, q)
    total = 0.0
    for n, v in enumerate(values):
        if abs(v) < cutoff:
            break
        total += sizes[n] * abs(v) ** 2
    return total


def line_kernel(t: float, n: int) -> complex:
    """Kernel of the free evolution on the integer line, :math:`i^n J_n(2t)`.

    The Bessel value is taken from the Fourier integral
    :math:`(2\\pi)^{-1}\\int_0^{2\\pi} e^{inx}e^{2it\\cos x}dx`, which is
    exactly the line kernel, so the two computations share the quadrature
    engine but nothing from the tree formulas.
    """
    n = int(n)
    return (1, 1j, -1, -1j)[n % 4] * bessel_j(n, 2.0 * float(t))


def peak_times(n: int, q: int, t_min: float, t_max: float, count: int | None = None) -> np.ndarray:
    """Times where the main-term sine equals +-1.

    Even ``n``: :math:`(k\\pi + 3\\pi/4)/(2\\sqrt q)`; odd ``n``:
    :math:`(k\\pi + \\pi/4)/(2\\sqrt q)`.  With `count`, a roughly
    log-uniform subset of that many peaks is returned.
    """
    q = validate_degree(q)
    off = 0.75 * math.pi if n % 2 == 0 else 0.25 * math.pi
    w = 2.0 * math.sqrt(q)
    k0 = math.ceil((t_min * w - off) / math.pi)
    k1 = math.floor((t_max * w - off) / math.pi)
    ks = np.arange(k0, k1 + 1)
    times = (ks * math.pi + off) / w
    if count is not None and count < times.size:
        target = np.geomspace(times[0], times[-1], count)
        idx = np.unique(np.searchsorted(times, target).clip(0, times.size - 1))
        times = times[idx]
    return times
