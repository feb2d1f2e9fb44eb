"""Composite Gauss-Legendre rules and 1-D oscillatory factor kernels.

A factor is ``F(x_j, x_n) = sum_k c_k e(x_j*xi_k + x_n*phi(xi_k))`` where
``c_k`` already carries the quadrature weight and the sampled ``g``.
Kernels evaluate it either on a uniform ``x_j`` axis times a list of
``x_n`` values (tensor lattices) or at scattered ``(x_j, x_n)`` pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Rule1D",
    "NyquistError",
    "panels_needed",
    "factor_table",
    "factor_at_points",
    "DEFAULT_ORDER",
    "CYCLES_PER_PANEL",
]

DEFAULT_ORDER = 16
CYCLES_PER_PANEL = 3.0
_BLOCK = 4096
TWO_PI = 2.0 * np.pi


class NyquistError(ValueError):
    """Quadrature too coarse for the oscillation it has to resolve."""


def panels_needed(lo: float, hi: float, freq: float, cycles: float = CYCLES_PER_PANEL) -> int:
    """Panels so that no panel sees more than ``cycles`` periods."""
    return max(1, math.ceil(freq * (hi - lo) / cycles - 1e-12))


@dataclass(frozen=True)
class Rule1D:
    """Composite Gauss-Legendre rule on [lo, hi] with equal panels."""

    lo: float
    hi: float
    panels: int
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("rule needs lo < hi")
        if self.panels < 1 or self.order < 2:
            raise ValueError("need at least one panel and two nodes per panel")

    @cached_property
    def _nw(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(self.lo, self.hi, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights

    @property
    def nodes(self) -> np.ndarray:
        return self._nw[0]

    @property
    def weights(self) -> np.ndarray:
        return self._nw[1]

    @property
    def size(self) -> int:
        return self.panels * self.order

    def refined(self, factor: int = 2) -> "Rule1D":
        return Rule1D(self.lo, self.hi, self.panels * factor, self.order)


def _as_2d(c: np.ndarray) -> tuple[np.ndarray, bool]:
    c = np.asarray(c, dtype=complex)
    return (c[None, :], True) if c.ndim == 1 else (c, False)


def _table_direct(xi, c, phi, x_axis, xn) -> np.ndarray:
    """GEMM evaluation; blocks over xi keep memory bounded and the
    summation order fixed."""
    T = c.shape[0]
    out = np.zeros((T, x_axis.size, xn.size), dtype=complex)
    for s in range(0, xi.size, _BLOCK):
        sl = slice(s, s + _BLOCK)
        e1 = np.exp(1j * TWO_PI * np.outer(x_axis, xi[sl]))  # (Nx, b)
        e2 = np.exp(1j * TWO_PI * np.outer(phi[sl], xn))  # (b, Nn)
        for t in range(T):
            out[t] += e1 @ (c[t, sl, None] * e2)
    return out


def _table_nufft(xi, c, phi, x_axis, xn, eps) -> np.ndarray:
    import finufft

    N = x_axis.size
    step = x_axis[1] - x_axis[0] if N > 1 else 1.0
    half = N // 2
    x_mid = x_axis[half]
    xi_c = 0.5 * (xi.min() + xi.max())
    t = TWO_PI * step * (xi - xi_c)
    if np.max(np.abs(t)) >= 3 * np.pi:
        raise NyquistError("x-axis step too coarse for the frequency span")
    T = c.shape[0]
    # strengths for every (term, x_n) pair, modulated to the axis midpoint
    base = c * np.exp(1j * TWO_PI * x_mid * xi)[None, :]
    strengths = base[:, None, :] * np.exp(1j * TWO_PI * np.outer(xn, phi))[None, :, :]
    strengths = strengths.reshape(T * xn.size, xi.size)
    f = finufft.nufft1d1(t, strengths, n_modes=N, isign=1, eps=eps, nthreads=1, modeord=0)
    k = np.arange(N) - half
    f = f * np.exp(1j * TWO_PI * step * xi_c * k)[None, :]
    return f.reshape(T, xn.size, N).transpose(0, 2, 1)


def factor_table(
    xi: np.ndarray,
    c: np.ndarray,
    phi: np.ndarray,
    x_axis: np.ndarray,
    xn: np.ndarray,
    backend: str = "auto",
    eps: float = 1e-12,
) -> np.ndarray:
    """``F[t, a, b] = sum_k c[t,k] e(x_axis[a]*xi[k] + xn[b]*phi[k])``.

    ``x_axis`` must be uniform for the ``nufft`` backend.  A 1-D ``c``
    gives a 2-D result.
    """
    c2, squeeze = _as_2d(c)
    xi = np.asarray(xi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    x_axis = np.atleast_1d(np.asarray(x_axis, dtype=float))
    xn = np.atleast_1d(np.asarray(xn, dtype=float))
    if backend == "auto":
        backend = "nufft" if x_axis.size * xi.size > 4_000_000 and x_axis.size > 16 else "direct"
    if backend == "direct":
        out = _table_direct(xi, c2, phi, x_axis, xn)
    elif backend == "nufft":
        out = _table_nufft(xi, c2, phi, x_axis, xn, eps)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return out[0] if squeeze else out


def factor_at_points(
    xi: np.ndarray,
    c: np.ndarray,
    phi: np.ndarray,
    xj: np.ndarray,
    xn: np.ndarray,
    backend: str = "auto",
    eps: float = 1e-12,
) -> np.ndarray:
    """``F[t, q] = sum_k c[t,k] e(xj[q]*xi[k] + xn[q]*phi[k])`` at scattered points."""
    c2, squeeze = _as_2d(c)
    xi = np.asarray(xi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    xn = np.asarray(xn, dtype=float)
    if backend == "auto":
        backend = "nufft" if xj.size * xi.size > 4_000_000 else "direct"
    if backend == "direct":
        out = np.empty((c2.shape[0], xj.size), dtype=complex)
        rows = max(1, 4_000_000 // max(xi.size, 1))
        for s in range(0, xj.size, rows):
            sl = slice(s, s + rows)
            e = np.exp(1j * TWO_PI * (np.outer(xj[sl], xi) + np.outer(xn[sl], phi)))
            out[:, sl] = (e @ c2.T).T
    elif backend == "nufft":
        import finufft

        # recentre sources so the type-3 grid stays small
        xi_c = 0.5 * (xi.min() + xi.max())
        phi_c = 0.5 * (phi.min() + phi.max())
        out = finufft.nufft2d3(
            xi - xi_c, phi - phi_c, c2, TWO_PI * xj, TWO_PI * xn, isign=1, eps=eps, nthreads=1
        )
        out = np.atleast_2d(out) * np.exp(1j * TWO_PI * (xj * xi_c + xn * phi_c))[None, :]
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return out[0] if squeeze else out
