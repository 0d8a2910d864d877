"""The (1,l)-quasi-trigonometric functions Cs, Sn.

Cs and Sn solve  Cs' = -Sn,  Sn' = Cs^(2l-1)  with Cs(0)=1, Sn(0)=0, satisfy
the algebraic identity  Cs^(2l) + l*Sn^2 = 1,  and are T-periodic.  l = 1
gives the circular functions.  Quasi-polar charts and the periodic-orbit
coefficient quadratures evaluate these heavily, so values come from a dense
precomputed table with Hermite interpolation (the derivatives are known in
closed form), not from per-call integration.

The period is computed independently of the table, by quadrature of the
Beta-type integral; the first-return time of the ODE serves as a cross-check
in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp

__all__ = ["QuasiTrigTable", "cssn", "period", "table"]

_NODES = 8192


def period(l: int) -> float:
    """Period T of the (1,l)-quasi-trigonometric pair.

    T = (2/sqrt(l)) * integral_0^1 (1-t)^(-1/2) t^((1-2l)/(2l)) dt.  The
    substitutions t = s^(2l) followed by s = 1-u^2 remove both endpoint
    singularities, leaving a smooth integrand for plain adaptive quadrature.
    """
    if l < 1 or int(l) != l:
        raise ValueError("l must be a positive integer")
    l = int(l)
    if l == 1:
        return 2.0 * math.pi

    def smooth(u):
        s = 1.0 - u * u
        return 4.0 * l * u / math.sqrt(1.0 - s ** (2 * l))

    val, err = quad(smooth, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 2.0 / math.sqrt(l) * val


@dataclass(frozen=True)
class QuasiTrigTable:
    """Dense samples of (Cs, Sn) over one period with Hermite evaluation."""

    l: int
    T: float
    cs: np.ndarray
    sn: np.ndarray

    def __call__(self, theta):
        return self.eval(theta)

    def eval(self, theta):
        """(Cs(theta), Sn(theta)); accepts scalars or arrays."""
        if np.isscalar(theta):
            return self._eval_scalar(float(theta))
        theta = np.asarray(theta, dtype=float)
        cs = np.empty_like(theta)
        sn = np.empty_like(theta)
        flat_t = theta.ravel()
        flat_c = cs.ravel()
        flat_s = sn.ravel()
        for i, th in enumerate(flat_t):
            flat_c[i], flat_s[i] = self._eval_scalar(float(th))
        return cs, sn

    def _eval_scalar(self, theta: float) -> tuple[float, float]:
        T = self.T
        x = math.fmod(theta, T)
        if x < 0.0:
            x += T
        h = T / _NODES
        i = int(x / h)
        if i >= _NODES:
            i = _NODES - 1
        u = (x - i * h) / h
        c0, c1 = self.cs[i], self.cs[i + 1]
        s0, s1 = self.sn[i], self.sn[i + 1]
        # derivatives are exact: Cs' = -Sn, Sn' = Cs^(2l-1)
        m = 2 * self.l - 1
        dc0, dc1 = -h * s0, -h * s1
        ds0, ds1 = h * c0**m, h * c1**m
        return (
            _hermite(u, c0, c1, dc0, dc1),
            _hermite(u, s0, s1, ds0, ds1),
        )


def _hermite(u, y0, y1, d0, d1):
    u2 = u * u
    u3 = u2 * u
    return (
        (2 * u3 - 3 * u2 + 1) * y0
        + (u3 - 2 * u2 + u) * d0
        + (-2 * u3 + 3 * u2) * y1
        + (u3 - u2) * d1
    )


@lru_cache(maxsize=None)
def table(l: int) -> QuasiTrigTable:
    """Build (and cache) the sampled table for index l."""
    l = int(l)
    T = period(l)
    m = 2 * l - 1

    def rhs(_, y):
        return [-y[1], y[0] ** m]

    nodes = np.linspace(0.0, T, _NODES + 1)
    sol = solve_ivp(
        rhs,
        (0.0, T),
        [1.0, 0.0],
        method="DOP853",
        rtol=1e-13,
        atol=1e-14,
        dense_output=True,
    )
    vals = sol.sol(nodes)
    cs = np.ascontiguousarray(vals[0])
    sn = np.ascontiguousarray(vals[1])
    # pin the endpoints to the exact periodic values
    cs[-1], sn[-1] = 1.0, 0.0
    return QuasiTrigTable(l, T, cs, sn)


def cssn(theta, l: int):
    """(Cs(theta), Sn(theta)) for the (1,l) pair; scalar or array input."""
    return table(l).eval(theta)
