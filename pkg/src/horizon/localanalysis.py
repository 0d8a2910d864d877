"""Local analysis at horizon equilibria.

Root finding on the horizon slice, Jacobians and the four-way classification
(hyperbolic / semi-hyperbolic / nilpotent / linearly-zero), one-dimensional
center-manifold series with the decay law of the reduced flow, type-I rate
prediction from the scaling type, and the periodic-orbit coefficient
machinery (Poincare-map expansion, near-identity radial transform) for the
quasi-polar charts.

Classification tolerance is relative, |lambda| <= 1e-9 * (1 + ||J||_inf), so
it is stable under chart rescaling.  A stationary point at infinity with at
least one stable eigenvalue induces type-I rates (t_max - t)^(-alpha_i/k);
the statement is applied with n_s >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .compactify import CS, SN, ChartField, horizon_slice
from .errors import (
    DegenerateBeyondDegreeError,
    DomainError,
    NegativeDiscriminantError,
)
from .genpoly import GenPoly, frac
from .quasitrig import cssn, period, table
from .rates import RateModel
from .structure import TypeVector

__all__ = [
    "EquilibriumRecord",
    "CenterSeries",
    "CmAsymptotics",
    "LienardCoefficients",
    "horizon_equilibria",
    "equilibria_of",
    "classify",
    "jacobian",
    "center_manifold_series_1d",
    "cm_flow_asymptotics",
    "type1_rate_prediction",
    "lienard_coefficients",
    "lienard_R_transform",
    "lienard_R_inverse",
]


ZERO_TOL_SCALE = 1e-9


@dataclass(frozen=True)
class EquilibriumRecord:
    chart_desc: str
    coords: tuple[float, ...]          # full chart coordinates (radial included)
    jacobian: tuple[tuple[float, ...], ...]
    eigenvalues: tuple[complex, ...]
    classification: str                # hyperbolic | semi-hyperbolic | nilpotent | linearly-zero
    n_stable: int
    n_unstable: int
    n_center: int

    def to_dict(self):
        return {
            "chart": self.chart_desc,
            "coords": list(self.coords),
            "jacobian": [list(r) for r in self.jacobian],
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "classification": self.classification,
            "n_stable": self.n_stable,
            "n_unstable": self.n_unstable,
            "n_center": self.n_center,
        }


def jacobian(components: Sequence[GenPoly], vars: Sequence[str], point) -> np.ndarray:
    J = np.empty((len(components), len(vars)))
    for i, comp in enumerate(components):
        for j, v in enumerate(vars):
            J[i, j] = comp.partial(v).eval(point)
    return J


def classify(J: np.ndarray, tol_scale: float = ZERO_TOL_SCALE):
    """Four-way classification with the relative zero tolerance.

    Returns (label, n_stable, n_unstable, n_center, eigenvalues).
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    norm = float(np.abs(J).sum(axis=1).max()) if J.size else 0.0
    tol = tol_scale * (1.0 + norm)
    if norm <= tol_scale:
        eig = tuple(0.0 + 0.0j for _ in range(n))
        return "linearly-zero", 0, 0, n, eig
    eig = np.linalg.eigvals(J)
    order = np.argsort(eig.real)
    eig = eig[order]
    small = np.abs(eig) <= tol
    ns = int(np.sum(eig.real < -tol))
    nu = int(np.sum(eig.real > tol))
    nc = n - ns - nu
    if not small.any() and nc == 0:
        label = "hyperbolic"
    elif int(small.sum()) == 1 and ns + nu == n - 1:
        label = "semi-hyperbolic"
    elif small.all():
        label = "nilpotent"
    else:
        # center-type spectrum (pure imaginary pairs etc.); report as center
        label = "center"
    return label, ns, nu, nc, tuple(complex(z) for z in eig)


def _needs_nonnegative(comps: Sequence[GenPoly], v: str) -> bool:
    """True when some exponent of v is fractional or negative, so evaluation
    at v < 0 would leave the field's domain."""
    for p in comps:
        if v not in p.vars:
            continue
        i = p.vars.index(v)
        for ev, _ in p.terms:
            e = ev[i]
            if e != 0 and (e.denominator != 1 or e < 0):
                return True
    return False


def _damped_newton(F, JF, x, lows, highs, clip, tol, max_iter):
    """Damped Newton iterated until the step stalls, so multiple roots are
    followed all the way in instead of stopping on their flat residual basin.
    Returns the root or None."""
    try:
        fx = F(x)
    except DomainError:
        return None
    for _ in range(max_iter):
        nf = float(np.linalg.norm(fx))
        try:
            step = np.linalg.solve(JF(x), -fx)
        except (np.linalg.LinAlgError, DomainError):
            break
        if not np.all(np.isfinite(step)):
            break
        lam, improved, stalled = 1.0, False, False
        for _ in range(8):
            cand = x + lam * step
            for i, c in enumerate(clip):
                if c and cand[i] < 0.0:
                    cand[i] = 0.0
            try:
                fc = F(cand)
            except DomainError:
                lam *= 0.5
                continue
            if float(np.linalg.norm(fc)) < nf:
                stalled = float(np.linalg.norm(cand - x)) <= 1e-14 * (
                    1.0 + float(np.linalg.norm(x))
                )
                x, fx = cand, fc
                improved = True
                break
            lam *= 0.5
        if not improved or stalled:
            break
    if float(np.linalg.norm(fx)) <= tol * (1.0 + float(np.linalg.norm(x))):
        return x
    return None


def _snap_axis_values(F, x, tol, candidates=(0.0, 1.0, -1.0)):
    """Replace near-axis coordinates by their exact values when the residual
    allows it; keeps coordinate-set equilibria exact and deterministic."""
    out = np.array(x, dtype=float)
    for i in range(len(out)):
        for c in candidates:
            if out[i] != c and abs(out[i] - c) < 1e-6:
                trial = out.copy()
                trial[i] = c
                try:
                    if float(np.linalg.norm(F(trial))) <= tol * (
                        1.0 + float(np.linalg.norm(trial))
                    ):
                        out = trial
                except DomainError:
                    pass
    return out


def _slice_point(slice_vars, x, full_vars, radial):
    full = []
    it = iter(x)
    for v in full_vars:
        full.append(0.0 if v == radial else float(next(it)))
    return full


def horizon_equilibria(
    C: ChartField,
    *,
    box: dict[str, tuple[float, float]] | None = None,
    seed: int = 0,
    n_starts: int = 64,
    newton_tol: float = 1e-13,
    dedupe: float = 1e-8,
    max_iter: int = 60,
) -> tuple[list[EquilibriumRecord], dict]:
    """All equilibria of the desingularized field on the horizon {r = 0}.

    Multi-start damped Newton over the declared search box (quasi-random
    starts plus axis candidates make the usual coordinate-set equilibria
    deterministic), deduplicated, each augmented with the full-space Jacobian
    and classification.  Returns (records, diagnostics).
    """
    if C.quasipolar_index is not None:
        return _quasipolar_horizon_equilibria(C, newton_tol, dedupe)
    slice_vars, slice_comps = horizon_slice(C)
    dim = len(slice_vars)
    box = box or {}
    lows = np.array([box.get(v, (-2.0, 2.0))[0] for v in slice_vars])
    highs = np.array([box.get(v, (-2.0, 2.0))[1] for v in slice_vars])
    for i, v in enumerate(slice_vars):
        # clip only where evaluation is genuinely restricted (fractional or
        # negative exponents); sign-masked variables may still host formal
        # equilibria outside the physical sector
        if _needs_nonnegative(slice_comps, v) and lows[i] < 0.0:
            lows[i] = 0.0

    rng = np.random.default_rng(seed)
    starts = [lows + (highs - lows) * rng.random(dim) for _ in range(n_starts)]
    # axis candidates: origin and a few points along each coordinate axis
    starts.append(np.zeros(dim))
    for i in range(dim):
        for c in (0.25, 0.5, 1.0, -0.5, -1.0):
            p = np.zeros(dim)
            p[i] = c
            if lows[i] <= c <= highs[i]:
                starts.append(p)

    grads = [[comp.partial(v) for v in slice_vars] for comp in slice_comps]

    def F(x):
        return np.array([comp.eval(x) for comp in slice_comps])

    def JF(x):
        return np.array([[g.eval(x) for g in row] for row in grads])

    clip = [
        _needs_nonnegative(slice_comps, v) for v in slice_vars
    ]
    roots = []
    n_fail = 0
    for x0 in starts:
        x = _damped_newton(F, JF, np.array(x0, dtype=float), lows, highs, clip,
                           newton_tol, max_iter)
        if x is None:
            n_fail += 1
            continue
        if np.any(x < lows - 0.5) or np.any(x > highs + 0.5):
            continue
        x = _snap_axis_values(F, x, newton_tol)
        if not any(np.linalg.norm(x - r) <= dedupe for r in roots):
            roots.append(x.copy())

    roots.sort(key=lambda r: tuple(r))
    records = []
    for x in roots:
        full = _slice_point(slice_vars, x, C.vars, C.radial)
        J = jacobian(C.components, C.poly_vars, full)
        label, ns, nu, nc, eig = classify(J)
        records.append(
            EquilibriumRecord(
                chart_desc=_chart_desc(C),
                coords=tuple(full),
                jacobian=tuple(map(tuple, J.tolist())),
                eigenvalues=eig,
                classification=label,
                n_stable=ns,
                n_unstable=nu,
                n_center=nc,
            )
        )
    return records, {"starts": len(starts), "failed_starts": n_fail}


def equilibria_of(
    C: ChartField,
    *,
    box: dict[str, tuple[float, float]] | None = None,
    seed: int = 0,
    n_starts: int = 64,
) -> tuple[list[EquilibriumRecord], dict]:
    """Equilibria of the full chart field (no horizon restriction).

    Used for degenerate-level-set problems where the singular object is a
    finite equilibrium rather than a point at infinity.
    """
    dim = len(C.vars)
    box = box or {}
    lows = np.array([box.get(v, (-1.5, 1.5))[0] for v in C.vars])
    highs = np.array([box.get(v, (-1.5, 1.5))[1] for v in C.vars])
    for i, v in enumerate(C.vars):
        if v in C.positive and lows[i] < 0.0:
            lows[i] = 0.0
    rng = np.random.default_rng(seed)
    starts = [lows + (highs - lows) * rng.random(dim) for _ in range(n_starts)]
    starts.append(np.zeros(dim))
    for i in range(dim):
        for c in (0.5, 1.0, -0.5, -1.0):
            p = np.zeros(dim)
            p[i] = c
            if lows[i] <= c <= highs[i]:
                starts.append(p)

    pv = C.poly_vars

    def F(x):
        return np.array([comp.eval(x) for comp in C.components])

    grads = [[comp.partial(v) for v in pv] for comp in C.components]

    def JF(x):
        return np.array([[g.eval(x) for g in row] for row in grads])

    clip = [_needs_nonnegative(C.components, v) for v in C.vars]
    roots = []
    n_fail = 0
    for x0 in starts:
        x = _damped_newton(F, JF, np.array(x0, dtype=float), lows, highs, clip,
                           1e-13, 60)
        if x is None:
            n_fail += 1
            continue
        x = _snap_axis_values(F, x, 1e-13)
        if not any(np.linalg.norm(x - r) <= 1e-8 for r in roots):
            roots.append(x.copy())
    roots.sort(key=lambda r: tuple(r))
    records = []
    for x in roots:
        J = jacobian(C.components, pv, list(x))
        label, ns, nu, nc, eig = classify(J)
        records.append(
            EquilibriumRecord(
                chart_desc=_chart_desc(C),
                coords=tuple(float(v) for v in x),
                jacobian=tuple(map(tuple, J.tolist())),
                eigenvalues=eig,
                classification=label,
                n_stable=ns,
                n_unstable=nu,
                n_center=nc,
            )
        )
    return records, {"starts": len(starts), "failed_starts": n_fail}


def _quasipolar_horizon_equilibria(C: ChartField, newton_tol, dedupe):
    """Roots of the angular component on {r = 0} over one period."""
    l = C.quasipolar_index
    T = period(l)
    ri = C.poly_vars.index(C.radial)
    ang = C.components[C.vars.index(C.angle)]
    sliced = GenPoly(
        C.poly_vars,
        {ev: c for ev, c in ang.terms if ev[ri] == 0},
    )

    def g(theta):
        c, s = cssn(theta, l)
        pt = [0.0] * len(C.poly_vars)
        pt[C.poly_vars.index(CS)] = c
        pt[C.poly_vars.index(SN)] = s
        return sliced.eval(pt)

    thetas = np.linspace(0.0, T, 257)
    vals = [g(th) for th in thetas]
    roots = []
    for a, b, va, vb in zip(thetas, thetas[1:], vals, vals[1:]):
        if va == 0.0:
            roots.append(a)
        elif va * vb < 0.0:
            lo, hi = a, b
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if g(lo) * g(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    uniq = []
    for r in roots:
        if not any(abs(r - u) <= dedupe for u in uniq):
            uniq.append(r)
    records = []
    for th in uniq:
        # classification is not meaningful through Cs/Sn symbols; report the
        # angular location with a numerical Jacobian in (r, theta)
        J = _quasipolar_numeric_jacobian(C, 0.0, th)
        label, ns, nu, nc, eig = classify(J)
        records.append(
            EquilibriumRecord(
                chart_desc=_chart_desc(C),
                coords=(0.0, float(th)),
                jacobian=tuple(map(tuple, J.tolist())),
                eigenvalues=eig,
                classification=label,
                n_stable=ns,
                n_unstable=nu,
                n_center=nc,
            )
        )
    return records, {"starts": len(thetas), "failed_starts": 0}


def _quasipolar_numeric_jacobian(C: ChartField, r, th, h=1e-7):
    def f(state):
        return np.array(C.eval_components(state))

    J = np.empty((2, 2))
    for j, (dr, dth) in enumerate(((h, 0.0), (0.0, h))):
        hi = f([r + dr, th + dth])
        lo = f([r - dr, th - dth])
        J[:, j] = (hi - lo) / (2 * h)
    return J


def _chart_desc(C: ChartField) -> str:
    return "->".join(s.op for s in C.provenance)


# -- center manifolds ---------------------------------------------------------


@dataclass(frozen=True)
class CenterSeries:
    """1-D center manifold x_s = h(x_c) and the reduced flow on it."""

    center_var: str
    stable_var: str
    coefficients: GenPoly          # h as a polynomial in the center variable
    reduced_flow: GenPoly          # dx_c/dtau restricted to the manifold
    d: Fraction                    # least exponent of the reduced flow
    c_d: object                    # its coefficient (exact when inputs exact)
    degree: Fraction               # truncation degree used
    exact: bool

    def h_coefficient(self, power) -> object:
        e = frac(power)
        for ev, c in self.coefficients.terms:
            if ev[0] == e:
                return c
        return 0

    def eval_h(self, x: float) -> float:
        return self.coefficients.eval([x])


def center_manifold_series_1d(
    C: ChartField,
    eq: Sequence[float] | EquilibriumRecord,
    degree=6,
) -> CenterSeries:
    """Solve the invariance equation order by order for a planar chart.

    The equilibrium must be semi-hyperbolic with its center direction along a
    coordinate axis.  For equilibria away from the origin the field must be
    polynomial (integer exponents) so it can be shifted; at the origin,
    rational-exponent fields are handled on their exponent lattice (series in
    x^(1/q)).
    """
    if len(C.vars) != 2:
        raise ValueError("center-manifold series needs a planar chart")
    coords = tuple(eq.coords) if isinstance(eq, EquilibriumRecord) else tuple(eq)
    degree = frac(degree)
    comps = list(C.components)
    vars = C.vars
    if any(abs(c) > 0 for c in coords):
        comps = [_shift_poly(p, vars, coords) for p in comps]

    J = jacobian(comps, vars, [0.0, 0.0])
    label, *_ = classify(J)
    if label != "semi-hyperbolic":
        raise ValueError(f"equilibrium is {label}, not semi-hyperbolic")
    # center direction must be a coordinate axis: the Jacobian column of the
    # center variable vanishes
    norm = abs(J).max()
    tol = ZERO_TOL_SCALE * (1.0 + norm)
    if abs(J[:, 0]).max() <= tol:
        c_idx, s_idx = 0, 1
    elif abs(J[:, 1]).max() <= tol:
        c_idx, s_idx = 1, 0
    else:
        raise ValueError("center direction is not a coordinate axis")
    lam = J[s_idx, s_idx]

    cvar, svar = vars[c_idx], vars[s_idx]
    Fc, Fs = comps[c_idx], comps[s_idx]
    exact = all(
        isinstance(c, (int, Fraction)) for p in comps for _, c in p.terms
    )
    # the linear transverse coefficient, kept exact when the field is exact
    lam_c = 0 if exact else 0.0
    for ev, c in Fs.terms:
        if ev[s_idx] == 1 and ev[c_idx] == 0:
            lam_c = lam_c + c
    if lam_c == 0:
        raise ValueError("transverse eigenvalue vanished symbolically")

    # G_s = F_s - lam * x_s
    Gs = Fs - GenPoly.var(vars, svar, 1, lam_c)

    h = GenPoly((cvar,), {})
    for _ in range(_iteration_budget(comps, degree)):
        Fc_h = _substitute_series(Fc, cvar, svar, h, degree)
        Gs_h = _substitute_series(Gs, cvar, svar, h, degree)
        hprime = h.partial(cvar)
        rhs = _truncate(hprime * Fc_h - Gs_h, degree)
        new_h = rhs * _invert_coeff(lam_c)
        if new_h == h:
            break
        h = new_h
    # sanity: h(0) = h'(0) = 0
    for ev, c in h.terms:
        if ev[0] <= 1:
            raise ArithmeticError(f"center series has low-order term {ev}: {c}")

    reduced = _truncate(_substitute_series(Fc, cvar, svar, h, degree), degree)
    if reduced.is_zero():
        raise DegenerateBeyondDegreeError(
            f"reduced flow vanishes to degree {degree}",
            series=CenterSeries(cvar, svar, h, reduced, frac(0), 0, degree, exact),
        )
    ev0, c0 = reduced.terms[0]
    return CenterSeries(
        center_var=cvar,
        stable_var=svar,
        coefficients=h,
        reduced_flow=reduced,
        d=ev0[0],
        c_d=c0,
        degree=degree,
        exact=exact,
    )


def _iteration_budget(comps, degree) -> int:
    dens = [int(e.denominator) for p in comps for ev, _ in p.terms for e in ev]
    q = max(dens) if dens else 1
    return int(4 * float(degree) * q) + 8


def _invert_coeff(c):
    if isinstance(c, (int, Fraction)):
        return Fraction(1, 1) / Fraction(c)
    return 1.0 / c


def _shift_poly(p: GenPoly, vars, coords) -> GenPoly:
    """Shift the origin to ``coords`` (binomial expansion; integer exponents)."""
    if not p.degrees_are_integral() or not p.degrees_are_nonnegative():
        raise ValueError("shifting requires a polynomial field (integer exponents)")
    out = GenPoly.zero(vars)
    for ev, c in p.terms:
        term = GenPoly.const(vars, c)
        for v, e, x0 in zip(vars, ev, coords):
            base = GenPoly.var(vars, v) + _exactify(x0)
            term = term * base ** int(e)
        out = out + term
    return out


def _exactify(x):
    if isinstance(x, (int, Fraction)):
        return x
    f = Fraction(x).limit_denominator(10**9)
    return f if abs(float(f) - x) < 1e-12 * (1 + abs(x)) else x


def _substitute_series(p: GenPoly, cvar, svar, h: GenPoly, degree) -> GenPoly:
    """p(x_c, h(x_c)) truncated at the degree; s-exponents must be integers."""
    out = {}
    hpow_cache = {0: GenPoly((cvar,), {(frac(0),): 1})}

    def hpow(n):
        if n not in hpow_cache:
            hpow_cache[n] = _truncate(hpow(n - 1) * h, degree)
        return hpow_cache[n]

    ci = p.vars.index(cvar)
    si = p.vars.index(svar)
    acc = GenPoly((cvar,), {})
    for ev, c in p.terms:
        es = ev[si]
        if es.denominator != 1 or es < 0:
            raise ValueError("transverse exponents must be nonnegative integers")
        base = GenPoly((cvar,), {(ev[ci],): c})
        acc = acc + _truncate(base * hpow(int(es)), degree)
    return acc


def _truncate(p: GenPoly, degree) -> GenPoly:
    return GenPoly(p.vars, {ev: c for ev, c in p.terms if ev[0] <= degree})


@dataclass(frozen=True)
class CmAsymptotics:
    """Decay law of the reduced flow dx/dtau = c_d x^d (c_d < 0, d >= 2)."""

    d: int
    c_d: float
    exponent: float          # x ~ const * tau^exponent
    constant: float          # exact-solution constant ((d-1)|c_d|)^(-1/(d-1))
    alt_constant: float      # 1/sqrt(d-1); agrees with `constant` at d = 3
    constant_note: str

    def law(self, tau, x0: float = 1.0) -> float:
        """Exact solution x(tau) of dx/dtau = c_d x^d from x(0) = x0 > 0."""
        d, cd = self.d, self.c_d
        return ((d - 1) * (-cd) * tau + x0 ** (1 - d)) ** (-1.0 / (d - 1))


def cm_flow_asymptotics(d: int, c_d: float) -> CmAsymptotics:
    """Asymptotics x(tau) ~ ((d-1)|c_d| tau)^(-1/(d-1)) of the reduced flow."""
    if d < 2 or int(d) != d:
        raise ValueError("d must be an integer >= 2")
    if not (c_d < 0):
        raise ValueError("c_d must be negative (decay toward the equilibrium)")
    d = int(d)
    const = ((d - 1) * abs(c_d)) ** (-1.0 / (d - 1))
    alt = 1.0 / math.sqrt(d - 1)
    return CmAsymptotics(
        d=d,
        c_d=float(c_d),
        exponent=-1.0 / (d - 1),
        constant=const,
        alt_constant=alt,
        constant_note=(
            "emitted law uses the exact-solution constant ((d-1)|c_d|)^(-1/(d-1)); "
            "the 1/sqrt(d-1) form is recorded alongside (equal at d = 3)"
        ),
    )


def type1_rate_prediction(t: TypeVector, i: int) -> RateModel:
    """Componentwise type-I rate |y_i| ~ C (t_max - t)^(-alpha_i/k)."""
    if t.alpha[i] <= 0:
        raise ValueError("component is not a homogeneity direction")
    return RateModel(rho=float(t.alpha[i] / t.k), q=0.0)


# -- periodic-orbit coefficients (quasi-polar charts) -------------------------


@dataclass(frozen=True)
class LienardCoefficients:
    """Quadrature data controlling the periodic orbit on the horizon.

    alpha is the Poincare-map exponent (first-order return coefficient
    beta1 = e^alpha); alpha_bar = -alpha is the exponent of the near-identity
    radial transform (negative on (0, T/2), zero at T/2 and T).  Gamma2 is
    the second-order integrand whose period integral Gamma_T > 0 drives the
    attraction (beta2(T) < 0) and the linear growth of its running integral.
    """

    n: int
    T: float
    alpha: Callable[[float], float]
    alpha_bar: Callable[[float], float]
    a2: Callable[[float], float]
    beta1_T: float
    beta2_T: float
    Gamma_T: float
    C2: float                     # pointwise bound on Gamma2
    C3: float                     # slope of the running integral, Gamma_T / T
    gamma2_cumulative: Callable[[float], float]

    def cumulative_Gamma2(self, phi: float) -> float:
        """int_0^phi Gamma2, using exact periodicity for many revolutions."""
        N = math.floor(phi / self.T)
        return N * self.Gamma_T + float(self.gamma2_cumulative(phi - N * self.T))

    def to_dict(self):
        return {
            "n": self.n,
            "T": self.T,
            "beta1_T": self.beta1_T,
            "beta2_T": self.beta2_T,
            "Gamma_T": self.Gamma_T,
            "C2": self.C2,
            "C3": self.C3,
        }


def lienard_coefficients(n: int) -> LienardCoefficients:
    """Quadratures of the periodic-orbit coefficients for odd n.

    gamma1 = Sn^2 Cs^n, gamma2 = Sn Cs^2n + gamma1 Cs^(2n+1)/(1 - Sn Cs^(n+1)),
    all divided by 1 - Sn Cs^(n+1) where they enter; computed by one
    high-accuracy integration pass over [0, T] with dense output.
    """
    if n < 1 or n % 2 == 0:
        raise ValueError("n must be an odd positive integer")
    l = n + 1
    tab = table(l)
    T = tab.T

    def parts(phi):
        c, s = tab._eval_scalar(phi)
        den = 1.0 - s * c ** (n + 1)
        g1 = s * s * c**n
        G1 = g1 / den
        g2 = s * c ** (2 * n) + g1 * c ** (2 * n + 1) / den
        G2 = g2 / den
        return G1, G2

    def rhs(phi, y):
        G1, G2 = parts(phi)
        alpha = y[0]
        # y = [alpha, int e^alpha G2, int G2, int (e^alpha - 1) G2]
        ea = math.exp(alpha)
        return [G1, ea * G2, G2, (ea - 1.0) * G2]

    nodes = np.linspace(0.0, T, 4097)
    sol = solve_ivp(
        rhs,
        (0.0, T),
        [0.0, 0.0, 0.0, 0.0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
    )
    vals = sol.sol(nodes)
    alpha_sp = CubicSpline(nodes, vals[0])
    int_G2_sp = CubicSpline(nodes, vals[2])
    int_em1G2_sp = CubicSpline(nodes, vals[3])

    alpha_T = float(vals[0, -1])
    Gamma_T = float(vals[2, -1])
    beta2_T = -math.exp(alpha_T) * float(vals[1, -1])
    C2 = float(max(abs(parts(p)[1]) for p in np.linspace(0, T, 2001)))

    def alpha(phi):
        return float(alpha_sp(_wrap(phi, T)))

    def alpha_bar(phi):
        return -alpha(phi)

    def a2(phi):
        # e^(2 alpha_bar) int_0^phi (e^(-alpha_bar) - 1) Gamma2
        #   = e^(-2 alpha) int_0^phi (e^alpha - 1) Gamma2
        w = _wrap(phi, T)
        return math.exp(-2.0 * alpha(w)) * float(int_em1G2_sp(w))

    return LienardCoefficients(
        n=n,
        T=T,
        alpha=alpha,
        alpha_bar=alpha_bar,
        a2=a2,
        beta1_T=math.exp(alpha_T),
        beta2_T=beta2_T,
        Gamma_T=Gamma_T,
        C2=C2,
        C3=Gamma_T / T,
        gamma2_cumulative=lambda p: float(int_G2_sp(_wrap(p, T))),
    )


def _wrap(phi, T):
    x = math.fmod(phi, T)
    return x + T if x < 0 else x


def lienard_R_transform(r: float, phi: float, coeffs: LienardCoefficients) -> float:
    """Near-identity radial change R = e^(alpha_bar) r + a2 r^2 that removes
    the first-order angular modulation of the return map."""
    return math.exp(coeffs.alpha_bar(phi)) * r + coeffs.a2(phi) * r * r


def lienard_R_inverse(R: float, phi: float, coeffs: LienardCoefficients) -> float:
    """Positive branch of the quadratic inverse; r ~ e^(-alpha_bar) R as R -> 0."""
    b = math.exp(coeffs.alpha_bar(phi))
    a = coeffs.a2(phi)
    if abs(a) < 1e-14:
        return R / b
    disc = b * b + 4.0 * a * R
    if disc < 0.0:
        raise NegativeDiscriminantError(
            f"R = {R} at phi = {phi} is outside the validity region"
        )
    # cancellation-free form of (-b + sqrt(disc)) / (2a)
    return 2.0 * R / (b + math.sqrt(disc))
