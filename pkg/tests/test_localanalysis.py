"""Equilibria, classification, center manifolds, periodic-orbit coefficients."""

import math
from fractions import Fraction as F

import numpy as np
import pytest

from horizon.compactify import (
    base_field,
    blowup_chart,
    desingularize,
    directional_compactify,
    quasi_polar_compactify,
    time_rescale,
)
from horizon.errors import DegenerateBeyondDegreeError, NegativeDiscriminantError
from horizon.genpoly import GenMonomial, GenPoly, parse_genpoly
from horizon.localanalysis import (
    center_manifold_series_1d,
    classify,
    cm_flow_asymptotics,
    equilibria_of,
    horizon_equilibria,
    lienard_R_inverse,
    lienard_R_transform,
    lienard_coefficients,
    type1_rate_prediction,
)
from horizon.structure import TypeVector


def gp(text, vars):
    return parse_genpoly(text, vars)


def iy_chart(a):
    vars = ("v0", "v1")
    e = (a + 1) / a
    C = base_field(
        vars,
        [GenPoly(vars, {(e, F(1)): a}), GenPoly(vars, {(F(1), e): a})],
        positive=vars,
        name="iy",
    )
    k = 1 + 1 / a
    return desingularize(directional_compactify(C, TypeVector.make((1, 1), k), "v0"), k)


def quench_chart(alpha, c):
    vars = ("phi", "psi")
    C = base_field(
        vars,
        [gp("psi", vars), gp(f"-{c}*psi - phi^(-{alpha})", vars)],
        positive=("phi",),
        name="quench",
    )
    D0 = time_rescale(C, GenMonomial.make(1, {"phi": alpha}), check_positive=False)
    DC = directional_compactify(
        D0, TypeVector.make((1, 1), alpha), "psi", sign=-1, radial_name="lam"
    )
    return desingularize(DC, alpha)


class TestHorizonEquilibria:
    def test_two_point_horizon(self):
        eqs, diag = horizon_equilibria(iy_chart(F(1, 2)), box={"v1": (0.0, 2.0)})
        coords = [e.coords for e in eqs]
        assert len(coords) == 2
        assert coords[0] == pytest.approx((0.0, 0.0), abs=1e-10)
        assert coords[1] == pytest.approx((0.0, 1.0), abs=1e-10)
        assert eqs[0].classification == "linearly-zero"
        assert eqs[1].classification == "hyperbolic"
        # saddle: stable radially, unstable along the invariant line
        assert eqs[1].n_stable == 1 and eqs[1].n_unstable == 1
        ev = sorted(z.real for z in eqs[1].eigenvalues)
        assert ev[0] == pytest.approx(-0.5, abs=1e-9)
        assert ev[1] == pytest.approx(0.5, abs=1e-9)

    def test_ratio_chart_equilibria_with_negative_root(self):
        a, theta = 0.75, math.pi / 4
        ct = math.cos(theta)
        vars = ("u0", "u1")
        f1 = GenPoly(vars, {(F(2), F(2)): 1.0, (F(3), F(1)): 2 * (1 - a) * ct,
                            (F(4), F(0)): -4 * a * ct * ct})
        f2 = GenPoly(vars, {(F(1), F(3)): 1.0, (F(2), F(2)): 2 * a * ct})
        C = base_field(vars, [f1, f2], positive=vars, name="andrews1")
        D = desingularize(directional_compactify(C, TypeVector.make((1, 1), 3), "u1"), 3)
        # the second equilibrium sits at a negative ratio (outside the
        # physical sector but still an equilibrium of the chart field)
        eqs, _ = horizon_equilibria(D, box={"u0": (-2.0, 2.0)})
        xs = sorted(e.coords[1] for e in eqs)
        x_star = (1 - 2 * a) / (2 * a * ct)
        assert len(xs) == 2
        assert xs[0] == pytest.approx(x_star, abs=1e-8)
        assert xs[1] == pytest.approx(0.0, abs=1e-10)
        origin = [e for e in eqs if abs(e.coords[1]) < 1e-9][0]
        assert origin.classification == "linearly-zero"

    def test_quench_alpha1_semi_hyperbolic_pair(self):
        eqs, _ = horizon_equilibria(quench_chart(1, 1), box={"phi": (-0.5, 2.0)})
        assert len(eqs) == 2
        p0 = eqs[0]
        pc = eqs[1]
        assert p0.coords == pytest.approx((0.0, 0.0), abs=1e-10)
        assert pc.coords == pytest.approx((0.0, 1.0), abs=1e-9)
        assert p0.classification == "semi-hyperbolic"
        assert sorted(z.real for z in p0.eigenvalues) == pytest.approx([-1.0, 0.0], abs=1e-9)
        assert pc.classification == "hyperbolic"
        assert pc.n_unstable == 2  # source
        J = np.array(pc.jacobian)
        assert np.allclose(J, np.eye(2), atol=1e-9)

    def test_quench_alpha2_blowup_chart_saddle_and_sink(self):
        alpha, c = 2, 1
        DS = quench_chart(alpha, c)
        B = blowup_chart(DS, (alpha - 1, alpha + 1), "lam", radial_name="r")
        R = time_rescale(B, GenMonomial.make(1, {"r": -(alpha**2 - 1)}),
                         check_positive=False)
        eqs, _ = horizon_equilibria(R, box={"phi_b": (-0.5, 3.0)})
        assert len(eqs) == 2
        p0, pa = eqs
        assert p0.coords == pytest.approx((0.0, 0.0), abs=1e-10)
        assert pa.coords == pytest.approx((0.0, 2.0), abs=1e-9)
        # Jacobians match the closed forms diag(-1/(a-1), 2/(a-1)), diag(-1/(a-1), -2)
        assert np.allclose(np.array(p0.jacobian), np.diag([-1.0, 2.0]), atol=1e-9)
        assert np.allclose(np.array(pa.jacobian), np.diag([-1.0, -2.0]), atol=1e-9)
        assert p0.classification == "hyperbolic" and p0.n_stable == 1
        assert pa.classification == "hyperbolic" and pa.n_stable == 2

    def test_degenerate_wave_origin_is_nilpotent(self):
        n, m, c = 2, 2, 1
        vars = ("phi", "psi")
        C = base_field(
            vars,
            [gp("psi", vars), gp(f"{n*c}*phi^{n} - {n}*phi^{m+n-1}", vars)],
            positive=("phi",),
            name="kdv",
        )
        eqs, _ = equilibria_of(C, box={"phi": (-0.5, 1.5), "psi": (-0.5, 0.5)})
        origin = [e for e in eqs if abs(e.coords[0]) < 1e-9][0]
        assert origin.classification == "nilpotent"
        assert np.allclose(np.array(origin.jacobian), [[0, 1], [0, 0]], atol=1e-12)


class TestClassify:
    def test_scale_invariance(self):
        J = np.array([[0.0, 1.0], [0.0, -2.0]])
        for c in (1e-3, 1.0, 1e3):
            label, *_ = classify(c * J)
            assert label == "semi-hyperbolic"
        J2 = np.array([[0.0, 1.0], [0.0, 0.0]])
        for c in (1e-3, 1.0, 1e3):
            label, *_ = classify(c * J2)
            assert label == "nilpotent"

    def test_linearly_zero(self):
        label, ns, nu, nc, _ = classify(np.zeros((2, 2)))
        assert label == "linearly-zero"
        assert nc == 2

    def test_counts(self):
        label, ns, nu, nc, _ = classify(np.diag([-1.0, 2.0, -3.0]))
        assert label == "hyperbolic" and ns == 2 and nu == 1 and nc == 0


class TestCenterManifold:
    def test_quench_alpha1_series_vanishes_exactly(self):
        # exact rational arithmetic: every coefficient through degree 4 is 0
        DS = quench_chart(1, 1)
        series = center_manifold_series_1d(DS, (0.0, 0.0), degree=6)
        assert series.exact
        for p in (2, 3, 4, 5, 6):
            assert series.h_coefficient(p) == 0
        assert series.d == 3
        assert series.c_d == -1
        assert series.center_var == "lam"

    def test_known_parabola_manifold_is_degenerate(self):
        # x1' = -x1^3 + x1 x2, x2' = -x2 + x1^2: h = x1^2 exactly and the
        # reduced flow vanishes identically (a curve of equilibria)
        vars = ("x1", "x2")
        C = base_field(vars, [gp("-x1^3 + x1*x2", vars), gp("-x2 + x1^2", vars)],
                       name="parabola")
        with pytest.raises(DegenerateBeyondDegreeError) as err:
            center_manifold_series_1d(C, (0.0, 0.0), degree=6)
        h = err.value.series.coefficients
        assert h == GenPoly(("x1",), {(F(2),): 1})

    def test_degenerate_wave_half_integer_lattice(self):
        # phi' = psi, psi' = -c psi - phi^N (1 - phi)(phi - a), N = m + p
        m, p = 2, F(1, 2)
        a, c = F(1, 4), 1
        N = m + p
        vars = ("phi", "psi")
        fN = GenPoly(vars, {(N, F(0)): -a, (N + 1, F(0)): 1 + a, (N + 2, F(0)): -1})
        C = base_field(vars, [gp("psi", vars), gp("-psi", vars) * c - fN],
                       positive=("phi",), name="fhn")
        series = center_manifold_series_1d(C, (0.0, 0.0), degree=5)
        assert series.exact
        # leading coefficient of the invariant graph is a/c at power N
        assert series.h_coefficient(N) == a / c
        assert series.d == N
        assert series.c_d == a / c
        # invariance residual vanishes through the truncation degree
        resid = _invariance_residual(C, series)
        assert resid.is_zero()

    def test_residual_property_quadratic_manifold(self):
        vars = ("x", "y")
        C = base_field(vars, [gp("-x^3 + x*y", vars), gp("-2*y + 5*x^2", vars)],
                       name="toy")
        series = center_manifold_series_1d(C, (0.0, 0.0), degree=8)
        assert _invariance_residual(C, series).is_zero()
        assert series.h_coefficient(2) == F(5, 2)


def _invariance_residual(C, series):
    from horizon.localanalysis import _substitute_series, _truncate

    cvar, svar = series.center_var, series.stable_var
    Fc = C.components[list(C.vars).index(cvar)]
    Fs = C.components[list(C.vars).index(svar)]
    h = series.coefficients
    lhs = h.partial(cvar) * _substitute_series(Fc, cvar, svar, h, series.degree)
    rhs = _substitute_series(Fs, cvar, svar, h, series.degree)
    return _truncate(lhs - rhs, series.degree)


class TestCmAsymptotics:
    def test_quadratic_reduced_flow(self):
        asym = cm_flow_asymptotics(2, -1.0)
        assert asym.exponent == -1.0
        assert asym.constant == pytest.approx(1.0)

    def test_cubic_matches_both_constants(self):
        asym = cm_flow_asymptotics(3, -1.0)
        assert asym.constant == pytest.approx(1 / math.sqrt(2))
        assert asym.alt_constant == pytest.approx(1 / math.sqrt(2))

    def test_quartic_closed_form(self):
        asym = cm_flow_asymptotics(4, -1.0)
        # oracle: w(tau) = (3*tau + 1)^(-1/3) solves w' = -w^4, w(0) = 1
        for tau in (1.0, 10.0, 1e3):
            assert asym.law(tau) == pytest.approx((3 * tau + 1) ** (-1 / 3), rel=1e-12)

    def test_law_matches_integration_within_two_percent(self):
        from horizon.dynamics import integrate

        for d, cd in ((2, -1.0), (3, -0.5), (4, -2.0)):
            vars = ("w",)
            C = base_field(vars, [GenPoly(vars, {(F(d),): cd})], positive=vars,
                           name="cm")
            traj = integrate(C, [1.0], 1e4, rtol=1e-12, atol=1e-13,
                             stop_at_equilibrium=False)
            asym = cm_flow_asymptotics(d, cd)
            w_num = traj.final_state[0]
            assert asym.law(1e4) == pytest.approx(w_num, rel=0.02)


class TestType1Prediction:
    def test_ratio_scalings(self):
        # k = 2, alpha = (1,1): rho = 1/2
        pred = type1_rate_prediction(TypeVector.make((1, 1), 2), 0)
        assert pred.rho == pytest.approx(0.5) and pred.q == 0.0
        # k = 1 + 1/a: rho = a/(a+1)
        a = F(1, 2)
        pred = type1_rate_prediction(TypeVector.make((1, 1), 1 + 1 / a), 0)
        assert pred.rho == pytest.approx(float(a / (a + 1)))
        # type (1, n+1), order n+1: rho(x) = 1/n
        n = 3
        pred = type1_rate_prediction(TypeVector.make((1, n + 1), n), 0)
        assert pred.rho == pytest.approx(1 / n)


@pytest.fixture(scope="module")
def coeffs3():
    return lienard_coefficients(3)


class TestLienardCoefficients:
    def test_alpha_period_zero(self, coeffs3):
        assert abs(coeffs3.alpha(coeffs3.T)) <= 1e-8
        assert coeffs3.beta1_T == pytest.approx(1.0, abs=1e-8)

    def test_attraction(self, coeffs3):
        assert coeffs3.beta2_T < 0.0

    def test_gamma_period_positive(self, coeffs3):
        assert coeffs3.Gamma_T > 0.0
        assert lienard_coefficients(1).Gamma_T > 0.0

    def test_alpha_bar_sign_pattern(self, coeffs3):
        T = coeffs3.T
        for phi in np.linspace(0.02 * T, 0.48 * T, 23):
            assert coeffs3.alpha_bar(phi) < 0.0
        for phi in np.linspace(0.52 * T, 0.98 * T, 23):
            assert coeffs3.alpha_bar(phi) > 0.0
        assert abs(coeffs3.alpha_bar(T / 2)) <= 1e-8
        for phi in np.linspace(0, T, 40):
            assert math.exp(coeffs3.alpha(phi)) > 0.0

    def test_cumulative_linear_growth(self, coeffs3):
        for mult in (50, 75, 120):
            phi = mult * coeffs3.T + 0.37
            ratio = coeffs3.cumulative_Gamma2(phi) / (coeffs3.C3 * phi)
            assert 0.99 <= ratio <= 1.01

    def test_pointwise_bound(self, coeffs3):
        assert coeffs3.C2 > 0.0
        for phi in np.linspace(0, coeffs3.T, 500):
            inc = coeffs3.cumulative_Gamma2(phi + 1e-4) - coeffs3.cumulative_Gamma2(phi)
            assert inc <= coeffs3.C2 * 1e-4 + 1e-10


class TestLienardRTransform:
    def test_zero_maps_to_zero(self, coeffs3):
        for phi in np.linspace(0, coeffs3.T, 11):
            assert lienard_R_transform(0.0, phi, coeffs3) == 0.0

    def test_identity_at_phi_zero(self, coeffs3):
        for r in (1e-5, 1e-3, 0.1):
            assert lienard_R_transform(r, 0.0, coeffs3) == pytest.approx(r, rel=1e-10)

    def test_roundtrip(self, coeffs3):
        rng = np.random.default_rng(8)
        for _ in range(200):
            r = rng.uniform(1e-6, 1e-3)
            phi = rng.uniform(0.0, 3.0 * coeffs3.T)
            R = lienard_R_transform(r, phi, coeffs3)
            back = lienard_R_inverse(R, phi, coeffs3)
            assert back == pytest.approx(r, rel=1e-10, abs=1e-14)

    def test_small_R_asymptotic(self, coeffs3):
        phi = 0.3 * coeffs3.T
        R = 1e-9
        r = lienard_R_inverse(R, phi, coeffs3)
        assert r == pytest.approx(math.exp(-coeffs3.alpha_bar(phi)) * R, rel=1e-6)

    def test_negative_discriminant(self, coeffs3):
        # a2 > 0 somewhere: a sufficiently negative R has no positive preimage
        phi = 0.25 * coeffs3.T
        a2 = coeffs3.a2(phi)
        assert a2 > 0.0
        b = math.exp(coeffs3.alpha_bar(phi))
        bad_R = -(b * b) / (4 * a2) * 1.5
        with pytest.raises(NegativeDiscriminantError):
            lienard_R_inverse(bad_R, phi, coeffs3)


def test_degenerate_front_jacobians_match_closed_forms():
    # at (0,0): [[0,1],[0,-c]] for N > 1; at (1,0): [[0,1],[1-a,-c]]
    from horizon.casebook import get_case

    a, c = F(1, 4), F(1)
    cdef = get_case("fhn").definition({"m": 2, "p": F(1, 2), "a": a, "c": c})
    eqs, _ = equilibria_of(cdef.chart, box={"phi": (-0.25, 1.5), "psi": (-0.5, 0.5)})
    by_coord = {round(e.coords[0], 6): e for e in eqs}
    J0 = np.array(by_coord[0.0].jacobian)
    J1 = np.array(by_coord[1.0].jacobian)
    assert np.allclose(J0, [[0, 1], [0, -float(c)]], atol=1e-9)
    assert np.allclose(J1, [[0, 1], [1 - float(a), -float(c)]], atol=1e-9)
    assert by_coord[0.0].classification == "semi-hyperbolic"
    assert by_coord[1.0].classification == "hyperbolic"
