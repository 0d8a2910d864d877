"""Scaling structure: quasi-homogeneity, Newton diagrams, factoring."""

import itertools
from fractions import Fraction as F

import pytest

from horizon.errors import NonPolynomialError
from horizon.genpoly import GenMonomial, GenPoly, parse_genpoly
from horizon.structure import (
    TypeVector,
    check_aqh_numeric,
    check_quasi_homogeneous,
    factor_common_monomial,
    newton_data,
    principal_part,
    qh_component,
    qh_part,
)


def gp(text, vars):
    return parse_genpoly(text, vars)


AIU_VARS = ("u0", "u1")
AIU = [gp("u1 * u0^(-2)", AIU_VARS), gp("u1^2 * u0^(-1)", AIU_VARS)]


class TestQuasiHomogeneous:
    def test_inverse_power_system(self):
        assert check_quasi_homogeneous(AIU, TypeVector.make((0, 1), 1))

    def test_fractional_order_system(self):
        for a in (F(1, 2), F(2, 5)):
            e = (a + 1) / a
            f = [
                GenPoly(("v0", "v1"), {(e, F(1)): a}),
                GenPoly(("v0", "v1"), {(F(1), e): a}),
            ]
            assert check_quasi_homogeneous(f, TypeVector.make((1, 1), 1 + 1 / a))

    def test_inhomogeneous_constant_term(self):
        f = [gp("y^2 + 1", ("y",))]
        assert not check_quasi_homogeneous(f, TypeVector.make((1,), 1))


class TestAqhNumeric:
    def test_exactly_qh_residuals_vanish(self):
        rep = check_aqh_numeric(
            AIU, TypeVector.make((0, 1), 1), [10.0, 1e2, 1e3, 1e4],
            boxes={"u0": (0.5, 2.0)}, positive=("u0", "u1"),
        )
        assert max(rep.max_residual) == 0.0
        assert rep.decays

    def test_quadratic_plus_linear(self):
        # y' = y^2 + y with alpha=(1), k=1: residual(R) = 1/R at x = 1
        f = [gp("y^2 + y", ("y",))]
        rep = check_aqh_numeric(f, TypeVector.make((1,), 1), [10.0, 1e2, 1e3, 1e4])
        for R, res in zip(rep.R_grid, rep.max_residual):
            assert res == pytest.approx(1.0 / R, rel=1e-12)
        assert rep.decays

    def test_lienard_residual_decays_like_inverse_R(self):
        n = 3
        f = [
            gp("y", ("x", "y")),
            gp(f"-x^{2 * n + 1} - x^{2 * n} - x^{n}*y", ("x", "y")),
        ]
        rep = check_aqh_numeric(f, TypeVector.make((1, n + 1), n), [1e2, 1e3, 1e4, 1e5])
        for R1, r1, R2, r2 in zip(
            rep.R_grid, rep.max_residual, rep.R_grid[1:], rep.max_residual[1:]
        ):
            assert r2 / r1 == pytest.approx(R1 / R2, rel=0.05)
        assert rep.decays


class TestNewtonDiagram:
    def test_degenerate_wave_profile_face(self):
        # phi' = psi, psi' = n c phi^n - n phi^(m+n-1), n=2, m=2, c=1
        n, m = 2, 2
        X = [
            gp("psi", ("phi", "psi")),
            gp(f"2*phi^{n} - 2*phi^{m + n - 1}", ("phi", "psi")),
        ]
        d = newton_data(X)
        assert (0, 2) in d.vertices and (n + 1, 0) in d.vertices
        assert len(d.faces) == 1
        assert d.weights[0] == (2, n + 1)

    def test_single_term_field(self):
        X = [gp("x1^3", ("x1", "x2")), GenPoly.zero(("x1", "x2"))]
        d = newton_data(X)
        assert d.vertices == ((3, 1),)
        assert d.faces == ()

    def test_three_point_support_matches_hull_oracle(self):
        # support {(2,0), (0,3), (3,3)}: segment (2,0)-(0,3), (3,3) interior
        X = [
            gp("x2^2 + x1^2*x2^2", ("x1", "x2")),  # points (0,3) and (2,3)... see below
            gp("x1 + x1^2*x2^3", ("x1", "x2")),  # points (2,0) and (3,3)
        ]
        # recompute actual support to keep the test honest
        d = newton_data(X)
        assert set(d.vertices) == {(2, 0), (0, 3)}
        assert d.weights == ((3, 2),)
        assert _oracle_faces(d.support) == {((0, 3), (2, 0))}

    def test_vertices_subset_of_support_and_domination(self):
        X = [
            gp("x2^2 + x1*x2 + x1^4", ("x1", "x2")),
            gp("x1^2 + x1*x2^3", ("x1", "x2")),
        ]
        d = newton_data(X)
        assert set(d.vertices) <= d.support
        for p in d.support:
            assert _dominated_by_polyhedron(p, d.vertices)


def _dominated_by_polyhedron(p, vertices):
    """p lies in hull(support) + R_+^2: on/above the lower boundary and right
    of the leftmost vertex."""
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    if p[0] < min(xs) or p[1] < min(ys):
        return False
    if p[0] >= max(xs):
        return p[1] >= min(ys)
    for (x1, y1), (x2, y2) in zip(vertices, vertices[1:]):
        if x1 <= p[0] <= x2:
            # above the face line through the two vertices (exact arithmetic)
            return (p[0] - x1) * (y2 - y1) <= (p[1] - y1) * (x2 - x1)
    return p[1] >= ys[0]

    def test_rejects_fractional(self):
        with pytest.raises(NonPolynomialError):
            newton_data([gp("x1^(1/2)", ("x1", "x2")), GenPoly.zero(("x1", "x2"))])

    def test_rejects_nonvanishing(self):
        with pytest.raises(NonPolynomialError):
            newton_data([gp("1 + x1", ("x1", "x2")), GenPoly.zero(("x1", "x2"))])


def _oracle_faces(support):
    """Brute-force compact faces: a segment (p,q) is a face iff some strictly
    positive weight vector minimizes exactly on {p, q, points between}."""
    pts = sorted(support)
    faces = set()
    for p, q in itertools.combinations(pts, 2):
        w = (-(q[1] - p[1]), q[0] - p[0])
        if w[0] == 0 or w[1] == 0:
            continue
        if w[0] < 0:
            w = (-w[0], -w[1])
        if w[1] <= 0:
            continue
        level = w[0] * p[0] + w[1] * p[1]
        if all(w[0] * r[0] + w[1] * r[1] >= level for r in pts):
            a, b = sorted((p, q))
            faces.add((a, b))
    # keep only maximal segments
    out = set()
    for f in faces:
        if not any(g != f and _contains(g, f) for g in faces):
            out.add(f)
    return out


def _contains(big, small):
    (a, b), (c, d) = big, small
    def on(p):
        return (b[0] - a[0]) * (p[1] - a[1]) == (b[1] - a[1]) * (p[0] - a[0]) and min(
            a[0], b[0]
        ) <= p[0] <= max(a[0], b[0])
    return on(c) and on(d)


class TestPrincipalPart:
    def test_wave_profile_principal_terms(self):
        n, m = 2, 3  # m > 2 so the higher term is off the face
        X = [
            gp("psi", ("phi", "psi")),
            gp(f"2*phi^{n} - 2*phi^{m + n - 1}", ("phi", "psi")),
        ]
        d = newton_data(X)
        principal, discarded = principal_part(X, d)
        assert principal[0] == X[0]
        assert principal[1] == gp(f"2*phi^{n}", ("phi", "psi"))
        assert discarded[1] == gp(f"-2*phi^{m + n - 1}", ("phi", "psi"))

    def test_quasi_homogeneous_field_is_its_own_principal_part(self):
        X = [gp("x1*x2", ("x1", "x2")), gp("x2^2", ("x1", "x2"))]
        d = newton_data(X)
        principal, discarded = principal_part(X, d)
        assert principal == X
        assert all(p.is_zero() for p in discarded)

    def test_semi_hyperbolic_normal_form_face(self):
        # x1' = -x1^d + higher order, single component: face selects -x1^d
        d_exp = 3
        X = [
            gp(f"-x1^{d_exp} - x1^{d_exp + 2}", ("x1", "x2")),
            GenPoly.zero(("x1", "x2")),
        ]
        d = newton_data(X)
        principal, _ = principal_part(X, d)
        assert principal[0] == gp(f"-x1^{d_exp}", ("x1", "x2"))

    def test_qh_parts_union_equals_principal(self):
        X = [
            gp("x2^2 + x1*x2 + x1^4", ("x1", "x2")),
            gp("x1^2 + x1^3*x2", ("x1", "x2")),
        ]
        d = newton_data(X)
        principal, _ = principal_part(X, d)
        acc = [GenPoly.zero(X[0].vars), GenPoly.zero(X[0].vars)]
        seen = [set(), set()]
        for face in range(len(d.faces)):
            part = qh_part(X, d, face)
            for j, pj in enumerate(part):
                for ev, c in pj.terms:
                    if ev not in seen[j]:
                        seen[j].add(ev)
                        acc[j] = acc[j] + GenPoly(pj.vars, {ev: c})
        assert acc[0] == principal[0]
        assert acc[1] == principal[1]


class TestFactorCommonMonomial:
    def test_divides_exactly(self):
        vars = ("r", "x")
        X = [gp("-r*x - 2*r*x^2", vars), gp("2*x^3 - 3*x^4", vars)]
        mu, reduced = factor_common_monomial(X)
        assert dict(mu.exps) == {"x": 1}
        assert reduced[0] == gp("-r - 2*r*x", vars)
        assert reduced[1] == gp("2*x^2 - 3*x^3", vars)
        back = [fj.mul_monomial(mu) for fj in reduced]
        assert back[0] == X[0] and back[1] == X[1]

    def test_fractional_exponent_field(self):
        # dr = -a r u, du = a(-u^2 + u^(1+1/a)) shares the factor u
        a = F(1, 3)
        vars = ("r", "u")
        X = [
            GenPoly(vars, {(F(1), F(1)): -a}),
            GenPoly(vars, {(F(0), F(2)): -a, (F(0), (a + 1) / a): a}),
        ]
        mu, reduced = factor_common_monomial(X)
        assert dict(mu.exps) == {"u": 1}
        assert reduced[0] == GenPoly(vars, {(F(1), F(0)): -a})
        assert reduced[1] == GenPoly(vars, {(F(0), F(1)): -a, (F(0), F(1) / a): a})

    def test_no_common_factor(self):
        X = [gp("x + y", ("x", "y")), gp("y^2 + 1", ("x", "y"))]
        mu, reduced = factor_common_monomial(X)
        assert mu.exps == ()
        assert reduced[0] == X[0] and reduced[1] == X[1]


def test_qh_implies_zero_aqh_residuals():
    t = TypeVector.make((1, 2), 2)
    # build an exactly quasi-homogeneous field for this type
    f = [gp("x^3 + x*y", ("x", "y")), gp("x^2*y + y^2", ("x", "y"))]
    assert check_quasi_homogeneous(f, t)
    rep = check_aqh_numeric(f, t, [10.0, 100.0, 1e3, 1e4])
    assert max(rep.max_residual) == 0.0


def test_diagram_json_dump():
    X = [
        gp("x2^2", ("x1", "x2")),
        gp("x1^2 + x1^4", ("x1", "x2")),
    ]
    d = newton_data(X)
    doc = d.to_dict()
    assert set(doc) == {"vertices", "faces", "weights"}
    assert doc["vertices"] == [[0, 3], [3, 0]]
    assert doc["faces"] == [[0, 1]]
    assert doc["weights"] == [[1, 1]]
