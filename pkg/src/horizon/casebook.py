"""Built-in case studies and pipeline orchestration.

Each case builds its base vector field and chart chain (with replayable
provenance), declares search boxes and expected horizon equilibria, and one
or more integration runs with observables and predicted rates.  run_case
executes the four-step pipeline: chart + equilibria, integrate, reconstruct
physical time, fit and compare rates.

Case families (parameters in parentheses, defaults chosen inside the
documented basins):

  aiu            planar inverse-power blow-up with sqrt-log corrections
  iy(a)          coupled fractional-power blow-up; rate depends on initial line
  andrews1(a,t)  ratio-compactified cubic system; three log-correction regimes
  andrews2(a,a1) three-species quadratic system via a nested compactification
  quench(alpha,c) traveling-front quenching profile (edge exponents / sqrt-log)
  fhn(m,p,a,c)   degenerate-diffusion front extinction edge, exponent 1/(1-p)
  kdv(m,n,c)     nonlinear-dispersion compacton edges, exponent 2/(n-1)
  lienard(n)     periodic divergence: finite-time for n>=3, grow-up for n=1
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction as F
from typing import Callable, Sequence

import numpy as np

from .compactify import (
    ChartField,
    base_field,
    blowup_chart,
    desingularize,
    directional_compactify,
    monomial_chart,
    quasi_polar_compactify,
    restrict_invariant,
    time_rescale,
)
from .dynamics import (
    SectionSpec,
    accumulate_time,
    integrate,
    remaining_time,
    trajectory_to_csv,
)
from .genpoly import GenMonomial, GenPoly, format_genpoly, parse_genpoly
from .localanalysis import (
    center_manifold_series_1d,
    equilibria_of,
    horizon_equilibria,
    lienard_coefficients,
)
from .quasitrig import period
from .rates import RateModel, compare_rate, fit_rate, phase_section_sampler
from .structure import TypeVector, newton_data

__all__ = ["CaseSpec", "CaseDefinition", "RunPlan", "RunReport", "builtin_cases",
           "get_case", "run_case", "sweep"]


@dataclass(frozen=True)
class Observable:
    name: str
    expr: GenPoly
    expected: RateModel | None = None
    tol_rho: float = 0.05
    tol_q: float = 0.1


@dataclass
class RunPlan:
    label: str
    initial: tuple[float, ...]
    tau_end: float
    window: tuple[float, float]
    observables: tuple[Observable, ...]
    direction: int = 1
    h_max: float = math.inf
    rtol: float = 1e-11
    atol: float = 1e-12
    window_relative: bool = True
    sampler: str = "trajectory"      # trajectory | sections | center-flow
    section: SectionSpec | None = None
    stop_at_equilibrium: bool = True
    expect_finite_edge: bool | None = None
    growup_check: bool = False       # fit log(1/r) linear in t
    center_eq: tuple[float, float] | None = None
    center_degree: int = 8
    center_grid: tuple[float, float, int] = (1e-12, 1e-4, 400)
    # the singular edge lies this far BEHIND the initial state (departure
    # from a saddle along its unstable manifold): s_j = edge_behind_s0 + t_j.
    # Used where approaching the opposite saddle is numerically unstable.
    edge_behind_s0: float | None = None


@dataclass
class CaseDefinition:
    name: str
    params: dict
    base: ChartField
    chart: ChartField
    type_vector: TypeVector | None
    singularity_kind: str
    runs: list[RunPlan]
    eq_mode: str = "horizon"         # horizon | full | none
    eq_box: dict | None = None
    expected_equilibria: tuple[tuple[float, ...], ...] = ()
    notes: str = ""
    orbital_check_point: dict | None = None
    orbital_check_span: float = 1.0


@dataclass(frozen=True)
class CaseSpec:
    name: str
    defaults: dict
    admissible: dict
    build: Callable[..., CaseDefinition]
    summary: str

    def definition(self, params: dict | None = None) -> CaseDefinition:
        p = dict(self.defaults)
        if params:
            for k, v in params.items():
                if k not in self.defaults:
                    raise ValueError(f"unknown parameter {k!r} for case {self.name}")
                p[k] = v
        for k, rng in self.admissible.items():
            lo, hi = rng
            if not (lo <= float(p[k]) <= hi):
                raise ValueError(
                    f"parameter {k} = {p[k]} outside admissible range [{lo}, {hi}]"
                )
        return self.build(**p)


# -- case builders -------------------------------------------------------------


def _build_aiu() -> CaseDefinition:
    vars = ("u0", "u1")
    f = [parse_genpoly("u1 * u0^(-2)", vars), parse_genpoly("u1^2 * u0^(-1)", vars)]
    base = base_field(vars, f, positive=vars, name="aiu")
    t = TypeVector.make((0, 1), 1)
    chart = time_rescale(
        desingularize(directional_compactify(base, t, "u1"), 1),
        GenMonomial.make(1, {"u0": 2}),
    )
    pv = chart.poly_vars
    runs = [
        RunPlan(
            label="blow-up",
            initial=(1.0, 1.0),
            tau_end=11.0,
            h_max=0.02,
            window=(1e-9, 1e-3),
            window_relative=False,
            stop_at_equilibrium=False,
            observables=(
                Observable("u1", parse_genpoly("r^(-1)", pv),
                           RateModel(1.0, 0.5), 0.05, 0.1),
                Observable("u0", parse_genpoly("u0", pv),
                           RateModel(0.0, 0.5), 0.05, 0.1),
            ),
            expect_finite_edge=True,
        )
    ]
    return CaseDefinition(
        name="aiu",
        params={},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind="blow-up",
        runs=runs,
        eq_mode="horizon",
        eq_box={"u0": (0.2, 8.0)},
        expected_equilibria=(),
        notes="no horizon equilibrium: the orbit escapes along the horizon "
              "with sqrt-log corrected component rates",
        orbital_check_point={"u0": 1.0, "u1": 1.0},
        orbital_check_span=1.2,
    )


def _build_iy(a) -> CaseDefinition:
    a = F(a)
    vars = ("v0", "v1")
    e = (a + 1) / a
    f = [GenPoly(vars, {(e, F(1)): a}), GenPoly(vars, {(F(1), e): a})]
    base = base_field(vars, f, positive=vars, name="iy")
    k = 1 + 1 / a
    t = TypeVector.make((1, 1), k)
    chart = time_rescale(
        desingularize(directional_compactify(base, t, "v0"), k),
        GenMonomial.make(1, {"v1": -1}),
    )
    pv = chart.poly_vars
    af = float(a)
    obs_v0 = lambda rho, tol: (
        Observable("v0", parse_genpoly("r^(-1)", pv), RateModel(rho, 0.0), tol, 0.1),
    )
    runs = [
        RunPlan(
            label="generic (v0 > v1)",
            initial=(0.5, 0.5),
            tau_end=45.0,
            h_max=0.05,
            window=(1e-10, 1e-4),
            observables=obs_v0(af, 0.03),
            expect_finite_edge=True,
        ),
        RunPlan(
            label="symmetric line (v0 = v1)",
            initial=(0.5, 1.0),
            tau_end=40.0,
            h_max=0.05,
            window=(1e-10, 1e-4),
            observables=obs_v0(af / (af + 1), 0.03),
            expect_finite_edge=True,
        ),
    ]
    return CaseDefinition(
        name="iy",
        params={"a": a},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind="blow-up",
        runs=runs,
        eq_box={"v1": (-0.5, 2.0)},
        expected_equilibria=((0.0, 0.0), (0.0, 1.0)),
        notes="the ratio line v1/v0 = 1 is invariant: on it the rate is the "
              "scaling-type prediction a/(a+1); off it the degenerate corner "
              "gives the faster rate a",
        orbital_check_point={"v0": 2.0, "v1": 1.0},
        orbital_check_span=1.0,
    )


def _build_andrews1(a, theta) -> CaseDefinition:
    a = float(a)
    theta = float(theta)
    ct, st = math.cos(theta), math.sin(theta)
    vars = ("u0", "u1")
    # polynomial form: field multiplied by sin(t)(u1 + 2cos(t)u0) > 0,
    # carried in the time chain as a prefactor
    f1 = GenPoly(vars, {(F(2), F(2)): 1.0, (F(3), F(1)): 2 * (1 - a) * ct,
                        (F(4), F(0)): -4 * a * ct * ct})
    f2 = GenPoly(vars, {(F(1), F(3)): 1.0, (F(2), F(2)): 2 * a * ct})
    mu = GenPoly(vars, {(F(0), F(1)): st, (F(1), F(0)): 2 * st * ct})
    base = base_field(vars, [f1, f2], positive=vars, prefactor=mu, name="andrews1")
    t = TypeVector.make((1, 1), 3)
    chart = time_rescale(
        desingularize(directional_compactify(base, t, "u1"), 3),
        GenMonomial.make(1, {"u0": -1}),
    )
    pv = chart.poly_vars
    if a > 0.5:
        window, tau_end, q1, q0 = (1e-45, 1e-18), 46.0, 0.5, -0.5
        rho, tol_q = 0.5, 0.15
        expected_eqs = ((0.0, 0.0), (0.0, (1 - 2 * a) / (2 * a * ct)))
        init = (0.5, 0.5)
    elif a == 0.5:
        window, tau_end, q1, q0 = (1e-45, 1e-18), 46.0, 0.25, -0.25
        rho, tol_q = 0.5, 0.1
        expected_eqs = ((0.0, 0.0),)
        init = (0.5, 0.5)
    else:
        # transverse settling at the sink decays like s^(|l2|/rate): sample
        # deep enough that it no longer bends the log-log fit
        window, tau_end, q1, q0 = (1e-22, 1e-12), 30.0, 0.0, 0.0
        rho, tol_q = 0.5, 0.1
        x_star = (1 - 2 * a) / (2 * a * ct)
        expected_eqs = ((0.0, 0.0), (0.0, x_star))
        init = (0.5, 0.55 * x_star)
    runs = [
        RunPlan(
            label=f"a={a}",
            initial=init,
            tau_end=tau_end,
            h_max=0.02,
            window=window,
            observables=(
                Observable("u1", parse_genpoly("r^(-1)", pv),
                           RateModel(rho, q1), 0.05, tol_q),
                Observable("u0", parse_genpoly("u0 * r^(-1)", pv),
                           RateModel(rho, q0), 0.05, tol_q),
            ),
            expect_finite_edge=True,
        )
    ]
    return CaseDefinition(
        name="andrews1",
        params={"a": a, "theta": theta},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind="blow-up",
        runs=runs,
        eq_box={"u0": (-2.0, 2.0)},
        expected_equilibria=expected_eqs,
        notes="log-correction exponent of the component rates jumps across "
              "a = 1/2 (0 -> 1/4 -> 1/2)",
        orbital_check_point={"u0": 1.0, "u1": 2.0},
        orbital_check_span=0.4,
    )


def _build_andrews2(a, a1) -> CaseDefinition:
    a = F(a)
    a1 = F(a1)
    vars = ("u1", "u2", "u3")
    f = [
        GenPoly(vars, {(F(2), F(1), F(0)): a, (F(2), F(0), F(1)): a,
                       (F(3), F(0), F(0)): -a1}),
        GenPoly(vars, {(F(0), F(2), F(1)): a, (F(1), F(2), F(0)): a1,
                       (F(0), F(3), F(0)): -a}),
        GenPoly(vars, {(F(1), F(0), F(2)): a1, (F(0), F(1), F(2)): a,
                       (F(0), F(0), F(3)): -a}),
    ]
    base = base_field(vars, f, positive=vars, name="andrews2")
    t = TypeVector.make((1, 1, 1), 2)
    M = monomial_chart(
        base,
        {
            "u1": GenMonomial.make(1, {"r": -1}),
            "u2": GenMonomial.make(1, {"r": -1, "w": -1}),
            "u3": GenMonomial.make(1, {"r": -1, "w": -1, "y": 1}),
        },
        ("r", "w", "y"),
        radial="r",
        positive=("r", "w", "y"),
    )
    D = time_rescale(M, GenMonomial.make(1, {"r": 2, "w": 2}), check_positive=False)
    S = restrict_invariant(D, "y", 1)
    chart = time_rescale(S, GenMonomial.make(1, {"w": -1}), check_positive=False)
    pv = chart.poly_vars
    af, a1f = float(a), float(a1)
    if a1f > 2 * af:
        rho1, rho2 = 2 * af / (2 * af + a1f), a1f / (2 * af + a1f)
        q1 = q2 = 0.0
        tol_r, tol_q = 0.03, 0.1
        window, tau_end = (1e-10, 1e-4), 40.0
        expected_eqs = ((0.0, 0.0),)
    elif a1f == 2 * af:
        rho1 = rho2 = 0.5
        q1, q2 = -0.5, 0.5
        tol_r, tol_q = 0.05, 0.15
        window, tau_end = (1e-20, 1e-8), 65.0
        expected_eqs = ((0.0, 0.0),)
    else:
        rho1 = rho2 = 0.5
        q1 = q2 = 0.0
        tol_r, tol_q = 0.05, 0.1
        # near the regime boundary a1 = 2a the sink's transverse eigenvalue
        # is small; corrections decay like s^(|l2|/rate), so sample deep
        window, tau_end = (1e-26, 1e-16), 110.0
        w_star = float((2 * a - a1) / a1)
        expected_eqs = ((0.0, 0.0), (0.0, w_star))
    runs = [
        RunPlan(
            label=f"a1={a1f}",
            initial=(0.5, 0.5),
            tau_end=tau_end,
            h_max=0.05,
            window=window,
            observables=(
                Observable("u1", parse_genpoly("r^(-1)", pv),
                           RateModel(rho1, q1), tol_r, tol_q),
                Observable("u2", parse_genpoly("r^(-1) * w^(-1)", pv),
                           RateModel(rho2, q2), tol_r, tol_q),
            ),
            expect_finite_edge=True,
        )
    ]
    return CaseDefinition(
        name="andrews2",
        params={"a": a, "a1": a1},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind="blow-up",
        runs=runs,
        eq_box={"w": (-0.5, 2.0)},
        expected_equilibria=expected_eqs,
        notes="nested two-variable compactification (u2 and u3 share the "
              "secondary scale); restricted to the invariant slice u2 = u3",
        orbital_check_point={"u1": 2.0, "u2": 1.0, "u3": 1.0},
        orbital_check_span=0.5,
    )


def _build_quench(alpha, c) -> CaseDefinition:
    alpha = int(alpha)
    c = F(c)
    vars = ("phi", "psi")
    fbase = [
        parse_genpoly("psi", vars),
        GenPoly(vars, {(F(0), F(1)): -c, (F(-alpha), F(0)): -1}),
    ]
    base = base_field(vars, fbase, positive=("phi",), name="quench")
    D0 = time_rescale(base, GenMonomial.make(1, {"phi": alpha}), check_positive=False)
    t = TypeVector.make((1, 1), alpha)
    DC = directional_compactify(D0, t, "psi", sign=-1, radial_name="lam")
    DS = desingularize(DC, alpha)
    cf = float(c)
    if alpha > 1:
        # blow-up weights from the Newton diagram of the degenerate corner
        diagram = newton_data(list(DS.components))
        assert diagram.weights, "no compact face at the degenerate equilibrium"
        w = diagram.weights[0]
        assert w == (alpha - 1, alpha + 1), w
        B = blowup_chart(DS, w, "lam", radial_name="r")
        chart = time_rescale(B, GenMonomial.make(1, {"r": -(alpha**2 - 1)}),
                             check_positive=False)
        pv = chart.poly_vars
        x_sink = (2 / (alpha - 1)) ** (1 / (alpha - 1))
        # edge exponents from the dominant balance phi'' ~ -phi^(-alpha):
        # phi ~ s^(2/(alpha+1)), |psi| ~ s^((1-alpha)/(alpha+1)); equivalently
        # s ~ r^(alpha+1) at the sink where the secondary variable settles at
        # a nonzero constant
        runs = [
            RunPlan(
                label=f"alpha={alpha}",
                initial=(0.4, 0.5),
                tau_end=25.0,
                h_max=0.02,
                window=(1e-10, 1e-4),
                observables=(
                    Observable("phi", parse_genpoly("r^2 * phi_b", pv),
                               RateModel(-2.0 / (alpha + 1), 0.0), 0.03, 0.1),
                    Observable("abs_psi",
                               parse_genpoly(f"r^(-{alpha - 1})", pv),
                               RateModel((alpha - 1.0) / (alpha + 1), 0.0), 0.03, 0.1),
                ),
                expect_finite_edge=True,
            )
        ]
        expected_eqs = ((0.0, 0.0), (0.0, x_sink))
        eq_box = {"phi_b": (-0.5, 3.0)}
    else:
        chart = DS
        pv = chart.poly_vars
        runs = [
            RunPlan(
                label="alpha=1",
                initial=(0.6, 0.3),
                tau_end=45.0,
                h_max=0.05,
                window=(1e-10, 1e-4),
                observables=(
                    Observable("abs_psi", parse_genpoly("lam^(-1)", pv),
                               RateModel(0.0, 0.5), 0.03, 0.15),
                    Observable("phi", parse_genpoly("phi * lam^(-1)", pv),
                               RateModel(-1.0, 0.5), 0.05, 0.2),
                ),
                expect_finite_edge=True,
                center_eq=(0.0, 0.0),
                center_degree=6,
            )
        ]
        expected_eqs = ((0.0, 0.0), (0.0, 1.0 / cf))
        eq_box = {"phi": (-0.5, 2.0)}
    return CaseDefinition(
        name="quench",
        params={"alpha": alpha, "c": c},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind="quenching",
        runs=runs,
        eq_box=eq_box,
        expected_equilibria=expected_eqs,
        notes="profile reaches the singular level at a finite frame "
              "coordinate; the slope blows up with the complementary edge "
              "exponent",
        orbital_check_point={"phi": 1.0, "psi": -1.0},
        orbital_check_span=0.5,
    )


def _build_fhn(m, p, a, c) -> CaseDefinition:
    m = int(m)
    p = F(p)
    a = F(a)
    c = F(c)
    N = m + p
    vars = ("phi", "psi")
    # profile system: phi' = phi^-m psi, psi' = -c phi^-m psi - f_p(phi)
    f = [
        GenPoly(vars, {(F(-m), F(1)): 1}),
        GenPoly(
            vars,
            {
                (F(-m), F(1)): -c,
                (p, F(0)): a,
                (p + 1, F(0)): -(1 + a),
                (p + 2, F(0)): 1,
            },
        ),
    ]
    base = base_field(vars, f, positive=("phi",), name="fhn")
    chart = time_rescale(base, GenMonomial.make(1, {"phi": m}), check_positive=False)
    runs = [
        RunPlan(
            label=f"m={m}, p={p}",
            initial=(0.0, 0.0),
            tau_end=0.0,
            window=(0.0, 0.0),
            observables=(
                Observable("phi", parse_genpoly("phi", chart.poly_vars),
                           RateModel(-1.0 / (1.0 - float(p)), 0.0), 0.1, 0.2),
            ),
            sampler="center-flow",
            center_eq=(0.0, 0.0),
            center_degree=int(math.ceil(float(N))) + 4,
            center_grid=(1e-12, 1e-4, 400),
            expect_finite_edge=True,
        )
    ]
    return CaseDefinition(
        name="fhn",
        params={"m": m, "p": p, "a": a, "c": c},
        base=base,
        chart=chart,
        type_vector=None,
        singularity_kind="extinction",
        runs=runs,
        eq_mode="full",
        eq_box={"phi": (-0.25, 1.5), "psi": (-0.5, 0.5)},
        expected_equilibria=((0.0, 0.0), (1.0, 0.0)),
        notes="edge regularity exponent 1/(1-p) depends only on the reaction "
              "degeneracy p, not on the diffusion exponent m",
        orbital_check_point={"phi": 0.5, "psi": 0.1},
        orbital_check_span=2.0,
    )


def _build_kdv(m, n, c) -> CaseDefinition:
    m = int(m)
    n = int(n)
    c = F(c)
    vars = ("phi", "psi")
    f = [
        GenPoly(vars, {(F(1 - n), F(1)): F(1, n)}),
        GenPoly(vars, {(F(1), F(0)): c, (F(m), F(0)): -1}),
    ]
    base = base_field(vars, f, positive=("phi",), name="kdv")
    D0 = time_rescale(base, GenMonomial.make(n, {"phi": n - 1}), check_positive=False)
    diagram = newton_data(list(D0.components))
    assert diagram.weights and diagram.weights[0] == (2, n + 1), diagram.weights
    B = blowup_chart(D0, diagram.weights[0], "phi", radial_name="r")
    chart = time_rescale(B, GenMonomial.make(1, {"r": -(n - 1)}), check_positive=False)
    pv = chart.poly_vars
    psi_plus = math.sqrt(2 * n * float(c) / (n + 1))
    edge_rho = -2.0 / (n - 1)
    obs = (
        Observable("u", parse_genpoly("r^2", pv), RateModel(edge_rho, 0.0),
                   0.1, 0.15),
    )
    # The connection between the two saddles is followed OUTWARD from each:
    # approaching the far saddle amplifies transverse noise at rate
    # (n+1)|psi_bar| and ejects the orbit, so each edge is measured on the
    # stable departure leg, with the edge a distance n*r0^(n-1)/|lambda_r|
    # behind the start (linearization of the frame-time integral).
    r0 = 1e-8
    lam_r = psi_plus / 2.0
    s0 = n * r0 ** (n - 1) / lam_r
    runs = [
        RunPlan(
            label="leading edge",
            initial=(r0, psi_plus),
            tau_end=26.0,
            h_max=0.05,
            window=(1e-6, 1e-2),
            window_relative=False,
            observables=obs,
            direction=1,
            stop_at_equilibrium=False,
            edge_behind_s0=s0,
        ),
        RunPlan(
            label="trailing edge",
            initial=(r0, -psi_plus),
            tau_end=26.0,
            h_max=0.05,
            window=(1e-6, 1e-2),
            window_relative=False,
            observables=obs,
            direction=-1,
            stop_at_equilibrium=False,
            edge_behind_s0=s0,
        ),
    ]
    return CaseDefinition(
        name="kdv",
        params={"m": m, "n": n, "c": c},
        base=base,
        chart=chart,
        type_vector=None,
        singularity_kind="compacton-edge",
        runs=runs,
        eq_box={"psi_b": (-2.0, 2.0)},
        expected_equilibria=((0.0, -psi_plus), (0.0, psi_plus)),
        notes="compact support: both profile edges are finite frame-time "
              "singularities; the connection between the two saddles is "
              "assumed and produced by shooting from the unstable manifold "
              "(offset 1e-8)",
        orbital_check_point={"phi": 0.5, "psi": 0.2},
        orbital_check_span=2.0,
    )


def _build_lienard(n) -> CaseDefinition:
    n = int(n)
    vars = ("x", "y")
    f = [
        parse_genpoly("y", vars),
        parse_genpoly(f"-x^{2 * n + 1} - x^{2 * n} - x^{n}*y", vars),
    ]
    base = base_field(vars, f, name="lienard")
    t = TypeVector.make((1, n + 1), n)
    chart = quasi_polar_compactify(base, n + 1, n)
    T = period(n + 1)
    sec = SectionSpec(var="theta", period=T, base=0.0)
    if n >= 3:
        runs = [
            RunPlan(
                label=f"n={n} periodic blow-up",
                initial=(0.08, 0.0),
                tau_end=27000.0,
                window=(0.0, math.inf),
                observables=(
                    Observable("inv_r", parse_genpoly("r^(-1)", chart.poly_vars),
                               RateModel(1.0 / (n - 1), 0.0), 0.05, 0.2),
                ),
                sampler="sections",
                section=sec,
                rtol=1e-8,
                atol=1e-10,
                stop_at_equilibrium=False,
                expect_finite_edge=True,
            )
        ]
        kind = "blow-up"
    else:
        runs = [
            RunPlan(
                label="n=1 grow-up",
                initial=(0.08, 0.0),
                tau_end=2400.0,
                window=(0.0, math.inf),
                observables=(),
                sampler="sections",
                section=sec,
                rtol=1e-10,
                stop_at_equilibrium=False,
                expect_finite_edge=False,
                growup_check=True,
            )
        ]
        kind = "grow-up"
    return CaseDefinition(
        name="lienard",
        params={"n": n},
        base=base,
        chart=chart,
        type_vector=t,
        singularity_kind=kind,
        runs=runs,
        eq_mode="horizon",
        expected_equilibria=(),
        notes="the horizon carries an attracting non-hyperbolic periodic "
              "orbit; radial samples at a fixed phase section carry the "
              "clean rate",
        orbital_check_point={"x": 1.2, "y": 0.4},
        orbital_check_span=0.6,
    )


def builtin_cases() -> dict[str, CaseSpec]:
    """The eight built-in case families."""
    return {
        "aiu": CaseSpec(
            "aiu", {}, {}, lambda: _build_aiu(),
            "inverse-power planar blow-up, sqrt-log corrected rates",
        ),
        "iy": CaseSpec(
            "iy", {"a": F(1, 2)}, {"a": (0.01, 0.99)},
            lambda a: _build_iy(a),
            "fractional-power blow-up; rate a off the symmetric line, a/(a+1) on it",
        ),
        "andrews1": CaseSpec(
            "andrews1", {"a": 0.75, "theta": math.pi / 4},
            {"a": (0.05, 0.95), "theta": (0.1, 1.47)},
            lambda a, theta: _build_andrews1(a, theta),
            "three log-correction regimes across a = 1/2",
        ),
        "andrews2": CaseSpec(
            "andrews2", {"a": F(1, 4), "a1": F(1)},
            {"a": (0.05, 2.0), "a1": (0.05, 4.0)},
            lambda a, a1: _build_andrews2(a, a1),
            "nested compactification; exponents depend on coefficient ratios",
        ),
        "quench": CaseSpec(
            "quench", {"alpha": 2, "c": F(1)},
            {"alpha": (1, 6), "c": (0.1, 10.0)},
            lambda alpha, c: _build_quench(alpha, c),
            "front quenching: edge exponents (alpha > 1) or sqrt-log slope (alpha = 1)",
        ),
        "fhn": CaseSpec(
            "fhn", {"m": 1, "p": F(1, 2), "a": F(1, 4), "c": F(1)},
            {"m": (1, 4), "p": (0.05, 0.95), "a": (0.05, 0.45), "c": (0.1, 10.0)},
            lambda m, p, a, c: _build_fhn(m, p, a, c),
            "degenerate-diffusion extinction edge, exponent 1/(1-p)",
        ),
        "kdv": CaseSpec(
            "kdv", {"m": 2, "n": 2, "c": F(1)},
            {"m": (2, 3), "n": (2, 3), "c": (0.1, 10.0)},
            lambda m, n, c: _build_kdv(m, n, c),
            "compacton edges, exponent 2/(n-1), weights from the Newton diagram",
        ),
        "lienard": CaseSpec(
            "lienard", {"n": 3}, {"n": (1, 5)},
            lambda n: _build_lienard(n),
            "periodic divergence: finite-time blow-up (n odd >= 3) or grow-up (n = 1)",
        ),
    }


def get_case(name: str) -> CaseSpec:
    cases = builtin_cases()
    if name not in cases:
        raise KeyError(f"unknown case {name!r}; known: {', '.join(sorted(cases))}")
    return cases[name]


# -- pipeline execution --------------------------------------------------------


@dataclass
class RunReport:
    case: str
    params: dict
    seed: int
    status: str                    # PASS | FAIL | ERROR
    chart: dict
    equilibria: list
    eq_check: dict
    runs: list
    wallclock_s: float
    error: str | None = None

    def to_dict(self):
        return {
            "schema": 1,
            "case": self.case,
            "params": {k: _param_str(v) for k, v in self.params.items()},
            "seed": self.seed,
            "status": self.status,
            "chart": self.chart,
            "equilibria": self.equilibria,
            "equilibrium_check": self.eq_check,
            "runs": self.runs,
            "wallclock_s": self.wallclock_s,
            "error": self.error,
        }

    @property
    def all_verdicts(self):
        out = []
        for r in self.runs:
            out.extend(r.get("verdicts", []))
        return out


def _param_str(v):
    if isinstance(v, F):
        return str(v)
    return v


def run_case(
    spec: CaseSpec | str,
    params: dict | None = None,
    *,
    seed: int = 0,
    tol_rho: float | None = None,
    tol_q: float | None = None,
    tau_max: float | None = None,
    rtol: float | None = None,
    atol: float | None = None,
    out_dir=None,
) -> RunReport:
    """Execute a case end to end; every module error is captured into the
    report and the run is marked ERROR."""
    t0 = time.perf_counter()
    if isinstance(spec, str):
        spec = get_case(spec)
    try:
        cdef = spec.definition(params)
    except Exception as exc:  # parameter validation is a caller error
        raise
    try:
        report = _execute(cdef, seed, tol_rho, tol_q, tau_max, rtol, atol, out_dir)
    except Exception as exc:
        report = RunReport(
            case=cdef.name,
            params=cdef.params,
            seed=seed,
            status="ERROR",
            chart=cdef.chart.to_dict(),
            equilibria=[],
            eq_check={},
            runs=[],
            wallclock_s=time.perf_counter() - t0,
            error=f"{type(exc).__name__}: {exc}",
        )
        return report
    report.wallclock_s = time.perf_counter() - t0
    return report


def _execute(cdef, seed, tol_rho, tol_q, tau_max, rtol, atol, out_dir):
    chart = cdef.chart

    # Step 1-2: invariant sets on the horizon and their linear type
    if cdef.eq_mode == "horizon":
        eqs, diag = horizon_equilibria(chart, box=cdef.eq_box, seed=seed)
    elif cdef.eq_mode == "full":
        eqs, diag = equilibria_of(chart, box=cdef.eq_box, seed=seed)
    else:
        eqs, diag = [], {}
    eq_check = _check_expected_equilibria(cdef, eqs)

    runs_out = []
    any_fail = not eq_check.get("all_found", True)
    for plan in cdef.runs:
        entry = _execute_run(cdef, plan, seed, tol_rho, tol_q, tau_max, rtol,
                             atol, out_dir)
        runs_out.append(entry)
        if any(not v["passed"] for v in entry.get("verdicts", [])):
            any_fail = True

    return RunReport(
        case=cdef.name,
        params=cdef.params,
        seed=seed,
        status="FAIL" if any_fail else "PASS",
        chart=chart.to_dict(),
        equilibria=[e.to_dict() for e in eqs],
        eq_check=eq_check,
        runs=runs_out,
        wallclock_s=0.0,
    )


def _check_expected_equilibria(cdef, eqs, tol=1e-8):
    found = []
    for exp in cdef.expected_equilibria:
        hit = any(
            max(abs(a - b) for a, b in zip(exp, e.coords)) <= tol for e in eqs
        )
        found.append({"coords": list(exp), "found": bool(hit)})
    return {
        "expected": found,
        "all_found": all(f["found"] for f in found),
        "n_found": len(eqs),
    }


def _execute_run(cdef, plan, seed, tol_rho, tol_q, tau_max, rtol, atol, out_dir):
    chart = cdef.chart
    entry = {"label": plan.label, "sampler": plan.sampler}
    if plan.sampler == "center-flow":
        return _run_center_flow(cdef, plan, entry, tol_rho, tol_q)

    traj = integrate(
        chart,
        plan.initial,
        tau_max if tau_max is not None else plan.tau_end,
        rtol=rtol if rtol is not None else plan.rtol,
        atol=atol if atol is not None else plan.atol,
        direction=plan.direction,
        h_max=plan.h_max,
        section=plan.section,
        stop_at_equilibrium=plan.stop_at_equilibrium,
    )
    entry["termination"] = traj.termination
    entry["n_steps"] = traj.n_steps
    if out_dir is not None:
        import pathlib

        tdir = pathlib.Path(out_dir) / "trajectories"
        tdir.mkdir(parents=True, exist_ok=True)
        fname = f"{cdef.name}_{plan.label}".replace(" ", "_").replace("=", "")
        fname = "".join(ch for ch in fname if ch.isalnum() or ch in "_-") + ".csv"
        trajectory_to_csv(traj, tdir / fname)
    if plan.edge_behind_s0 is not None:
        entry["edge"] = {"behind_start_at": plan.edge_behind_s0}
        fits, verdicts = [], []
        s_all = plan.edge_behind_s0 + traj.t
        lo, hi = plan.window
        sel = (s_all >= lo) & (s_all <= hi)
        for obs in plan.observables:
            fn = obs.expr.compile()
            y = np.array([
                fn(*cdef.chart.state_to_poly_point(st)) for st in traj.states[sel]
            ])
            fit = fit_rate(s_all[sel], y)
            fits.append({
                "observable": obs.name, "rho": fit.rho, "q": fit.q, "C": fit.C,
                "r2": fit.r2, "window": list(fit.window),
                "n_samples": fit.n_samples, "drift_rho": fit.drift_rho,
                "collinear_q": fit.collinear_q,
            })
            if obs.expected is not None:
                v = compare_rate(fit, obs.expected,
                                 tol_rho if tol_rho is not None else obs.tol_rho,
                                 tol_q if tol_q is not None else obs.tol_q)
                verdicts.append({
                    "name": f"rate of {obs.name}",
                    "passed": v.passed,
                    "detail": v.line(obs.name),
                    "fitted": {"rho": fit.rho, "q": fit.q},
                    "predicted": {"rho": obs.expected.rho, "q": obs.expected.q},
                })
        entry["fits"] = fits
        entry["verdicts"] = verdicts
        return entry
    est = accumulate_time(traj)
    entry["edge"] = {
        "value": est.value if math.isfinite(est.value) else "inf",
        "integrated": est.integrated,
        "tail": est.tail if math.isfinite(est.tail) else "inf",
        "tail_model": est.tail_model,
        "error_bound": est.error_bound if math.isfinite(est.error_bound) else "inf",
    }
    verdicts = []
    if plan.expect_finite_edge is not None:
        verdicts.append({
            "name": "edge finiteness",
            "passed": bool(est.is_finite == plan.expect_finite_edge),
            "detail": f"edge is {'finite' if est.is_finite else 'infinite'}, "
                      f"expected {'finite' if plan.expect_finite_edge else 'infinite'}",
        })

    if plan.growup_check:
        s, r, t = phase_section_sampler(traj, est) if est.is_finite else \
            _sections_rt(traj)
        keep = t > 0.25 * t.max()
        slope, icpt, r2 = _linreg(t[keep], np.log(1.0 / r[keep]))
        verdicts.append({
            "name": "grow-up envelope log-linear in t",
            "passed": bool(r2 >= 0.999 and slope > 0),
            "detail": f"slope {slope:.4f}, R2 {r2:.6f}",
        })
        entry["growup"] = {"slope": slope, "r2": r2}

    fits = []
    for obs in plan.observables:
        fit, verdict = _fit_observable(cdef, plan, traj, est, obs, tol_rho, tol_q)
        fits.append(fit)
        if verdict is not None:
            verdicts.append(verdict)
    entry["fits"] = fits
    entry["verdicts"] = verdicts
    return entry


def _sections_rt(traj):
    ri = traj.chart.vars.index(traj.chart.radial)
    r = np.array([s[1][ri] for s in traj.sections])
    t = np.array([s[2] for s in traj.sections])
    return None, r, t


def _linreg(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum()) or 1e-300
    return float(coef[0]), float(coef[1]), 1.0 - float(resid @ resid) / ss_tot


def _fit_observable(cdef, plan, traj, est, obs, tol_rho, tol_q):
    if plan.sampler == "sections":
        s, r, _ = phase_section_sampler(traj, est)
        fn = obs.expr.compile()
        y = np.array([
            fn(*traj.chart.state_to_poly_point(sec[1])) for sec in traj.sections
        ])
        # drop the initial transient (a fixed burn-in of revolutions) and
        # samples dominated by the edge-time uncertainty
        burn = 32
        s, y = s[burn:], y[burn:]
        keep = (s > 0) & (s < math.inf) & (s >= 100.0 * est.error_bound)
        s, y = s[keep], y[keep]
        min_samples = 40
    else:
        s_all = remaining_time(traj, est)
        fn = obs.expr.compile()
        lo, hi = plan.window
        if plan.window_relative:
            scale = est.value if est.is_finite else est.integrated
            lo, hi = lo * scale, hi * scale
        # samples whose distance-to-edge is dominated by the extrapolated
        # tail carry its uncertainty; keep a 100x margin over its error bound
        lo = max(lo, 100.0 * est.error_bound)
        sel = (s_all >= lo) & (s_all <= hi)
        s = s_all[sel]
        y = np.array([
            fn(*traj.chart.state_to_poly_point(st)) for st in traj.states[sel]
        ])
        min_samples = 50
    fit = fit_rate(s, y, min_samples=min_samples)
    fit_row = {
        "observable": obs.name,
        "rho": fit.rho,
        "q": fit.q,
        "C": fit.C,
        "rho_se": fit.rho_se,
        "q_se": fit.q_se if math.isfinite(fit.q_se) else "inf",
        "r2": fit.r2,
        "window": list(fit.window),
        "n_samples": fit.n_samples,
        "drift_rho": fit.drift_rho if math.isfinite(fit.drift_rho) else None,
        "collinear_q": fit.collinear_q,
    }
    verdict = None
    if obs.expected is not None:
        v = compare_rate(
            fit,
            obs.expected,
            tol_rho if tol_rho is not None else obs.tol_rho,
            tol_q if tol_q is not None else obs.tol_q,
        )
        verdict = {
            "name": f"rate of {obs.name}",
            "passed": v.passed,
            "detail": v.line(obs.name),
            "fitted": {"rho": fit.rho, "q": fit.q},
            "predicted": {"rho": obs.expected.rho, "q": obs.expected.q},
        }
    return fit_row, verdict


def _run_center_flow(cdef, plan, entry, tol_rho, tol_q):
    """Sample the frame coordinate along the analytically reduced center flow.

    Near the degenerate equilibrium the transverse direction is exponentially
    unstable backward in time, so instead of integrating toward it the run
    solves the invariance equation, restricts the full field and the time
    chain to the manifold, and quadratures s(x) = int chain / speed dx.  The
    measured exponent comes from the actual field, not the predicted rate.
    """
    from .localanalysis import _substitute_series, _truncate  # shared helpers

    chart = cdef.chart
    series = center_manifold_series_1d(chart, plan.center_eq, plan.center_degree)
    cvar, svar = series.center_var, series.stable_var
    degree = series.degree
    chain_prod = GenPoly.const(chart.poly_vars, 1)
    for f in chart.time_chain:
        chain_prod = chain_prod * f
    chain_on_m = _substitute_series(chain_prod, cvar, svar,
                                    series.coefficients, degree + 4)
    speed = series.reduced_flow
    chain_fn = chain_on_m.compile()
    speed_fn = speed.compile()

    lo, hi, n_pts = plan.center_grid
    xs = np.geomspace(lo, hi, int(n_pts))
    # s(x) = int_0^x chain(u)/speed(u) du; substitute u = z^q with q the
    # exponent-lattice denominator so the integrand is smooth at 0
    q = max(int(e.denominator) for ev, _ in speed.terms for e in ev)
    nodes, weights = np.polynomial.legendre.leggauss(24)

    def seg_integral(z0, z1):
        mid = 0.5 * (z0 + z1)
        half = 0.5 * (z1 - z0)
        z = mid + half * nodes
        u = z**q
        vals = np.array([
            chain_fn(ui) / speed_fn(ui) * q * zi ** (q - 1)
            for ui, zi in zip(u, z)
        ])
        return float(half * (weights @ vals))

    zs = xs ** (1.0 / q)
    s = np.empty(len(xs))
    acc = seg_integral(0.0, zs[0])
    s[0] = acc
    for i in range(1, len(zs)):
        acc += seg_integral(zs[i - 1], zs[i])
        s[i] = acc
    entry["termination"] = "center-flow"
    entry["series"] = {
        "center_var": cvar,
        "d": str(series.d),
        "c_d": float(series.c_d),
        "h": format_genpoly(series.coefficients),
        "exact": series.exact,
    }
    verdicts = []
    fits = []
    for obs in plan.observables:
        # observable restricted to the manifold
        fn = obs.expr
        on_m = _substitute_series(fn, cvar, svar, series.coefficients,
                                  degree + 4)
        yfn = on_m.compile()
        y = np.array([yfn(x) for x in xs])
        fit = fit_rate(s, y)
        fits.append({
            "observable": obs.name,
            "rho": fit.rho,
            "q": fit.q,
            "C": fit.C,
            "r2": fit.r2,
            "window": list(fit.window),
            "n_samples": fit.n_samples,
            "drift_rho": fit.drift_rho,
            "collinear_q": fit.collinear_q,
        })
        if obs.expected is not None:
            v = compare_rate(fit, obs.expected,
                             tol_rho if tol_rho is not None else obs.tol_rho,
                             tol_q if tol_q is not None else obs.tol_q)
            verdicts.append({
                "name": f"rate of {obs.name}",
                "passed": v.passed,
                "detail": v.line(obs.name),
                "fitted": {"rho": fit.rho, "q": fit.q},
                "predicted": {"rho": obs.expected.rho, "q": obs.expected.q},
            })
    entry["fits"] = fits
    entry["verdicts"] = verdicts
    return entry


def sweep(
    spec: CaseSpec | str,
    grid: Sequence[dict],
    *,
    seed: int = 0,
    jobs: int = 1,
    **kw,
) -> list[RunReport]:
    """Independent runs over a parameter grid (optionally in parallel)."""
    if isinstance(spec, str):
        spec = get_case(spec)
    if not grid:
        return []
    if jobs <= 1:
        return [run_case(spec, params, seed=seed, **kw) for params in grid]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(run_case, spec, params, seed=seed, **kw) for params in grid]
        return [f.result() for f in futs]
