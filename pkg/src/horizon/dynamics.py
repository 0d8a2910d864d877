"""Adaptive integration of chart fields and physical-time reconstruction.

The stepper is an explicit Dormand-Prince 5(4) pair with the standard
quartic dense-output interpolant, a PI step controller, and FSAL reuse.
It is deliberately bespoke rather than a library call because the pipeline
needs, per accepted step:

* the increment of physical time dt = (chain product) d(sigma), error
  controlled on the increment scale.  Distances to the singular time are
  later formed by suffix-summing these increments, which stays accurate
  down to s ~ 1e-60 relative where t_max - t(sigma) would cancel away;
* equilibrium detection sustained over consecutive steps;
* angular-section crossings (for quasi-polar charts) and generic scalar
  events located on the dense output;
* a maximum step size so rate-fit windows always contain enough samples.

Termination reasons: 'converged-to-equilibrium', 'horizon-event',
'tau-budget', 'step-underflow'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AmbiguousTailError
from .compactify import ChartField

__all__ = [
    "Trajectory",
    "TmaxEstimate",
    "EventSpec",
    "SectionSpec",
    "integrate",
    "accumulate_time",
    "detect_horizon_approach",
    "trajectory_to_csv",
]

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
# dense-output polynomial: y(th) = y0 + h * sum_i k_i * (P[i][0] th + ... + P[i][3] th^4)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


@dataclass
class EventSpec:
    """Scalar event g(state) = 0 located on dense output."""

    name: str
    fn: Callable[[Sequence[float]], float]
    direction: int = 0  # +1 rising, -1 falling, 0 any
    terminal: bool = True


@dataclass
class SectionSpec:
    """Angular section crossings at var = base - j*period (monotone angle)."""

    var: str
    period: float
    base: float = 0.0


@dataclass
class Trajectory:
    tau: np.ndarray                    # accepted-step times, increasing
    states: np.ndarray                 # shape (len(tau), n)
    dt_inc: np.ndarray                 # physical-time increment per step (len-1)
    t: np.ndarray                      # cumulative physical time, t[0] = 0
    termination: str
    chart: ChartField | None = None
    direction: int = 1
    events: list = field(default_factory=list)      # (name, tau, state, t, step_idx, partial_inc)
    sections: list = field(default_factory=list)    # (tau, state, t, step_idx, partial_inc)
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def final_state(self):
        return self.states[-1]

    def integrand(self) -> np.ndarray:
        """Physical-time integrand dt/d(sigma) at the sample midpoints."""
        dtau = np.diff(self.tau)
        return self.dt_inc / dtau


def integrate(
    C: ChartField,
    x0: Sequence[float],
    tau_end: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    direction: int = 1,
    h_max: float = math.inf,
    h0: float | None = None,
    events: Sequence[EventSpec] = (),
    section: SectionSpec | None = None,
    stop_at_equilibrium: bool = True,
    equilibrium_steps: int = 50,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Integrate d(state)/d(sigma) = direction * field over [0, tau_end].

    The physical-time increment integral of the (always positive) chain
    product is accumulated per step alongside the state, regardless of
    direction, so it measures progress toward the singular edge.
    """
    if not (1e-13 <= rtol <= 1e-3) or not (1e-14 <= atol <= 1e-3):
        raise ValueError("tolerances out of the supported range")
    rhs_raw = C.compile_rhs()
    sgn = 1.0 if direction >= 0 else -1.0
    # sign-masked variables never cross zero: give them pure relative error
    # control so exponential decay below atol keeps full relative accuracy
    # (otherwise the controller lets the step explode and the decaying
    # component degenerates into noise).  Same for the time increment.
    atol_vec = [
        1e-300 if (v in C.positive or v == C.radial) else atol for v in C.vars
    ]

    def rhs(state):
        vals, g = rhs_raw(state)
        return [sgn * v for v in vals], g

    n = len(x0)
    y = [float(v) for v in x0]
    tau = 0.0
    f_now, g_now = rhs(y)
    if not all(math.isfinite(v) for v in f_now):
        raise ValueError(f"field not finite at the initial state {x0}")

    taus = [0.0]
    states = [list(y)]
    incs: list[float] = []
    ev_hits = []
    sec_hits = []
    termination = "tau-budget"

    # immediate events at tau = 0 (already at or past the crossing)
    ev_prev = [e.fn(y) for e in events]
    for e, v in zip(events, ev_prev):
        crossed = v == 0.0 or (e.direction < 0 and v < 0.0) or (
            e.direction > 0 and v > 0.0
        )
        if crossed:
            ev_hits.append((e.name, 0.0, list(y), 0.0))
            if e.terminal:
                termination = "horizon-event"
                return _build_traj(taus, states, incs, termination, C, direction,
                                   ev_hits, sec_hits, 0, 0)

    sec_count = None
    if section is not None:
        si = C.vars.index(section.var)
        sec_count = math.floor(abs(y[si] - section.base) / section.period)

    h = h0 if h0 is not None else _initial_step(rhs, y, f_now, rtol, atol)
    h = min(h, h_max, tau_end)
    eq_run = 0
    n_acc = 0
    n_rej = 0
    err_prev = 1.0
    t_acc = 0.0

    while tau < tau_end and n_acc < max_steps:
        h = min(h, tau_end - tau)
        if h < 1e-14 * max(1.0, abs(tau)):
            termination = "step-underflow"
            break

        k = [f_now]
        kg = [g_now]
        bad = False
        for s in range(1, 7):
            ys = list(y)
            a = _A[s]
            for j, aj in enumerate(a):
                if aj != 0.0:
                    for i in range(n):
                        ys[i] += h * aj * k[j][i]
            fs, gs = rhs(ys)
            if not all(math.isfinite(v) for v in fs) or not math.isfinite(gs):
                bad = True
                break
            k.append(fs)
            kg.append(gs)
        if bad:
            h *= 0.5
            n_rej += 1
            continue

        y5 = list(y)
        for i in range(n):
            acc = 0.0
            for s in range(7):
                if _B5[s] != 0.0:
                    acc += _B5[s] * k[s][i]
            y5[i] += h * acc
        dt5 = h * sum(_B5[s] * kg[s] for s in range(7))
        dt4 = h * sum(_B4[s] * kg[s] for s in range(7))

        # error norm over state components and the time increment
        err = 0.0
        for i in range(n):
            e4 = 0.0
            for s in range(7):
                d = _B5[s] - _B4[s]
                if d != 0.0:
                    e4 += d * k[s][i]
            e4 *= h
            sc = atol_vec[i] + rtol * max(abs(y[i]), abs(y5[i]))
            err += (e4 / sc) ** 2 if sc > 0.0 else 0.0
        sc_t = 1e-300 + rtol * abs(dt5)
        err += ((dt5 - dt4) / sc_t) ** 2 if sc_t > 0.0 else 0.0
        err = math.sqrt(err / (n + 1))

        if err > 1.0:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            continue

        # accepted
        f_new, g_new = rhs(y5)
        if not all(math.isfinite(v) for v in f_new) or not math.isfinite(g_new):
            n_rej += 1
            h *= 0.5
            continue
        tau_new = tau + h

        dense = _DenseSeg(tau, h, list(y), k)

        stop_here = None
        # events
        ev_now = [e.fn(y5) for e in events]
        for idx, e in enumerate(events):
            v0, v1 = ev_prev[idx], ev_now[idx]
            if v0 == v1 or v0 * v1 > 0.0:
                continue
            if e.direction * (v1 - v0) < 0.0:
                continue
            th = _bisect_event(lambda s: e.fn(dense.state_at(s)), 0.0, 1.0)
            tau_ev = tau + th * h
            st_ev = dense.state_at(th)
            partial = _dt_partial(dense, kg, th, h)
            t_ev = t_acc + partial
            ev_hits.append((e.name, tau_ev, st_ev, t_ev, n_acc, partial))
            if e.terminal and stop_here is None:
                stop_here = (th, tau_ev, st_ev, t_ev, "horizon-event")

        # sections (assumes monotone angle; crossings at base - j*period)
        if section is not None and stop_here is None:
            si = C.vars.index(section.var)
            new_count = math.floor(abs(y5[si] - section.base) / section.period)
            while new_count > sec_count:
                sec_count += 1
                target = section.base - sec_count * section.period * _angle_sign(y, y5, si)
                th = _bisect_event(
                    lambda s: dense.state_at(s)[si] - target, 0.0, 1.0
                )
                tau_sec = tau + th * h
                st_sec = dense.state_at(th)
                partial = _dt_partial(dense, kg, th, h)
                sec_hits.append((tau_sec, st_sec, t_acc + partial, n_acc, partial))

        if stop_here is not None:
            th, tau_ev, st_ev, t_ev, reason = stop_here
            taus.append(tau_ev)
            states.append(st_ev)
            incs.append(t_ev - t_acc)
            termination = reason
            n_acc += 1
            break

        tau = tau_new
        y = y5
        f_now, g_now = f_new, g_new
        ev_prev = ev_now
        t_acc += dt5
        taus.append(tau)
        states.append(list(y))
        incs.append(dt5)
        n_acc += 1

        # equilibrium stop rule
        if stop_at_equilibrium:
            fn = math.sqrt(sum(v * v for v in f_now))
            xn = math.sqrt(sum(v * v for v in y))
            if fn <= 1e-12 * (1.0 + xn):
                eq_run += 1
                if eq_run >= equilibrium_steps:
                    termination = "converged-to-equilibrium"
                    break
            else:
                eq_run = 0

        # PI controller
        fac = 0.9 * err ** -0.14 * err_prev ** 0.06 if err > 0 else 5.0
        h = min(h * min(5.0, max(0.2, fac)), h_max)
        err_prev = max(err, 1e-10)

    return _build_traj(taus, states, incs, termination, C, direction, ev_hits,
                       sec_hits, n_acc, n_rej)


def _angle_sign(y0, y1, si):
    return 1.0 if y1[si] < y0[si] else -1.0


class _DenseSeg:
    """Dense-output polynomial of one accepted step."""

    __slots__ = ("tau0", "h", "y0", "k")

    def __init__(self, tau0, h, y0, k):
        self.tau0 = tau0
        self.h = h
        self.y0 = y0
        self.k = k

    def state_at(self, th: float) -> list[float]:
        th2 = th * th
        th3 = th2 * th
        th4 = th3 * th
        w = [
            _P[s][0] * th + _P[s][1] * th2 + _P[s][2] * th3 + _P[s][3] * th4
            for s in range(7)
        ]
        out = list(self.y0)
        for i in range(len(out)):
            acc = 0.0
            for s in range(7):
                if w[s] != 0.0:
                    acc += w[s] * self.k[s][i]
            out[i] += self.h * acc
        return out


def _dt_partial(dense: _DenseSeg, kg, th, h) -> float:
    """Physical-time increment over the partial step [0, th] using the dense
    weights applied to the integrand stage values (same order as the state)."""
    th2 = th * th
    th3 = th2 * th
    th4 = th3 * th
    acc = 0.0
    for s in range(7):
        w = _P[s][0] * th + _P[s][1] * th2 + _P[s][2] * th3 + _P[s][3] * th4
        if w != 0.0:
            acc += w * kg[s]
    return h * acc


def _bisect_event(g, lo, hi, iters=80):
    glo = g(lo)
    if glo == 0.0:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (glo < 0) == (gm < 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _initial_step(rhs, y, f0, rtol, atol):
    d0 = math.sqrt(sum(v * v for v in y)) or 1.0
    d1 = math.sqrt(sum(v * v for v in f0))
    h = 0.01 * d0 / d1 if d1 > 0 else 1e-6
    return max(min(h, 1.0), 1e-8)


def _build_traj(taus, states, incs, termination, C, direction, ev, sec, n_acc, n_rej):
    t = np.concatenate([[0.0], np.cumsum(np.asarray(incs))]) if incs else np.zeros(1)
    return Trajectory(
        tau=np.asarray(taus),
        states=np.asarray(states),
        dt_inc=np.asarray(incs),
        t=t,
        termination=termination,
        chart=C,
        direction=direction,
        events=ev,
        sections=sec,
        n_steps=n_acc,
        n_rejected=n_rej,
    )


# -- physical-time accumulation and tail handling -----------------------------


@dataclass
class TmaxEstimate:
    """Total physical time to the singular edge along a trajectory."""

    value: float                 # may be math.inf
    integrated: float
    tail: float
    tail_model: str              # 'exponential' | 'power' | 'negligible' | 'divergent'
    error_bound: float
    window: tuple[float, float]  # sigma-range used for the tail fit
    r2: float

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def accumulate_time(
    traj: Trajectory,
    *,
    window_frac: float = 0.3,
    r2_threshold: float = 0.999,
    period_average: bool | None = None,
) -> TmaxEstimate:
    """Estimate total physical time, extrapolating the integrand tail.

    The integrand decay over the final ``window_frac`` of samples is fit with
    an exponential model (finite closed-form tail) and a power model
    (exponent <= 1 means the total time diverges: grow-up).  For quasi-polar
    charts the fit runs on per-revolution averages so the Cs/Sn oscillation
    does not mask the decay.
    """
    if traj.termination == "step-underflow":
        raise AmbiguousTailError("trajectory ended in step underflow")
    integrated = float(traj.t[-1])
    if period_average is None:
        period_average = bool(traj.sections) and traj.chart is not None and \
            traj.chart.quasipolar_index is not None

    if period_average and len(traj.sections) >= 8:
        sec_tau = np.array([s[0] for s in traj.sections])
        sec_t = np.array([s[2] for s in traj.sections])
        mid = 0.5 * (sec_tau[1:] + sec_tau[:-1])
        g = np.diff(sec_t) / np.diff(sec_tau)
        taus, gs = mid, g
    else:
        dtau = np.diff(traj.tau)
        taus = 0.5 * (traj.tau[1:] + traj.tau[:-1])
        gs = traj.dt_inc / dtau

    keep = gs > 0
    taus, gs = taus[keep], gs[keep]
    if len(gs) < 10:
        raise AmbiguousTailError("too few positive integrand samples")
    t_start = traj.tau[-1] - window_frac * (traj.tau[-1] - traj.tau[0])
    sel = taus >= t_start
    if sel.sum() < 10:
        sel = np.zeros_like(taus, dtype=bool)
        sel[-10:] = True
    tw, gw = taus[sel], gs[sel]
    logg = np.log(gw)
    tau_end = float(traj.tau[-1])

    # integrand has decayed below anything that could matter (or below double
    # precision entirely): no model fit is meaningful, none is needed
    crude_bound = float(gw.max()) * max(tau_end, 1.0)
    if crude_bound <= 1e-40 * max(integrated, 1e-30):
        return TmaxEstimate(integrated + crude_bound, integrated, crude_bound,
                            "negligible", crude_bound,
                            (float(tw[0]), tau_end), 1.0)

    def exp_tail(t, lg):
        c, a, r2 = _linfit(t, lg)
        if c >= 0:
            return math.inf, r2
        return math.exp(a + c * tau_end) / (-c), r2

    def pow_tail(t, lg):
        c, a, r2 = _linfit(np.log(t), lg)
        p = -c
        if p <= 1.0:
            return math.inf, r2, p
        g_end = math.exp(a + c * math.log(tau_end))
        return g_end * tau_end / (p - 1.0), r2, p

    # inner half of the window provides an internal-consistency error gauge
    half = len(tw) // 2
    tw_i, lg_i = tw[half:], logg[half:]
    tail_exp, r2e = exp_tail(tw, logg)
    tail_pow, r2p, p = pow_tail(tw, logg) if tw[0] > 0 else (math.inf, -math.inf, 0.0)

    candidates = [x for x in (tail_exp, tail_pow) if math.isfinite(x)]
    if candidates and max(candidates) <= 1e-12 * max(integrated, 1e-300):
        tail = max(candidates)
        return TmaxEstimate(integrated + tail, integrated, tail, "negligible",
                            tail, (float(tw[0]), tau_end), max(r2e, r2p))

    if r2e >= r2p and r2e >= r2_threshold and math.isfinite(tail_exp):
        tail_inner, _ = exp_tail(tw_i, lg_i) if len(tw_i) >= 10 else (tail_exp, 0)
        err = abs(tail_exp - tail_inner) + tail_exp * max(1 - r2e, 1e-6)
        return TmaxEstimate(integrated + tail_exp, integrated, tail_exp,
                            "exponential", min(err, tail_exp),
                            (float(tw[0]), tau_end), r2e)
    if r2p >= r2_threshold:
        if p <= 1.0:
            return TmaxEstimate(math.inf, integrated, math.inf, "divergent",
                                math.inf, (float(tw[0]), tau_end), r2p)
        tail_inner, _, _ = pow_tail(tw_i, lg_i) if len(tw_i) >= 10 else (tail_pow, 0, p)
        err = abs(tail_pow - tail_inner) + tail_pow * max(1 - r2p, 1e-6)
        return TmaxEstimate(integrated + tail_pow, integrated, tail_pow, "power",
                            min(err, tail_pow), (float(tw[0]), tau_end), r2p)
    raise AmbiguousTailError(
        f"neither tail model fits: R2(exp) = {r2e:.6f}, R2(power) = {r2p:.6f}"
    )


def _linfit(x, y):
    """Least-squares slope/intercept/R^2."""
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum()) or 1e-300
    return float(coef[0]), float(coef[1]), 1.0 - ss_res / ss_tot


def remaining_time(traj: Trajectory, est: TmaxEstimate) -> np.ndarray:
    """s_j = (singular-edge time) - t_j at every sample, by suffix summation.

    Accurate to the relative accuracy of the per-step increments even when
    s is dozens of orders of magnitude below t_max.
    """
    suffix = np.concatenate([np.cumsum(traj.dt_inc[::-1])[::-1], [0.0]])
    return suffix + est.tail


def remaining_time_at_marks(traj: Trajectory, est: TmaxEstimate, marks) -> np.ndarray:
    """Remaining time at event/section marks (step index + partial increment),
    with the same suffix-sum accuracy as :func:`remaining_time`."""
    suffix = np.concatenate([np.cumsum(traj.dt_inc[::-1])[::-1], [0.0]])
    out = []
    for m in marks:
        step_idx, partial = m[-2], m[-1]
        out.append(suffix[step_idx] - partial + est.tail)
    return np.asarray(out)


def detect_horizon_approach(
    C: ChartField,
    x0: Sequence[float],
    tau_end: float,
    r_threshold: float,
    **kw,
) -> tuple[Trajectory, tuple | None]:
    """Integrate until the radial variable first crosses ``r_threshold``.

    Returns the trajectory and the event record (name, tau, state, t) or
    None when no crossing occurs.
    """
    if C.radial is None:
        raise ValueError("chart has no radial variable")
    ri = C.vars.index(C.radial)
    ev = EventSpec("horizon", lambda s: s[ri] - r_threshold, direction=-1,
                   terminal=True)
    traj = integrate(C, x0, tau_end, events=[ev], **kw)
    hit = next((e for e in traj.events if e[0] == "horizon"), None)
    return traj, hit


def trajectory_to_csv(traj: Trajectory, path):
    """CSV export: tau, state columns, cumulative physical time."""
    names = traj.chart.vars if traj.chart is not None else tuple(
        f"x{i}" for i in range(traj.states.shape[1])
    )
    header = "tau," + ",".join(names) + ",t"
    data = np.column_stack([traj.tau, traj.states, traj.t])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.17g")
