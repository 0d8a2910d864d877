"""Singularity-rate models and fitting.

Every rate produced by the pipeline has the two-parameter form

    y ~ C * s^(-rho) * (log 1/s)^q,      s -> 0+,

where s is the distance to the singular time (t_max - t) or to a singular
frame coordinate (xi - xi_edge).  Blow-up has rho > 0, extinction and
quenching edges carry rho < 0 (y vanishes like s^|rho|), and q is the
logarithmic correction exponent.  One fitter serves all cases:

    log y = -rho * log s + q * log log(1/s) + log C

by linear least squares, with a refit that drops the most singular decade to
expose exponent drift, and a collinearity guard when the log-log regressor
has no usable range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CollinearityWarning, InsufficientSpanError
from .dynamics import TmaxEstimate, Trajectory, remaining_time

__all__ = [
    "RateModel",
    "FitResult",
    "RateVerdict",
    "fit_rate",
    "compare_rate",
    "phase_section_sampler",
]


@dataclass(frozen=True)
class RateModel:
    """Predicted singularity rate y ~ C s^-rho (log 1/s)^q."""

    rho: float
    q: float = 0.0
    C: float | None = None
    s_meaning: str = "t_max - t"
    quality: str = "~"  # '~' asymptotic, 'Theta' two-sided bounds

    def describe(self) -> str:
        parts = [f"s^{-self.rho:g}" if self.rho else ""]
        if self.q:
            parts.append(f"(log 1/s)^{self.q:g}")
        body = " * ".join(p for p in parts if p) or "const"
        return f"y {self.quality} C * {body}  [s = {self.s_meaning}]"


@dataclass(frozen=True)
class FitResult:
    rho: float
    q: float
    logC: float
    rho_se: float
    q_se: float
    r2: float
    window: tuple[float, float]  # (s_min, s_max)
    n_samples: int
    drift_rho: float             # exponent shift after dropping the most singular decade
    collinear_q: bool            # q pinned to 0 (log-log range too small)

    @property
    def C(self) -> float:
        return math.exp(self.logC)


@dataclass(frozen=True)
class RateVerdict:
    passed: bool
    d_rho: float
    d_q: float
    tol_rho: float
    tol_q: float
    fitted: FitResult
    predicted: RateModel

    def line(self, label: str = "") -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (
            f"{mark} {label}: rho {self.fitted.rho:+.4f} vs {self.predicted.rho:+.4f} "
            f"(|d|={self.d_rho:.4f} <= {self.tol_rho}), "
            f"q {self.fitted.q:+.4f} vs {self.predicted.q:+.4f} "
            f"(|d|={self.d_q:.4f} <= {self.tol_q})"
        )


def fit_rate(s, y, *, min_samples: int = 50, min_span: float = 1e3) -> FitResult:
    """Fit log y = -rho log s + q log log(1/s) + log C.

    Requires at least ``min_samples`` positive samples with s spanning at
    least ``min_span`` multiplicatively and s < 1 throughout (so log 1/s is
    positive).  Emits CollinearityWarning and pins q = 0 when the log-log
    regressor spans less than 0.5.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (s > 0) & (y > 0) & np.isfinite(s) & np.isfinite(y)
    s, y = s[keep], y[keep]
    if len(s) < min_samples:
        raise InsufficientSpanError(f"only {len(s)} usable samples (need {min_samples})")
    if s.max() >= 1.0:
        raise InsufficientSpanError("samples with s >= 1 cannot carry the log-log model")
    span = s.max() / s.min()
    if span < min_span:
        raise InsufficientSpanError(f"s spans only {span:.3g} (need {min_span:g})")

    logs = np.log(s)
    loglog = np.log(-logs)
    logy = np.log(y)
    ll_range = float(loglog.max() - loglog.min())
    collinear = ll_range < 0.5
    if collinear:
        warnings.warn(
            f"log log(1/s) spans only {ll_range:.3f}; q is indeterminate and pinned to 0",
            CollinearityWarning,
        )

    rho, q, logC, rho_se, q_se, r2 = _solve(logs, loglog, logy, collinear)

    # refit dropping the most singular decade to report drift
    cut = s >= 10.0 * s.min()
    drift = math.nan
    if cut.sum() >= min_samples and s[cut].max() / s[cut].min() >= 10.0:
        rho2, *_ = _solve(logs[cut], loglog[cut], logy[cut], collinear)
        drift = abs(rho2 - rho)

    return FitResult(
        rho=rho,
        q=q,
        logC=logC,
        rho_se=rho_se,
        q_se=q_se,
        r2=r2,
        window=(float(s.min()), float(s.max())),
        n_samples=len(s),
        drift_rho=drift,
        collinear_q=collinear,
    )


def _solve(logs, loglog, logy, collinear):
    if collinear:
        A = np.column_stack([-logs, np.ones_like(logs)])
    else:
        A = np.column_stack([-logs, loglog, np.ones_like(logs)])
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    resid = logy - A @ coef
    dof = max(len(logy) - A.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    ss_tot = float(((logy - logy.mean()) ** 2).sum()) or 1e-300
    r2 = 1.0 - float(resid @ resid) / ss_tot
    if collinear:
        rho, logC = coef
        return float(rho), 0.0, float(logC), math.sqrt(cov[0, 0]), math.inf, r2
    rho, q, logC = coef
    return (
        float(rho),
        float(q),
        float(logC),
        math.sqrt(cov[0, 0]),
        math.sqrt(cov[1, 1]),
        r2,
    )


def compare_rate(fit: FitResult, predicted: RateModel, tol_rho: float, tol_q: float) -> RateVerdict:
    """PASS iff |rho_fit - rho_pred| <= tol_rho and |q_fit - q_pred| <= tol_q."""
    d_rho = abs(fit.rho - predicted.rho)
    d_q = abs(fit.q - predicted.q)
    return RateVerdict(
        passed=bool(d_rho <= tol_rho and d_q <= tol_q),
        d_rho=d_rho,
        d_q=d_q,
        tol_rho=tol_rho,
        tol_q=tol_q,
        fitted=fit,
        predicted=predicted,
    )


def phase_section_sampler(traj: Trajectory, est: TmaxEstimate):
    """(s_j, r_j, t_j) at the recorded angular-section crossings.

    Sampling the radial variable once per revolution removes the Cs/Sn
    oscillation, leaving a clean power law in s = t_max - t.
    """
    if not traj.sections:
        raise ValueError("trajectory carries no section crossings")
    if traj.chart is None or traj.chart.radial is None:
        raise ValueError("phase sections need a radial chart variable")
    from .dynamics import remaining_time_at_marks

    ri = traj.chart.vars.index(traj.chart.radial)
    r = np.asarray([sec[1][ri] for sec in traj.sections])
    t = np.asarray([sec[2] for sec in traj.sections])
    if math.isfinite(est.value):
        s = remaining_time_at_marks(traj, est, traj.sections)
    else:
        s = np.full(len(r), math.nan)
    return s, r, t


def samples_in_window(
    traj: Trajectory,
    est: TmaxEstimate,
    observable,
    s_lo: float,
    s_hi: float,
    *,
    relative: bool = False,
):
    """(s, y) pairs for one observable over a remaining-time window.

    ``observable`` maps a chart state to the measured value; the window is
    [s_lo, s_hi], multiplied by the total estimate when ``relative``.
    """
    s = remaining_time(traj, est)
    lo, hi = s_lo, s_hi
    if relative:
        scale = est.value if est.is_finite else est.integrated
        lo, hi = s_lo * scale, s_hi * scale
    out_s, out_y = [], []
    for i in range(len(traj.tau)):
        si = s[i]
        if lo <= si <= hi:
            out_s.append(si)
            out_y.append(observable(traj.states[i]))
    return np.asarray(out_s), np.asarray(out_y)
