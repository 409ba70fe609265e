"""Theorem-side computations: descent constants, step-size admissibility, gap
metrics, duality gaps, and ergodic averaging, so solver traces can be certified
against the convergence guarantees.

The single-sample method carries guarantees in expectation (checked against
trial averages with Monte Carlo error bars); the antithetic method carries
per-realization guarantees (checked with absolute slack on every seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .fields import FeasibleSet, FieldSpec, eval_field, project
from .solvers import RAMPAGE, RAMPAGE_PLUS, NotComputableError, Trace, nu_bound

COCOERCIVE_RAMPAGE = "cocoercive_rampage"
COHYPO_RAMPAGE = "cohypo_rampage"
ALPHA_SYM_RAMPAGE = "alpha_sym_rampage"
SS_RAMPAGE_REGIME = "ss_rampage"
COCOERCIVE_RAMPAGE_PLUS = "cocoercive_rampage_plus"
COHYPO_RAMPAGE_PLUS = "cohypo_rampage_plus"
ALPHA_SYM_RAMPAGE_PLUS = "alpha_sym_rampage_plus"
SS_RAMPAGE_PLUS_REGIME = "ss_rampage_plus"
GAME_RAMPAGE = "game_rampage"
GAME_RAMPAGE_PLUS = "game_rampage_plus"
SFO_GAME_RAMPAGE = "sfo_game_rampage"
SFO_GAME_RAMPAGE_PLUS = "sfo_game_rampage_plus"

REGIMES = (COCOERCIVE_RAMPAGE, COHYPO_RAMPAGE, ALPHA_SYM_RAMPAGE, SS_RAMPAGE_REGIME,
           COCOERCIVE_RAMPAGE_PLUS, COHYPO_RAMPAGE_PLUS, ALPHA_SYM_RAMPAGE_PLUS,
           SS_RAMPAGE_PLUS_REGIME, GAME_RAMPAGE, GAME_RAMPAGE_PLUS,
           SFO_GAME_RAMPAGE, SFO_GAME_RAMPAGE_PLUS)

# regimes whose guarantee holds per realization rather than in expectation
DETERMINISTIC_REGIMES = (COCOERCIVE_RAMPAGE_PLUS, COHYPO_RAMPAGE_PLUS,
                         SS_RAMPAGE_PLUS_REGIME, GAME_RAMPAGE_PLUS)

SFO_C_R = 4.4
SFO_C_R_PLUS = 22.0 / 3.0


@dataclass(frozen=True)
class RateCertificate:
    regime: str
    constant: float
    admissible: bool
    step_bound: Optional[float] = None
    params: Dict[str, float] = field(default_factory=dict)


def _need(name, value):
    if value is None:
        raise NotComputableError(f"regime requires parameter {name!r}")
    return float(value)


def rate_constant(regime: str, l: Optional[float] = None, mu: Optional[float] = None,
                  rho: Optional[float] = None, eta: Optional[float] = None,
                  k0: Optional[float] = None, k1: Optional[float] = None,
                  k2: Optional[float] = None, alpha: Optional[float] = None,
                  nu: Optional[float] = None) -> RateCertificate:
    """Evaluate a regime's printed descent constant, step bound, and admissibility."""
    params = {k: v for k, v in (("l", l), ("mu", mu), ("rho", rho), ("eta", eta),
                                ("k0", k0), ("k1", k1), ("k2", k2),
                                ("alpha", alpha), ("nu", nu)) if v is not None}
    if regime == COCOERCIVE_RAMPAGE:
        l, mu, eta = _need("l", l), _need("mu", mu), _need("eta", eta)
        const = eta**2 * (1.0 - 2.0 * l**2 * eta**2)
        bound = min(2.0 * mu, 1.0 / (math.sqrt(2.0) * l))
        ok = eta <= bound and const > 0
    elif regime == COCOERCIVE_RAMPAGE_PLUS:
        l, mu, eta = _need("l", l), _need("mu", mu), _need("eta", eta)
        const = eta**2 * (1.0 - 3.0 * eta**2 * l**2)
        bound = min(2.0 * mu, 1.0 / (math.sqrt(3.0) * l))
        ok = eta <= bound and const > 0
    elif regime == COHYPO_RAMPAGE:
        l, rho, eta = _need("l", l), _need("rho", rho), _need("eta", eta)
        const = 0.5 - 2.0 * rho / eta - (4.0 / 3.0) * l**2 * (
            eta**2 + 2.0 * eta * rho + 2.0 * (eta + 2.0 * rho) ** 2)
        bound = None
        ok = const > 0
    elif regime == COHYPO_RAMPAGE_PLUS:
        l, rho, eta = _need("l", l), _need("rho", rho), _need("eta", eta)
        const = (0.75 - 2.0 * rho / eta - 16.0 * l**2 * (rho + 0.5 * eta) ** 2
                 - 4.0 * l**2 * eta * (rho + 0.5 * eta))
        bound = None
        ok = const > 0
    elif regime in (SS_RAMPAGE_REGIME, SS_RAMPAGE_PLUS_REGIME):
        l, eta = _need("l", l), _need("eta", eta)
        const = 1.0 - 4.0 * eta**2 * l**2
        bound = 1.0 / (2.0 * l)
        ok = eta < bound and const > 0
    elif regime in (ALPHA_SYM_RAMPAGE, ALPHA_SYM_RAMPAGE_PLUS):
        k0, k1, k2 = _need("k0", k0), _need("k1", k1), _need("k2", k2)
        alpha, nu = _need("alpha", alpha), _need("nu", nu)
        method = RAMPAGE if regime == ALPHA_SYM_RAMPAGE else RAMPAGE_PLUS
        bound = nu_bound(method, k0, k1, k2, alpha)
        const = 0.25
        ok = 0.0 < nu <= bound
    elif regime == GAME_RAMPAGE:
        l, eta = _need("l", l), _need("eta", eta)
        const = 1.0 / (2.0 * eta)
        bound = 1.0 / (2.0 * l)
        ok = 0.0 < eta <= bound
    elif regime == GAME_RAMPAGE_PLUS:
        l, eta = _need("l", l), _need("eta", eta)
        const = 1.0 / (2.0 * eta)
        bound = (math.sqrt(3.0) - 1.0) / (2.0 * l)
        ok = 0.0 < eta <= bound
    elif regime == SFO_GAME_RAMPAGE:
        l, eta = _need("l", l), _need("eta", eta)
        const = 1.0 / (2.0 * eta)
        bound = 1.0 / (l * math.sqrt(2.0 * SFO_C_R))
        ok = 0.0 < eta <= bound
    elif regime == SFO_GAME_RAMPAGE_PLUS:
        l, eta = _need("l", l), _need("eta", eta)
        const = 1.0 / (2.0 * eta)
        bound = math.sqrt(3.0) / (2.0 * l * math.sqrt(SFO_C_R_PLUS))
        ok = 0.0 < eta <= bound
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return RateCertificate(regime=regime, constant=float(const), admissible=bool(ok),
                           step_bound=bound, params=params)


@dataclass
class BoundCheckReport:
    regime: str
    deterministic: bool
    trials: int
    iterations: int
    constant: float
    max_violation: float
    violation_unit: str
    argmax_iter: int
    passed: bool


def _series(traces: Sequence[Trace], quantity: str) -> np.ndarray:
    rows = []
    for tr in traces:
        if tr.record_stride != 1:
            raise ValueError("bound checks need traces recorded at stride 1")
        if tr.diverged:
            raise ValueError("bound checks expect non-diverged traces")
        col = getattr(tr, quantity)
        if col is None:
            raise ValueError(f"traces carry no {quantity}")
        rows.append(col[:-1] if quantity == "proj_residual_sq" else col)
    length = min(len(r) for r in rows)
    return np.stack([r[:length] for r in rows])


def residual_bound_check(traces: Sequence[Trace], certificate: RateCertificate,
                         theta0, theta_star, quantity: Optional[str] = None,
                         se_factor: float = 4.0) -> BoundCheckReport:
    """Compare running-average residuals against ||theta0 - theta*||^2 / (C (k+1)).

    Expectation regimes average across trials and report the worst deviation in
    Monte Carlo standard errors; per-realization regimes check every trace and
    report absolute slack. A zero constant makes the bound vacuous (infinite);
    a negative constant is not checkable.
    """
    if certificate.constant < 0:
        raise NotComputableError("bound undefined for a negative descent constant")
    if quantity is None:
        quantity = ("proj_residual_sq"
                    if certificate.regime in (SS_RAMPAGE_REGIME, SS_RAMPAGE_PLUS_REGIME)
                    else "residual_sq")
    theta0 = np.asarray(theta0, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    d0_sq = float(np.sum((theta0 - theta_star) ** 2))
    values = _series(traces, quantity)
    n, length = values.shape
    k = np.arange(length)
    with np.errstate(divide="ignore"):
        bound = d0_sq / (certificate.constant * (k + 1.0))
    running = np.cumsum(values, axis=1) / (k + 1.0)

    deterministic = certificate.regime in DETERMINISTIC_REGIMES
    if deterministic:
        slack = running - bound[None, :]
        idx = int(np.unravel_index(np.argmax(slack), slack.shape)[1])
        worst = float(slack.max())
        return BoundCheckReport(regime=certificate.regime, deterministic=True, trials=n,
                                iterations=length, constant=certificate.constant,
                                max_violation=worst, violation_unit="absolute",
                                argmax_iter=idx, passed=worst <= 0.0)
    mean = running.mean(axis=0)
    se = running.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(length)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(mean <= bound, -np.inf, (mean - bound) / np.where(se > 0, se, np.nan))
    worst = float(np.nanmax(dev))
    idx = int(np.nanargmax(dev)) if np.isfinite(worst) else 0
    return BoundCheckReport(regime=certificate.regime, deterministic=False, trials=n,
                            iterations=length, constant=certificate.constant,
                            max_violation=worst, violation_unit="standard_errors",
                            argmax_iter=idx, passed=worst <= se_factor)


@dataclass(frozen=True)
class GapEstimate:
    bound: float
    residual_norm: float
    field_norm: float
    step_scale: float
    d_b: float
    g_b: Optional[float]
    z: np.ndarray


def restricted_gap_bound(spec: FieldSpec, fset: FeasibleSet, theta_l, eta: float,
                         d_b: float, g_b: Optional[float] = None,
                         step_scale: Optional[float] = None) -> GapEstimate:
    """Upper bound ||r|| (||F(theta)|| + D_B / scale) on the restricted gap.

    ``step_scale`` defaults to eta; the projected variants evaluate the bound at
    their realized projection scales (2 eta u for the single-sample variant, the
    max-scale form, never below eta, for the antithetic one). When ``g_b`` is
    given it replaces the pointwise field norm, matching the corollary form.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    scale = eta if step_scale is None else float(step_scale)
    theta_l = np.asarray(theta_l, dtype=float)
    f = eval_field(spec, theta_l)
    z = project(fset, theta_l - scale * f)
    r = float(np.linalg.norm(theta_l - z))
    f_norm = float(np.linalg.norm(f))
    lead = f_norm if g_b is None else float(g_b)
    return GapEstimate(bound=r * (lead + d_b / scale), residual_norm=r, field_norm=f_norm,
                       step_scale=scale, d_b=float(d_b), g_b=g_b, z=z)


def duality_gap_bilinear(coupling, candidate, reference) -> float:
    """f(x_c, z_ref) - f(x_ref, z_c) for f(x, z) = x' A z, evaluated exactly."""
    a = np.atleast_2d(np.asarray(coupling, dtype=float))
    n, m = a.shape
    candidate = np.asarray(candidate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if candidate.shape != (n + m,) or reference.shape != (n + m,):
        raise ValueError("candidate and reference must split into the coupling blocks")
    xc, zc = candidate[:n], candidate[n:]
    xr, zr = reference[:n], reference[n:]
    return float(xc @ a @ zr - xr @ a @ zc)


def make_bilinear_gap_fn(coupling, references) -> Callable:
    """Gap recorder for the solver driver: maps (points (n, p), k) to the duality
    gap of each point against each reference, shape (n, n_refs)."""
    a = np.atleast_2d(np.asarray(coupling, dtype=float))
    n, m = a.shape
    refs = np.atleast_2d(np.asarray(references, dtype=float))
    if refs.shape[1] != n + m:
        raise ValueError("references must split into the coupling blocks")
    xr, zr = refs[:, :n], refs[:, n:]
    azr = a @ zr.T          # (n, R)
    xra = xr @ a            # (R, m)

    def gap_fn(points, k):
        x, z = points[:, :n], points[:, n:]
        return x @ azr - (xra @ z.T).T

    return gap_fn


def saddle_reference_grid(saddle, half_width: float = 1.0) -> np.ndarray:
    """The saddle plus the four corners of a box around it (first two block
    coordinates when the game has more), the default reference set for gaps."""
    saddle = np.asarray(saddle, dtype=float)
    p = saddle.shape[0]
    corners = []
    for sx in (-1.0, 1.0):
        for sz in (-1.0, 1.0):
            c = saddle.copy()
            c[0] += sx * half_width
            c[-1] += sz * half_width
            corners.append(c)
    return np.vstack([saddle[None, :], np.array(corners)])


def ergodic_average(trace: Trace, method: Optional[str] = None) -> np.ndarray:
    """Final ergodic average from the trace's running midpoint sums."""
    if method is None:
        method = trace.method
    if trace.sum_y is None or trace.midpoint_count == 0:
        raise ValueError("trace carries no midpoint sums")
    count = float(trace.midpoint_count)
    if trace.sum_y_tilde is not None:
        return (trace.sum_y + trace.sum_y_tilde) / (2.0 * count)
    return trace.sum_y / count


class NoiseFloor:
    """Additive sigma^2 plateau of a stochastic ergodic bound."""

    def __init__(self, value: float, admissible: bool, step_bound: float):
        self.value = value
        self.admissible = admissible
        self.step_bound = step_bound

    def __repr__(self):
        return (f"NoiseFloor(value={self.value!r}, admissible={self.admissible!r}, "
                f"step_bound={self.step_bound!r})")


def sfo_noise_floor(method: str, eta: float, l: float, sigma: float) -> NoiseFloor:
    """Noise plateau eta (2 + eta^2 L^2 C) sigma^2 / 2 for the single-sample
    method (C = 4.4) and eta (3/2 + eta^2 L^2 C+) sigma^2 / 2 for the antithetic
    one (C+ = 22/3); inadmissible steps are flagged, not rejected."""
    if method == RAMPAGE:
        c = SFO_C_R
        base = 2.0
        bound = 1.0 / (l * math.sqrt(2.0 * SFO_C_R))
    elif method == RAMPAGE_PLUS:
        c = SFO_C_R_PLUS
        base = 1.5
        bound = math.sqrt(3.0) / (2.0 * l * math.sqrt(SFO_C_R_PLUS))
    else:
        raise ValueError("noise floors are defined for RAMPAGE and RAMPAGE_PLUS")
    value = eta * (base + eta**2 * l**2 * c) / 2.0 * sigma**2
    return NoiseFloor(value=value, admissible=0.0 < eta <= bound, step_bound=bound)


def alpha_rate_m(x: float, nu: float, k0: float, c_alpha: float, alpha: float) -> float:
    """The residual-to-rate map M(x) = (nu x / (K0 + C_a x^a))^2."""
    return (nu * x / (k0 + c_alpha * x**alpha)) ** 2


def invert_alpha_rate(y: float, nu: float, k0: float, c_alpha: float,
                      alpha: float) -> float:
    """M^{-1}(y): closed form at alpha = 1/2, bisection otherwise.

    Converts the adaptive-step rate bound into a residual-norm bound; the
    conversion through Jensen's inequality is only valid for alpha <= 1/2.
    """
    if y < 0:
        raise ValueError("y must be nonnegative")
    if not 0.0 < alpha <= 0.5:
        raise NotComputableError("the residual-norm conversion needs alpha in (0, 1/2]")
    if y == 0.0:
        return 0.0
    if alpha == 0.5:
        root_y = math.sqrt(y)
        s = (c_alpha * root_y + math.sqrt(c_alpha**2 * y + 4.0 * nu * k0 * root_y)) / (2.0 * nu)
        return s * s
    lo, hi = 0.0, 1.0
    while alpha_rate_m(hi, nu, k0, c_alpha, alpha) < y:
        hi *= 2.0
        if hi > 1e300:
            raise NotComputableError("inversion target out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alpha_rate_m(mid, nu, k0, c_alpha, alpha) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def certificate_to_dict(cert: RateCertificate) -> dict:
    return {"regime": cert.regime, "constant": cert.constant,
            "admissible": cert.admissible, "step_bound": cert.step_bound,
            "params": dict(cert.params)}


def report_to_dict(report: BoundCheckReport) -> dict:
    return {"regime": report.regime, "deterministic": report.deterministic,
            "trials": report.trials, "iterations": report.iterations,
            "constant": report.constant, "max_violation": report.max_violation,
            "violation_unit": report.violation_unit, "argmax_iter": report.argmax_iter,
            "passed": report.passed}
