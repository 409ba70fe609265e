"""Step kernels and the iteration driver for the randomized-midpoint extragradient family.

Eight method variants share one driver: the plain extragradient step (EG), the
single-sample randomized-midpoint step (RAMPAGE), its antithetic variance-reduced
counterpart (RAMPAGE_PLUS), the symmetrically scaled projected variants for
constrained problems (SS_*), and the stochastic-oracle game variants (SFO_*).

The driver runs a whole batch of trials at once as ``(n, p)`` arrays, one random
stream per trial; a single run is the ``n = 1`` special case. Per-trial streams
are the counter-based streams of :mod:`rampage.sampling`: trial ``t`` is keyed by
``(seed, t)``, with the uniform draws and the three oracle-noise channels on
disjoint substreams so the midpoint draw and the update draws stay independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .fields import (
    EXACT,
    GAUSSIAN,
    DimensionMismatchError,
    FeasibleSet,
    FieldSpec,
    NoiseModel,
    contains,
    eval_field,
    exact_noise,
    feasible_set_from_dict,
    feasible_set_to_dict,
    noise_from_dict,
    noise_to_dict,
    project,
    sfo_sample,
    whole_space,
)
from .sampling import AntitheticDraw, RandomStream, draw_antithetic, draw_uniform


class NotComputableError(ValueError):
    """A requested constant is undefined for the supplied parameters."""


class DegenerateScheduleError(ValueError):
    """Adaptive step size is undefined (zero offset and zero residual)."""


EG = "EG"
RAMPAGE = "RAMPAGE"
RAMPAGE_PLUS = "RAMPAGE_PLUS"
SS_RAMPAGE = "SS_RAMPAGE"
SS_RAMPAGE_PLUS = "SS_RAMPAGE_PLUS"
SFO_RAMPAGE_GAME = "SFO_RAMPAGE_GAME"
SFO_RAMPAGE_PLUS_GAME = "SFO_RAMPAGE_PLUS_GAME"

METHODS = (EG, RAMPAGE, RAMPAGE_PLUS, SS_RAMPAGE, SS_RAMPAGE_PLUS,
           SFO_RAMPAGE_GAME, SFO_RAMPAGE_PLUS_GAME)
ANTITHETIC_METHODS = (RAMPAGE_PLUS, SS_RAMPAGE_PLUS, SFO_RAMPAGE_PLUS_GAME)
SS_METHODS = (SS_RAMPAGE, SS_RAMPAGE_PLUS)
SFO_METHODS = (SFO_RAMPAGE_GAME, SFO_RAMPAGE_PLUS_GAME)


# -- step-size schedules -------------------------------------------------------

CONSTANT = "constant"
ADAPTIVE_ALPHA = "adaptive_alpha"


@dataclass(frozen=True)
class StepSizeSchedule:
    kind: str
    eta: Optional[float] = None
    nu: Optional[float] = None
    k0: Optional[float] = None
    k1: Optional[float] = None
    k2: Optional[float] = None
    alpha: Optional[float] = None
    c_alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind == CONSTANT:
            if self.eta is None or self.eta <= 0:
                raise ValueError("constant schedule needs eta > 0")
            return
        if self.kind != ADAPTIVE_ALPHA:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.nu is None or self.nu <= 0:
            raise ValueError("adaptive schedule needs nu > 0")
        for name in ("k0", "k1", "k2"):
            if getattr(self, name) is None or getattr(self, name) < 0:
                raise ValueError(f"adaptive schedule needs {name} >= 0")
        if self.alpha is None or not 0.0 < self.alpha < 1.0:
            raise ValueError("adaptive schedule needs alpha in (0, 1)")
        expected = self.k1 + 2.0 ** (self.alpha / (1.0 - self.alpha)) * self.k2
        if self.c_alpha is None:
            object.__setattr__(self, "c_alpha", expected)
        elif not math.isclose(self.c_alpha, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"c_alpha must equal k1 + 2^(a/(1-a)) k2 = {expected}")


def constant_schedule(eta: float) -> StepSizeSchedule:
    return StepSizeSchedule(kind=CONSTANT, eta=float(eta))


def adaptive_alpha_schedule(nu: float, k0: float, k1: float, k2: float,
                            alpha: float) -> StepSizeSchedule:
    return StepSizeSchedule(kind=ADAPTIVE_ALPHA, nu=float(nu), k0=float(k0),
                            k1=float(k1), k2=float(k2), alpha=float(alpha))


def adaptive_stepsize(schedule: StepSizeSchedule, residual_norm: float) -> float:
    """Evaluate nu / (K0 + C_alpha * r^alpha) for the current residual norm."""
    if schedule.kind != ADAPTIVE_ALPHA:
        raise ValueError("adaptive_stepsize requires an adaptive_alpha schedule")
    r = float(residual_norm)
    if r < 0:
        raise ValueError("residual norm must be nonnegative")
    denom = schedule.k0 + schedule.c_alpha * r**schedule.alpha
    if denom == 0.0:
        raise DegenerateScheduleError("K0 = 0 and zero residual leave the step undefined")
    return schedule.nu / denom


def nu_bound(method: str, k0: float, k1: float, k2: float, alpha: float) -> float:
    """Admissible upper bound on nu for the adaptive-step convergence guarantees.

    With K1 = K2 = 0 the operator is plainly Lipschitz and the bound degenerates
    to the limit constant (1/8 for RAMPAGE, sqrt(6)/16 for RAMPAGE_PLUS), to be
    divided by K0 by the caller.
    """
    if method not in (RAMPAGE, RAMPAGE_PLUS):
        raise ValueError("nu_bound is defined for RAMPAGE and RAMPAGE_PLUS")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if min(k0, k1, k2) < 0:
        raise ValueError("constants must be nonnegative")
    lead = 1.0 / 8.0 if method == RAMPAGE else math.sqrt(6.0) / 16.0
    if k1 == 0.0 and k2 == 0.0:
        return lead
    c = k1 + 2.0 ** (alpha / (1.0 - alpha)) * k2
    if c <= k1:
        # k2 = 0 zeroes the second branch's denominator; no admissible value is printed.
        raise NotComputableError("nu bound undefined when C_alpha <= K1 (K2 = 0 with K1 > 0)")
    first = 2.0 * lead * c / (c + k1)
    second = c * (lead / (c - k1)) ** (1.0 - alpha)
    return min(first, second)


# -- step kernels ---------------------------------------------------------------

def eg_step(spec: FieldSpec, theta, eta: float, base_field=None) -> np.ndarray:
    """Extragradient update theta - eta F(theta - eta F(theta)); two field calls."""
    f0 = eval_field(spec, theta) if base_field is None else base_field
    y = theta - eta * f0
    return theta - eta * eval_field(spec, y)


def rampage_step(spec: FieldSpec, theta, eta: float, u: float, base_field=None) -> np.ndarray:
    """Randomized-midpoint update theta - eta F(theta - 2 eta u F(theta))."""
    f0 = eval_field(spec, theta) if base_field is None else base_field
    y = theta - 2.0 * eta * u * f0
    return theta - eta * eval_field(spec, y)


def rampage_plus_step(spec: FieldSpec, theta, eta: float, draw: AntitheticDraw,
                      base_field=None) -> np.ndarray:
    """Antithetic update averaging the field at the paired midpoints u and 1 - u."""
    f0 = eval_field(spec, theta) if base_field is None else base_field
    y = theta - 2.0 * eta * draw.u * f0
    y_tilde = theta - 2.0 * eta * draw.u_tilde * f0
    f_bar = 0.5 * (eval_field(spec, y) + eval_field(spec, y_tilde))
    return theta - eta * f_bar


def ss_rampage_step(spec: FieldSpec, fset: FeasibleSet, theta, eta: float, u: float,
                    base_field=None):
    """Projected variant; the same random scale 2 eta u couples both projections."""
    f0 = eval_field(spec, theta) if base_field is None else base_field
    y = project(fset, theta - 2.0 * eta * u * f0)
    theta_next = project(fset, theta - 2.0 * eta * u * eval_field(spec, y))
    return y, theta_next


def ss_rampage_plus_step(spec: FieldSpec, fset: FeasibleSet, theta, eta: float,
                         draw: AntitheticDraw, base_field=None):
    """Projected antithetic variant with the u-weighted average update field."""
    f0 = eval_field(spec, theta) if base_field is None else base_field
    y = project(fset, theta - 2.0 * eta * draw.u * f0)
    y_tilde = project(fset, theta - 2.0 * eta * draw.u_tilde * f0)
    theta_next = project(
        fset,
        theta - eta * draw.u * eval_field(spec, y) - eta * draw.u_tilde * eval_field(spec, y_tilde),
    )
    return y, y_tilde, theta_next


def sfo_rampage_game_step(spec: FieldSpec, noise: NoiseModel, theta, eta: float, u: float,
                          rng: RandomStream, rng_update: Optional[RandomStream] = None):
    """Stochastic-oracle step: the midpoint uses one draw, the update an independent one."""
    f_hat = sfo_sample(spec, noise, theta, rng)
    y = theta - 2.0 * eta * u * f_hat
    g_hat = sfo_sample(spec, noise, y, rng if rng_update is None else rng_update)
    return y, theta - eta * g_hat


def sfo_rampage_plus_game_step(spec: FieldSpec, noise: NoiseModel, theta, eta: float,
                               draw: AntitheticDraw, rng: RandomStream,
                               rng_update: Optional[RandomStream] = None,
                               rng_update2: Optional[RandomStream] = None):
    """Antithetic stochastic step: one base draw shared by both midpoints, two
    independent update draws averaged for the step."""
    f_hat = sfo_sample(spec, noise, theta, rng)
    y = theta - 2.0 * eta * draw.u * f_hat
    y_tilde = theta - 2.0 * eta * draw.u_tilde * f_hat
    g1 = sfo_sample(spec, noise, y, rng if rng_update is None else rng_update)
    g2 = sfo_sample(spec, noise, y_tilde, rng if rng_update2 is None else rng_update2)
    return y, y_tilde, theta - eta * (0.5 * (g1 + g2))


# -- configuration and traces ----------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    method: str
    schedule: StepSizeSchedule
    max_iters: int
    feasible_set: FeasibleSet = field(default_factory=whole_space)
    noise: NoiseModel = field(default_factory=exact_noise)
    seed: int = 0
    divergence_threshold: float = 1e8
    record_stride: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.divergence_threshold <= 0:
            raise ValueError("divergence_threshold must be positive")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValueError("record_stride must be positive")

    def effective_stride(self) -> int:
        if self.record_stride is not None:
            return self.record_stride
        return 1 if self.max_iters <= 10_000 else math.ceil(self.max_iters / 10_000)


@dataclass
class Trace:
    """Per-iteration record of one trial.

    Row ``iters[j]`` carries the diagnostics of iterate theta_t (``residual_sq``
    is ||F(theta_t)||^2, ``dist_sq`` is ||theta_t - theta_star||^2), the transition
    quantities computed there (``step_size``, ``u``, and for SS methods
    ``proj_residual_sq``: ||theta_t - y_t||^2, pair-averaged for SS_RAMPAGE_PLUS),
    and the ergodic gap after iteration t's midpoints are included. The last row
    is the final iterate (or the diverged one) and has no transition quantities.
    """

    method: str
    eta: float
    seed: int
    trial: int
    record_stride: int
    iters: np.ndarray
    residual_sq: np.ndarray
    step_size: np.ndarray
    u: np.ndarray
    dist_sq: Optional[np.ndarray] = None
    proj_residual_sq: Optional[np.ndarray] = None
    gap: Optional[np.ndarray] = None
    gap_matrix: Optional[np.ndarray] = None
    diverged: bool = False
    diverged_iter: Optional[int] = None
    completed_iters: int = 0
    theta0: Optional[np.ndarray] = None
    theta_final: Optional[np.ndarray] = None
    min_residual_sq: float = math.inf
    max_theta_norm: float = 0.0
    max_field_norm: float = 0.0
    midpoint_count: int = 0
    sum_y: Optional[np.ndarray] = None
    sum_y_tilde: Optional[np.ndarray] = None


def _col(x, n):
    return x[:, None] if isinstance(x, np.ndarray) else x


_CHUNK = 512


def run_batch(spec: FieldSpec, config: SolverConfig, theta0, stream_ids: Sequence[int],
              theta_star=None, gap_fn: Optional[Callable] = None) -> List[Trace]:
    """Run one trial per stream id, vectorized across trials.

    All trials share theta0 and the schedule; trial ``t`` draws from the stream
    keyed by ``(config.seed, t)``. Divergence (non-finite iterate or norm above
    the threshold) ends a trial and is recorded, never raised. ``gap_fn``, when
    given, is called as ``gap_fn(ergodic_points, k)`` with the per-trial ergodic
    averages over iterations 0..k and may return one value or one value per
    reference point per trial.
    """
    method = config.method
    p = spec.dimension
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (p,):
        raise DimensionMismatchError(f"theta0 must have shape ({p},)")
    if method in SS_METHODS and not bool(np.all(contains(config.feasible_set, theta0))):
        raise ValueError("theta0 must be feasible for the symmetrically scaled methods")
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float)

    n = len(stream_ids)
    max_iters = config.max_iters
    stride = config.effective_stride()
    fset = config.feasible_set
    thresh_sq = config.divergence_threshold**2

    needs_u = method != EG
    antithetic = method in ANTITHETIC_METHODS
    is_ss = method in SS_METHODS
    noisy = method in SFO_METHODS and config.noise.kind == GAUSSIAN and config.noise.sigma > 0.0
    noise_scale = config.noise.sigma / np.sqrt(p) if noisy else 0.0
    track_mid = method != EG

    sched = config.schedule
    const_eta = sched.eta if sched.kind == CONSTANT else None

    streams = [RandomStream(config.seed, sid) for sid in stream_ids]
    u_gens = [s.substream(0) for s in streams] if needs_u else None
    base_gens = [s.substream(1) for s in streams] if noisy else None
    upd_gens = [s.substream(2) for s in streams] if noisy else None
    upd2_gens = [s.substream(3) for s in streams] if noisy and antithetic else None

    record_steps = np.arange(0, max_iters, stride)
    n_rec = len(record_steps)
    res_rec = np.full((n, n_rec), np.nan)
    step_rec = np.full((n, n_rec), np.nan)
    u_rec = np.full((n, n_rec), np.nan)
    dist_rec = np.full((n, n_rec), np.nan) if theta_star is not None else None
    proj_rec = np.full((n, n_rec), np.nan) if is_ss else None
    gap_rec = np.full((n, n_rec), np.nan) if gap_fn is not None and track_mid else None
    gap_full = None

    theta = np.tile(theta0, (n, 1))
    active = np.ones(n, dtype=bool)
    activef = np.ones(n)
    death_iter = np.full(n, -1, dtype=int)
    death_res = np.full(n, np.nan)
    death_dist = np.full(n, np.nan)
    death_theta = np.zeros((n, p))
    min_r2 = np.full(n, np.inf)
    max_t2 = np.zeros(n)
    max_r2 = np.zeros(n)
    sum_y = np.zeros((n, p)) if track_mid else None
    sum_yt = np.zeros((n, p)) if antithetic else None

    u_buf = base_buf = upd_buf = upd2_buf = None
    ridx = 0
    completed = 0

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for t in range(max_iters):
            if not active.any():
                break
            j = t % _CHUNK
            if j == 0:
                if needs_u:
                    u_buf = np.stack([g.uniform(_CHUNK) for g in u_gens])
                if noisy:
                    base_buf = np.stack([g.normal((_CHUNK, p)) for g in base_gens])
                    upd_buf = np.stack([g.normal((_CHUNK, p)) for g in upd_gens])
                    if antithetic:
                        upd2_buf = np.stack([g.normal((_CHUNK, p)) for g in upd2_gens])

            f0 = eval_field(spec, theta)
            r2 = np.einsum("ij,ij->i", f0, f0)
            t2 = np.einsum("ij,ij->i", theta, theta)
            np.minimum(min_r2, np.where(active, r2, np.inf), out=min_r2)
            np.maximum(max_r2, np.where(active, r2, 0.0), out=max_r2)
            np.maximum(max_t2, np.where(active, t2, 0.0), out=max_t2)

            if const_eta is not None:
                eta = const_eta
            else:
                r = np.sqrt(r2)
                if sched.k0 == 0.0 and bool(np.any(active & (r == 0.0))):
                    raise DegenerateScheduleError(
                        "K0 = 0 and zero residual leave the step undefined")
                eta = sched.nu / (sched.k0 + sched.c_alpha * r**sched.alpha)

            u_t = u_buf[:, j] if needs_u else None
            ut_t = 1.0 - u_t if antithetic else None
            y = y_tilde = None
            proj_r = None

            if method == EG:
                y_mid = theta - _col(eta, n) * f0
                theta_next = theta - _col(eta, n) * eval_field(spec, y_mid)
            elif method == RAMPAGE:
                scale = 2.0 * eta * u_t
                y = theta - scale[:, None] * f0
                theta_next = theta - _col(eta, n) * eval_field(spec, y)
            elif method == RAMPAGE_PLUS:
                y = theta - (2.0 * eta * u_t)[:, None] * f0
                y_tilde = theta - (2.0 * eta * ut_t)[:, None] * f0
                f_bar = 0.5 * (eval_field(spec, y) + eval_field(spec, y_tilde))
                theta_next = theta - _col(eta, n) * f_bar
            elif method == SS_RAMPAGE:
                scale = (2.0 * eta * u_t)[:, None]
                y = project(fset, theta - scale * f0)
                theta_next = project(fset, theta - scale * eval_field(spec, y))
                d = theta - y
                proj_r = np.einsum("ij,ij->i", d, d)
            elif method == SS_RAMPAGE_PLUS:
                y = project(fset, theta - (2.0 * eta * u_t)[:, None] * f0)
                y_tilde = project(fset, theta - (2.0 * eta * ut_t)[:, None] * f0)
                theta_next = project(
                    fset,
                    theta - (eta * u_t)[:, None] * eval_field(spec, y)
                    - (eta * ut_t)[:, None] * eval_field(spec, y_tilde),
                )
                d1 = theta - y
                d2 = theta - y_tilde
                proj_r = 0.5 * (np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", d2, d2))
            elif method == SFO_RAMPAGE_GAME:
                f_hat = f0 + noise_scale * base_buf[:, j, :] if noisy else f0
                y = theta - (2.0 * eta * u_t)[:, None] * f_hat
                g_hat = eval_field(spec, y)
                if noisy:
                    g_hat = g_hat + noise_scale * upd_buf[:, j, :]
                theta_next = theta - _col(eta, n) * g_hat
            else:  # SFO_RAMPAGE_PLUS_GAME
                f_hat = f0 + noise_scale * base_buf[:, j, :] if noisy else f0
                y = theta - (2.0 * eta * u_t)[:, None] * f_hat
                y_tilde = theta - (2.0 * eta * ut_t)[:, None] * f_hat
                g1 = eval_field(spec, y)
                g2 = eval_field(spec, y_tilde)
                if noisy:
                    g1 = g1 + noise_scale * upd_buf[:, j, :]
                    g2 = g2 + noise_scale * upd2_buf[:, j, :]
                theta_next = theta - _col(eta, n) * (0.5 * (g1 + g2))

            if track_mid:
                sum_y += y * activef[:, None]
                if antithetic:
                    sum_yt += y_tilde * activef[:, None]

            if ridx < n_rec and t == record_steps[ridx]:
                res_rec[:, ridx] = r2
                step_rec[:, ridx] = eta
                if needs_u:
                    u_rec[:, ridx] = u_t
                if dist_rec is not None:
                    d = theta - theta_star
                    dist_rec[:, ridx] = np.einsum("ij,ij->i", d, d)
                if proj_rec is not None:
                    proj_rec[:, ridx] = proj_r
                if gap_rec is not None:
                    count = float(t + 1)
                    pts = (sum_y + sum_yt) / (2.0 * count) if antithetic else sum_y / count
                    g = np.asarray(gap_fn(pts, t), dtype=float)
                    if g.ndim == 2:
                        if gap_full is None:
                            gap_full = np.full((n, n_rec, g.shape[1]), np.nan)
                        gap_full[:, ridx, :] = g
                        gap_rec[:, ridx] = g.max(axis=1)
                    else:
                        gap_rec[:, ridx] = g
                ridx += 1

            theta = theta_next
            completed = t + 1

            t2n = np.einsum("ij,ij->i", theta, theta)
            finite = np.isfinite(theta).all(axis=1)
            dying = active & (~finite | (t2n > thresh_sq))
            if dying.any():
                f_d = eval_field(spec, theta[dying])
                death_res[dying] = np.einsum("ij,ij->i", f_d, f_d)
                if theta_star is not None:
                    dd = theta[dying] - theta_star
                    death_dist[dying] = np.einsum("ij,ij->i", dd, dd)
                death_theta[dying] = theta[dying]
                death_iter[dying] = t + 1
                theta[dying] = 0.0
                active &= ~dying
                activef = active.astype(float)

        final_res = np.full(n, np.nan)
        final_dist = np.full(n, np.nan)
        final_gap = np.full(n, np.nan)
        final_gap_full = None
        if active.any():
            f_fin = eval_field(spec, theta)
            rf = np.einsum("ij,ij->i", f_fin, f_fin)
            final_res[active] = rf[active]
            np.minimum(min_r2, np.where(active, rf, np.inf), out=min_r2)
            np.maximum(max_r2, np.where(active, rf, 0.0), out=max_r2)
            tf = np.einsum("ij,ij->i", theta, theta)
            np.maximum(max_t2, np.where(active, tf, 0.0), out=max_t2)
            if theta_star is not None:
                d = theta - theta_star
                final_dist[active] = np.einsum("ij,ij->i", d, d)[active]
            if gap_rec is not None and completed > 0:
                count = float(completed)
                pts = (sum_y + sum_yt) / (2.0 * count) if antithetic else sum_y / count
                g = np.asarray(gap_fn(pts, completed - 1), dtype=float)
                if g.ndim == 2:
                    final_gap_full = g
                    final_gap[active] = g.max(axis=1)[active]
                else:
                    final_gap[active] = g[active]

    traces: List[Trace] = []
    const = const_eta if const_eta is not None else math.nan
    for i, sid in enumerate(stream_ids):
        dead = death_iter[i] >= 0
        end = death_iter[i] if dead else completed
        mask = record_steps < end
        iters = record_steps[mask]
        tail_iter = death_iter[i] if dead else completed
        tail_res = death_res[i] if dead else final_res[i]
        tail_dist = death_dist[i] if dead else final_dist[i]

        iters_i = np.concatenate([iters, [tail_iter]])
        res_i = np.concatenate([res_rec[i, mask], [tail_res]])
        step_i = np.concatenate([step_rec[i, mask], [math.nan]])
        u_i = np.concatenate([u_rec[i, mask], [math.nan]])
        dist_i = None
        if dist_rec is not None:
            dist_i = np.concatenate([dist_rec[i, mask], [tail_dist]])
        proj_i = None
        if proj_rec is not None:
            proj_i = np.concatenate([proj_rec[i, mask], [math.nan]])
        gap_i = None
        gap_m = None
        if gap_rec is not None:
            tail_gap = math.nan if dead else final_gap[i]
            gap_i = np.concatenate([gap_rec[i, mask], [tail_gap]])
            if gap_full is not None:
                tail_row = (np.full(gap_full.shape[2], np.nan) if dead or final_gap_full is None
                            else final_gap_full[i])
                gap_m = np.vstack([gap_full[i, mask, :], tail_row[None, :]])

        mids = int(end)
        traces.append(Trace(
            method=method,
            eta=const,
            seed=config.seed,
            trial=int(sid),
            record_stride=stride,
            iters=iters_i,
            residual_sq=res_i,
            step_size=step_i,
            u=u_i,
            dist_sq=dist_i,
            proj_residual_sq=proj_i,
            gap=gap_i,
            gap_matrix=gap_m,
            diverged=bool(dead),
            diverged_iter=int(death_iter[i]) if dead else None,
            completed_iters=int(end),
            theta0=theta0.copy(),
            theta_final=death_theta[i].copy() if dead else theta[i].copy(),
            min_residual_sq=float(min_r2[i]),
            max_theta_norm=float(np.sqrt(max_t2[i])),
            max_field_norm=float(np.sqrt(max_r2[i])),
            midpoint_count=mids if track_mid else 0,
            sum_y=sum_y[i].copy() if track_mid else None,
            sum_y_tilde=sum_yt[i].copy() if antithetic else None,
        ))
    return traces


def run_solver(spec: FieldSpec, config: SolverConfig, theta0, theta_star=None,
               stream_id: int = 0, gap_fn: Optional[Callable] = None) -> Trace:
    """Run a single trial; equivalent to the batch driver with one stream."""
    return run_batch(spec, config, theta0, [stream_id], theta_star=theta_star,
                     gap_fn=gap_fn)[0]


def solver_config_to_dict(config: SolverConfig) -> dict:
    sched = config.schedule
    sched_d = {"kind": sched.kind, "eta": sched.eta, "nu": sched.nu, "k0": sched.k0,
               "k1": sched.k1, "k2": sched.k2, "alpha": sched.alpha, "c_alpha": sched.c_alpha}
    return {
        "method": config.method,
        "schedule": sched_d,
        "max_iters": config.max_iters,
        "feasible_set": feasible_set_to_dict(config.feasible_set),
        "noise": noise_to_dict(config.noise),
        "seed": config.seed,
        "divergence_threshold": config.divergence_threshold,
        "record_stride": config.record_stride,
    }


def solver_config_from_dict(d: dict) -> SolverConfig:
    sd = d["schedule"]
    schedule = StepSizeSchedule(kind=sd["kind"], eta=sd.get("eta"), nu=sd.get("nu"),
                                k0=sd.get("k0"), k1=sd.get("k1"), k2=sd.get("k2"),
                                alpha=sd.get("alpha"), c_alpha=sd.get("c_alpha"))
    return SolverConfig(
        method=d["method"],
        schedule=schedule,
        max_iters=int(d["max_iters"]),
        feasible_set=feasible_set_from_dict(d.get("feasible_set") or {"kind": "whole_space"}),
        noise=noise_from_dict(d.get("noise") or {"kind": EXACT}),
        seed=int(d.get("seed", 0)),
        divergence_threshold=float(d.get("divergence_threshold", 1e8)),
        record_stride=d.get("record_stride"),
    )
