"""Root estimators built on the recursion engine.

Three families, each tuned by the step schedule and the weak/strong
orders (alpha, rho) of the biased sampler:

* single level: a bias-n recursion run for gamma_inv(1/n^{2 alpha})
  steps (or n^{2 alpha} averaged steps in the slow-decay regime);
* two level ("statistical Romberg"): a cheap bias-n^beta recursion plus
  a coupled correction pair at (n^beta, n), with beta* = 1/(1+2 rho);
* multi level: a telescoping sum of coupled corrections over the
  geometric ladder m^0, ..., m^L = n with per-level step budgets.

Correction levels can warm start from the running estimate, and all
level runs of one estimate draw from disjoint sub-streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import (
    FreezePolicy,
    SaConfig,
    run_coupled_sa_batch,
    run_sa_batch,
)
from .errors import ConfigurationError
from .rng import RngStream
from .sde import CoupledTerminalSampler, EulerTerminalSampler, GbmModel
from .steps import StepSchedule, validate_hs2


@dataclass(frozen=True)
class RootProblem:
    """A root-finding problem h(theta) = E[H(theta, U)] = 0 where U is
    reached through bias-n samplers with known weak/strong orders."""

    name: str
    H: Callable
    model: GbmModel
    exact_theta_star: float | None
    weak_order_alpha: float
    strong_order_rho: float
    mean_reversion_lambda: float | None = None
    dh_at_star: float | None = None
    gamma_at_star: float | None = None
    theta0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.strong_order_rho <= 0.5:
            raise ValueError(
                f"strong order must lie in (0, 1/2], got {self.strong_order_rho}"
            )
        if not 0.0 < self.weak_order_alpha <= 1.0:
            raise ValueError(
                f"weak order must lie in (0, 1], got {self.weak_order_alpha}"
            )

    def make_sampler(self, n: int) -> EulerTerminalSampler:
        return EulerTerminalSampler(self.model, n)

    def make_coupled_sampler(self, n_coarse: int, n_fine: int) -> CoupledTerminalSampler:
        return CoupledTerminalSampler(self.model, n_coarse, n_fine)


@dataclass(frozen=True)
class LevelAllocation:
    """Bias ladder m^0..m^L = n with per-level step budgets."""

    m: int
    L: int
    n: int
    M0: int
    M_levels: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.m**self.L != self.n:
            raise ValueError(f"n = {self.n} is not {self.m}^{self.L}")
        if len(self.M_levels) != self.L:
            raise ValueError("one step budget per level required")


@dataclass
class EstimatorRun:
    estimate: float
    total_cost: int
    h_evals: int
    seed: int
    method: str
    frozen_steps: int = 0


@dataclass
class BatchEstimates:
    """One estimator applied under many independent streams in lockstep."""

    estimates: np.ndarray
    total_cost: int            # Euler sub-steps per replication
    h_evals: int               # field evaluations per replication
    frozen_steps: np.ndarray
    method: str
    level_corrections: np.ndarray | None = None  # (R, L) for the multi level


def beta_star(rho: float) -> float:
    """Complexity-optimal two-level exponent 1/(1 + 2 rho)."""
    if not 0.0 < rho <= 0.5:
        raise ValueError(f"strong order must lie in (0, 1/2], got {rho}")
    return 1.0 / (1.0 + 2.0 * rho)


def _check_single_level(problem: RootProblem, schedule: StepSchedule) -> None:
    if schedule.exponent_a == 1.0 and problem.mean_reversion_lambda is not None:
        if not validate_hs2(schedule, problem.mean_reversion_lambda):
            raise ConfigurationError(
                "a = 1 schedule requires 2 * lambda * gamma0 > 1; got "
                f"2 * {problem.mean_reversion_lambda:.6g} * {schedule.gamma0:.6g} "
                f"= {2 * problem.mean_reversion_lambda * schedule.gamma0:.6g}"
            )


def _sr_betas(problem: RootProblem, beta: float, schedule: StepSchedule) -> None:
    alpha, rho = problem.weak_order_alpha, problem.strong_order_rho
    if not 0.0 < beta < 1.0:
        raise ConfigurationError(f"beta must lie in (0, 1), got {beta}")
    if not alpha > max(rho, 2.0 * rho * beta):
        raise ConfigurationError(
            f"two-level tuning requires alpha > max(rho, 2 rho beta): "
            f"alpha={alpha}, rho={rho}, beta={beta}"
        )
    if schedule.exponent_a == 1.0 and problem.mean_reversion_lambda is not None:
        bound = alpha / (2.0 * alpha - 2.0 * rho * beta)
        if not schedule.gamma0 * problem.mean_reversion_lambda > bound:
            raise ConfigurationError(
                "a = 1 schedule requires gamma0 * lambda > "
                f"alpha/(2 alpha - 2 rho beta) = {bound:.6g}; got "
                f"{schedule.gamma0 * problem.mean_reversion_lambda:.6g}"
            )


def _streams(stream: RngStream | Sequence[RngStream]) -> list[RngStream]:
    if isinstance(stream, RngStream):
        return [stream]
    return list(stream)


# ---------------------------------------------------------------------------
# single level


def sa_estimator_batch(
    problem: RootProblem,
    n: int,
    schedule: StepSchedule,
    streams: Sequence[RngStream],
    *,
    freeze: FreezePolicy | None = None,
    theta0=None,
) -> BatchEstimates:
    """Bias-n recursion, M = gamma_inv(1 / n^{2 alpha}) steps."""
    _check_single_level(problem, schedule)
    alpha = problem.weak_order_alpha
    M = schedule.gamma_inv(float(n) ** (-2.0 * alpha))
    config = SaConfig(schedule, M, problem.theta0 if theta0 is None else theta0,
                      freeze=freeze)
    out = run_sa_batch(problem.make_sampler(n), problem.H, config, streams)
    return BatchEstimates(out.final, out.cost_euler_substeps, out.cost_h_evals,
                          out.frozen_steps, "SA")


def sa_rp_estimator_batch(
    problem: RootProblem,
    n: int,
    schedule: StepSchedule,
    streams: Sequence[RngStream],
    *,
    freeze: FreezePolicy | None = None,
    theta0=None,
) -> BatchEstimates:
    """Averaged bias-n recursion, M = ceil(n^{2 alpha}) steps."""
    if not 0.5 < schedule.exponent_a < 1.0:
        raise ConfigurationError(
            "the averaged estimator requires a decay exponent in (1/2, 1); "
            f"got a={schedule.exponent_a}"
        )
    alpha = problem.weak_order_alpha
    M = math.ceil(float(n) ** (2.0 * alpha))
    config = SaConfig(schedule, M, problem.theta0 if theta0 is None else theta0,
                      freeze=freeze)
    out = run_sa_batch(problem.make_sampler(n), problem.H, config, streams,
                       average=True)
    return BatchEstimates(out.averaged, out.cost_euler_substeps, out.cost_h_evals,
                          out.frozen_steps, "SA-RP")


# ---------------------------------------------------------------------------
# two level (statistical Romberg)


def sr_level_sizes(
    n: int, beta: float, alpha: float, rho: float, schedule: StepSchedule
) -> tuple[int, int, int]:
    """(n_beta, M1, M2) for the plain two-level estimator."""
    n_beta = max(1, math.ceil(float(n) ** beta))
    M1 = schedule.gamma_inv(float(n) ** (-2.0 * alpha))
    M2 = schedule.gamma_inv(float(n) ** (-(2.0 * alpha - 2.0 * rho * beta)))
    return n_beta, M1, M2


def sr_estimator_batch(
    problem: RootProblem,
    n: int,
    beta: float,
    schedule: StepSchedule,
    streams: Sequence[RngStream],
    *,
    freeze: FreezePolicy | None = None,
    warm_start: bool = True,
    theta0=None,
) -> BatchEstimates:
    """Two-level estimate: coarse recursion plus coupled correction.

    The coarse bias-n^beta run (M1 steps) and the coupled (n^beta, n)
    correction pair (M2 steps) use disjoint sub-streams; with warm_start
    the pair starts from the coarse result.
    """
    _sr_betas(problem, beta, schedule)
    alpha, rho = problem.weak_order_alpha, problem.strong_order_rho
    n_beta, M1, M2 = sr_level_sizes(n, beta, alpha, rho, schedule)
    start = problem.theta0 if theta0 is None else theta0
    cfg1 = SaConfig(schedule, M1, start, freeze=freeze)
    base = run_sa_batch(problem.make_sampler(n_beta), problem.H, cfg1, streams,
                        sub=0)
    cfg2 = SaConfig(schedule, M2, start, freeze=freeze)
    pair = run_coupled_sa_batch(
        problem.make_coupled_sampler(n_beta, n), problem.H, cfg2, streams,
        sub=1, theta0_override=base.final if warm_start else None,
    )
    estimates = base.final + pair.final_fine - pair.final_coarse
    cost = base.cost_euler_substeps + pair.cost_euler_substeps
    h_evals = base.cost_h_evals + 2 * pair.cost_h_evals
    frozen = base.frozen_steps + pair.frozen_fine + pair.frozen_coarse
    return BatchEstimates(estimates, cost, h_evals, frozen, "SR")


def sr_rp_estimator_batch(
    problem: RootProblem,
    n: int,
    beta: float,
    schedule: StepSchedule,
    streams: Sequence[RngStream],
    *,
    freeze: FreezePolicy | None = None,
    warm_start: bool = True,
    theta0=None,
) -> BatchEstimates:
    """Averaged two-level estimate with M3 = ceil(n^{2 alpha}) and
    M4 = ceil(n^{2 alpha - 2 rho beta}) steps."""
    alpha, rho = problem.weak_order_alpha, problem.strong_order_rho
    if not 0.0 < beta < 1.0:
        raise ConfigurationError(f"beta must lie in (0, 1), got {beta}")
    if not alpha > max(rho, 2.0 * rho * beta):
        raise ConfigurationError(
            f"two-level tuning requires alpha > max(rho, 2 rho beta): "
            f"alpha={alpha}, rho={rho}, beta={beta}"
        )
    a = schedule.exponent_a
    a_bound = max(alpha / (2.0 * alpha - 2.0 * rho * beta),
                  alpha * (1.0 - beta) / (alpha - rho * beta))
    if not (0.5 < a < 1.0 and a > a_bound):
        raise ConfigurationError(
            f"averaged two-level estimator requires a in (1/2, 1) with "
            f"a > {a_bound:.6g}; got a={a}"
        )
    n_beta = max(1, math.ceil(float(n) ** beta))
    M3 = math.ceil(float(n) ** (2.0 * alpha))
    M4 = math.ceil(float(n) ** (2.0 * alpha - 2.0 * rho * beta))
    start = problem.theta0 if theta0 is None else theta0
    cfg3 = SaConfig(schedule, M3, start, freeze=freeze)
    base = run_sa_batch(problem.make_sampler(n_beta), problem.H, cfg3, streams,
                        sub=0, average=True)
    cfg4 = SaConfig(schedule, M4, start, freeze=freeze)
    pair = run_coupled_sa_batch(
        problem.make_coupled_sampler(n_beta, n), problem.H, cfg4, streams,
        sub=1, average=True,
        theta0_override=base.final if warm_start else None,
    )
    estimates = base.averaged + pair.averaged_fine - pair.averaged_coarse
    cost = base.cost_euler_substeps + pair.cost_euler_substeps
    h_evals = base.cost_h_evals + 2 * pair.cost_h_evals
    frozen = base.frozen_steps + pair.frozen_fine + pair.frozen_coarse
    return BatchEstimates(estimates, cost, h_evals, frozen, "SR-RP")


# ---------------------------------------------------------------------------
# multi level


def ml_allocation(
    n: int,
    m: int,
    schedule: StepSchedule,
    alpha: float = 1.0,
    rho: float = 0.5,
    *,
    small_m0: bool = False,
) -> LevelAllocation:
    """Per-level step budgets of the multi-level estimator.

    With rho = 1/2 (which requires alpha = 1):
      M0 = gamma_inv(1/n^2),
      M_l = gamma_inv(m^l log m / (n^2 log n (m - 1))).
    With rho in (0, 1/2):
      M0 = gamma_inv(1/n^{2 alpha}),
      M_l = gamma_inv(m^{l(1+2rho)/2} (m^{(1-2rho)/2} - 1)
                      / (n^{2 alpha} (n^{(1-2rho)/2} - 1))).
    ``small_m0`` switches to the alternative budget gamma_inv(1/(n^2 log n))
    (resp. gamma_inv(1/(n^{2 alpha} n^{1-2 rho}))) for the base level.
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    L = round(math.log(n) / math.log(m))
    if L < 1 or m**L != n:
        raise ValueError(f"n = {n} is not an integer power of m = {m}")
    if rho == 0.5:
        if alpha != 1.0:
            raise ConfigurationError(
                f"rho = 1/2 tuning requires alpha = 1, got alpha = {alpha}"
            )
        base_y = 1.0 / (n * n * math.log(n)) if small_m0 else float(n) ** -2.0
        M0 = schedule.gamma_inv(base_y)
        levels = tuple(
            schedule.gamma_inv(
                m**lev * math.log(m) / (n * n * math.log(n) * (m - 1))
            )
            for lev in range(1, L + 1)
        )
    elif 0.0 < rho < 0.5:
        e = 0.5 * (1.0 - 2.0 * rho)
        base_y = (
            float(n) ** (-(2.0 * alpha + 1.0 - 2.0 * rho))
            if small_m0
            else float(n) ** (-2.0 * alpha)
        )
        M0 = schedule.gamma_inv(base_y)
        denom = float(n) ** (2.0 * alpha) * (float(n) ** e - 1.0)
        levels = tuple(
            schedule.gamma_inv(
                float(m) ** (lev * 0.5 * (1.0 + 2.0 * rho))
                * (float(m) ** e - 1.0) / denom
            )
            for lev in range(1, L + 1)
        )
    else:
        raise ValueError(f"strong order must lie in (0, 1/2], got {rho}")
    return LevelAllocation(m=m, L=L, n=n, M0=M0, M_levels=levels)


def ml_estimator_batch(
    problem: RootProblem,
    allocation: LevelAllocation,
    schedule: StepSchedule,
    streams: Sequence[RngStream],
    *,
    freeze: FreezePolicy | None = None,
    warm_start: bool = True,
    theta0=None,
    keep_level_corrections: bool = False,
) -> BatchEstimates:
    """Telescoping estimate over the level ladder.

    Level 0 runs at bias 1; level l runs the coupled pair
    (m^{l-1}, m^l).  Levels use disjoint sub-streams; with warm_start
    each correction pair starts from the running partial sum.
    """
    m, L = allocation.m, allocation.L
    R = len(streams)
    start = problem.theta0 if theta0 is None else theta0
    cfg0 = SaConfig(schedule, allocation.M0, start, freeze=freeze)
    base = run_sa_batch(problem.make_sampler(1), problem.H, cfg0, streams, sub=0)
    partial = base.final.copy()
    cost = base.cost_euler_substeps
    h_evals = base.cost_h_evals
    frozen = base.frozen_steps.copy()
    corrections = np.empty((R, L)) if keep_level_corrections else None
    for lev in range(1, L + 1):
        M_lev = allocation.M_levels[lev - 1]
        cfg = SaConfig(schedule, M_lev, start, freeze=freeze)
        pair = run_coupled_sa_batch(
            problem.make_coupled_sampler(m ** (lev - 1), m**lev),
            problem.H, cfg, streams, sub=lev,
            theta0_override=partial if warm_start else None,
        )
        delta = pair.final_fine - pair.final_coarse
        if corrections is not None:
            corrections[:, lev - 1] = delta
        partial = partial + delta
        cost += pair.cost_euler_substeps
        h_evals += 2 * pair.cost_h_evals
        frozen += pair.frozen_fine + pair.frozen_coarse
    return BatchEstimates(partial, cost, h_evals, frozen, "ML",
                          level_corrections=corrections)


# ---------------------------------------------------------------------------
# single-run wrappers


def _single(batch_fn, stream: RngStream, method: str, *args, **kwargs) -> EstimatorRun:
    out = batch_fn(*args, streams=[stream], **kwargs)
    return EstimatorRun(
        estimate=float(out.estimates[0]),
        total_cost=out.total_cost,
        h_evals=out.h_evals,
        seed=stream.seed,
        method=method,
        frozen_steps=int(out.frozen_steps[0]),
    )


def sa_estimator(problem, n, schedule, stream: RngStream, **kwargs) -> EstimatorRun:
    return _single(
        lambda streams, **kw: sa_estimator_batch(problem, n, schedule, streams, **kw),
        stream, "SA", **kwargs,
    )


def sa_rp_estimator(problem, n, schedule, stream: RngStream, **kwargs) -> EstimatorRun:
    return _single(
        lambda streams, **kw: sa_rp_estimator_batch(problem, n, schedule, streams, **kw),
        stream, "SA-RP", **kwargs,
    )


def sr_estimator(problem, n, beta, schedule, stream: RngStream, **kwargs) -> EstimatorRun:
    return _single(
        lambda streams, **kw: sr_estimator_batch(problem, n, beta, schedule, streams, **kw),
        stream, "SR", **kwargs,
    )


def sr_rp_estimator(problem, n, beta, schedule, stream: RngStream, **kwargs) -> EstimatorRun:
    return _single(
        lambda streams, **kw: sr_rp_estimator_batch(problem, n, beta, schedule, streams, **kw),
        stream, "SR-RP", **kwargs,
    )


def ml_estimator(problem, allocation, schedule, stream: RngStream, **kwargs) -> EstimatorRun:
    return _single(
        lambda streams, **kw: ml_estimator_batch(problem, allocation, schedule, streams, **kw),
        stream, "ML", **kwargs,
    )


# ---------------------------------------------------------------------------
# complexity formulas (real-valued step counts, constant C = 1)


def complexity_sa(n: int, alpha: float, schedule: StepSchedule) -> float:
    """n * gamma_inv(1/n^{2 alpha})."""
    return n * schedule.gamma_inv_real(float(n) ** (-2.0 * alpha))


def complexity_sr(
    n: int, alpha: float, rho: float, beta: float, schedule: StepSchedule
) -> float:
    """n^beta gamma_inv(1/n^{2a}) + (n + n^beta) gamma_inv(1/n^{2a-2rb})."""
    nb = float(n) ** beta
    return nb * schedule.gamma_inv_real(float(n) ** (-2.0 * alpha)) + (
        n + nb
    ) * schedule.gamma_inv_real(float(n) ** (-(2.0 * alpha - 2.0 * rho * beta)))


def complexity_ml(allocation: LevelAllocation) -> float:
    """M0 + sum_l M_l (m^l + m^{l-1}) for a concrete allocation."""
    m = allocation.m
    return allocation.M0 + sum(
        M * (m**lev + m ** (lev - 1))
        for lev, M in enumerate(allocation.M_levels, start=1)
    )


def complexity_ml_formula(
    n: int, m: int, schedule: StepSchedule, alpha: float = 1.0, rho: float = 0.5
) -> float:
    """Multi-level cost at a fixed accuracy target 1/n^alpha, evaluated
    with real-valued step counts and a real level count L = log_m(n).

    Unlike :func:`complexity_ml` this does not require n to be a power
    of m, which makes it suitable for sweeping m at fixed accuracy.
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    L_real = math.log(n) / math.log(m)
    if rho == 0.5:
        if alpha != 1.0:
            raise ConfigurationError(
                f"rho = 1/2 tuning requires alpha = 1, got alpha = {alpha}"
            )
        def level_y(lev: float) -> float:
            return m**lev * math.log(m) / (n * n * math.log(n) * (m - 1))
        base = schedule.gamma_inv_real(float(n) ** -2.0)
    elif 0.0 < rho < 0.5:
        e = 0.5 * (1.0 - 2.0 * rho)
        denom = float(n) ** (2.0 * alpha) * (float(n) ** e - 1.0)
        def level_y(lev: float) -> float:
            return float(m) ** (lev * 0.5 * (1 + 2 * rho)) * (float(m) ** e - 1.0) / denom
        base = schedule.gamma_inv_real(float(n) ** (-2.0 * alpha))
    else:
        raise ValueError(f"strong order must lie in (0, 1/2], got {rho}")
    total = base
    full = math.floor(L_real)
    for lev in range(1, full + 1):
        total += schedule.gamma_inv_real(level_y(lev)) * (m**lev + m ** (lev - 1))
    frac = L_real - full
    if frac > 1e-12:
        lev = full + 1
        total += frac * schedule.gamma_inv_real(level_y(lev)) * (
            m**lev + m ** (lev - 1)
        )
    return total


def scalar_clt_variance(dh: float, gamma_star: float, zeta: float) -> float:
    """Scalar limit variance gamma_star / (2 (dh - zeta)).

    zeta = 0 in the slow-decay regime and 1/(2 gamma0) for the a = 1
    schedule; dh must exceed zeta for the recursion to be stable.
    """
    if not gamma_star > 0.0:
        raise ValueError(f"noise variance must be positive, got {gamma_star}")
    if not dh > zeta:
        raise ConfigurationError(
            f"unstable configuration: dh = {dh:.6g} must exceed zeta = {zeta:.6g}"
        )
    return gamma_star / (2.0 * (dh - zeta))
