"""Robbins-Monro recursions: single chain, averaged chain, and coupled
two-resolution chains, plus the burn-in freeze heuristic.

Two execution paths share the same semantics:

* :func:`run_sa` / :func:`run_coupled_sa` iterate one chain (theta may be
  a vector) and are the readable reference;
* :func:`run_sa_batch` / :func:`run_coupled_sa_batch` iterate many
  independent scalar chains in lockstep, one numpy update per step, each
  chain consuming its own RngStream.  For identical streams the two paths
  produce bit-identical iterates, which the test suite checks.

Innovations are pre-generated in blocks by the sampler, so the per-step
work is a handful of float operations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalAbort
from .rng import RngStream
from .steps import StepSchedule

# Innovation buffers are refilled in chunks sized so that per-chain
# temporaries (block * substeps) and the cross-chain buffer (block *
# chains) both stay within a few tens of MB.
_BLOCK_ELEMENTS = 1 << 21
_BATCH_BUFFER_ELEMENTS = 1 << 22


def _block_cap(steps: int, cost_unit: int, chains: int = 1) -> int:
    cap = min(
        _BLOCK_ELEMENTS // max(1, cost_unit),
        _BATCH_BUFFER_ELEMENTS // max(1, chains),
    )
    return max(1, min(steps, max(256, cap)))


@dataclass(frozen=True)
class FreezePolicy:
    """Reject over-large increments during an initial burn window.

    While p <= burn_fraction * M, a proposed move with |theta_next -
    theta_prev| > K / sqrt(p) is rejected: the chain keeps its value but
    the innovation is consumed and its cost counted.  The very first
    update (p = 0) is guarded with the p = 1 threshold K, since a full
    gamma_0-sized jump there is exactly the blow-up the window exists to
    prevent.
    """

    K: float = 5.0
    burn_fraction: float = 0.01

    def __post_init__(self) -> None:
        if not self.K > 0.0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not 0.0 < self.burn_fraction <= 1.0:
            raise ValueError(
                f"burn_fraction must lie in (0, 1], got {self.burn_fraction}"
            )


@dataclass(frozen=True)
class SaConfig:
    schedule: StepSchedule
    steps_M: int
    theta0: float | np.ndarray
    freeze: FreezePolicy | None = None
    record_trajectory: bool = False
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.steps_M < 0:
            raise ValueError(f"steps_M must be >= 0, got {self.steps_M}")
        if not np.all(np.isfinite(self.theta0)):
            raise ValueError("theta0 must be finite")


@dataclass
class SaRun:
    final_theta: float | np.ndarray
    averaged_theta: float | np.ndarray | None
    cost_h_evals: int
    cost_euler_substeps: int
    frozen_steps: int
    trajectory: np.ndarray | None = None
    checkpoint_thetas: dict[int, float | np.ndarray] = field(default_factory=dict)


def apply_freeze(theta_prev, theta_next, p: int, policy: FreezePolicy, M: int):
    """Accept or reject one proposed move under the burn-in policy."""
    if p < 1:
        raise ValueError(f"freeze threshold needs p >= 1, got {p}")
    if p > policy.burn_fraction * M:
        return theta_next
    delta = np.linalg.norm(np.atleast_1d(np.asarray(theta_next - theta_prev)))
    if delta > policy.K / math.sqrt(p):
        return theta_prev
    return theta_next


def run_sa(
    sampler,
    H: Callable,
    config: SaConfig,
    stream: RngStream,
    *,
    sub: int = 0,
    average: bool = False,
) -> SaRun:
    """Iterate theta_{p+1} = theta_p - gamma_{p+1} H(theta_p, U^{p+1}).

    One innovation is consumed per step; a freeze rejection still consumes
    its innovation and cost.  With average=True the running mean
    theta_bar_p = mean(theta_0..theta_p) is maintained alongside.
    """
    schedule = config.schedule
    M = config.steps_M
    theta = (
        float(config.theta0)
        if np.isscalar(config.theta0)
        else np.array(config.theta0, dtype=np.float64)
    )
    scalar = np.isscalar(theta)
    theta_bar = theta if scalar else theta.copy()
    policy = config.freeze
    burn_limit = int(policy.burn_fraction * M) if policy is not None else 0
    gen = stream.generator(sub)
    cost_unit = sampler.cost_per_draw
    block_cap = _block_cap(M, cost_unit)
    trajectory = [theta] if config.record_trajectory else None
    checkpoints = {}
    if 0 in config.checkpoints:
        checkpoints[0] = theta
    is_finite = math.isfinite if scalar else lambda t: bool(np.all(np.isfinite(t)))
    frozen = 0
    p = 0
    while p < M:
        count = min(block_cap, M - p)
        innovations = sampler.sample_block(count, gen)
        gammas = schedule.gamma_block(p, count)
        for j in range(count):
            proposal = theta - gammas[j] * H(theta, innovations[j])
            if policy is not None and p <= burn_limit:
                thr = policy.K / math.sqrt(p if p >= 1 else 1)
                delta = (abs(proposal - theta) if scalar
                         else float(np.linalg.norm(proposal - theta)))
                if delta > thr:
                    frozen += 1
                else:
                    theta = proposal
            else:
                theta = proposal
            p += 1
            if not is_finite(theta):
                raise NumericalAbort(
                    f"non-finite iterate at step {p}: theta={theta!r}"
                )
            if average:
                theta_bar = theta_bar - (theta_bar - theta) / (p + 1)
            if trajectory is not None:
                trajectory.append(theta)
            if p in config.checkpoints:
                checkpoints[p] = theta
    return SaRun(
        final_theta=theta,
        averaged_theta=theta_bar if average else None,
        cost_h_evals=M,
        cost_euler_substeps=M * cost_unit,
        frozen_steps=frozen,
        trajectory=np.asarray(trajectory) if trajectory is not None else None,
        checkpoint_thetas=checkpoints,
    )


def run_sa_averaged(
    sampler, H: Callable, config: SaConfig, stream: RngStream, *, sub: int = 0
) -> SaRun:
    """Averaged variant; requires the slow-decay regime a in (1/2, 1)."""
    if config.schedule.exponent_a >= 1.0:
        raise ConfigurationError(
            "iterate averaging requires a decay exponent in (1/2, 1); "
            f"got a={config.schedule.exponent_a}"
        )
    return run_sa(sampler, H, config, stream, sub=sub, average=True)


def run_coupled_sa(
    coupled_sampler,
    H: Callable,
    config: SaConfig,
    stream: RngStream,
    *,
    sub: int = 0,
    average: bool = False,
) -> tuple[SaRun, SaRun]:
    """Two chains driven by the fine / coarse members of coupled draws.

    Returns (fine_run, coarse_run).  The freeze policy, when present, is
    applied to each chain independently.
    """
    schedule = config.schedule
    M = config.steps_M
    theta_f = float(config.theta0) if np.isscalar(config.theta0) else np.array(
        config.theta0, dtype=np.float64
    )
    theta_c = theta_f if np.isscalar(theta_f) else theta_f.copy()
    bar_f, bar_c = theta_f, theta_c
    policy = config.freeze
    burn_limit = int(policy.burn_fraction * M) if policy is not None else 0
    gen = stream.generator(sub)
    cost_unit = coupled_sampler.cost_per_draw
    block_cap = _block_cap(M, cost_unit)
    frozen_f = frozen_c = 0
    p = 0
    while p < M:
        count = min(block_cap, M - p)
        coarse_u, fine_u = coupled_sampler.sample_block(count, gen)
        gammas = schedule.gamma_block(p, count)
        for j in range(count):
            prop_f = theta_f - gammas[j] * H(theta_f, fine_u[j])
            prop_c = theta_c - gammas[j] * H(theta_c, coarse_u[j])
            if policy is not None and p <= burn_limit:
                thr = policy.K / math.sqrt(p if p >= 1 else 1)
                if np.linalg.norm(np.atleast_1d(prop_f - theta_f)) > thr:
                    frozen_f += 1
                else:
                    theta_f = prop_f
                if np.linalg.norm(np.atleast_1d(prop_c - theta_c)) > thr:
                    frozen_c += 1
                else:
                    theta_c = prop_c
            else:
                theta_f, theta_c = prop_f, prop_c
            p += 1
            if not (np.all(np.isfinite(theta_f)) and np.all(np.isfinite(theta_c))):
                raise NumericalAbort(
                    f"non-finite iterate at step {p}: "
                    f"fine={theta_f!r} coarse={theta_c!r}"
                )
            if average:
                bar_f = bar_f - (bar_f - theta_f) / (p + 1)
                bar_c = bar_c - (bar_c - theta_c) / (p + 1)
    fine_run = SaRun(theta_f, bar_f if average else None, M,
                     M * coupled_sampler.n_fine, frozen_f)
    coarse_run = SaRun(theta_c, bar_c if average else None, M,
                       M * coupled_sampler.n_coarse, frozen_c)
    return fine_run, coarse_run


@dataclass
class SaBatch:
    """Results of R independent scalar chains run in lockstep."""

    final: np.ndarray
    averaged: np.ndarray | None
    frozen_steps: np.ndarray
    cost_h_evals: int
    cost_euler_substeps: int
    checkpoint_thetas: dict[int, np.ndarray] = field(default_factory=dict)


def _batch_theta0(theta0, chains: int) -> np.ndarray:
    arr = np.asarray(theta0, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(chains, float(arr))
    if arr.shape != (chains,):
        raise ValueError(f"theta0 shape {arr.shape} does not match {chains} chains")
    return arr.copy()


def run_sa_batch(
    sampler,
    H: Callable,
    config: SaConfig,
    streams: Sequence[RngStream],
    *,
    sub: int = 0,
    average: bool = False,
    theta0_override: np.ndarray | None = None,
) -> SaBatch:
    """Lockstep version of :func:`run_sa` over independent scalar chains.

    Chain r consumes exactly the innovation sequence of streams[r], so the
    result per chain is identical to a sequential run with that stream.
    H must broadcast over chain vectors.
    """
    schedule = config.schedule
    M = config.steps_M
    R = len(streams)
    theta = _batch_theta0(
        config.theta0 if theta0_override is None else theta0_override, R
    )
    theta_bar = theta.copy()
    policy = config.freeze
    burn_limit = int(policy.burn_fraction * M) if policy is not None else 0
    gens = [s.generator(sub) for s in streams]
    cost_unit = sampler.cost_per_draw
    block_cap = _block_cap(M, cost_unit, R)
    frozen = np.zeros(R, dtype=np.int64)
    checkpoints = {}
    if 0 in config.checkpoints:
        checkpoints[0] = theta.copy()
    buf = np.empty((block_cap, R))
    p = 0
    while p < M:
        count = min(block_cap, M - p)
        for r, g in enumerate(gens):
            buf[:count, r] = sampler.sample_block(count, g)
        gammas = schedule.gamma_block(p, count)
        for j in range(count):
            proposal = theta - gammas[j] * H(theta, buf[j])
            if policy is not None and p <= burn_limit:
                thr = policy.K / math.sqrt(p if p >= 1 else 1)
                reject = np.abs(proposal - theta) > thr
                frozen += reject
                theta = np.where(reject, theta, proposal)
            else:
                theta = proposal
            p += 1
            if average:
                theta_bar -= (theta_bar - theta) / (p + 1)
            if p in config.checkpoints:
                checkpoints[p] = theta.copy()
        if not np.all(np.isfinite(theta)):
            bad = int(np.flatnonzero(~np.isfinite(theta))[0])
            raise NumericalAbort(
                f"non-finite iterate in chain {bad} by step {p}: "
                f"theta={theta[bad]!r}"
            )
    return SaBatch(
        final=theta,
        averaged=theta_bar if average else None,
        frozen_steps=frozen,
        cost_h_evals=M,
        cost_euler_substeps=M * cost_unit,
        checkpoint_thetas=checkpoints,
    )


@dataclass
class CoupledBatch:
    final_fine: np.ndarray
    final_coarse: np.ndarray
    averaged_fine: np.ndarray | None
    averaged_coarse: np.ndarray | None
    frozen_fine: np.ndarray
    frozen_coarse: np.ndarray
    cost_h_evals: int
    cost_euler_substeps: int


def run_coupled_sa_batch(
    coupled_sampler,
    H: Callable,
    config: SaConfig,
    streams: Sequence[RngStream],
    *,
    sub: int = 0,
    average: bool = False,
    theta0_override: np.ndarray | None = None,
) -> CoupledBatch:
    """Lockstep version of :func:`run_coupled_sa`."""
    schedule = config.schedule
    M = config.steps_M
    R = len(streams)
    theta_f = _batch_theta0(
        config.theta0 if theta0_override is None else theta0_override, R
    )
    theta_c = theta_f.copy()
    bar_f = theta_f.copy()
    bar_c = theta_c.copy()
    policy = config.freeze
    burn_limit = int(policy.burn_fraction * M) if policy is not None else 0
    gens = [s.generator(sub) for s in streams]
    cost_unit = coupled_sampler.cost_per_draw
    block_cap = _block_cap(M, cost_unit, R)
    frozen_f = np.zeros(R, dtype=np.int64)
    frozen_c = np.zeros(R, dtype=np.int64)
    buf_c = np.empty((block_cap, R))
    buf_f = np.empty((block_cap, R))
    p = 0
    while p < M:
        count = min(block_cap, M - p)
        for r, g in enumerate(gens):
            coarse_u, fine_u = coupled_sampler.sample_block(count, g)
            buf_c[:count, r] = coarse_u
            buf_f[:count, r] = fine_u
        gammas = schedule.gamma_block(p, count)
        for j in range(count):
            prop_f = theta_f - gammas[j] * H(theta_f, buf_f[j])
            prop_c = theta_c - gammas[j] * H(theta_c, buf_c[j])
            if policy is not None and p <= burn_limit:
                thr = policy.K / math.sqrt(p if p >= 1 else 1)
                rej_f = np.abs(prop_f - theta_f) > thr
                rej_c = np.abs(prop_c - theta_c) > thr
                frozen_f += rej_f
                frozen_c += rej_c
                theta_f = np.where(rej_f, theta_f, prop_f)
                theta_c = np.where(rej_c, theta_c, prop_c)
            else:
                theta_f, theta_c = prop_f, prop_c
            p += 1
            if average:
                bar_f -= (bar_f - theta_f) / (p + 1)
                bar_c -= (bar_c - theta_c) / (p + 1)
        if not (np.all(np.isfinite(theta_f)) and np.all(np.isfinite(theta_c))):
            raise NumericalAbort(f"non-finite iterate by step {p}")
    return CoupledBatch(
        final_fine=theta_f,
        final_coarse=theta_c,
        averaged_fine=bar_f if average else None,
        averaged_coarse=bar_c if average else None,
        frozen_fine=frozen_f,
        frozen_coarse=frozen_c,
        cost_h_evals=M,
        cost_euler_substeps=M * cost_unit,
    )
