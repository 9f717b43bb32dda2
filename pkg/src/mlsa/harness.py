"""Benchmark experiments over seeded parallel replications.

Replication r of an experiment always consumes RngStream(seed, r') where
r' is a deterministic function of r (and of the position of n in the
grid), so results are byte-identical whatever the worker count; workers
only chunk the replication range.  The worker count is capped by the
MLSA_THREADS environment variable.
"""
from __future__ import annotations

import csv
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .engine import FreezePolicy, SaConfig, run_sa_batch
from .errors import ConfigurationError
from .estimators import (
    BatchEstimates,
    RootProblem,
    beta_star,
    complexity_ml,
    complexity_sa,
    complexity_sr,
    ml_allocation,
    ml_estimator_batch,
    sa_estimator_batch,
    sa_rp_estimator_batch,
    sr_estimator_batch,
    sr_rp_estimator_batch,
)
from .problems import (
    CallLevelProblem,
    QuantileProblem,
    bs_call,
    call_level_H,
    problem_metadata,
)
from .rng import RngStream
from .sde import GbmModel, strong_error_mse
from .steps import StepSchedule
from .svgplot import write_scatter_svg

EXPERIMENTS = ("weak-error", "histogram", "frontier", "m-sweep", "strong-rate")
METHODS = ("sa", "sa-rp", "sr", "sr-rp", "ml")

# Stream ids are partitioned per grid position: replication r of the
# i-th grid entry uses stream_id = i * _STREAM_STRIDE + r, and auxiliary
# Monte Carlo draws sit above _AUX_STREAM_BASE.
_STREAM_STRIDE = 1 << 24
_AUX_STREAM_BASE = 1 << 48


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    problem: str = "quantile"
    n_grid: tuple[int, ...] = (16, 32, 64)
    reps_N: int = 100
    method: str = "sa"
    m: int = 4
    gamma0: float = 200.0
    exponent_a: float = 1.0
    beta: float | str = "auto"
    seed: int = 20240901
    out_dir: str = "out"
    warm_start: bool = True
    freeze: bool = True
    # model and problem parameters (paper-style defaults)
    x0: float = 100.0
    rate_r: float = 0.05
    sigma: float = 0.4
    horizon: float = 1.0
    level_l: float = 0.7
    call_target: float = 100.0
    # experiment-specific knobs not exposed on the CLI
    weak_steps: int = 1_000_000
    target_lo: float = 90.0
    target_hi: float = 110.0
    m_sweep_range: tuple[int, ...] = (2, 3, 4, 5, 6, 7)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}"
            )
        if self.problem not in ("quantile", "call-level"):
            raise ConfigurationError(
                f"unknown problem {self.problem!r}; choose quantile or call-level"
            )
        if not self.n_grid:
            raise ConfigurationError("n_grid must not be empty")
        if any(n < 1 for n in self.n_grid):
            raise ConfigurationError(f"bias parameters must be >= 1: {self.n_grid}")
        if self.reps_N < 1:
            raise ConfigurationError(f"reps_N must be >= 1, got {self.reps_N}")
        if not 2 <= self.m <= 12:
            raise ConfigurationError(
                f"multi-level base m must lie in 2..12, got {self.m}"
            )
        for meth in self.methods():
            if meth not in METHODS:
                raise ConfigurationError(
                    f"unknown method {meth!r}; choose from {METHODS}"
                )

    def methods(self) -> tuple[str, ...]:
        return tuple(t.strip() for t in self.method.split(",") if t.strip())

    def model(self) -> GbmModel:
        return GbmModel(self.x0, self.rate_r, self.sigma, self.horizon)

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.gamma0, self.exponent_a)

    def freeze_policy(self) -> FreezePolicy | None:
        return FreezePolicy() if self.freeze else None

    def root_problem(self) -> RootProblem:
        model = self.model()
        if self.problem == "quantile":
            return problem_metadata(QuantileProblem(model, self.level_l))
        level = bs_call(model, self.call_target)
        return problem_metadata(CallLevelProblem(model, level))

    def resolve_beta(self, problem: RootProblem) -> float:
        if self.beta == "auto":
            return beta_star(problem.strong_order_rho)
        return float(self.beta)


def default_workers() -> int:
    env = os.environ.get("MLSA_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"MLSA_THREADS must be an integer: {env!r}") from exc
        if value < 1:
            raise ConfigurationError(f"MLSA_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def rep_chunks(total: int, workers: int) -> list[tuple[int, int]]:
    """Split range(total) into at most ``workers`` contiguous chunks."""
    parts = min(max(1, workers), total)
    bounds = np.linspace(0, total, parts + 1, dtype=int)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def parallel_map(fn, tasks: list, workers: int | None = None) -> list:
    """Order-preserving map over tasks, forked when it pays off."""
    count = default_workers() if workers is None else workers
    if count <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(min(count, len(tasks))) as pool:
        return pool.map(fn, tasks)


def _rep_streams(config: ExperimentConfig, grid_index: int, lo: int, hi: int
                 ) -> list[RngStream]:
    base = grid_index * _STREAM_STRIDE
    return [RngStream(config.seed, base + r) for r in range(lo, hi)]


def _run_method_batch(
    config: ExperimentConfig,
    problem: RootProblem,
    method: str,
    n: int,
    streams: list[RngStream],
    theta0=None,
) -> BatchEstimates:
    schedule = config.schedule()
    freeze = config.freeze_policy()
    if method == "sa":
        return sa_estimator_batch(problem, n, schedule, streams,
                                  freeze=freeze, theta0=theta0)
    if method == "sa-rp":
        return sa_rp_estimator_batch(problem, n, schedule, streams,
                                     freeze=freeze, theta0=theta0)
    beta = config.resolve_beta(problem)
    if method == "sr":
        return sr_estimator_batch(problem, n, beta, schedule, streams,
                                  freeze=freeze, warm_start=config.warm_start,
                                  theta0=theta0)
    if method == "sr-rp":
        return sr_rp_estimator_batch(problem, n, beta, schedule, streams,
                                     freeze=freeze, warm_start=config.warm_start,
                                     theta0=theta0)
    if method == "ml":
        allocation = ml_allocation(n, config.m, schedule,
                                   problem.weak_order_alpha,
                                   problem.strong_order_rho)
        return ml_estimator_batch(problem, allocation, schedule, streams,
                                  freeze=freeze, warm_start=config.warm_start,
                                  theta0=theta0)
    raise ConfigurationError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# histogram


@dataclass
class HistogramResult:
    n: int
    method: str
    errors: np.ndarray          # n * (estimate - theta_star) per replication
    zscores: np.ndarray
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    ks_stat: float
    warning: str | None = None


def _histogram_chunk(task) -> np.ndarray:
    config, n, lo, hi = task
    problem = config.root_problem()
    out = _run_method_batch(config, problem, config.methods()[0], n,
                            _rep_streams(config, 0, lo, hi))
    return out.estimates


def ks_statistic(zscores: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal."""
    z = np.sort(np.asarray(zscores, dtype=np.float64))
    n = z.size
    cdf = 0.5 * np.array([math.erfc(-v / math.sqrt(2.0)) for v in z])
    upper = np.max(np.arange(1, n + 1) / n - cdf)
    lower = np.max(cdf - np.arange(0, n) / n)
    return float(max(upper, lower))


def run_histogram(config: ExperimentConfig, workers: int | None = None
                  ) -> HistogramResult:
    """Standardized error sample of one estimator at one bias parameter."""
    n = config.n_grid[0]
    problem = config.root_problem()
    theta_star = problem.exact_theta_star
    tasks = [(config, n, lo, hi)
             for lo, hi in rep_chunks(config.reps_N, workers or default_workers())]
    estimates = np.concatenate(parallel_map(_histogram_chunk, tasks, workers))
    errors = n * (estimates - theta_star)
    mean = float(np.mean(errors))
    sd = float(np.std(errors, ddof=1)) if errors.size > 1 else 0.0
    warning = None
    if errors.size < 8:
        warning = "sample too small for a moment summary"
    if sd == 0.0:
        warning = "degenerate sample: zero variance, normality test rejected"
        zscores = np.zeros_like(errors)
        skew = kurt = 0.0
        ks = 1.0
    else:
        zscores = (errors - mean) / sd
        skew = float(np.mean(zscores**3))
        kurt = float(np.mean(zscores**4) - 3.0)
        ks = ks_statistic(zscores)
    return HistogramResult(n, config.methods()[0], errors, zscores, mean, sd,
                           skew, kurt, ks, warning)


# ---------------------------------------------------------------------------
# weak error


@dataclass
class WeakErrorRow:
    n: int
    nh: float                  # n * MC estimate of h^n(theta*)
    ntheta: float              # n * (theta_hat^{*,n} - theta*)
    se_h: float
    se_theta: float
    theta_hat: float


def _weak_sa_chunk(task) -> np.ndarray:
    config, n, grid_index, lo, hi = task
    problem = config.root_problem()
    schedule = config.schedule()
    cfg = SaConfig(schedule, config.weak_steps, problem.theta0,
                   freeze=config.freeze_policy())
    out = run_sa_batch(problem.make_sampler(n), problem.H, cfg,
                       _rep_streams(config, grid_index, lo, hi))
    return out.final


def _field_mean_at_root(config: ExperimentConfig, problem: RootProblem, n: int,
                        grid_index: int) -> tuple[float, float]:
    """Monte Carlo mean and standard error of H(theta*, U^n)."""
    sampler = problem.make_sampler(n)
    gen = RngStream(config.seed, _AUX_STREAM_BASE + grid_index).generator()
    total = 0.0
    total_sq = 0.0
    done = 0
    samples = config.weak_steps
    while done < samples:
        count = min(1 << 16, samples - done)
        values = problem.H(problem.exact_theta_star, sampler.sample_block(count, gen))
        total += float(np.sum(values))
        total_sq += float(np.dot(values, values))
        done += count
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


def run_weak_error(config: ExperimentConfig, workers: int | None = None
                   ) -> list[WeakErrorRow]:
    """Implicit and standard weak error at the exact root, per bias n.

    h^n(theta*) is a plain Monte Carlo mean; theta^{*,n} is the average
    of reps_N independent bias-n recursions of ``weak_steps`` steps.
    """
    problem = config.root_problem()
    theta_star = problem.exact_theta_star
    if theta_star is None:
        raise ConfigurationError("weak-error experiment needs an exact root")
    rows = []
    for grid_index, n in enumerate(config.n_grid):
        h_mean, h_se = _field_mean_at_root(config, problem, n, grid_index)
        tasks = [(config, n, grid_index, lo, hi)
                 for lo, hi in rep_chunks(config.reps_N,
                                          workers or default_workers())]
        finals = np.concatenate(parallel_map(_weak_sa_chunk, tasks, workers))
        theta_hat = float(np.mean(finals))
        se_theta = (float(np.std(finals, ddof=1)) / math.sqrt(finals.size)
                    if finals.size > 1 else float("nan"))
        rows.append(WeakErrorRow(
            n=n,
            nh=n * h_mean,
            ntheta=n * (theta_hat - theta_star),
            se_h=n * h_se,
            se_theta=n * se_theta,
            theta_hat=theta_hat,
        ))
    return rows


# ---------------------------------------------------------------------------
# frontier


@dataclass
class FrontierPoint:
    method: str
    n: int
    rmse: float
    complexity: float
    measured_cost: int
    wall_seconds: float


@dataclass(frozen=True)
class _CallSweepField:
    """Vector field for a per-chain sweep of call levels."""

    levels: np.ndarray
    discount: float

    def __call__(self, theta, x):
        return call_level_H(theta, x, self.levels, self.discount)


def _sweep_targets(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(config.target_lo, config.target_hi, config.reps_N)


def _sweep_problem(config: ExperimentConfig, targets: np.ndarray) -> RootProblem:
    model = config.model()
    levels = np.array([bs_call(model, t) for t in targets])
    discount = math.exp(-model.r * model.horizon_T)
    # A single mean-reversion constant is not meaningful across the
    # target sweep, so the sufficient gain conditions are not checked.
    return RootProblem(
        name="call-level-sweep",
        H=_CallSweepField(levels, discount),
        model=model,
        exact_theta_star=None,
        weak_order_alpha=1.0,
        strong_order_rho=0.5,
        mean_reversion_lambda=None,
        theta0=model.x0,
    )


def _frontier_chunk(task) -> tuple[np.ndarray, int]:
    config, method, n, grid_index, lo, hi = task
    targets = _sweep_targets(config)[lo:hi]
    problem = _sweep_problem(config, targets)
    out = _run_method_batch(config, problem, method, n,
                            _rep_streams(config, grid_index, lo, hi))
    return out.estimates, out.total_cost


def _formula_complexity(config: ExperimentConfig, problem: RootProblem,
                        method: str, n: int) -> float:
    schedule = config.schedule()
    alpha, rho = problem.weak_order_alpha, problem.strong_order_rho
    if method == "sa":
        return complexity_sa(n, alpha, schedule)
    if method == "sa-rp":
        return n * float(n) ** (2.0 * alpha)
    beta = config.resolve_beta(problem)
    nb = float(n) ** beta
    if method == "sr":
        return complexity_sr(n, alpha, rho, beta, schedule)
    if method == "sr-rp":
        return nb * float(n) ** (2 * alpha) + (n + nb) * float(n) ** (
            2 * alpha - 2 * rho * beta
        )
    if method == "ml":
        return complexity_ml(
            ml_allocation(n, config.m, schedule, alpha, rho)
        )
    raise ConfigurationError(f"unknown method {method!r}")


def run_frontier(config: ExperimentConfig, workers: int | None = None
                 ) -> list[FrontierPoint]:
    """(RMSE, cost) frontier over a sweep of call-level targets."""
    if config.problem != "call-level":
        raise ConfigurationError(
            "the frontier experiment sweeps call-level targets; "
            f"got problem={config.problem!r}"
        )
    targets = _sweep_targets(config)
    probe = _sweep_problem(config, targets)
    points = []
    for method in config.methods():
        for grid_index, n in enumerate(config.n_grid):
            started = time.perf_counter()
            tasks = [(config, method, n, grid_index, lo, hi)
                     for lo, hi in rep_chunks(config.reps_N,
                                              workers or default_workers())]
            results = parallel_map(_frontier_chunk, tasks, workers)
            estimates = np.concatenate([r[0] for r in results])
            per_rep_cost = results[0][1]
            wall = time.perf_counter() - started
            errors = estimates - targets
            rmse = float(np.sqrt(np.mean(errors**2)))
            points.append(FrontierPoint(
                method=method.upper(),
                n=n,
                rmse=rmse,
                complexity=_formula_complexity(config, probe, method, n)
                * config.reps_N,
                measured_cost=per_rep_cost * config.reps_N,
                wall_seconds=wall,
            ))
    return points


# ---------------------------------------------------------------------------
# m sweep


@dataclass
class MSweepRow:
    m: int
    n_used: int
    L: int
    complexity: float
    rmse: float
    nearest_power: bool         # True when n_used != requested n


def nearest_power(n: int, m: int) -> int:
    """m^L closest to n in log scale, L >= 1."""
    L = max(1, round(math.log(n) / math.log(m)))
    return m**L


def _m_sweep_chunk(task) -> np.ndarray:
    config, m, n_used, grid_index, lo, hi = task
    problem = config.root_problem()
    out = _run_method_batch(replace(config, m=m), problem, "ml", n_used,
                            _rep_streams(config, grid_index, lo, hi))
    return out.estimates


def run_m_sweep(config: ExperimentConfig, workers: int | None = None
                ) -> list[MSweepRow]:
    """Measured RMSE and formula cost of the multi-level estimator per m."""
    n_target = config.n_grid[0]
    problem = config.root_problem()
    theta_star = problem.exact_theta_star
    schedule = config.schedule()
    rows = []
    for grid_index, m in enumerate(config.m_sweep_range):
        n_used = nearest_power(n_target, m)
        allocation = ml_allocation(n_used, m, schedule,
                                   problem.weak_order_alpha,
                                   problem.strong_order_rho)
        tasks = [(config, m, n_used, grid_index, lo, hi)
                 for lo, hi in rep_chunks(config.reps_N,
                                          workers or default_workers())]
        estimates = np.concatenate(parallel_map(_m_sweep_chunk, tasks, workers))
        rmse = float(np.sqrt(np.mean((estimates - theta_star) ** 2)))
        rows.append(MSweepRow(
            m=m,
            n_used=n_used,
            L=allocation.L,
            complexity=complexity_ml(allocation),
            rmse=rmse,
            nearest_power=n_used != n_target,
        ))
    return rows


# ---------------------------------------------------------------------------
# strong rate


@dataclass
class StrongRateRow:
    n: int
    mse: float


def _strong_rate_chunk(task) -> float:
    config, n, grid_index = task
    return strong_error_mse(config.model(), n, config.reps_N,
                            RngStream(config.seed, _AUX_STREAM_BASE + grid_index))


def run_strong_rate(config: ExperimentConfig, workers: int | None = None
                    ) -> list[StrongRateRow]:
    """E|X_T^n - X_T|^2 over the bias grid (reps_N paths per point)."""
    tasks = [(config, n, i) for i, n in enumerate(config.n_grid)]
    mses = parallel_map(_strong_rate_chunk, tasks, workers)
    return [StrongRateRow(n, mse) for n, mse in zip(config.n_grid, mses)]


def strong_rate_slope(rows: list[StrongRateRow]) -> float:
    xs = np.log([row.n for row in rows])
    ys = np.log([row.mse for row in rows])
    return float(np.polyfit(xs, ys, 1)[0])


# ---------------------------------------------------------------------------
# CSV output and dispatch


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def run_experiment(config: ExperimentConfig, workers: int | None = None):
    """Run one experiment and write <out>/<experiment>.csv (and .svg)."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{config.experiment}.csv"
    if config.experiment == "weak-error":
        rows = run_weak_error(config, workers)
        write_csv(csv_path, ["n", "nh", "ntheta", "se_h"],
                  [(r.n, r.nh, r.ntheta, r.se_h) for r in rows])
        return rows
    if config.experiment == "histogram":
        result = run_histogram(config, workers)
        write_csv(csv_path, ["rep", "error", "z"],
                  [(i, e, z) for i, (e, z)
                   in enumerate(zip(result.errors, result.zscores))])
        if result.warning:
            print(f"warning: {result.warning}")
        print(f"histogram n={result.n} method={result.method} "
              f"mean={result.mean:.6g} sd={result.sd:.6g} "
              f"skew={result.skewness:.4f} ex_kurt={result.excess_kurtosis:.4f} "
              f"ks={result.ks_stat:.4f}")
        return result
    if config.experiment == "frontier":
        points = run_frontier(config, workers)
        write_csv(csv_path,
                  ["method", "n", "rmse", "complexity", "measured_cost",
                   "wall_seconds"],
                  [(p.method, p.n, p.rmse, p.complexity, p.measured_cost,
                    p.wall_seconds) for p in points])
        series: dict[str, list[tuple[float, float]]] = {}
        for p in points:
            series.setdefault(p.method, []).append((p.rmse, float(p.measured_cost)))
        write_scatter_svg(out_dir / "frontier.svg", series, log_x=True,
                          log_y=True, xlabel="RMSE", ylabel="cost (Euler substeps)",
                          title="cost against accuracy")
        return points
    if config.experiment == "m-sweep":
        rows = run_m_sweep(config, workers)
        write_csv(csv_path,
                  ["m", "n_used", "L", "complexity", "rmse", "nearest_power"],
                  [(r.m, r.n_used, r.L, r.complexity, r.rmse, r.nearest_power)
                   for r in rows])
        for r in rows:
            if r.nearest_power:
                print(f"note: m={r.m} used nearest power n={r.n_used}")
        return rows
    if config.experiment == "strong-rate":
        rows = run_strong_rate(config, workers)
        write_csv(csv_path, ["n", "mse"], [(r.n, r.mse) for r in rows])
        if len(rows) > 1:
            print(f"strong-rate log-log slope: {strong_rate_slope(rows):.4f}")
        return rows
    raise ConfigurationError(f"unknown experiment {config.experiment!r}")
