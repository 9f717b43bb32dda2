"""Geometric Brownian motion terminal sampling, exact and Euler, single
resolution or coupled across two resolutions.

Coupling works on the union of the two time grids: Gaussian increments are
drawn on the union cells and aggregated to each scheme's own grid, so a
coarse increment is exactly the sum of the union increments it covers.
This gives the exact joint law for any pair of step counts, whether or not
one divides the other, and the exact terminal value comes for free from
the total displacement of the same path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream


@dataclass(frozen=True)
class GbmModel:
    """dX = r X dt + sigma X dW on [0, T], started at x0.

    sigma = 0 is allowed and gives the deterministic compounding limit,
    which several degenerate checks rely on.
    """

    x0: float
    r: float
    sigma: float
    horizon_T: float

    def __post_init__(self) -> None:
        if not self.x0 > 0.0:
            raise ValueError(f"x0 must be positive, got {self.x0}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.horizon_T > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon_T}")

    @property
    def log_mean(self) -> float:
        """Mean of log(X_T / x0)."""
        return (self.r - 0.5 * self.sigma**2) * self.horizon_T

    @property
    def log_sd(self) -> float:
        """Standard deviation of log(X_T / x0)."""
        return self.sigma * math.sqrt(self.horizon_T)


@dataclass(frozen=True)
class CoupledTerminalSample:
    """Terminal values of two Euler resolutions and the exact terminal,
    all driven by one Brownian path."""

    coarse: float
    fine: float
    exact: float
    n_coarse: int
    n_fine: int


def exact_terminal(model: GbmModel, z):
    """Exact lognormal terminal value from a standard normal draw z."""
    return model.x0 * np.exp(model.log_mean + model.log_sd * z)


def euler_terminal(model: GbmModel, n: int, increments) -> float:
    """Terminal value of the n-step Euler scheme given Brownian increments.

    Applies X_{i+1} = X_i * (1 + r*dt + sigma*dW_i) with dt = T/n.
    """
    if n < 1:
        raise ValueError(f"step count must be >= 1, got {n}")
    dw = np.asarray(increments, dtype=np.float64)
    if dw.shape != (n,):
        raise ValueError(f"expected {n} increments, got shape {dw.shape}")
    dt = model.horizon_T / n
    return float(model.x0 * np.prod(1.0 + model.r * dt + model.sigma * dw))


def _euler_terminal_block(model: GbmModel, n: int, dw: np.ndarray) -> np.ndarray:
    """Vectorized Euler terminals; dw has shape (count, n)."""
    dt = model.horizon_T / n
    factors = model.sigma * dw
    factors += 1.0 + model.r * dt
    return model.x0 * np.prod(factors, axis=-1)


@dataclass(frozen=True)
class UnionGrid:
    """Union of the coarse and fine uniform grids on [0, T].

    Cell boundaries are represented as integer multiples of T / lcm so
    shared grid points dedupe exactly. ``coarse_starts``/``fine_starts``
    are reduceat offsets mapping union cells to each scheme's own cells.
    """

    n_coarse: int
    n_fine: int
    cell_dt: np.ndarray
    coarse_starts: np.ndarray
    fine_starts: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.cell_dt.shape[0]


def build_union_grid(n_coarse: int, n_fine: int, horizon_T: float) -> UnionGrid:
    if not 1 <= n_coarse <= n_fine:
        raise ValueError(
            f"need 1 <= n_coarse <= n_fine, got ({n_coarse}, {n_fine})"
        )
    lcm = math.lcm(n_coarse, n_fine)
    pts_c = np.arange(n_coarse + 1, dtype=np.int64) * (lcm // n_coarse)
    pts_f = np.arange(n_fine + 1, dtype=np.int64) * (lcm // n_fine)
    union = np.union1d(pts_c, pts_f)
    cell_dt = np.diff(union) * (horizon_T / lcm)
    coarse_starts = np.searchsorted(union[:-1], pts_c[:-1])
    fine_starts = np.searchsorted(union[:-1], pts_f[:-1])
    return UnionGrid(n_coarse, n_fine, cell_dt, coarse_starts, fine_starts)


def coupled_increments(
    grid: UnionGrid, count: int, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``count`` Brownian paths on the union grid.

    Returns (coarse increments (count, n_coarse), fine increments
    (count, n_fine), total displacement W_T (count,)).  Each scheme
    increment is the exact sum of the union-cell increments it covers.
    """
    cells = gen.standard_normal((count, grid.n_cells))
    cells *= np.sqrt(grid.cell_dt)
    dw_coarse = np.add.reduceat(cells, grid.coarse_starts, axis=-1)
    dw_fine = np.add.reduceat(cells, grid.fine_starts, axis=-1)
    w_total = np.add.reduce(cells, axis=-1)
    return dw_coarse, dw_fine, w_total


def coupled_terminal(
    model: GbmModel, n_coarse: int, n_fine: int, rng: RngStream
) -> CoupledTerminalSample:
    """One coupled draw of (coarse Euler, fine Euler, exact) terminals."""
    grid = build_union_grid(n_coarse, n_fine, model.horizon_T)
    dw_c, dw_f, w_t = coupled_increments(grid, 1, rng.generator())
    coarse = _euler_terminal_block(model, n_coarse, dw_c)[0]
    fine = _euler_terminal_block(model, n_fine, dw_f)[0]
    if model.sigma > 0.0:
        exact = float(exact_terminal(model, w_t[0] / math.sqrt(model.horizon_T)))
    else:
        exact = float(model.x0 * math.exp(model.r * model.horizon_T))
    return CoupledTerminalSample(float(coarse), float(fine), exact, n_coarse, n_fine)


@dataclass(frozen=True)
class EulerTerminalSampler:
    """Block sampler of i.i.d. n-step Euler terminal values."""

    model: GbmModel
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"step count must be >= 1, got {self.n}")

    @property
    def cost_per_draw(self) -> int:
        return self.n

    def sample_block(self, count: int, gen: np.random.Generator) -> np.ndarray:
        dt = self.model.horizon_T / self.n
        dw = gen.standard_normal((count, self.n))
        dw *= math.sqrt(dt)
        return _euler_terminal_block(self.model, self.n, dw)


@dataclass(frozen=True)
class ExactTerminalSampler:
    """Block sampler of exact lognormal terminal values (zero bias)."""

    model: GbmModel

    @property
    def cost_per_draw(self) -> int:
        return 1

    def sample_block(self, count: int, gen: np.random.Generator) -> np.ndarray:
        return exact_terminal(self.model, gen.standard_normal(count))


class CoupledTerminalSampler:
    """Block sampler of coupled (coarse, fine) Euler terminal pairs."""

    def __init__(self, model: GbmModel, n_coarse: int, n_fine: int) -> None:
        self.model = model
        self.n_coarse = n_coarse
        self.n_fine = n_fine
        self.grid = build_union_grid(n_coarse, n_fine, model.horizon_T)

    @property
    def cost_per_draw(self) -> int:
        return self.n_coarse + self.n_fine

    def sample_block(
        self, count: int, gen: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        dw_c, dw_f, _ = coupled_increments(self.grid, count, gen)
        coarse = _euler_terminal_block(self.model, self.n_coarse, dw_c)
        fine = _euler_terminal_block(self.model, self.n_fine, dw_f)
        return coarse, fine

    def sample_block_with_exact(
        self, count: int, gen: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dw_c, dw_f, w_t = coupled_increments(self.grid, count, gen)
        coarse = _euler_terminal_block(self.model, self.n_coarse, dw_c)
        fine = _euler_terminal_block(self.model, self.n_fine, dw_f)
        if self.model.sigma > 0.0:
            exact = exact_terminal(
                self.model, w_t / math.sqrt(self.model.horizon_T)
            )
        else:
            exact = np.full(
                count, self.model.x0 * math.exp(self.model.r * self.model.horizon_T)
            )
        return coarse, fine, exact


def strong_error_mse(
    model: GbmModel, n: int, paths: int, rng: RngStream, block: int = 65536
) -> float:
    """Monte Carlo estimate of E|X_T^n - X_T|^2 with exact/Euler coupling."""
    if paths < 1:
        raise ValueError(f"need at least one path, got {paths}")
    sampler = CoupledTerminalSampler(model, n, n)
    gen = rng.generator()
    total = 0.0
    done = 0
    while done < paths:
        count = min(block, paths - done)
        _, fine, exact = sampler.sample_block_with_exact(count, gen)
        diff = fine - exact
        total += float(np.dot(diff, diff))
        done += count
    return total / paths
