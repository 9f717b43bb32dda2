import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlsa.rng import RngStream
from mlsa.sde import (
    CoupledTerminalSampler,
    EulerTerminalSampler,
    GbmModel,
    build_union_grid,
    coupled_increments,
    coupled_terminal,
    euler_terminal,
    exact_terminal,
    strong_error_mse,
)

PAPER = GbmModel(100.0, 0.05, 0.4, 1.0)


def test_model_guards():
    with pytest.raises(ValueError):
        GbmModel(0.0, 0.05, 0.4, 1.0)
    with pytest.raises(ValueError):
        GbmModel(100.0, 0.05, -0.1, 1.0)
    with pytest.raises(ValueError):
        GbmModel(100.0, 0.05, 0.4, 0.0)
    GbmModel(100.0, 0.05, 0.0, 1.0)  # degenerate diffusion is allowed


def test_exact_terminal_median():
    assert exact_terminal(PAPER, 0.0) == pytest.approx(100.0 * math.exp(-0.03))


def test_exact_terminal_monotone_in_z():
    zs = np.linspace(-4, 4, 50)
    vals = exact_terminal(PAPER, zs)
    assert np.all(np.diff(vals) > 0)


def test_exact_terminal_degenerate_sigma():
    model = GbmModel(100.0, 0.0, 1e-12, 1.0)
    assert exact_terminal(model, 3.0) == pytest.approx(100.0, rel=1e-9)


def test_euler_single_step_deterministic():
    model = GbmModel(50.0, 0.1, 0.3, 2.0)
    assert euler_terminal(model, 1, [0.0]) == pytest.approx(50.0 * (1 + 0.1 * 2.0))


def test_euler_sigma_zero_compounds():
    model = GbmModel(100.0, 0.05, 0.0, 1.0)
    n = 16
    got = euler_terminal(model, n, np.random.default_rng(0).normal(size=n))
    assert got == pytest.approx(100.0 * (1 + 0.05 / n) ** n)


def test_euler_rejects_length_mismatch():
    with pytest.raises(ValueError):
        euler_terminal(PAPER, 4, [0.1, 0.2])


def test_euler_mean_matches_lognormal_mean():
    # E[X_T^n] = x0 (1 + rT/n)^n for the Euler scheme; at n = 128 this is
    # within 3 standard errors of the exact mean x0 e^{rT} = 105.127.
    sampler = EulerTerminalSampler(PAPER, 128)
    vals = sampler.sample_block(100_000, RngStream(101).generator())
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 100.0 * math.exp(0.05)) < 3 * se + 0.01


def test_union_grid_divisible_is_fine_grid():
    grid = build_union_grid(4, 16, 1.0)
    assert grid.n_cells == 16
    assert np.allclose(grid.cell_dt, 1.0 / 16)


def test_union_grid_non_divisible():
    grid = build_union_grid(6, 16, 1.0)
    # lcm = 48; union of multiples of 8 and of 3 below 48
    assert grid.n_cells == 20
    assert grid.cell_dt.sum() == pytest.approx(1.0)


def test_union_grid_rejects_bad_order():
    with pytest.raises(ValueError):
        build_union_grid(8, 4, 1.0)


@given(n_coarse=st.integers(1, 64), mult=st.integers(1, 8), seed=st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_coarse_increments_sum_fine(n_coarse, mult, seed):
    n_fine = n_coarse * mult
    grid = build_union_grid(n_coarse, n_fine, 1.0)
    dw_c, dw_f, w_t = coupled_increments(grid, 4, np.random.default_rng(seed))
    regrouped = dw_f.reshape(4, n_coarse, mult).sum(axis=2)
    assert np.allclose(dw_c, regrouped, rtol=1e-12, atol=1e-14)
    assert np.allclose(dw_c.sum(axis=1), w_t, rtol=1e-12, atol=1e-14)


def test_coupled_increment_aggregation_non_divisible():
    grid = build_union_grid(6, 16, 1.0)
    dw_c, dw_f, w_t = coupled_increments(grid, 8, np.random.default_rng(5))
    assert np.allclose(dw_c.sum(axis=1), w_t, rtol=1e-12, atol=1e-14)
    assert np.allclose(dw_f.sum(axis=1), w_t, rtol=1e-12, atol=1e-14)


def test_coupled_terminal_identical_grids_match():
    sample = coupled_terminal(PAPER, 8, 8, RngStream(7))
    assert sample.coarse == sample.fine


def test_coupled_terminal_determinism():
    a = coupled_terminal(PAPER, 4, 16, RngStream(1234, 5))
    b = coupled_terminal(PAPER, 4, 16, RngStream(1234, 5))
    assert (a.coarse, a.fine, a.exact) == (b.coarse, b.fine, b.exact)
    c = coupled_terminal(PAPER, 4, 16, RngStream(1234, 6))
    assert c.fine != a.fine


def test_coupled_sampler_high_correlation():
    sampler = CoupledTerminalSampler(PAPER, 4, 16)
    coarse, fine = sampler.sample_block(100_000, RngStream(11).generator())
    assert np.corrcoef(coarse, fine)[0, 1] > 0.99


def test_exact_terminal_log_moments():
    sampler = CoupledTerminalSampler(PAPER, 2, 4)
    _, _, exact = sampler.sample_block_with_exact(1_000_000, RngStream(13).generator())
    logs = np.log(exact / 100.0)
    se = logs.std(ddof=1) / math.sqrt(logs.size)
    assert abs(logs.mean() - PAPER.log_mean) < 4 * se
    assert logs.std(ddof=1) == pytest.approx(0.4, rel=0.01)


def test_strong_error_sigma_zero_closed_form():
    model = GbmModel(100.0, 0.05, 0.0, 1.0)
    n = 8
    expected = (100.0 * (1 + 0.05 / n) ** n - 100.0 * math.exp(0.05)) ** 2
    got = strong_error_mse(model, n, 100, RngStream(3))
    assert got == pytest.approx(expected, rel=1e-12)


def test_strong_error_halves_with_n():
    mse_n = strong_error_mse(PAPER, 16, 100_000, RngStream(21, 0))
    mse_2n = strong_error_mse(PAPER, 32, 100_000, RngStream(21, 1))
    assert 0.3 < mse_2n / mse_n < 0.8
