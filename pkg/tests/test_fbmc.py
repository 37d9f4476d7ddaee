"""Prototype filter and OQAM modem tests, anchored on direct-summation oracles."""

import numpy as np
import pytest

from fbmc_mimo import analyze, design_phydyas, stream_length, synthesize


def direct_synthesize(grid, filt):
    """Brute-force superposition of every (m, n) pulse, absolute-time phases."""
    M = filt.m_subcarriers
    half = M // 2
    n_sym = grid.shape[1]
    out = np.zeros(stream_length(n_sym, filt), dtype=complex)
    u = np.arange(filt.n_taps)
    for m in range(M):
        for n in range(n_sym):
            if grid[m, n] == 0:
                continue
            start = n * half
            pulse = (filt.taps
                     * np.exp(2j * np.pi * m * (u + start) / M)
                     * np.exp(1j * np.pi * (m + n) / 2))
            out[start:start + filt.n_taps] += grid[m, n] * pulse
    return out


def direct_analyze(stream, filt, n_symbols):
    """Conjugate inner product with each pulse."""
    M = filt.m_subcarriers
    half = M // 2
    out = np.empty((M, n_symbols), dtype=complex)
    u = np.arange(filt.n_taps)
    for m in range(M):
        for n in range(n_symbols):
            start = n * half
            pulse = (filt.taps
                     * np.exp(2j * np.pi * m * (u + start) / M)
                     * np.exp(1j * np.pi * (m + n) / 2))
            out[m, n] = np.dot(stream[start:start + filt.n_taps],
                               pulse.conj())
    return out


@pytest.fixture(scope="module")
def filt16():
    return design_phydyas(16, 4)


def test_prototype_shape_and_energy():
    filt = design_phydyas(64, 4)
    assert filt.taps.shape == (256,)
    assert abs(np.sum(filt.taps ** 2) - 1.0) < 1e-12
    assert np.isrealobj(filt.taps)


def test_prototype_symmetry():
    filt = design_phydyas(64, 4)
    # symmetric about the filter center (first tap is the zero endpoint)
    inner = filt.taps[1:]
    assert np.max(np.abs(inner - inner[::-1])) < 1e-12


def test_prototype_near_nyquist():
    for M, kappa in ((64, 4), (4, 2), (32, 3)):
        filt = design_phydyas(M, kappa)
        q0 = filt.nyquist[filt.nyquist_center]
        assert abs(q0 - 1.0) < 1e-12
        lags = np.arange(1, kappa) * M
        residual = np.abs(filt.nyquist[filt.nyquist_center + lags]) / q0
        assert np.max(residual, initial=0.0) <= 2e-3


def test_prototype_rejects_bad_args():
    with pytest.raises(ValueError):
        design_phydyas(63, 4)
    with pytest.raises(ValueError):
        design_phydyas(64, 1)
    with pytest.raises(ValueError):
        design_phydyas(64, 5)


def test_synthesize_zero_and_single_pulse(filt16):
    M = filt16.m_subcarriers
    grid = np.zeros((M, 3))
    assert not np.any(synthesize(grid, filt16))

    grid[0, 0] = 1.0
    stream = synthesize(grid, filt16)
    assert np.allclose(stream[:filt16.n_taps], filt16.taps, atol=1e-12)


def test_synthesize_matches_direct_sum(filt16):
    rng = np.random.default_rng(5)
    grid = rng.standard_normal((16, 2)) + 1j * rng.standard_normal((16, 2))
    fast = synthesize(grid, filt16)
    slow = direct_synthesize(grid, filt16)
    scale = np.max(np.abs(slow))
    assert np.max(np.abs(fast - slow)) / scale < 1e-9


def test_analyze_matches_direct_sum(filt16):
    rng = np.random.default_rng(6)
    stream = (rng.standard_normal(stream_length(4, filt16))
              + 1j * rng.standard_normal(stream_length(4, filt16)))
    fast = analyze(stream, filt16, 4)
    slow = direct_analyze(stream, filt16, 4)
    scale = np.max(np.abs(slow))
    assert np.max(np.abs(fast - slow)) / scale < 1e-9


def test_matched_filter_peak_and_intrinsic_leakage(filt16):
    M = filt16.m_subcarriers
    grid = np.zeros((M, 5))
    grid[3, 2] = 1.0
    out = analyze(synthesize(grid, filt16), filt16, 5)
    assert abs(out[3, 2] - 1.0) < 2e-3
    # neighbours see purely imaginary leakage
    for slot in ((3, 1), (3, 3), (2, 2), (4, 2)):
        assert abs(out[slot].real) < 2e-3
    assert abs(out[3, 1].imag) > 0.1


def test_round_trip_real_domain():
    filt = design_phydyas(64, 4)
    rng = np.random.default_rng(7)
    grid = (2.0 * rng.integers(0, 2, size=(64, 12)) - 1.0) / np.sqrt(2)
    back = analyze(synthesize(grid, filt), filt, 12).real
    assert np.max(np.abs(back - grid)) < 5e-3


def test_synthesize_linearity(filt16):
    rng = np.random.default_rng(8)
    g1 = rng.standard_normal((16, 3))
    g2 = rng.standard_normal((16, 3))
    lhs = synthesize(2.0 * g1 - 0.5 * g2, filt16)
    rhs = 2.0 * synthesize(g1, filt16) - 0.5 * synthesize(g2, filt16)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_batched_synthesis_matches_loop(filt16):
    rng = np.random.default_rng(9)
    grids = rng.standard_normal((3, 16, 4))
    batched = synthesize(grids, filt16)
    for a in range(3):
        assert np.allclose(batched[a], synthesize(grids[a], filt16),
                           atol=1e-12)


def test_stream_length_and_short_stream_error(filt16):
    n = stream_length(6, filt16)
    assert n == 5 * 8 + 64
    with pytest.raises(ValueError):
        analyze(np.zeros(n - 1, dtype=complex), filt16, 6)


def test_dimension_mismatch_error(filt16):
    with pytest.raises(ValueError):
        synthesize(np.zeros((8, 3)), filt16)
