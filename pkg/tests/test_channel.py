"""Channel, calibration, and CSI-error model tests."""

import math

import numpy as np
import pytest

from fbmc_mimo import (CalibrationProfile, CsiErrorStats, PowerDelayProfile,
                       apply_calibration, awgn, build_tdl_pdp,
                       expected_chain_gain, identity_calibration,
                       inject_csi_error, load_tdl_table, sample_calibration,
                       sample_propagation)

FS = 15.36e6


def test_bundled_table_loads():
    table = load_tdl_table()
    delays = [row[0] for row in table]
    assert len(table) >= 20
    assert delays == sorted(delays)
    assert all(np.isfinite(p) for _, p in table)


def test_table_parsing_and_validation(tmp_path):
    path = tmp_path / "taps.txt"
    path.write_text("# comment line\n0.0 0.0\n1.0 -3.0  # trailing\n\n")
    table = load_tdl_table(str(path))
    assert table == [(0.0, 0.0), (1.0, -3.0)]

    bad = tmp_path / "bad.txt"
    bad.write_text("1.0 0.0\n0.5 0.0\n")
    with pytest.raises(ValueError):
        load_tdl_table(str(bad))


def test_pdp_single_tap():
    pdp = build_tdl_pdp([(0.0, 0.0)], 100.0, FS)
    assert pdp.powers.tolist() == [1.0]
    assert pdp.n_taps == 1


def test_pdp_two_equal_taps_one_sample_apart():
    # normalized delay 1.0 scaled to exactly one sample period
    ds_ns = 1e9 / FS
    pdp = build_tdl_pdp([(0.0, 0.0), (1.0, 0.0)], ds_ns, FS)
    assert np.allclose(pdp.powers, [0.5, 0.5], atol=1e-12)


def test_pdp_collision_sums_power():
    ds_ns = 1e9 / FS
    # delays 0 and 0.2 both round to bin 0; third tap lands on bin 2
    pdp = build_tdl_pdp([(0.0, 0.0), (0.2, 0.0), (2.0, -3.0)], ds_ns, FS)
    lin = 10.0 ** (-3.0 / 10.0)
    expect = np.array([2.0, 0.0, lin])
    expect /= expect.sum()
    assert np.allclose(pdp.powers, expect, atol=1e-12)


def test_pdp_tdlc_length_at_moderate_spreads():
    table = load_tdl_table()
    for ds, expect_l in ((90.0, 13), (100.0, 14), (110.0, 16)):
        pdp = build_tdl_pdp(table, ds, FS)
        assert pdp.n_taps == expect_l
        assert abs(pdp.powers.sum() - 1.0) < 1e-12


def test_pdp_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_tdl_pdp([], 100.0, FS)
    with pytest.raises(ValueError):
        build_tdl_pdp([(0.0, 0.0)], -1.0, FS)


def test_propagation_statistics():
    pdp = PowerDelayProfile(np.array([0.7, 0.0, 0.3]), user_id=0,
                            rms_delay_ns=100.0)
    chan = sample_propagation([pdp], 4000, np.random.default_rng(3))
    assert chan.taps.shape == (1, 4000, 3)
    assert chan.role == "propagation"
    var = np.mean(np.abs(chan.taps[0]) ** 2, axis=0)
    assert abs(var[0] - 0.7) < 0.05 * 0.7
    assert var[1] == 0.0
    assert abs(var[2] - 0.3) < 0.05 * 0.3


def test_propagation_deterministic():
    pdp = PowerDelayProfile(np.array([1.0]), user_id=0, rms_delay_ns=100.0)
    a = sample_propagation([pdp], 8, np.random.default_rng(11)).taps
    b = sample_propagation([pdp], 8, np.random.default_rng(11)).taps
    assert np.array_equal(a, b)


def test_calibration_ranges_and_identity_ir():
    rng = np.random.default_rng(4)
    cal = sample_calibration(64, 16, (0.98, 1.02),
                             (-2 * math.pi / 9, 2 * math.pi / 9), rng)
    for gains in (cal.tx_gains, cal.rx_gains):
        mags = np.abs(gains)
        assert mags.min() >= 0.98 and mags.max() <= 1.02
        phases = np.angle(gains)
        assert np.abs(phases).max() <= 2 * math.pi / 9 + 1e-12
    assert np.allclose(np.fft.fft(cal.tx_ir, axis=1), cal.tx_gains,
                       atol=1e-10)

    ident = sample_calibration(3, 16, (1.0, 1.0), (0.0, 0.0), rng)
    delta = np.zeros(16)
    delta[0] = 1.0
    assert np.allclose(ident.tx_ir, delta[None, :], atol=1e-12)


def test_expected_chain_gain_closed_form():
    c = 2 * math.pi / 9
    lam = expected_chain_gain((0.98, 1.02), (-c, c))
    assert abs(lam - math.sin(c) / c) < 1e-12

    # degenerate zero-width phase range
    g = expected_chain_gain((2.0, 2.0), (0.5, 0.5))
    assert abs(g - 2.0 * np.exp(0.5j)) < 1e-12


def test_expected_chain_gain_matches_monte_carlo():
    c = 2 * math.pi / 9
    rng = np.random.default_rng(12)
    cal = sample_calibration(3000, 64, (0.98, 1.02), (-c, c), rng)
    empirical = np.mean(cal.tx_gains)
    assert abs(empirical - expected_chain_gain((0.98, 1.02), (-c, c))) < 0.01


def test_lambda_monte_carlo_value():
    c = 2 * math.pi / 9
    rng = np.random.default_rng(13)
    cal = sample_calibration(2000, 64, (0.98, 1.02), (-c, c), rng)
    lam_ref = math.sin(c) / c  # 0.9207...
    assert abs(abs(np.mean(cal.tx_gains)) - lam_ref) < 0.01 * lam_ref


def test_apply_calibration_identity_is_zero_padding():
    pdp = PowerDelayProfile(np.array([0.6, 0.4]), user_id=0,
                            rms_delay_ns=100.0)
    chan = sample_propagation([pdp], 3, np.random.default_rng(5))
    cal = identity_calibration(3, 8)
    up = apply_calibration(chan, cal, "uplink")
    down = apply_calibration(chan, cal, "downlink")
    assert up.taps.shape == (1, 3, 8)
    assert np.allclose(up.taps[..., :2], chan.taps, atol=1e-12)
    assert np.allclose(up.taps[..., 2:], 0.0, atol=1e-12)
    # reciprocal by construction when both chains are ideal
    assert np.allclose(up.taps, down.taps, atol=1e-12)
    assert up.role == "uplink" and down.role == "downlink"


def test_apply_calibration_frequency_identity():
    M = 16
    pdp = PowerDelayProfile(np.array([0.5, 0.3, 0.2]), user_id=0,
                            rms_delay_ns=100.0)
    rng = np.random.default_rng(6)
    chan = sample_propagation([pdp], 4, rng)
    cal = sample_calibration(4, M, (0.9, 1.1), (-0.5, 0.5), rng)
    down = apply_calibration(chan, cal, "downlink")
    lhs = np.fft.fft(down.taps, n=M, axis=-1)
    rhs = np.fft.fft(chan.taps, n=M, axis=-1) * cal.tx_gains[None, :, :]
    assert np.max(np.abs(lhs - rhs)) < 1e-10

    up = apply_calibration(chan, cal, "uplink")
    rhs_up = np.fft.fft(chan.taps, n=M, axis=-1) * cal.rx_gains[None, :, :]
    assert np.max(np.abs(np.fft.fft(up.taps, n=M, axis=-1) - rhs_up)) < 1e-10


def test_apply_calibration_impulse_channel_yields_chain_ir():
    M = 8
    pdp = PowerDelayProfile(np.array([1.0]), user_id=0, rms_delay_ns=0.0)
    chan = sample_propagation([pdp], 2, np.random.default_rng(7))
    cal = sample_calibration(2, M, (0.9, 1.1), (-1.0, 1.0),
                             np.random.default_rng(8))
    down = apply_calibration(chan, cal, "downlink")
    expect = chan.taps[:, :, :1] * cal.tx_ir[None, :, :]
    assert np.allclose(down.taps, expect, atol=1e-12)


def test_apply_calibration_errors():
    pdp = PowerDelayProfile(np.ones(9) / 9.0, user_id=0, rms_delay_ns=1.0)
    chan = sample_propagation([pdp], 2, np.random.default_rng(9))
    cal = identity_calibration(2, 8)
    with pytest.raises(ValueError):
        apply_calibration(chan, cal, "downlink")  # channel longer than grid
    short = sample_propagation([PowerDelayProfile(np.array([1.0]), 0, 1.0)],
                               2, np.random.default_rng(9))
    with pytest.raises(ValueError):
        apply_calibration(short, identity_calibration(2, 8), "sideways")
    up = apply_calibration(short, identity_calibration(2, 8), "uplink")
    with pytest.raises(ValueError):
        apply_calibration(up, identity_calibration(2, 8), "uplink")


def test_csi_error_stats_relations():
    stats = CsiErrorStats.from_mse(mse=0.8, n_users=4, n_taps=10)
    assert abs(stats.sigma_et_sq - 0.02) < 1e-15
    assert abs(stats.sigma_ef_sq - 0.2) < 1e-15

    stats2 = CsiErrorStats.from_sigma_ef(0.05, n_users=4, n_taps=14)
    assert abs(stats2.sigma_ef_sq - 14 * stats2.sigma_et_sq) < 1e-15


def test_inject_csi_error_statistics():
    M = 16
    L = 5
    pdp = PowerDelayProfile(np.ones(L) / L, user_id=0, rms_delay_ns=1.0)
    chan = sample_propagation([pdp], 3000, np.random.default_rng(10))
    up = apply_calibration(chan, identity_calibration(3000, M), "uplink")
    stats = [CsiErrorStats.from_sigma_ef(0.05, 1, L)]
    est = inject_csi_error(up, stats, np.random.default_rng(11))
    assert est.role == "estimated-uplink"
    delta = est.taps - up.taps
    # error confined to the leading channel taps
    assert not np.any(delta[..., L:])
    per_tap = np.mean(np.abs(delta[..., :L]) ** 2)
    assert abs(per_tap - 0.05 / L) < 0.05 * (0.05 / L)
    # per-subcarrier error variance adds up across taps
    df = np.fft.fft(delta, n=M, axis=-1)
    assert abs(np.mean(np.abs(df) ** 2) - 0.05) < 0.05 * 0.05


def test_inject_csi_error_zero_is_identity():
    pdp = PowerDelayProfile(np.array([1.0]), user_id=0, rms_delay_ns=1.0)
    chan = sample_propagation([pdp], 4, np.random.default_rng(12))
    up = apply_calibration(chan, identity_calibration(4, 8), "uplink")
    stats = [CsiErrorStats.from_sigma_ef(0.0, 1, 1)]
    est = inject_csi_error(up, stats, np.random.default_rng(13))
    assert np.array_equal(est.taps, up.taps)


def test_estimated_channel_power_inflation():
    # per-user squared channel norm grows by exactly the error variance
    M = 64
    N = 256
    table = load_tdl_table()
    pdps = [build_tdl_pdp(table, 100.0, FS, user_id=k) for k in range(2)]
    acc = []
    for trial in range(12):
        rng = np.random.default_rng([21, trial])
        chan = sample_propagation(pdps, N, rng)
        up = apply_calibration(chan, identity_calibration(N, M), "uplink")
        stats = [CsiErrorStats.from_sigma_ef(0.05, 2, p.n_taps)
                 for p in pdps]
        est = inject_csi_error(up, stats, rng)
        resp = np.fft.fft(est.taps, n=M, axis=-1)
        acc.append(np.mean(np.sum(np.abs(resp) ** 2, axis=1), axis=(0, 1)))
    ratio = np.mean(acc) / N
    assert abs(ratio - 1.05) < 0.02 * 1.05


def test_awgn_statistics_and_identity():
    rng = np.random.default_rng(14)
    stream = np.zeros(10 ** 6, dtype=complex)
    noisy = awgn(stream, 1.0, rng)
    var = np.mean(np.abs(noisy) ** 2)
    assert abs(var - 1.0) < 0.01
    # circular symmetry: real/imag uncorrelated, equal power
    assert abs(np.mean(noisy.real * noisy.imag)) < 0.01
    assert abs(np.mean(noisy.real ** 2) - 0.5) < 0.01
    assert np.array_equal(awgn(stream, 0.0, rng), stream)


def test_pdp_validation():
    with pytest.raises(ValueError):
        PowerDelayProfile(np.array([0.5, 0.4]), user_id=0, rms_delay_ns=1.0)
    with pytest.raises(ValueError):
        PowerDelayProfile(np.array([-0.1, 1.1]), user_id=0, rms_delay_ns=1.0)
