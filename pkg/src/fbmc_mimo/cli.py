"""Command line front end: sweeps, single trials, filter dumps, self checks."""

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from . import fbmc, ofdm
from .channel import (apply_calibration, build_tdl_pdp, load_tdl_table,
                      sample_calibration, sample_propagation)
from .harness import (ALL_SCHEMES, SimConfig, config_from_file, emit,
                      run_fbmc_trial, sweep)
from .precoding import (build_fsp_bank, build_precoder, design_fsp,
                        freq_response, normalize_user_power,
                        t_half_spaced_equivalent)


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH",
                        help="key=value config file (defaults otherwise)")
    parser.add_argument("--seed", type=int, metavar="U64")
    parser.add_argument("--out", default="results", metavar="DIR")
    parser.add_argument("--schemes", metavar="LIST",
                        help="comma separated subset of: %s"
                        % ",".join(ALL_SCHEMES))
    parser.add_argument("--n-list", metavar="LIST",
                        help="comma separated antenna counts")
    parser.add_argument("--trials", type=int, metavar="INT")


def _load_config(args):
    cfg = config_from_file(args.config) if args.config else SimConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.schemes:
        updates["schemes"] = tuple(s.strip()
                                   for s in args.schemes.split(",") if s)
    if args.n_list:
        updates["n_list"] = tuple(int(v)
                                  for v in args.n_list.split(",") if v)
    return replace(cfg, **updates) if updates else cfg


def _cmd_sweep(args):
    cfg = _load_config(args)
    t0 = time.time()

    def progress(n_antennas):
        print("  N=%d done (%.0f s elapsed)" % (n_antennas, time.time() - t0),
              flush=True)

    print("sweep: %d trials x N in %s, schemes %s"
          % (cfg.trials, list(cfg.n_list), ",".join(cfg.schemes)))
    report = sweep(cfg, progress=progress)
    csv_path, plot_path = emit(report, args.out)
    print("wrote %s and %s" % (csv_path, plot_path))
    header = "scheme".ljust(18) + "".join("N=%-8d" % n for n in cfg.n_list)
    print(header)
    for s in cfg.schemes:
        row = s.ljust(18)
        for n in cfg.n_list:
            c = report.cell(s, n)
            row += ("%.2f+-%.2f" % (c.mean_db, c.ci95_db)).ljust(10)
        print(row)
    return 0


def _cmd_trial(args):
    cfg = _load_config(args)
    n_antennas = cfg.n_list[0]
    rng = np.random.default_rng([cfg.seed, n_antennas, 0])
    result = run_fbmc_trial(cfg, n_antennas, rng)
    print("single trial: N=%d, seed=%d" % (n_antennas, cfg.seed))
    for s in cfg.schemes:
        sinr_db = 10.0 * np.log10(result[s])
        print("  %-18s" % s
              + " ".join("user%d=%7.2f dB" % (k, sinr_db[k])
                         for k in range(cfg.n_users)))
    return 0


def _cmd_filters(args):
    cfg = _load_config(args)
    filt = fbmc.design_phydyas(cfg.m_subcarriers, cfg.overlap)
    np.set_printoptions(precision=6, suppress=True, linewidth=100)
    print("prototype filter (%d taps, overlap %d):"
          % (filt.taps.size, filt.overlap_kappa))
    print(filt.taps)
    print("matched-filter autocorrelation at symbol lags "
          "(center +- multiples of M):")
    center = filt.nyquist_center
    lags = np.arange(-filt.overlap_kappa + 1, filt.overlap_kappa)
    print(filt.nyquist[center + lags * cfg.m_subcarriers])
    table = load_tdl_table()
    rng = np.random.default_rng([cfg.seed])
    ds = rng.uniform(cfg.ds_min_ns, cfg.ds_max_ns, size=cfg.n_users)
    pdps = [build_tdl_pdp(table, ds[k], cfg.sample_rate_hz, user_id=k)
            for k in range(cfg.n_users)]
    bank = build_fsp_bank(pdps, filt, cfg.fsp_taps, cfg.fsp_mode,
                          noise_weight=0.0)
    print("half-symbol-spaced prefilter taps (%s design, %d taps):"
          % (cfg.fsp_mode, cfg.fsp_taps))
    for k, pdp in enumerate(pdps):
        print("  user %d (delay spread %.1f ns, %d channel taps): delay=%d"
              % (k, ds[k], pdp.n_taps, bank.delay[k]))
        print("    subcarrier 0 taps:", np.round(bank.taps[k, 0], 6))
    return 0


def _check(name, ok, detail, failures):
    print("  %-34s %s  (%s)" % (name, "PASS" if ok else "FAIL", detail))
    if not ok:
        failures.append(name)


def _cmd_validate(args):
    cfg = _load_config(args)
    M, K = cfg.m_subcarriers, cfg.n_users
    failures = []
    rng = np.random.default_rng(cfg.seed)
    filt = fbmc.design_phydyas(M, cfg.overlap)

    lags = np.arange(1, filt.overlap_kappa) * M
    resid = np.max(np.abs(filt.nyquist[filt.nyquist_center + lags]))
    _check("prototype near-Nyquist", resid < 5e-4, "residual %.1e" % resid,
           failures)

    grid = _rand_grid(rng, M, 12)
    back = fbmc.analyze(fbmc.synthesize(grid, filt), filt, 12).real
    err = np.max(np.abs(back - grid))
    _check("real-domain round trip", err < 5e-3, "max error %.1e" % err,
           failures)

    table = load_tdl_table()
    pdps = [build_tdl_pdp(table, 100.0, cfg.sample_rate_hz, user_id=k)
            for k in range(K)]
    chan = sample_propagation(pdps, 8, rng)
    resp = freq_response(chan, M)
    pre = build_precoder(resp, "zf")
    prod = np.einsum("mki,mji->mkj", resp, pre.matrices.conj())
    zf_err = np.max(np.abs(prod - np.eye(K)))
    _check("zero-forcing identity", zf_err < 1e-8, "max |HP^H - I| %.1e"
           % zf_err, failures)

    cal = sample_calibration(8, M, (cfg.cal_mag_min, cfg.cal_mag_max),
                             (cfg.cal_phase_min_rad, cfg.cal_phase_max_rad),
                             rng)
    up = apply_calibration(chan, cal, "uplink")
    cal_err = np.max(np.abs(np.fft.fft(up.taps, n=M)
                            - np.fft.fft(chan.taps, n=M) * cal.rx_gains))
    _check("calibration frequency identity", cal_err < 1e-10,
           "max error %.1e" % cal_err, failures)

    ocfg = ofdm.OfdmConfig(M, M - 1)
    data = ofdm.qam_symbols(K, M, 4, rng)
    est = ofdm.ofdm_downlink_chain(data, normalize_user_power(pre), chan,
                                   ocfg)
    # per-user complex gain fit; residual is pure inter-carrier/user leakage
    num = np.sum(est.conj() * data, axis=(1, 2))
    den = np.sum(np.abs(data) ** 2, axis=(1, 2))
    fitted = (num.conj() / den)[:, None, None] * data
    floor = np.mean(np.abs(est - fitted) ** 2) / np.mean(np.abs(fitted) ** 2)
    _check("benchmark chain diagonalization", floor < 1e-6,
           "interference %.1f dB" % (10 * np.log10(max(floor, 1e-300))),
           failures)

    t = t_half_spaced_equivalent(pdps[0].powers, filt)
    taps, d = design_fsp(t, cfg.fsp_taps, "zf")
    conv, desired = _fsp_system(t, cfg.fsp_taps, d)
    oracle = np.linalg.solve(conv.conj().T @ conv, conv.conj().T @ desired)
    fsp_err = np.max(np.abs(taps - oracle))
    _check("prefilter normal equations", fsp_err < 1e-8, "max error %.1e"
           % fsp_err, failures)

    tiny = replace(cfg, n_list=(8,), trials=2, schemes=("fbmc_fsp", "ofdm"))
    runs = []
    for _ in range(2):
        rep = sweep(tiny)
        runs.append(tuple((c.scheme, c.n_antennas, c.mean_sinr, c.ci95)
                          for c in rep.curves))
    _check("sweep determinism", runs[0] == runs[1],
           "two runs %s" % ("identical" if runs[0] == runs[1] else "differ"),
           failures)

    if failures:
        print("%d check(s) failed" % len(failures))
        return 1
    print("all checks passed")
    return 0


def _rand_grid(rng, n_subcarriers, n_instants):
    return (2.0 * rng.integers(0, 2, size=(n_subcarriers, n_instants))
            - 1.0) / np.sqrt(2.0)


def _fsp_system(t, n_taps, decision_lag):
    """Dense even-lag design system for the validate oracle."""
    t = np.asarray(t, dtype=complex)
    span = t.size // 2
    lags = np.arange(-span if span % 2 == 0 else -span + 1,
                     span + n_taps, 2)
    conv = np.zeros((lags.size, n_taps), dtype=complex)
    for row, lag in enumerate(lags):
        for j in range(n_taps):
            v = lag - j
            if -span <= v <= span:
                conv[row, j] = t[v + span]
    desired = (lags == decision_lag).astype(float)
    return conv, desired


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fbmc-mimo",
        description="Multi-antenna FBMC/OQAM downlink link-level simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
            ("sweep", _cmd_sweep, "run the full Monte Carlo experiment"),
            ("trial", _cmd_trial, "run one trial and dump per-user SINRs"),
            ("filters", _cmd_filters, "dump prototype and prefilter taps"),
            ("validate", _cmd_validate, "run quick property checks")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
