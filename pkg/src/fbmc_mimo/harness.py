"""Monte Carlo experiment engine.

One trial draws channels, calibration errors, CSI errors, data, and noise,
then runs every enabled scheme over the *same* realizations so scheme gaps
are measured directly rather than buried in Monte Carlo noise. The draw
order is fixed and unconditional; changing it changes every result byte,
so treat it as part of the file format.

Curves report decision-point SINR against each user's fixed gain reference
(the per-user precoder normalization scale). A regression-based estimator
would silently absorb any flat gain error and therefore cannot see what
reciprocity compensation restores; the regression estimator remains
available in metrics for scale-blind measurements.
"""

import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import fbmc, metrics, ofdm
from .channel import (CsiErrorStats, apply_calibration, build_tdl_pdp,
                      expected_chain_gain, load_tdl_table, sample_calibration,
                      sample_propagation, inject_csi_error)
from .precoding import (apply_fsp, build_fsp_bank, build_precoder,
                        compensate_fsp, correction_factor, freq_response,
                        identity_fsp_bank, normalize_user_power)

ALL_SCHEMES = ("fbmc_no_fsp", "fbmc_fsp", "fbmc_fsp_perfect",
               "fbmc_fsp_pilot", "ofdm")


@dataclass
class SimConfig:
    m_subcarriers: int = 64
    overlap: int = 4
    n_users: int = 4
    n_list: tuple = (16, 32, 64, 128, 256, 512)
    sample_rate_hz: float = 15.36e6
    subcarrier_spacing_hz: float = 240e3
    snr_db: float = 10.0
    ds_min_ns: float = 90.0
    ds_max_ns: float = 110.0
    trials: int = 1000
    fsp_taps: int = 5
    precoder: str = "mmse"
    fsp_mode: str = "mmse"
    cal_mag_min: float = 0.98
    cal_mag_max: float = 1.02
    cal_phase_min_rad: float = -2.0 * math.pi / 9.0
    cal_phase_max_rad: float = 2.0 * math.pi / 9.0
    csi_sigma_ef_sq: float = 0.05
    compensation: str = "off"
    pilot_symbols: int = 2
    burst_instants: int = 32
    schemes: tuple = ALL_SCHEMES
    seed: int = 12345

    def __post_init__(self):
        if abs(self.sample_rate_hz
               - self.m_subcarriers * self.subcarrier_spacing_hz) \
                > 1e-6 * self.sample_rate_hz:
            raise ValueError("sample_rate_hz must equal "
                             "m_subcarriers * subcarrier_spacing_hz")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.precoder not in ("mrt", "zf", "mmse"):
            raise ValueError("unknown precoder %r" % self.precoder)
        if self.fsp_mode not in ("zf", "mmse"):
            raise ValueError("unknown fsp_mode %r" % self.fsp_mode)
        if self.compensation not in ("off", "perfect", "pilot"):
            raise ValueError("unknown compensation %r" % self.compensation)
        if self.pilot_symbols < 1:
            raise ValueError("pilot_symbols must be >= 1")
        if self.burst_instants < 2 * self.overlap + 2:
            raise ValueError("burst too short for edge exclusion")
        bad = [s for s in self.schemes if s not in ALL_SCHEMES]
        if bad:
            raise ValueError("unknown schemes: %s" % ", ".join(bad))
        if not 0 < self.ds_min_ns <= self.ds_max_ns:
            raise ValueError("need 0 < ds_min_ns <= ds_max_ns")
        if self.csi_sigma_ef_sq < 0:
            raise ValueError("csi_sigma_ef_sq must be >= 0")

    @property
    def noise_var(self):
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def payload_window(self):
        return slice(self.overlap, self.burst_instants - self.overlap)

    def mean_gain(self):
        """Magnitude of the expected single-chain calibration gain."""
        return abs(expected_chain_gain((self.cal_mag_min, self.cal_mag_max),
                                       (self.cal_phase_min_rad,
                                        self.cal_phase_max_rad)))

    def shrinkage(self):
        """End-to-end gain factor the compensation schemes undo."""
        return correction_factor(self.mean_gain(), self.csi_sigma_ef_sq)


_CONFIG_SCALARS = {
    "m_subcarriers": int, "overlap": int, "n_users": int,
    "sample_rate_hz": float, "subcarrier_spacing_hz": float,
    "snr_db": float, "ds_min_ns": float, "ds_max_ns": float,
    "trials": int, "fsp_taps": int, "precoder": str, "fsp_mode": str,
    "cal_mag_min": float, "cal_mag_max": float,
    "cal_phase_min_rad": float, "cal_phase_max_rad": float,
    "csi_sigma_ef_sq": float, "compensation": str, "pilot_symbols": int,
    "burst_instants": int, "seed": int,
}


def config_from_file(path):
    """Parse a flat key=value config file ('#' comments, blank lines ok)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key=value" % (path, lineno))
            key, val = (part.strip() for part in line.split("=", 1))
            if key == "n_list":
                values[key] = tuple(int(x) for x in val.split(",") if x)
            elif key == "schemes":
                values[key] = tuple(x.strip() for x in val.split(",") if x)
            elif key in _CONFIG_SCALARS:
                values[key] = _CONFIG_SCALARS[key](val)
            else:
                raise ValueError("%s:%d: unknown key %r" % (path, lineno, key))
    return SimConfig(**values)


def config_to_file(cfg: SimConfig, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in fields(cfg):
            val = getattr(cfg, f.name)
            if isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            fh.write("%s = %s\n" % (f.name, val))


def _pam_symbols(shape, rng):
    return (2.0 * rng.integers(0, 2, size=shape) - 1.0) / np.sqrt(2.0)


def _complex_noise(shape, var, rng):
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape)
                    + 1j * rng.standard_normal(shape))


class _TrialDraws:
    """Everything random in one trial, drawn in the frozen order."""

    def __init__(self, cfg: SimConfig, n_antennas, rng, filt):
        M, K, T = cfg.m_subcarriers, cfg.n_users, cfg.burst_instants
        table = _tdl_table()
        ds = rng.uniform(cfg.ds_min_ns, cfg.ds_max_ns, size=K)
        self.pdps = [build_tdl_pdp(table, ds[k], cfg.sample_rate_hz,
                                   user_id=k) for k in range(K)]
        self.propagation = sample_propagation(self.pdps, n_antennas, rng)
        self.calibration = sample_calibration(
            n_antennas, M, (cfg.cal_mag_min, cfg.cal_mag_max),
            (cfg.cal_phase_min_rad, cfg.cal_phase_max_rad), rng)
        self.uplink = apply_calibration(self.propagation, self.calibration,
                                        "uplink")
        self.downlink = apply_calibration(self.propagation, self.calibration,
                                          "downlink")
        stats = [CsiErrorStats.from_sigma_ef(cfg.csi_sigma_ef_sq, K, p.n_taps)
                 for p in self.pdps]
        self.estimated = inject_csi_error(self.uplink, stats, rng)

        self.fbmc_data = _pam_symbols((K, M, T), rng)
        stream_len = fbmc.stream_length(T, filt)
        self.fbmc_noise = _complex_noise((K, stream_len), cfg.noise_var, rng)

        cp = M - 1
        self.ofdm_cfg = ofdm.OfdmConfig(M, cp)
        n_blocks = T // 2
        self.ofdm_data = ofdm.qam_symbols(K, M, n_blocks, rng)
        self.ofdm_noise = _complex_noise(
            (K, n_blocks * self.ofdm_cfg.block_len), cfg.noise_var, rng)


_TDL_CACHE = {}


def _tdl_table():
    if "table" not in _TDL_CACHE:
        _TDL_CACHE["table"] = load_tdl_table()
    return _TDL_CACHE["table"]


def _fbmc_mf_outputs(user_grids, precoder, downlink, filt, cfg):
    """Noiseless matched-filter outputs of the downlink waveform chain.

    user_grids is (K, M, T): each user's (possibly prefiltered) symbol grid.
    Per antenna the grids are precoder-combined, synthesized, convolved with
    that user's downlink channel, and re-analyzed at each UE.
    """
    ant_grids = np.einsum("mki,kmt->imt", precoder.matrices.conj(),
                          user_grids)
    streams = fbmc.synthesize(ant_grids, filt)
    slen = streams.shape[-1]
    n_fft = 1
    while n_fft < slen + downlink.n_taps - 1:
        n_fft *= 2
    sf = np.fft.fft(streams, n=n_fft, axis=-1)
    hf = np.fft.fft(downlink.taps, n=n_fft, axis=-1)
    received = np.fft.ifft(np.einsum("kif,if->kf", hf, sf), axis=-1)
    return fbmc.analyze(received[:, :slen], filt, cfg.burst_instants)


def run_fbmc_trial(cfg: SimConfig, n_antennas, rng):
    """One end-to-end realization; per-user linear SINR per enabled scheme.

    Returns a dict mapping each enabled filter bank scheme (and 'ofdm' when
    enabled) to a length-K array of decision-point SINRs on the payload
    window.
    """
    filt = fbmc.design_phydyas(cfg.m_subcarriers, cfg.overlap)
    return _trial_schemes(cfg, n_antennas, rng, filt)


def _trial_schemes(cfg, n_antennas, rng, filt):
    M, K = cfg.m_subcarriers, cfg.n_users
    draws = _TrialDraws(cfg, n_antennas, rng, filt)

    noise_var = cfg.noise_var
    resp = freq_response(draws.estimated, M)
    pre = build_precoder(resp, cfg.precoder,
                         noise_var=noise_var if cfg.precoder == "mmse" else 0.0)
    pre = normalize_user_power(pre)
    beta = pre.user_scale

    gamma = cfg.shrinkage()
    want = set(cfg.schemes)
    out = {}
    win = cfg.payload_window
    sent = draws.fbmc_data[:, :, win]

    need_fsp = want & {"fbmc_fsp", "fbmc_fsp_perfect", "fbmc_fsp_pilot"}
    y_noise = None
    if want & {"fbmc_no_fsp"} or need_fsp:
        y_noise = fbmc.analyze(draws.fbmc_noise, filt, cfg.burst_instants)

    def user_sinrs(y):
        dec = y.real / beta[:, None, None]
        return np.array([metrics.fixed_reference_sinr(sent[k],
                                                      dec[k][:, win])
                         for k in range(K)])

    if "fbmc_no_fsp" in want:
        y_sig = _fbmc_mf_outputs(draws.fbmc_data.astype(complex), pre,
                                 draws.downlink, filt, cfg)
        out["fbmc_no_fsp"] = user_sinrs(y_sig + y_noise)

    if need_fsp:
        weight = 0.0
        if cfg.fsp_mode == "mmse":
            weight = noise_var / (n_antennas * gamma ** 2)
        bank = build_fsp_bank(draws.pdps, filt, cfg.fsp_taps, cfg.fsp_mode,
                              noise_weight=weight)
        grid = apply_fsp(draws.fbmc_data, bank)
        y_sig = _fbmc_mf_outputs(grid, pre, draws.downlink, filt, cfg)
        y_unc = y_sig + y_noise
        if "fbmc_fsp" in want:
            out["fbmc_fsp"] = user_sinrs(y_unc)
        if "fbmc_fsp_perfect" in want:
            out["fbmc_fsp_perfect"] = user_sinrs(y_sig / gamma + y_noise)
        if "fbmc_fsp_pilot" in want:
            n_p = cfg.pilot_symbols
            gain = np.empty(K, dtype=complex)
            for k in range(K):
                gain[k] = metrics.estimate_gain_pilot(
                    draws.fbmc_data[k, :, :n_p],
                    y_unc[k, :, :n_p]) / beta[k]
            # per-user rescale mixes across users at each UE, so rerun the
            # waveform with the compensated grids rather than rescaling y
            grid_p = apply_fsp(draws.fbmc_data, compensate_fsp(bank, gain))
            y_p = _fbmc_mf_outputs(grid_p, pre, draws.downlink, filt, cfg)
            out["fbmc_fsp_pilot"] = user_sinrs(y_p + y_noise)

    if "ofdm" in want:
        est = ofdm.ofdm_downlink_chain(draws.ofdm_data, pre, draws.downlink,
                                       draws.ofdm_cfg, draws.ofdm_noise)
        dec = est / beta[:, None, None]
        sinr = np.empty(K)
        for k in range(K):
            err = dec[k] - draws.ofdm_data[k]
            sinr[k] = metrics.fixed_reference_sinr(
                np.concatenate([draws.ofdm_data[k].real.ravel(),
                                draws.ofdm_data[k].imag.ravel()]),
                np.concatenate([(draws.ofdm_data[k] + err).real.ravel(),
                                (draws.ofdm_data[k] + err).imag.ravel()]))
        out["ofdm"] = sinr
    return out


def ofdm_downlink_trial(downlink, precoder_kind, noise_var, rng,
                        n_subcarriers=64, n_blocks=16, estimated=None):
    """Standalone benchmark trial: per-user decision-point SINR.

    Precoder is built from the estimated channel set when given, otherwise
    from the true downlink channels.
    """
    M = n_subcarriers
    source = estimated if estimated is not None else downlink
    resp = freq_response(source, M)
    pre = normalize_user_power(
        build_precoder(resp, precoder_kind,
                       noise_var=noise_var if precoder_kind == "mmse" else 0.0))
    cfg = ofdm.OfdmConfig(M, M - 1)
    K = downlink.n_users
    data = ofdm.qam_symbols(K, M, n_blocks, rng)
    noise = _complex_noise((K, n_blocks * cfg.block_len), noise_var, rng)
    est = ofdm.ofdm_downlink_chain(data, pre, downlink, cfg, noise)
    dec = est / pre.user_scale[:, None, None]
    sinr = np.empty(K)
    for k in range(K):
        sinr[k] = metrics.fixed_reference_sinr(
            np.concatenate([data[k].real.ravel(), data[k].imag.ravel()]),
            np.concatenate([dec[k].real.ravel(), dec[k].imag.ravel()]))
    return sinr


@dataclass
class SchemeCurve:
    """Aggregated SINR for one (scheme, antenna count) cell."""

    scheme: str
    n_antennas: int
    trials: int
    per_user_mean: np.ndarray
    per_user_ci95: np.ndarray
    mean_sinr: float
    ci95: float

    @property
    def mean_db(self):
        return 10.0 * math.log10(self.mean_sinr)

    @property
    def ci95_db(self):
        # delta method: d(10 log10 x) = (10/ln10) dx/x
        return 10.0 / math.log(10.0) * self.ci95 / self.mean_sinr


@dataclass
class SinrReport:
    config: SimConfig
    curves: list = field(default_factory=list)

    def cell(self, scheme, n_antennas):
        for c in self.curves:
            if c.scheme == scheme and c.n_antennas == n_antennas:
                return c
        raise KeyError("no cell for (%s, %d)" % (scheme, n_antennas))

    def mean_db(self, scheme, n_antennas):
        return self.cell(scheme, n_antennas).mean_db


def _aggregate(scheme, n_antennas, sinr_matrix):
    """sinr_matrix is (trials, K) linear."""
    trials = sinr_matrix.shape[0]
    per_user = sinr_matrix.mean(axis=0)
    if trials > 1:
        per_user_ci = 1.96 * sinr_matrix.std(axis=0, ddof=1) / np.sqrt(trials)
        trial_means = sinr_matrix.mean(axis=1)
        ci = 1.96 * trial_means.std(ddof=1) / np.sqrt(trials)
    else:
        per_user_ci = np.zeros_like(per_user)
        ci = 0.0
    return SchemeCurve(scheme, n_antennas, trials, per_user,
                       per_user_ci, float(sinr_matrix.mean()), float(ci))


def sweep(cfg: SimConfig, progress=None):
    """Run every (N, trial) cell and aggregate per scheme.

    Each trial's generator is seeded by (seed, N, trial), so cells are
    independent of execution order and the report is reproducible bit for
    bit from the config alone.
    """
    filt = fbmc.design_phydyas(cfg.m_subcarriers, cfg.overlap)
    report = SinrReport(cfg)
    for n_antennas in cfg.n_list:
        acc = {s: np.empty((cfg.trials, cfg.n_users)) for s in cfg.schemes}
        for trial in range(cfg.trials):
            rng = np.random.default_rng([cfg.seed, n_antennas, trial])
            try:
                result = _trial_schemes(cfg, n_antennas, rng, filt)
            except Exception as exc:
                raise RuntimeError(
                    "trial failed: seed=%d N=%d trial=%d: %s"
                    % (cfg.seed, n_antennas, trial, exc)) from exc
            for s in cfg.schemes:
                acc[s][trial] = result[s]
        for s in cfg.schemes:
            report.curves.append(_aggregate(s, n_antennas, acc[s]))
        if progress is not None:
            progress(n_antennas)
    return report


def write_csv(report: SinrReport, path):
    """Emit the aggregated curves; byte-stable for a fixed (config, seed)."""
    rows = ["scheme,N,user,mean_sinr_db,ci95_db,trials"]
    for curve in report.curves:
        for k in range(curve.per_user_mean.size):
            mean = curve.per_user_mean[k]
            ci = curve.per_user_ci95[k]
            rows.append("%s,%d,%d,%.6f,%.6f,%d"
                        % (curve.scheme, curve.n_antennas, k,
                           10.0 * math.log10(mean),
                           10.0 / math.log(10.0) * ci / mean, curve.trials))
        rows.append("%s,%d,all,%.6f,%.6f,%d"
                    % (curve.scheme, curve.n_antennas, curve.mean_db,
                       curve.ci95_db, curve.trials))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


_PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Plot mean SINR vs antenna count from {csv_name} (aggregate rows)."""
import csv
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("{csv_name}", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        if row["user"] == "all":
            curves[row["scheme"]].append((int(row["N"]),
                                          float(row["mean_sinr_db"])))

plt.figure(figsize=(7, 5))
for scheme in sorted(curves):
    pts = sorted(curves[scheme])
    plt.plot([p[0] for p in pts], [p[1] for p in pts],
             marker="o", label=scheme)
plt.xscale("log", base=2)
plt.xlabel("number of BS antennas")
plt.ylabel("mean SINR (dB)")
plt.grid(True, which="both", alpha=0.4)
plt.legend()
plt.tight_layout()
plt.savefig("sinr_vs_antennas.png", dpi=150)
print("wrote sinr_vs_antennas.png")
'''


def write_plot_script(out_dir, csv_name="results.csv"):
    path = os.path.join(out_dir, "plot_results.py")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_PLOT_SCRIPT.format(csv_name=csv_name))
    return path


def emit(report: SinrReport, out_dir):
    """Write results.csv and the standalone plot script; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    write_csv(report, csv_path)
    plot_path = write_plot_script(out_dir)
    return csv_path, plot_path
