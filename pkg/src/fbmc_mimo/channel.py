"""Multipath channels, reciprocity calibration errors, CSI errors, noise.

Propagation channels are TDL profiles sampled at fs with i.i.d. CN(0, p_k[l])
taps. TDD chain mismatch is modeled as per-(antenna, subcarrier) gains
xi*exp(j*phi) on the M-point grid; their inverse-DFT images convolve the
propagation channel circularly over M points, which reproduces the
per-subcarrier multiplicative definition exactly on the subcarrier grid.
"""

import os
from dataclasses import dataclass, field

import numpy as np

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
TDL_C_PATH = os.path.join(_DATA_DIR, "tdl_c.txt")


@dataclass
class PowerDelayProfile:
    """Normalized sample-spaced power delay profile for one user."""

    powers: np.ndarray
    user_id: int = 0
    rms_delay_ns: float = 0.0

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        if self.powers.ndim != 1 or self.powers.size < 1:
            raise ValueError("PDP must be a nonempty 1-D vector")
        if np.any(self.powers < 0):
            raise ValueError("PDP powers must be nonnegative")
        total = self.powers.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError("PDP must be normalized to unit total power")

    @property
    def n_taps(self):
        return self.powers.size


@dataclass
class ChannelSet:
    """K x N FIR channels plus the PDPs they were drawn from.

    taps is indexed (user k, antenna i, delay l) for every role; the uplink
    role stores h^u_{i,k} under the same (k, i) indexing, i.e. the transpose
    view of the physical uplink matrix.
    """

    taps: np.ndarray
    role: str
    pdps: list

    def __post_init__(self):
        if self.taps.ndim != 3:
            raise ValueError("channel taps must be (K, N, L)")

    @property
    def n_users(self):
        return self.taps.shape[0]

    @property
    def n_antennas(self):
        return self.taps.shape[1]

    @property
    def n_taps(self):
        return self.taps.shape[2]


@dataclass
class CalibrationProfile:
    """Residual tx/rx chain gains per (antenna, subcarrier) and their IRs."""

    tx_gains: np.ndarray
    rx_gains: np.ndarray
    tx_ir: np.ndarray = field(init=False, repr=False)
    rx_ir: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tx_gains.shape != self.rx_gains.shape or self.tx_gains.ndim != 2:
            raise ValueError("gains must be matching (N, M) arrays")
        self.tx_ir = np.fft.ifft(self.tx_gains, axis=1)
        self.rx_ir = np.fft.ifft(self.rx_gains, axis=1)

    @property
    def n_subcarriers(self):
        return self.tx_gains.shape[1]


@dataclass
class CsiErrorStats:
    """Channel estimation error variances, per tap and per subcarrier."""

    sigma_et_sq: float
    sigma_ef_sq: float
    mse: float

    @classmethod
    def from_mse(cls, mse, n_users, n_taps):
        """Aggregate estimator MSE spread over K users and L taps."""
        sigma_et_sq = mse / (n_users * n_taps)
        return cls(sigma_et_sq, n_taps * sigma_et_sq, mse)

    @classmethod
    def from_sigma_ef(cls, sigma_ef_sq, n_users, n_taps):
        """Fix the per-subcarrier error variance, derive the rest."""
        sigma_et_sq = sigma_ef_sq / n_taps
        return cls(sigma_et_sq, sigma_ef_sq, n_users * sigma_ef_sq)


def load_tdl_table(path=TDL_C_PATH):
    """Read a tap table file: one "normalized_delay power_dB" pair per line.

    '#' starts a comment. Delays must be nondecreasing.
    """
    delays = []
    powers_db = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError("bad tap line in %s: %r" % (path, raw.strip()))
            delays.append(float(parts[0]))
            powers_db.append(float(parts[1]))
    if not delays:
        raise ValueError("empty tap table: %s" % path)
    delays = np.asarray(delays)
    powers_db = np.asarray(powers_db)
    if not np.all(np.isfinite(delays)) or not np.all(np.isfinite(powers_db)):
        raise ValueError("non-finite entries in tap table %s" % path)
    if np.any(np.diff(delays) < 0):
        raise ValueError("tap delays must be nondecreasing in %s" % path)
    return list(zip(delays, powers_db))


def build_tdl_pdp(profile_table, ds_ns, fs, user_id=0):
    """Scale a normalized tap table to a delay spread and bin it at fs.

    Normalized delays are multiplied by ds_ns, powers converted from dB,
    each tap lands in the nearest sample bin (coincident taps add), and the
    result is normalized to unit total power. Trailing zero bins are cut.
    """
    if ds_ns <= 0 or fs <= 0:
        raise ValueError("ds_ns and fs must be positive")
    table = list(profile_table)
    if not table:
        raise ValueError("empty tap table")
    delays = np.array([t[0] for t in table], dtype=float)
    powers_db = np.array([t[1] for t in table], dtype=float)
    if not np.all(np.isfinite(powers_db)):
        raise ValueError("non-finite tap powers")

    idx = np.rint(delays * ds_ns * 1e-9 * fs).astype(int)
    powers = np.zeros(int(idx.max()) + 1)
    np.add.at(powers, idx, 10.0 ** (powers_db / 10.0))
    last = int(np.flatnonzero(powers)[-1])
    powers = powers[: last + 1]
    powers /= powers.sum()
    return PowerDelayProfile(powers, user_id=user_id, rms_delay_ns=float(ds_ns))


def sample_propagation(pdps, n_antennas, rng):
    """Draw i.i.d. CN(0, p_k[l]) taps for K users and N antennas."""
    if n_antennas < 1 or not pdps:
        raise ValueError("need at least one antenna and one user PDP")
    n_users = len(pdps)
    length = max(p.n_taps for p in pdps)
    taps = np.zeros((n_users, n_antennas, length), dtype=complex)
    for k, pdp in enumerate(pdps):
        scale = np.sqrt(pdp.powers / 2.0)
        shape = (n_antennas, pdp.n_taps)
        taps[k, :, : pdp.n_taps] = scale * (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ChannelSet(taps, "propagation", list(pdps))


def sample_calibration(n_antennas, n_subcarriers, mag_range, phase_range, rng):
    """Draw independent tx and rx chain gains per (antenna, subcarrier)."""
    a, b = mag_range
    lo, hi = phase_range
    if not (0 < a <= b):
        raise ValueError("magnitude range must satisfy 0 < a <= b")
    if lo > hi:
        raise ValueError("phase range must satisfy lo <= hi")

    def draw():
        mag = rng.uniform(a, b, size=(n_antennas, n_subcarriers))
        phase = rng.uniform(lo, hi, size=(n_antennas, n_subcarriers))
        return mag * np.exp(1j * phase)

    return CalibrationProfile(draw(), draw())


def identity_calibration(n_antennas, n_subcarriers):
    """Perfectly reciprocal chains: all gains 1."""
    ones = np.ones((n_antennas, n_subcarriers), dtype=complex)
    return CalibrationProfile(ones.copy(), ones.copy())


def expected_chain_gain(mag_range, phase_range):
    """Closed-form mean of one chain gain xi*exp(j*phi), both uniform.

    For a symmetric phase range [-c, c] this is mean(xi) * sin(c)/c, real.
    """
    a, b = mag_range
    lo, hi = phase_range
    mean_mag = 0.5 * (a + b)
    if hi == lo:
        mean_phase = np.exp(1j * lo)
    else:
        mean_phase = ((np.sin(hi) - np.sin(lo))
                      + 1j * (np.cos(lo) - np.cos(hi))) / (hi - lo)
    return mean_mag * mean_phase


def apply_calibration(propagation, cal, direction):
    """Attach chain responses to the propagation channel.

    direction "uplink" applies the BS receive chains (h^u = h star c_r),
    "downlink" the transmit chains (h^d = c_t star h). Convolution is
    circular over the M-point calibration grid, so the M-point DFT of the
    result is exactly the per-subcarrier product of gains and channel
    response. Output length is M.
    """
    if propagation.role != "propagation":
        raise ValueError("expected a propagation ChannelSet, got role %r"
                         % propagation.role)
    M = cal.n_subcarriers
    if propagation.n_taps > M:
        raise ValueError("channel length %d exceeds calibration grid %d"
                         % (propagation.n_taps, M))
    if direction == "uplink":
        gains, role = cal.rx_gains, "uplink"
    elif direction == "downlink":
        gains, role = cal.tx_gains, "downlink"
    else:
        raise ValueError("direction must be 'uplink' or 'downlink'")

    freq = np.fft.fft(propagation.taps, n=M, axis=2) * gains[None, :, :]
    taps = np.fft.ifft(freq, axis=2)
    return ChannelSet(taps, role, propagation.pdps)


def inject_csi_error(uplink, stats_per_user, rng):
    """Add CN(0, sigma_et^2) estimation error on each user's first L taps.

    stats_per_user is one CsiErrorStats per user (per-user tap counts can
    differ when delay spreads do).
    """
    taps = uplink.taps.copy()
    n_ant = uplink.n_antennas
    for k, (stats, pdp) in enumerate(zip(stats_per_user, uplink.pdps)):
        if stats.sigma_et_sq < 0:
            raise ValueError("sigma_et_sq must be >= 0")
        if stats.sigma_et_sq == 0:
            continue
        length = pdp.n_taps
        scale = np.sqrt(stats.sigma_et_sq / 2.0)
        err = scale * (rng.standard_normal((n_ant, length))
                       + 1j * rng.standard_normal((n_ant, length)))
        taps[k, :, :length] += err
    return ChannelSet(taps, "estimated-uplink", uplink.pdps)


def awgn(stream, sigma_eta_sq, rng):
    """Add circularly symmetric white Gaussian noise per sample."""
    if sigma_eta_sq < 0:
        raise ValueError("noise variance must be >= 0")
    if sigma_eta_sq == 0:
        return stream
    scale = np.sqrt(sigma_eta_sq / 2.0)
    noise = scale * (rng.standard_normal(stream.shape)
                     + 1j * rng.standard_normal(stream.shape))
    return stream + noise
