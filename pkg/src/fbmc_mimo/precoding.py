"""Per-subcarrier linear precoding and per-user fractionally spaced prefilters.

The downlink transmitter is two-stage: each user's real symbol grid is first
convolved per subcarrier with a short half-symbol-spaced prefilter, then mixed
across antennas by a conventional per-subcarrier precoder. The prefilter is
designed statistically against the user's power delay profile, which is the
deterministic equivalent channel the array hardens to at large N.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PowerDelayProfile
from .fbmc import PrototypeFilter

_QUARTER_TURNS = np.array([1.0 + 0j, 1j, -1.0 + 0j, -1j])


def freq_response(channels: ChannelSet, n_subcarriers):
    """M-point DFT of each (user, antenna) impulse response.

    Returns an (M, K, N) array: one K x N matrix per subcarrier.
    """
    if channels.n_taps > n_subcarriers:
        raise ValueError("channel length %d exceeds %d subcarriers"
                         % (channels.n_taps, n_subcarriers))
    resp = np.fft.fft(channels.taps, n=n_subcarriers, axis=2)
    return np.ascontiguousarray(np.moveaxis(resp, 2, 0))


@dataclass
class PrecoderSet:
    """Per-subcarrier K x N precoding matrices.

    The transmit vector on subcarrier m is P_m^H d_m, so row k of P_m is the
    (conjugated) beam of user k. user_scale holds the per-user row scaling
    once unit average transmit power has been imposed.
    """

    matrices: np.ndarray
    kind: str
    noise_var: float = 0.0
    user_scale: np.ndarray = None

    @property
    def n_subcarriers(self):
        return self.matrices.shape[0]

    @property
    def n_users(self):
        return self.matrices.shape[1]

    @property
    def n_antennas(self):
        return self.matrices.shape[2]


def build_precoder(response, kind, noise_var=0.0):
    """MRT, ZF, or MMSE precoder from the (M, K, N) subcarrier responses.

    MRT scales each row by its inverse power; ZF right-inverts the channel
    row space; MMSE regularizes the ZF Gram matrix with the noise variance.
    """
    H = np.asarray(response)
    if H.ndim != 3:
        raise ValueError("expected (M, K, N) subcarrier responses")
    n_sub, n_users, n_ant = H.shape
    if n_users > n_ant:
        raise ValueError("need K <= N, got K=%d N=%d" % (n_users, n_ant))
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")

    if kind == "mrt":
        row_power = np.sum(np.abs(H) ** 2, axis=2)
        if np.any(row_power == 0):
            raise ValueError("zero-power channel row")
        mats = H / row_power[:, :, None]
    elif kind in ("zf", "mmse"):
        gram = H @ H.conj().transpose(0, 2, 1)
        if kind == "mmse":
            gram = gram + noise_var * np.eye(n_users)
        try:
            mats = np.linalg.solve(gram, H)
        except np.linalg.LinAlgError:
            # batched solve hides the offender; find it for the error message
            for m in range(n_sub):
                try:
                    np.linalg.solve(gram[m], H[m])
                except np.linalg.LinAlgError:
                    raise ValueError(
                        "singular channel Gram matrix on subcarrier %d" % m)
            raise
    else:
        raise ValueError("kind must be 'mrt', 'zf', or 'mmse'")
    return PrecoderSet(mats, kind, noise_var=float(noise_var))


def normalize_user_power(precoder: PrecoderSet):
    """Scale each user's rows for unit average transmit power.

    The per-user scale is 1/sqrt(mean_m ||row_k of P_m||^2); the same scale
    is the receiver's fixed gain reference for that user.
    """
    row_power = np.mean(np.sum(np.abs(precoder.matrices) ** 2, axis=2), axis=0)
    if np.any(row_power == 0):
        raise ValueError("cannot normalize a zero precoder row")
    scale = 1.0 / np.sqrt(row_power)
    mats = precoder.matrices * scale[None, :, None]
    return PrecoderSet(mats, precoder.kind, noise_var=precoder.noise_var,
                       user_scale=scale)


def equivalent_pdp(pdp, subcarrier, n_subcarriers):
    """Modulate a PDP onto a subcarrier: p[l] * exp(+2j*pi*l*m/M).

    This is the equivalent single-user channel the matched-filter beam
    converges to on that subcarrier.
    """
    powers = pdp.powers if isinstance(pdp, PowerDelayProfile) else np.asarray(pdp)
    if not 0 <= subcarrier < n_subcarriers:
        raise ValueError("subcarrier out of range")
    lags = np.arange(powers.size)
    return powers * np.exp(2j * np.pi * lags * subcarrier / n_subcarriers)


def min_response_span(filt: PrototypeFilter, n_channel_taps):
    """Smallest symmetric half-symbol span covering pulse x channel."""
    half = filt.m_subcarriers // 2
    reach = filt.n_taps - 1 + max(n_channel_taps - 1, 0)
    return -(-reach // half)


def t_half_spaced_equivalent(channel, filt: PrototypeFilter, span=None):
    """End-to-end half-symbol-spaced response through pulse pair and channel.

    t[n] = sum_v channel[v] * q[n*M/2 - v], with q the prototype's Nyquist
    autocorrelation. Returns an odd-length vector centered on lag 0 covering
    n in [-span, span].
    """
    vec = np.asarray(channel, dtype=complex)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError("channel must be a nonempty 1-D vector")
    half = filt.m_subcarriers // 2
    needed = min_response_span(filt, vec.size)
    if span is None:
        span = needed
    elif span < needed:
        raise ValueError("span %d too small, response support needs %d"
                         % (span, needed))
    center = filt.nyquist_center
    nyq = filt.nyquist
    out = np.zeros(2 * span + 1, dtype=complex)
    for n in range(-span, span + 1):
        lags = n * half - np.arange(vec.size)
        keep = (lags >= -center) & (lags <= center)
        if np.any(keep):
            out[n + span] = np.dot(vec[keep], nyq[center + lags[keep]])
    return out


def design_fsp(t, n_taps, mode, noise_weight=0.0, target="symbol",
               reference=None):
    """Least-squares prefilter flattening a half-symbol-spaced response.

    t must be odd-length, centered on lag 0. With target="symbol" the design
    drives the composite t * w towards a unit impulse on the full-symbol
    (even-lag) output lattice. With target="nyquist" it drives the composite
    on the *full* half-symbol lattice towards `reference`, the flat-channel
    response profile (centered, odd length): the half-symbol lattice samples
    the band at its Nyquist rate, so matching the profile there restores the
    prototype's orthogonality - cross-band leakage included, which the
    even-lag target cannot see.

    The decision lag d is the even lag with the most response energy, ties
    going to the most central candidate. 'zf' solves the unregularized
    problem (minimum-norm on rank deficiency), 'mmse' adds a ridge weight.

    Returns (taps, decision_lag).
    """
    t = np.asarray(t, dtype=complex)
    if t.ndim != 1 or t.size % 2 == 0:
        raise ValueError("t must be an odd-length centered vector")
    if n_taps < 1:
        raise ValueError("n_taps must be >= 1")
    if not np.any(t):
        raise ValueError("response is identically zero")
    if mode not in ("zf", "mmse"):
        raise ValueError("mode must be 'zf' or 'mmse'")
    if noise_weight < 0:
        raise ValueError("noise_weight must be >= 0")
    if target not in ("symbol", "nyquist"):
        raise ValueError("target must be 'symbol' or 'nyquist'")
    if target == "nyquist":
        if reference is None:
            raise ValueError("target 'nyquist' needs a reference profile")
        reference = np.asarray(reference)
        if reference.ndim != 1 or reference.size % 2 == 0:
            raise ValueError("reference must be an odd-length centered vector")

    span = t.size // 2

    def t_at(lag):
        lag = lag + span
        good = (lag >= 0) & (lag < t.size)
        return np.where(good, t[np.clip(lag, 0, t.size - 1)], 0.0)

    # composite output lags run over [-span, span + n_taps - 1]; decisions
    # sit on the even sublattice
    lo = -span if span % 2 == 0 else -span + 1
    even_lags = np.arange(lo, span + n_taps, 2)
    cols = np.arange(n_taps)

    energy = np.sum(np.abs(t_at(even_lags[:, None] - cols[None, :])) ** 2,
                    axis=1)
    best = energy == energy.max()
    centre = 0.5 * (even_lags[0] + even_lags[-1])
    order = np.abs(even_lags - centre)
    pick = np.flatnonzero(best)[np.argmin(order[best])]
    decision_lag = int(even_lags[pick])

    if target == "symbol":
        out_lags = even_lags
        desired = np.zeros(out_lags.size)
        desired[pick] = 1.0
    else:
        out_lags = np.arange(-span, span + n_taps)
        ref_span = reference.size // 2
        rel = out_lags - decision_lag
        inside = np.abs(rel) <= ref_span
        desired = np.zeros(out_lags.size, dtype=reference.dtype)
        desired[inside] = reference[rel[inside] + ref_span]
    conv = t_at(out_lags[:, None] - cols[None, :])

    if mode == "zf" or noise_weight == 0.0:
        taps, _, rank, _ = np.linalg.lstsq(conv, desired, rcond=None)
        if rank < n_taps:
            warnings.warn("rank-deficient prefilter design; "
                          "using minimum-norm solution", stacklevel=2)
    else:
        gram = conv.conj().T @ conv + noise_weight * np.eye(n_taps)
        taps = np.linalg.solve(gram, conv.conj().T @ desired)
    return taps, decision_lag


@dataclass
class FspBank:
    """Per (user, subcarrier) prefilter taps at half-symbol spacing.

    taps is (K, M, L); delay[k] is the decision lag the composite response
    was designed to peak at; comp_scale records any reciprocity compensation
    folded into the taps.
    """

    taps: np.ndarray
    delay: np.ndarray
    mode: str
    comp_scale: np.ndarray = None

    def __post_init__(self):
        if self.taps.ndim != 3:
            raise ValueError("bank taps must be (K, M, L)")
        self.delay = np.asarray(self.delay, dtype=int)
        if self.delay.shape != (self.taps.shape[0],):
            raise ValueError("need one decision delay per user")
        if self.comp_scale is None:
            self.comp_scale = np.ones(self.taps.shape[0], dtype=complex)

    @property
    def n_users(self):
        return self.taps.shape[0]

    @property
    def n_subcarriers(self):
        return self.taps.shape[1]

    @property
    def n_taps(self):
        return self.taps.shape[2]


def build_fsp_bank(pdps, filt: PrototypeFilter, n_taps, mode,
                   noise_weight=0.0, target="nyquist"):
    """Design one prefilter per user and deploy it on every subcarrier.

    The response each subcarrier must flatten is the pulse autocorrelation
    convolved with the subcarrier-modulated PDP *after* the receive bank's
    own derotation, which cancels the modulation: every subcarrier of one
    user sees the same baseband response, so a single design serves all M.
    The default design matches the composite to the flat-channel profile on
    the full half-symbol lattice, restoring orthogonality rather than just
    the decimated impulse.

    The staggered grid advances the quarter-turn phase by one step per tap
    lag, so the taps deployed on the grid are the designed taps rotated by
    a quarter turn per (decision lag - tap index).
    """
    M = filt.m_subcarriers
    n_users = len(pdps)
    taps = np.zeros((n_users, M, n_taps), dtype=complex)
    delay = np.zeros(n_users, dtype=int)
    reference = None
    if target == "nyquist":
        reference = t_half_spaced_equivalent(np.array([1.0]), filt).real
    for k, pdp in enumerate(pdps):
        base = t_half_spaced_equivalent(pdp.powers, filt)
        w, d = design_fsp(base, n_taps, mode, noise_weight=noise_weight,
                          target=target, reference=reference)
        grid_taps = w * _QUARTER_TURNS[(d - np.arange(n_taps)) % 4]
        taps[k, :, :] = grid_taps[None, :]
        delay[k] = d
    return FspBank(taps, delay, mode)


def identity_fsp_bank(n_users, n_subcarriers):
    """Single-tap pass-through bank (no prefiltering)."""
    taps = np.ones((n_users, n_subcarriers, 1), dtype=complex)
    return FspBank(taps, np.zeros(n_users, dtype=int), "zf")


def apply_fsp(grid, bank: FspBank):
    """Convolve each (user, subcarrier) symbol stream with its prefilter.

    grid is (K, M, n_instants), real or complex. Output has the same shape;
    the composite decision lag is absorbed so sample n of the output drives
    the decision for input sample n. Symbols outside the burst are zero.
    """
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.shape[:2] != bank.taps.shape[:2]:
        raise ValueError("grid must be (K, M, T) matching the bank")
    n_inst = grid.shape[2]
    out = np.zeros(grid.shape, dtype=complex)
    idx = np.arange(n_inst)
    for k in range(bank.n_users):
        for j in range(bank.n_taps):
            src = idx + bank.delay[k] - j
            good = (src >= 0) & (src < n_inst)
            out[k, :, good] += (bank.taps[k, :, j][None, :]
                                * grid[k, :, src[good]])
    return out


def correction_factor(mean_gain, sigma_ef_sq):
    """Average end-to-end shrinkage from chain mismatch and CSI error."""
    if sigma_ef_sq < 0:
        raise ValueError("sigma_ef_sq must be >= 0")
    return mean_gain ** 2 / (1.0 + sigma_ef_sq)


def compensate_fsp(bank: FspBank, gain):
    """Pre-scale a bank by 1/gain to undo a known end-to-end shrinkage.

    gain may be scalar or per-user (K,).
    """
    gain = np.broadcast_to(np.asarray(gain, dtype=complex),
                           (bank.n_users,)).copy()
    if np.any(gain == 0):
        raise ValueError("compensation gain must be nonzero")
    taps = bank.taps / gain[:, None, None]
    return FspBank(taps, bank.delay.copy(), bank.mode,
                   comp_scale=bank.comp_scale * gain)
