"""OQAM/SMT filter bank waveform engine.

Real data symbols sit on an M x n time-frequency grid at T/2 spacing.
Subcarrier m at instant n carries the pulse

    f_{m,n}[l] = f[l - n*M/2] * exp(j*2*pi*m*l/M) * exp(j*pi*(m+n)/2),

where f is a PHYDYAS prototype filter of length kappa*M. Synthesis
superposes these pulses; analysis is the matched filter (conjugate inner
product with f_{m,n}), returned complex so downstream stages can use the
value before real-part slicing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# Frequency-sampling side coefficients H_1..H_{kappa-1} from the PHYDYAS
# reference design. H_0 = 1 and H_k^2 + H_{kappa-k}^2 = 1.
_PHYDYAS_SIDE = {
    2: (math.sqrt(2.0) / 2.0,),
    3: (0.91143783, 0.41143783),
    4: (0.97195983, math.sqrt(2.0) / 2.0, 0.23514695),
}


@dataclass
class PrototypeFilter:
    """Unit-energy prototype pulse f[l] and its self-correlation q[l].

    Attributes
    ----------
    m_subcarriers : int
        Number of subcarriers M (even).
    overlap_kappa : int
        Overlap factor; the filter spans kappa*M samples.
    taps : ndarray
        Real pulse f[l], length kappa*M, sum(f**2) == 1.
    nyquist : ndarray
        q[l] = (f star f*[-l]), length 2*kappa*M - 1; q peaks at 1 in the
        middle and crosses (near) zero at multiples of M.
    """

    m_subcarriers: int
    overlap_kappa: int
    taps: np.ndarray
    nyquist: np.ndarray = field(repr=False)

    @property
    def n_taps(self):
        return self.taps.size

    @property
    def nyquist_center(self):
        """Index of lag 0 in the `nyquist` array."""
        return self.taps.size - 1

    def nyquist_at_lag(self, lag):
        """q at an integer sample lag, zero outside the stored support."""
        idx = self.nyquist_center + int(lag)
        if idx < 0 or idx >= self.nyquist.size:
            return 0.0
        return self.nyquist[idx]


def design_phydyas(m_subcarriers, overlap_kappa):
    """Design a PHYDYAS prototype filter for M subcarriers, overlap kappa.

    The continuous frequency-sampling prototype is sampled on l = 0..kappa*M-1
    and normalized to unit energy, so the matched-filter peak q[0] is exactly 1.
    kappa in {2, 3, 4} (the published coefficient sets); M must be even.
    """
    M = int(m_subcarriers)
    kappa = int(overlap_kappa)
    if kappa < 2:
        raise ValueError("overlap factor must be >= 2, got %d" % kappa)
    if kappa not in _PHYDYAS_SIDE:
        raise ValueError("no PHYDYAS coefficient set for kappa=%d" % kappa)
    if M < 4 or M % 2:
        raise ValueError("M must be even and >= 4, got %d" % M)

    n = kappa * M
    l = np.arange(n)
    taps = np.ones(n)
    for k, h_k in enumerate(_PHYDYAS_SIDE[kappa], start=1):
        taps += 2.0 * h_k * np.cos(2.0 * np.pi * k * (l - n / 2.0) / n)
    taps /= math.sqrt(np.sum(taps ** 2))
    nyquist = np.convolve(taps, taps[::-1])
    return PrototypeFilter(M, kappa, taps, nyquist)


def stream_length(n_symbols, filt):
    """Sample count of a burst of n_symbols OQAM instants."""
    return (n_symbols - 1) * filt.m_subcarriers // 2 + filt.n_taps


def synthesize(grid, filt):
    """Synthesis filter bank: OQAM grid -> baseband sample stream.

    Parameters
    ----------
    grid : array (..., M, n_symbols)
        Per-subcarrier symbols s_{m,n} (complex after precoding). Leading
        axes are batch dimensions (e.g. antennas).
    filt : PrototypeFilter

    Returns
    -------
    ndarray (..., (n_symbols-1)*M/2 + kappa*M) complex
    """
    grid = np.asarray(grid)
    M = filt.m_subcarriers
    if grid.ndim < 2 or grid.shape[-2] != M:
        raise ValueError("grid must have %d subcarrier rows" % M)
    n_sym = grid.shape[-1]
    kappa = filt.overlap_kappa
    half = M // 2

    m = np.arange(M)[:, None]
    n = np.arange(n_sym)[None, :]
    # Absolute-time modulation: exp(j*2*pi*m*l/M) at l = u + n*M/2 splits into
    # a per-block exp(j*2*pi*m*u/M) and a (-1)^(m*n) carry.
    phase = np.exp(1j * np.pi * (m + n) / 2) * np.where((m * n) % 2, -1.0, 1.0)
    coeff = grid * phase

    base = np.fft.ifft(coeff, axis=-2) * M
    blocks = np.concatenate([base] * kappa, axis=-2) * filt.taps[:, None]

    out = np.zeros(grid.shape[:-2] + (stream_length(n_sym, filt),), dtype=complex)
    for nn in range(n_sym):
        out[..., nn * half: nn * half + kappa * M] += blocks[..., nn]
    return out


def analyze(stream, filt, n_symbols):
    """Analysis filter bank: matched filter at every (m, n) slot.

    Returns the complex inner products <r, f_{m,n}>; take the real part for
    OQAM decisions. Streams longer than the burst (channel tails) are fine,
    shorter ones are an error.
    """
    stream = np.asarray(stream)
    M = filt.m_subcarriers
    kappa = filt.overlap_kappa
    half = M // 2
    need = stream_length(n_symbols, filt)
    if stream.shape[-1] < need:
        raise ValueError(
            "stream too short: %d samples < %d needed for %d instants"
            % (stream.shape[-1], need, n_symbols))

    m = np.arange(M)[:, None]
    n = np.arange(n_symbols)[None, :]
    phase = np.exp(-1j * np.pi * (m + n) / 2) * np.where((m * n) % 2, -1.0, 1.0)

    out = np.empty(stream.shape[:-1] + (M, n_symbols), dtype=complex)
    for nn in range(n_symbols):
        seg = stream[..., nn * half: nn * half + kappa * M] * filt.taps
        folded = seg.reshape(seg.shape[:-1] + (kappa, M)).sum(axis=-2)
        out[..., :, nn] = np.fft.fft(folded, axis=-1)
    out *= phase
    return out
