"""CP-OFDM benchmark chain.

Same channels and per-subcarrier precoders as the filter bank chain; with a
sufficient cyclic prefix every subcarrier sees a perfectly flat gain, which is
the comparison level the prefiltered chain aims for.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .precoding import PrecoderSet


@dataclass
class OfdmConfig:
    n_subcarriers: int
    cp_len: int
    qam_order: int = 4

    def __post_init__(self):
        if not 0 <= self.cp_len < self.n_subcarriers:
            raise ValueError("need 0 <= cp_len < n_subcarriers")
        if self.qam_order != 4:
            raise ValueError("only 4-QAM is supported")

    @property
    def block_len(self):
        return self.n_subcarriers + self.cp_len


def ofdm_modulate(blocks, cfg: OfdmConfig):
    """Unitary inverse DFT per block plus cyclic prefix.

    blocks is (..., M, B); the stream is (..., B * (M + cp_len)).
    """
    blocks = np.asarray(blocks)
    if blocks.shape[-2] != cfg.n_subcarriers:
        raise ValueError("block size must equal n_subcarriers")
    x = np.fft.ifft(blocks, axis=-2, norm="ortho")
    with_cp = np.concatenate([x[..., x.shape[-2] - cfg.cp_len:, :], x],
                             axis=-2)
    per_block = np.moveaxis(with_cp, -2, -1)
    return per_block.reshape(per_block.shape[:-2] + (-1,))


def ofdm_demodulate(stream, cfg: OfdmConfig, n_blocks):
    """Strip prefixes and apply the unitary DFT per block."""
    stream = np.asarray(stream)
    need = n_blocks * cfg.block_len
    if stream.shape[-1] < need:
        raise ValueError("stream too short: %d < %d"
                         % (stream.shape[-1], need))
    blocks = stream[..., :need].reshape(stream.shape[:-1]
                                        + (n_blocks, cfg.block_len))
    blocks = blocks[..., cfg.cp_len:]
    return np.moveaxis(np.fft.fft(blocks, axis=-1, norm="ortho"), -1, -2)


def qam_symbols(n_users, n_subcarriers, n_blocks, rng):
    """Unit-energy 4-QAM: both real parts drawn from +-1/sqrt(2)."""
    bits = rng.integers(0, 2, size=(2, n_users, n_subcarriers, n_blocks))
    return ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2)


def ofdm_downlink_chain(data, precoder: PrecoderSet, downlink: ChannelSet,
                        cfg: OfdmConfig, noise=None):
    """Precode, modulate, convolve with the downlink channel, demodulate.

    data is (K, M, B). The cyclic prefix must cover the channel memory; a
    short prefix is a hard error, not a silent degradation. Returns the
    per-user subcarrier symbol estimates (K, M, B), before any gain
    normalization.
    """
    if downlink.n_taps - 1 > cfg.cp_len:
        raise ValueError("cyclic prefix %d shorter than channel memory %d"
                         % (cfg.cp_len, downlink.n_taps - 1))
    data = np.asarray(data)
    n_users, M, n_blocks = data.shape
    if M != cfg.n_subcarriers:
        raise ValueError("data grid does not match n_subcarriers")

    # antenna blocks: X[i, m, b] = sum_k conj(P_m[k, i]) d[k, m, b]
    ant = np.einsum("mki,kmb->imb", precoder.matrices.conj(), data)
    streams = ofdm_modulate(ant, cfg)

    n_fft = 1
    while n_fft < streams.shape[-1] + downlink.n_taps - 1:
        n_fft *= 2
    sf = np.fft.fft(streams, n=n_fft, axis=-1)
    hf = np.fft.fft(downlink.taps, n=n_fft, axis=-1)
    received = np.fft.ifft(np.einsum("kif,if->kf", hf, sf), axis=-1)
    received = received[:, : streams.shape[-1]]
    if noise is not None:
        received = received + noise[:, : received.shape[-1]]
    return ofdm_demodulate(received, cfg, n_blocks)
