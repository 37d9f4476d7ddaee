"""Link-level simulator for a multi-antenna FBMC/OQAM downlink.

The transmit chain prefilters each user's symbol grid with a short
half-symbol-spaced filter, then applies a conventional per-subcarrier
linear precoder (MRT/ZF/MMSE) across the antennas. The package bundles
the OQAM modem, TDL channel and reciprocity-calibration models, an OFDM
benchmark chain, and a Monte Carlo harness that sweeps SINR against the
antenna count.
"""

from .channel import (CalibrationProfile, ChannelSet, CsiErrorStats,
                      PowerDelayProfile, apply_calibration, awgn,
                      build_tdl_pdp, expected_chain_gain,
                      identity_calibration, inject_csi_error, load_tdl_table,
                      sample_calibration, sample_propagation)
from .fbmc import PrototypeFilter, analyze, design_phydyas, stream_length, \
    synthesize
from .harness import (ALL_SCHEMES, SchemeCurve, SimConfig, SinrReport,
                      config_from_file, config_to_file, emit,
                      ofdm_downlink_trial, run_fbmc_trial, sweep, write_csv,
                      write_plot_script)
from .metrics import estimate_gain_pilot, estimate_sinr, fixed_reference_sinr
from .ofdm import (OfdmConfig, ofdm_demodulate, ofdm_downlink_chain,
                   ofdm_modulate, qam_symbols)
from .precoding import (FspBank, PrecoderSet, apply_fsp, build_fsp_bank,
                        build_precoder, compensate_fsp, correction_factor,
                        design_fsp, equivalent_pdp, freq_response,
                        identity_fsp_bank, normalize_user_power,
                        t_half_spaced_equivalent)

__version__ = "1.0.0"

__all__ = [
    "ALL_SCHEMES", "CalibrationProfile", "ChannelSet", "CsiErrorStats",
    "FspBank", "OfdmConfig", "PowerDelayProfile", "PrecoderSet",
    "PrototypeFilter", "SchemeCurve", "SimConfig", "SinrReport",
    "analyze", "apply_calibration", "apply_fsp", "awgn", "build_fsp_bank",
    "build_precoder", "build_tdl_pdp", "compensate_fsp", "config_from_file",
    "config_to_file", "correction_factor", "design_fsp", "design_phydyas",
    "emit", "equivalent_pdp", "estimate_gain_pilot", "estimate_sinr",
    "expected_chain_gain", "fixed_reference_sinr", "freq_response",
    "identity_calibration", "identity_fsp_bank", "inject_csi_error",
    "load_tdl_table", "normalize_user_power", "ofdm_demodulate",
    "ofdm_downlink_chain", "ofdm_downlink_trial", "ofdm_modulate",
    "qam_symbols", "run_fbmc_trial", "sample_calibration",
    "sample_propagation", "stream_length", "sweep", "synthesize",
    "t_half_spaced_equivalent", "write_csv", "write_plot_script",
]
