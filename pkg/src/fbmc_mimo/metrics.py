"""SINR and gain estimators used by the Monte Carlo harness."""

import numpy as np

SINR_CAP = 1e8  # +80 dB; interference-free runs saturate here


def _capped(num, den):
    if den <= num / SINR_CAP:
        return SINR_CAP
    return min(num / den, SINR_CAP)


def estimate_sinr(sent, received):
    """Regression SINR: scaling of the decisions is not counted as error.

    Fits received ~ alpha * sent, then returns alpha^2<s,s>/||r - alpha s||^2,
    capped at +80 dB. Meaningful from about 1e3 symbol pairs up.
    """
    s = np.asarray(sent, dtype=float).ravel()
    r = np.asarray(received, dtype=float).ravel()
    if s.shape != r.shape:
        raise ValueError("sent/received length mismatch")
    energy = np.dot(s, s)
    if energy == 0:
        raise ValueError("sent symbols are all zero")
    alpha = np.dot(r, s) / energy
    err = r - alpha * s
    return _capped(alpha ** 2 * energy, np.dot(err, err))


def fixed_reference_sinr(sent, decisions):
    """Decision-point SINR against the known nominal gain.

    decisions must already be scaled by the receiver's fixed gain reference,
    so any residual gain offset counts as distortion. This is the harness's
    curve metric: a compensation scheme that restores the nominal level is
    rewarded, which plain regression SINR cannot see.
    """
    s = np.asarray(sent, dtype=float).ravel()
    d = np.asarray(decisions, dtype=float).ravel()
    if s.shape != d.shape:
        raise ValueError("sent/decisions length mismatch")
    energy = np.dot(s, s)
    if energy == 0:
        raise ValueError("sent symbols are all zero")
    err = d - s
    return _capped(energy, np.dot(err, err))


def estimate_gain_pilot(pilot_sent, pilot_received):
    """Least-squares complex gain from known real pilots.

    Operates on the raw complex matched-filter outputs, before any
    real-part slicing.
    """
    s = np.asarray(pilot_sent, dtype=float).ravel()
    r = np.asarray(pilot_received).ravel()
    if s.size == 0:
        raise ValueError("no pilot symbols")
    if s.shape != r.shape:
        raise ValueError("pilot sent/received length mismatch")
    energy = np.dot(s, s)
    if energy == 0:
        raise ValueError("pilot energy is zero")
    return complex(np.dot(r, s) / energy)
