"""MMSE time-domain equalization trained on known training symbols.

Coefficients solve the ridge-regularized Wiener problem built from empirical
auto/cross-correlations of one received training symbol against the known
transmitted one, with the desired response delayed by `offset` samples. The
same filter is then applied to the data symbols of the group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve_toeplitz

from .signal_core import ModemParams, SampleBuffer


@dataclass(frozen=True)
class EqualizerConfig:
    """Filter geometry and regularization.

    taps    FIR length in samples
    offset  decision delay of the Wiener target, in samples
    regularization  explicit ridge term; None estimates the received noise
                    power from out-of-band energy of the training symbol
    """

    taps: int = 240
    offset: int = 80
    regularization: float | None = None

    def __post_init__(self):
        if self.taps < 1:
            raise ValueError("taps must be >= 1")
        if not 0 <= self.offset < self.taps:
            raise ValueError("offset must satisfy 0 <= offset < taps")
        if self.regularization is not None and self.regularization < 0:
            raise ValueError("regularization must be >= 0")


def _out_of_band_noise_power(
    samples: np.ndarray, params: ModemParams, guard_hz: float = 250.0
) -> float:
    """Per-sample noise variance estimated from spectrum outside the band."""
    spectrum = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(len(samples), 1.0 / params.fs_hz)
    mask = (freqs < params.f0_hz - guard_hz) | (
        freqs > params.f0_hz + params.bw_hz + guard_hz
    )
    mask &= freqs > 0
    if not np.any(mask):
        return 0.0
    return float(np.mean(np.abs(spectrum[mask]) ** 2) / len(samples))


def estimate(
    received_training: SampleBuffer,
    known_training: SampleBuffer,
    cfg: EqualizerConfig,
    params: ModemParams | None = None,
) -> np.ndarray:
    """Wiener coefficients mapping the received training onto the known one.

    Solves (R + lambda*I) w = p with R the Toeplitz matrix of the received
    signal's empirical autocorrelation and p its cross-correlation with the
    known signal delayed by cfg.offset. Deterministic for fixed inputs.
    """
    if len(received_training) != len(known_training):
        raise ValueError("training buffers must have equal length")
    r = received_training.samples
    k = known_training.samples
    n = len(r)
    if n < cfg.taps:
        raise ValueError(f"training length {n} shorter than {cfg.taps} taps")

    acorr = np.correlate(r, r, mode="full")[n - 1 : n - 1 + cfg.taps]
    # Autocorrelation method over the zero-padded window: the desired response
    # is the full known symbol delayed by offset, so p[i] = c_kr[i - offset]
    # with c_kr[l] = sum_m k[m] r[m-l]. On an identity channel p is exactly
    # the offset column of the Toeplitz matrix and w collapses to an impulse.
    c_kr = np.correlate(k, r, mode="full")
    p = c_kr[n - 1 - cfg.offset : n - 1 - cfg.offset + cfg.taps]

    if cfg.regularization is not None:
        lam = cfg.regularization
    else:
        noise = _out_of_band_noise_power(r, params or ModemParams())
        lam = n * noise + 1e-8 * acorr[0]
    first_col = acorr.copy()
    first_col[0] += lam
    try:
        w = solve_toeplitz(first_col, p)
    except LinAlgError as exc:
        raise ValueError(
            "normal equations are singular; increase regularization"
        ) from exc
    if not np.all(np.isfinite(w)):
        raise ValueError("normal equations are ill-conditioned; increase regularization")
    return w


def apply(
    w: np.ndarray, window: SampleBuffer, cfg: EqualizerConfig, out_len: int | None = None
) -> SampleBuffer:
    """Equalize a symbol window that carries `taps` leading context samples.

    The window layout is [taps context | symbol body | optional trailing
    context]; the output is the filtered body, re-aligned by the decision
    delay and truncated to out_len (default: everything after the leading
    context). Trailing context only improves support near the symbol end.
    """
    w = np.asarray(w, dtype=np.float64)
    if len(window) < cfg.taps:
        raise ValueError(
            f"window of {len(window)} samples is shorter than {cfg.taps} taps"
        )
    if out_len is None:
        out_len = len(window) - cfg.taps
    full = np.convolve(w, window.samples)
    out = full[cfg.taps + cfg.offset : cfg.taps + cfg.offset + out_len]
    if len(out) < out_len:
        out = np.concatenate([out, np.zeros(out_len - len(out))])
    return SampleBuffer(out, window.fs_hz)
