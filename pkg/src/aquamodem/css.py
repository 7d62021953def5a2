"""Chirp-spread-spectrum modulation and de-chirp demodulation.

Each symbol value v in [0, 2**sf) is the band-limited up-chirp with its
starting frequency cyclically shifted by v * bw/2**sf inside [f0, f0+bw).
Demodulation multiplies a symbol window by the conjugate reference chirp
and locates the dominant spectral bin.
"""

from __future__ import annotations

import numpy as np

from .signal_core import ModemParams, SampleBuffer


def _phase(params: ModemParams, freqs_hz: np.ndarray) -> np.ndarray:
    # Accumulated phase; modulator and demodulator must share this
    # construction so de-chirp tones land exactly on spectrum bins.
    return 2.0 * np.pi * np.cumsum(freqs_hz) / params.fs_hz


def _symbol_freqs(params: ModemParams, value: int) -> np.ndarray:
    n = np.arange(params.ns)
    shift = value * params.bw_hz / params.n_symbols
    return params.f0_hz + (shift + params.bw_hz * n / params.ns) % params.bw_hz


def base_chirp(params: ModemParams, direction: str = "up") -> SampleBuffer:
    """One symbol-long chirp sweeping the whole band, unit amplitude."""
    n = np.arange(params.ns)
    if direction == "up":
        freqs = params.f0_hz + params.bw_hz * n / params.ns
    elif direction == "down":
        freqs = params.f0_hz + params.bw_hz * (1.0 - n / params.ns)
    else:
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    return SampleBuffer(np.cos(_phase(params, freqs)), params.fs_hz)


def modulate(params: ModemParams, symbols) -> SampleBuffer:
    """Concatenated chirp waveforms for a symbol sequence."""
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if len(symbols) and (symbols.min() < 0 or symbols.max() >= params.n_symbols):
        raise ValueError(f"symbol values must be in [0, {params.n_symbols})")
    if len(symbols) == 0:
        return SampleBuffer(np.zeros(0), params.fs_hz)
    waves = [np.cos(_phase(params, _symbol_freqs(params, int(v)))) for v in symbols]
    return SampleBuffer(np.concatenate(waves), params.fs_hz)


def _dechirp_reference(params: ModemParams) -> np.ndarray:
    # Conjugate analytic chirp sweeping 0..bw. Multiplying a received symbol
    # by this leaves a tone at f0 + v*bin_hz (plus its alias one bandwidth
    # lower once the symbol's sweep wraps).
    n = np.arange(params.ns)
    freqs = params.bw_hz * n / params.ns
    return np.exp(-1j * _phase(params, freqs))


def candidate_magnitudes(params: ModemParams, window: SampleBuffer) -> np.ndarray:
    """De-chirp spectrum folded onto the 2**sf candidate symbol bins.

    Symbol v concentrates at bin f0/bin_hz + v before its frequency wrap and
    at the alias bin one alphabet-width lower after it; both are summed so
    every candidate keeps full energy at 48 kHz passband sampling.
    """
    if window.fs_hz != params.fs_hz:
        raise ValueError(f"sample rate mismatch: {window.fs_hz} != {params.fs_hz}")
    if len(window) != params.ns:
        raise ValueError(f"window must be {params.ns} samples, got {len(window)}")
    spectrum = np.fft.fft(window.samples * _dechirp_reference(params))
    mag = np.abs(spectrum)
    base = round(params.f0_hz / params.bin_hz)
    m = params.n_symbols
    v = np.arange(m)
    return mag[(base + v) % params.ns] + mag[(base + v - m) % params.ns]


def demodulate(params: ModemParams, window: SampleBuffer) -> tuple[int, float]:
    """Decide the symbol in a one-symbol window.

    Returns (value, confidence) where confidence is the peak candidate
    magnitude over the mean candidate magnitude; ~1 means nothing dominates
    (e.g. silence or pure noise).
    """
    cand = candidate_magnitudes(params, window)
    value = int(np.argmax(cand))
    mean = float(np.mean(cand))
    confidence = float(cand[value] / mean) if mean > 0 else 1.0
    return value, confidence


def demodulate_stream(params: ModemParams, buf: SampleBuffer) -> np.ndarray:
    """Demodulate back-to-back symbol windows (transmitter-aligned)."""
    if len(buf) % params.ns != 0:
        raise ValueError(f"buffer length {len(buf)} is not a multiple of {params.ns}")
    values = []
    for i in range(len(buf) // params.ns):
        window = SampleBuffer(
            buf.samples[i * params.ns : (i + 1) * params.ns], buf.fs_hz
        )
        values.append(demodulate(params, window)[0])
    return np.array(values, dtype=np.int64)
