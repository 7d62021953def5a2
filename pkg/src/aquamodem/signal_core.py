"""Core signal types, modulation constants, and correlation/resampling utilities.

Everything in this module is a pure function over immutable inputs and is safe
to call from multiple threads.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve


@dataclass(frozen=True)
class ModemParams:
    """Chirp modulation constants.

    sf      bits per symbol (2**sf distinguishable chirp shifts)
    bw_hz   chirp bandwidth
    fs_hz   sample rate
    f0_hz   lower edge of the transmission band
    """

    sf: int = 5
    bw_hz: float = 2000.0
    fs_hz: float = 48000.0
    f0_hz: float = 1500.0

    def __post_init__(self):
        if self.sf < 1:
            raise ValueError(f"sf must be >= 1, got {self.sf}")
        if self.bw_hz <= 0 or self.fs_hz <= 0:
            raise ValueError("bw_hz and fs_hz must be positive")
        if self.f0_hz < 0:
            raise ValueError(f"f0_hz must be >= 0, got {self.f0_hz}")
        if self.f0_hz + self.bw_hz > self.fs_hz / 2:
            raise ValueError(
                f"band [{self.f0_hz}, {self.f0_hz + self.bw_hz}] Hz exceeds "
                f"Nyquist {self.fs_hz / 2} Hz"
            )
        ns = self.fs_hz * (2**self.sf) / self.bw_hz
        if abs(ns - round(ns)) > 1e-9:
            raise ValueError(
                f"samples per symbol fs*2^sf/bw = {ns} is not an integer"
            )

    @property
    def n_symbols(self) -> int:
        """Alphabet size 2**sf."""
        return 1 << self.sf

    @property
    def ts_s(self) -> float:
        """Symbol duration in seconds, 2**sf / bw."""
        return (1 << self.sf) / self.bw_hz

    @property
    def ns(self) -> int:
        """Samples per symbol."""
        return round(self.fs_hz * self.ts_s)

    @property
    def bin_hz(self) -> float:
        """Spectral bin spacing fs/ns; equals bw/2**sf by construction."""
        return self.fs_hz / self.ns

    @property
    def data_rate_bps(self) -> float:
        return self.sf / self.ts_s


DEFAULT_PARAMS = ModemParams()


@dataclass(frozen=True)
class SampleBuffer:
    """Real-valued audio samples at a fixed sample rate."""

    samples: np.ndarray
    fs_hz: float = DEFAULT_PARAMS.fs_hz

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if self.fs_hz <= 0:
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))


def concat(buffers: list[SampleBuffer]) -> SampleBuffer:
    """Concatenate buffers; all must share one sample rate."""
    if not buffers:
        raise ValueError("need at least one buffer")
    fs = buffers[0].fs_hz
    for b in buffers:
        if b.fs_hz != fs:
            raise ValueError(f"sample rate mismatch: {b.fs_hz} != {fs}")
    return SampleBuffer(np.concatenate([b.samples for b in buffers]), fs)


def cross_correlate(
    a: SampleBuffer, b: SampleBuffer, method: str = "auto"
) -> np.ndarray:
    """Normalized cross-correlation of template b against a, one value per lag.

    Output k is the correlation of b with a[k : k+len(b)], normalized by the
    sliding-window energy of a times the energy of b, so a perfect match
    scores 1.0 regardless of gain. Lags run 0 .. len(a)-len(b).

    method: "direct" evaluates the sums exactly (oracle path), "fft" uses
    FFT convolution, "auto" picks by size.
    """
    if a.fs_hz != b.fs_hz:
        raise ValueError(f"sample rate mismatch: {a.fs_hz} != {b.fs_hz}")
    if len(b) == 0:
        raise ValueError("template must be nonempty")
    if len(a) < len(b):
        raise ValueError(f"signal ({len(a)}) shorter than template ({len(b)})")
    x, t = a.samples, b.samples
    m = len(t)
    if method == "auto":
        method = "fft" if len(x) * m > 1_000_000 else "direct"
    if method == "direct":
        num = np.correlate(x, t, mode="valid")
    elif method == "fft":
        num = fftconvolve(x, t[::-1], mode="valid")
    else:
        raise ValueError(f"unknown method {method!r}")

    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    window_energy = csum[m:] - csum[:-m]
    denom = np.sqrt(window_energy * np.dot(t, t))
    out = np.zeros_like(num)
    ok = denom > 0
    out[ok] = num[ok] / denom[ok]
    return out


def resample_linear(
    buf: SampleBuffer, src_start: float, src_len: float, dst_len: int
) -> SampleBuffer:
    """Uniformly resample a (fractional) span of buf to dst_len samples.

    Output sample j reads source position src_start + j*(src_len-1)/(dst_len-1)
    (inclusive endpoints), linearly interpolated, so an integer-aligned span
    with src_len == dst_len copies exactly.
    """
    if dst_len < 1:
        raise ValueError(f"dst_len must be >= 1, got {dst_len}")
    if src_start < 0 or src_start + src_len > len(buf):
        raise ValueError(
            f"span [{src_start}, {src_start + src_len}) outside buffer "
            f"of length {len(buf)}"
        )
    if dst_len == 1:
        pos = np.array([src_start])
    else:
        pos = src_start + np.arange(dst_len) * ((src_len - 1) / (dst_len - 1))
    out = np.interp(pos, np.arange(len(buf)), buf.samples)
    return SampleBuffer(out, buf.fs_hz)


def write_wav(path, buf: SampleBuffer) -> None:
    """Write mono 16-bit little-endian WAV; amplitudes scaled by 32767 and
    saturated on export. This is the only place amplitudes are clipped."""
    pcm = np.clip(np.round(buf.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(buf.fs_hz)))
        w.writeframes(pcm.tobytes())


def read_wav(path) -> SampleBuffer:
    """Read a mono 16-bit WAV into a SampleBuffer (amplitudes / 32767)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"expected mono WAV, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"expected 16-bit WAV, got {8 * w.getsampwidth()}-bit")
        fs = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return SampleBuffer(samples, float(fs))
