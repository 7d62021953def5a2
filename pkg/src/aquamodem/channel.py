"""Underwater channel simulator: motion-induced time-varying delay, multipath
replicas, frequency-selective attenuation, and shaped ambient noise.

All randomness derives from the profile seed, so identical (signal, profile)
pairs produce bit-identical output. Preset magnitudes (SNRs, tap gains, sway)
are calibration choices, not measured constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import firwin2, fftconvolve

PROFILE_VERSION = 1

IN_BAND_LO_HZ = 1500.0
IN_BAND_HI_HZ = 3500.0

# Default response: flat through the band, then a steep roll-off above
# 3.5 kHz (-12 dB per octave).
ROLLOFF_RESPONSE = (
    (0.0, 1.0),
    (3500.0, 1.0),
    (7000.0, 0.25),
    (14000.0, 0.0625),
    (24000.0, 0.015625),
)


@dataclass(frozen=True)
class ChannelTap:
    """One propagation path.

    sway_samples oscillates the path delay sinusoidally (peak amplitude in
    samples) with period sway_period_s, modelling path-geometry change that
    is not a plain sender-receiver range drift.
    """

    delay_s: float
    gain: float
    sway_samples: float = 0.0
    sway_period_s: float = 2.0

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("tap delay must be >= 0")
        if not np.isfinite(self.gain):
            raise ValueError("tap gain must be finite")
        if self.sway_samples < 0 or self.sway_period_s <= 0:
            raise ValueError("invalid sway parameters")


@dataclass(frozen=True)
class NoiseSpec:
    """Ambient noise: white Gaussian base with low-frequency emphasis, an
    optional bursty 1-4 kHz component, and optional short in-band impulses
    (bubbles, pouch transients). The whole mix is scaled so its in-band power
    sits at snr_db below the in-band signal power."""

    snr_db: float
    low_boost_db: float = 12.0
    low_boost_below_hz: float = 1000.0
    burst: bool = False
    burst_gain: float = 1.0
    impulse_rate_hz: float = 0.0  # expected impulses per second
    impulse_gain: float = 12.0  # impulse amplitude over the noise-bed RMS

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.impulse_rate_hz < 0 or self.impulse_gain < 0:
            raise ValueError("impulse parameters must be >= 0")


@dataclass(frozen=True)
class Motion:
    """Sender-receiver range change expressed as a delay trajectory tau(t).

    kind "linear": tau grows by slope_spg samples per segment.
    kind "walk": mean-reverting random walk whose per-segment slope is an
    AR(1) sequence hard-clipped to +/- max_step_spg; the reversion keeps the
    total excursion bounded the way a swimmer wanders rather than departs.

    segment_s defaults to one symbol-group duration (64 ms) so the per-group
    drift budget of the synchronizer maps directly onto these numbers.
    """

    kind: str = "linear"
    slope_spg: float = 0.0
    max_step_spg: float = 0.0
    segment_s: float = 0.064
    revert: float = 0.08  # fraction of accumulated delay pulled back per segment

    def __post_init__(self):
        if self.kind not in ("linear", "walk"):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.segment_s <= 0:
            raise ValueError("segment_s must be positive")
        if self.max_step_spg < 0:
            raise ValueError("max_step_spg must be >= 0")
        if not 0 <= self.revert < 1:
            raise ValueError("revert must be in [0, 1)")


@dataclass(frozen=True)
class ChannelProfile:
    name: str = "custom"
    taps: tuple[ChannelTap, ...] = (ChannelTap(0.0, 1.0),)
    freq_response: tuple[tuple[float, float], ...] | None = None
    noise: NoiseSpec | None = None
    motion: Motion | None = None
    seed: int = 0
    drift_budget_spg: float = 40.0  # validation bound on per-segment drift

    def __post_init__(self):
        if not self.taps:
            raise ValueError("profile needs at least one tap")
        if self.motion is not None:
            step = (
                abs(self.motion.slope_spg)
                if self.motion.kind == "linear"
                else self.motion.max_step_spg
            )
            if step > self.drift_budget_spg:
                raise ValueError(
                    f"motion step {step} exceeds drift budget "
                    f"{self.drift_budget_spg} samples per segment"
                )

    def is_identity(self) -> bool:
        return (
            self.noise is None
            and self.motion is None
            and self.freq_response is None
            and len(self.taps) == 1
            and self.taps[0].delay_s == 0.0
            and self.taps[0].gain == 1.0
            and self.taps[0].sway_samples == 0.0
        )


def _motion_delay(motion: Motion, n: int, fs: float, rng) -> np.ndarray:
    """Piecewise-linear tau(t) in samples, evaluated at every output sample."""
    seg = max(1, int(round(motion.segment_s * fs)))
    n_seg = -(-n // seg)
    if motion.kind == "linear":
        slopes = np.full(n_seg, motion.slope_spg)
    else:
        # relative speed changes gradually: AR(1) slope sequence, hard-clipped
        # to the per-segment budget, with a spring term bounding the excursion
        rho = 0.9
        scale = motion.max_step_spg / 2.6
        slopes = np.zeros(n_seg)
        s = 0.0
        tau = 0.0
        for j in range(n_seg):
            s = rho * s + np.sqrt(1 - rho**2) * scale * rng.standard_normal()
            step = np.clip(s - motion.revert * tau,
                           -motion.max_step_spg, motion.max_step_spg)
            slopes[j] = step
            tau += step
    knots = np.concatenate([[0.0], np.cumsum(slopes)])
    return np.interp(np.arange(n), np.arange(n_seg + 1) * seg, knots)


def _delayed(samples: np.ndarray, delay: np.ndarray | float) -> np.ndarray:
    """Read samples at fractional positions n - delay (zero outside)."""
    n = len(samples)
    pos = np.arange(n) - delay
    return np.interp(pos, np.arange(n), samples, left=0.0, right=0.0)


def _response_filter(points, fs: float, numtaps: int = 257) -> np.ndarray:
    freqs = np.array([p[0] for p in points], dtype=np.float64)
    gains = np.array([p[1] for p in points], dtype=np.float64)
    nyq = fs / 2
    freqs = np.clip(freqs, 0, nyq)
    if freqs[0] != 0:
        freqs = np.concatenate([[0.0], freqs])
        gains = np.concatenate([[gains[0]], gains])
    if freqs[-1] != nyq:
        freqs = np.concatenate([freqs, [nyq]])
        gains = np.concatenate([gains, [gains[-1]]])
    return firwin2(numtaps, freqs / nyq, gains)


def _zero_delay_filter(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Linear-phase FIR with the group delay removed, same length out."""
    full = fftconvolve(samples, taps)
    lag = (len(taps) - 1) // 2
    return full[lag : lag + len(samples)]


def in_band_power(samples: np.ndarray, fs: float) -> float:
    """Mean power inside the transmission band, via the spectrum."""
    spectrum = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(len(samples), 1.0 / fs)
    mask = (freqs >= IN_BAND_LO_HZ) & (freqs <= IN_BAND_HI_HZ)
    # one-sided: double everything except DC/Nyquist, negligible here
    return 2.0 * float(np.sum(np.abs(spectrum[mask]) ** 2)) / len(samples) ** 2


def make_noise(spec: NoiseSpec, n: int, fs: float, rng) -> np.ndarray:
    """Unit-scale shaped noise; caller scales it to the SNR target."""
    base = rng.standard_normal(n)
    boost = 10 ** (spec.low_boost_db / 20)
    lo = spec.low_boost_below_hz
    shaping = _response_filter(
        ((0.0, boost), (lo, boost), (lo * 1.3, 1.0), (fs / 2, 1.0)), fs, 129
    )
    out = _zero_delay_filter(base, shaping)
    if spec.burst:
        burst_src = rng.standard_normal(n)
        band = _response_filter(
            ((0.0, 0.0), (900.0, 0.0), (1100.0, 1.0), (3900.0, 1.0),
             (4100.0, 0.0), (fs / 2, 0.0)), fs, 129)
        banded = _zero_delay_filter(burst_src, band)
        # on/off envelope: smoothed random gate, roughly 25% duty cycle
        gate = (rng.random(max(1, n // 2400)) < 0.25).astype(float)
        envelope = np.repeat(gate, 2400)[:n]
        if len(envelope) < n:
            envelope = np.concatenate([envelope, np.zeros(n - len(envelope))])
        smooth = np.hanning(961)
        envelope = fftconvolve(envelope, smooth / smooth.sum(), mode="same")
        out = out + spec.burst_gain * banded * envelope
    if spec.impulse_rate_hz > 0:
        count = rng.poisson(spec.impulse_rate_hz * n / fs)
        bed_rms = np.sqrt(np.mean(out**2))
        band = _response_filter(
            ((0.0, 0.0), (1200.0, 0.0), (1500.0, 1.0), (3500.0, 1.0),
             (3800.0, 0.0), (fs / 2, 0.0)), fs, 129)
        for _ in range(count):
            length = int(rng.integers(96, 240))
            pos = int(rng.integers(0, max(1, n - length)))
            click = _zero_delay_filter(rng.standard_normal(length), band)
            click *= np.hanning(length)
            out[pos : pos + length] += spec.impulse_gain * bed_rms * click
    return out


def apply_channel(signal, profile: ChannelProfile):
    """Run a buffer through the channel; deterministic for a given seed.

    Stage order: motion delay, multipath taps (with optional per-tap sway),
    frequency-response filter, additive shaped noise at the in-band SNR
    target. The identity profile returns the input samples unchanged.
    """
    from .signal_core import SampleBuffer

    if profile.is_identity():
        return SampleBuffer(signal.samples.copy(), signal.fs_hz)
    fs = signal.fs_hz
    rng = np.random.default_rng(profile.seed)
    x = signal.samples
    n = len(x)

    if profile.motion is not None:
        x = _delayed(x, _motion_delay(profile.motion, n, fs, rng))

    t = np.arange(n) / fs
    y = np.zeros(n)
    for tap in profile.taps:
        delay = tap.delay_s * fs
        if tap.sway_samples > 0.0:
            phase = rng.uniform(0, 2 * np.pi)
            delay = delay + tap.sway_samples * np.sin(
                2 * np.pi * t / tap.sway_period_s + phase
            )
            y += tap.gain * _delayed(x, delay)
        elif delay == 0.0:
            y += tap.gain * x
        else:
            y += tap.gain * _delayed(x, delay)

    if profile.freq_response is not None:
        y = _zero_delay_filter(y, _response_filter(profile.freq_response, fs))

    if profile.noise is not None:
        noise = make_noise(profile.noise, n, fs, rng)
        p_sig = in_band_power(y, fs)
        p_noise = in_band_power(noise, fs)
        if p_sig <= 0:
            raise ValueError("cannot set an SNR against a silent signal")
        target = p_sig / 10 ** (profile.noise.snr_db / 10)
        y = y + noise * np.sqrt(target / p_noise)

    return SampleBuffer(y, fs)


PRESET_NAMES = ("ideal", "static_near", "static_far", "mobile_moderate", "mobile_intense")


def preset(name: str, seed: int = 0) -> ChannelProfile:
    """Documented, versioned channel presets.

    ideal            exact passthrough
    static_near      short range: high SNR, one faint echo
    static_far       long range: low SNR, longer and stronger multipath
    mobile_moderate  drifting range (<= 20 samples/group) plus a swaying echo
    mobile_intense   drift up to the full 40 samples/group budget, a strong
                     swaying echo, bursty pouch-style noise
    """
    if name == "ideal":
        return ChannelProfile(name=name, seed=seed)
    if name == "static_near":
        return ChannelProfile(
            name=name,
            taps=(ChannelTap(0.0, 1.0), ChannelTap(0.002, 0.25)),
            freq_response=ROLLOFF_RESPONSE,
            noise=NoiseSpec(snr_db=18.0),
            seed=seed,
        )
    if name == "static_far":
        return ChannelProfile(
            name=name,
            taps=(
                ChannelTap(0.0, 1.0),
                ChannelTap(0.003, 0.55),
                ChannelTap(0.0072, 0.35),
            ),
            freq_response=ROLLOFF_RESPONSE,
            noise=NoiseSpec(snr_db=6.0),
            seed=seed,
        )
    if name == "mobile_moderate":
        return ChannelProfile(
            name=name,
            taps=(
                ChannelTap(0.0, 1.0),
                ChannelTap(0.0006, 0.5, sway_samples=4.0, sway_period_s=1.4),
                ChannelTap(0.0025, 0.5, sway_samples=8.0, sway_period_s=2.6),
            ),
            freq_response=ROLLOFF_RESPONSE,
            noise=NoiseSpec(snr_db=12.0, burst=True, burst_gain=1.5,
                            impulse_rate_hz=1.5, impulse_gain=10.0),
            motion=Motion(kind="walk", max_step_spg=20.0),
            seed=seed,
        )
    if name == "mobile_intense":
        return ChannelProfile(
            name=name,
            taps=(
                ChannelTap(0.0, 1.0),
                ChannelTap(0.0006, 0.8, sway_samples=6.0, sway_period_s=1.1),
                ChannelTap(0.0025, 0.7, sway_samples=16.0, sway_period_s=2.1),
            ),
            freq_response=ROLLOFF_RESPONSE,
            noise=NoiseSpec(snr_db=9.0, burst=True, burst_gain=2.5,
                            impulse_rate_hz=3.0, impulse_gain=15.0),
            motion=Motion(kind="walk", max_step_spg=40.0),
            seed=seed,
        )
    raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def profile_to_dict(profile: ChannelProfile) -> dict:
    d = {
        "version": PROFILE_VERSION,
        "name": profile.name,
        "seed": profile.seed,
        "drift_budget_spg": profile.drift_budget_spg,
        "taps": [
            {
                "delay_s": t.delay_s,
                "gain": t.gain,
                "sway_samples": t.sway_samples,
                "sway_period_s": t.sway_period_s,
            }
            for t in profile.taps
        ],
        "freq_response": (
            [list(p) for p in profile.freq_response]
            if profile.freq_response is not None
            else None
        ),
        "noise": (
            {
                "snr_db": profile.noise.snr_db,
                "low_boost_db": profile.noise.low_boost_db,
                "low_boost_below_hz": profile.noise.low_boost_below_hz,
                "burst": profile.noise.burst,
                "burst_gain": profile.noise.burst_gain,
            }
            if profile.noise is not None
            else None
        ),
        "motion": (
            {
                "kind": profile.motion.kind,
                "slope_spg": profile.motion.slope_spg,
                "max_step_spg": profile.motion.max_step_spg,
                "segment_s": profile.motion.segment_s,
            }
            if profile.motion is not None
            else None
        ),
    }
    return d


def profile_from_dict(d: dict) -> ChannelProfile:
    version = d.get("version", PROFILE_VERSION)
    if version != PROFILE_VERSION:
        raise ValueError(f"unsupported profile version {version}")
    return ChannelProfile(
        name=d.get("name", "custom"),
        taps=tuple(ChannelTap(**t) for t in d["taps"]),
        freq_response=(
            tuple(tuple(p) for p in d["freq_response"])
            if d.get("freq_response") is not None
            else None
        ),
        noise=NoiseSpec(**d["noise"]) if d.get("noise") is not None else None,
        motion=Motion(**d["motion"]) if d.get("motion") is not None else None,
        seed=d.get("seed", 0),
        drift_budget_spg=d.get("drift_budget_spg", 40.0),
    )


def save_profile(profile: ChannelProfile, path) -> None:
    with open(path, "w") as f:
        json.dump(profile_to_dict(profile), f, indent=2)
        f.write("\n")


def load_profile(path) -> ChannelProfile:
    with open(path) as f:
        return profile_from_dict(json.load(f))


def with_seed(profile: ChannelProfile, seed: int) -> ChannelProfile:
    return replace(profile, seed=seed)
