"""Packet detection and training-symbol time synchronization.

The receiver anchors on the preamble, then tracks each training symbol with a
cross-correlation search bounded to +/- delta samples around the previous
detection. Raw per-group drifts are smoothed with a centered moving average
and sequentially clamped so consecutive timestamps never move more than delta
apart, then data-symbol windows are cut between consecutive training
timestamps and resampled to the nominal symbol length to undo motion-induced
dilation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .packet import FramePlan
from .signal_core import SampleBuffer, cross_correlate, resample_linear


class TruncatedPacketError(ValueError):
    """Training-symbol search ran past the signal end; carries the drift of
    the groups located so far."""

    def __init__(self, message: str, raw_partial: np.ndarray):
        super().__init__(message)
        self.raw_partial = raw_partial


@dataclass(frozen=True)
class SyncConfig:
    """Drift-tracking parameters and ablation switches."""

    delta: int = 40  # max timestamp step between consecutive training symbols
    ma_window: int = 5  # centered moving-average width (groups)
    disable_sync: bool = False  # use nominal timestamps, no tracking
    disable_smooth_bound: bool = False  # use raw detections directly
    equalize_once: bool = False  # consumed by the receive chain

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.ma_window < 1:
            raise ValueError("ma_window must be >= 1")


@dataclass(frozen=True)
class DriftTrace:
    """Per-training-symbol timing: raw detections, smoothed, bounded, and the
    final corrected start indices."""

    raw: np.ndarray
    smoothed: np.ndarray
    bounded: np.ndarray
    timestamps: np.ndarray

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [np.arange(len(self.raw)), self.raw, self.smoothed, self.bounded]
        )
        header = "group,raw,smoothed,bounded"
        np.savetxt(path, rows, fmt="%.3f", delimiter=",", header=header, comments="")


def detect_preamble(
    signal: SampleBuffer, plan: FramePlan, threshold: float = 0.15
) -> int | None:
    """Index of the first preamble whose normalized correlation reaches
    threshold, or None.

    The first threshold crossing is refined to the correlation argmax within
    one preamble length, so trailing packet structure cannot pull the
    detection forward.
    """
    m = len(plan.preamble)
    if len(signal) < m:
        return None
    corr = cross_correlate(signal, plan.preamble)
    above = np.flatnonzero(corr >= threshold)
    if len(above) == 0:
        return None
    first = int(above[0])
    window = corr[first : first + m]
    return first + int(np.argmax(window))


def capture_packet(
    signal: SampleBuffer, start: int, plan: FramePlan, groups: int, margin: int | None = None
) -> SampleBuffer:
    """Slice a fixed window slightly longer than the packet from the detected
    start; short reads are zero-padded so downstream indexing stays valid."""
    if margin is None:
        margin = plan.group_samples + plan.params.ns
    total = len(plan.preamble) + groups * plan.group_samples + margin
    chunk = signal.samples[start : start + total]
    if len(chunk) < total:
        chunk = np.concatenate([chunk, np.zeros(total - len(chunk))])
    return SampleBuffer(chunk, signal.fs_hz)


def locate_training_symbols(
    signal: SampleBuffer, packet_start: int, groups: int, plan: FramePlan, cfg: SyncConfig
) -> np.ndarray:
    """Raw drift (detected - nominal start) of each training symbol.

    packet_start is the sample index where group 0 nominally begins (preamble
    end). Each search is confined to +/- delta around the previous detection
    advanced by one group; the first search anchors on packet_start itself.
    With disable_sync the nominal grid is returned (all-zero drift).
    A search window that would run past the signal raises
    TruncatedPacketError carrying the groups located so far.
    """
    if groups < 1:
        raise ValueError("need at least one group")
    if cfg.disable_sync:
        return np.zeros(groups)
    template = plan.training_waveform
    ns = plan.params.ns
    raw = np.zeros(groups)
    prev = float(packet_start)
    for i in range(groups):
        center = prev + (plan.group_samples if i > 0 else 0)
        lo = max(0, int(round(center)) - cfg.delta)
        hi = int(round(center)) + cfg.delta
        if hi + ns > len(signal):
            raise TruncatedPacketError(
                f"search for training symbol {i} ran past the signal end",
                raw[:i],
            )
        segment = SampleBuffer(signal.samples[lo : hi + ns], signal.fs_hz)
        corr = cross_correlate(segment, template)
        detected = lo + int(np.argmax(corr))
        raw[i] = detected - (packet_start + i * plan.group_samples)
        prev = float(detected)
    return raw


def smooth_and_bound(
    raw: np.ndarray, packet_start: int, plan: FramePlan, cfg: SyncConfig
) -> DriftTrace:
    """Moving-average the raw drift, then clamp successive steps to delta.

    The average is centered with the window shrinking at the edges; bounding
    runs sequentially from the first training symbol, anchored at the
    preamble-derived start (a virtual drift of 0 before group 0). With
    disable_smooth_bound the raw drift passes through unchanged.
    """
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    if len(raw) == 0:
        raise ValueError("raw drift sequence is empty")
    if cfg.disable_smooth_bound:
        smoothed = raw.copy()
        bounded = raw.copy()
    else:
        half = cfg.ma_window // 2
        smoothed = np.array(
            [
                np.mean(raw[max(0, i - half) : i + (cfg.ma_window - half)])
                for i in range(len(raw))
            ]
        )
        bounded = np.empty_like(smoothed)
        prev = 0.0
        for i, s in enumerate(smoothed):
            bounded[i] = np.clip(s, prev - cfg.delta, prev + cfg.delta)
            prev = bounded[i]
    timestamps = packet_start + np.arange(len(raw)) * plan.group_samples + bounded
    return DriftTrace(raw=raw, smoothed=smoothed, bounded=bounded, timestamps=timestamps)


def group_symbol_spacing(timestamps: np.ndarray, plan: FramePlan) -> np.ndarray:
    """Per-group data-symbol spacing in (fractional) samples.

    Group i spans timestamps[i]..timestamps[i+1], split into N+1 equal
    sub-spans; the last group extrapolates the spacing of the previous pair.
    A single-group packet falls back to the nominal symbol length.
    """
    t = np.asarray(timestamps, dtype=np.float64)
    if len(t) < 1:
        raise ValueError("need at least one timestamp")
    if len(t) == 1:
        return np.array([float(plan.params.ns)])
    spans = np.diff(t)
    if np.any(spans <= 0):
        raise ValueError("timestamps must be strictly increasing")
    spacing = spans / (plan.n_data_per_group + 1)
    return np.concatenate([spacing, [spacing[-1]]])


def extract_data_symbols(
    signal: SampleBuffer, timestamps: np.ndarray, plan: FramePlan
) -> list[SampleBuffer]:
    """Cut every data symbol between consecutive training timestamps and
    resample each to exactly ns samples (Doppler/dilation compensation)."""
    spacing = group_symbol_spacing(timestamps, plan)
    ns = plan.params.ns
    windows = []
    for i, t in enumerate(np.asarray(timestamps, dtype=np.float64)):
        w = spacing[i]
        for j in range(1, plan.n_data_per_group + 1):
            windows.append(resample_linear(signal, t + j * w, w, ns))
    return windows
