"""On-air packet assembly: preamble, then groups of one training symbol
followed by n_data_per_group data symbols."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import coding, css
from .signal_core import ModemParams, SampleBuffer, concat

PREAMBLE_UP_CHIRPS = 2
PREAMBLE_DOWN_CHIRPS = 2


def make_preamble(params: ModemParams) -> SampleBuffer:
    """Two up-chirps then two down-chirps spanning the band (4*ns samples).

    The up/down alternation gives a sharp autocorrelation peak and low
    correlation against the packet body, which is built from up-chirps.
    """
    up = css.base_chirp(params, "up")
    down = css.base_chirp(params, "down")
    return concat([up] * PREAMBLE_UP_CHIRPS + [down] * PREAMBLE_DOWN_CHIRPS)


@dataclass(frozen=True)
class FramePlan:
    """Packet layout: training cadence and the waveforms framing each group."""

    params: ModemParams = field(default_factory=ModemParams)
    n_data_per_group: int = 3
    training_waveform: SampleBuffer | None = None
    preamble: SampleBuffer | None = None

    def __post_init__(self):
        if self.n_data_per_group < 1:
            raise ValueError("n_data_per_group must be >= 1")
        if self.training_waveform is None:
            # Known chirp (symbol 0) maximizes correlation sharpness for both
            # equalizer training and timing.
            object.__setattr__(self, "training_waveform", css.base_chirp(self.params))
        if self.preamble is None:
            object.__setattr__(self, "preamble", make_preamble(self.params))
        if len(self.training_waveform) != self.params.ns:
            raise ValueError("training waveform must be one symbol long")
        for buf in (self.training_waveform, self.preamble):
            if buf.fs_hz != self.params.fs_hz:
                raise ValueError("waveform sample rate differs from params")

    @property
    def group_samples(self) -> int:
        """Samples per symbol group: (N+1) * ns."""
        return (self.n_data_per_group + 1) * self.params.ns

    @property
    def group_duration_s(self) -> float:
        return self.group_samples / self.params.fs_hz


@dataclass(frozen=True)
class FrameGeometry:
    """Frame arithmetic for a payload size under a given plan."""

    payload_bits: int
    codewords: int
    blocks: int
    data_symbols: int
    padded_data_symbols: int
    groups: int
    total_symbols: int
    airtime_s: float  # symbols only, preamble excluded
    total_samples: int  # preamble included


@dataclass(frozen=True)
class FrameMap:
    """Resolved sample offsets of a built packet."""

    preamble_start: int
    group_starts: np.ndarray
    data_symbol_count: int
    total_samples: int
    airtime_s: float  # whole packet, preamble included


def overhead_ratio(n_data_per_group: int) -> float:
    """Fraction of on-air symbols spent on training: 1/(N+1)."""
    if n_data_per_group < 1:
        raise ValueError("n_data_per_group must be >= 1")
    return 1.0 / (n_data_per_group + 1)


def frame_geometry(payload_bits: int, plan: FramePlan) -> FrameGeometry:
    """Frame arithmetic: payload bits -> codewords, blocks, symbols, airtime."""
    if payload_bits < 0:
        raise ValueError("payload_bits must be >= 0")
    codewords = -(-payload_bits // 4)
    blocks = -(-codewords // coding.BLOCK_CODEWORDS)
    data_symbols = coding.BLOCK_SYMBOLS * blocks
    n = plan.n_data_per_group
    padded = -(-data_symbols // n) * n
    groups = padded // n
    total_symbols = groups * (n + 1)
    airtime = total_symbols * plan.params.ts_s
    total_samples = len(plan.preamble) + groups * plan.group_samples
    return FrameGeometry(
        payload_bits=payload_bits,
        codewords=codewords,
        blocks=blocks,
        data_symbols=data_symbols,
        padded_data_symbols=padded,
        groups=groups,
        total_symbols=total_symbols,
        airtime_s=airtime,
        total_samples=total_samples,
    )


def build_packet(plan: FramePlan, symbols) -> tuple[SampleBuffer, FrameMap]:
    """Assemble preamble + [training | N data symbols] groups.

    Data symbols are zero-padded to a whole number of groups; padding symbols
    are transmitted so the group geometry stays uniform.
    """
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    n = plan.n_data_per_group
    if len(symbols) % n:
        symbols = np.concatenate([symbols, np.zeros(n - len(symbols) % n, np.int64)])
    groups = len(symbols) // n
    parts = [plan.preamble]
    starts = []
    pos = len(plan.preamble)
    for g in range(groups):
        starts.append(pos)
        parts.append(plan.training_waveform)
        parts.append(css.modulate(plan.params, symbols[g * n : (g + 1) * n]))
        pos += plan.group_samples
    buf = concat(parts)
    fmap = FrameMap(
        preamble_start=0,
        group_starts=np.array(starts, dtype=np.int64),
        data_symbol_count=len(symbols),
        total_samples=len(buf),
        airtime_s=len(buf) / plan.params.fs_hz,
    )
    return buf, fmap
