"""End-to-end orchestration: transmit/receive chains, trial metrics,
parameter sweeps, and CSV reporting.

Every reported number is regenerable from (config, base seed): per-trial
seeds derive from numpy's SeedSequence mixing of (base_seed, cell_index,
trial_index), and the channel consumes the derived seed alone.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import coding, css, equalizer as eqz, tokens as tok
from .channel import ChannelProfile, Motion, NoiseSpec, apply_channel, preset, with_seed
from .packet import FramePlan, FrameGeometry, build_packet, frame_geometry
from .signal_core import ModemParams, SampleBuffer
from .sync import (
    DriftTrace,
    SyncConfig,
    capture_packet,
    detect_preamble,
    extract_data_symbols,
    group_symbol_spacing,
    locate_training_symbols,
    smooth_and_bound,
)

CONFIG_VERSION = 1

ABLATIONS = ("full", "wo_sb", "wo_sync", "one_equal")

SWEEP_AXES = ("snr", "n_data_per_group", "mobility", "ablation", "p")

CSV_COLUMNS = (
    "experiment", "axis", "cell", "kind", "trial", "seed", "profile",
    "detected", "ser", "ber", "ier", "corrected",
)


@dataclass(frozen=True)
class RunConfig:
    """Everything the transmit/receive chain needs besides the channel."""

    params: ModemParams = field(default_factory=ModemParams)
    n_data_per_group: int = 3
    sync: SyncConfig = field(default_factory=SyncConfig)
    equalizer: eqz.EqualizerConfig | None = field(default_factory=eqz.EqualizerConfig)
    codec: tok.CodecConfig = field(default_factory=tok.CodecConfig)
    detect_threshold: float = 0.15
    lead_in_samples: int = 4000
    tail_samples: int = 8000

    def plan(self) -> FramePlan:
        return FramePlan(params=self.params, n_data_per_group=self.n_data_per_group)


@dataclass
class ReceiveResult:
    detected: bool
    packet_start: int | None = None
    trace: DriftTrace | None = None
    symbols: np.ndarray | None = None  # demodulated data symbols, pre-decode
    confidences: np.ndarray | None = None
    bits: np.ndarray | None = None
    corrected: int = 0
    truncated: bool = False


@dataclass
class TrialMetrics:
    """Outcome of one end-to-end trial; rates are None when the preamble was
    missed. ser counts payload-bearing data symbols only (training and group
    padding excluded)."""

    detected: bool
    ser: float | None
    ber: float | None
    ier: float | None
    corrected: int
    seed: int
    profile: str
    trace: DriftTrace | None = None

    def as_row(self) -> dict:
        return {
            "detected": int(self.detected),
            "ser": "" if self.ser is None else f"{self.ser:.10g}",
            "ber": "" if self.ber is None else f"{self.ber:.10g}",
            "ier": "" if self.ier is None else f"{self.ier:.10g}",
            "corrected": self.corrected,
            "profile": self.profile,
            "seed": self.seed,
        }


def ablation_config(cfg: RunConfig, name: str) -> RunConfig:
    """Receiver variant for one ablation arm."""
    if name == "full":
        sync = replace(cfg.sync, disable_sync=False, disable_smooth_bound=False,
                       equalize_once=False)
    elif name == "wo_sb":
        sync = replace(cfg.sync, disable_smooth_bound=True)
    elif name == "wo_sync":
        sync = replace(cfg.sync, disable_sync=True)
    elif name == "one_equal":
        sync = replace(cfg.sync, equalize_once=True)
    else:
        raise ValueError(f"unknown ablation {name!r}; choose from {ABLATIONS}")
    return replace(cfg, sync=sync)


def transmit(bits, cfg: RunConfig) -> tuple[SampleBuffer, np.ndarray, FrameGeometry]:
    """Payload bits -> padded on-air buffer; returns the transmitted symbol
    values and frame geometry alongside."""
    plan = cfg.plan()
    symbols = coding.encode_payload(bits)
    geometry = frame_geometry(len(np.atleast_1d(bits)), plan)
    packet, _ = build_packet(plan, symbols)
    samples = np.concatenate([
        np.zeros(cfg.lead_in_samples),
        packet.samples,
        np.zeros(cfg.tail_samples),
    ])
    return SampleBuffer(samples, cfg.params.fs_hz), symbols, geometry


def receive_packet(
    signal: SampleBuffer, payload_bit_len: int, cfg: RunConfig
) -> ReceiveResult:
    """Full receive chain: detect, synchronize, equalize, demodulate, decode.

    A packet cut short in the recording decodes as many complete groups as
    the signal still covers (marked truncated) instead of failing.
    """
    plan = cfg.plan()
    params = cfg.params
    geometry = frame_geometry(payload_bit_len, plan)
    if geometry.groups == 0:
        return ReceiveResult(detected=True, symbols=np.zeros(0, np.int64),
                             bits=np.zeros(0, np.uint8))
    start = detect_preamble(signal, plan, cfg.detect_threshold)
    if start is None:
        return ReceiveResult(detected=False)

    avail = len(signal) - start - len(plan.preamble)
    groups = min(geometry.groups, avail // plan.group_samples)
    truncated = groups < geometry.groups
    if groups < 1:
        return ReceiveResult(detected=True, packet_start=start, truncated=True,
                             symbols=np.zeros(0, np.int64),
                             bits=np.zeros(0, np.uint8))

    cap = capture_packet(signal, start, plan, groups)
    body = len(plan.preamble)
    raw = locate_training_symbols(cap, body, groups, plan, cfg.sync)
    trace = smooth_and_bound(raw, body, plan, cfg.sync)

    ns = params.ns
    spacing = group_symbol_spacing(trace.timestamps, plan)
    values = []
    confs = []
    eq_cfg = cfg.equalizer
    w = None
    for i, t in enumerate(trace.timestamps):
        step = spacing[i]
        if eq_cfg is not None and (w is None or not cfg.sync.equalize_once):
            train_rx = _resample_span(cap, t, step, ns)
            w = eqz.estimate(train_rx, plan.training_waveform, eq_cfg, params)
        for j in range(1, plan.n_data_per_group + 1):
            pos = t + j * step
            if eq_cfg is None:
                window = _resample_span(cap, pos, step, ns)
            else:
                scale = step / ns
                lead = eq_cfg.taps * scale
                total = (eq_cfg.taps + ns + eq_cfg.offset) * scale
                ext = _resample_span(cap, pos - lead, total,
                                     eq_cfg.taps + ns + eq_cfg.offset)
                window = eqz.apply(w, ext, eq_cfg, out_len=ns)
            value, conf = css.demodulate(params, window)
            values.append(value)
            confs.append(conf)
    values = np.array(values, dtype=np.int64)

    blocks_avail = min(geometry.blocks, len(values) // coding.BLOCK_SYMBOLS)
    payload_symbols = values[: blocks_avail * coding.BLOCK_SYMBOLS]
    bit_len = min(payload_bit_len, blocks_avail * 4 * coding.BLOCK_CODEWORDS)
    if blocks_avail == geometry.blocks:
        bits, corrected = coding.decode_payload(payload_symbols, payload_bit_len)
    else:
        decoded, corrected = _decode_blocks(payload_symbols)
        bits = decoded[:bit_len]
    return ReceiveResult(
        detected=True,
        packet_start=start,
        trace=trace,
        symbols=values,
        confidences=np.array(confs),
        bits=bits,
        corrected=corrected,
        truncated=truncated,
    )


def _decode_blocks(symbols: np.ndarray) -> tuple[np.ndarray, int]:
    # partial decode for truncated packets: whole blocks only, no length check
    bits = []
    corrected = 0
    for i in range(0, len(symbols), coding.BLOCK_SYMBOLS):
        labels = [coding.gray_encode(int(v)) for v in symbols[i : i + coding.BLOCK_SYMBOLS]]
        for word in coding.deinterleave_block(np.array(labels)):
            data, fixed = coding.hamming74_decode(word)
            bits.append(data)
            corrected += fixed
    if not bits:
        return np.zeros(0, np.uint8), 0
    return np.concatenate(bits), corrected


def _resample_span(buf: SampleBuffer, start: float, length: float, dst: int) -> SampleBuffer:
    # tolerant variant of resample_linear: spans that poke past either edge
    # are zero-padded rather than rejected (capture margins make this rare)
    from .signal_core import resample_linear

    if start >= 0 and start + length <= len(buf):
        return resample_linear(buf, start, length, dst)
    pad = int(np.ceil(abs(length))) + 8
    samples = np.concatenate([np.zeros(pad), buf.samples, np.zeros(pad)])
    return resample_linear(SampleBuffer(samples, buf.fs_hz), start + pad, length, dst)


def derive_seed(base_seed: int, cell_index: int, trial_index: int) -> int:
    """Deterministic per-trial seed: SeedSequence mixing of the three indices."""
    ss = np.random.SeedSequence((base_seed, cell_index, trial_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_tokens(cfg: tok.CodecConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11)))
    return rng.integers(0, cfg.k_codebook, cfg.m_tokens)


def run_e2e(
    payload,
    profile: ChannelProfile,
    cfg: RunConfig,
    seed: int,
    perturb_p: int | None = None,
) -> TrialMetrics:
    """One full trial: tokens -> bits -> packet -> channel -> receiver -> tokens.

    payload may be a token sequence or None to draw a random one from the
    seed. perturb_p additionally corrupts 1..p tokens before transmission
    (token-layer error injection); IER is measured against the original
    sequence either way.
    """
    sent_tokens = (
        random_tokens(cfg.codec, seed)
        if payload is None
        else np.asarray(payload, dtype=np.int64)
    )
    tx_tokens = sent_tokens
    if perturb_p is not None:
        spec = tok.PerturbSpec(p=perturb_p)
        tx_tokens, _ = tok.perturb(
            sent_tokens, spec, cfg.codec,
            np.random.SeedSequence((seed, 0x9E3)))
    bits = tok.pack_tokens(tx_tokens, cfg.codec)
    signal, tx_symbols, geometry = transmit(bits, cfg)
    received = apply_channel(signal, with_seed(profile, seed))
    result = receive_packet(received, len(bits), cfg)
    if not result.detected:
        return TrialMetrics(
            detected=False, ser=None, ber=None, ier=None, corrected=0,
            seed=seed, profile=profile.name, trace=None,
        )
    n_payload = geometry.data_symbols
    rx_symbols = np.full(n_payload, -1, dtype=np.int64)
    got = min(n_payload, len(result.symbols))
    rx_symbols[:got] = result.symbols[:got]
    ser = float(np.mean(rx_symbols != tx_symbols[:n_payload])) if n_payload else 0.0

    rx_bits = np.full(len(bits), -1, dtype=np.int64)
    if result.bits is not None and len(result.bits):
        take = min(len(bits), len(result.bits))
        rx_bits[:take] = result.bits[:take]
    ber = float(np.mean(rx_bits != bits)) if len(bits) else 0.0

    if result.bits is not None and len(result.bits) == len(bits):
        rx_tokens = tok.unpack_tokens(result.bits, cfg.codec)
        ier = tok.ier(sent_tokens, rx_tokens)
    else:
        ier = 1.0  # truncated payload: tokens unrecoverable
    return TrialMetrics(
        detected=True, ser=ser, ber=ber, ier=ier, corrected=result.corrected,
        seed=seed, profile=profile.name, trace=result.trace,
    )


# ---------------------------------------------------------------------------
# Sweeps


def _cell_setup(axis: str, value, cfg: RunConfig, profile: ChannelProfile):
    """(cfg, profile, perturb_p) for one sweep cell."""
    perturb_p = None
    if axis == "snr":
        noise = profile.noise or NoiseSpec(snr_db=0.0)
        profile = replace(profile, noise=replace(noise, snr_db=float(value)))
    elif axis == "n_data_per_group":
        cfg = replace(cfg, n_data_per_group=int(value))
    elif axis == "mobility":
        step = float(value)
        motion = Motion(kind="walk", max_step_spg=step) if step > 0 else None
        profile = replace(profile, motion=motion)
    elif axis == "ablation":
        cfg = ablation_config(cfg, str(value))
    elif axis == "p":
        perturb_p = int(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    return cfg, profile, perturb_p


def _sweep_trial(args):
    axis, value, cell_idx, trial_idx, cfg, profile, base_seed = args
    cell_cfg, cell_profile, perturb_p = _cell_setup(axis, value, cfg, profile)
    seed = derive_seed(base_seed, cell_idx, trial_idx)
    metrics = run_e2e(None, cell_profile, cell_cfg, seed, perturb_p=perturb_p)
    row = {"axis": axis, "cell": value, "kind": "trial", "trial": trial_idx}
    row.update(metrics.as_row())
    return row


def sweep(
    axis: str,
    grid,
    trials: int,
    base_seed: int,
    cfg: RunConfig | None = None,
    profile: ChannelProfile | None = None,
    workers: int = 1,
    experiment: str = "sweep",
) -> list[dict]:
    """Full-factorial grid x trials execution with per-cell seed derivation.

    Returns one row per (cell, trial) plus an aggregate row per cell carrying
    the median and IQR of each rate over detected trials. Rows are ordered by
    (cell, trial) regardless of worker completion order.
    """
    if not len(grid):
        raise ValueError("grid must be nonempty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or RunConfig()
    profile = profile or preset("ideal")
    jobs = [
        (axis, value, ci, ti, cfg, profile, base_seed)
        for ci, value in enumerate(grid)
        for ti in range(trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_trial, jobs))
    else:
        rows = [_sweep_trial(j) for j in jobs]
    for row in rows:
        row["experiment"] = experiment
    out = []
    for ci, value in enumerate(grid):
        cell_rows = rows[ci * trials : (ci + 1) * trials]
        out.extend(cell_rows)
        out.append(_aggregate(cell_rows, experiment, axis, value))
    return out


def _aggregate(cell_rows: list[dict], experiment: str, axis: str, value) -> dict:
    agg = {
        "experiment": experiment, "axis": axis, "cell": value,
        "kind": "aggregate", "trial": "", "seed": "",
        "profile": cell_rows[0]["profile"],
        "detected": f"{np.mean([r['detected'] for r in cell_rows]):.10g}",
        "corrected": "",
    }
    for key in ("ser", "ber", "ier"):
        vals = np.array([float(r[key]) for r in cell_rows if r[key] != ""])
        if len(vals):
            q1, q2, q3 = np.percentile(vals, [25, 50, 75])
            agg[key] = f"{q2:.10g}"
            agg[f"{key}_iqr"] = f"{q3 - q1:.10g}"
        else:
            agg[key] = ""
            agg[f"{key}_iqr"] = ""
    return agg


def cell_medians(rows: list[dict], key: str = "ser") -> dict:
    """cell value -> median rate, read back from aggregate rows."""
    return {
        r["cell"]: float(r[key])
        for r in rows
        if r["kind"] == "aggregate" and r.get(key, "") != ""
    }


def write_csv(rows: list[dict], path) -> None:
    """Fixed-schema CSV; identical rows produce byte-identical bodies."""
    columns = list(CSV_COLUMNS) + ["ser_iqr", "ber_iqr", "ier_iqr"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def emit_report(
    rows: list[dict], out_dir, experiment: str, axis: str,
    timestamp: str | None = None, plot: bool = False,
) -> list[str]:
    """Write <experiment>_<axis>[_<timestamp>].csv (plus an optional PNG of
    median rates per cell). Plots are a convenience; the CSV is the record."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    stem = f"{experiment}_{axis}" + (f"_{timestamp}" if timestamp else "")
    csv_path = os.path.join(out_dir, stem + ".csv")
    write_csv(rows, csv_path)
    paths = [csv_path]
    if plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError as exc:
            raise RuntimeError(
                "plotting requires matplotlib (pip install aquamodem[plots])"
            ) from exc
        medians = cell_medians(rows)
        fig, ax = plt.subplots()
        cells = list(medians)
        ax.plot(range(len(cells)), [medians[c] for c in cells], marker="o")
        ax.set_xticks(range(len(cells)), [str(c) for c in cells])
        ax.set_xlabel(axis)
        ax.set_ylabel("median SER")
        ax.set_title(experiment)
        png_path = os.path.join(out_dir, stem + ".png")
        fig.savefig(png_path, dpi=120)
        plt.close(fig)
        paths.append(png_path)
    return paths


# ---------------------------------------------------------------------------
# Config file


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "modem": {
            "sf": cfg.params.sf,
            "bw_hz": cfg.params.bw_hz,
            "fs_hz": cfg.params.fs_hz,
            "f0_hz": cfg.params.f0_hz,
        },
        "frame": {"n_data_per_group": cfg.n_data_per_group},
        "sync": {
            "delta": cfg.sync.delta,
            "ma_window": cfg.sync.ma_window,
            "disable_sync": cfg.sync.disable_sync,
            "disable_smooth_bound": cfg.sync.disable_smooth_bound,
            "equalize_once": cfg.sync.equalize_once,
        },
        "equalizer": (
            {
                "taps": cfg.equalizer.taps,
                "offset": cfg.equalizer.offset,
                "regularization": cfg.equalizer.regularization,
            }
            if cfg.equalizer is not None
            else None
        ),
        "codec": {
            "m_tokens": cfg.codec.m_tokens,
            "k_codebook": cfg.codec.k_codebook,
        },
        "detect_threshold": cfg.detect_threshold,
        "lead_in_samples": cfg.lead_in_samples,
        "tail_samples": cfg.tail_samples,
    }


def config_from_dict(d: dict) -> RunConfig:
    version = d.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {version}")
    return RunConfig(
        params=ModemParams(**d.get("modem", {})),
        n_data_per_group=d.get("frame", {}).get("n_data_per_group", 3),
        sync=SyncConfig(**d.get("sync", {})),
        equalizer=(
            eqz.EqualizerConfig(**d["equalizer"])
            if d.get("equalizer") is not None
            else None
        ),
        codec=tok.CodecConfig(**d.get("codec", {})),
        detect_threshold=d.get("detect_threshold", 0.15),
        lead_in_samples=d.get("lead_in_samples", 4000),
        tail_samples=d.get("tail_samples", 8000),
    )


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")


def load_config(path) -> RunConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))
