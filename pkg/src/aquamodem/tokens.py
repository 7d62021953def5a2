"""Token payload layer: bit packing, random token perturbation, the index
error rate metric, and a vector-quantization patch codec.

The VQ codec is a desk-scale stand-in for a learned tokenizer: images are
split into fixed patches, each encoded as the index of its nearest codebook
centroid, so the token abstraction and its degradation behaviour can be
exercised end to end.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CODEBOOK_MAGIC = b"VQCB"
CODEBOOK_VERSION = 1


@dataclass(frozen=True)
class CodecConfig:
    """Token framing: m_tokens indices from a codebook of k_codebook entries."""

    m_tokens: int = 64
    k_codebook: int = 4096

    def __post_init__(self):
        if self.k_codebook < 2:
            raise ValueError("k_codebook must be >= 2")
        if self.m_tokens < 1:
            raise ValueError("m_tokens must be >= 1")

    @property
    def bits_per_token(self) -> int:
        return int(np.ceil(np.log2(self.k_codebook)))

    @property
    def payload_bits(self) -> int:
        return self.m_tokens * self.bits_per_token


@dataclass(frozen=True)
class PerturbSpec:
    """Random corruption: between 1 and p tokens are replaced per call."""

    p: int
    cap: float = 0.25

    def validate(self, m_tokens: int) -> None:
        if not 1 <= self.p <= self.cap * m_tokens:
            raise ValueError(
                f"p={self.p} outside [1, {self.cap} * {m_tokens}] "
                f"= [1, {self.cap * m_tokens:.0f}]"
            )


def _check_tokens(tokens, cfg: CodecConfig) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if len(arr) != cfg.m_tokens:
        raise ValueError(f"expected {cfg.m_tokens} tokens, got {len(arr)}")
    if len(arr) and (arr.min() < 0 or arr.max() >= cfg.k_codebook):
        raise ValueError(f"token values must be in [0, {cfg.k_codebook})")
    return arr


def pack_tokens(tokens, cfg: CodecConfig) -> np.ndarray:
    """Fixed-width big-endian bit packing, bits_per_token per token."""
    arr = _check_tokens(tokens, cfg)
    width = cfg.bits_per_token
    bits = np.zeros(len(arr) * width, dtype=np.uint8)
    for i, tok in enumerate(arr):
        for b in range(width):
            bits[i * width + b] = (int(tok) >> (width - 1 - b)) & 1
    return bits


def unpack_tokens(bits, cfg: CodecConfig) -> np.ndarray:
    """Exact inverse of pack_tokens."""
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    width = cfg.bits_per_token
    if len(arr) != cfg.m_tokens * width:
        raise ValueError(
            f"expected {cfg.m_tokens * width} bits, got {len(arr)}"
        )
    if len(arr) and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must be 0 or 1")
    tokens = np.zeros(cfg.m_tokens, dtype=np.int64)
    for i in range(cfg.m_tokens):
        v = 0
        for b in range(width):
            v = (v << 1) | int(arr[i * width + b])
        tokens[i] = v
    # values above k_codebook-1 can appear after channel errors when k is not
    # a power of two; clamp rather than reject so decoding stays total
    return np.minimum(tokens, cfg.k_codebook - 1)


def perturb_exact(tokens, count: int, k_codebook: int, seed) -> np.ndarray:
    """Replace exactly `count` distinct tokens with different random values."""
    arr = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if not 0 <= count <= len(arr):
        raise ValueError(f"count {count} outside [0, {len(arr)}]")
    rng = np.random.default_rng(seed)
    out = arr.copy()
    if count == 0:
        return out
    positions = rng.choice(len(arr), size=count, replace=False)
    for pos in positions:
        new = int(rng.integers(k_codebook - 1))
        if new >= out[pos]:
            new += 1
        out[pos] = new
    return out


def perturb(tokens, spec: PerturbSpec, cfg: CodecConfig, seed) -> tuple[np.ndarray, int]:
    """Corrupt m ~ Uniform[1, p] tokens at random positions.

    Every chosen token is replaced by a uniformly random *different* value.
    Deterministic per seed; returns (perturbed sequence, m).
    """
    arr = _check_tokens(tokens, cfg)
    spec.validate(cfg.m_tokens)
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, spec.p + 1))
    return perturb_exact(arr, m, cfg.k_codebook, rng), m


def ier(sent, received) -> float:
    """Index error rate: fraction of token positions that differ."""
    a = np.asarray(sent).reshape(-1)
    b = np.asarray(received).reshape(-1)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    if len(a) == 0:
        return 0.0
    return float(np.mean(a != b))


def compression_ratio(m_orig: int, k_orig: int, m_new: int, k_new: int) -> float:
    """Payload reduction factor (M*log2 K) / (M'*log2 K')."""
    return (m_orig * np.log2(k_orig)) / (m_new * np.log2(k_new))


# ---------------------------------------------------------------------------
# Vector-quantization patch codec


@dataclass(frozen=True)
class Codebook:
    """k centroid patches of shape (patch, patch), float64 in [0, 255]."""

    centroids: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.centroids, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError("centroids must have shape (k, patch, patch)")
        object.__setattr__(self, "centroids", arr)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def patch(self) -> int:
        return self.centroids.shape[1]

    def save(self, path) -> None:
        """Binary format: magic 'VQCB', u16 version, u32 k, u16 patch height,
        u16 patch width, then k*h*w float64 little-endian centroid values."""
        k, h, w = self.centroids.shape
        header = CODEBOOK_MAGIC + struct.pack("<HIHH", CODEBOOK_VERSION, k, h, w)
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.centroids.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != CODEBOOK_MAGIC:
                raise ValueError(f"not a codebook file (magic {magic!r})")
            version, k, h, w = struct.unpack("<HIHH", f.read(10))
            if version != CODEBOOK_VERSION:
                raise ValueError(f"unsupported codebook version {version}")
            data = np.frombuffer(f.read(k * h * w * 8), dtype="<f8")
        return cls(data.reshape(k, h, w).copy())


def image_patches(image: np.ndarray, patch: int) -> np.ndarray:
    """Non-overlapping patches, row-major; image dims must divide evenly."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    h, w = img.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch}")
    tiles = img.reshape(h // patch, patch, w // patch, patch)
    return tiles.transpose(0, 2, 1, 3).reshape(-1, patch, patch)


def patches_to_image(patches: np.ndarray, h: int, w: int) -> np.ndarray:
    patch = patches.shape[1]
    rows, cols = h // patch, w // patch
    tiles = patches.reshape(rows, cols, patch, patch).transpose(0, 2, 1, 3)
    return tiles.reshape(h, w)


def _assign(flat_patches: np.ndarray, flat_centroids: np.ndarray) -> np.ndarray:
    # squared L2; argmin breaks ties toward the lowest index
    d2 = (
        np.sum(flat_patches**2, axis=1)[:, None]
        - 2.0 * flat_patches @ flat_centroids.T
        + np.sum(flat_centroids**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def fit_codebook(patches: np.ndarray, k: int, seed, max_iter: int = 50) -> Codebook:
    """k-means over patches with seeded initialization and an iteration cap.

    Initial centroids are k distinct patches chosen at random; empty clusters
    keep their previous centroid so the objective never increases.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3:
        raise ValueError("patches must have shape (n, patch, patch)")
    n = len(patches)
    if n < k:
        raise ValueError(f"need at least k={k} patches, got {n}")
    rng = np.random.default_rng(seed)
    flat = patches.reshape(n, -1)
    centroids = flat[rng.choice(n, size=k, replace=False)].copy()
    prev_labels = None
    for _ in range(max_iter):
        labels = _assign(flat, centroids)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        for j in range(k):
            members = flat[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    side = patches.shape[1]
    return Codebook(centroids.reshape(k, side, side))


def kmeans_objective(patches: np.ndarray, codebook: Codebook) -> float:
    """Total within-cluster squared distance under nearest assignment."""
    flat = np.asarray(patches, dtype=np.float64).reshape(len(patches), -1)
    cent = codebook.centroids.reshape(codebook.k, -1)
    labels = _assign(flat, cent)
    return float(np.sum((flat - cent[labels]) ** 2))


def vq_encode(image: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Token sequence: nearest-centroid index of every patch."""
    patches = image_patches(image, codebook.patch)
    flat = patches.reshape(len(patches), -1)
    return _assign(flat, codebook.centroids.reshape(codebook.k, -1)).astype(np.int64)


def vq_decode(tokens, codebook: Codebook, h: int, w: int) -> np.ndarray:
    """Tile centroid patches back into an image of the given size."""
    arr = np.asarray(tokens, dtype=np.int64).reshape(-1)
    patch = codebook.patch
    expected = (h // patch) * (w // patch)
    if h % patch or w % patch or len(arr) != expected:
        raise ValueError(
            f"{len(arr)} tokens inconsistent with {h}x{w} image and "
            f"{patch}-pixel patches"
        )
    if len(arr) and (arr.min() < 0 or arr.max() >= codebook.k):
        raise ValueError(f"token values must be in [0, {codebook.k})")
    return patches_to_image(codebook.centroids[arr], h, w)


def codebook_utilization(tokens, k: int) -> float:
    """Fraction of codebook entries an encoding actually uses."""
    arr = np.asarray(tokens).reshape(-1)
    if len(arr) == 0:
        return 0.0
    return len(np.unique(arr)) / k


# ---------------------------------------------------------------------------
# Portable graymap/pixmap I/O (plain and binary variants)


def _read_pnm_tokens(data: bytes):
    pos = 0
    while True:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            return
        yield data[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read a PGM/PPM image (P2/P3 plain or P5/P6 binary) as grayscale
    float64 in [0, 255]; color images collapse to the channel mean."""
    with open(path, "rb") as f:
        data = f.read()
    fields = _read_pnm_tokens(data)
    magic, _ = next(fields)
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    (w_raw, _), (h_raw, _), (maxval_raw, end) = (
        next(fields), next(fields), next(fields))
    w, h, maxval = int(w_raw), int(h_raw), int(maxval_raw)
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"unsupported maxval {maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels
    if magic in (b"P5", b"P6"):
        raster = np.frombuffer(data, dtype=np.uint8, count=count, offset=end + 1)
        values = raster.astype(np.float64)
    else:
        values = np.array(
            [int(tok) for (tok, _), _ in zip(fields, range(count))],
            dtype=np.float64,
        )
    if len(values) != count:
        raise ValueError("truncated PNM raster")
    values = values * (255.0 / maxval)
    if channels == 3:
        values = values.reshape(h, w, 3).mean(axis=2)
    else:
        values = values.reshape(h, w)
    return values


def write_pgm(path, image: np.ndarray, binary: bool = True) -> None:
    """Write a grayscale image as P5 (binary) or P2 (plain) PGM."""
    img = np.clip(np.round(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    h, w = img.shape
    if binary:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode())
            f.write(img.tobytes())
    else:
        with open(path, "w") as f:
            f.write(f"P2\n{w} {h}\n255\n")
            for row in img:
                f.write(" ".join(str(v) for v in row) + "\n")
