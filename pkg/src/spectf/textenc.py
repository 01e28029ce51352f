"""Per-step complex text representations.

Real text embeddings come either from an embedding file (offline exports of
any sentence encoder) or from a deterministic feature-hashing encoder used
in hermetic tests. They are aligned to a lookback window by carry-forward
(a step sees the most recent text at or before it, never the future),
shifted by sinusoidal timestamp signatures, and projected into complex
space by two independent real networks producing the real and imaginary
components.

The two projection networks share parameter objects: the real half of each
packed parameter holds the Re-branch weights and the imaginary half the
Im-branch weights. The branches stay mathematically independent; packing
just keeps the registry, optimizer and checkpoint uniform.
"""

import hashlib
import json
import re
import struct
from dataclasses import dataclass

import numpy as np

from .ctensor import ComplexMatrix, Parameter

EMBED_MAGIC = b"SPTE"
EMBED_VERSION = 1


@dataclass
class TextRecord:
    timestamp: int
    embedding: np.ndarray  # float32, length d_lm


def save_embeddings(records, d_lm, path):
    """Write records as: magic, version u32, d_lm u32, count u32, then per
    record timestamp i64 + d_lm little-endian float32."""
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<III", EMBED_VERSION, d_lm, len(records)))
        for r in records:
            vec = np.asarray(r.embedding, dtype="<f4")
            if vec.shape != (d_lm,):
                raise ValueError(
                    f"save_embeddings: record at ts {r.timestamp} has "
                    f"dimension {vec.shape}, expected ({d_lm},)"
                )
            f.write(struct.pack("<q", r.timestamp))
            f.write(vec.tobytes())


def load_embeddings(path):
    """Read an embedding file; returns (records, d_lm). Malformed input
    raises ValueError naming the byte offset."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != EMBED_MAGIC:
        raise ValueError(f"embedding file: bad magic {data[:4]!r} at offset 0")
    if len(data) < 16:
        raise ValueError(f"embedding file: truncated header at offset {len(data)}")
    version, d_lm, count = struct.unpack_from("<III", data, 4)
    if version != EMBED_VERSION:
        raise ValueError(f"embedding file: unsupported version {version} at offset 4")
    off = 16
    rec_bytes = 8 + 4 * d_lm
    records = []
    prev_ts = None
    for i in range(count):
        if off + rec_bytes > len(data):
            raise ValueError(f"embedding file: truncated record {i} at offset {off}")
        (ts,) = struct.unpack_from("<q", data, off)
        vec = np.frombuffer(data, dtype="<f4", count=d_lm, offset=off + 8).copy()
        if prev_ts is not None and ts < prev_ts:
            raise ValueError(f"embedding file: timestamps decrease at offset {off}")
        prev_ts = ts
        records.append(TextRecord(ts, vec))
        off += rec_bytes
    if off != len(data):
        raise ValueError(f"embedding file: {len(data) - off} trailing bytes at offset {off}")
    return records, d_lm


def load_text_jsonl(path):
    """Read a text source file: one JSON object per line with integer "ts"
    and string "text"."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append((int(obj["ts"]), str(obj["text"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return out


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def toy_encode(text, d_lm, seed=0):
    """Deterministic feature-hashing bag-of-tokens embedding.

    Lowercase, split on non-alphanumerics, hash each token to a signed
    bucket, accumulate, L2-normalize (the zero vector stays zero). The hash
    is keyed on (seed, token) via sha256, so outputs are stable across
    processes and runs.
    """
    if d_lm < 1:
        raise ValueError(f"toy_encode: d_lm must be >= 1, got {d_lm}")
    acc = np.zeros(d_lm, dtype=np.float64)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
        h = int.from_bytes(digest[:8], "little")
        bucket = h % d_lm
        sign = 1.0 if (h >> 63) & 1 else -1.0
        acc[bucket] += sign
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc /= norm
    return acc.astype(np.float32)


def encode_text_records(texts, d_lm, seed=0):
    """toy_encode over (timestamp, text) pairs -> TextRecord list."""
    return [TextRecord(ts, toy_encode(text, d_lm, seed)) for ts, text in texts]


def sinusoid_table(positions, dim):
    """Sinusoidal signature table (base 10000): even columns sine, odd
    columns cosine, truncated to `dim`."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = (dim + 1) // 2
    freqs = np.power(10000.0, -np.arange(half) * 2.0 / dim)
    angles = positions * freqs
    table = np.zeros((positions.shape[0], 2 * half), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table[:, :dim]


def temporal_align(e, timestamps):
    """Add the sinusoidal encoding of each integer timestamp to its row."""
    e = np.asarray(e, dtype=np.float64)
    timestamps = np.asarray(timestamps)
    if e.ndim != 2 or timestamps.shape != (e.shape[0],):
        raise ValueError(
            f"temporal_align: embeddings {e.shape} and timestamps "
            f"{timestamps.shape} do not agree"
        )
    return e + sinusoid_table(timestamps, e.shape[1])


def align_texts_to_window(records, window_timestamps, d_lm):
    """Carry-forward alignment: row t holds the most recent record with
    timestamp <= window_timestamps[t] (zero if none). Records sharing a
    timestamp are averaged (avg pooling)."""
    ts = np.asarray(window_timestamps)
    if ts.ndim != 1 or (ts.size > 1 and not np.all(np.diff(ts) > 0)):
        raise ValueError("align_texts_to_window: window timestamps must be strictly increasing")
    # average duplicates, keep chronological order
    grouped = {}
    order = []
    for r in records:
        key = int(r.timestamp)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(np.asarray(r.embedding, dtype=np.float64))
    order.sort()
    pooled = [(t, np.mean(grouped[t], axis=0)) for t in order]

    out = np.zeros((ts.size, d_lm), dtype=np.float64)
    idx = -1
    for row, t in enumerate(ts):
        while idx + 1 < len(pooled) and pooled[idx + 1][0] <= t:
            idx += 1
        if idx >= 0:
            out[row] = pooled[idx][1]
    return out


class TextProjection:
    """Two independent one-hidden-layer real networks mapping aligned
    embeddings to the real and imaginary components of the complex text
    sequence. Hidden width equals the output width d; hidden activation is
    leaky-ReLU, output linear."""

    def __init__(self, w1, b1, w2, b2):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def create(cls, d_lm, d, rng, dtype=np.float32, prefix="text_proj"):
        def glorot(rows, cols):
            limit = np.sqrt(6.0 / (rows + cols))
            re = rng.uniform(-limit, limit, (rows, cols))
            im = rng.uniform(-limit, limit, (rows, cols))
            return ComplexMatrix(re.astype(dtype), im.astype(dtype))

        return cls(
            Parameter(f"{prefix}.w1", glorot(d_lm, d)),
            Parameter(f"{prefix}.b1", ComplexMatrix.zeros(1, d, dtype)),
            Parameter(f"{prefix}.w2", glorot(d, d)),
            Parameter(f"{prefix}.b2", ComplexMatrix.zeros(1, d, dtype)),
        )

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, tape, e_aligned):
        """Project [L x d_lm] aligned embeddings to a complex [L x d] node."""
        d_lm = self.w1.value.rows
        if e_aligned.ndim != 2 or e_aligned.shape[1] != d_lm:
            raise ValueError(
                f"complex projection: input {e_aligned.shape} does not match "
                f"d_lm {d_lm}"
            )
        x = tape.constant(e_aligned.astype(self.w1.value.dtype))
        parts = []
        for part in ("re", "im"):
            h = tape.rmatmul_part(x, tape.leaf(self.w1), part)
            h = tape.radd_bias_part(h, tape.leaf(self.b1), part)
            h = tape.rleaky_relu(h)
            o = tape.rmatmul_part(h, tape.leaf(self.w2), part)
            o = tape.radd_bias_part(o, tape.leaf(self.b2), part)
            parts.append(o)
        return tape.make_complex(parts[0], parts[1])


def complex_project(tape, e_aligned, projection):
    """Functional wrapper over TextProjection.forward."""
    return projection.forward(tape, e_aligned)
