"""Synthetic recall task and its on-disk dataset format.

Each utterance is a random token sequence; its features are per-token
prototype vectors repeated for a fixed number of 10 ms frames with
Gaussian noise on top.  The mapping from features back to tokens is
trivial at full frame rate and becomes a compressed-memory task once
the encoder collapses the sequence to a handful of frames.

Records are stored back to back in ``dataset.bin``: a header of three
little-endian int64 values (frames, tokens, feature dim), the frame
matrix as row-major little-endian float64, then the token ids as
int64.  ``manifest.txt`` holds one JSON line describing the task
followed by one line per record: index, byte offset, frames, tokens.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError

_HEADER = struct.Struct("<3q")
_MANIFEST_NAME = "manifest.txt"
_DATA_NAME = "dataset.bin"
_FORMAT_TAG = "funnelhat-dataset-v1"


@dataclass(frozen=True)
class SyntheticTask:
    vocab: int = 20
    feature_dim: int = 16
    frames_per_token: int = 4
    noise: float = 0.05
    min_tokens: int = 2
    max_tokens: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.vocab < 1 or self.feature_dim < 1 or self.frames_per_token < 1:
            raise ConfigError("vocab, feature_dim and frames_per_token must be >= 1")
        if not (1 <= self.min_tokens <= self.max_tokens):
            raise ConfigError("need 1 <= min_tokens <= max_tokens")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


def gen_data(task: SyntheticTask, count: int, out_dir) -> Path:
    """Write ``count`` examples; same task and count always give identical bytes."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(task.seed)
    prototypes = rng.standard_normal((task.vocab, task.feature_dim))

    offsets: list[tuple[int, int, int]] = []
    with open(out / _DATA_NAME, "wb") as fh:
        for _ in range(count):
            n_tok = int(rng.integers(task.min_tokens, task.max_tokens + 1))
            tokens = rng.integers(0, task.vocab, size=n_tok)
            frames = np.repeat(prototypes[tokens], task.frames_per_token, axis=0)
            if task.noise > 0:
                frames = frames + task.noise * rng.standard_normal(frames.shape)
            offsets.append((fh.tell(), frames.shape[0], n_tok))
            fh.write(_HEADER.pack(frames.shape[0], n_tok, task.feature_dim))
            fh.write(frames.astype("<f8").tobytes())
            fh.write(tokens.astype("<i8").tobytes())

    with open(out / _MANIFEST_NAME, "w") as fh:
        head = {"format": _FORMAT_TAG, "count": count, "task": asdict(task)}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for i, (offset, n_frames, n_tok) in enumerate(offsets):
            fh.write(f"{i} {offset} {n_frames} {n_tok}\n")
    return out / _MANIFEST_NAME


class Dataset:
    """In-memory view of a generated dataset directory."""

    def __init__(self, directory):
        directory = Path(directory)
        manifest = directory / _MANIFEST_NAME
        if not manifest.exists():
            raise ConfigError(f"no {_MANIFEST_NAME} in {directory}")
        lines = manifest.read_text().splitlines()
        head = json.loads(lines[0])
        if head.get("format") != _FORMAT_TAG:
            raise ConfigError(f"unrecognized dataset format in {manifest}")
        self.task = SyntheticTask(**head["task"])
        self.count = int(head["count"])
        if len(lines) - 1 != self.count:
            raise ConfigError("manifest record count mismatch")
        raw = (directory / _DATA_NAME).read_bytes()

        self._examples: list[tuple[np.ndarray, tuple[int, ...]]] = []
        for line in lines[1:]:
            _, offset, n_frames, n_tok = (int(v) for v in line.split())
            t, u, d = _HEADER.unpack_from(raw, offset)
            if (t, u) != (n_frames, n_tok) or d != self.task.feature_dim:
                raise ConfigError("record header disagrees with manifest")
            pos = offset + _HEADER.size
            frames = np.frombuffer(raw, dtype="<f8", count=t * d, offset=pos).reshape(t, d)
            pos += t * d * 8
            tokens = np.frombuffer(raw, dtype="<i8", count=u, offset=pos)
            self._examples.append((np.ascontiguousarray(frames), tuple(int(y) for y in tokens)))

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> tuple[np.ndarray, tuple[int, ...]]:
        return self._examples[i]
