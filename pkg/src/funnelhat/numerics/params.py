"""Named parameter collections with deterministic initialization.

A ``ParamSet`` owns every trainable tensor of a model, keyed by a
dotted path.  Creation order is the iteration order, and a single RNG
stream drives all draws, so a given seed and architecture always yield
bit-identical parameters.

A set can also be built in shape-only mode (no RNG): tensors are not
allocated and only shapes are recorded, which makes parameter counting
a pure function of the architecture even at sizes that would never fit
in memory.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor

# How to initialize each kind of parameter:
#   weight  uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)) from the 2-D shape
#   kernel  same rule with fan_in = taps, fan_out = 1 (per-channel filters)
#   bias    zeros
#   gain    ones (layer-norm scales)
_KINDS = ("weight", "kernel", "bias", "gain")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class ParamSet:
    """Ordered name -> Tensor map for a model's trainable parameters."""

    def __init__(self, seed: int | None = None, count_only: bool = False):
        self._tensors: dict[str, Tensor] = {}
        self._shapes: dict[str, tuple[int, ...]] = {}
        self.count_only = count_only
        self._rng = None if count_only else np.random.default_rng(seed)

    def create(self, name: str, shape: tuple[int, ...], kind: str) -> Tensor | None:
        """Register a parameter. Returns None in shape-only mode."""
        if name in self._shapes:
            raise ConfigError(f"duplicate parameter name: {name}")
        if kind not in _KINDS:
            raise ConfigError(f"unknown parameter kind: {kind}")
        shape = tuple(int(s) for s in shape)
        self._shapes[name] = shape
        if self.count_only:
            return None
        if kind == "weight":
            if len(shape) != 2:
                raise ShapeError(f"weight {name} must be 2-D, got {shape}")
            data = glorot_uniform(self._rng, shape[0], shape[1], shape)
        elif kind == "kernel":
            if len(shape) != 2:
                raise ShapeError(f"kernel {name} must be (taps, channels), got {shape}")
            data = glorot_uniform(self._rng, shape[0], 1, shape)
        elif kind == "bias":
            data = np.zeros(shape)
        else:
            data = np.ones(shape)
        t = Tensor(data, requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._shapes

    def __len__(self) -> int:
        return len(self._shapes)

    def names(self) -> list[str]:
        return list(self._shapes)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return dict(self._shapes)

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def total_count(self) -> int:
        return sum(int(np.prod(s)) if s else 1 for s in self._shapes.values())

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if self.count_only:
            raise ConfigError("cannot load state into a shape-only ParamSet")
        missing = set(self._tensors) - set(state)
        extra = set(state) - set(self._tensors)
        if missing or extra:
            raise ConfigError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, t in self._tensors.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = np.ascontiguousarray(arr)
