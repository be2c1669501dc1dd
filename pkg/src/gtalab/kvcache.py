"""Prefill / decode execution against a preallocated per-layer KV cache."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attention import _check_input, attend, cache_widths, project_cache_rows, project_queries
from .config import AttentionConfig, Mechanism
from .errors import CacheOverflowError
from .weights import WeightSet

FLOAT_BYTES = 8


@dataclass
class KVCacheState:
    """Cached rows for one sequence and one layer.

    ``buffers`` maps each cached quantity (``keys``/``values``,
    ``keys``/``latents`` or ``ckv``/``krope``) to a ``(capacity, width)``
    array; only the first ``length`` rows are valid. Keys are stored after
    RoPE at their absolute position.
    """

    mechanism: Mechanism
    capacity: int
    length: int
    buffers: dict[str, np.ndarray]

    @classmethod
    def empty(cls, cfg: AttentionConfig, capacity: Optional[int] = None) -> "KVCacheState":
        capacity = cfg.max_seq_len if capacity is None else capacity
        buffers = {name: np.zeros((capacity, width)) for name, width in cache_widths(cfg).items()}
        return cls(cfg.mechanism, capacity, 0, buffers)

    def view(self) -> dict[str, np.ndarray]:
        return {name: buf[:self.length] for name, buf in self.buffers.items()}

    def append(self, rows: dict[str, np.ndarray]) -> None:
        n = next(iter(rows.values())).shape[0]
        if self.length + n > self.capacity:
            raise CacheOverflowError(
                f"cannot append {n} rows: length {self.length}, capacity {self.capacity}"
            )
        for name, buf in self.buffers.items():
            buf[self.length:self.length + n] = rows[name]
        self.length += n

    @property
    def floats(self) -> int:
        return self.length * sum(buf.shape[1] for buf in self.buffers.values())


@dataclass
class DecodeStepResult:
    output: np.ndarray
    cache: KVCacheState


def cache_bytes(cache: KVCacheState) -> int:
    """Bytes held by the valid region of the cache (float64 storage)."""
    return FLOAT_BYTES * cache.floats


def prefill(x, w: WeightSet, cfg: AttentionConfig, capacity: Optional[int] = None):
    """Run the full causal forward over ``x`` and build its cache.

    Returns ``(outputs, cache)``. GTA uses the fused path, so outputs are
    bitwise equal to :func:`gtalab.attention.forward`.
    """
    x = _check_input(x, cfg)
    if x.shape[0] < 1:
        raise ValueError("prefill needs at least one row")
    cache = KVCacheState.empty(cfg, capacity)
    if x.shape[0] > cache.capacity:
        raise CacheOverflowError(f"prefill of {x.shape[0]} rows exceeds capacity {cache.capacity}")
    pos = np.arange(x.shape[0])
    rows = project_cache_rows(x, w, cfg, pos)
    cache.append(rows)
    out, _ = attend(x, project_queries(x, w, cfg, pos), rows, pos, w, cfg, "fused")
    return out, cache


def decode_step(x_t, cache: KVCacheState, w: WeightSet, cfg: AttentionConfig) -> DecodeStepResult:
    """Append position ``cache.length`` and attend over every cached row.

    The cache is updated in place and returned in the result.
    """
    x_t = _check_input(x_t, cfg)
    if x_t.shape[0] != 1:
        raise ValueError(f"decode_step takes one row, got {x_t.shape[0]}")
    if cache.mechanism is not cfg.mechanism:
        raise ValueError(f"cache holds {cache.mechanism.value}, config is {cfg.mechanism.value}")
    if cache.length + 1 > cache.capacity:
        raise CacheOverflowError(f"cache full at {cache.capacity} positions")
    pos = np.array([cache.length])
    cache.append(project_cache_rows(x_t, w, cfg, pos))
    out, _ = attend(x_t, project_queries(x_t, w, cfg, pos), cache.view(), pos, w, cfg, "fused")
    return DecodeStepResult(out, cache)


def generate_outputs(x, w: WeightSet, cfg: AttentionConfig, capacity: Optional[int] = None):
    """Feed ``x`` row by row through :func:`decode_step` from an empty cache."""
    x = _check_input(x, cfg)
    cache = KVCacheState.empty(cfg, capacity)
    rows = [decode_step(x[t:t + 1], cache, w, cfg).output for t in range(x.shape[0])]
    return np.vstack(rows), cache
