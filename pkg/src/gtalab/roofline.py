"""Roofline latency estimates for prefill and decode.

``total = max(flops / peak_flops, bytes / bandwidth)``. Memory traffic per
forward pass is the model weights (read once per batch), the KV cache of
every sequence in the batch, and an activation term
``4 * tokens * H * layers * bytes_per_element`` per sequence.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .cost import Phase, full_model_cost, model_params
from .errors import ConfigError
from .presets import ModelPreset

SWEEP_HEADER = ("preset", "phase", "N", "batch", "compute_s", "memory_s", "total_s", "bound")
PROFILE_FIELDS = ("name", "peak_flops", "mem_bandwidth", "offload_bandwidth", "bytes_per_element")


class Bound(str, enum.Enum):
    COMPUTE = "compute"
    MEMORY = "memory"


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    peak_flops: float
    mem_bandwidth: float
    offload_bandwidth: Optional[float] = None
    bytes_per_element: int = 8

    def __post_init__(self):
        for field in ("peak_flops", "mem_bandwidth"):
            if not getattr(self, field) > 0:
                raise ConfigError(f"{self.name}: {field} must be > 0")
        if self.offload_bandwidth is not None:
            if not self.offload_bandwidth > 0:
                raise ConfigError(f"{self.name}: offload_bandwidth must be > 0")
            if self.offload_bandwidth > self.mem_bandwidth:
                raise ConfigError(f"{self.name}: offload link cannot be faster than device memory")
        if self.bytes_per_element < 1:
            raise ConfigError(f"{self.name}: bytes_per_element must be >= 1")


@dataclass(frozen=True)
class LatencyEstimate:
    phase: Phase
    compute_time: float
    memory_time: float
    total: float
    bound: Bound


def profile_from_record(record: dict) -> HardwareProfile:
    unknown = set(record) - set(PROFILE_FIELDS)
    if unknown:
        raise ConfigError(f"unknown hardware profile fields: {sorted(unknown)}")
    try:
        return HardwareProfile(**record)
    except TypeError as exc:
        raise ConfigError(f"bad hardware profile {record!r}: {exc}") from None


def parse_profiles(text: str) -> list[HardwareProfile]:
    """Parse a JSON object or list of objects. Raises ``json.JSONDecodeError`` on bad syntax."""
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise ConfigError("hardware file must hold a profile object or a nonempty list of them")
    return [profile_from_record(r) for r in data]


def load_profiles(path: Optional[Union[str, Path]] = None) -> list[HardwareProfile]:
    if path is None:
        text = resources.files("gtalab").joinpath("data/hardware.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_profiles(text)


def memory_bytes(preset: ModelPreset, hw: HardwareProfile, n: int, batch: int, phase) -> tuple[float, float]:
    """``(device_bytes, cache_bytes)`` moved by one forward pass."""
    phase = Phase(phase)
    b = hw.bytes_per_element
    cfg = preset.config
    weights = model_params(preset) * b
    tokens = n if phase is Phase.PREFILL else 1
    activations = 4 * tokens * cfg.hidden_dim * preset.layers * b * batch
    cache = full_model_cost(preset, n, batch, phase).cache_floats * b
    return float(weights + activations), float(cache)


def estimate(
    preset: ModelPreset,
    hw: HardwareProfile,
    n: int,
    batch: int = 1,
    phase=Phase.DECODE,
    offload: bool = False,
) -> LatencyEstimate:
    """Roofline time of one prefill over ``n`` tokens or one decode step at context ``n``.

    With ``offload`` the KV-cache traffic crosses ``hw.offload_bandwidth``
    instead of device memory.
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    phase = Phase(phase)
    flops = full_model_cost(preset, n, batch, phase).total_flops
    compute = flops / hw.peak_flops
    device, cache = memory_bytes(preset, hw, n, batch, phase)
    if offload:
        if hw.offload_bandwidth is None:
            raise ConfigError(f"{hw.name} has no offload_bandwidth")
        memory = device / hw.mem_bandwidth + cache / hw.offload_bandwidth
    else:
        memory = (device + cache) / hw.mem_bandwidth
    total = max(compute, memory)
    bound = Bound.COMPUTE if compute >= memory else Bound.MEMORY
    return LatencyEstimate(phase, compute, memory, total, bound)


def sweep(
    presets: Sequence[ModelPreset],
    hw: HardwareProfile,
    n_list: Iterable[int],
    batch_list: Iterable[int],
    phase=Phase.DECODE,
    offload: bool = False,
) -> list[dict]:
    """One row per (preset, N, batch) in that nesting order."""
    n_list, batch_list = list(n_list), list(batch_list)
    phase = Phase(phase)
    rows = []
    for p in presets:
        for n in n_list:
            for batch in batch_list:
                est = estimate(p, hw, n, batch, phase, offload)
                rows.append({
                    "preset": p.name,
                    "phase": phase.value,
                    "N": n,
                    "batch": batch,
                    "compute_s": est.compute_time,
                    "memory_s": est.memory_time,
                    "total_s": est.total,
                    "bound": est.bound.value,
                })
    return rows


def format_float(x: float) -> str:
    # repr is locale-independent and round-trips exactly
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def rows_to_csv(rows: list[dict], header: Sequence[str] = SWEEP_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(row[h]) if isinstance(row[h], float) else row[h] for h in header])
    return buf.getvalue()


def profile_record(hw: HardwareProfile) -> dict:
    return asdict(hw)
