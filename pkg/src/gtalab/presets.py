"""Named model presets (per-layer attention config plus model-level sizes).

The mechanism of a preset is the part of its name before the first ``-``
(``gta-1b`` is a GTA model).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .config import AttentionConfig, Mechanism
from .errors import ConfigError

PRESET_FIELDS = (
    "name", "layers", "hidden_dim", "intermediate", "n_heads", "n_q", "n_k", "n_c",
    "d_h", "d_l", "mla_d_c", "mla_d_rope", "vocab",
)


@dataclass(frozen=True)
class ModelPreset:
    name: str
    layers: int
    config: AttentionConfig
    intermediate: int
    vocab: int

    def to_record(self) -> dict:
        c = self.config
        return {
            "name": self.name,
            "layers": self.layers,
            "hidden_dim": c.hidden_dim,
            "intermediate": self.intermediate,
            "n_heads": c.n_heads,
            "n_q": c.n_q,
            "n_k": c.n_k,
            "n_c": c.n_c,
            "d_h": c.head_dim,
            "d_l": c.latent_dim,
            "mla_d_c": c.mla_d_c,
            "mla_d_rope": c.mla_d_rope,
            "vocab": self.vocab,
        }


def preset_from_record(record: dict) -> ModelPreset:
    unknown = set(record) - set(PRESET_FIELDS)
    if unknown:
        raise ConfigError(f"unknown preset fields: {sorted(unknown)}")
    missing = set(PRESET_FIELDS) - set(record)
    if missing:
        raise ConfigError(f"missing preset fields: {sorted(missing)}")
    name = record["name"]
    try:
        mechanism = Mechanism(name.split("-", 1)[0])
    except ValueError:
        raise ConfigError(f"preset name {name!r} does not start with a mechanism") from None
    cfg = AttentionConfig(
        mechanism=mechanism,
        hidden_dim=record["hidden_dim"],
        n_heads=record["n_heads"],
        head_dim=record["d_h"],
        n_q=record["n_q"],
        n_k=record["n_k"],
        n_c=record["n_c"],
        latent_dim=record["d_l"],
        mla_d_c=record["mla_d_c"],
        mla_d_rope=record["mla_d_rope"],
    )
    return ModelPreset(name, record["layers"], cfg, record["intermediate"], record["vocab"])


def load_presets(path: Optional[Union[str, Path]] = None) -> dict[str, ModelPreset]:
    """Read presets from ``path`` or the bundled data file, keyed by name."""
    if path is None:
        text = resources.files("gtalab").joinpath("data/presets.json").read_text()
    else:
        text = Path(path).read_text()
    presets = {}
    for record in json.loads(text):
        p = preset_from_record(record)
        if p.name in presets:
            raise ConfigError(f"duplicate preset {p.name!r}")
        presets[p.name] = p
    return presets


def get_preset(name: str, presets: Optional[dict[str, ModelPreset]] = None) -> ModelPreset:
    presets = load_presets() if presets is None else presets
    try:
        return presets[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(presets)}") from None
