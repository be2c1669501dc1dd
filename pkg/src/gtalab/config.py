"""Attention hyperparameters and head-to-group maps."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ConfigError
from .tensor import ActivationKind, RopeParams


class Mechanism(str, enum.Enum):
    MHA = "mha"
    GQA = "gqa"
    MLA = "mla"
    GVA = "gva"
    GHA = "gha"
    GTA = "gta"


class Grouping(str, enum.Enum):
    BLOCK = "block"  # head i -> i // (n_h / n_groups)
    MODULO = "modulo"  # head i -> i % n_groups


@dataclass(frozen=True)
class AttentionConfig:
    """Dimensions and counts for one attention layer.

    Group counts that a mechanism does not use are ignored: MHA always has
    ``n_heads`` query/key/value heads, GQA has ``n_heads`` query heads and
    ``n_k`` shared key/value heads, GVA shares ``n_q``/``n_k`` attention maps
    over per-head values, GHA and GTA use all three counts. For GHA the value
    source width is ``head_dim`` (``latent_dim`` is ignored).
    """

    mechanism: Mechanism
    hidden_dim: int
    n_heads: int
    head_dim: int
    n_q: Optional[int] = None
    n_k: Optional[int] = None
    n_c: Optional[int] = None
    latent_dim: Optional[int] = None
    mla_d_c: Optional[int] = None
    mla_d_rope: Optional[int] = None
    mla_d_nope: Optional[int] = None
    gate_activation: ActivationKind = ActivationKind.SIGMOID
    rope_theta: float = 10000.0
    grouping: Grouping = Grouping.BLOCK
    max_seq_len: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "gate_activation", ActivationKind(self.gate_activation))
        object.__setattr__(self, "grouping", Grouping(self.grouping))
        for name in ("n_q", "n_k", "n_c"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, self.n_heads)
        if self.mechanism is Mechanism.MLA and self.mla_d_nope is None and self.mla_d_rope is not None:
            object.__setattr__(self, "mla_d_nope", self.head_dim - self.mla_d_rope)
        self.validate()

    def validate(self) -> None:
        m = self.mechanism
        for name in ("hidden_dim", "n_heads", "head_dim", "n_q", "n_k", "n_c", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if m in (Mechanism.MHA, Mechanism.GQA, Mechanism.GVA, Mechanism.GHA):
            if self.n_heads * self.head_dim != self.hidden_dim:
                raise ConfigError(
                    f"{m.value}: n_heads * head_dim = {self.n_heads * self.head_dim} "
                    f"!= hidden_dim {self.hidden_dim}"
                )
        for name in self.group_fields():
            n = getattr(self, name)
            if self.n_heads % n:
                raise ConfigError(f"n_heads {self.n_heads} not divisible by {name}={n}")
        if m is Mechanism.GTA:
            if self.latent_dim is None:
                raise ConfigError("gta requires latent_dim")
            if self.latent_dim < self.head_dim:
                raise ConfigError(f"gta requires latent_dim >= head_dim ({self.latent_dim} < {self.head_dim})")
        if m is Mechanism.MLA:
            if self.mla_d_c is None or self.mla_d_rope is None:
                raise ConfigError("mla requires mla_d_c and mla_d_rope")
            if self.mla_d_c < 1 or self.mla_d_rope < 0 or self.mla_d_nope < 1:
                raise ConfigError("mla dims must be positive (d_rope may be 0)")
            if self.mla_d_nope + self.mla_d_rope != self.head_dim:
                raise ConfigError(
                    f"mla_d_nope + mla_d_rope = {self.mla_d_nope + self.mla_d_rope} != head_dim {self.head_dim}"
                )
        # constructing RopeParams validates parity and base
        self.rope
        if m is Mechanism.MLA:
            self.mla_rope

    def group_fields(self) -> tuple[str, ...]:
        return {
            Mechanism.MHA: (),
            Mechanism.GQA: ("n_k",),
            Mechanism.MLA: (),
            Mechanism.GVA: ("n_q", "n_k"),
            Mechanism.GHA: ("n_q", "n_k", "n_c"),
            Mechanism.GTA: ("n_q", "n_k", "n_c"),
        }[self.mechanism]

    @property
    def rope(self) -> RopeParams:
        return RopeParams(self.head_dim, self.rope_theta)

    @property
    def mla_rope(self) -> RopeParams:
        return RopeParams(self.mla_d_rope, self.rope_theta)

    @property
    def value_latent_dim(self) -> int:
        """Width of one value-source group: ``latent_dim`` for GTA, ``head_dim`` for GHA."""
        if self.mechanism is Mechanism.GTA:
            return self.latent_dim
        return self.head_dim

    def with_(self, **changes) -> "AttentionConfig":
        return replace(self, **changes)


def _group_of(i: int, n_heads: int, n_groups: int, grouping: Grouping) -> int:
    if grouping is Grouping.MODULO:
        return i % n_groups
    return i // (n_heads // n_groups)


@dataclass(frozen=True)
class GroupingMap:
    """Per-head query, key and value group indices."""

    q_of: tuple[int, ...]
    k_of: tuple[int, ...]
    c_of: tuple[int, ...]
    slot_of: tuple[int, ...] = field(default=())

    @classmethod
    def for_config(cls, cfg: AttentionConfig) -> "GroupingMap":
        h = cfg.n_heads
        m = cfg.mechanism
        heads = range(h)
        if m in (Mechanism.MHA, Mechanism.MLA):
            q = k = c = tuple(heads)
        elif m is Mechanism.GQA:
            # key/value head is i mod n_k, query heads are per head
            q = tuple(heads)
            k = c = tuple(i % cfg.n_k for i in heads)
        elif m is Mechanism.GVA:
            q = tuple(_group_of(i, h, cfg.n_q, Grouping.BLOCK) for i in heads)
            k = tuple(_group_of(i, h, cfg.n_k, Grouping.BLOCK) for i in heads)
            c = tuple(heads)
        else:
            g = Grouping.BLOCK if m is Mechanism.GHA else cfg.grouping
            q = tuple(_group_of(i, h, cfg.n_q, g) for i in heads)
            k = tuple(_group_of(i, h, cfg.n_k, g) for i in heads)
            c = tuple(_group_of(i, h, cfg.n_c, g) for i in heads)
        # position of each head inside its value group
        seen: dict[int, int] = {}
        slot = []
        for grp in c:
            slot.append(seen.get(grp, 0))
            seen[grp] = slot[-1] + 1
        return cls(q, k, c, tuple(slot))
