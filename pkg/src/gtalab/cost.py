"""Closed-form FLOP and KV-cache sizes per attention mechanism.

Polynomials are taken as exact coefficient bookkeeping: one unit per
multiply-accumulate of a matrix product, softmax and RoPE excluded. Decode
costs are per generated token, with ``N`` the number of positions that
token attends to (the cache length after it is appended).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction

from .config import AttentionConfig, Mechanism
from .errors import ConfigError
from .presets import ModelPreset


class Phase(str, enum.Enum):
    PREFILL = "prefill"
    DECODE = "decode"


@dataclass(frozen=True)
class CostBreakdown:
    phase: Phase
    linear_flops: int
    attention_flops: int
    cache_floats: int
    per_token: bool
    mlp_flops: int = 0
    vocab_flops: int = 0

    @property
    def total_flops(self) -> int:
        return self.linear_flops + self.attention_flops + self.mlp_flops + self.vocab_flops

    def scaled(self, k: int) -> "CostBreakdown":
        return replace(
            self,
            linear_flops=k * self.linear_flops,
            attention_flops=k * self.attention_flops,
            cache_floats=k * self.cache_floats,
            mlp_flops=k * self.mlp_flops,
            vocab_flops=k * self.vocab_flops,
        )


def _require(cfg: AttentionConfig):
    m = cfg.mechanism
    if m is Mechanism.GTA and cfg.latent_dim is None:
        raise ConfigError("gta cost needs latent_dim")
    if m is Mechanism.MLA and (cfg.mla_d_c is None or cfg.mla_d_rope is None):
        raise ConfigError("mla cost needs mla_d_c and mla_d_rope")


def cache_formula(cfg: AttentionConfig, n: int) -> int:
    """Cached floats per layer for a sequence of ``n`` tokens."""
    if n < 0:
        raise ValueError("sequence length must be >= 0")
    _require(cfg)
    H, nh, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    if m is Mechanism.MHA:
        per = 2 * nh * dh
    elif m is Mechanism.GQA:
        per = 2 * cfg.n_k * dh
    elif m is Mechanism.MLA:
        per = cfg.mla_d_c + cfg.mla_d_rope
    elif m is Mechanism.GVA:
        per = H + cfg.n_k * dh
    elif m is Mechanism.GHA:
        per = cfg.n_k * dh + cfg.n_c * dh
    else:
        per = cfg.n_k * dh + cfg.n_c * cfg.latent_dim
    return per * n


def _linear_per_token(cfg: AttentionConfig) -> int:
    # N-independent linear cost for one token
    H, nh, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    if m is Mechanism.MHA:
        return 4 * H * H
    if m in (Mechanism.GQA, Mechanism.GVA):
        return 2 * H * H + 2 * cfg.n_k * dh * H
    if m is Mechanism.GHA:
        return H * H + (cfg.n_q + cfg.n_k + cfg.n_c) * dh * H
    if m is Mechanism.GTA:
        dl = cfg.latent_dim
        return 2 * H * H + (cfg.n_q * dh + cfg.n_k * dh + cfg.n_c * dl + dl) * H
    dc, dr, dn = cfg.mla_d_c, cfg.mla_d_rope, cfg.mla_d_nope
    return (dc + dr) * H + nh * (dn + dr) * H + H * H


def _mla_upproject(cfg: AttentionConfig) -> int:
    # key/value up-projection, paid per attended position
    return 2 * cfg.n_heads * cfg.mla_d_c * cfg.mla_d_nope


def _attention_coeff(cfg: AttentionConfig) -> int:
    """Coefficient of N^2 in prefill attention cost."""
    nh, dh = cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    if m in (Mechanism.MHA, Mechanism.GQA):
        return 2 * nh * dh
    if m in (Mechanism.GVA, Mechanism.GHA):
        return cfg.n_q * dh + nh * dh
    if m is Mechanism.GTA:
        return cfg.n_q * (dh + cfg.latent_dim)
    return nh * (cfg.mla_d_rope + 2 * cfg.mla_d_nope)


def prefill_flops(cfg: AttentionConfig, n: int) -> CostBreakdown:
    if n < 1:
        raise ValueError("prefill needs N >= 1")
    _require(cfg)
    linear = _linear_per_token(cfg) * n
    if cfg.mechanism is Mechanism.MLA:
        linear += _mla_upproject(cfg) * n
    return CostBreakdown(Phase.PREFILL, linear, _attention_coeff(cfg) * n * n, cache_formula(cfg, n), False)


def decode_flops(cfg: AttentionConfig, n: int) -> CostBreakdown:
    """Cost of generating one token that attends to ``n`` positions.

    GTA's decode attention term is ``2 n_h d_h N``, and MLA keeps its
    up-projection term ``2 n_h d_c d_nope N`` on the linear side.
    """
    if n < 0:
        raise ValueError("decode needs N >= 0")
    _require(cfg)
    nh, dh = cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    linear = _linear_per_token(cfg)
    if m is Mechanism.MLA:
        linear += _mla_upproject(cfg) * n
    if m is Mechanism.GTA:
        attention = 2 * nh * dh * n
    else:
        attention = _attention_coeff(cfg) * n
    return CostBreakdown(Phase.DECODE, linear, attention, cache_formula(cfg, n), True)


def phase_flops(cfg: AttentionConfig, n: int, phase) -> CostBreakdown:
    return prefill_flops(cfg, n) if Phase(phase) is Phase.PREFILL else decode_flops(cfg, n)


def full_model_cost(preset: ModelPreset, n: int, batch: int = 1, phase=Phase.PREFILL) -> CostBreakdown:
    """Whole-model cost: ``layers`` attention blocks, SwiGLU MLPs and the vocab projection.

    The MLP and vocabulary terms count two FLOPs per multiply-accumulate
    (``2*T*H*intermediate*3`` and ``2*T*H*vocab`` for ``T`` processed tokens).
    ``cache_floats`` is summed over layers.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    phase = Phase(phase)
    per_layer = phase_flops(preset.config, n, phase)
    tokens = n if phase is Phase.PREFILL else 1
    H = preset.config.hidden_dim
    one = CostBreakdown(
        phase,
        preset.layers * per_layer.linear_flops,
        preset.layers * per_layer.attention_flops,
        preset.layers * per_layer.cache_floats,
        per_layer.per_token,
        mlp_flops=preset.layers * 2 * tokens * H * preset.intermediate * 3,
        vocab_flops=2 * tokens * H * preset.vocab,
    )
    return one.scaled(batch)


def attention_params(cfg: AttentionConfig) -> int:
    """Weight count of one attention layer as built by :func:`gtalab.weights.init_weights`."""
    H, nh, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    if m is Mechanism.MHA:
        return 4 * H * nh * dh
    if m is Mechanism.GQA:
        return 2 * H * nh * dh + 2 * H * cfg.n_k * dh
    if m is Mechanism.GVA:
        return H * (cfg.n_q + cfg.n_k) * dh + 2 * H * nh * dh
    if m is Mechanism.GHA:
        return H * (cfg.n_q + cfg.n_k + cfg.n_c) * dh + nh * dh * dh + nh * dh * H
    if m is Mechanism.GTA:
        dl = cfg.latent_dim
        return H * (cfg.n_q + cfg.n_k) * dh + H * cfg.n_c * dl + nh * dl * dh + 2 * nh * H * dh
    dc, dr, dn = cfg.mla_d_c, cfg.mla_d_rope, cfg.mla_d_nope
    return H * dc + 2 * nh * dc * dn + H * dr + nh * H * dr + H * nh * dn + nh * dn * H


def model_params(preset: ModelPreset) -> int:
    """Attention + SwiGLU MLP weights over all layers plus one ``vocab x H`` embedding."""
    H = preset.config.hidden_dim
    per_layer = attention_params(preset.config) + 3 * H * preset.intermediate
    return preset.layers * per_layer + preset.vocab * H


def cost_ratio(a: ModelPreset, b: ModelPreset, kind: str, n: int = 1) -> Fraction:
    """Exact per-layer ratio ``a / b`` of prefill ``attention`` FLOPs or ``cache`` floats."""
    if kind == "attention":
        return Fraction(prefill_flops(a.config, n).attention_flops, prefill_flops(b.config, n).attention_flops)
    if kind == "cache":
        return Fraction(cache_formula(a.config, n), cache_formula(b.config, n))
    if kind == "linear":
        return Fraction(prefill_flops(a.config, n).linear_flops, prefill_flops(b.config, n).linear_flops)
    raise ValueError(f"unknown ratio kind {kind!r}")
