"""Causal forward passes for MHA, GQA, MLA, GVA, GHA and GTA.

Every mechanism is split into three steps so that full-sequence forwards
and incremental decoding share one code path:

* ``project_queries`` -- per-row query-side state (rotated queries),
* ``project_cache_rows`` -- exactly the quantities a KV cache stores,
* ``attend`` -- causal attention of query rows over cached rows.

Head outputs are summed in ascending head order.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .config import AttentionConfig, GroupingMap, Mechanism
from .errors import ShapeError
from .tensor import (
    activate,
    apply_rope_blocks,
    as_matrix,
    causal_mask,
    elementwise_gate,
    row_softmax,
)
from .weights import WeightSet

Path = str  # "fused" | "direct"


def cache_widths(cfg: AttentionConfig) -> dict[str, int]:
    """Column width of every cached per-token quantity, in storage order."""
    nh, dh = cfg.n_heads, cfg.head_dim
    m = cfg.mechanism
    if m is Mechanism.MHA:
        return {"keys": nh * dh, "values": nh * dh}
    if m is Mechanism.GQA:
        return {"keys": cfg.n_k * dh, "values": cfg.n_k * dh}
    if m is Mechanism.GVA:
        return {"keys": cfg.n_k * dh, "values": nh * dh}
    if m in (Mechanism.GHA, Mechanism.GTA):
        return {"keys": cfg.n_k * dh, "latents": cfg.n_c * cfg.value_latent_dim}
    return {"ckv": cfg.mla_d_c, "krope": cfg.mla_d_rope}


def _check_input(x, cfg: AttentionConfig) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != cfg.hidden_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, hidden_dim is {cfg.hidden_dim}")
    return x


def _block(m: np.ndarray, g: int, width: int) -> np.ndarray:
    return m[:, g * width:(g + 1) * width]


def project_qkc(x, w: WeightSet, cfg: AttentionConfig, positions=None):
    """Queries, keys and latent values ``(Q, K, C)`` for GTA or GHA.

    Q and K are rotated per ``head_dim`` block using ``positions``
    (default ``0..N-1``); C is a plain projection.
    """
    x = _check_input(x, cfg)
    if positions is None:
        positions = np.arange(x.shape[0])
    q = apply_rope_blocks(x @ w.W_Q, positions, cfg.rope)
    k = apply_rope_blocks(x @ w.W_K, positions, cfg.rope)
    c = x @ w.W_C
    return q, k, c


def project_queries(x, w: WeightSet, cfg: AttentionConfig, positions) -> dict[str, np.ndarray]:
    x = _check_input(x, cfg)
    if cfg.mechanism is Mechanism.MLA:
        q_rope = x @ w.W_QR.transpose(1, 0, 2).reshape(cfg.hidden_dim, -1)
        return {
            "q_nope": x @ w.W_Q,
            "q_rope": apply_rope_blocks(q_rope, positions, cfg.mla_rope),
        }
    return {"q": apply_rope_blocks(x @ w.W_Q, positions, cfg.rope)}


def project_cache_rows(x, w: WeightSet, cfg: AttentionConfig, positions) -> dict[str, np.ndarray]:
    x = _check_input(x, cfg)
    m = cfg.mechanism
    if m is Mechanism.MLA:
        return {"ckv": x @ w.W_DKV, "krope": apply_rope_blocks(x @ w.W_KR, positions, cfg.mla_rope)}
    keys = apply_rope_blocks(x @ w.W_K, positions, cfg.rope)
    if m in (Mechanism.GHA, Mechanism.GTA):
        return {"keys": keys, "latents": x @ w.W_C}
    return {"keys": keys, "values": x @ w.W_V}


def _attention_map(q, k, q_pos, k_pos, scale) -> np.ndarray:
    scores = q @ k.T
    scores[causal_mask(q_pos, k_pos)] = -np.inf
    return row_softmax(scores, scale)


class _MapCache:
    """Attention maps keyed by (query group, key group); each computed once."""

    def __init__(self, q, k, q_pos, k_pos, head_dim):
        self.q, self.k = q, k
        self.q_pos, self.k_pos = q_pos, k_pos
        self.d = head_dim
        self.scale = math.sqrt(head_dim)
        self.maps: dict[tuple[int, int], np.ndarray] = {}

    def get(self, qg: int, kg: int) -> np.ndarray:
        key = (qg, kg)
        if key not in self.maps:
            self.maps[key] = _attention_map(
                _block(self.q, qg, self.d), _block(self.k, kg, self.d), self.q_pos, self.k_pos, self.scale
            )
        return self.maps[key]


def _grouped_attend(queries, cache, q_pos, w, cfg, value_of: Callable[[int], np.ndarray]):
    gm = GroupingMap.for_config(cfg)
    k_pos = np.arange(cache["keys"].shape[0])
    maps = _MapCache(queries["q"], cache["keys"], q_pos, k_pos, cfg.head_dim)
    out = np.zeros((queries["q"].shape[0], cfg.hidden_dim))
    for i in range(cfg.n_heads):
        a = maps.get(gm.q_of[i], gm.k_of[i])
        out += (a @ value_of(i)) @ w.W_O[i]
    return out, maps.maps


def _gta_gates(x_q, w, cfg, i):
    return x_q @ w.W_G[i]


def decode_values(c, x_query, w: WeightSet, cfg: AttentionConfig, head: int) -> np.ndarray:
    """Gated head values, one ``(N, d_h)`` matrix per query row.

    Returns an array of shape ``(M, N, d_h)``; slice ``t`` is
    ``(C_c(i) @ W_P[i]) * act(x_query[t] @ W_G[i])``. The ungated product is
    computed once and shared by all query rows.
    """
    if not 0 <= head < cfg.n_heads:
        raise ValueError(f"head {head} out of range for {cfg.n_heads} heads")
    c = as_matrix(c)
    width = cfg.value_latent_dim
    if c.shape[1] != cfg.n_c * width:
        raise ShapeError(f"latents have {c.shape[1]} columns, expected {cfg.n_c * width}")
    gm = GroupingMap.for_config(cfg)
    ungated = _block(c, gm.c_of[head], width) @ w.W_P[head]
    gate = activate(_gta_gates(as_matrix(x_query), w, cfg, head), cfg.gate_activation)
    return ungated[None, :, :] * gate[:, None, :]


def _gta_attend(x_q, queries, cache, q_pos, w, cfg, path: Path):
    gm = GroupingMap.for_config(cfg)
    latents = cache["latents"]
    k_pos = np.arange(latents.shape[0])
    maps = _MapCache(queries["q"], cache["keys"], q_pos, k_pos, cfg.head_dim)
    out = np.zeros((x_q.shape[0], cfg.hidden_dim))
    dl = cfg.value_latent_dim
    if path == "direct":
        for i in range(cfg.n_heads):
            a = maps.get(gm.q_of[i], gm.k_of[i])
            v = decode_values(latents, x_q, w, cfg, i)
            o = np.einsum("ts,tsd->td", a, v)
            out += o @ w.W_O[i]
        return out, maps.maps
    if path != "fused":
        raise ValueError(f"unknown path {path!r}")
    mixed: dict[tuple[int, int, int], np.ndarray] = {}
    for i in range(cfg.n_heads):
        key = (gm.q_of[i], gm.k_of[i], gm.c_of[i])
        if key not in mixed:
            mixed[key] = maps.get(key[0], key[1]) @ _block(latents, key[2], dl)
        o = elementwise_gate(mixed[key] @ w.W_P[i], _gta_gates(x_q, w, cfg, i), cfg.gate_activation)
        out += o @ w.W_O[i]
    return out, maps.maps


def _mla_attend(queries, cache, q_pos, w, cfg):
    dn, dr = cfg.mla_d_nope, cfg.mla_d_rope
    ckv, krope = cache["ckv"], cache["krope"]
    k_pos = np.arange(ckv.shape[0])
    mask = causal_mask(q_pos, k_pos)
    scale = math.sqrt(dn + dr)
    out = np.zeros((queries["q_nope"].shape[0], cfg.hidden_dim))
    for i in range(cfg.n_heads):
        k_nope = ckv @ w.W_UK[i]
        scores = _block(queries["q_nope"], i, dn) @ k_nope.T
        if dr:
            scores = scores + _block(queries["q_rope"], i, dr) @ krope.T
        scores[mask] = -np.inf
        a = row_softmax(scores, scale)
        out += (a @ (ckv @ w.W_UV[i])) @ w.W_O[i]
    return out


def attend(x_q, queries, cache, q_pos, w: WeightSet, cfg: AttentionConfig, path: Path = "fused"):
    """Causal attention of query rows (absolute positions ``q_pos``) over cached rows.

    Returns ``(output, maps)``; ``maps`` holds the attention maps keyed by
    (query group, key group), empty for MLA.
    """
    m = cfg.mechanism
    q_pos = np.asarray(q_pos)
    if m is Mechanism.MLA:
        return _mla_attend(queries, cache, q_pos, w, cfg), {}
    if m is Mechanism.GTA:
        return _gta_attend(x_q, queries, cache, q_pos, w, cfg, path)
    dh = cfg.head_dim
    gm = GroupingMap.for_config(cfg)
    if m is Mechanism.GHA:
        dl = cfg.value_latent_dim

        def value_of(i):
            return _block(cache["latents"], gm.c_of[i], dl) @ w.W_P[i]
    else:

        def value_of(i):
            return _block(cache["values"], gm.c_of[i], dh)

    return _grouped_attend(queries, cache, q_pos, w, cfg, value_of)


def forward_with_maps(x, w: WeightSet, cfg: AttentionConfig, path: Path = "fused"):
    x = _check_input(x, cfg)
    pos = np.arange(x.shape[0])
    queries = project_queries(x, w, cfg, pos)
    cache = project_cache_rows(x, w, cfg, pos)
    return attend(x, queries, cache, pos, w, cfg, path)


def forward(x, w: WeightSet, cfg: AttentionConfig, path: Optional[Path] = None) -> np.ndarray:
    """Causal forward pass of ``cfg.mechanism``; GTA defaults to the fused path."""
    return forward_with_maps(x, w, cfg, path or "fused")[0]


def _expect(cfg: AttentionConfig, mechanism: Mechanism):
    if cfg.mechanism is not mechanism:
        raise ValueError(f"expected a {mechanism.value} config, got {cfg.mechanism.value}")


def mha_forward(x, w, cfg):
    _expect(cfg, Mechanism.MHA)
    return forward(x, w, cfg)


def gqa_forward(x, w, cfg):
    _expect(cfg, Mechanism.GQA)
    return forward(x, w, cfg)


def mla_forward(x, w, cfg):
    _expect(cfg, Mechanism.MLA)
    return forward(x, w, cfg)


def gva_forward(x, w, cfg):
    _expect(cfg, Mechanism.GVA)
    return forward(x, w, cfg)


def gha_forward(x, w, cfg):
    _expect(cfg, Mechanism.GHA)
    return forward(x, w, cfg)


def gta_forward_direct(x, w, cfg):
    """GTA with values decoded per query row before attention.

    Returns ``(output, maps)`` where ``maps`` is keyed by
    (query group, key group).
    """
    _expect(cfg, Mechanism.GTA)
    return forward_with_maps(x, w, cfg, "direct")


def gta_forward_fused(x, w, cfg):
    """GTA with the attention map applied to latents before projection and gating."""
    _expect(cfg, Mechanism.GTA)
    return forward(x, w, cfg, "fused")
