"""Reverse-mode gradients of the GTA forward pass."""

from __future__ import annotations

import math

import numpy as np

from .attention import _attention_map, _block, _check_input
from .config import AttentionConfig, GroupingMap, Mechanism
from .errors import ShapeError
from .tensor import activate, activate_grad, apply_rope_blocks, as_matrix
from .weights import WeightSet


def gta_backward(x, w: WeightSet, cfg: AttentionConfig, upstream_grad) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream_grad * gta_forward_direct(x))``.

    Returns a dict with keys ``x``, ``W_Q``, ``W_K``, ``W_C``, ``W_P``,
    ``W_G`` and ``W_O``, each shaped like its argument. Weights GTA does not
    read (for example ``W_V``) are absent.
    """
    if cfg.mechanism is not Mechanism.GTA:
        raise ValueError("gta_backward needs a gta config")
    x = _check_input(x, cfg)
    dy = as_matrix(upstream_grad)
    if dy.shape != (x.shape[0], cfg.hidden_dim):
        raise ShapeError(f"upstream gradient {dy.shape} does not match output {(x.shape[0], cfg.hidden_dim)}")

    n = x.shape[0]
    dh, dl = cfg.head_dim, cfg.latent_dim
    pos = np.arange(n)
    gm = GroupingMap.for_config(cfg)
    scale = math.sqrt(dh)

    q = apply_rope_blocks(x @ w.W_Q, pos, cfg.rope)
    k = apply_rope_blocks(x @ w.W_K, pos, cfg.rope)
    c = x @ w.W_C

    maps = {}
    for i in range(cfg.n_heads):
        key = (gm.q_of[i], gm.k_of[i])
        if key not in maps:
            maps[key] = _attention_map(_block(q, key[0], dh), _block(k, key[1], dh), pos, pos, scale)

    d_maps = {key: np.zeros_like(a) for key, a in maps.items()}
    dc = np.zeros_like(c)
    dx = np.zeros_like(x)
    grads = {
        "W_P": np.zeros_like(w.W_P),
        "W_G": np.zeros_like(w.W_G),
        "W_O": np.zeros_like(w.W_O),
    }
    act = cfg.gate_activation
    for i in range(cfg.n_heads):
        key = (gm.q_of[i], gm.k_of[i])
        a = maps[key]
        c_i = _block(c, gm.c_of[i], dl)
        u = c_i @ w.W_P[i]
        mixed = a @ u
        z = x @ w.W_G[i]
        gate = activate(z, act)
        o = mixed * gate

        grads["W_O"][i] = o.T @ dy
        do = dy @ w.W_O[i].T
        dz = do * mixed * activate_grad(z, act)
        grads["W_G"][i] = x.T @ dz
        dx += dz @ w.W_G[i].T
        dmixed = do * gate
        d_maps[key] += dmixed @ u.T
        du = a.T @ dmixed
        grads["W_P"][i] = c_i.T @ du
        dc[:, gm.c_of[i] * dl:(gm.c_of[i] + 1) * dl] += du @ w.W_P[i].T

    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    for (qg, kg), a in maps.items():
        da = d_maps[(qg, kg)]
        # masked entries have a == 0 and drop out here
        ds = a * (da - (da * a).sum(axis=1, keepdims=True)) / scale
        dq[:, qg * dh:(qg + 1) * dh] += ds @ _block(k, kg, dh)
        dk[:, kg * dh:(kg + 1) * dh] += ds.T @ _block(q, qg, dh)

    # rotation transpose is rotation by the negated angle
    dq = apply_rope_blocks(dq, -pos, cfg.rope)
    dk = apply_rope_blocks(dk, -pos, cfg.rope)
    grads["W_Q"] = x.T @ dq
    grads["W_K"] = x.T @ dk
    grads["W_C"] = x.T @ dc
    dx += dq @ w.W_Q.T + dk @ w.W_K.T + dc @ w.W_C.T
    grads["x"] = dx
    return grads
