"""Weight containers and deterministic initialisation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .config import AttentionConfig, GroupingMap, Mechanism

INIT_STD = 0.02


@dataclass
class WeightSet:
    """Projection weights for one attention layer.

    Per-head families are stacked along axis 0: ``W_P`` is
    ``(n_h, d_l, d_h)``, ``W_G`` is ``(n_h, H, d_h)``, ``W_O`` is
    ``(n_h, d_v, H)`` where ``d_v`` is the per-head value width. Fields a
    mechanism does not use stay ``None``.
    """

    W_O: np.ndarray
    W_Q: Optional[np.ndarray] = None
    W_K: Optional[np.ndarray] = None
    W_V: Optional[np.ndarray] = None
    W_C: Optional[np.ndarray] = None
    W_P: Optional[np.ndarray] = None
    W_G: Optional[np.ndarray] = None
    W_DKV: Optional[np.ndarray] = None
    W_UK: Optional[np.ndarray] = None
    W_UV: Optional[np.ndarray] = None
    W_KR: Optional[np.ndarray] = None
    W_QR: Optional[np.ndarray] = None

    @property
    def W_O_concat(self) -> np.ndarray:
        """Output projection as one ``(n_h * d_v, H)`` matrix."""
        n, d, h = self.W_O.shape
        return self.W_O.reshape(n * d, h)

    def items(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                yield f.name, value

    def copy(self) -> "WeightSet":
        return WeightSet(**{name: value.copy() for name, value in self.items()})


def selection_matrix(slot: int, latent_dim: int, head_dim: int) -> np.ndarray:
    """0/1 matrix sending latent coords ``slot*d_h + j (mod d_l)`` to output ``j``."""
    s = np.zeros((latent_dim, head_dim))
    rows = (slot * head_dim + np.arange(head_dim)) % latent_dim
    s[rows, np.arange(head_dim)] = 1.0
    return s


def init_weights(cfg: AttentionConfig, seed: int, std: float = INIT_STD) -> WeightSet:
    """Draw a WeightSet for ``cfg`` from ``numpy.random.default_rng(seed)`` (PCG64).

    General weights are ``Normal(0, std**2)``. For GTA and GHA each ``W_P[i]``
    is a selection matrix on the head's slice of its value group plus
    ``Normal(0, std**2)`` noise.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    H, nh, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim

    def normal(*shape):
        return rng.normal(0.0, std, size=shape)

    m = cfg.mechanism
    if m is Mechanism.MLA:
        dc, dr, dn = cfg.mla_d_c, cfg.mla_d_rope, cfg.mla_d_nope
        return WeightSet(
            W_Q=normal(H, nh * dn),
            W_DKV=normal(H, dc),
            W_UK=normal(nh, dc, dn),
            W_UV=normal(nh, dc, dn),
            W_KR=normal(H, dr),
            W_QR=normal(nh, H, dr),
            W_O=normal(nh, dn, H),
        )
    if m is Mechanism.MHA:
        return WeightSet(W_Q=normal(H, nh * dh), W_K=normal(H, nh * dh), W_V=normal(H, nh * dh), W_O=normal(nh, dh, H))
    if m is Mechanism.GQA:
        return WeightSet(
            W_Q=normal(H, nh * dh), W_K=normal(H, cfg.n_k * dh), W_V=normal(H, cfg.n_k * dh), W_O=normal(nh, dh, H)
        )
    if m is Mechanism.GVA:
        return WeightSet(
            W_Q=normal(H, cfg.n_q * dh), W_K=normal(H, cfg.n_k * dh), W_V=normal(H, nh * dh), W_O=normal(nh, dh, H)
        )

    dl = cfg.value_latent_dim
    w_q = normal(H, cfg.n_q * dh)
    w_k = normal(H, cfg.n_k * dh)
    w_c = normal(H, cfg.n_c * dl)
    slots = GroupingMap.for_config(cfg).slot_of
    w_p = np.stack([selection_matrix(slots[i], dl, dh) for i in range(nh)]) + normal(nh, dl, dh)
    w_o = normal(nh, dh, H)
    if m is Mechanism.GHA:
        return WeightSet(W_Q=w_q, W_K=w_k, W_C=w_c, W_P=w_p, W_O=w_o)
    return WeightSet(W_Q=w_q, W_K=w_k, W_C=w_c, W_P=w_p, W_G=normal(nh, H, dh), W_O=w_o)
