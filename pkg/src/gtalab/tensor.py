"""Dense float64 kernels: matmul, softmax, rotary embedding and gating.

A "matrix" throughout the package is a 2-D ``numpy.ndarray`` of dtype
float64 in C (row-major) order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


class ActivationKind(str, enum.Enum):
    """Gate nonlinearity. ``ONE`` is a constant-1 gate used by reduction tests."""

    SIGMOID = "sigmoid"
    SILU = "silu"
    RELU_SQUARED = "relu_squared"
    ONE = "one"


@dataclass(frozen=True)
class RopeParams:
    head_dim: int
    theta_base: float = 10000.0

    def __post_init__(self):
        if self.head_dim < 0 or self.head_dim % 2:
            raise ConfigError(f"rotary head_dim must be even and >= 0, got {self.head_dim}")
        if not self.theta_base > 1.0:
            raise ConfigError(f"rotary theta_base must exceed 1, got {self.theta_base}")


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product ``a @ b`` with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def row_softmax(scores: np.ndarray, scale: float) -> np.ndarray:
    """Softmax of ``scores / scale`` along each row.

    Entries equal to ``-inf`` are treated as masked and receive zero
    probability. Every row must contain at least one finite entry.
    """
    if not scale > 0:
        raise ValueError(f"softmax scale must be positive, got {scale}")
    s = as_matrix(scores)
    if np.isnan(s).any() or np.isposinf(s).any():
        raise ValueError("softmax scores must be finite or -inf (masked)")
    z = s / scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rope_angles(positions, params: RopeParams) -> np.ndarray:
    """Rotation angles, shape ``(len(positions), head_dim // 2)``."""
    half = params.head_dim // 2
    inv_freq = params.theta_base ** (-2.0 * np.arange(half) / params.head_dim)
    return np.outer(np.asarray(positions, dtype=np.float64), inv_freq)


def _rotate(x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    # x: (..., d) with pairs (2k, 2k+1); angles broadcast against (..., d/2)
    cos = np.cos(angles)
    sin = np.sin(angles)
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def apply_rope(x: np.ndarray, positions, params: RopeParams) -> np.ndarray:
    """Rotate each row of ``x`` by its position.

    Feature pairs ``(2k, 2k+1)`` are rotated by
    ``position * theta_base ** (-2k / head_dim)``.
    """
    x = as_matrix(x)
    positions = np.asarray(positions)
    if x.shape[1] != params.head_dim:
        raise ShapeError(f"rope expects {params.head_dim} columns, got {x.shape}")
    if positions.shape != (x.shape[0],):
        raise ShapeError(f"need one position per row: {positions.shape} vs {x.shape}")
    return _rotate(x, rope_angles(positions, params))


def apply_rope_blocks(x: np.ndarray, positions, params: RopeParams) -> np.ndarray:
    """Apply :func:`apply_rope` independently to every ``head_dim``-wide column block."""
    x = as_matrix(x)
    d = params.head_dim
    if d == 0:
        return x.copy()
    if x.shape[1] % d:
        raise ShapeError(f"{x.shape[1]} columns are not a multiple of head_dim {d}")
    n = x.shape[0]
    blocks = x.reshape(n, -1, d)
    angles = rope_angles(positions, params)[:, None, :]
    return _rotate(blocks, angles).reshape(n, -1)


def activate(z: np.ndarray, kind: ActivationKind) -> np.ndarray:
    kind = ActivationKind(kind)
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    if kind is ActivationKind.SILU:
        return z / (1.0 + np.exp(-z))
    if kind is ActivationKind.RELU_SQUARED:
        return np.square(np.maximum(z, 0.0))
    return np.ones_like(z)


def activate_grad(z: np.ndarray, kind: ActivationKind) -> np.ndarray:
    """Derivative of :func:`activate` with respect to its input."""
    kind = ActivationKind(kind)
    if kind is ActivationKind.SIGMOID:
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)
    if kind is ActivationKind.SILU:
        s = 1.0 / (1.0 + np.exp(-z))
        return s + z * s * (1.0 - s)
    if kind is ActivationKind.RELU_SQUARED:
        return 2.0 * np.maximum(z, 0.0)
    return np.zeros_like(z)


def elementwise_gate(v: np.ndarray, gate_row: np.ndarray, activation: ActivationKind) -> np.ndarray:
    """Return ``v * act(gate_row)``.

    ``gate_row`` holds pre-activations and has either one row, which is
    broadcast over every row of ``v``, or exactly ``v.shape[0]`` rows.
    """
    v = as_matrix(v)
    g = as_matrix(gate_row)
    if g.shape[1] != v.shape[1]:
        raise ShapeError(f"gate columns {g.shape} do not match values {v.shape}")
    if g.shape[0] not in (1, v.shape[0]):
        raise ShapeError(f"gate must have 1 or {v.shape[0]} rows, got {g.shape}")
    return v * activate(g, activation)


def causal_mask(q_positions, k_positions) -> np.ndarray:
    """Boolean matrix, True where the key lies in the query's future."""
    return np.asarray(k_positions)[None, :] > np.asarray(q_positions)[:, None]
