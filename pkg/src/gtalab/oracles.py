"""Slow reference implementations and the verification suite.

The reference forwards here use explicit Python loops over positions,
heads and features. They share nothing with :mod:`gtalab.attention` beyond
the config and weight containers: no matrix products, no shared attention
maps, their own rotary embedding and softmax.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .attention import forward, gta_forward_direct, gta_forward_fused
from .backward import gta_backward
from .config import AttentionConfig, Mechanism
from .errors import OracleError
from .kvcache import generate_outputs, prefill
from .tensor import ActivationKind
from .weights import init_weights

ALGEBRAIC_TOL = 1e-12
DECODE_TOL = 1e-10
FD_REL_TOL = 1e-5
FD_STEP = 1e-5
GRAD_FLOOR = 1e-8
ORACLE_MAX_N = 64


# -- scalar helpers ---------------------------------------------------------

def _vecmat(x, w, col0=0, ncols=None) -> list[float]:
    """Row vector ``x`` times columns ``col0:col0+ncols`` of ``w``, by loops."""
    ncols = w.shape[1] - col0 if ncols is None else ncols
    out = []
    for j in range(col0, col0 + ncols):
        s = 0.0
        for r in range(len(x)):
            s += x[r] * w[r, j]
        out.append(s)
    return out


def _rope_vec(v: list[float], pos: int, theta: float) -> list[float]:
    d = len(v)
    out = list(v)
    for k in range(d // 2):
        ang = pos * theta ** (-2.0 * k / d)
        c, s = math.cos(ang), math.sin(ang)
        a, b = v[2 * k], v[2 * k + 1]
        out[2 * k] = a * c - b * s
        out[2 * k + 1] = a * s + b * c
    return out


def _dot(a, b) -> float:
    s = 0.0
    for u, v in zip(a, b):
        s += u * v
    return s


def _softmax_causal(scores: list[float]) -> list[float]:
    m = max(scores)
    e = [math.exp(s - m) for s in scores]
    z = sum(e)
    return [v / z for v in e]


def _act(z: float, kind: ActivationKind) -> float:
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + math.exp(-z))
    if kind is ActivationKind.SILU:
        return z / (1.0 + math.exp(-z))
    if kind is ActivationKind.RELU_SQUARED:
        return max(z, 0.0) ** 2
    return 1.0


def _group(i: int, n_heads: int, n_groups: int, modulo: bool = False) -> int:
    return i % n_groups if modulo else i // (n_heads // n_groups)


# -- reference forwards -----------------------------------------------------

def naive_attention(x, w, cfg: AttentionConfig) -> np.ndarray:
    """Causal forward of ``cfg.mechanism`` computed with scalar loops."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle limited to N <= {ORACLE_MAX_N}")
    H, nh, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim
    theta = cfg.rope_theta
    m = cfg.mechanism
    rows = [list(x[t]) for t in range(n)]
    out = np.zeros((n, H))

    if m is Mechanism.MLA:
        dn, dr, dc = cfg.mla_d_nope, cfg.mla_d_rope, cfg.mla_d_c
        ckv = [_vecmat(r, w.W_DKV) for r in rows]
        kr = [_rope_vec(_vecmat(r, w.W_KR), t, theta) for t, r in enumerate(rows)]
        for i in range(nh):
            keys = [_vecmat(ckv[s], w.W_UK[i]) + kr[s] for s in range(n)]
            vals = [_vecmat(ckv[s], w.W_UV[i]) for s in range(n)]
            for t in range(n):
                q = _vecmat(rows[t], w.W_Q, i * dn, dn) + _rope_vec(_vecmat(rows[t], w.W_QR[i]), t, theta)
                p = _softmax_causal([_dot(q, keys[s]) / math.sqrt(dn + dr) for s in range(t + 1)])
                o = [sum(p[s] * vals[s][d] for s in range(t + 1)) for d in range(dn)]
                out[t] += _vecmat(o, w.W_O[i])
        return out

    modulo = cfg.grouping.value == "modulo" and m is Mechanism.GTA
    for i in range(nh):
        if m is Mechanism.MHA:
            qg, kg, vg = i, i, i
        elif m is Mechanism.GQA:
            qg, kg, vg = i, i % cfg.n_k, i % cfg.n_k
        elif m is Mechanism.GVA:
            qg, kg, vg = _group(i, nh, cfg.n_q), _group(i, nh, cfg.n_k), i
        else:
            qg = _group(i, nh, cfg.n_q, modulo)
            kg = _group(i, nh, cfg.n_k, modulo)
            vg = _group(i, nh, cfg.n_c, modulo)
        keys = [_rope_vec(_vecmat(rows[s], w.W_K, kg * dh, dh), s, theta) for s in range(n)]
        if m in (Mechanism.GHA, Mechanism.GTA):
            dl = cfg.value_latent_dim
            vals = [_vecmat(_vecmat(rows[s], w.W_C, vg * dl, dl), w.W_P[i]) for s in range(n)]
        else:
            vals = [_vecmat(rows[s], w.W_V, vg * dh, dh) for s in range(n)]
        for t in range(n):
            q = _rope_vec(_vecmat(rows[t], w.W_Q, qg * dh, dh), t, theta)
            p = _softmax_causal([_dot(q, keys[s]) / math.sqrt(dh) for s in range(t + 1)])
            if m is Mechanism.GTA:
                gate = [_act(z, cfg.gate_activation) for z in _vecmat(rows[t], w.W_G[i])]
            else:
                gate = [1.0] * dh
            o = [0.0] * dh
            for s in range(t + 1):
                for d in range(dh):
                    o[d] += p[s] * vals[s][d] * gate[d]
            out[t] += _vecmat(o, w.W_O[i])
    return out


# -- finite differences -----------------------------------------------------

def fd_gradient(f: Callable[[], float], param: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``f()`` with respect to ``param`` (perturbed in place)."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step {h} outside [1e-7, 1e-3]")
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        orig = param[idx]
        param[idx] = orig + h
        up = f()
        param[idx] = orig - h
        down = f()
        param[idx] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise OracleError(f"non-finite loss at index {idx}")
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def gradient_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_FLOOR) -> tuple[float, float]:
    """``(max_abs_err, max_rel_err)``; relative error only where ``|analytic| > floor``."""
    diff = np.abs(analytic - numeric)
    big = np.abs(analytic) > floor
    rel = diff[big] / np.maximum(np.abs(analytic[big]), np.abs(numeric[big]))
    return float(diff.max(initial=0.0)), float(rel.max(initial=0.0))


def check_gta_gradients(cfg: AttentionConfig, seed: int, n: int = 3, h: float = FD_STEP, std: float = 0.3):
    """Compare :func:`gta_backward` with central differences on every argument.

    Returns ``{name: (max_abs_err, max_rel_err)}``.
    """
    rng = np.random.default_rng(seed + 10_000)
    w = init_weights(cfg, seed, std=std)
    x = rng.normal(size=(n, cfg.hidden_dim))
    dy = rng.normal(size=(n, cfg.hidden_dim))
    analytic = gta_backward(x, w, cfg, dy)

    def loss():
        return float(np.sum(dy * gta_forward_direct(x, w, cfg)[0]))

    result = {}
    for name, g in analytic.items():
        param = x if name == "x" else getattr(w, name)
        result[name] = gradient_errors(g, fd_gradient(loss, param, h))
    return result


# -- suite ------------------------------------------------------------------

@dataclass(frozen=True)
class OracleReport:
    case: str
    max_abs_err: float
    max_rel_err: float
    passed: bool
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _errs(a, b) -> tuple[float, float]:
    diff = np.abs(np.asarray(a) - np.asarray(b))
    scale = np.maximum(np.abs(a), np.abs(b))
    nz = scale > 0
    rel = float((diff[nz] / scale[nz]).max(initial=0.0))
    return float(diff.max(initial=0.0)), rel


def _report(case, a, b, tol, seed) -> OracleReport:
    abs_err, rel_err = _errs(a, b)
    return OracleReport(case, abs_err, rel_err, bool(abs_err <= tol), seed)


def small_config(mechanism, **overrides) -> AttentionConfig:
    """A small layer shape exercising every grouping path of ``mechanism``."""
    base = dict(hidden_dim=16, n_heads=4, head_dim=4, max_seq_len=64)
    per = {
        Mechanism.MHA: {},
        Mechanism.GQA: dict(n_k=2),
        Mechanism.MLA: dict(mla_d_c=6, mla_d_rope=2),
        Mechanism.GVA: dict(n_q=2, n_k=2),
        Mechanism.GHA: dict(n_q=2, n_k=1, n_c=2),
        Mechanism.GTA: dict(n_q=2, n_k=1, n_c=2, latent_dim=8),
    }
    m = Mechanism(mechanism)
    return AttentionConfig(mechanism=m, **{**base, **per[m], **overrides})


def default_grid() -> list[AttentionConfig]:
    grid = [small_config(m) for m in Mechanism]
    grid += [
        small_config(Mechanism.GTA, gate_activation=ActivationKind.SILU),
        small_config(Mechanism.GTA, gate_activation=ActivationKind.RELU_SQUARED),
        small_config(Mechanism.GTA, grouping="modulo"),
        small_config(Mechanism.GQA, n_k=1),
    ]
    return grid


GRIDS = {
    "tiny": dict(n_values=(1, 2, 4), seeds=(0, 1)),
    "default": dict(n_values=(1, 2, 4, 8, 16), seeds=(0, 1, 2, 3, 4)),
}

SUITE_STD = 0.3


def config_label(cfg: AttentionConfig) -> str:
    label = cfg.mechanism.value
    if cfg.mechanism is Mechanism.GTA:
        label += f"-{cfg.gate_activation.value}-{cfg.grouping.value}"
    elif cfg.mechanism is Mechanism.GQA:
        label += f"-k{cfg.n_k}"
    return label


def run_suite(
    seeds: Sequence[int] = GRIDS["default"]["seeds"],
    config_grid: Optional[Iterable[AttentionConfig]] = None,
    n_values: Sequence[int] = GRIDS["default"]["n_values"],
    overrides: Optional[dict[str, Callable]] = None,
    gradients: bool = True,
) -> list[OracleReport]:
    """Run oracle, fused/direct, decode-consistency, rank and gradient cases.

    ``overrides`` may replace ``"forward"``, ``"gta_fused"`` or
    ``"gta_direct"`` with another callable of the same signature; it exists
    so the harness can be checked against deliberately broken paths.
    Reports are sorted by case name.
    """
    grid = list(default_grid() if config_grid is None else config_grid)
    if not grid:
        raise ValueError("config grid is empty")
    seeds = list(dict.fromkeys(seeds))
    ov = overrides or {}
    fwd = ov.get("forward", forward)
    fused = ov.get("gta_fused", gta_forward_fused)
    direct = ov.get("gta_direct", lambda x, w, c: gta_forward_direct(x, w, c)[0])

    reports = []
    for cfg in grid:
        label = config_label(cfg)
        for seed in seeds:
            w = init_weights(cfg, seed, std=SUITE_STD)
            rng = np.random.default_rng(seed)
            for n in n_values:
                x = rng.normal(size=(n, cfg.hidden_dim))
                tag = f"{label}:N{n:02d}:seed{seed}"
                fast = fwd(x, w, cfg)
                reports.append(_report(f"oracle:{tag}", fast, naive_attention(x, w, cfg), ALGEBRAIC_TOL, seed))
                if cfg.mechanism is Mechanism.GTA:
                    reports.append(
                        _report(f"fused_direct:{tag}", fused(x, w, cfg), direct(x, w, cfg), ALGEBRAIC_TOL, seed)
                    )
                pre, _ = prefill(x, w, cfg)
                dec, _ = generate_outputs(x, w, cfg)
                reports.append(_report(f"prefill_decode:{tag}", pre, dec, DECODE_TOL, seed))
            if w.W_P is not None:
                ranks = [np.linalg.matrix_rank(p) for p in w.W_P]
                deficit = float(cfg.head_dim - min(ranks))
                reports.append(OracleReport(f"rank_wp:{label}:seed{seed}", deficit, 0.0, deficit == 0, seed))
            if gradients and cfg.mechanism is Mechanism.GTA and cfg.grouping.value == "block":
                for name, (abs_err, rel_err) in check_gta_gradients(cfg, seed).items():
                    reports.append(
                        OracleReport(f"gradient:{label}:{name}:seed{seed}", abs_err, rel_err, rel_err < FD_REL_TOL, seed)
                    )
    return sorted(reports, key=lambda r: r.case)


def all_passed(reports: Iterable[OracleReport]) -> bool:
    return all(r.passed for r in reports)
