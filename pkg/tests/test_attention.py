import numpy as np
import pytest

from gtalab.attention import (
    decode_values,
    forward,
    gha_forward,
    gqa_forward,
    gta_forward_direct,
    gta_forward_fused,
    gva_forward,
    mha_forward,
    mla_forward,
    project_qkc,
)
from gtalab.config import AttentionConfig, Mechanism
from gtalab.errors import ShapeError
from gtalab.oracles import naive_attention, small_config
from gtalab.tensor import ActivationKind, activate, apply_rope
from gtalab.weights import WeightSet, init_weights

TOL = 1e-12
STD = 0.3


def inputs(cfg, n, seed=0):
    return np.random.default_rng(seed).normal(size=(n, cfg.hidden_dim))


# -- projections and value decoding ------------------------------------------

def test_project_qkc_zero_input(gta_cfg):
    w = init_weights(gta_cfg, 0)
    for m in project_qkc(np.zeros((3, gta_cfg.hidden_dim)), w, gta_cfg):
        assert not m.any()


def test_project_qkc_single_row_by_hand():
    cfg = AttentionConfig("gta", hidden_dim=4, n_heads=2, head_dim=2, n_q=1, n_k=1, n_c=1, latent_dim=2)
    w = init_weights(cfg, 0)
    w.W_Q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 2.0]])
    w.W_K = np.array([[2.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    w.W_C = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    q, k, c = project_qkc(x, w, cfg)
    # position 0: rotary embedding is the identity
    assert q.tolist() == [[4.0, 13.0]]
    assert k.tolist() == [[5.0, 4.0]]
    assert c.tolist() == [[14.0, 1.0]]


def test_project_qkc_partition_roundtrip(gta_cfg):
    w = init_weights(gta_cfg, 1)
    q, _, _ = project_qkc(inputs(gta_cfg, 5), w, gta_cfg)
    d = gta_cfg.head_dim
    parts = [q[:, g * d:(g + 1) * d] for g in range(gta_cfg.n_q)]
    assert np.array_equal(np.hstack(parts), q)


def test_project_qkc_rotates_each_block(gta_cfg):
    w = init_weights(gta_cfg, 2)
    x = inputs(gta_cfg, 4)
    q, _, _ = project_qkc(x, w, gta_cfg)
    raw = x @ w.W_Q
    d = gta_cfg.head_dim
    for g in range(gta_cfg.n_q):
        np.testing.assert_array_equal(q[:, g * d:(g + 1) * d], apply_rope(raw[:, g * d:(g + 1) * d], np.arange(4), gta_cfg.rope))


def test_project_qkc_shape_error(gta_cfg):
    with pytest.raises(ShapeError):
        project_qkc(np.zeros((2, 3)), init_weights(gta_cfg, 0), gta_cfg)


def test_decode_values_zero_gate_halves(gta_cfg):
    w = init_weights(gta_cfg, 0)
    w.W_G[:] = 0.0
    x = inputs(gta_cfg, 3)
    _, _, c = project_qkc(x, w, gta_cfg)
    v = decode_values(c, x, w, gta_cfg, 2)
    ungated = c[:, 8:16] @ w.W_P[2]
    for t in range(3):
        np.testing.assert_array_equal(v[t], 0.5 * ungated)


def test_decode_values_selection_copies_latent_slice(gta_cfg):
    w = init_weights(gta_cfg, 0, std=0.0)
    w.W_G = np.random.default_rng(0).normal(size=w.W_G.shape)
    x = inputs(gta_cfg, 3)
    _, _, c = project_qkc(x, w, gta_cfg)
    v = decode_values(c, x, w, gta_cfg, 1)  # head 1: group 0, slot 1 -> latent cols 4..7
    gate = activate(x @ w.W_G[1], ActivationKind.SIGMOID)
    for t in range(3):
        np.testing.assert_allclose(v[t], c[:, 4:8] * gate[t], atol=0, rtol=0)


def test_decode_values_matches_element_loop(gta_cfg):
    w = init_weights(gta_cfg, 5, std=STD)
    x = inputs(gta_cfg, 4)
    _, _, c = project_qkc(x, w, gta_cfg)
    head, d_l, d_h = 3, gta_cfg.latent_dim, gta_cfg.head_dim
    grp = 1
    v = decode_values(c, x, w, gta_cfg, head)
    for t in range(4):
        for s in range(4):
            for d in range(d_h):
                u = sum(c[s, grp * d_l + j] * w.W_P[head][j, d] for j in range(d_l))
                z = sum(x[t, r] * w.W_G[head][r, d] for r in range(gta_cfg.hidden_dim))
                assert abs(v[t, s, d] - u / (1 + np.exp(-z))) < 1e-13


def test_decode_values_head_out_of_range(gta_cfg):
    w = init_weights(gta_cfg, 0)
    with pytest.raises(ValueError):
        decode_values(np.zeros((2, 16)), np.zeros((2, 16)), w, gta_cfg, 4)


# -- forward paths against references -----------------------------------------

@pytest.mark.parametrize("mechanism", list(Mechanism))
@pytest.mark.parametrize("seed", [0, 1])
def test_forward_matches_loop_oracle(mechanism, seed):
    cfg = small_config(mechanism)
    w = init_weights(cfg, seed, std=STD)
    x = inputs(cfg, 4, seed)
    np.testing.assert_allclose(forward(x, w, cfg), naive_attention(x, w, cfg), atol=TOL, rtol=0)


@pytest.mark.parametrize("mechanism", list(Mechanism))
def test_zero_input_gives_zero_output(mechanism):
    cfg = small_config(mechanism)
    out = forward(np.zeros((3, cfg.hidden_dim)), init_weights(cfg, 0), cfg)
    assert not out.any()


@pytest.mark.parametrize("mechanism", [Mechanism.MHA, Mechanism.GQA, Mechanism.GVA])
def test_single_token_output_is_value_times_wo(mechanism):
    cfg = small_config(mechanism)
    w = init_weights(cfg, 0, std=STD)
    x = inputs(cfg, 1)
    v = x @ w.W_V
    d = cfg.head_dim
    from gtalab.config import GroupingMap

    gm = GroupingMap.for_config(cfg)
    expected = sum(v[:, gm.c_of[i] * d:(gm.c_of[i] + 1) * d] @ w.W_O[i] for i in range(cfg.n_heads))
    np.testing.assert_allclose(forward(x, w, cfg), expected, atol=TOL, rtol=0)


def test_gta_single_token(gta_cfg):
    w = init_weights(gta_cfg, 0, std=STD)
    x = inputs(gta_cfg, 1)
    _, _, c = project_qkc(x, w, gta_cfg)
    expected = sum(decode_values(c, x, w, gta_cfg, i)[0] @ w.W_O[i] for i in range(gta_cfg.n_heads))
    out, _ = gta_forward_direct(x, w, gta_cfg)
    np.testing.assert_allclose(out, expected, atol=TOL, rtol=0)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
@pytest.mark.parametrize("activation", ["sigmoid", "silu", "relu_squared"])
def test_fused_equals_direct(n, activation):
    cfg = small_config("gta", gate_activation=activation)
    w = init_weights(cfg, n, std=STD)
    x = inputs(cfg, n)
    direct, _ = gta_forward_direct(x, w, cfg)
    assert np.abs(gta_forward_fused(x, w, cfg) - direct).max() <= TOL


def test_fused_zero_gate_is_half_ungated(gta_cfg):
    w = init_weights(gta_cfg, 3, std=STD)
    w.W_G[:] = 0.0
    x = inputs(gta_cfg, 5)
    ones = gta_cfg.with_(gate_activation=ActivationKind.ONE)
    np.testing.assert_allclose(gta_forward_fused(x, w, gta_cfg), 0.5 * gta_forward_fused(x, w, ones), atol=TOL, rtol=0)


def test_fused_direct_on_scaled_1b_layout():
    # 1B head layout (20 heads, 5 query groups, 1 key, 1 value group) at small widths
    cfg = AttentionConfig("gta", hidden_dim=40, n_heads=20, head_dim=2, n_q=5, n_k=1, n_c=1, latent_dim=4)
    w = init_weights(cfg, 0, std=STD)
    x = inputs(cfg, 8)
    direct, maps = gta_forward_direct(x, w, cfg)
    assert sorted(maps) == [(g, 0) for g in range(5)]
    np.testing.assert_allclose(gta_forward_fused(x, w, cfg), direct, atol=TOL, rtol=0)
    np.testing.assert_allclose(direct, naive_attention(x, w, cfg), atol=TOL, rtol=0)


def test_attention_maps_computed_once_per_group_pair():
    cfg = small_config("gta", n_q=2, n_k=2)
    _, maps = gta_forward_direct(inputs(cfg, 3), init_weights(cfg, 0), cfg)
    assert sorted(maps) == [(0, 0), (1, 1)]


@pytest.mark.parametrize("mechanism", list(Mechanism))
def test_causality(mechanism):
    cfg = small_config(mechanism)
    w = init_weights(cfg, 4, std=STD)
    x = inputs(cfg, 6)
    base = forward(x, w, cfg)
    for t in range(5):
        y = x.copy()
        y[t + 1:] = np.random.default_rng(t).normal(size=y[t + 1:].shape) * 10
        assert np.array_equal(forward(y, w, cfg)[:t + 1], base[:t + 1])


def test_head_permutation_within_group_is_invariant(gta_cfg):
    w = init_weights(gta_cfg, 6, std=STD)
    x = inputs(gta_cfg, 5)
    # heads 0 and 1 share query, key and value groups
    p = w.copy()
    for name in ("W_P", "W_G", "W_O"):
        arr = getattr(p, name)
        arr[[0, 1]] = arr[[1, 0]]
    np.testing.assert_allclose(forward(x, p, gta_cfg), forward(x, w, gta_cfg), atol=TOL, rtol=0)


# -- degeneracy lattice ---------------------------------------------------------

def test_gqa_with_nk_equal_heads_is_mha():
    mha = small_config("mha")
    gqa = small_config("gqa", n_k=mha.n_heads)
    w = init_weights(mha, 0, std=STD)
    x = inputs(mha, 6)
    np.testing.assert_allclose(gqa_forward(x, w, gqa), mha_forward(x, w, mha), atol=TOL, rtol=0)


def test_gva_with_groups_equal_heads_is_mha():
    mha = small_config("mha")
    gva = small_config("gva", n_q=4, n_k=4)
    w = init_weights(mha, 1, std=STD)
    x = inputs(mha, 6)
    np.testing.assert_allclose(gva_forward(x, w, gva), mha_forward(x, w, mha), atol=TOL, rtol=0)


@pytest.mark.parametrize("groups", [4, 2, 1])
def test_gha_with_identity_decoder_is_gva(groups):
    gva = small_config("gva", n_q=groups, n_k=groups)
    gha = small_config("gha", n_q=groups, n_k=groups, n_c=4)
    wv = init_weights(gva, 2, std=STD)
    wh = WeightSet(W_Q=wv.W_Q, W_K=wv.W_K, W_C=wv.W_V, W_P=np.stack([np.eye(4)] * 4), W_O=wv.W_O)
    x = inputs(gva, 6)
    np.testing.assert_allclose(gha_forward(x, wh, gha), gva_forward(x, wv, gva), atol=TOL, rtol=0)


def test_gta_with_unit_gate_and_square_latent_is_gha():
    gha = small_config("gha")
    gta = small_config("gta", latent_dim=gha.head_dim, gate_activation=ActivationKind.ONE)
    wh = init_weights(gha, 3, std=STD)
    wt = init_weights(gta, 3, std=STD)
    wt.W_Q, wt.W_K, wt.W_C, wt.W_P, wt.W_O = wh.W_Q, wh.W_K, wh.W_C, wh.W_P, wh.W_O
    x = inputs(gha, 6)
    np.testing.assert_allclose(gta_forward_fused(x, wt, gta), gha_forward(x, wh, gha), atol=TOL, rtol=0)
    np.testing.assert_allclose(gta_forward_direct(x, wt, gta)[0], gha_forward(x, wh, gha), atol=TOL, rtol=0)


def test_gta_reduces_to_mha():
    mha = small_config("mha")
    gta = small_config("gta", n_q=4, n_k=4, n_c=4, latent_dim=4, gate_activation=ActivationKind.ONE)
    wm = init_weights(mha, 4, std=STD)
    wt = init_weights(gta, 4, std=STD)
    wt.W_Q, wt.W_K, wt.W_C, wt.W_O = wm.W_Q, wm.W_K, wm.W_V, wm.W_O
    wt.W_P = np.stack([np.eye(4)] * 4)
    x = inputs(mha, 6)
    np.testing.assert_allclose(gta_forward_direct(x, wt, gta)[0], mha_forward(x, wm, mha), atol=TOL, rtol=0)


def test_gqa_single_kv_head_is_mqa():
    cfg = small_config("gqa", n_k=1)
    w = init_weights(cfg, 5, std=STD)
    assert w.W_K.shape[1] == cfg.head_dim
    x = inputs(cfg, 5)
    np.testing.assert_allclose(gqa_forward(x, w, cfg), naive_attention(x, w, cfg), atol=TOL, rtol=0)


# -- MLA ------------------------------------------------------------------------

def test_mla_without_rope_is_low_rank_mha():
    cfg = small_config("mla", mla_d_rope=0, mla_d_nope=4)
    w = init_weights(cfg, 0, std=STD)
    x = inputs(cfg, 5)
    # unrotated MHA with K_i = X W_DKV W_UK[i] and V_i = X W_DKV W_UV[i]
    c = x @ w.W_DKV
    out = np.zeros_like(x)
    mask = np.triu(np.ones((5, 5), bool), 1)
    for i in range(4):
        s = (x @ w.W_Q[:, 4 * i:4 * i + 4]) @ (c @ w.W_UK[i]).T / 2.0
        s[mask] = -np.inf
        a = np.exp(s - s.max(1, keepdims=True))
        a /= a.sum(1, keepdims=True)
        out += a @ (c @ w.W_UV[i]) @ w.W_O[i]
    np.testing.assert_allclose(mla_forward(x, w, cfg), out, atol=TOL, rtol=0)


def test_mla_scale_uses_total_head_dim():
    cfg = small_config("mla")
    assert cfg.mla_d_nope + cfg.mla_d_rope == cfg.head_dim


def test_wrong_mechanism_rejected(gta_cfg):
    with pytest.raises(ValueError):
        mha_forward(np.zeros((1, 16)), init_weights(gta_cfg, 0), gta_cfg)
