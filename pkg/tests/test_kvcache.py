from fractions import Fraction

import numpy as np
import pytest

from gtalab.attention import forward
from gtalab.config import Mechanism
from gtalab.cost import cache_formula
from gtalab.errors import CacheOverflowError
from gtalab.kvcache import KVCacheState, cache_bytes, decode_step, generate_outputs, prefill
from gtalab.oracles import small_config
from gtalab.presets import load_presets
from gtalab.weights import init_weights

PRESETS = load_presets()


def x_for(cfg, n, seed=0):
    return np.random.default_rng(seed).normal(size=(n, cfg.hidden_dim))


def test_gta_prefill_cache_shapes(gta_cfg):
    _, cache = prefill(x_for(gta_cfg, 3), init_weights(gta_cfg, 0), gta_cfg)
    v = cache.view()
    assert v["keys"].shape == (3, gta_cfg.n_k * gta_cfg.head_dim)
    assert v["latents"].shape == (3, gta_cfg.n_c * gta_cfg.latent_dim)
    assert cache.length == 3


@pytest.mark.parametrize("mechanism", list(Mechanism))
def test_prefill_outputs_bitwise_equal_forward(mechanism):
    cfg = small_config(mechanism)
    w = init_weights(cfg, 1, std=0.3)
    x = x_for(cfg, 7)
    out, _ = prefill(x, w, cfg)
    assert np.array_equal(out, forward(x, w, cfg))


@pytest.mark.parametrize("mechanism", list(Mechanism))
@pytest.mark.parametrize("seed", range(20))
def test_decode_replay_matches_prefill(mechanism, seed):
    cfg = small_config(mechanism)
    w = init_weights(cfg, seed, std=0.3)
    x = x_for(cfg, 32, seed)
    pre, pre_cache = prefill(x, w, cfg)
    dec, dec_cache = generate_outputs(x, w, cfg)
    np.testing.assert_allclose(dec, pre, atol=1e-10, rtol=0)
    for name, buf in pre_cache.view().items():
        np.testing.assert_allclose(dec_cache.view()[name], buf, atol=1e-12, rtol=0)


@pytest.mark.parametrize("mechanism", list(Mechanism))
def test_first_decode_equals_single_row_forward(mechanism):
    cfg = small_config(mechanism)
    w = init_weights(cfg, 2, std=0.3)
    x = x_for(cfg, 1)
    res = decode_step(x, KVCacheState.empty(cfg), w, cfg)
    np.testing.assert_allclose(res.output, forward(x, w, cfg), atol=1e-12, rtol=0)


def test_length_increments_by_one(gta_cfg):
    w = init_weights(gta_cfg, 0)
    cache = KVCacheState.empty(gta_cfg, capacity=5)
    x = x_for(gta_cfg, 5)
    for t in range(5):
        res = decode_step(x[t:t + 1], cache, w, gta_cfg)
        assert res.cache is cache
        assert cache.length == t + 1
        assert np.isfinite(res.output).all()


def test_decode_overflow(gta_cfg):
    w = init_weights(gta_cfg, 0)
    _, cache = prefill(x_for(gta_cfg, 2), w, gta_cfg, capacity=2)
    with pytest.raises(CacheOverflowError):
        decode_step(x_for(gta_cfg, 1), cache, w, gta_cfg)
    assert cache.length == 2


def test_prefill_overflow(gta_cfg):
    with pytest.raises(CacheOverflowError):
        prefill(x_for(gta_cfg, 4), init_weights(gta_cfg, 0), gta_cfg, capacity=3)


def test_keys_are_stored_rotated(gta_cfg):
    from gtalab.attention import project_qkc

    w = init_weights(gta_cfg, 0)
    x = x_for(gta_cfg, 4)
    _, cache = prefill(x, w, gta_cfg)
    _, k, c = project_qkc(x, w, gta_cfg)
    assert np.array_equal(cache.view()["keys"], k)
    assert np.array_equal(cache.view()["latents"], c)


@pytest.mark.parametrize("mechanism", list(Mechanism))
@pytest.mark.parametrize("n", [1, 3, 8])
def test_cache_bytes_match_cost_formula(mechanism, n):
    cfg = small_config(mechanism)
    _, cache = prefill(x_for(cfg, n), init_weights(cfg, 0), cfg)
    assert cache_bytes(cache) == 8 * cache_formula(cfg, n)


def test_gta1_preset_caches_192_floats_per_token():
    cfg = PRESETS["gta-160m-1"].config
    _, cache = prefill(x_for(cfg, 3), init_weights(cfg, 0), cfg, capacity=4)
    assert cache.floats == 3 * 192


def test_1b_cache_bytes_and_ratio():
    gta = PRESETS["gta-1b"].config
    gqa = PRESETS["gqa-1b"].config
    _, c_gta = prefill(x_for(gta, 1), init_weights(gta, 0), gta, capacity=1)
    _, c_gqa = prefill(x_for(gqa, 1), init_weights(gqa, 0), gqa, capacity=1)
    assert cache_bytes(c_gta) == 1536
    assert c_gqa.floats == 2 * 5 * 64 == 640
    assert Fraction(cache_bytes(c_gta), cache_bytes(c_gqa)) == Fraction(3, 10)


@pytest.mark.parametrize("name", [n for n, p in PRESETS.items() if p.config.mechanism is Mechanism.GTA])
def test_gta_over_mha_cache_ratio(name):
    cfg = PRESETS[name].config
    mha = cfg.with_(mechanism=Mechanism.MHA, latent_dim=None)
    caches = []
    for c in (cfg, mha):
        cache = KVCacheState.empty(c, capacity=2)
        cache.length = 2
        caches.append(cache)
    expected = Fraction(cfg.n_k * cfg.head_dim + cfg.n_c * cfg.latent_dim, 2 * cfg.n_heads * cfg.head_dim)
    assert Fraction(cache_bytes(caches[0]), cache_bytes(caches[1])) == expected
