"""Token-by-token decoding against a growing cache reproduces a full prefill."""

import numpy as np

from gtalab import init_weights
from gtalab.kvcache import KVCacheState, cache_bytes, decode_step, prefill
from gtalab.oracles import small_config

cfg = small_config("gta")
w = init_weights(cfg, seed=1, std=0.3)
x = np.random.default_rng(1).normal(size=(16, cfg.hidden_dim))

full, _ = prefill(x, w, cfg)

cache = KVCacheState.empty(cfg, capacity=len(x))
rows = []
for t in range(len(x)):
    rows.append(decode_step(x[t:t + 1], cache, w, cfg).output)
    if t in (0, 7, 15):
        print(f"after token {t + 1:2d}: {cache_bytes(cache):5d} bytes cached")

step = np.vstack(rows)
print("max |decode - prefill|:", np.abs(step - full).max())
print("buffers:", {k: v.shape for k, v in cache.view().items()})
