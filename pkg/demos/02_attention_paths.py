"""The two GTA evaluation orders agree, and match a scalar-loop reference."""

import numpy as np

from gtalab import forward, gta_forward_direct, gta_forward_fused, init_weights
from gtalab.oracles import naive_attention, small_config

cfg = small_config("gta")
w = init_weights(cfg, seed=0, std=0.3)
x = np.random.default_rng(0).normal(size=(8, cfg.hidden_dim))

fused = gta_forward_fused(x, w, cfg)
direct, maps = gta_forward_direct(x, w, cfg)
print(f"{len(maps)} attention maps shared by {cfg.n_heads} heads")
print("max |fused - direct|:", np.abs(fused - direct).max())
print("max |fused - loops| :", np.abs(fused - naive_attention(x, w, cfg)).max())

for m in ("mha", "gqa", "mla", "gva", "gha"):
    c = small_config(m)
    wm = init_weights(c, seed=0, std=0.3)
    err = np.abs(forward(x, wm, c) - naive_attention(x, wm, c)).max()
    print(f"{m}: max |fast - loops| = {err:.1e}")
