"""Wall-clock micro-benchmarks for prefill and decode (informational only)."""

from __future__ import annotations

import statistics
import time
from typing import Callable, Iterable

import numpy as np

from .attention import forward, gta_forward_direct
from .config import AttentionConfig, Mechanism
from .kvcache import decode_step, prefill
from .weights import init_weights

BENCH_HEADER = ("mechanism", "path", "phase", "N", "median_s")


def bench_config(mechanism, max_seq_len: int = 8192) -> AttentionConfig:
    base = dict(hidden_dim=256, n_heads=8, head_dim=32, max_seq_len=max_seq_len)
    per = {
        Mechanism.MHA: {},
        Mechanism.GQA: dict(n_k=2),
        Mechanism.MLA: dict(mla_d_c=64, mla_d_rope=16),
        Mechanism.GVA: dict(n_q=2, n_k=2),
        Mechanism.GHA: dict(n_q=2, n_k=1, n_c=2),
        Mechanism.GTA: dict(n_q=2, n_k=1, n_c=1, latent_dim=64),
    }
    m = Mechanism(mechanism)
    return AttentionConfig(mechanism=m, **base, **per[m])


def _median_time(fn: Callable[[], object], repeats: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_bench(mechanisms: Iterable, n_values: Iterable[int], repeats: int = 5, warmup: int = 1, seed: int = 0) -> list[dict]:
    rows = []
    for mech in mechanisms:
        n_list = list(n_values)
        cfg = bench_config(mech, max_seq_len=max(n_list) + repeats + warmup + 1)
        w = init_weights(cfg, seed)
        rng = np.random.default_rng(seed)
        for n in n_list:
            x = rng.normal(size=(n, cfg.hidden_dim))
            paths = ["fused", "direct"] if cfg.mechanism is Mechanism.GTA else ["default"]
            for path in paths:
                if path == "direct":
                    fn = lambda: gta_forward_direct(x, w, cfg)  # noqa: E731
                else:
                    fn = lambda: forward(x, w, cfg)  # noqa: E731
                rows.append(dict(mechanism=cfg.mechanism.value, path=path, phase="prefill", N=n,
                                 median_s=_median_time(fn, repeats, warmup)))
            _, cache = prefill(x, w, cfg)
            x_t = rng.normal(size=(1, cfg.hidden_dim))

            def step():
                decode_step(x_t, cache, w, cfg)
                cache.length -= 1  # rewind so every step sees context n

            rows.append(dict(mechanism=cfg.mechanism.value, path="fused" if cfg.mechanism is Mechanism.GTA else "default",
                             phase="decode", N=n, median_s=_median_time(step, repeats, warmup)))
    return rows
