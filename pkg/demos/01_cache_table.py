"""Per-token KV cache and attention FLOPs for every bundled preset."""

from gtalab.cli import cache_breakdown
from gtalab.cost import cost_ratio, decode_flops
from gtalab.presets import load_presets

presets = load_presets()

print(f"{'preset':<12} {'cache/layer':>11}  {'breakdown':<10} {'decode attn @2048':>18}")
for p in presets.values():
    floats = decode_flops(p.config, 1).cache_floats
    attn = decode_flops(p.config, 2048).attention_flops
    print(f"{p.name:<12} {floats:>11}  {cache_breakdown(p):<10} {attn:>18,}")

gta, gqa = presets["gta-1b"], presets["gqa-1b"]
print()
for kind in ("attention", "cache", "linear"):
    r = cost_ratio(gta, gqa, kind)
    print(f"gta-1b / gqa-1b {kind:<9} = {r} ({float(r):.3f})")
