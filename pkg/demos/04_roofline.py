"""Roofline latency of the 1B presets on the bundled accelerators."""

from gtalab.cost import Phase
from gtalab.presets import load_presets
from gtalab.roofline import estimate, load_profiles

presets = load_presets()
gta, gqa = presets["gta-1b"], presets["gqa-1b"]

for hw in load_profiles():
    print(hw.name)
    for n in (128, 512, 2048, 8192):
        a = estimate(gta, hw, n, phase=Phase.DECODE)
        b = estimate(gqa, hw, n, phase=Phase.DECODE)
        print(f"  decode N={n:<5} gta {a.total * 1e3:7.3f} ms  gqa {b.total * 1e3:7.3f} ms  ({a.bound.value}-bound)")
    a = estimate(gta, hw, 2048, batch=16, phase=Phase.DECODE, offload=True)
    b = estimate(gqa, hw, 2048, batch=16, phase=Phase.DECODE, offload=True)
    print(f"  offloaded cache, batch 16, N=2048: gta {a.total * 1e3:.2f} ms vs gqa {b.total * 1e3:.2f} ms")
