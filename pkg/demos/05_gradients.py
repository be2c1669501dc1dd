"""Analytic GTA gradients checked against central differences."""

from gtalab.oracles import check_gta_gradients, small_config

for act in ("sigmoid", "silu", "relu_squared"):
    cfg = small_config("gta", gate_activation=act)
    errs = check_gta_gradients(cfg, seed=0, n=3)
    worst = max(rel for _, rel in errs.values())
    print(f"{act:<13} worst relative error {worst:.1e} over {', '.join(errs)}")
