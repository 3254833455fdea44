"""Yield limit correlated with stiffness, or not.

Under a shear cycle the stress std of the fully dependent case nearly
vanishes twice per cycle; with independent parameters it never does.
"""
import numpy as np

from tsmech import read_config, run_pipeline

for case in ("dependent", "independent"):
    cfg = read_config(f"configs/vp_{case}_eta80.yaml", overrides={"mc_n": 200, "workers": 1})
    res = run_pipeline(cfg, write=False)
    i = res.tsm.index("sig_xy")
    s = res.tsm.std[:, i]
    late = len(s) // 5
    print(f"{case:>12}: peak std {s.max() / 1e6:7.2f} MPa, smallest after yield "
          f"{s[late:].min() / 1e6:7.3f} MPa (ratio {s[late:].min() / s.max():.3f}); "
          f"mc ratio {res.mc.std[late:, i].min() / res.mc.std[:, i].max():.3f}")
