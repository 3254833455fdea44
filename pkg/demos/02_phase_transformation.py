"""Two-phase transformation under a tension ramp and unloading.

The order parameter ``chi`` drives the volume fractions through a softmax,
so fractions stay positive and sum to one in every realization. The
extended run also reports how uncertain the fractions are.
"""
import numpy as np

from tsmech import read_config, run_pipeline
from tsmech.models.phase import wall_fraction

cfg = read_config("configs/phase_eta2.yaml", overrides={"mc_n": 100, "workers": 1})
res = run_pipeline(cfg, write=False)
model = cfg.build_model()

l1, l2 = res.tsm.index("lambda_1"), res.tsm.index("lambda_2")
print("calibrated wall parameter:", cfg.material["wall_value"])
print("max |lambda_1 + lambda_2 - 1| (tsm):",
      np.abs(res.tsm.mean[:, l1] + res.tsm.mean[:, l2] - 1).max())
print("wall energy share along the mean path:",
      f"{wall_fraction(model, res.trajectory.strains).max():.2e}")

for k in np.linspace(0, len(res.tsm.times) - 1, 9).astype(int):
    print(f"t={res.tsm.times[k]:5.1f}  lambda_1 {res.tsm.mean[k, l1]:.4f} "
          f"+/- {res.tsm.std[k, l1]:.4f}   (mc {res.mc.mean[k, l1]:.4f} +/- {res.mc.std[k, l1]:.4f})")
