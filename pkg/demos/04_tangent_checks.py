"""The two verification oracles, and what a corrupted tangent looks like to them."""
from tsmech import read_config, run_verify

cfg = read_config("configs/vp_dependent_eta20.yaml")
print(run_verify(cfg, n_samples=10**5).text())

# A 1 % error in every tangent rate is visible to the finite-difference check.
cfg = read_config("configs/damage_proportional.yaml")
rep = run_verify(cfg, tangent_scale=1.01, n_samples=10**5)
print("\n".join(rep.lines[:1]))
