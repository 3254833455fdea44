"""Extended material models and a builder from resolved configuration."""
import numpy as np

from ..voigt import isotropic_stiffness
from .damage import DamageModel
from .phase import PhaseModel, calibrate_wall, default_initial_chi
from .viscoplastic import ViscoplasticModel

__all__ = ["DamageModel", "PhaseModel", "ViscoplasticModel", "build_model", "resolve_wall"]


def _mean(entry):
    return entry["mean"] if isinstance(entry, dict) else float(entry)


def resolve_wall(material):
    """Wall magnitude for a phase material; ``auto`` calibrates it to the initial fraction."""
    if material.get("wall", "auto") != "auto":
        return float(material["wall"])
    E = [isotropic_stiffness(_mean(p["lambda"]), _mean(p["mu"])) for p in material["phases"]]
    etas = [p["transformation_strain"] for p in material["phases"]]
    chi = default_initial_chi(len(E), material.get("initial_fraction", 0.99))
    return calibrate_wall(E, etas, chi)


def build_model(kind, material):
    """Mean model of ``kind`` from a resolved ``material`` mapping (means are used)."""
    if kind == "damage":
        return DamageModel.from_lame(_mean(material["lambda"]), _mean(material["mu"]),
                                     material["eta"])
    if kind == "viscoplastic":
        return ViscoplasticModel.from_lame(_mean(material["lambda"]), _mean(material["mu"]),
                                           _mean(material["sigma_y"]), material["eta"])
    if kind == "phase":
        phases = material["phases"]
        E = [isotropic_stiffness(_mean(p["lambda"]), _mean(p["mu"])) for p in phases]
        etas = np.array([p["transformation_strain"] for p in phases], dtype=float)
        chi = default_initial_chi(len(E), material.get("initial_fraction", 0.99))
        wall = material["wall_value"] if "wall_value" in material else resolve_wall(material)
        return PhaseModel(E, etas, material["viscosity"], wall, chi)
    raise ValueError(f"unknown model {kind!r}")
