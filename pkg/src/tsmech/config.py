"""Run configuration: YAML text in, validated :class:`RunConfig` out.

Example (damage model)::

    model: damage
    material:
      lambda: {mean: 12.0e+9, std: 1.8e+9}
      mu: {mean: 8.0e+9, std: 1.2e+9}
      eta: 10.0e+6
    load: {kind: proportional, direction: [1, 0, 0, 0, 0, 0], rate: 2.0e-4}
    grid: {t_end: 100, dt: 0.005}

Scalars may be plain numbers (no fluctuation) or ``{mean, std, distribution}``
mappings. Numbers may also be written as strings such as ``"10e6"``. When
``model`` is omitted it is inferred: a ``phases`` list selects the phase
model, a ``sigma_y`` entry the viscoplastic model, anything else damage.
"""
import copy
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .engine import TimeGrid
from .errors import ParseError, ValidationError
from .loadcases import KINDS, LoadCase, load_table_csv
from .loadcases import damage_harmonic, damage_proportional, phase_triangle, shear_cycle
from .stochastic import CorrelationSpec, FluctuatingScalar, StochasticParams

MODELS = ("damage", "phase", "viscoplastic")
SOLVERS = ("tsm", "mc", "both")
DEFAULTS = {"seed": 0, "mc_n": 1000, "moment_samples": 10**6, "solver": "both",
            "verify_samples": 10**6, "workers": None, "output": "tsm_out"}
PRESETS = {
    "damage_proportional": damage_proportional,
    "damage_harmonic": damage_harmonic,
    "phase_triangle": phase_triangle,
    "shear_cycle": shear_cycle,
}
_TOP_KEYS = {"model", "material", "correlation", "load", "grid", "solver", "mc_n",
             "moment_samples", "seed", "workers", "output", "verify_samples", "n_phases"}


@dataclass
class RunConfig:
    """Validated run description; ``resolved`` is the echo with defaults filled."""

    model: str
    material: dict
    params: StochasticParams
    correlation: CorrelationSpec
    load: LoadCase
    grid: TimeGrid
    solver: str = "both"
    mc_n: int = 1000
    moment_samples: int = 10**6
    seed: int = 0
    workers: int | None = None
    output: str = "tsm_out"
    verify_samples: int = 10**6
    resolved: dict = field(default_factory=dict)

    def build_model(self):
        from .models import build_model
        return build_model(self.model, self.material)

    def echo(self):
        return yaml.safe_dump(self.resolved, sort_keys=False)


class _Collector:
    def __init__(self):
        self.problems = []

    def add(self, msg):
        self.problems.append(msg)

    def num(self, value, key, positive=False, nonneg=False, integer=False):
        try:
            if isinstance(value, bool):
                raise TypeError
            x = float(value)
        except (TypeError, ValueError):
            self.add(f"{key}: expected a number, got {value!r}")
            return None
        if not np.isfinite(x):
            self.add(f"{key}: must be finite")
            return None
        if positive and not x > 0:
            self.add(f"{key}: must be positive, got {x:g}")
        if nonneg and x < 0:
            self.add(f"{key}: must be non-negative, got {x:g}")
        if integer:
            if x != int(x):
                self.add(f"{key}: must be an integer")
            return int(x)
        return x

    def vector(self, value, key, length=6):
        try:
            v = np.array([float(x) for x in value])
        except (TypeError, ValueError):
            self.add(f"{key}: expected a list of {length} numbers")
            return None
        if v.shape != (length,):
            self.add(f"{key}: expected {length} components, got {v.size}")
            return None
        return v


def _scalar(c, spec, key, positive_mean=True):
    """Parse a fluctuating scalar; returns ``(FluctuatingScalar, resolved)``."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"mean", "std", "distribution"}
        if unknown:
            c.add(f"{key}: unknown keys {sorted(unknown)}")
        if "mean" not in spec:
            c.add(f"{key}.mean: missing")
            return None, None
        mean = c.num(spec["mean"], f"{key}.mean", positive=positive_mean)
        std = c.num(spec.get("std", 0.0), f"{key}.std", nonneg=True)
        dist = spec.get("distribution", "normal")
    else:
        mean = c.num(spec, key, positive=positive_mean)
        std, dist = 0.0, "normal"
    if mean is None or std is None or std < 0:
        return None, None
    if dist != "normal":
        c.add(f"{key}.distribution: only 'normal' is supported, got {dist!r}")
    return FluctuatingScalar(mean, std, dist), {"mean": mean, "std": std, "distribution": dist}


def _require(c, mapping, key, prefix):
    if key not in mapping:
        c.add(f"{prefix}{key}: missing")
        return False
    return True


def _material_damage(c, mat):
    scalars, res = {}, {}
    for k in ("lambda", "mu"):
        if _require(c, mat, k, "material."):
            s, r = _scalar(c, mat[k], f"material.{k}")
            if s is not None:
                scalars[k], res[k] = s, r
    if _require(c, mat, "eta", "material."):
        res["eta"] = c.num(mat["eta"], "material.eta", positive=True)
    unknown = set(mat) - {"lambda", "mu", "eta"}
    if unknown:
        c.add(f"material: unknown keys {sorted(unknown)}")
    if len(scalars) < 2:
        return None, res
    return StochasticParams(scalars, elastic_sources=[("lambda", "mu")]), res


def _material_vp(c, mat):
    scalars, res = {}, {}
    for k in ("lambda", "mu", "sigma_y"):
        if _require(c, mat, k, "material."):
            s, r = _scalar(c, mat[k], f"material.{k}")
            if s is not None:
                scalars[k], res[k] = s, r
    if _require(c, mat, "eta", "material."):
        res["eta"] = c.num(mat["eta"], "material.eta", positive=True)
    unknown = set(mat) - {"lambda", "mu", "sigma_y", "eta"}
    if unknown:
        c.add(f"material: unknown keys {sorted(unknown)}")
    if len(scalars) < 3:
        return None, res
    return StochasticParams(scalars, elastic_sources=[("lambda", "mu")],
                            scalar_sources=["sigma_y"]), res


def _material_phase(c, mat):
    scalars, res, sources = {}, {}, []
    phases = mat.get("phases")
    if not isinstance(phases, list) or len(phases) < 2:
        c.add("material.phases: need a list of at least two phases")
        phases = []
    res_phases = []
    for i, ph in enumerate(phases):
        pre = f"material.phases[{i}]"
        if not isinstance(ph, dict):
            c.add(f"{pre}: expected a mapping")
            continue
        rp = {}
        names = (f"lambda_{i + 1}", f"mu_{i + 1}")
        for k, name in zip(("lambda", "mu"), names):
            if _require(c, ph, k, pre + "."):
                s, r = _scalar(c, ph[k], f"{pre}.{k}")
                if s is not None:
                    scalars[name], rp[k] = s, r
        sources.append(names)
        ts = ph.get("transformation_strain", [0.0] * 6)
        v = c.vector(ts, f"{pre}.transformation_strain")
        rp["transformation_strain"] = None if v is None else v.tolist()
        unknown = set(ph) - {"lambda", "mu", "transformation_strain"}
        if unknown:
            c.add(f"{pre}: unknown keys {sorted(unknown)}")
        res_phases.append(rp)
    res["phases"] = res_phases
    if _require(c, mat, "viscosity", "material."):
        res["viscosity"] = c.num(mat["viscosity"], "material.viscosity", positive=True)
    wall = mat.get("wall", "auto")
    res["wall"] = "auto" if wall == "auto" else c.num(wall, "material.wall", nonneg=True)
    frac = c.num(mat.get("initial_fraction", 0.99), "material.initial_fraction")
    if frac is not None and not 0.0 < frac < 1.0:
        c.add("material.initial_fraction: must lie strictly between 0 and 1")
    res["initial_fraction"] = frac
    unknown = set(mat) - {"phases", "viscosity", "wall", "initial_fraction"}
    if unknown:
        c.add(f"material: unknown keys {sorted(unknown)}")
    if len(scalars) != 2 * len(phases) or not phases:
        return None, res
    return StochasticParams(scalars, elastic_sources=sources), res


def _correlation(c, spec, n_scalars):
    if spec is None or spec == "independent":
        return CorrelationSpec(), "independent"
    if spec == "fully_dependent":
        return CorrelationSpec("fully_dependent"), "fully_dependent"
    if isinstance(spec, dict) and "matrix" in spec:
        try:
            m = np.array(spec["matrix"], dtype=float)
            cs = CorrelationSpec("matrix", m)
        except (ValueError, TypeError) as exc:
            c.add(f"correlation.matrix: {exc}")
            return None, None
        if n_scalars is not None and m.shape != (n_scalars, n_scalars):
            c.add(f"correlation.matrix: expected {n_scalars}x{n_scalars}, got {m.shape}")
            return None, None
        return cs, {"matrix": m.tolist()}
    c.add(f"correlation: expected independent, fully_dependent or {{matrix: ...}}, got {spec!r}")
    return None, None


def _load(c, spec, t_end, base_dir):
    if not isinstance(spec, dict):
        c.add("load: expected a mapping")
        return None, None
    spec = dict(spec)
    if "preset" in spec:
        name = spec.pop("preset")
        if name not in PRESETS:
            c.add(f"load.preset: unknown preset {name!r} (known: {sorted(PRESETS)})")
            return None, None
        kw = {k: c.num(v, f"load.{k}") for k, v in spec.items()}
        try:
            lc = PRESETS[name](**kw)
        except TypeError as exc:
            c.add(f"load: {exc}")
            return None, None
        lc.t_end = t_end if lc.t_end is None else lc.t_end
        return lc, _load_echo(lc)
    kind = spec.get("kind")
    if kind not in KINDS:
        c.add(f"load.kind: expected one of {list(KINDS)}, got {kind!r}")
        return None, None
    kw = {"t_end": t_end}
    if "direction" in spec:
        v = c.vector(spec["direction"], "load.direction")
        if v is None:
            return None, None
        kw["direction"] = v
    for k in ("amplitude", "rate", "frequency", "period"):
        if k in spec:
            kw[k] = c.num(spec[k], f"load.{k}")
    if "alternating" in spec:
        kw["alternating"] = bool(spec["alternating"])
    unknown = set(spec) - {"kind", "direction", "amplitude", "rate", "frequency", "period",
                           "alternating", "table", "table_file"}
    if unknown:
        c.add(f"load: unknown keys {sorted(unknown)}")
    if any(v is None for k, v in kw.items() if k != "t_end"):
        return None, None
    try:
        if kind == "table":
            if "table_file" in spec:
                path = os.path.join(base_dir or "", spec["table_file"])
                lc = load_table_csv(path, t_end=None)
            else:
                kw.pop("t_end")
                lc = LoadCase("table", table=spec.get("table"), **kw)
        else:
            lc = LoadCase(kind, **kw)
    except (ValueError, TypeError, OSError) as exc:
        c.add(f"load: {exc}")
        return None, None
    return lc, _load_echo(lc)


def _load_echo(lc):
    out = {"kind": lc.kind, "direction": lc.direction.tolist()}
    if lc.kind == "proportional":
        out["rate"] = lc.rate
    elif lc.kind == "harmonic":
        out.update(amplitude=lc.amplitude, frequency=lc.frequency)
    elif lc.kind == "triangular_cycle":
        out.update(amplitude=lc.amplitude, period=lc.period, alternating=lc.alternating)
    else:
        out["table"] = lc.table.tolist()
    return out


def infer_model(data):
    mat = data.get("material") or {}
    if data.get("n_phases") is not None or (isinstance(mat, dict) and "phases" in mat):
        return "phase"
    if isinstance(mat, dict) and "sigma_y" in mat:
        return "viscoplastic"
    return "damage"


def load_yaml(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line=line) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping")
    for k in data:
        if not isinstance(k, str):
            raise ParseError("keys must be strings", key=str(k))
    return data


def parse_config(text, base_dir=None, overrides=None):
    """Parse and validate configuration ``text``.

    ``overrides`` (e.g. from command-line flags) replace top-level keys
    before validation. Raises :class:`ParseError` for malformed text and
    :class:`ValidationError` listing every violated constraint.
    """
    data = load_yaml(text)
    data = copy.deepcopy(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    c = _Collector()
    unknown = set(data) - _TOP_KEYS
    if unknown:
        c.add(f"unknown top-level keys {sorted(unknown)}")

    model = data.get("model") or infer_model(data)
    if model not in MODELS:
        c.add(f"model: expected one of {list(MODELS)}, got {model!r}")
        raise ValidationError(c.problems)

    mat = data.get("material")
    if not isinstance(mat, dict):
        c.add("material: missing or not a mapping")
        mat = {}
    params, mres = {"damage": _material_damage, "phase": _material_phase,
                    "viscoplastic": _material_vp}[model](c, mat)
    if model == "phase" and data.get("n_phases") is not None:
        n = c.num(data["n_phases"], "n_phases", integer=True)
        if n is not None and n != len(mres.get("phases", [])):
            c.add(f"n_phases: {n} does not match {len(mres.get('phases', []))} listed phases")

    grid_spec = data.get("grid")
    grid = None
    if not isinstance(grid_spec, dict):
        c.add("grid: missing or not a mapping")
        grid_spec = {}
    t_end = c.num(grid_spec.get("t_end"), "grid.t_end", positive=True) \
        if "t_end" in grid_spec else c.add("grid.t_end: missing")
    dt = c.num(grid_spec.get("dt"), "grid.dt", positive=True) \
        if "dt" in grid_spec else c.add("grid.dt: missing")
    if t_end and dt and t_end > 0 and dt > 0:
        try:
            grid = TimeGrid(t_end, dt)
        except ValueError as exc:
            c.add(f"grid: {exc}")

    n_scalars = len(params.scalars) if params is not None else None
    corr, cres = _correlation(c, data.get("correlation"), n_scalars)

    load, lres = (None, None)
    if "load" not in data:
        c.add("load: missing")
    else:
        load, lres = _load(c, data["load"], t_end, base_dir)
        if load is not None and grid is not None:
            if load.kind == "table":
                if load.table[0, 0] > 0 or load.table[-1, 0] < grid.t_end * (1 - 1e-9):
                    c.add("load.table: must cover the whole time grid")
            elif load.t_end is not None and load.t_end < grid.t_end * (1 - 1e-9):
                c.add(f"grid.t_end: {grid.t_end:g} exceeds the load path end {load.t_end:g}")

    solver = data.get("solver", DEFAULTS["solver"])
    if solver not in SOLVERS:
        c.add(f"solver: expected one of {list(SOLVERS)}, got {solver!r}")
    ints = {}
    for key, kw in (("mc_n", {"positive": True}), ("moment_samples", {"positive": True}),
                    ("seed", {"nonneg": True}), ("verify_samples", {"positive": True})):
        ints[key] = c.num(data.get(key, DEFAULTS[key]), key, integer=True, **kw)
    if ints["verify_samples"] is not None and ints["verify_samples"] < 2:
        c.add("verify_samples: must be at least 2")
    workers = data.get("workers", DEFAULTS["workers"])
    if workers is not None:
        workers = c.num(workers, "workers", positive=True, integer=True)
    output = str(data.get("output", DEFAULTS["output"]))

    if c.problems:
        raise ValidationError(c.problems)
    if model == "phase":
        from .models import resolve_wall
        mres["wall_value"] = resolve_wall(mres)

    resolved = {"model": model, "material": mres, "correlation": cres, "load": lres,
                "grid": {"t_end": grid.t_end, "dt": grid.dt, "n_steps": grid.n_steps},
                "solver": solver, **ints, "workers": workers, "output": output}
    return RunConfig(model=model, material=mres, params=params, correlation=corr, load=load,
                     grid=grid, solver=solver, mc_n=ints["mc_n"],
                     moment_samples=ints["moment_samples"], seed=ints["seed"],
                     workers=workers, output=output, verify_samples=ints["verify_samples"],
                     resolved=resolved)


def read_config(path, overrides=None):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)),
                        overrides=overrides)
