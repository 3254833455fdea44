"""End-to-end runs: moments, TSM, Monte Carlo, comparison and artifacts on disk."""
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import Trajectory, integrate_extended, postprocess, run_tsm
from .errors import TSMError
from .montecarlo import mc_standard_error, run_mc
from .stochastic import estimate_moments
from .verification import fd_tangent_check, frozen_state_sampling_check

ENV_OUT = "TSMECH_OUT"
WARMUP_STEPS = 8
N_SNAPSHOTS = 5


class PhaseFailure(TSMError):
    """An error raised inside one pipeline phase; ``phase`` names it."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")


class _phase:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if exc is not None and not isinstance(exc, PhaseFailure) and isinstance(exc, Exception):
            raise PhaseFailure(self.name, exc) from exc
        return False


@dataclass
class RunResult:
    tsm: object = None
    mc: object = None
    timing: object = None
    moment_time: float = 0.0
    mc_time: float = 0.0
    workers: int = 1
    moments: object = None
    trajectory: object = None
    files: dict = field(default_factory=dict)

    @property
    def speedup(self):
        if self.timing is None or self.mc is None or self.timing.total <= 0:
            return None
        return self.mc_time / self.timing.total


def output_dir(config, override=None):
    """``override`` (command line) beats ``$TSMECH_OUT`` beats the config value."""
    return override or os.environ.get(ENV_OUT) or config.output


def warm_up(model, load, grid, moments):
    """Run every compiled kernel once on a few steps so timings exclude compilation."""
    k = min(WARMUP_STEPS, grid.n_steps) + 1
    times, strains = grid.times[:k], load.path(grid)[:k]
    init = model.initial_state()
    y0 = model.integrate_mean(init.y0, strains, times, grid.dt)
    tang = model.integrate_tangents(y0, init.tangents, strains, times, grid.dt)
    postprocess(Trajectory(times, strains, y0, list(tang)), moments, model)
    model.simulate(strains, times, grid.dt)


def run_pipeline(config, out=None, write=True, tangent_scale=None):
    """Execute the configured solvers and (optionally) write the artifacts.

    Errors are re-raised as :class:`PhaseFailure` naming the phase
    (``setup``, ``moments``, ``simulation``, ``postprocess``, ``monte_carlo``,
    ``output``) in which they occurred.
    """
    res = RunResult()
    with _phase("setup"):
        model = config.build_model()
        if tangent_scale is not None:
            model.tangent_scale = float(tangent_scale)
    if config.solver in ("tsm", "both"):
        with _phase("moments"):
            t0 = time.perf_counter()
            moments = estimate_moments(config.params, config.correlation,
                                       config.moment_samples, seed=config.seed)
            res.moment_time = time.perf_counter() - t0
            res.moments = moments
        with _phase("simulation"):
            warm_up(model, config.load, config.grid, moments)
            res.tsm, res.timing, res.trajectory = run_tsm(model, config.load, config.grid,
                                                          moments)
    if config.solver in ("mc", "both"):
        with _phase("monte_carlo"):
            res.workers = max(1, int(config.workers or os.cpu_count() or 1))
            # compile outside the timed region
            k = min(WARMUP_STEPS, config.grid.n_steps) + 1
            model.simulate(config.load.path(config.grid)[:k], config.grid.times[:k],
                           config.grid.dt)
            t0 = time.perf_counter()
            res.mc = run_mc(model, config.load, config.grid, config.params, config.correlation,
                            n=config.mc_n, base_seed=config.seed, workers=res.workers)
            res.mc_time = time.perf_counter() - t0
    if write:
        with _phase("output"):
            res.files = write_artifacts(config, res, output_dir(config, out))
    return res


def _fmt(x):
    return "%.17g" % x


def _rows(fh, times, blocks):
    # interleave per-quantity columns: q0 of every block, then q1, ...
    k = len(blocks)
    data = np.empty((len(times), 1 + k * blocks[0].shape[1]))
    data[:, 0] = times
    for b, arr in enumerate(blocks):
        data[:, 1 + b::k] = arr
    np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def write_series(path, stats, title, extra=()):
    """``t`` then ``<q>_mean,<q>_std`` per quantity; the manifest sits in ``#`` lines."""
    cols = ["t"] + [f"{q}_{s}" for q in stats.names for s in ("mean", "std")]
    std = stats.std
    with open(path, "w", newline="") as fh:
        fh.write(f"# {title}\n")
        for line in extra:
            fh.write(f"# {line}\n")
        fh.write(f"# columns: {','.join(cols)}\n")
        fh.write(",".join(cols) + "\n")
        _rows(fh, stats.times, [stats.mean, std])


def read_series(path):
    """Parse a file written by :func:`write_series`; returns ``(names, times, mean, std)``."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    names = tuple(h[:-5] for h in header[1::2])
    return names, data[:, 0], data[:, 1::2], data[:, 2::2]


def comparison(tsm, mc):
    """Per-step ``tsm - mc`` deltas of mean and std with the MC standard errors."""
    if tsm.names != mc.names:
        raise TSMError(f"quantity mismatch: {tsm.names} vs {mc.names}")
    se_mean, se_std = mc_standard_error(mc)
    return tsm.mean - mc.mean, tsm.std - mc.std, se_mean, se_std


def write_compare(path, tsm, mc):
    dm, ds, sem, ses = comparison(tsm, mc)
    cols = ["t"]
    for q in tsm.names:
        cols += [f"{q}_dmean", f"{q}_se_mean", f"{q}_dstd", f"{q}_se_std"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# tsm minus mc, with mc standard errors (n={mc.n}, seed={mc.seed})\n")
        fh.write(f"# columns: {','.join(cols)}\n")
        fh.write(",".join(cols) + "\n")
        _rows(fh, tsm.times, [dm, sem, ds, ses])


def timing_report(res, config):
    lines = []
    if res.timing is not None:
        t = res.timing
        lines += [f"mean_evaluation_s: {t.mean:.6f}",
                  f"tangent_evaluation_s: {t.tangent:.6f}",
                  f"iv_statistics_s: {t.iv_stats:.6f}",
                  f"stress_statistics_s: {t.stress_stats:.6f}",
                  f"tsm_total_s: {t.total:.6f}",
                  f"moment_estimation_s: {res.moment_time:.6f}",
                  f"moment_samples: {config.moment_samples}"]
    if res.mc is not None:
        lines += [f"mc_total_s: {res.mc_time:.6f}", f"mc_n: {res.mc.n}",
                  f"mc_workers: {res.workers}"]
    if res.speedup is not None:
        lines.append(f"speedup: {res.speedup:.2f}")
    return "\n".join(lines) + "\n"


def write_artifacts(config, res, out):
    os.makedirs(out, exist_ok=True)
    files = {}
    meta = [f"model: {config.model}", f"seed: {config.seed}",
            f"steps: {config.grid.n_steps}", f"dt: {_fmt(config.grid.dt)}"]
    if res.tsm is not None:
        files["tsm"] = os.path.join(out, "tsm.csv")
        write_series(files["tsm"], res.tsm, "tsm statistics (linear truncation)",
                     meta + [f"moment_samples: {config.moment_samples}"])
    if res.mc is not None:
        files["mc"] = os.path.join(out, "mc.csv")
        write_series(files["mc"], res.mc, "monte carlo statistics (unbiased variance)",
                     meta + [f"n: {res.mc.n}", f"rejected_draws: {res.mc.n_rejected}"])
    if res.tsm is not None and res.mc is not None:
        files["compare"] = os.path.join(out, "compare.csv")
        write_compare(files["compare"], res.tsm, res.mc)
    files["timing"] = os.path.join(out, "timing.txt")
    with open(files["timing"], "w") as fh:
        fh.write(timing_report(res, config))
    files["echo"] = os.path.join(out, "config.echo")
    with open(files["echo"], "w") as fh:
        fh.write(config.echo())
    return files


@dataclass
class VerifyReport:
    lines: list
    passed: bool
    degenerate: bool = False
    fd: list = field(default_factory=list)
    sampling: list = field(default_factory=list)

    @property
    def failing(self):
        return [ln for ln in self.lines if ln.startswith("FAIL")]

    def text(self):
        return "\n".join(self.lines + [f"overall: {'PASS' if self.passed else 'FAIL'}"]) + "\n"


def snapshot_steps(n_steps, k=N_SNAPSHOTS):
    """``k`` evenly spaced step indices including the first and the last."""
    return sorted(set(int(round(x)) for x in np.linspace(0, n_steps, k)))


def run_verify(config, tangent_scale=None, n_samples=None):
    """Finite-difference check per fluctuation source plus sampling checks at snapshots."""
    with _phase("setup"):
        model = config.build_model()
        if tangent_scale is not None:
            model.tangent_scale = float(tangent_scale)
    lines, fd, samp = [], [], []
    with _phase("fd_check"):
        traj = integrate_extended(model, config.load, config.grid)
        for s in range(len(model.source_kinds)):
            fd.append(fd_tangent_check(model, config.load, config.grid, source=s,
                                       seed=config.seed, trajectory=traj))
    for r in fd:
        lines.append(r.summary())
    degenerate = config.params.is_degenerate()
    if degenerate:
        lines.append("PASS sampling degenerate: zero fluctuations")
    else:
        with _phase("sampling_check"):
            n = config.verify_samples if n_samples is None else n_samples
            for step in snapshot_steps(config.grid.n_steps):
                rep = frozen_state_sampling_check(model, traj, step, config.params,
                                                  config.correlation, n=n,
                                                  seed=config.seed + step)
                samp.append(rep)
                lines.append(rep.summary())
    passed = all(r.passed for r in fd) and all(r.passed for r in samp)
    return VerifyReport(lines, passed, degenerate, fd, samp)
