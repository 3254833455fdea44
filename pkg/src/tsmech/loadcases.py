"""Prescribed strain paths."""
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain

KINDS = ("proportional", "harmonic", "triangular_cycle", "table")


@dataclass
class LoadCase:
    """A strain-controlled load path ``eps(t) = f(t) * direction``.

    kind
        ``proportional``: ``f = rate * t``.
        ``harmonic``: ``f = amplitude * sin(2 pi frequency t)``.
        ``triangular_cycle``: piecewise linear with peak ``amplitude`` at a
        quarter (``alternating``) or half (one-sided) of ``period``. The
        alternating form goes 0 -> +A -> -A -> 0, the one-sided form 0 -> A -> 0.
        ``table``: linear interpolation of ``table`` rows ``(t, eps_1..eps_k)``.
    """

    kind: str
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0, 0, 0]))
    amplitude: float = 0.0
    rate: float = 0.0
    frequency: float = 0.0
    period: float = 1.0
    alternating: bool = False
    table: np.ndarray | None = None
    t_end: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown load kind {self.kind!r}")
        self.direction = np.asarray(self.direction, dtype=float)
        if self.direction.shape != (6,):
            raise ValueError("direction must have 6 components")
        if self.kind == "table":
            tab = np.atleast_2d(np.asarray(self.table, dtype=float))
            if tab.shape[1] < 2 or tab.shape[1] > 7:
                raise ValueError("table needs 2 to 7 columns (t, eps_1..)")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("table times must be strictly increasing")
            full = np.zeros((tab.shape[0], 7))
            full[:, :tab.shape[1]] = tab
            self.table = full
        if self.kind == "triangular_cycle" and not self.period > 0:
            raise ValueError("period must be positive")

    def _profile(self, t):
        if self.kind == "proportional":
            return self.rate * t
        if self.kind == "harmonic":
            return self.amplitude * np.sin(2.0 * np.pi * self.frequency * t)
        # triangular_cycle
        A, T = self.amplitude, self.period
        s = np.mod(t, T) / T
        if self.alternating:
            return A * np.where(s < 0.25, 4 * s, np.where(s < 0.75, 2 - 4 * s, 4 * s - 4))
        return A * np.where(s < 0.5, 2 * s, 2 - 2 * s)

    def _check(self, t):
        lo = self.table[0, 0] if self.kind == "table" else 0.0
        hi = self.table[-1, 0] if self.kind == "table" else self.t_end
        tol = 1e-12 * max(1.0, abs(hi) if hi is not None else 1.0)
        if np.any(t < lo - tol) or (hi is not None and np.any(t > hi + tol)):
            raise OutOfDomain(f"time outside [{lo}, {hi}]")

    def strain_at(self, t):
        """Strain vector(s) at time(s) ``t``; shape ``(6,)`` or ``(n, 6)``."""
        t = np.asarray(t, dtype=float)
        self._check(t)
        if self.kind == "table":
            tab = self.table
            tt = np.clip(t, tab[0, 0], tab[-1, 0])
            cols = [np.interp(tt, tab[:, 0], tab[:, 1 + c]) for c in range(6)]
            return np.stack(cols, axis=-1)
        return np.multiply.outer(self._profile(t), self.direction)

    def path(self, grid):
        """Strain at every grid time, ``(n_steps + 1, 6)``."""
        return self.strain_at(grid.times)


def strain_at(load, t):
    return load.strain_at(t)


def load_table_csv(path, **kwargs):
    """Build a ``table`` load case from a CSV of ``t, eps_1, ..., eps_k`` rows.

    Lines starting with ``#`` and a non-numeric header line are skipped.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                if rows:
                    raise
    return LoadCase("table", table=np.array(rows), **kwargs)


def damage_proportional(rate=2.0e-4):
    """Uniaxial-strain ramp in x (damage load case 1)."""
    return LoadCase("proportional", direction=np.array([1.0, 0, 0, 0, 0, 0]), rate=rate)


def damage_harmonic(amplitude=6.5e-3, frequency=0.02):
    """Same-phase harmonic strain in all six components (damage load case 2)."""
    return LoadCase("harmonic", direction=np.ones(6), amplitude=amplitude, frequency=frequency)


def phase_triangle(rate=4.0e-3, t_half=20.0):
    """Tension to ``rate * t_half`` in x and back to zero."""
    return LoadCase("triangular_cycle", direction=np.array([1.0, 0, 0, 0, 0, 0]),
                    amplitude=rate * t_half, period=2.0 * t_half, alternating=False,
                    t_end=2.0 * t_half)


def shear_cycle(amplitude=0.02, period=100.0):
    """One alternating engineering xy-shear cycle."""
    return LoadCase("triangular_cycle", direction=np.array([0, 0, 0, 0, 0, 1.0]),
                    amplitude=amplitude, period=period, alternating=True, t_end=period)
