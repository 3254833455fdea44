"""Random material parameters, realizations and precomputed moment sets.

Fluctuations are collected into one flat vector ``phi`` ordered by source:
each fluctuating stiffness contributes its 36 Voigt entries ``D = E - E0``
and each fluctuating scalar (e.g. the yield limit) one entry. A
:class:`MomentSet` stores the dense second moment ``<phi phi^T>``; the named
tensors ``<D x D>``, ``<sy D>`` and ``<sy^2>`` are views of its blocks.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import RetryExhausted, ShapeMismatch, UnsupportedDistribution
from .voigt import J_LAMBDA, J_MU, isotropic_stiffness

MAX_RETRIES = 1000
_CHUNK = 1 << 16
_SOURCE_SIZE = {"elastic": 36, "scalar": 1}


@dataclass(frozen=True)
class FluctuatingScalar:
    mean: float
    std: float = 0.0
    distribution: str = "normal"

    def __post_init__(self):
        if not self.std >= 0.0:
            raise ValueError(f"std must be non-negative, got {self.std}")


@dataclass(frozen=True)
class CorrelationSpec:
    """How the scalar fluctuations are coupled.

    ``independent`` uses one standard normal per scalar, ``fully_dependent``
    a single shared one, ``matrix`` an explicit correlation matrix ordered
    like :attr:`StochasticParams.names`.
    """

    mode: str = "independent"
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("independent", "fully_dependent", "matrix"):
            raise ValueError(f"unknown correlation mode {self.mode!r}")
        if self.mode == "matrix":
            if self.matrix is None:
                raise ValueError("correlation mode 'matrix' needs a matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("correlation matrix must be square")
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError("correlation matrix must be symmetric")
            if not np.allclose(np.diag(m), 1.0, atol=1e-12):
                raise ValueError("correlation matrix must have unit diagonal")
            if np.linalg.eigvalsh(m).min() < -1e-10:
                raise ValueError("correlation matrix is not positive semidefinite")
            object.__setattr__(self, "matrix", m)

    def correlation_matrix(self, n):
        if self.mode == "independent":
            return np.eye(n)
        if self.mode == "fully_dependent":
            return np.ones((n, n))
        if self.matrix.shape != (n, n):
            raise ShapeMismatch(
                f"correlation matrix is {self.matrix.shape}, expected ({n}, {n})")
        return self.matrix

    def factor(self, n):
        """Matrix ``L`` with ``L @ L.T`` equal to the correlation matrix."""
        if self.mode == "independent":
            return np.eye(n)
        if self.mode == "fully_dependent":
            return np.ones((n, 1))
        w, v = np.linalg.eigh(self.correlation_matrix(n))
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class StochasticParams:
    """Fluctuating scalars and how they assemble into fluctuation sources.

    Parameters
    ----------
    scalars : dict
        Name -> :class:`FluctuatingScalar`; insertion order fixes the
        ordering used by correlation matrices.
    elastic_sources : sequence of (str, str)
        ``(lambda_name, mu_name)`` per fluctuating stiffness tensor.
    scalar_sources : sequence of str
        Scalars that enter the model directly (e.g. the yield limit).
    """

    scalars: dict
    elastic_sources: tuple = ()
    scalar_sources: tuple = ()

    def __post_init__(self):
        self.scalars = dict(self.scalars)
        self.elastic_sources = tuple(tuple(s) for s in self.elastic_sources)
        self.scalar_sources = tuple(self.scalar_sources)
        used = [n for pair in self.elastic_sources for n in pair] + list(self.scalar_sources)
        missing = [n for n in used if n not in self.scalars]
        if missing:
            raise KeyError(f"sources reference unknown scalars: {missing}")

    @property
    def names(self):
        return list(self.scalars)

    @property
    def means(self):
        return np.array([s.mean for s in self.scalars.values()])

    @property
    def stds(self):
        return np.array([s.std for s in self.scalars.values()])

    @property
    def source_kinds(self):
        return ("elastic",) * len(self.elastic_sources) + ("scalar",) * len(self.scalar_sources)

    @property
    def n_fluctuations(self):
        return 36 * len(self.elastic_sources) + len(self.scalar_sources)

    def mean_stiffness(self, k=0):
        lam, mu = self.elastic_sources[k]
        return isotropic_stiffness(self.scalars[lam].mean, self.scalars[mu].mean)

    def is_degenerate(self):
        return not np.any(self.stds > 0.0)

    def admissible(self, values):
        """Row mask of physically admissible realizations.

        Stiffnesses must be positive definite (``mu > 0``, bulk modulus
        ``lambda + 2 mu / 3 > 0``) and directly fluctuating scalars positive.
        """
        values = np.atleast_2d(values)
        idx = {n: i for i, n in enumerate(self.names)}
        ok = np.ones(values.shape[0], dtype=bool)
        for lam, mu in self.elastic_sources:
            l, m = values[:, idx[lam]], values[:, idx[mu]]
            ok &= (m > 0.0) & (l + 2.0 * m / 3.0 > 0.0)
        for name in self.scalar_sources:
            ok &= values[:, idx[name]] > 0.0
        return ok

    def fluctuations(self, values):
        """Flat fluctuation vectors ``phi`` for realizations ``values`` (n, p)."""
        values = np.atleast_2d(values)
        idx = {n: i for i, n in enumerate(self.names)}
        parts = []
        for k, (lam, mu) in enumerate(self.elastic_sources):
            E0 = self.mean_stiffness(k).ravel()
            l, m = values[:, idx[lam], None], values[:, idx[mu], None]
            parts.append(l * J_LAMBDA.ravel() + m * J_MU.ravel() - E0)
        for name in self.scalar_sources:
            parts.append(values[:, idx[name], None] - self.scalars[name].mean)
        return np.concatenate(parts, axis=1)


@dataclass
class ParamRealization:
    """One draw of every fluctuating scalar, keyed by name."""

    values: dict
    rejected: int = 0

    def __getitem__(self, name):
        return self.values[name]

    def stiffness(self, lam_name="lambda", mu_name="mu"):
        return isotropic_stiffness(self.values[lam_name], self.values[mu_name])


def _check_normal(params):
    for name, s in params.scalars.items():
        if s.distribution != "normal":
            raise UnsupportedDistribution(
                f"{name}: distribution {s.distribution!r} is not supported")


def realization_rng(base_seed, index):
    """Independent generator for realization ``index`` of a run seeded ``base_seed``."""
    return np.random.default_rng([int(base_seed), int(index)])


def sample_values(params, correlation, n, rng):
    """Draw ``n`` admissible realizations as an ``(n, p)`` array.

    Returns the array and the number of rejected draws. Inadmissible rows are
    redrawn from the same stream; a row that fails ``MAX_RETRIES`` times in a
    row raises :class:`RetryExhausted`.
    """
    _check_normal(params)
    p = len(params.scalars)
    L = correlation.factor(p)
    means, stds = params.means, params.stds

    def draw(m):
        z = rng.standard_normal((m, L.shape[1])) @ L.T
        return means + stds * z

    values = draw(n)
    bad = np.flatnonzero(~params.admissible(values))
    rejected = bad.size
    tries = 0
    while bad.size:
        tries += 1
        if tries >= MAX_RETRIES:
            raise RetryExhausted(
                f"{bad.size} realization(s) still inadmissible after {MAX_RETRIES} draws")
        values[bad] = draw(bad.size)
        bad = bad[~params.admissible(values[bad])]
        rejected += bad.size
    return values, rejected


def sample_realization(params, correlation, rng):
    """Draw a single admissible :class:`ParamRealization`."""
    values, rejected = sample_values(params, correlation, 1, rng)
    return ParamRealization(dict(zip(params.names, values[0].tolist())), rejected)


@dataclass
class MomentSet:
    """Second moments of the fluctuation vector.

    ``cov[a, b] = <phi_a phi_b>`` where ``phi`` is laid out per
    :attr:`source_kinds`. ``mean`` is the empirical mean of ``phi`` when the
    set was estimated by sampling (zero for analytic sets).
    """

    cov: np.ndarray
    source_kinds: tuple
    n_samples: int = 0
    mean: np.ndarray | None = None
    n_rejected: int = 0
    _factor: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.source_kinds = tuple(self.source_kinds)
        size = sum(_SOURCE_SIZE[k] for k in self.source_kinds)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.cov.shape != (size, size):
            raise ShapeMismatch(f"cov has shape {self.cov.shape}, expected ({size}, {size})")

    @property
    def offsets(self):
        out, pos = [], 0
        for k in self.source_kinds:
            out.append(pos)
            pos += _SOURCE_SIZE[k]
        return out

    def _slice(self, k):
        o = self.offsets[k]
        return slice(o, o + _SOURCE_SIZE[self.source_kinds[k]])

    def block(self, k, l):
        return self.cov[self._slice(k), self._slice(l)]

    def dd(self, k=0, l=None):
        """``<D_k x D_l>`` as a (6, 6, 6, 6) tensor."""
        l = k if l is None else l
        if self.source_kinds[k] != "elastic" or self.source_kinds[l] != "elastic":
            raise ShapeMismatch("dd needs two elastic sources")
        return self.block(k, l).reshape(6, 6, 6, 6)

    @property
    def yy(self):
        """``<sy^2>`` of the first scalar source."""
        k = self.source_kinds.index("scalar")
        return float(self.block(k, k)[0, 0])

    @property
    def yd(self):
        """``<sy D>`` between the first scalar and first elastic source, (6, 6)."""
        ks = self.source_kinds.index("scalar")
        ke = self.source_kinds.index("elastic")
        return self.block(ke, ks)[:, 0].reshape(6, 6)

    def factor(self, rtol=1e-13):
        """Tall matrix ``F`` with ``F @ F.T == cov`` up to dropped directions.

        Eigen-directions with eigenvalue below ``rtol`` times the largest are
        dropped; isotropic fluctuations give a rank of at most two per
        stiffness, which makes quadratic forms over many steps cheap.
        """
        if self._factor is None:
            sym = 0.5 * (self.cov + self.cov.T)
            w, v = np.linalg.eigh(sym)
            top = w.max() if w.size else 0.0
            keep = w > rtol * top if top > 0 else np.zeros_like(w, dtype=bool)
            self._factor = v[:, keep] * np.sqrt(w[keep])
        return self._factor

    def check_layout(self, source_kinds):
        if tuple(source_kinds) != self.source_kinds:
            raise ShapeMismatch(
                f"moment set has sources {self.source_kinds}, model expects {tuple(source_kinds)}")

    def to_csv(self, path):
        """Write a flat ``tensor,i,j,k,l,value`` listing."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# n_samples={self.n_samples}\n")
            fh.write(f"# source_kinds={','.join(self.source_kinds)}\n")
            w = csv.writer(fh)
            w.writerow(["tensor", "i", "j", "k", "l", "value"])
            nsrc = len(self.source_kinds)
            for a in range(nsrc):
                for b in range(a, nsrc):
                    blk = self.block(a, b)
                    ka, kb = self.source_kinds[a], self.source_kinds[b]
                    if ka == kb == "elastic":
                        name = f"dd:{a}:{b}"
                        for (i, j, k, l), v in np.ndenumerate(blk.reshape(6, 6, 6, 6)):
                            w.writerow([name, i, j, k, l, repr(float(v))])
                    elif ka == kb == "scalar":
                        w.writerow([f"yy:{a}:{b}", "", "", "", "", repr(float(blk[0, 0]))])
                    else:
                        e, s = (a, b) if ka == "elastic" else (b, a)
                        vec = blk[:, 0] if ka == "elastic" else blk[0, :]
                        for (i, j), v in np.ndenumerate(vec.reshape(6, 6)):
                            w.writerow([f"yd:{e}:{s}", i, j, "", "", repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    meta[key.strip()] = val.strip()
                else:
                    rows.append(line)
        kinds = tuple(meta["source_kinds"].split(","))
        ms = cls(np.zeros((sum(_SOURCE_SIZE[k] for k in kinds),) * 2), kinds,
                 n_samples=int(meta.get("n_samples", 0)))
        off = ms.offsets
        for rec in csv.DictReader(rows):
            tag, a, b = rec["tensor"].split(":")
            a, b = int(a), int(b)
            v = float(rec["value"])
            if tag == "dd":
                i, j, k, l = (int(rec[c]) for c in "ijkl")
                r, c = off[a] + 6 * i + j, off[b] + 6 * k + l
            elif tag == "yy":
                r, c = off[a], off[b]
            else:
                i, j = int(rec["i"]), int(rec["j"])
                r, c = off[a] + 6 * i + j, off[b]
            ms.cov[r, c] = v
            ms.cov[c, r] = v
        return ms


def estimate_moments(params, correlation, n_samples, seed=0):
    """Estimate the moment set by sampling ``n_samples`` realizations.

    Sampling is sharded into fixed-size chunks, each with its own stream
    spawned from ``seed``, so the result does not depend on how chunks are
    scheduled. Accumulation is an exact sum of per-chunk outer products.
    """
    _check_normal(params)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    P = params.n_fluctuations
    n_chunks = -(-n_samples // _CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    second = np.zeros((P, P))
    first = np.zeros(P)
    rejected = 0
    for c, ss in enumerate(streams):
        m = min(_CHUNK, n_samples - c * _CHUNK)
        values, rej = sample_values(params, correlation, m, np.random.default_rng(ss))
        rejected += rej
        phi = params.fluctuations(values)
        second += phi.T @ phi
        first += phi.sum(axis=0)
    second /= n_samples
    return MomentSet(0.5 * (second + second.T), params.source_kinds, n_samples=n_samples,
                     mean=first / n_samples, n_rejected=rejected)


def analytic_gaussian_moments(params, correlation):
    """Closed-form moment set for jointly normal scalars.

    ``phi`` is linear in the scalar fluctuations, ``phi = A @ dx``, so
    ``<phi phi^T> = A Cov(dx) A^T``.
    """
    _check_normal(params)
    names = params.names
    p = len(names)
    idx = {n: i for i, n in enumerate(names)}
    A = np.zeros((params.n_fluctuations, p))
    row = 0
    for lam, mu in params.elastic_sources:
        A[row:row + 36, idx[lam]] = J_LAMBDA.ravel()
        A[row:row + 36, idx[mu]] = J_MU.ravel()
        row += 36
    for name in params.scalar_sources:
        A[row, idx[name]] = 1.0
        row += 1
    s = params.stds
    cov_x = s[:, None] * correlation.correlation_matrix(p) * s[None, :]
    return MomentSet(A @ cov_x @ A.T, params.source_kinds, n_samples=0,
                     mean=np.zeros(params.n_fluctuations))
