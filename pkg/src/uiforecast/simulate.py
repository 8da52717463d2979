"""Synthetic AR/VAR processes and missing-at-random mask generation.

Mask generators take only the shape of the data, never its values, so the
masks they produce are independent of the series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_seed


@dataclass(frozen=True)
class ArSpec:
    """AR(2): ``y_t = a0 + a1 y_{t-1} + a2 y_{t-2} + e_t``."""

    alpha: tuple = (1.0, 0.33, 0.5)
    noise_var: float = 0.01
    length: int = 8760
    burn_in: int = 500

    @property
    def mean(self):
        a0, a1, a2 = self.alpha
        return a0 / (1 - a1 - a2)


@dataclass(frozen=True)
class VarSpec:
    """Bivariate VAR(2).

    Each coefficient vector is ``[constant, own/series-1 lag 1, lag 2,
    series-2 lag 1, lag 2]``: ``alpha1`` drives series 1 and ``alpha2`` series 2.
    """

    alpha1: tuple = (1.0, 0.88, -0.1, 0.15, -0.14)
    alpha2: tuple = (1.0, 0.69, -0.05, 0.07, -0.23)
    noise_var: float = 0.01
    length: int = 8760
    burn_in: int = 500

    def matrices(self):
        a, b = np.asarray(self.alpha1, float), np.asarray(self.alpha2, float)
        if a.shape != (5,) or b.shape != (5,):
            raise ValueError("VAR coefficient vectors must have length 5")
        const = np.array([a[0], b[0]])
        lag1 = np.array([[a[1], a[3]], [b[1], b[3]]])
        lag2 = np.array([[a[2], a[4]], [b[2], b[4]]])
        return const, lag1, lag2

    @property
    def mean(self):
        const, lag1, lag2 = self.matrices()
        return np.linalg.solve(np.eye(2) - lag1 - lag2, const)


@dataclass(frozen=True)
class MissingnessSpec:
    """Sporadic (independent per entry) or block missingness."""

    kind: str = "sporadic"
    rate: float = 0.0
    count: int = 600
    len_min: int = 5
    len_max: int = 30
    sites: tuple | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sporadic", "block", "none"):
            raise ValueError(f"unknown missingness kind {self.kind!r}")


def _check_stationary(lag_mats):
    k = lag_mats[0].shape[0]
    top = np.hstack(lag_mats)
    companion = np.vstack([top, np.hstack([np.eye(k), np.zeros((k, k))])])
    radius = np.max(np.abs(np.linalg.eigvals(companion)))
    if radius >= 1:
        raise ValueError(f"nonstationary coefficients (spectral radius {radius:.4f})")


def gen_ar(spec=ArSpec(), rng=None, start=None):
    """Simulate the AR(2) process, discarding ``spec.burn_in`` leading values.

    The recursion starts from ``start`` (default: the process mean).
    """
    rng = np.random.default_rng(rng)
    a0, a1, a2 = spec.alpha
    _check_stationary([np.array([[a1]]), np.array([[a2]])])
    total = spec.length + spec.burn_in
    e = rng.normal(0.0, np.sqrt(spec.noise_var), size=total)
    y = np.empty(total + 2)
    y[:2] = spec.mean if start is None else start
    for t in range(total):
        y[t + 2] = a0 + a1 * y[t + 1] + a2 * y[t] + e[t]
    return y[2 + spec.burn_in:]


def gen_var(spec=VarSpec(), rng=None, start=None):
    """Simulate the bivariate VAR(2); returns an array of shape ``(2, length)``."""
    rng = np.random.default_rng(rng)
    const, lag1, lag2 = spec.matrices()
    _check_stationary([lag1, lag2])
    total = spec.length + spec.burn_in
    e = rng.normal(0.0, np.sqrt(spec.noise_var), size=(total, 2))
    y = np.empty((total + 2, 2))
    y[:2] = spec.mean if start is None else start
    for t in range(total):
        y[t + 2] = const + lag1 @ y[t + 1] + lag2 @ y[t] + e[t]
    return y[2 + spec.burn_in:].T.copy()


def gen_bounded_sites(n_sites=1, length=8760, rng=None, factor_ar=(1.2, -0.25),
                      factor_sd=0.25, local_ar=0.8, local_sd=0.35, delay=2, level=-0.3,
                      burn_in=500):
    """Wind-power-like series in [0, 1] for a target site and nearby sites.

    A shared latent AR(2) "weather" factor reaches the auxiliary sites
    ``delay`` steps before site 0, so their recent values carry information
    about the target's future. Each site adds a local AR(1) disturbance and
    the latent level is squashed through a logistic curve. Returns
    ``(n_sites, length)``.
    """
    rng = np.random.default_rng(rng)
    total = length + burn_in + delay
    e = rng.normal(0.0, factor_sd, size=total)
    f = np.zeros(total + 2)
    for t in range(total):
        f[t + 2] = factor_ar[0] * f[t + 1] + factor_ar[1] * f[t] + e[t]
    f = f[2:]
    u = rng.normal(0.0, local_sd * np.sqrt(1 - local_ar**2), size=(n_sites, total))
    for t in range(1, total):
        u[:, t] += local_ar * u[:, t - 1]
    out = np.empty((n_sites, length))
    start = burn_in + delay
    for s in range(n_sites):
        shift = delay if s == 0 else 0
        latent = f[start - shift:start - shift + length] + u[s, start:start + length] + level
        out[s] = 1.0 / (1.0 + np.exp(-2.0 * latent))
    return out


def inject_sporadic(shape, rate, rng=None):
    """Boolean mask with each entry missing independently with probability ``rate``."""
    if not 0 <= rate <= 0.5:
        raise ValueError(f"sporadic missing rate must lie in [0, 0.5], got {rate}")
    rng = np.random.default_rng(rng)
    return rng.random(shape) < rate


def inject_blocks(length, count, len_min=5, len_max=30, rng=None):
    """Mask of ``count`` blocks with uniform starts and uniform integer lengths.

    Overlapping blocks merge; blocks running past the end are truncated.
    """
    if count < 0:
        raise ValueError(f"block count must be >= 0, got {count}")
    if len_min < 1 or len_min > len_max:
        raise ValueError(f"need 1 <= len_min <= len_max, got {len_min}, {len_max}")
    rng = np.random.default_rng(rng)
    starts = rng.integers(0, length, size=count)
    lengths = rng.integers(len_min, len_max + 1, size=count)
    delta = np.zeros(length + 1, dtype=np.int64)
    np.add.at(delta, starts, 1)
    np.add.at(delta, np.minimum(starts + lengths, length), -1)
    return np.cumsum(delta[:-1]) > 0


def block_intervals(mask):
    """``(start, stop)`` pairs of the runs of True in a 1-D mask."""
    padded = np.concatenate([[False], np.asarray(mask, bool), [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def make_mask(spec, shape, replicate=0):
    """Mask for data of ``shape`` (``(p, T)``), reproducible from ``(spec.seed, replicate)``.

    Only sites listed in ``spec.sites`` (default: all) receive missingness.
    """
    p, T = shape
    mask = np.zeros(shape, dtype=bool)
    sites = range(p) if spec.sites is None else spec.sites
    for s in sites:
        rng = np.random.default_rng(derive_seed(spec.seed, replicate, s))
        if spec.kind == "sporadic":
            mask[s] = inject_sporadic(T, spec.rate, rng)
        elif spec.kind == "block":
            mask[s] = inject_blocks(T, spec.count, spec.len_min, spec.len_max, rng)
    return mask


def chronological_split(n, train_fraction=0.8):
    """Index arrays of the earlier ``train_fraction`` of ``n`` rows and the rest."""
    cut = int(round(n * train_fraction))
    return np.arange(cut), np.arange(cut, n)
