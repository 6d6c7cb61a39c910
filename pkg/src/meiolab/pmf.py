"""Exact calculus on discrete probability mass functions.

Demand per period, shipment lead times, and lead-time demand are all
represented as :class:`Pmf` objects: a non-negative integer support
offset plus a dense vector of probabilities for consecutive integers.
All operations (convolution, compounding over a random horizon,
thinning, quantiles, expected shortfall) are exact up to a tail-pruning
tolerance, so the benchmark heuristic can work with arbitrary empirical
distributions rather than named families.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy import signal, stats

# Trailing support whose cumulative mass is below this is dropped after
# convolutions; keeps support growth bounded with negligible bias.
TAIL_PRUNE = 1e-12

# Below this combined support length direct summation beats FFT.
FFT_THRESHOLD = 256


class InvalidParameterError(ValueError):
    """Raised when a distribution is constructed from bad parameters."""


class Pmf:
    """Probability mass function over consecutive non-negative integers.

    ``probs[k]`` is the probability of the value ``offset + k``.  Values
    are immutable after construction; instances are safe to share across
    workers.  Moments are computed once and cached.
    """

    __slots__ = ("offset", "probs", "mean", "variance", "_cdf")

    def __init__(self, offset: int, probs) -> None:
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidParameterError("probs must be a non-empty 1-d sequence")
        if np.any(probs < -1e-12) or not np.all(np.isfinite(probs)):
            raise InvalidParameterError("probabilities must be finite and non-negative")
        probs = np.clip(probs, 0.0, None)
        nz = np.nonzero(probs)[0]
        if nz.size == 0:
            raise InvalidParameterError("all probabilities are zero")
        lo, hi = nz[0], nz[-1]
        probs = probs[lo : hi + 1]
        offset = int(offset) + int(lo)
        if offset < 0:
            raise InvalidParameterError("support must be non-negative")
        total = probs.sum()
        self.probs = probs / total
        self.offset = offset
        ks = self.support
        self.mean = float(ks @ self.probs)
        self.variance = float(((ks - self.mean) ** 2) @ self.probs)
        self._cdf = np.cumsum(self.probs)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probs.size)

    @property
    def max_value(self) -> int:
        return self.offset + self.probs.size - 1

    def pmf(self, k: int) -> float:
        i = int(k) - self.offset
        if 0 <= i < self.probs.size:
            return float(self.probs[i])
        return 0.0

    def cdf(self, k: int) -> float:
        i = int(k) - self.offset
        if i < 0:
            return 0.0
        if i >= self.probs.size:
            return 1.0
        return float(self._cdf[i])

    def quantile(self, r: float) -> int:
        """Smallest integer ``s`` with ``CDF(s) >= r``."""
        if not 0.0 < r < 1.0:
            raise InvalidParameterError(f"quantile level must be in (0, 1), got {r}")
        i = int(np.searchsorted(self._cdf, r, side="left"))
        i = min(i, self.probs.size - 1)
        return self.offset + i

    def expected_shortfall(self, s: int) -> float:
        """E[(X - s)^+], the expected backorder quantity at level ``s``."""
        ks = self.support
        return float(np.maximum(ks - s, 0) @ self.probs)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-CDF sampling; deterministic for a given stream state."""
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        idx = np.minimum(idx, self.probs.size - 1)
        return self.offset + idx

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Pmf)
            and self.offset == other.offset
            and self.probs.shape == other.probs.shape
            and bool(np.allclose(self.probs, other.probs, atol=1e-12))
        )

    def __hash__(self):  # pragma: no cover - identity hashing only
        return id(self)

    def __repr__(self) -> str:
        return f"Pmf(offset={self.offset}, n={self.probs.size}, mean={self.mean:.3f})"

    def allclose(self, other: "Pmf", atol: float = 1e-9) -> bool:
        """Pointwise comparison on the union of both supports."""
        lo = min(self.offset, other.offset)
        hi = max(self.max_value, other.max_value)
        a = np.zeros(hi - lo + 1)
        b = np.zeros(hi - lo + 1)
        a[self.offset - lo : self.offset - lo + self.probs.size] = self.probs
        b[other.offset - lo : other.offset - lo + other.probs.size] = other.probs
        return bool(np.allclose(a, b, atol=atol))


def make_point_mass(v: int) -> Pmf:
    if v < 0:
        raise InvalidParameterError("point mass must be at a non-negative value")
    return Pmf(int(v), [1.0])


def make_poisson(mean: float, tail_eps: float = 1e-12) -> Pmf:
    """Poisson PMF truncated at the smallest K with tail mass < tail_eps."""
    if not mean > 0:
        raise InvalidParameterError(f"Poisson mean must be positive, got {mean}")
    if not 0 < tail_eps < 1e-3:
        raise InvalidParameterError("tail_eps must be in (0, 1e-3)")
    k = int(stats.poisson.ppf(1.0 - tail_eps, mean))
    while stats.poisson.sf(k, mean) >= tail_eps:
        k += 1
    ks = np.arange(k + 1)
    return Pmf(0, stats.poisson.pmf(ks, mean))


def make_uniform_poisson_mixture(lo: int, hi: int, tail_eps: float = 1e-12) -> Pmf:
    """Uniform mixture of Poisson(m) for integer means m in [lo, hi]."""
    if not 0 < lo <= hi:
        raise InvalidParameterError(f"need 0 < lo <= hi, got ({lo}, {hi})")
    components = [make_poisson(m, tail_eps) for m in range(int(lo), int(hi) + 1)]
    return mix(components, np.full(len(components), 1.0 / len(components)))


def make_empirical(series, target_mean: float) -> Pmf:
    """PMF of an observed series rescaled to the requested mean.

    Each sample is multiplied by ``target_mean / sample_mean``, rounded
    half-up to the nearest integer, and re-binned into relative
    frequencies.
    """
    series = np.asarray(series)
    if series.size == 0:
        raise InvalidParameterError("series is empty")
    if np.any(series < 0) or not np.all(series == np.floor(series)):
        raise InvalidParameterError("series must contain non-negative integers")
    sample_mean = series.mean()
    if sample_mean <= 0:
        raise InvalidParameterError("series mean must be positive")
    if not target_mean > 0:
        raise InvalidParameterError("target mean must be positive")
    scaled = np.floor(series * (target_mean / sample_mean) + 0.5).astype(int)
    counts = np.bincount(scaled)
    return Pmf(0, counts / counts.sum())


def mix(pmfs, weights) -> Pmf:
    """Mixture distribution with the given weights."""
    weights = np.asarray(weights, dtype=float)
    if len(pmfs) != weights.size or weights.size == 0:
        raise InvalidParameterError("need one weight per component")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidParameterError("weights must be non-negative with positive sum")
    lo = min(p.offset for p in pmfs)
    hi = max(p.max_value for p in pmfs)
    out = np.zeros(hi - lo + 1)
    for w, p in zip(weights / weights.sum(), pmfs):
        out[p.offset - lo : p.offset - lo + p.probs.size] += w * p.probs
    return Pmf(lo, out)


def _prune_tail(probs: np.ndarray) -> np.ndarray:
    tail = np.cumsum(probs[::-1])[::-1]
    keep = np.nonzero(tail >= TAIL_PRUNE)[0]
    if keep.size == 0:
        return probs
    return probs[: keep[-1] + 1]


def convolve(a: Pmf, b: Pmf) -> Pmf:
    """Distribution of the sum of independent draws from ``a`` and ``b``.

    Uses FFT convolution once the combined support length exceeds
    ``FFT_THRESHOLD``, direct summation below it; both paths agree to
    1e-9 pointwise.
    """
    n = a.probs.size + b.probs.size - 1
    if n > FFT_THRESHOLD:
        probs = signal.fftconvolve(a.probs, b.probs)
        probs = np.clip(probs, 0.0, None)
    else:
        probs = np.convolve(a.probs, b.probs)
    return Pmf(a.offset + b.offset, _prune_tail(probs))


def convolve_all(pmfs) -> Pmf:
    out = make_point_mass(0)
    for p in pmfs:
        out = convolve(out, p)
    return out


def compound_lead_time_demand(demand: Pmf, lead: Pmf) -> Pmf:
    """Demand accumulated over a random number of periods.

    Returns sum_l P(L = l) * demand^{(*l)}, the l-fold convolution
    weighted by the lead-time law; demand^{(*0)} is a point mass at 0.
    """
    power = make_point_mass(0)
    components, weights = [], []
    for l in range(lead.max_value + 1):
        w = lead.pmf(l)
        if l > 0:
            power = convolve(power, demand)
        if w > 0:
            components.append(power)
            weights.append(w)
    return mix(components, weights)


def thin_random_routing(order: Pmf, supplier_count: int) -> Pmf:
    """Order stream one supplier sees from a customer that routes each
    period's whole order to one of ``supplier_count`` suppliers uniformly."""
    if supplier_count < 1:
        raise InvalidParameterError("supplier_count must be >= 1")
    if supplier_count == 1:
        return order
    p = 1.0 / supplier_count
    return mix([make_point_mass(0), order], [1.0 - p, p])


class DemandSpec:
    """External-demand law for one retailer, with its resolved PMF."""

    __slots__ = ("kind", "args", "resolved", "nominal_mean")

    def __init__(self, kind: str, args: tuple, resolved: Pmf, nominal_mean: float):
        self.kind = kind
        self.args = args
        self.resolved = resolved
        self.nominal_mean = nominal_mean
        if abs(resolved.mean - nominal_mean) > 0.01 * nominal_mean:
            raise InvalidParameterError(
                f"resolved demand mean {resolved.mean:.3f} is more than 1% off "
                f"the nominal mean {nominal_mean}"
            )

    @classmethod
    def poisson_uniform(cls, lo: int, hi: int, tail_eps: float = 1e-12) -> "DemandSpec":
        pmf = make_uniform_poisson_mixture(lo, hi, tail_eps)
        return cls("poisson-uniform-mixture", (lo, hi), pmf, (lo + hi) / 2.0)

    @classmethod
    def empirical(cls, pmf_id: str, series, target_mean: float = 10.0) -> "DemandSpec":
        pmf = make_empirical(series, target_mean)
        return cls("empirical", (pmf_id,), pmf, pmf.mean)

    @classmethod
    def point(cls, v: int) -> "DemandSpec":
        return cls("point", (v,), make_point_mass(v), float(v))


class LeadTimeSpec:
    """Shipment lead-time law for one supply edge, in periods."""

    __slots__ = ("kind", "args", "resolved")

    def __init__(self, kind: str, args: tuple, resolved: Pmf):
        if resolved.offset < 0:
            raise InvalidParameterError("lead-time support must be non-negative")
        self.kind = kind
        self.args = args
        self.resolved = resolved

    @classmethod
    def static(cls, l: int) -> "LeadTimeSpec":
        return cls("static", (l,), make_point_mass(l))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "LeadTimeSpec":
        if not 0 <= lo <= hi:
            raise InvalidParameterError(f"need 0 <= lo <= hi, got ({lo}, {hi})")
        n = hi - lo + 1
        return cls("uniform", (lo, hi), Pmf(lo, np.full(n, 1.0 / n)))

    @classmethod
    def empirical(cls, pmf_id: str, series, target_mean: float = 3.0) -> "LeadTimeSpec":
        return cls("empirical", (pmf_id,), make_empirical(series, target_mean))


def load_demand_csv(path) -> dict[str, np.ndarray]:
    """Read an empirical demand file: header of product ids, one row per
    day, non-negative integer cells.  Missing cells are rejected."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidParameterError(f"{path}: empty file") from None
        columns: list[list[int]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InvalidParameterError(f"{path}:{lineno}: expected {len(header)} cells")
            for j, cell in enumerate(row):
                cell = cell.strip()
                if not cell:
                    raise InvalidParameterError(f"{path}:{lineno}: missing value for {header[j]}")
                try:
                    v = int(cell)
                except ValueError:
                    raise InvalidParameterError(
                        f"{path}:{lineno}: non-integer value {cell!r}"
                    ) from None
                if v < 0:
                    raise InvalidParameterError(f"{path}:{lineno}: negative value {v}")
                columns[j].append(v)
    if not columns[0]:
        raise InvalidParameterError(f"{path}: no data rows")
    return {name: np.array(col) for name, col in zip(header, columns)}
