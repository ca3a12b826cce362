"""Weight distributions for coding-vector supports and coefficient laws.

A weight distribution is a probability mass function over the number of
nonzero entries a coding vector carries.  Weights are positive integers
bounded by the vector length they target.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ParameterError

RandomStream = np.random.Generator

# Probabilities summing to within this of 1 are renormalized silently.
RENORMALIZE_TOL = 1e-9


class CoefficientDistribution(str, enum.Enum):
    """Law of the nonzero coding coefficients.

    Both laws are absolutely continuous, so an exact zero has probability
    zero; the samplers still redraw any exact zero so the structural
    sparsity of a coding vector always equals its sampled weight.
    """

    UNIFORM01 = "uniform01"
    STANDARD_NORMAL = "standard_normal"

    def sample(self, rng: RandomStream, size: int | tuple[int, ...] | None = None):
        if self is CoefficientDistribution.UNIFORM01:
            draw = rng.random
        else:
            draw = rng.standard_normal
        if size is None:
            value = draw()
            while value == 0.0:
                value = draw()
            return float(value)
        values = draw(size)
        zeros = values == 0.0
        while zeros.any():
            values[zeros] = draw(int(zeros.sum()))
            zeros = values == 0.0
        return values

    @classmethod
    def parse(cls, text: str | CoefficientDistribution) -> CoefficientDistribution:
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            choices = ", ".join(c.value for c in cls)
            raise ParameterError(f"unknown coefficient distribution {text!r}; expected one of {choices}") from None


@dataclass(frozen=True)
class WeightDistribution:
    """Probability mass ``probs[k]`` on weight ``k`` for ``1 <= k <= max_weight``.

    Weights with zero probability are dropped; the remaining support is kept
    in ascending order, which is also the order used by inverse-CDF sampling.
    """

    probs: Mapping[int, float]
    max_weight: int
    _weights: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.max_weight) != self.max_weight or self.max_weight < 1:
            raise ParameterError(f"max_weight must be a positive integer, got {self.max_weight!r}")
        items = []
        for k, p in dict(self.probs).items():
            if int(k) != k:
                raise ParameterError(f"weight {k!r} is not an integer")
            k = int(k)
            p = float(p)
            if not math.isfinite(p) or p < 0.0 or p > 1.0 + RENORMALIZE_TOL:
                raise ParameterError(f"probability of weight {k} must lie in [0, 1], got {p!r}")
            if p == 0.0:
                continue
            if not 1 <= k <= self.max_weight:
                raise ParameterError(f"weight {k} outside [1, {self.max_weight}]")
            items.append((k, p))
        if not items:
            raise ParameterError("weight distribution has no mass")
        items.sort()
        total = math.fsum(p for _, p in items)
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ParameterError(f"probabilities sum to {total!r}, not 1")
        if total != 1.0:
            items = [(k, p / total) for k, p in items]
        object.__setattr__(self, "probs", dict(items))
        object.__setattr__(self, "max_weight", int(self.max_weight))
        weights = np.array([k for k, _ in items], dtype=np.int64)
        cdf = np.cumsum([p for _, p in items])
        cdf[-1] = 1.0
        weights.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def point(cls, k: int, max_weight: int) -> WeightDistribution:
        return cls({k: 1.0}, max_weight)

    @classmethod
    def dense(cls, length: int) -> WeightDistribution:
        """Full-support distribution ``x^length``."""
        return cls({length: 1.0}, length)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.probs)

    @property
    def is_point_mass(self) -> bool:
        return len(self.probs) == 1

    def mean(self) -> float:
        total = 0.0
        for k, p in self.probs.items():
            total += p * k
        return total

    def sample(self, rng: RandomStream, size: int | None = None):
        """Inverse-CDF draw(s) from a single uniform per sample."""
        if size is None:
            idx = int(np.searchsorted(self._cdf, rng.random(), side="right"))
            return int(self._weights[idx])
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        return self._weights[idx]

    def with_max_weight(self, max_weight: int) -> WeightDistribution:
        return WeightDistribution(self.probs, max_weight)

    def describe(self) -> str:
        """Compact text form accepted back by :func:`parse_weight_distribution`."""
        return ";".join(f"{k}:{p!r}" for k, p in self.probs.items())


def mean_weight(dist: WeightDistribution) -> float:
    return dist.mean()


def sample_weight(dist: WeightDistribution, rng: RandomStream) -> int:
    return dist.sample(rng)


def sample_coefficient(cdist: CoefficientDistribution, rng: RandomStream) -> float:
    return CoefficientDistribution.parse(cdist).sample(rng)


def simplest_distribution(w_target: float, max_weight: int) -> WeightDistribution:
    """Two-point (or point-mass) distribution with mean ``w_target``.

    Puts mass ``lam`` on ``floor(w_target)`` and ``1 - lam`` on
    ``ceil(w_target)`` with ``lam = ceil - w_target``; a point mass when
    ``w_target`` is integral.  Callers targeting an overall row density
    ``w_avg`` pass ``sqrt(w_avg)`` so both factors share the same law.
    """
    w_target = float(w_target)
    if not math.isfinite(w_target) or w_target < 1.0:
        raise ParameterError(f"w_target must be >= 1, got {w_target!r}")
    if w_target > max_weight:
        raise ParameterError(f"w_target must be <= max_weight={max_weight}, got {w_target!r}")
    lo = math.floor(w_target)
    hi = math.ceil(w_target)
    if lo == hi:
        return WeightDistribution({lo: 1.0}, max_weight)
    lam = (hi - w_target) / (hi - lo)
    return WeightDistribution({lo: lam, hi: 1.0 - lam}, max_weight)


_SIMPLEST_RE = re.compile(r"^\s*simplest\(\s*(.+?)\s*\)\s*$", re.IGNORECASE)
_DENSE_RE = re.compile(r"^\s*dense\s*$", re.IGNORECASE)


def parse_weight_distribution(spec, max_weight: int) -> WeightDistribution:
    """Build a distribution from a config value.

    Accepted forms:

    * ``"simplest(<w_target>)"`` (``w_target`` may be ``sqrt(<x>)``),
    * ``"dense"`` for the full-support point mass,
    * ``"k:p;k:p;..."`` (commas also accepted as separators),
    * a list of ``(weight, probability)`` pairs, or a mapping.
    """
    if isinstance(spec, WeightDistribution):
        return spec.with_max_weight(max_weight)
    if isinstance(spec, Mapping):
        return WeightDistribution({int(k): float(v) for k, v in spec.items()}, max_weight)
    if isinstance(spec, str):
        match = _SIMPLEST_RE.match(spec)
        if match:
            return simplest_distribution(_parse_real(match.group(1)), max_weight)
        if _DENSE_RE.match(spec):
            return WeightDistribution.dense(max_weight)
        pairs = []
        for chunk in re.split(r"[;,]", spec):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                k, p = chunk.split(":")
                pairs.append((int(k), float(p)))
            except ValueError:
                raise ParameterError(f"cannot parse weight distribution {spec!r}") from None
        return WeightDistribution(dict(pairs), max_weight)
    if isinstance(spec, Iterable):
        probs: dict[int, float] = {}
        for pair in spec:
            try:
                k, p = pair
            except (TypeError, ValueError):
                raise ParameterError(f"expected (weight, probability) pairs, got {pair!r}") from None
            probs[int(k)] = probs.get(int(k), 0.0) + float(p)
        return WeightDistribution(probs, max_weight)
    raise ParameterError(f"cannot interpret {spec!r} as a weight distribution")


def _parse_real(text: str) -> float:
    text = text.strip()
    match = re.match(r"^sqrt\(\s*(.+?)\s*\)$", text, re.IGNORECASE)
    try:
        if match:
            return math.sqrt(float(match.group(1)))
        return float(text)
    except ValueError:
        raise ParameterError(f"cannot parse number {text!r}") from None
