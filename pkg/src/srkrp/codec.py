"""Sparse random Khatri-Rao product codes.

Node ``l`` holds coding vectors ``p_l`` (length ``m``) and ``q_l`` (length
``n``) and computes ``(sum_i p_li A_i)^T (sum_j q_lj B_j)``.  The observed
products are linear in the ``K = m*n`` unknown block products through the
generator ``G``, whose row ``l`` is ``kron(p_l, q_l)``; column ``i*n + j``
(0-based) corresponds to block ``A_i^T B_j``.

Indices are 0-based throughout: workers are nodes ``0..N-1`` and the
master's local computations are nodes ``N..N+R-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .errors import DecodeError, ParameterError, RankError, ShapeError
from .linalg import Matrix, RankTolerance
from .weights import CoefficientDistribution, RandomStream, WeightDistribution


@dataclass(frozen=True)
class SystemConfig:
    """Scheme parameters.

    ``r``, ``s``, ``t`` (input shapes ``A: r x s``, ``B: r x t``) may be left
    unset for rank-only experiments.  Unset weight distributions default to
    the dense ones (``x^m`` and ``x^n``).
    """

    m: int
    n: int
    workers: int
    stragglers: int = 0
    extra: int = 0
    worker_udist: WeightDistribution | None = None
    worker_vdist: WeightDistribution | None = None
    master_udist: WeightDistribution | None = None
    master_vdist: WeightDistribution | None = None
    coeff_dist: CoefficientDistribution = CoefficientDistribution.UNIFORM01
    r: int | None = None
    s: int | None = None
    t: int | None = None

    def __post_init__(self):
        for name in ("m", "n", "workers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.m * self.n > self.workers:
            raise ParameterError(f"m*n = {self.m * self.n} exceeds the number of workers {self.workers}")
        if not 0 <= self.stragglers <= self.workers:
            raise ParameterError(f"stragglers must lie in [0, {self.workers}], got {self.stragglers}")
        if self.extra < 0:
            raise ParameterError(f"extra computations must be >= 0, got {self.extra}")
        for name, length in (("r", None), ("s", self.m), ("t", self.n)):
            value = getattr(self, name)
            if value is None:
                continue
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
            if length is not None and value % length:
                raise ShapeError(f"{name}={value} is not divisible by {length}")
        defaults = {
            "worker_udist": self.m,
            "worker_vdist": self.n,
            "master_udist": self.m,
            "master_vdist": self.n,
        }
        for name, length in defaults.items():
            dist = getattr(self, name)
            if dist is None:
                object.__setattr__(self, name, WeightDistribution.dense(length))
            elif dist.max_weight != length:
                raise ParameterError(f"{name}.max_weight must equal {length}, got {dist.max_weight}")
        object.__setattr__(self, "coeff_dist", CoefficientDistribution.parse(self.coeff_dist))

    @property
    def K(self) -> int:
        return self.m * self.n

    @property
    def survivors(self) -> int:
        return self.workers - self.stragglers

    @property
    def rows(self) -> int:
        """Rows of the generator: surviving workers plus master computations."""
        return self.survivors + self.extra

    @property
    def w_avg(self) -> float:
        return self.worker_udist.mean() * self.worker_vdist.mean()

    @property
    def w_star_avg(self) -> float:
        return self.master_udist.mean() * self.master_vdist.mean()

    def has_shapes(self) -> bool:
        return None not in (self.r, self.s, self.t)

    def block_shape(self) -> tuple[int, int]:
        """Shape ``(s/m, t/n)`` of every block product."""
        if not self.has_shapes():
            raise ParameterError("input shapes r, s, t are not set")
        return (self.s // self.m, self.t // self.n)


@dataclass(frozen=True, eq=False)
class CodingVector:
    length: int
    support: tuple[int, ...]
    coeffs: np.ndarray

    def __post_init__(self):
        support = tuple(int(i) for i in self.support)
        coeffs = np.array(self.coeffs, dtype=np.float64).reshape(-1)
        if len(support) != coeffs.size:
            raise ShapeError("support and coefficients differ in length")
        if list(support) != sorted(set(support)):
            raise ParameterError("support must be strictly increasing")
        if support and (support[0] < 0 or support[-1] >= self.length):
            raise ParameterError(f"support {support} outside [0, {self.length})")
        if np.any(coeffs == 0.0):
            raise ParameterError("coding coefficients on the support must be nonzero")
        coeffs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coeffs", coeffs)

    def __eq__(self, other):
        if not isinstance(other, CodingVector):
            return NotImplemented
        return (self.length, self.support) == (other.length, other.support) and np.array_equal(
            self.coeffs, other.coeffs
        )

    def __hash__(self):
        return hash((self.length, self.support, self.coeffs.tobytes()))

    @property
    def weight(self) -> int:
        return len(self.support)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[list(self.support)] = self.coeffs
        return out

    @classmethod
    def from_dense(cls, row) -> CodingVector:
        row = np.asarray(row, dtype=np.float64)
        support = np.flatnonzero(row)
        return cls(row.size, tuple(support.tolist()), row[support])


def draw_coding_vector(
    length: int,
    wdist: WeightDistribution,
    cdist: CoefficientDistribution,
    rng: RandomStream,
) -> CodingVector:
    """Sample a weight, a uniform support of that size, then i.i.d. coefficients."""
    if wdist.max_weight > length:
        raise ParameterError(f"weight distribution reaches {wdist.max_weight} > length {length}")
    k = wdist.sample(rng)
    support = np.sort(rng.choice(length, size=k, replace=False))
    coeffs = CoefficientDistribution.parse(cdist).sample(rng, k)
    return CodingVector(length, tuple(support.tolist()), coeffs)


def draw_coding_rows(
    count: int,
    length: int,
    wdist: WeightDistribution,
    cdist: CoefficientDistribution,
    rng: RandomStream,
) -> np.ndarray:
    """Draw ``count`` coding vectors at once as the rows of a dense array.

    Same law as :func:`draw_coding_vector`: the support of row ``l`` is the
    set of positions holding the ``u_l`` smallest of ``length`` i.i.d.
    uniform keys, which is a uniformly random ``u_l``-subset.
    """
    if wdist.max_weight > length:
        raise ParameterError(f"weight distribution reaches {wdist.max_weight} > length {length}")
    if count == 0:
        return np.zeros((0, length))
    weights = wdist.sample(rng, count)
    keys = rng.random((count, length))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    mask = ranks < weights[:, None]
    coeffs = CoefficientDistribution.parse(cdist).sample(rng, (count, length))
    return np.where(mask, coeffs, 0.0)


def kron_row(p: CodingVector, q: CodingVector) -> CodingVector:
    """Sparse Kronecker product; entry ``i*len(q) + j`` is ``p_i * q_j``."""
    n = q.length
    support = tuple(i * n + j for i in p.support for j in q.support)
    coeffs = np.outer(p.coeffs, q.coeffs).reshape(-1)
    return CodingVector(p.length * n, support, coeffs)


def khatri_rao_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise Khatri-Rao product of two dense factor matrices."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[0] != q.shape[0]:
        raise ShapeError(f"factor matrices have {p.shape[0]} and {q.shape[0]} rows")
    return (p[:, :, None] * q[:, None, :]).reshape(p.shape[0], p.shape[1] * q.shape[1])


@dataclass(frozen=True)
class GeneratorMatrix:
    """``g = P (.) Q`` for the surviving workers followed by the master rows.

    ``nodes[l]`` is the node whose coding vectors produced row ``l``.
    """

    p: np.ndarray
    q: np.ndarray
    nodes: tuple[int, ...]
    g: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g.shape

    @property
    def p_rows(self) -> list[CodingVector]:
        return [CodingVector.from_dense(row) for row in self.p]

    @property
    def q_rows(self) -> list[CodingVector]:
        return [CodingVector.from_dense(row) for row in self.q]

    def row_weights(self) -> np.ndarray:
        return np.count_nonzero(self.g, axis=1)

    def rank(self, tol_policy: RankTolerance | None = None) -> int:
        return linalg.numerical_rank(self.g, tol_policy)

    def has_zero_column(self) -> bool:
        return linalg.has_zero_column(self.g)


@dataclass(frozen=True)
class CodeRealization:
    """Coding vectors for every node, drawn before stragglers are known.

    Rows ``0..N-1`` of ``p``/``q`` belong to the workers and rows
    ``N..N+R-1`` to the master's extra computations.
    """

    p: np.ndarray
    q: np.ndarray
    workers: int

    def __post_init__(self):
        for arr in (self.p, self.q):
            arr.setflags(write=False)

    @property
    def extra(self) -> int:
        return self.p.shape[0] - self.workers

    def vectors(self, node: int) -> tuple[CodingVector, CodingVector]:
        return CodingVector.from_dense(self.p[node]), CodingVector.from_dense(self.q[node])

    def generator(self, survivors: Iterable[int]) -> GeneratorMatrix:
        nodes = tuple(survivors) + tuple(range(self.workers, self.workers + self.extra))
        idx = np.array(nodes, dtype=np.int64)
        p = self.p[idx]
        q = self.q[idx]
        g = khatri_rao_rows(p, q)
        for arr in (p, q, g):
            arr.setflags(write=False)
        return GeneratorMatrix(p, q, nodes, g)


def draw_code(cfg: SystemConfig, rng: RandomStream) -> CodeRealization:
    """Draw all ``N + R`` coding-vector pairs in node order."""
    N, R = cfg.workers, cfg.extra
    p = np.vstack(
        [
            draw_coding_rows(N, cfg.m, cfg.worker_udist, cfg.coeff_dist, rng),
            draw_coding_rows(R, cfg.m, cfg.master_udist, cfg.coeff_dist, rng),
        ]
    )
    q = np.vstack(
        [
            draw_coding_rows(N, cfg.n, cfg.worker_vdist, cfg.coeff_dist, rng),
            draw_coding_rows(R, cfg.n, cfg.master_vdist, cfg.coeff_dist, rng),
        ]
    )
    return CodeRealization(p, q, N)


def check_survivors(cfg: SystemConfig, survivors: Iterable[int]) -> tuple[int, ...]:
    surv = tuple(sorted(int(i) for i in survivors))
    if len(set(surv)) != len(surv):
        raise ParameterError("survivor set contains duplicates")
    if surv and (surv[0] < 0 or surv[-1] >= cfg.workers):
        raise ParameterError(f"survivor indices must lie in [0, {cfg.workers})")
    if len(surv) != cfg.survivors:
        raise ParameterError(f"expected {cfg.survivors} survivors, got {len(surv)}")
    return surv


def build_generator(cfg: SystemConfig, survivors: Iterable[int], rng: RandomStream) -> GeneratorMatrix:
    surv = check_survivors(cfg, survivors)
    return draw_code(cfg, rng).generator(surv)


def partition_columns(x: Matrix, parts: int) -> list[np.ndarray]:
    x = linalg.as_dense(x)
    if parts < 1 or x.shape[1] % parts:
        raise ShapeError(f"{x.shape[1]} columns cannot be split into {parts} equal blocks")
    width = x.shape[1] // parts
    return [x[:, k * width : (k + 1) * width].copy() for k in range(parts)]


def encode_block(blocks: Sequence[Matrix], v: CodingVector) -> np.ndarray:
    """``sum_i v_i * blocks[i]`` over the support, in ascending order."""
    if len(blocks) != v.length:
        raise ShapeError(f"{len(blocks)} blocks for a coding vector of length {v.length}")
    shapes = {linalg.shape_of(b) for b in blocks}
    if len(shapes) != 1:
        raise ShapeError(f"blocks have differing shapes {sorted(shapes)}")
    out = None
    for i, c in zip(v.support, v.coeffs):
        term = c * linalg.as_dense(blocks[i])
        out = term if out is None else out + term
    if out is None:
        return np.zeros(shapes.pop())
    return out


def decode(
    gen: GeneratorMatrix,
    results: Sequence[np.ndarray],
    cfg: SystemConfig,
    tol_policy: RankTolerance | None = None,
) -> np.ndarray:
    """Recover ``A^T B`` from the coded products ordered like ``gen``'s rows."""
    rows, K = gen.shape
    if K != cfg.K:
        raise ShapeError(f"generator has {K} columns, configuration expects {cfg.K}")
    if len(results) != rows:
        raise ShapeError(f"expected {rows} results, got {len(results)}")
    shapes = {np.shape(c) for c in results}
    if len(shapes) != 1:
        raise ShapeError(f"results have differing shapes {sorted(shapes)}")
    a, b = shapes.pop()
    if cfg.has_shapes() and (a, b) != cfg.block_shape():
        raise ShapeError(f"results have shape {(a, b)}, expected {cfg.block_shape()}")
    rank = gen.rank(tol_policy)
    if rank < K:
        raise DecodeError(f"generator is rank deficient (rank {rank} < {K})", rank=rank)
    y = np.stack([np.asarray(c, dtype=np.float64).reshape(-1) for c in results])
    try:
        factor = linalg.LeastSquaresFactor(gen.g, check_rank=False)
    except RankError as exc:
        raise DecodeError(str(exc), rank=exc.rank) from exc
    z = factor.solve(y)
    m, n = cfg.m, cfg.n
    return z.reshape(m, n, a, b).transpose(0, 2, 1, 3).reshape(m * a, n * b)
