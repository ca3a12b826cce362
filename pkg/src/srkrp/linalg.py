"""Real matrix kernels: COO sparse storage, products, rank and least squares.

Dense matrices are plain 2-D ``numpy`` float arrays.  ``SparseMatrix`` is an
immutable coordinate list used for sparse payloads and the plain-text
triple format (``rows cols nnz`` header, then ``row col value`` lines,
0-indexed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import NumericalError, RankError, ShapeError

# Magnitudes below this are not stored as sparse entries.
ZERO_THRESHOLD = 1e-300


@dataclass(frozen=True)
class SparseMatrix:
    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.row_idx, dtype=np.int64)
        c = np.asarray(self.col_idx, dtype=np.int64)
        v = np.asarray(self.values, dtype=np.float64)
        if not (r.shape == c.shape == v.shape) or r.ndim != 1:
            raise ShapeError("row, column and value arrays must be 1-D and equally long")
        if r.size:
            if r.min() < 0 or r.max() >= self.rows or c.min() < 0 or c.max() >= self.cols:
                raise ShapeError(f"entry index out of range for shape ({self.rows}, {self.cols})")
            if not np.all(np.isfinite(v)):
                raise ValueError("sparse entries must be finite")
            if np.any(np.abs(v) < ZERO_THRESHOLD):
                raise ValueError("sparse entries must be nonzero")
            order = np.lexsort((c, r))
            r, c, v = r[order], c[order], v[order]
            flat = r * self.cols + c
            if np.any(flat[1:] == flat[:-1]):
                raise ValueError("duplicate sparse entries")
        for arr in (r, c, v):
            arr.setflags(write=False)
        object.__setattr__(self, "row_idx", r)
        object.__setattr__(self, "col_idx", c)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def nnz(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_triples(cls, rows: int, cols: int, triples) -> SparseMatrix:
        """Build from ``(row, col, value)`` triples; duplicates are summed."""
        acc: dict[tuple[int, int], float] = {}
        for i, j, val in triples:
            acc[(int(i), int(j))] = acc.get((int(i), int(j)), 0.0) + float(val)
        keys = [k for k, val in acc.items() if abs(val) >= ZERO_THRESHOLD]
        return cls(
            rows,
            cols,
            np.array([k[0] for k in keys], dtype=np.int64),
            np.array([k[1] for k in keys], dtype=np.int64),
            np.array([acc[k] for k in keys], dtype=np.float64),
        )

    @classmethod
    def from_dense(cls, x: np.ndarray) -> SparseMatrix:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got shape {x.shape}")
        r, c = np.nonzero(np.abs(x) >= ZERO_THRESHOLD)
        return cls(x.shape[0], x.shape[1], r, c, x[r, c])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.values
        return out

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix((self.values, (self.row_idx, self.col_idx)), shape=self.shape)

    def column_nnz(self) -> np.ndarray:
        return np.bincount(self.col_idx, minlength=self.cols)

    def row_nnz(self) -> np.ndarray:
        return np.bincount(self.row_idx, minlength=self.rows)


Matrix = Union[np.ndarray, SparseMatrix]


def as_dense(x: Matrix) -> np.ndarray:
    if isinstance(x, SparseMatrix):
        return x.to_dense()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def nnz(x: Matrix) -> int:
    if isinstance(x, SparseMatrix):
        return x.nnz()
    return int(np.count_nonzero(x))


def shape_of(x: Matrix) -> tuple[int, int]:
    if isinstance(x, SparseMatrix):
        return x.shape
    return tuple(np.shape(x))


def matmul_transpose_left(a: Matrix, b: Matrix) -> np.ndarray:
    """Return ``a.T @ b`` as a dense array."""
    sa, sb = shape_of(a), shape_of(b)
    if len(sa) != 2 or len(sb) != 2 or sa[0] != sb[0]:
        raise ShapeError(f"cannot form a^T b for shapes {sa} and {sb}")
    if isinstance(a, SparseMatrix) or isinstance(b, SparseMatrix):
        left = a.to_scipy() if isinstance(a, SparseMatrix) else scipy.sparse.csr_matrix(a)
        right = b.to_scipy() if isinstance(b, SparseMatrix) else scipy.sparse.csr_matrix(b)
        return np.asarray((left.T @ right).toarray(), dtype=np.float64)
    return np.asarray(a, dtype=np.float64).T @ np.asarray(b, dtype=np.float64)


def transpose_product_flops(a: Matrix, b: Matrix) -> int:
    """Multiply-adds a sparse outer-product kernel spends on ``a.T @ b``.

    Row ``k`` of both operands contributes ``nnz(a[k]) * nnz(b[k])``.
    """
    ra = a.row_nnz() if isinstance(a, SparseMatrix) else np.count_nonzero(a, axis=1)
    rb = b.row_nnz() if isinstance(b, SparseMatrix) else np.count_nonzero(b, axis=1)
    return int(np.dot(ra.astype(np.int64), rb.astype(np.int64)))


@dataclass(frozen=True)
class RankTolerance:
    """Singular-value cutoff policy.

    The default is the pseudo-inverse cutoff ``max(rows, cols) * sigma_max * eps``.
    ``absolute`` replaces it with a fixed threshold.
    """

    absolute: float | None = None

    def threshold(self, singular_values: np.ndarray, shape: tuple[int, int]) -> float:
        if self.absolute is not None:
            return float(self.absolute)
        if singular_values.size == 0:
            return 0.0
        return max(shape) * float(singular_values[0]) * np.finfo(np.float64).eps


DEFAULT_TOLERANCE = RankTolerance()


def singular_values(g: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.svd(g, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def numerical_rank(g: Matrix, tol_policy: RankTolerance | None = None) -> int:
    g = as_dense(g)
    if g.size == 0:
        raise ShapeError("rank of an empty matrix is undefined")
    sv = singular_values(g)
    tau = (tol_policy or DEFAULT_TOLERANCE).threshold(sv, g.shape)
    return int(np.count_nonzero(sv > tau))


def has_zero_column(g: Matrix) -> bool:
    """True iff some column holds only exact zeros (no tolerance)."""
    if isinstance(g, SparseMatrix):
        return bool(np.any(g.column_nnz() == 0))
    g = np.asarray(g)
    if g.size == 0:
        raise ShapeError("empty matrix")
    return not bool(np.all(np.any(g != 0, axis=0)))


class LeastSquaresFactor:
    """QR factorization with column pivoting of a full-column-rank matrix.

    Factor once, then :meth:`solve` any number of right-hand sides.
    With ``check_rank=False`` only exactly singular factors are rejected.
    """

    def __init__(self, g: Matrix, tol_policy: RankTolerance | None = None, check_rank: bool = True):
        g = as_dense(g)
        rows, cols = g.shape
        if rows < cols:
            raise RankError(f"underdetermined system: {rows} rows for {cols} unknowns", rank=rows)
        try:
            q, r, piv = scipy.linalg.qr(g, mode="economic", pivoting=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"QR factorization failed: {exc}") from exc
        diag = np.abs(np.diag(r))
        if not check_rank:
            # the caller already ran the SVD rank gate
            tau = 0.0
        elif tol_policy is not None and tol_policy.absolute is not None:
            tau = tol_policy.absolute
        else:
            tau = max(rows, cols) * (diag[0] if diag.size else 0.0) * np.finfo(np.float64).eps
        rank = int(np.count_nonzero(diag > tau))
        if rank < cols:
            raise RankError(f"matrix is rank deficient (rank {rank} < {cols})", rank=rank)
        self.shape = (rows, cols)
        self._q = q
        self._r = r
        self._perm = piv

    def solve(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        vector = y.ndim == 1
        if vector:
            y = y[:, None]
        if y.shape[0] != self.shape[0]:
            raise ShapeError(f"right-hand side has {y.shape[0]} rows, system has {self.shape[0]}")
        z_perm = scipy.linalg.solve_triangular(self._r, self._q.T @ y)
        z = np.empty_like(z_perm)
        z[self._perm] = z_perm
        return z[:, 0] if vector else z


def least_squares_solve(g: Matrix, y: np.ndarray) -> np.ndarray:
    """Column-wise minimizer of ``||g z - y||_2`` for full-column-rank ``g``."""
    g = as_dense(g)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != g.shape[0]:
        raise ShapeError(f"g has shape {g.shape} but y has {y.shape[0]} rows")
    return LeastSquaresFactor(g).solve(y)


def write_matrix(path: str | os.PathLike, x: Matrix) -> None:
    sp = x if isinstance(x, SparseMatrix) else SparseMatrix.from_dense(x)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{sp.rows} {sp.cols} {sp.nnz()}\n")
        for i, j, v in zip(sp.row_idx.tolist(), sp.col_idx.tolist(), sp.values.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def read_matrix(path: str | os.PathLike) -> SparseMatrix:
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("%")]
    if not lines:
        raise ShapeError(f"{path}: empty matrix file")
    try:
        rows, cols, count = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise ShapeError(f"{path}: header must be 'rows cols nnz'") from None
    body = lines[1:]
    if len(body) != count:
        raise ShapeError(f"{path}: header declares {count} entries, found {len(body)}")
    triples = []
    for lineno, ln in enumerate(body, start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise ShapeError(f"{path}:{lineno}: expected 'row col value'")
        triples.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return SparseMatrix.from_triples(rows, cols, triples)
