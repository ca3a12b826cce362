"""In-process master/worker simulation with straggler erasures and cost metering."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import linalg
from .analysis import cost_model
from .codec import (
    CodeRealization,
    SystemConfig,
    check_survivors,
    decode,
    draw_code,
    encode_block,
    partition_columns,
)
from .errors import DecodeError, ParameterError, ShapeError
from .linalg import Matrix, RankTolerance, SparseMatrix
from .weights import RandomStream

# Encoded blocks denser than this are shipped dense, the rest as COO.
DENSE_PAYLOAD_THRESHOLD = 0.5


@dataclass(frozen=True)
class TaskAssignment:
    node_id: int
    a_block: Matrix
    b_block: Matrix
    is_master_local: bool


@dataclass
class ExecutionMetrics:
    per_node_comm: list[int] = field(default_factory=list)
    per_node_flops: list[int] = field(default_factory=list)
    encode_flops: int = 0
    decode_flops: int = 0
    wall_results_collected: int = 0
    generator_rank: int | None = None
    zero_column: bool | None = None

    def mean_worker_comm(self, workers: int) -> float:
        return float(np.mean(self.per_node_comm[:workers]))

    def mean_worker_flops(self, workers: int) -> float:
        return float(np.mean(self.per_node_flops[:workers]))


def execute_task(task: TaskAssignment) -> np.ndarray:
    """What a worker does with its payload: ``a_block^T b_block``."""
    return linalg.matmul_transpose_left(task.a_block, task.b_block)


def _payload(x: np.ndarray) -> Matrix:
    if x.size and np.count_nonzero(x) / x.size > DENSE_PAYLOAD_THRESHOLD:
        x.setflags(write=False)
        return x
    return SparseMatrix.from_dense(x)


def _encode_flops(block_nnz: list[int], support: tuple[int, ...]) -> int:
    # one multiply per stored entry of every combined block, one add for all but the first
    if not support:
        return 0
    scaled = sum(block_nnz[i] for i in support)
    return 2 * scaled - block_nnz[support[0]]


def _with_shapes(cfg: SystemConfig, a: np.ndarray, b: np.ndarray) -> SystemConfig:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"A has {a.shape[0]} rows but B has {b.shape[0]}")
    if not cfg.has_shapes():
        cfg = dataclasses.replace(cfg, r=a.shape[0], s=a.shape[1], t=b.shape[1])
    if a.shape != (cfg.r, cfg.s) or b.shape != (cfg.r, cfg.t):
        raise ShapeError(f"inputs {a.shape}, {b.shape} do not match r={cfg.r}, s={cfg.s}, t={cfg.t}")
    return cfg


def straggler_survivors(cfg: SystemConfig, straggler_set: Iterable[int]) -> tuple[int, ...]:
    stragglers = {int(i) for i in straggler_set}
    if len(stragglers) != cfg.stragglers:
        raise ParameterError(f"expected {cfg.stragglers} stragglers, got {len(stragglers)}")
    if any(not 0 <= i < cfg.workers for i in stragglers):
        raise ParameterError(f"straggler indices must be worker ids in [0, {cfg.workers})")
    return check_survivors(cfg, (i for i in range(cfg.workers) if i not in stragglers))


def random_stragglers(cfg: SystemConfig, rng: RandomStream) -> tuple[int, ...]:
    """A uniformly random size-``S`` subset of the workers, sorted."""
    if cfg.stragglers == 0:
        return ()
    return tuple(sorted(rng.choice(cfg.workers, size=cfg.stragglers, replace=False).tolist()))


def orchestrate(
    cfg: SystemConfig,
    a: Matrix,
    b: Matrix,
    straggler_set: Iterable[int],
    rng: RandomStream,
    *,
    max_workers: int | None = None,
    compute: Callable[[TaskAssignment], np.ndarray] = execute_task,
    code: CodeRealization | None = None,
    tol_policy: RankTolerance | None = None,
) -> tuple[np.ndarray, ExecutionMetrics]:
    """Run one coded multiplication of ``A^T B`` end to end.

    All ``N`` worker tasks and ``R`` master-local tasks are built from one
    code realization drawn before the stragglers are consulted.  Worker tasks
    go to a thread pool of at most ``max_workers`` threads; ``max_workers=1``
    runs inline and skips straggler tasks whose results would be discarded.
    Results are gathered in node order, so decoding never depends on
    completion order.  On decode failure the raised :class:`DecodeError`
    carries the populated metrics.
    """
    a = linalg.as_dense(a)
    b = linalg.as_dense(b)
    cfg = _with_shapes(cfg, a, b)
    survivors = straggler_survivors(cfg, straggler_set)
    N, R = cfg.workers, cfg.extra
    if code is None:
        code = draw_code(cfg, rng)
    elif code.p.shape != (N + R, cfg.m) or code.q.shape != (N + R, cfg.n):
        raise ShapeError("code realization does not match the configuration")

    a_blocks = partition_columns(a, cfg.m)
    b_blocks = partition_columns(b, cfg.n)
    a_nnz = [linalg.nnz(x) for x in a_blocks]
    b_nnz = [linalg.nnz(x) for x in b_blocks]

    metrics = ExecutionMetrics()
    tasks = []
    for node in range(N + R):
        p, q = code.vectors(node)
        task = TaskAssignment(
            node_id=node,
            a_block=_payload(encode_block(a_blocks, p)),
            b_block=_payload(encode_block(b_blocks, q)),
            is_master_local=node >= N,
        )
        tasks.append(task)
        metrics.encode_flops += _encode_flops(a_nnz, p.support) + _encode_flops(b_nnz, q.support)
        metrics.per_node_comm.append(linalg.nnz(task.a_block) + linalg.nnz(task.b_block))
        metrics.per_node_flops.append(linalg.transpose_product_flops(task.a_block, task.b_block))

    wanted = list(survivors) + list(range(N, N + R))
    if max_workers == 1:
        results = [compute(tasks[node]) for node in wanted]
    else:
        with ThreadPoolExecutor(max_workers=max_workers or min(8, N + R)) as pool:
            futures = [pool.submit(compute, task) for task in tasks]
            alive = set(wanted)
            for node, fut in enumerate(futures):
                if node not in alive:
                    fut.cancel()
            results = [futures[node].result() for node in wanted]
    metrics.wall_results_collected = len(results)

    gen = code.generator(survivors)
    metrics.zero_column = gen.has_zero_column()
    try:
        c_hat = decode(gen, results, cfg, tol_policy)
    except DecodeError as exc:
        metrics.generator_rank = exc.rank
        exc.metrics = metrics
        raise
    metrics.generator_rank = cfg.K
    # one dense factorization, then G^+ applied to every coded entry that arrived
    metrics.decode_flops = cfg.K**2 * gen.shape[0] + cfg.K * sum(int(np.count_nonzero(c)) for c in results)
    return c_hat, metrics


def random_sparse_matrix(rows: int, cols: int, density: float, rng: RandomStream) -> np.ndarray:
    """Dense array with ``round(density * rows * cols)`` standard-normal entries at uniform positions."""
    if not 0.0 < density <= 1.0:
        raise ParameterError(f"density must lie in (0, 1], got {density!r}")
    size = rows * cols
    count = max(1, int(round(density * size)))
    out = np.zeros(size)
    positions = rng.choice(size, size=count, replace=False)
    values = rng.standard_normal(count)
    values[values == 0.0] = 1.0
    out[positions] = values
    return out.reshape(rows, cols)


def measure_empirical_costs(
    cfg: SystemConfig,
    sparsity_a: float,
    sparsity_b: float,
    trials: int,
    rng: RandomStream,
) -> list[dict]:
    """Measured per-run costs next to the analytic cost model.

    ``sparsity_*`` are nonzero densities of the random inputs.  Decode
    failures still contribute their encode/communication/compute counters.
    """
    if not cfg.has_shapes():
        raise ParameterError("measuring costs needs the input shapes r, s, t")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    comm, flops, enc, dec = [], [], [], []
    nnz_a, nnz_b = [], []
    for _ in range(trials):
        a = random_sparse_matrix(cfg.r, cfg.s, sparsity_a, rng)
        b = random_sparse_matrix(cfg.r, cfg.t, sparsity_b, rng)
        nnz_a.append(np.count_nonzero(a))
        nnz_b.append(np.count_nonzero(b))
        stragglers = random_stragglers(cfg, rng)
        try:
            _, metrics = orchestrate(cfg, a, b, stragglers, rng, max_workers=1)
            dec.append(metrics.decode_flops)
        except DecodeError as exc:
            metrics = exc.metrics
        comm.append(metrics.mean_worker_comm(cfg.workers))
        flops.append(metrics.mean_worker_flops(cfg.workers))
        enc.append(metrics.encode_flops)
    predicted = cost_model(cfg, int(round(np.mean(nnz_a))), int(round(np.mean(nnz_b))))
    measured = {
        "compute_per_worker": float(np.mean(flops)),
        "comm_per_worker": float(np.mean(comm)),
        "encoding": float(np.mean(enc)),
        "decoding": float(np.mean(dec)) if dec else float("nan"),
    }
    return [
        {"metric": key, "measured": measured[key], "predicted": value}
        for key, value in predicted.as_dict().items()
    ]
