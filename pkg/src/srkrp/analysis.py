"""Closed-form failure approximations and the asymptotic cost model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .codec import SystemConfig
from .errors import ParameterError


def _zero_column_prob(K: int, survivors: int, w_avg: float, extra: int = 0, w_star_avg: float = 0.0) -> float:
    if w_avg > K or w_star_avg > K:
        raise ParameterError(f"average weight exceeds K={K}")
    if w_avg <= 0:
        raise ParameterError(f"w_avg must be positive, got {w_avg!r}")
    # log of P(one column is all zero), -inf when some row is always dense
    log_col = survivors * math.log1p(-w_avg / K) if w_avg < K else -math.inf
    if extra:
        log_col += extra * math.log1p(-w_star_avg / K) if w_star_avg < K else -math.inf
    q = math.exp(log_col)
    if q >= 1.0:
        return 1.0
    return 0.0 - math.expm1(K * math.log1p(-q))


def failure_prob_approx(K: int, survivors: int, w_avg: float) -> float:
    """Probability that a ``survivors x K`` Bernoulli(``w_avg/K``) matrix has a zero column.

    ``1 - (1 - (1 - w_avg/K)**survivors)**K``, evaluated through
    ``log1p``/``expm1`` so tiny probabilities keep their relative accuracy.
    """
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if survivors < K:
        raise ParameterError(f"survivors ({survivors}) must be at least K ({K})")
    return _zero_column_prob(K, survivors, float(w_avg))


def zero_column_prob_approx(
    K: int, survivors: int, w_avg: float, extra: int = 0, w_star_avg: float | None = None
) -> float:
    """Bernoulli zero-column estimate including ``extra`` master rows of density ``w_star_avg/K``.

    Equals :func:`failure_prob_approx` when ``extra == 0``.
    """
    if extra == 0:
        return failure_prob_approx(K, survivors, w_avg)
    if w_star_avg is None:
        raise ParameterError("w_star_avg is required when extra > 0")
    if survivors + extra < K:
        raise ParameterError(f"{survivors + extra} rows cannot have rank {K}")
    return _zero_column_prob(K, survivors, float(w_avg), extra, float(w_star_avg))


def single_weight_full_rank_prob(K: int) -> float:
    """``K!/K^K``: a ``K x K`` generator with one nonzero per row is full rank iff it is a permutation."""
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if K <= 170:
        # exact integer ratio, correctly rounded by int true division
        return math.factorial(K) / K**K
    return math.exp(math.lgamma(K + 1) - K * math.log(K))


def average_weight(theta: float, K: int, log_base: float | None = None) -> float:
    """``theta * log K`` (natural log unless ``log_base`` is given)."""
    return theta * (math.log(K) if log_base is None else math.log(K, log_base))


@dataclass(frozen=True)
class CostReport:
    """Asymptotic cost estimates with all constants set to one."""

    compute_per_worker: float
    comm_per_worker: float
    encoding: float
    decoding: float

    def as_dict(self) -> dict[str, float]:
        return {
            "compute_per_worker": self.compute_per_worker,
            "comm_per_worker": self.comm_per_worker,
            "encoding": self.encoding,
            "decoding": self.decoding,
        }


def cost_model(cfg: SystemConfig, nnzA: int, nnzB: int) -> CostReport:
    if not cfg.has_shapes():
        raise ParameterError("cost model needs the input shapes r, s, t")
    r, s, t, m, n = cfg.r, cfg.s, cfg.t, cfg.m, cfg.n
    if not 0 <= nnzA <= r * s or not 0 <= nnzB <= r * t:
        raise ParameterError(f"nnz counts ({nnzA}, {nnzB}) exceed the input sizes")
    u, v = cfg.worker_udist.mean(), cfg.worker_vdist.mean()
    us, vs = cfg.master_udist.mean(), cfg.master_vdist.mean()
    K, N, S, R = cfg.K, cfg.workers, cfg.stragglers, cfg.extra
    compute = min(u * t * nnzA, v * s * nnzB) / (m * n)
    comm = u * nnzA / m + v * nnzB / n
    encoding = N * ((2 * u - 1) * nnzA / m + (2 * v - 1) * nnzB / n)
    encoding += R * ((2 * us - 1) * nnzA / m + (2 * vs - 1) * nnzB / n)
    decoding = K**2 * (N - S + R) + K * (u * v * (K - R) + us * vs * R) * nnzA * nnzB / (r * m * n)
    return CostReport(compute, comm, encoding, decoding)


REPORT_COLUMNS = ("K", "N", "S", "R", "theta", "w_avg", "w_star_avg", "trials", "P_f", "P_zc", "P_zc_approx", "ratio")


def empirical_vs_approx_report(results: Sequence) -> list[dict]:
    """One row per campaign comparing measured ``P_f``/``P_zc`` with the Bernoulli estimate.

    ``ratio`` is ``P_f / P_zc_approx``; it is NaN when the estimate is 0.
    """
    if not results:
        raise ParameterError("no campaign results to report")
    rows = []
    for res in results:
        approx = res.approx_p_zc
        ratio = res.p_f / approx if approx > 0 else math.nan
        rows.append(
            {
                "K": res.K,
                "N": res.N,
                "S": res.S,
                "R": res.R,
                "theta": res.theta,
                "w_avg": res.w_avg,
                "w_star_avg": res.w_star_avg,
                "trials": res.trials_run,
                "P_f": res.p_f,
                "P_zc": res.p_zc,
                "P_zc_approx": approx,
                "ratio": ratio,
            }
        )
    return rows


def format_table(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())

    def fmt(value):
        if isinstance(value, float):
            return f"{value:.4g}"
        return "" if value is None else str(value)

    cells = [[fmt(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)
