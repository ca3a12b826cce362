"""Monte-Carlo failure-probability and numerical-stability campaigns.

Every trial draws from its own stream seeded by ``(master_seed, trial_index)``,
so a campaign's outcome depends only on its configuration and seed, never on
how trials are spread over processes.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .analysis import zero_column_prob_approx
from .codec import SystemConfig, draw_code
from .errors import DecodeError, NumericalError, ParameterError
from .linalg import RankTolerance
from .runtime import orchestrate, random_stragglers, straggler_survivors
from .weights import CoefficientDistribution

CHUNK_SIZE = 512


class StragglerMode(str, enum.Enum):
    UNIFORM = "uniform_random_subset"
    FIXED = "fixed_set"


class Norm(str, enum.Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"

    def __call__(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x, 2 if self is Norm.SPECTRAL else "fro"))


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    theta: float | None = None
    trials_max: int = 10**6
    target_failures: int = 100
    master_seed: int = 0
    straggler_mode: StragglerMode = StragglerMode.UNIFORM
    fixed_stragglers: tuple[int, ...] = ()
    norm: Norm = Norm.SPECTRAL
    tol_policy: RankTolerance | None = None

    def __post_init__(self):
        if self.trials_max < 1:
            raise ParameterError(f"trials_max must be >= 1, got {self.trials_max}")
        if self.target_failures < 1:
            raise ParameterError(f"target_failures must be >= 1, got {self.target_failures}")
        if not 0 <= self.master_seed < 2**64:
            raise ParameterError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "straggler_mode", StragglerMode(self.straggler_mode))
        object.__setattr__(self, "norm", Norm(self.norm))
        if self.straggler_mode is StragglerMode.FIXED:
            straggler_survivors(self.system, self.fixed_stragglers)


def trial_stream(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    rank_deficient: bool
    zero_column: bool
    svd_error: bool = False
    rel_error: float | None = None


def _survivors(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[int, ...]:
    if cfg.straggler_mode is StragglerMode.FIXED:
        stragglers = cfg.fixed_stragglers
    else:
        stragglers = random_stragglers(cfg.system, rng)
    return straggler_survivors(cfg.system, stragglers)


def failure_trial(cfg: ExperimentConfig, index: int) -> TrialOutcome:
    """Draw stragglers and a code, then test the generator for full column rank."""
    rng = trial_stream(cfg.master_seed, index)
    survivors = _survivors(cfg, rng)
    gen = draw_code(cfg.system, rng).generator(survivors)
    if gen.has_zero_column():
        # structurally rank deficient, no SVD needed
        return TrialOutcome(index, True, True)
    try:
        rank = gen.rank(cfg.tol_policy)
    except NumericalError:
        return TrialOutcome(index, True, False, svd_error=True)
    return TrialOutcome(index, rank < cfg.system.K, False)


def stability_trial(cfg: ExperimentConfig, index: int, input_dist: CoefficientDistribution) -> TrialOutcome:
    """Full encode/compute/decode on random inputs; records the relative error."""
    sys_cfg = cfg.system
    rng = trial_stream(cfg.master_seed, index)
    a = input_dist.sample(rng, (sys_cfg.r, sys_cfg.s))
    b = input_dist.sample(rng, (sys_cfg.r, sys_cfg.t))
    survivors = _survivors(cfg, rng)
    stragglers = sorted(set(range(sys_cfg.workers)) - set(survivors))
    try:
        c_hat, metrics = orchestrate(sys_cfg, a, b, stragglers, rng, max_workers=1, tol_policy=cfg.tol_policy)
    except DecodeError as exc:
        return TrialOutcome(index, True, bool(exc.metrics and exc.metrics.zero_column))
    except NumericalError:
        return TrialOutcome(index, True, False, svd_error=True)
    c = a.T @ b
    return TrialOutcome(index, False, False, rel_error=cfg.norm(c - c_hat) / cfg.norm(c))


def _run_chunk(fn: Callable, args: tuple, start: int, stop: int) -> list[TrialOutcome]:
    return [fn(*args[:1], i, *args[1:]) for i in range(start, stop)]


def _outcomes(fn: Callable, args: tuple, trials_max: int, jobs: int) -> Iterator[TrialOutcome]:
    """Yield outcomes in trial-index order, computing chunks ahead on ``jobs`` processes."""
    if jobs <= 1:
        for i in range(trials_max):
            yield fn(*args[:1], i, *args[1:])
        return
    bounds = [(s, min(s + CHUNK_SIZE, trials_max)) for s in range(0, trials_max, CHUNK_SIZE)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        pending = []
        it = iter(bounds)
        for start, stop in it:
            pending.append(pool.submit(_run_chunk, fn, args, start, stop))
            if len(pending) >= 2 * jobs:
                break
        try:
            while pending:
                chunk = pending.pop(0).result()
                nxt = next(it, None)
                if nxt is not None:
                    pending.append(pool.submit(_run_chunk, fn, args, *nxt))
                yield from chunk
        finally:
            # the consumer may stop early; chunks not yet started are dropped
            for fut in pending:
                fut.cancel()


@dataclass(frozen=True)
class CampaignResult:
    K: int
    m: int
    n: int
    N: int
    S: int
    R: int
    theta: float | None
    w_avg: float
    w_star_avg: float
    trials_run: int
    failures: int
    zero_col_count: int
    approx_p_zc: float
    seed: int
    mean_rel_error: float | None = None
    svd_errors: int = 0
    params: dict = field(default_factory=dict, compare=False)

    @property
    def p_f(self) -> float:
        return self.failures / self.trials_run

    @property
    def stderr(self) -> float:
        p = self.p_f
        return math.sqrt(p * (1.0 - p) / self.trials_run)

    @property
    def p_zc(self) -> float:
        return self.zero_col_count / self.trials_run

    @property
    def upper95(self) -> float:
        """One-sided 95% upper bound on ``p_f``; exact binomial bound when no failure was seen."""
        if self.failures == 0:
            return 1.0 - 0.05 ** (1.0 / self.trials_run)
        return min(1.0, self.p_f + 1.6448536269514722 * self.stderr)

    def to_row(self) -> dict[str, str]:
        values = {
            "K": self.K,
            "N": self.N,
            "S": self.S,
            "R": self.R,
            "theta": self.theta,
            "w_avg": self.w_avg,
            "w_star_avg": self.w_star_avg,
            "trials": self.trials_run,
            "failures": self.failures,
            "p_f": self.p_f,
            "stderr": self.stderr,
            "p_zc": self.p_zc,
            "approx_p_zc": self.approx_p_zc,
            "mean_rel_error": self.mean_rel_error,
            "seed": self.seed,
            "m": self.m,
            "n": self.n,
            "p_f_upper95": self.upper95,
        }
        values.update(self.params)
        return {key: _fmt(values.get(key)) for key in CSV_COLUMNS}


CSV_COLUMNS = (
    "K", "N", "S", "R", "theta", "w_avg", "w_star_avg", "trials", "failures", "p_f", "stderr",
    "p_zc", "approx_p_zc", "mean_rel_error", "seed",
    # self-describing extension: everything else needed to rerun one point
    "m", "n", "udist", "vdist", "master_udist", "master_vdist", "coeff_dist",
    "straggler_mode", "trials_max", "target_failures", "experiment", "u_avg", "v_avg", "p_f_upper95",
)  # fmt: skip


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, enum.Enum):
        return str(value.value)
    return str(value)


def _base_result(cfg: ExperimentConfig, trials: int, failures: int, zero_cols: int, svd_errors: int, mean_err):
    s = cfg.system
    approx = zero_column_prob_approx(s.K, s.survivors, s.w_avg, s.extra, s.w_star_avg if s.extra else None)
    params = {
        "udist": s.worker_udist.describe(),
        "vdist": s.worker_vdist.describe(),
        "master_udist": s.master_udist.describe(),
        "master_vdist": s.master_vdist.describe(),
        "coeff_dist": s.coeff_dist,
        "straggler_mode": cfg.straggler_mode,
        "trials_max": cfg.trials_max,
        "target_failures": cfg.target_failures,
    }
    return CampaignResult(
        K=s.K,
        m=s.m,
        n=s.n,
        N=s.workers,
        S=s.stragglers,
        R=s.extra,
        theta=cfg.theta,
        w_avg=s.w_avg,
        w_star_avg=s.w_star_avg if s.extra else 0.0,
        trials_run=trials,
        failures=failures,
        zero_col_count=zero_cols,
        approx_p_zc=approx,
        seed=cfg.master_seed,
        mean_rel_error=mean_err,
        svd_errors=svd_errors,
        params=params,
    )


def run_failure_campaign(cfg: ExperimentConfig, jobs: int = 1) -> CampaignResult:
    """Sample generators until ``target_failures`` rank deficiencies or ``trials_max`` trials."""
    trials = failures = zero_cols = svd_errors = 0
    for out in _outcomes(failure_trial, (cfg,), cfg.trials_max, jobs):
        trials += 1
        failures += out.rank_deficient
        zero_cols += out.zero_column
        svd_errors += out.svd_error
        if failures >= cfg.target_failures:
            break
    return _base_result(cfg, trials, failures, zero_cols, svd_errors, None)


def run_stability_campaign(
    cfg: ExperimentConfig,
    input_dist: CoefficientDistribution = CoefficientDistribution.STANDARD_NORMAL,
    jobs: int = 1,
) -> CampaignResult:
    """Run ``trials_max`` full pipelines and average the relative error of the decoded successes.

    Needs ``r``, ``s``, ``t`` on the system configuration.
    """
    if not cfg.system.has_shapes():
        raise ParameterError("stability campaigns need the input shapes r, s, t")
    input_dist = CoefficientDistribution.parse(input_dist)
    trials = failures = zero_cols = svd_errors = 0
    errors = []
    for out in _outcomes(stability_trial, (cfg, input_dist), cfg.trials_max, jobs):
        trials += 1
        failures += out.rank_deficient
        zero_cols += out.zero_column
        svd_errors += out.svd_error
        if out.rel_error is not None:
            errors.append(out.rel_error)
    mean_err = math.fsum(errors) / len(errors) if errors else None
    return _base_result(cfg, trials, failures, zero_cols, svd_errors, mean_err)


def combined_stderr(a: CampaignResult, b: CampaignResult) -> float:
    return math.hypot(a.stderr, b.stderr)
