"""Experiment presets and their expansion into campaign points.

A run is described by a :class:`RunSpec`: an experiment name plus parameter
overrides.  Overrides are layered on the preset defaults; list-valued sweep
parameters expand into the cartesian product of campaign points.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .analysis import average_weight
from .campaign import (
    CSV_COLUMNS,
    CampaignResult,
    ExperimentConfig,
    run_failure_campaign,
    run_stability_campaign,
)
from .codec import SystemConfig
from .errors import ConfigError, SRKRPError
from .weights import CoefficientDistribution, WeightDistribution, parse_weight_distribution

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1", "fig2_3", "fig4", "fig5", "fig6", "fig7", "custom", "matmul")

# Keys whose values may be lists; each list is a sweep axis, in this order.
SWEEP_KEYS = ("K", "overhead", "extra_computations", "theta", "w_avg", "w_star_avg")

COMMON_DEFAULTS: dict[str, Any] = {
    "K": 64,
    "m": None,
    "n": None,
    "workers": None,
    "stragglers": 8,
    "overhead": 0,
    "extra_computations": 0,
    "theta": None,
    "w_avg": None,
    "w_star_avg": None,
    "udist": None,
    "vdist": None,
    "master_udist": None,
    "master_vdist": None,
    "coeff_dist": "uniform01",
    "norm": "spectral",
    "straggler_mode": "uniform_random_subset",
    "trials_max": 100_000,
    "target_failures": 50,
    "input_dist": "standard_normal",
    "r": 64,
    "s": None,
    "t": None,
    "pairs_per_point": None,
    "a": None,
    "b": None,
}

_THETA_GRID = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]

PRESETS: dict[str, dict[str, Any]] = {
    "fig1": {"w_avg": 9.0},
    "fig2_3": {"K": [64, 256, 1024], "theta": list(_THETA_GRID)},
    "fig4": {"overhead": list(range(17)), "theta": [0.5, 1.0, 1.5, 2.0]},
    "fig5": {"extra_computations": [0, 1, 2], "theta": list(_THETA_GRID)},
    "fig6": {"w_avg": 9.0, "w_star_avg": [16.0, 24.0, 32.0, 40.0, 48.0, 56.0, 64.0], "extra_computations": [0, 1, 2]},
    "fig7": {"theta": [1.0, 1.25, 1.5, 1.75, 2.0], "extra_computations": [0, 1, 2], "trials_max": 1000},
    "custom": {"m": 8, "n": 8, "theta": 1.0},
    "matmul": {"m": 2, "n": 2, "stragglers": 0},
}

_INT_KEYS = {"K", "m", "n", "workers", "stragglers", "overhead", "extra_computations", "trials_max",
             "target_failures", "r", "s", "t", "pairs_per_point"}  # fmt: skip
_FLOAT_KEYS = {"theta", "w_avg", "w_star_avg"}
KNOWN_KEYS = frozenset(COMMON_DEFAULTS)


@dataclass
class RunSpec:
    experiment: str
    overrides: dict[str, Any] = field(default_factory=dict)
    output_path: str | None = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}",
                              key="experiment")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1", key="jobs")
        self.overrides = normalize_overrides(self.overrides)
        if self.output_path is None:
            self.output_path = "C.mtx" if self.experiment == "matmul" else f"{self.experiment}.csv"

    def resolved(self) -> dict[str, Any]:
        params = dict(COMMON_DEFAULTS)
        params.update(PRESETS[self.experiment])
        params.update(self.overrides)
        return params


def _coerce(key: str, value: Any, line: int | None = None) -> Any:
    def one(v):
        if key in _INT_KEYS:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise ValueError
            return int(v)
        if key in _FLOAT_KEYS:
            if isinstance(v, bool):
                raise ValueError
            return float(v)
        if not isinstance(v, str):
            raise ValueError
        return v

    try:
        if isinstance(value, (list, tuple)):
            if key not in SWEEP_KEYS:
                raise ConfigError("only sweep parameters accept lists", key=key, line=line)
            if not value:
                raise ConfigError("empty sweep list", key=key, line=line)
            return [one(v) for v in value]
        if value is None:
            return None
        return one(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r}", key=key, line=line) from None


def normalize_overrides(overrides: dict[str, Any], lines: dict[str, int] | None = None) -> dict[str, Any]:
    out = {}
    for key, value in overrides.items():
        line = (lines or {}).get(key)
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown parameter", key=key, line=line)
        out[key] = _coerce(key, value, line)
    return out


def _load_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", line=int(match.group(1)) if match else None) from None


def parse_config(text: str) -> RunSpec:
    """Parse a TOML run description.

    Top-level keys ``experiment``, ``seed``, ``jobs`` and ``output`` configure
    the run; every other key is a parameter override (optionally grouped in
    an ``[overrides]`` table).
    """
    doc = _load_toml(text)
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        match = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=", raw)
        if match:
            lines.setdefault(match.group(1), lineno)
    nested = doc.pop("overrides", {})
    if not isinstance(nested, dict):
        raise ConfigError("overrides must be a table", key="overrides", line=lines.get("overrides"))
    experiment = doc.pop("experiment", None)
    if experiment is None:
        raise ConfigError("missing experiment name", key="experiment")
    run_keys = {}
    for key in ("seed", "jobs", "output"):
        if key in doc:
            run_keys[key] = doc.pop(key)
    overrides = {**doc, **nested}
    normalized = normalize_overrides(overrides, lines)
    try:
        return RunSpec(
            experiment=str(experiment),
            overrides=normalized,
            output_path=run_keys.get("output"),
            seed=int(run_keys.get("seed", 0)),
            jobs=int(run_keys.get("jobs", 1)),
        )
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            raise ConfigError(exc.reason, key=exc.key, line=lines[exc.key]) from None
        raise


@dataclass(frozen=True)
class CampaignPoint:
    config: ExperimentConfig
    stability: bool = False
    input_dist: CoefficientDistribution = CoefficientDistribution.STANDARD_NORMAL
    experiment: str = "custom"


def _dimensions(params: dict, K: int) -> tuple[int, int]:
    m, n = params["m"], params["n"]
    if m is not None or n is not None:
        if m is None or n is None:
            raise ConfigError("m and n must be given together", key="m" if m is None else "n")
        return m, n
    root = math.isqrt(K)
    if root * root != K:
        raise ConfigError(f"K={K} is not a perfect square; give m and n instead", key="K")
    return root, root


def _dist(spec, fallback_mean: float | None, length: int, key: str) -> WeightDistribution:
    try:
        if spec is not None:
            return parse_weight_distribution(spec, length)
        if fallback_mean is None:
            return WeightDistribution.dense(length)
        return parse_weight_distribution(f"simplest({math.sqrt(fallback_mean)!r})", length)
    except SRKRPError as exc:
        raise ConfigError(str(exc), key=key) from None


def fig1_distribution_pairs(w_avg: float = 9.0, max_pairs: int | None = None):
    """Ternary laws on weights {2, 3, 4} over a 0.05 grid with ``u_avg * v_avg == w_avg``.

    Yields ``(u_probs, v_probs)`` grouped by ascending ``u_avg``; at most
    ``max_pairs`` pairs per ``(u_avg, v_avg)`` point when given.
    """
    laws = {}
    for a in range(21):
        for b in range(21 - a):
            mean20 = 80 - 2 * a - b  # 20 * (4 - 2 alpha - beta)
            laws.setdefault(mean20, []).append({2: a / 20, 3: b / 20, 4: (20 - a - b) / 20})
    target = round(w_avg * 400)
    for mean_u in sorted(laws):
        mean_v, rem = divmod(target, mean_u)
        if rem or mean_v not in laws:
            continue
        pairs = list(itertools.product(laws[mean_u], laws[mean_v]))
        if max_pairs is not None:
            pairs = pairs[:max_pairs]
        yield from pairs


def expand(spec: RunSpec) -> list[CampaignPoint]:
    """All campaign points of a run, in deterministic order."""
    if spec.experiment == "matmul":
        raise ConfigError("matmul is a single multiplication, not a campaign", key="experiment")
    params = spec.resolved()
    axes = [(k, params[k] if isinstance(params[k], list) else [params[k]]) for k in SWEEP_KEYS]
    points = []
    seen = set()
    for combo in itertools.product(*(values for _, values in axes)):
        point = dict(params)
        point.update(zip((k for k, _ in axes), combo))
        if spec.experiment == "fig1" and point["udist"] is None and point["vdist"] is None:
            for u_probs, v_probs in fig1_distribution_pairs(point["w_avg"], params["pairs_per_point"]):
                point_pair = dict(point, udist=u_probs, vdist=v_probs)
                points.append(_build_point(spec, point_pair))
            continue
        if point["extra_computations"] == 0:
            # master distributions are irrelevant without extra computations
            point["w_star_avg"] = None
            point["master_udist"] = point["master_vdist"] = None
        key = tuple((k, repr(v)) for k, v in sorted(point.items()))
        if key in seen:
            continue
        seen.add(key)
        points.append(_build_point(spec, point))
    return points


def _build_point(spec: RunSpec, p: dict) -> CampaignPoint:
    m, n = _dimensions(p, p["K"])
    K = m * n
    w_avg = p["w_avg"]
    theta = p["theta"]
    if w_avg is None and theta is not None:
        w_avg = average_weight(theta, K)
    explicit = p["udist"] is not None and p["vdist"] is not None
    theta_out = theta if p["w_avg"] is None and not explicit else None
    if not explicit and w_avg is not None and not 1.0 <= w_avg <= K:
        raise ConfigError(f"average weight {w_avg!r} outside [1, K={K}]", key="theta" if p["w_avg"] is None else "w_avg")
    udist = _dist(p["udist"], w_avg, m, "udist")
    vdist = _dist(p["vdist"], w_avg, n, "vdist")
    mudist = _dist(p["master_udist"], p["w_star_avg"], m, "master_udist")
    mvdist = _dist(p["master_vdist"], p["w_star_avg"], n, "master_vdist")
    S = p["stragglers"]
    if p["workers"] is not None:
        N = p["workers"]
    else:
        N = K + p["overhead"] + S
    stability = spec.experiment == "fig7"
    r = p["r"]
    s = p["s"] if p["s"] is not None else (r if stability else None)
    t = p["t"] if p["t"] is not None else (r if stability else None)
    try:
        system = SystemConfig(
            m=m,
            n=n,
            workers=N,
            stragglers=S,
            extra=p["extra_computations"],
            worker_udist=udist,
            worker_vdist=vdist,
            master_udist=mudist,
            master_vdist=mvdist,
            coeff_dist=p["coeff_dist"],
            r=r if stability else None,
            s=s,
            t=t,
        )
        config = ExperimentConfig(
            system=system,
            theta=theta_out,
            trials_max=p["trials_max"],
            target_failures=p["target_failures"],
            master_seed=spec.seed,
            straggler_mode=p["straggler_mode"],
            fixed_stragglers=tuple(range(S)),
            norm=p["norm"],
        )
        input_dist = CoefficientDistribution.parse(p["input_dist"])
    except SRKRPError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return CampaignPoint(config, stability, input_dist, spec.experiment)


def run_point(point: CampaignPoint) -> CampaignResult:
    if point.stability:
        result = run_stability_campaign(point.config, point.input_dist)
    else:
        result = run_failure_campaign(point.config)
    result.params["experiment"] = point.experiment
    result.params["u_avg"] = point.config.system.worker_udist.mean()
    result.params["v_avg"] = point.config.system.worker_vdist.mean()
    return result


def run_points(points: list[CampaignPoint], jobs: int = 1) -> list[CampaignResult]:
    """Run every point; up to ``jobs`` points at once, results in point order."""
    if jobs <= 1 or len(points) <= 1:
        results = []
        for i, point in enumerate(points, start=1):
            results.append(run_point(point))
            log.info("point %d/%d done", i, len(points))
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_point, points))


def results_to_csv(results: list[CampaignResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        writer.writerow(res.to_row())
    return buf.getvalue()
