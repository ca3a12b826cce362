import csv
import io
import math

import pytest

from srkrp.errors import ConfigError
from srkrp.experiments import (
    COMMON_DEFAULTS,
    PRESETS,
    RunSpec,
    expand,
    fig1_distribution_pairs,
    parse_config,
    results_to_csv,
    run_points,
)


def test_empty_overrides_give_preset_defaults():
    spec = parse_config('experiment = "fig5"\n')
    assert spec.overrides == {}
    assert spec.resolved() == {**COMMON_DEFAULTS, **PRESETS["fig5"]}
    assert spec.output_path == "fig5.csv" and spec.seed == 0 and spec.jobs == 1


def test_list_override_expands_to_sweep():
    spec = parse_config('experiment = "custom"\ntheta = [0.5, 1.0]\n')
    points = expand(spec)
    assert len(points) == 2
    assert [p.config.theta for p in points] == [0.5, 1.0]
    assert points[0].config.system.w_avg == pytest.approx(0.5 * math.log(64))


def test_simplest_udist_override():
    spec = parse_config('experiment = "custom"\n[overrides]\nudist = "simplest(3)"\nvdist = "dense"\n')
    system = expand(spec)[0].config.system
    assert dict(system.worker_udist.probs) == {3: 1.0}
    assert system.worker_vdist.support == (8,)


@pytest.mark.parametrize(
    "text, key, line",
    [
        ('experiment = "fig1"\nseed = 1\nbogus = 3\n', "bogus", 3),
        ('experiment = "fig1"\n\nextra_computations = "two"\n', "extra_computations", 3),
        ('experiment = "fig1"\nstragglers = [1, 2]\n', "stragglers", 2),
        ('experiment = "fig9"\n', "experiment", 1),
        ('experiment = "fig1"\njobs = 0\n', "jobs", 2),
        ("seed = 3\n", "experiment", None),
    ],
)
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert info.value.line == line
    if line is not None:
        assert f"line {line}" in str(info.value)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config('experiment = "fig1"\ntheta = [1.0,\nseed = \n')
    assert info.value.line is not None


def test_fig1_pairs_hold_the_average_weight():
    pairs = list(fig1_distribution_pairs(9.0))
    assert pairs
    for u, v in pairs:
        u_avg = sum(k * p for k, p in u.items())
        v_avg = sum(k * p for k, p in v.items())
        assert u_avg * v_avg == pytest.approx(9.0)
        assert set(u) == set(v) == {2, 3, 4}
    means = {round(sum(k * p for k, p in u.items()), 10) for u, _ in pairs}
    assert {2.25, 3.0, 4.0} <= means
    # 11 laws on {2,3,4} have mean 3 on this grid
    assert sum(1 for u, _ in pairs if abs(sum(k * p for k, p in u.items()) - 3) < 1e-12) == 121
    assert len(list(fig1_distribution_pairs(9.0, max_pairs=2))) < len(pairs)


def test_sweep_sizes():
    assert len(expand(RunSpec("fig5"))) == 21
    # w_star_avg is irrelevant without extra computations, so R = 0 collapses to one point
    assert len(expand(RunSpec("fig6"))) == 1 + 7 + 7
    assert len(expand(RunSpec("fig4", {"theta": 1.0}))) == 17


def test_point_parameters():
    points = expand(RunSpec("fig5", {"theta": 1.0, "extra_computations": 2}))
    (point,) = points
    system = point.config.system
    assert (system.m, system.n, system.workers, system.stragglers, system.extra) == (8, 8, 72, 8, 2)
    assert system.master_udist.support == (8,)
    assert point.config.target_failures == 50 and point.config.trials_max == 100_000
    fig7 = expand(RunSpec("fig7", {"theta": 2.0, "extra_computations": 1}))[0]
    assert fig7.stability and fig7.config.system.block_shape() == (8, 8)


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"K": 60}, "K"),
        ({"theta": 40.0}, "theta"),
        ({"m": 4}, "n"),
        ({"udist": "9:1.0"}, "udist"),
    ],
)
def test_bad_points(overrides, key):
    with pytest.raises(ConfigError) as info:
        expand(RunSpec("fig5", {"extra_computations": 0, "theta": 1.0, **overrides}))
    assert info.value.key == key


def test_matmul_is_not_a_campaign():
    with pytest.raises(ConfigError):
        expand(RunSpec("matmul"))


def _small(overrides=None, seed=4):
    base = {"m": 2, "n": 2, "udist": "simplest(1.5)", "vdist": "simplest(1)", "trials_max": 300,
            "target_failures": 40, "stragglers": 2}
    return RunSpec("custom", {**base, **(overrides or {})}, seed=seed)


def test_csv_rows_are_enough_to_rerun_a_point():
    text = results_to_csv(run_points(expand(_small({"extra_computations": 1, "w_star_avg": 2.0}))))
    (row,) = csv.DictReader(io.StringIO(text))
    rerun = RunSpec(
        row["experiment"],
        {
            "m": int(row["m"]),
            "n": int(row["n"]),
            "workers": int(row["N"]),
            "stragglers": int(row["S"]),
            "extra_computations": int(row["R"]),
            "udist": row["udist"],
            "vdist": row["vdist"],
            "master_udist": row["master_udist"],
            "master_vdist": row["master_vdist"],
            "coeff_dist": row["coeff_dist"],
            "straggler_mode": row["straggler_mode"],
            "trials_max": int(row["trials_max"]),
            "target_failures": int(row["target_failures"]),
        },
        seed=int(row["seed"]),
    )
    (again,) = csv.DictReader(io.StringIO(results_to_csv(run_points(expand(rerun)))))
    assert again == row


def test_parallel_points_match_serial():
    spec = _small({"extra_computations": [0, 1]})
    points = expand(spec)
    assert results_to_csv(run_points(points, jobs=2)) == results_to_csv(run_points(points, jobs=1))
