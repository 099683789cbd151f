import time

import numpy as np
import pytest

from acqsearch.acquisition import DSL_FORMS, InvalidProgramError
from acqsearch.afdsl import Program
from acqsearch.engine import (
    BoRunResult,
    EvaluationTimeout,
    aggregate_score,
    read_curves,
    regret_curve,
    run_bo,
    score,
    summarize,
    write_curves,
    write_summary,
)
from acqsearch.gp import GpHyperparams
from acqsearch.objectives import make_instance, make_table_objective
from acqsearch.presets import OOD_ROWS


def _scripted(indices):
    it = iter(indices)
    return lambda inp: next(it)


def _table(values, noise=1e-5):
    grid = np.linspace(0, 1, len(values))[:, None]
    return make_table_objective(values, grid, GpHyperparams((0.3,), 1.0, noise))


def test_score_three_reference_cases():
    perfect = BoRunResult(found_min=0.0, true_min=0.0, initial_min_y=10.0, fraction_steps=0.0)
    stuck = BoRunResult(found_min=10.0, true_min=0.0, initial_min_y=10.0, fraction_steps=1.0)
    half = BoRunResult(found_min=0.0, true_min=0.0, initial_min_y=10.0, fraction_steps=0.5)
    assert score(perfect) == 2.0
    assert score(stuck) == 0.0
    assert score(half) == 1.5


def test_score_bounds_under_fuzzing():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        true = rng.normal()
        init = true + rng.uniform(1e-3, 10)
        found = rng.uniform(true, init)
        frac = 1.0 if rng.random() < 0.5 else rng.integers(0, 31) / 30
        s = score(BoRunResult(found, true, init, frac))
        assert 0.0 <= s <= 2.0


def test_score_undefined_without_initial_gap():
    with pytest.raises(ValueError):
        score(BoRunResult(1.0, 1.0, 1.0, 0.0))


def test_run_bo_trajectory_and_fraction():
    inst = _table([5.0, 3.0, 1.0, 4.0, 2.0])
    res = run_bo(inst, _scripted([1, 2, 3, 4]), trials=4)
    assert res.queries == (1, 2, 3, 4)
    assert res.trajectory == (5.0, 3.0, 1.0, 1.0, 1.0)
    # minimum first seen at the second query: (2 - 1) / 4 of the budget used
    assert res.fraction_steps == 0.25
    assert score(res) == pytest.approx(1.75)
    np.testing.assert_array_equal(regret_curve(res), [1.0, 0.5, 0.0, 0.0, 0.0])


def test_run_bo_missed_optimum_uses_full_budget():
    inst = _table([5.0, 3.0, 1.0, 4.0, 2.0])
    res = run_bo(inst, _scripted([1, 3, 4]), trials=3)
    assert res.found_min == 2.0 and res.fraction_steps == 1.0
    assert score(res) == pytest.approx(1 - 1 / 4)


def test_reselection_is_invalid_without_noise():
    inst = _table([5.0, 3.0, 1.0], noise=0.0)
    with pytest.raises(InvalidProgramError):
        run_bo(inst, _scripted([1, 1]), trials=2)
    noisy = _table([5.0, 3.0, 1.0], noise=1e-5)
    assert run_bo(noisy, _scripted([1, 1]), trials=2).found_min == 3.0


def test_out_of_range_selection_is_invalid():
    with pytest.raises(InvalidProgramError):
        run_bo(_table([5.0, 3.0, 1.0]), _scripted([7]), trials=1)


def test_deadline():
    inst = make_instance(OOD_ROWS["sphere1d"])
    with pytest.raises(EvaluationTimeout):
        run_bo(inst, "ei", trials=5, deadline=time.monotonic() - 1)


def test_dsl_ei_reproduces_native_ei_run():
    for row in ("sphere1d", "styblinski_tang1d", "ackley1d"):
        inst = make_instance(OOD_ROWS[row])
        native = run_bo(inst, "ei", trials=30)
        dsl = run_bo(inst, Program.from_text(DSL_FORMS["ei"]), trials=30)
        assert native.queries == dsl.queries
        assert score(native) == score(dsl)


def test_random_policy_is_seeded_and_never_repeats():
    inst = _table(np.arange(12.0)[::-1])
    a = run_bo(inst, "random", trials=11, seed=3)
    b = run_bo(inst, "random", trials=11, seed=3)
    assert a.queries == b.queries
    assert sorted(a.queries) == list(range(1, 12))
    assert a.found_min == 0.0


def test_regret_curve_is_monotone_and_clamped():
    inst = make_instance(OOD_ROWS["levy1d"])
    curve = regret_curve(run_bo(inst, "ucb", trials=20))
    assert curve[0] == 1.0
    assert np.all(np.diff(curve) <= 0)
    assert np.all((curve >= 0) & (curve <= 1))


def test_aggregate_is_mean_of_signature():
    rs = [BoRunResult(0.0, 0.0, 1.0, 0.0), BoRunResult(1.0, 0.0, 1.0, 1.0)]
    agg, sig = aggregate_score(rs)
    np.testing.assert_array_equal(sig, [2.0, 0.0])
    assert agg == 1.0
    with pytest.raises(ValueError):
        aggregate_score([])


def test_curves_csv_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    rows = [("exp:f", "ei", s, np.sort(rng.random(6))[::-1]) for s in range(3)]
    rows.append(("exp:g", "random", 0, np.array([1.0, 1 / 3, 0.1 + 0.2])))
    path = tmp_path / "curves.csv"
    write_curves(path, rows)
    back = read_curves(path)
    for exp, af, seed, curve in rows:
        np.testing.assert_array_equal(back[(exp, af, seed)], curve)


def test_summary_mean_and_half_std(tmp_path):
    curves = {("p:a", "ei", 0): np.array([1.0, 0.5]), ("p:b", "ei", 0): np.array([1.0, 0.1]),
              ("p:a", "random", 0): np.array([1.0, 0.2])}
    summary = summarize(curves)
    row = [r for r in summary if r[1] == "ei" and r[2] == 1][0]
    assert row[0] == "p"
    assert row[3] == pytest.approx(0.3)
    assert row[4] == pytest.approx(np.std([0.5, 0.1]) / 2)
    assert row[5] == 2
    write_summary(tmp_path / "s.csv", summary)
    assert (tmp_path / "s.csv").read_text().startswith("experiment,af,trial,mean,half_std,n")


def test_read_curves_rejects_missing_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_curves(p)
