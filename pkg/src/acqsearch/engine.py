"""Grid-based BO evaluation loop, fitness score and regret curves.

Convergence is detected with exact float equality between the best observed
value and the grid minimum.  That is sound here: both come from the same
cached grid values, so hitting the argmin grid index reproduces the minimum
bit for bit.
"""

from __future__ import annotations

import csv
import time
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import acquisition
from .acquisition import AfInput, InvalidProgramError
from .afdsl import Program
from .gp import append_observation, fit_predict
from .objectives import ObjectiveInstance, initial_design

CURVE_COLUMNS = ("experiment", "af", "instance_seed", "trial", "normalized_regret")
SUMMARY_COLUMNS = ("experiment", "af", "trial", "mean", "half_std", "n")


class EvaluationTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class BoRunResult:
    found_min: float
    true_min: float
    initial_min_y: float
    fraction_steps: float
    trajectory: tuple[float, ...] = ()
    queries: tuple[int, ...] = ()


def resolve_policy(af):
    """Turn an AF id, a :class:`Program`, DSL text or a callable into ``f(inp, seed, seen)``."""
    if isinstance(af, Program):
        return lambda inp, seed, seen: af.select(inp)
    if isinstance(af, str):
        try:
            af_id = acquisition.parse_af_id(af)
        except ValueError:
            prog = Program.from_text(af)
            return lambda inp, seed, seen: prog.select(inp)
        return lambda inp, seed, seen: acquisition.select(af_id, inp, seed, seen)
    if callable(af):
        return lambda inp, seed, seen: af(inp)
    raise TypeError(f"cannot use {af!r} as an acquisition function")


def run_bo(inst: ObjectiveInstance, af, trials: int = 30, seed: int = 0,
           beta: float = 1.0, deadline: float | None = None) -> BoRunResult:
    """Run `trials` BO steps from the worst grid point and report what was found.

    Raises :class:`InvalidProgramError` when the policy fails or re-selects an
    observed point under a noiseless likelihood, and
    :class:`~acqsearch.gp.GPNumericalError` when the surrogate cannot be fit.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    policy = resolve_policy(af)
    hp = inst.hp
    grid, values = inst.grid, inst.values
    n = values.shape[0]

    data = initial_design(inst)
    seen = np.zeros(n, dtype=bool)
    seen[inst.initial_index] = True
    ys = [float(data.outputs[0])]
    found_min = initial_min_y = ys[0]
    true_min = inst.true_min
    trajectory = [found_min]
    queries = []

    post = fit_predict(data, grid, hp)
    for t in range(trials):
        if deadline is not None and time.monotonic() > deadline:
            raise EvaluationTimeout(f"evaluation exceeded its deadline at trial {t}")
        inp = AfInput(post.mean, post.variance, found_min, beta)
        idx = policy(inp, [seed, t], seen)
        if not isinstance(idx, (int, np.integer)) or not 0 <= idx < n:
            raise InvalidProgramError(f"selected index {idx!r} is not a grid index")
        idx = int(idx)
        if seen[idx] and hp.noise_variance == 0:
            raise InvalidProgramError("re-selected an observed point with zero observation noise")
        y = float(values[idx])
        data = append_observation(data, grid[idx], y, hp.noise_variance)
        seen[idx] = True
        ys.append(y)
        queries.append(idx)
        found_min = min(found_min, y)
        trajectory.append(found_min)
        if t + 1 < trials:
            post = fit_predict(data, grid, hp)

    if found_min == true_min:
        fraction = (int(np.argmin(ys)) - 1) / trials
    else:
        fraction = 1.0
    return BoRunResult(found_min, true_min, initial_min_y, fraction,
                       tuple(trajectory), tuple(queries))


def score(result: BoRunResult) -> float:
    """Closeness-to-optimum term plus speed term; lies in [0, 2]."""
    gap = result.initial_min_y - result.true_min
    if gap == 0:
        raise ValueError("initial design already holds the optimum; score is undefined")
    closeness = 1.0 - abs(result.found_min - result.true_min) / gap
    speed = 1.0 - result.fraction_steps
    return closeness + speed


def aggregate_score(results) -> tuple[float, np.ndarray]:
    """Mean score over functions and the per-function score vector."""
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    signature = np.array([score(r) for r in results])
    return float(np.mean(signature)), signature


def regret_curve(result: BoRunResult) -> np.ndarray:
    """Best-so-far regret divided by the initial regret, clamped to [0, 1]."""
    if not result.trajectory:
        raise ValueError("result has no trajectory")
    gap = result.initial_min_y - result.true_min
    if gap == 0:
        raise ValueError("zero initial regret")
    traj = np.asarray(result.trajectory, dtype=float)
    return np.clip((traj - result.true_min) / gap, 0.0, 1.0)


# ---------------------------------------------------------------------------
# CSV export


def write_curves(path, rows) -> None:
    """rows: iterables of (experiment, af, instance_seed, regret vector)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for experiment, af, instance_seed, curve in rows:
            for t, r in enumerate(curve):
                w.writerow([experiment, af, instance_seed, t, f"{float(r):.17g}"])


def read_curves(path) -> dict[tuple[str, str, int], np.ndarray]:
    """Curves keyed by (experiment, af, instance_seed), in file order."""
    acc: dict = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CURVE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            key = (row["experiment"], row["af"], int(row["instance_seed"]))
            acc[key][int(row["trial"])] = float(row["normalized_regret"])
    return {k: np.array([v[t] for t in sorted(v)]) for k, v in acc.items()}


def summarize(curves) -> list[tuple[str, str, int, float, float, int]]:
    """Mean and half standard deviation per (experiment group, af, trial).

    The experiment group is the part of the experiment label before ``:`` so
    that per-function labels such as ``ood-bench:branin`` average together.
    """
    groups: dict = defaultdict(list)
    for (experiment, af, _), curve in curves.items():
        groups[(experiment.split(":")[0], af)].append(curve)
    out = []
    for (experiment, af), cs in groups.items():
        length = min(len(c) for c in cs)
        stack = np.vstack([c[:length] for c in cs])
        mean = stack.mean(axis=0)
        half_std = stack.std(axis=0) / 2
        for t in range(length):
            out.append((experiment, af, t, float(mean[t]), float(half_std[t]), stack.shape[0]))
    return out


def write_summary(path, summary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for experiment, af, t, mean, half_std, n in summary:
            w.writerow([experiment, af, t, f"{mean:.17g}", f"{half_std:.17g}", n])
