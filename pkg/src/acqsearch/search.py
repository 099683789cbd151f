"""The outer evolutionary loop over acquisition-function programs.

Each iteration samples two programs from one island, builds a prompt, asks
the mutator for a batch of candidates, scores every candidate with full BO
runs on the training functions and inserts the correct ones into the island.
At the end the return rule picks among the top training programs by their
validation score.

All randomness is derived from the master seed with counter-based seeds
``[seed, iteration, stream]`` so that results do not depend on scheduling.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

from . import acquisition
from .acquisition import InvalidProgramError
from .afdsl import DslError, Program
from .database import ProgramsDatabase, ScoredProgram
from .engine import EvaluationTimeout, aggregate_score, run_bo
from .gp import GPNumericalError
from .mutation import MutatorConfig, MutatorConfigError, Prompt, build_prompt, make_mutator
from .objectives import ObjectiveInstance, Transform, make_instance
from .presets import get_preset

logger = logging.getLogger(__name__)

_PAIR, _PROPOSE, _RESET = 0, 1, 2


class SearchConfigError(ValueError):
    """Invalid run configuration; the message starts with the offending field path."""


@dataclass
class SearchConfig:
    train_functions: list
    validation_functions: list = field(default_factory=list)
    n_islands: int = 10
    batch: int = 12
    iterations: int | None = 1000
    time_budget: float | None = None
    trials: int = 30
    percentile: float = 0.2
    reset_interval: int = 500
    seed: int = 0
    mutator: MutatorConfig = field(default_factory=MutatorConfig)
    initial_program: str = "ei"
    candidate_timeout: float | None = 60.0
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.train_functions:
            raise SearchConfigError("train_functions: must not be empty")
        train_ids = {id(f) for f in self.train_functions}
        train_keys = {_instance_key(f) for f in self.train_functions}
        for k, f in enumerate(self.validation_functions):
            if id(f) in train_ids or _instance_key(f) in train_keys:
                raise SearchConfigError(f"validation_functions[{k}]: also a training function")
        if self.iterations is None and self.time_budget is None:
            raise SearchConfigError("iterations: give an iteration count or a time budget")
        if self.iterations is not None and self.iterations < 0:
            raise SearchConfigError("iterations: must be >= 0")
        if self.batch < 1:
            raise SearchConfigError("batch: must be >= 1")
        if self.trials < 1:
            raise SearchConfigError("trials: must be >= 1")
        if not 0 < self.percentile <= 1:
            raise SearchConfigError("percentile: must lie in (0, 1]")


def _instance_key(inst: ObjectiveInstance):
    return (inst.spec, inst.transform, inst.seed)


@dataclass
class SearchReport:
    program: ScoredProgram
    iterations: int
    proposed: int
    correct: int
    incorrect: int
    best_over_time: list = field(default_factory=list)  # (iteration, best aggregate)
    archive_path: str | None = None
    resets: int = 0
    validation_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "program": self.program.program.text,
            "program_id": self.program.id,
            "train_signature": list(self.program.signature),
            "train_aggregate": self.program.aggregate,
            "validation_aggregate": self.validation_score,
            "iterations": self.iterations,
            "proposed": self.proposed,
            "correct": self.correct,
            "incorrect": self.incorrect,
            "resets": self.resets,
            "best_over_time": [list(p) for p in self.best_over_time],
            "archive_path": self.archive_path,
        }


def score_candidate(prog, functions, trials: int = 30, deadline: float | None = None):
    """Signature and aggregate score of `prog`, or None if any run fails.

    `prog` may be a :class:`Program`, DSL text or a builtin AF id.
    """
    functions = list(functions)
    if not functions:
        raise ValueError("no functions to score on")
    try:
        if isinstance(prog, str):
            try:
                prog = acquisition.parse_af_id(prog)
            except ValueError:
                prog = Program.from_text(prog)
        results = [run_bo(inst, prog, trials=trials, seed=j, deadline=deadline)
                   for j, inst in enumerate(functions)]
    except (InvalidProgramError, DslError, EvaluationTimeout, GPNumericalError) as exc:
        logger.debug("candidate rejected: %s", exc)
        return None
    aggregate, signature = aggregate_score(results)
    return tuple(float(s) for s in signature), aggregate


def _initial_program(cfg: SearchConfig) -> Program:
    text = acquisition.DSL_FORMS.get(cfg.initial_program, cfg.initial_program)
    try:
        return Program.from_text(text)
    except DslError as exc:
        raise SearchConfigError(f"initial_program: {exc}") from None


def run_search(cfg: SearchConfig, mutator=None) -> SearchReport:
    """Run the loop until the iteration count or wall-clock budget runs out."""
    start = time.monotonic()
    mutator = mutator or make_mutator(cfg.mutator)
    archive = None
    if cfg.output_dir is not None:
        os.makedirs(cfg.output_dir, exist_ok=True)
        archive = os.path.join(cfg.output_dir, "archive.jsonl")

    seed_prog = _initial_program(cfg)
    scored = score_candidate(seed_prog, cfg.train_functions, cfg.trials)
    if scored is None:
        raise SearchConfigError("initial_program: fails on the training functions")
    seed_entry = ScoredProgram.create(seed_prog, scored[0], birth_iteration=0)
    db = ProgramsDatabase(cfg.n_islands, seed_entry, archive_path=archive)
    cache = {seed_prog.text: scored}

    def evaluate(text):
        if text not in cache:
            deadline = None
            if cfg.candidate_timeout is not None:
                deadline = time.monotonic() + cfg.candidate_timeout
            cache[text] = score_candidate(text, cfg.train_functions, cfg.trials, deadline)
        return cache[text]

    proposed = correct = resets = 0
    best_over_time = [(0, db.best_score)]
    it = 0
    while True:
        if cfg.iterations is not None and it >= cfg.iterations:
            break
        if cfg.time_budget is not None and time.monotonic() - start >= cfg.time_budget:
            break
        it += 1
        low, high, island = db.sample_pair([cfg.seed, it, _PAIR])
        prompt = build_prompt(low, high)
        try:
            texts = mutator.propose(prompt, cfg.batch, [cfg.seed, it, _PROPOSE])[: cfg.batch]
        except MutatorConfigError:
            raise
        except Exception as exc:  # a failed batch only costs this iteration
            logger.error("iteration %d: proposal batch failed: %s", it, exc)
            texts = []
        proposed += len(texts)
        if cfg.workers > 1:
            fresh = [t for t in dict.fromkeys(texts) if t not in cache]
            with concurrent.futures.ThreadPoolExecutor(cfg.workers) as pool:
                for t, res in zip(fresh, pool.map(
                        lambda t: score_candidate(t, cfg.train_functions, cfg.trials), fresh)):
                    cache[t] = res
        parents = tuple(dict.fromkeys(p.id for p in prompt.programs))
        for text in texts:
            res = evaluate(text)
            if res is None:
                continue
            correct += 1
            db.insert(ScoredProgram.create(Program.from_text(text), res[0], it, parents), island)
        if cfg.reset_interval and it % cfg.reset_interval == 0:
            db.reset([cfg.seed, it, _RESET])
            resets += 1
        best_over_time.append((it, db.best_score))
        logger.info("iter=%d proposed=%d correct=%d best_aggregate=%.6f",
                    it, len(texts), sum(cache.get(t) is not None for t in texts), db.best_score)

    validation = None
    if cfg.validation_functions:
        def validation(p):
            res = score_candidate(p.program, cfg.validation_functions, cfg.trials)
            return None if res is None else res[1]
    chosen = db.best_by_rule(validation, cfg.percentile)
    val_score = validation(chosen) if validation is not None else None
    report = SearchReport(chosen, it, proposed, correct, proposed - correct,
                          best_over_time, archive, resets, val_score)
    if cfg.output_dir is not None:
        with open(os.path.join(cfg.output_dir, "report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return report


# ---------------------------------------------------------------------------
# configuration files

_TOP_KEYS = {"preset", "train", "validation", "instance_seed", "n_islands", "batch",
             "iterations", "time_budget", "trials", "percentile", "reset_interval", "seed",
             "mutator", "initial_program", "candidate_timeout", "output_dir", "workers"}


def _function_list(preset, entries, path):
    if not isinstance(entries, list):
        raise SearchConfigError(f"{path}: expected a list")
    out = []
    for k, e in enumerate(entries):
        where = f"{path}[{k}]"
        if isinstance(e, str):
            e = {"objective": e}
        if not isinstance(e, dict) or "objective" not in e:
            raise SearchConfigError(f"{where}: expected an objective id or an object "
                                    "with an 'objective' field")
        obj = e["objective"]
        if obj not in preset.rows:
            raise SearchConfigError(f"{where}.objective: {obj!r} is not a row of preset "
                                    f"{preset.name!r} ({sorted(preset.rows)})")
        spec = preset.rows[obj]
        seed = e.get("seed", k)
        if spec.id == "gp_sample":
            out.append(preset.instance(obj, "train", seed))
            continue
        try:
            transform = Transform(float(e.get("scale", 1.0)),
                                  tuple(e.get("translation", (0.0,) * spec.dim)))
        except (TypeError, ValueError) as exc:
            raise SearchConfigError(f"{where}: {exc}") from None
        if len(transform.translation) != spec.dim:
            raise SearchConfigError(f"{where}.translation: needs {spec.dim} entries")
        out.append(make_instance(spec, transform, seed=seed))
    return out


def _check_type(data, key, types, path=""):
    if key in data and data[key] is not None and not isinstance(data[key], types):
        names = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        raise SearchConfigError(f"{path}{key}: expected {names}, got {data[key]!r}")


def config_from_dict(data: dict) -> SearchConfig:
    """Build a :class:`SearchConfig` from parsed JSON, naming bad fields by path."""
    if not isinstance(data, dict):
        raise SearchConfigError("<root>: expected an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise SearchConfigError(f"{sorted(unknown)[0]}: unknown field")
    for key in ("n_islands", "batch", "iterations", "trials", "reset_interval", "seed",
                "instance_seed", "workers"):
        _check_type(data, key, int)
    for key in ("time_budget", "percentile", "candidate_timeout"):
        _check_type(data, key, (int, float))
    for key in ("preset", "initial_program", "output_dir"):
        _check_type(data, key, str)
    try:
        preset = get_preset(data.get("preset", "ood-bench"))
    except KeyError as exc:
        raise SearchConfigError(f"preset: {exc.args[0]}") from None
    base_seed = data.get("instance_seed", 0)
    if "train" in data:
        train = _function_list(preset, data["train"], "train")
    else:
        train = preset.train_instances(base_seed)
    if "validation" in data:
        validation = _function_list(preset, data["validation"], "validation")
    elif "train" in data:
        validation = []
    else:
        validation = preset.validation_instances(base_seed)

    mut = data.get("mutator", {})
    if not isinstance(mut, dict):
        raise SearchConfigError("mutator: expected an object")
    known = {f.name for f in dataclasses.fields(MutatorConfig)}
    bad = set(mut) - known
    if bad:
        raise SearchConfigError(f"mutator.{sorted(bad)[0]}: unknown field")
    for key in ("samples_per_prompt", "retries", "max_tokens", "max_in_flight"):
        _check_type(mut, key, int, "mutator.")
    for key in ("temperature", "timeout"):
        _check_type(mut, key, (int, float), "mutator.")
    try:
        mutator = MutatorConfig(**mut)
    except ValueError as exc:
        raise SearchConfigError(f"mutator: {exc}") from None

    kwargs = {k: data[k] for k in ("n_islands", "iterations", "time_budget", "percentile",
                                   "reset_interval", "seed", "initial_program",
                                   "candidate_timeout", "output_dir", "workers") if k in data}
    kwargs["batch"] = data.get("batch", mutator.samples_per_prompt)
    kwargs["trials"] = data.get("trials", preset.trials)
    if "n_islands" in kwargs and (kwargs["n_islands"] < 2 or kwargs["n_islands"] % 2):
        raise SearchConfigError("n_islands: must be an even number >= 2")
    cfg = SearchConfig(train, validation, mutator=mutator, **kwargs)
    _initial_program(cfg)
    return cfg


def load_config(path) -> SearchConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SearchConfigError(f"<root>: not valid JSON ({exc})") from None
    return config_from_dict(data)
