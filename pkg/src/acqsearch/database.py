"""Island-model programs database.

Programs live in islands; inside an island they are grouped into clusters of
identical score signatures.  Sampling picks an island uniformly, a cluster by
a softmax over cluster scores, and a program inside the cluster by a softmax
that favours short programs.  A reset empties the worse half of the islands
and reseeds each from a best program of the survivors.

The store is mutated by a single owner; :meth:`ProgramsDatabase.snapshot`
gives an independent copy for concurrent readers.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .afdsl import Program

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScoredProgram:
    program: Program
    signature: tuple[float, ...]
    aggregate: float
    birth_iteration: int = 0
    parent_ids: tuple[str, ...] = ()

    @classmethod
    def create(cls, program: Program, signature, birth_iteration=0, parent_ids=()):
        sig = tuple(float(s) for s in signature)
        if not sig:
            raise ValueError("empty signature")
        return cls(program, sig, float(np.mean(sig)), birth_iteration, tuple(parent_ids))

    @property
    def id(self) -> str:
        return self.program.id

    @property
    def length(self) -> int:
        return self.program.length


@dataclass
class Island:
    clusters: dict[tuple[float, ...], list[ScoredProgram]] = field(default_factory=dict)

    def programs(self):
        for members in self.clusters.values():
            yield from members

    def best(self) -> ScoredProgram | None:
        best = None
        for p in self.programs():
            if best is None or p.aggregate > best.aggregate:
                best = p
        return best

    @property
    def best_score(self) -> float:
        b = self.best()
        return -np.inf if b is None else b.aggregate

    def add(self, prog: ScoredProgram) -> None:
        self.clusters.setdefault(prog.signature, []).append(prog)

    def __len__(self):
        return sum(len(m) for m in self.clusters.values())


def _softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(logits, dtype=float) / temperature
    z = z - np.max(z)
    p = np.exp(z)
    return p / p.sum()


class ProgramsDatabase:
    def __init__(self, n_islands: int, seed_program: ScoredProgram,
                 score_temperature: float = 0.1, length_temperature: float = 1.0,
                 archive_path=None):
        if n_islands < 2 or n_islands % 2:
            raise ValueError("the number of islands must be an even number >= 2")
        self.score_temperature = score_temperature
        self.length_temperature = length_temperature
        self.islands = [Island() for _ in range(n_islands)]
        self.archive_path = archive_path
        if archive_path is not None:
            open(archive_path, "w").close()
        for i, island in enumerate(self.islands):
            island.add(seed_program)
            self._archive("insert", seed_program, i)

    # -- archive ----------------------------------------------------------

    def _archive(self, event: str, prog: ScoredProgram, island: int) -> None:
        if self.archive_path is None:
            return
        record = {
            "event": event,
            "id": prog.id,
            "dsl_text": prog.program.text,
            "signature": list(prog.signature),
            "aggregate": prog.aggregate,
            "island": island,
            "birth_iteration": prog.birth_iteration,
            "parent_ids": list(prog.parent_ids),
        }
        with open(self.archive_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    @classmethod
    def replay(cls, archive_path, n_islands: int | None = None, **kwargs) -> "ProgramsDatabase":
        """Rebuild a store from its archive (inserts and reset reseeds)."""
        with open(archive_path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records:
            raise ValueError("empty archive")
        n = n_islands or 1 + max(r["island"] for r in records)
        db = cls.__new__(cls)
        db.score_temperature = kwargs.get("score_temperature", 0.1)
        db.length_temperature = kwargs.get("length_temperature", 1.0)
        db.islands = [Island() for _ in range(n)]
        db.archive_path = None
        for r in records:
            prog = ScoredProgram(Program.from_text(r["dsl_text"]), tuple(r["signature"]),
                                 r["aggregate"], r["birth_iteration"], tuple(r["parent_ids"]))
            if r["event"] == "reset":
                db.islands[r["island"]] = Island()
            db.islands[r["island"]].add(prog)
        return db

    # -- queries ----------------------------------------------------------

    def __len__(self):
        return sum(len(i) for i in self.islands)

    def all_programs(self) -> list[ScoredProgram]:
        return [p for island in self.islands for p in island.programs()]

    def best(self) -> ScoredProgram:
        return max((i.best() for i in self.islands if len(i)), key=lambda p: p.aggregate)

    @property
    def best_score(self) -> float:
        return max(i.best_score for i in self.islands)

    def snapshot(self) -> "ProgramsDatabase":
        snap = copy.copy(self)
        snap.islands = [Island({k: list(v) for k, v in i.clusters.items()})
                        for i in self.islands]
        snap.archive_path = None
        return snap

    # -- sampling ---------------------------------------------------------

    def _sample_from_island(self, island: Island, rng: np.random.Generator) -> ScoredProgram:
        keys = list(island.clusters)
        scores = np.array([np.mean(k) for k in keys])
        cluster = island.clusters[keys[rng.choice(len(keys), p=_softmax(scores,
                                                                        self.score_temperature))]]
        lengths = np.array([p.length for p in cluster], dtype=float)
        span = lengths.max() - lengths.min()
        normalized = (lengths - lengths.min()) / span if span > 0 else np.zeros_like(lengths)
        probs = _softmax(-normalized, self.length_temperature)
        return cluster[rng.choice(len(cluster), p=probs)]

    def sample_pair(self, rng_seed) -> tuple[ScoredProgram, ScoredProgram, int]:
        rng = np.random.default_rng(rng_seed)
        populated = [i for i, isl in enumerate(self.islands) if len(isl)]
        island_id = populated[rng.integers(len(populated))]
        island = self.islands[island_id]
        return (self._sample_from_island(island, rng),
                self._sample_from_island(island, rng), island_id)

    # -- mutation ---------------------------------------------------------

    def insert(self, prog: ScoredProgram, island: int) -> None:
        if not 0 <= island < len(self.islands):
            raise IndexError(f"unknown island {island}")
        self.islands[island].add(prog)
        self._archive("insert", prog, island)

    def reset(self, rng_seed) -> list[int]:
        """Empty and reseed the worse half of the islands; returns their ids."""
        rng = np.random.default_rng(rng_seed)
        order = sorted(range(len(self.islands)),
                       key=lambda i: (-self.islands[i].best_score, i))
        keep = order[: len(order) // 2]
        drop = order[len(order) // 2:]
        elites = [self.islands[i].best() for i in keep if len(self.islands[i])]
        for i in sorted(drop):
            self.islands[i] = Island()
            founder = elites[rng.integers(len(elites))]
            self.islands[i].add(founder)
            self._archive("reset", founder, i)
        logger.debug("reset islands %s", sorted(drop))
        return sorted(drop)

    # -- return rule ------------------------------------------------------

    def best_by_rule(self, validation_scores=None, percentile: float = 0.2) -> ScoredProgram:
        """Top-percentile programs on training score, best of them on validation.

        `validation_scores` maps program id to validation score, or is a
        callable computing it lazily; without it the training best is returned.
        """
        if not 0 < percentile <= 1:
            raise ValueError("percentile must lie in (0, 1]")
        unique: dict[str, ScoredProgram] = {}
        for p in self.all_programs():
            if p.id not in unique or p.aggregate > unique[p.id].aggregate:
                unique[p.id] = p
        if not unique:
            raise ValueError("empty database")
        progs = list(unique.values())
        if not validation_scores:
            return max(progs, key=lambda p: p.aggregate)
        threshold = np.quantile([p.aggregate for p in progs], 1 - percentile, method="lower")
        qualified = [p for p in progs if p.aggregate >= threshold]
        if callable(validation_scores):
            scored = [(validation_scores(p), p) for p in qualified]
        else:
            scored = [(validation_scores.get(p.id), p) for p in qualified]
        scored = [(v, p) for v, p in scored if v is not None]
        if not scored:
            return max(progs, key=lambda p: p.aggregate)
        return max(scored, key=lambda vp: vp[0])[1]
