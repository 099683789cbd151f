"""Experiment presets: the hyperparameter tables and train/validation/test splits.

A preset maps an experiment name to its table rows (domain, grid size, GP
hyperparameters) plus the recipe for generating training, validation and
test instances.  Instance seeds are small integers; the transform of an
instance is a pure function of (role, instance seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .gp import GpHyperparams
from .objectives import (
    ObjectiveInstance,
    ObjectiveSpec,
    Transform,
    make_instance,
    sample_gp_objective,
    sobol_grid,
)

ROLE_CODES = {"train": 1, "validation": 2, "test": 3}


@dataclass(frozen=True)
class TransformRanges:
    scale: tuple[float, float]
    translation: tuple[float, float]

    def sample(self, dim: int, rng: np.random.Generator) -> Transform:
        scale = float(rng.uniform(*self.scale))
        shift = rng.uniform(*self.translation, size=dim)
        return Transform(scale, tuple(shift))


ID_RANGES = TransformRanges((0.9, 1.1), (-0.1, 0.1))
FEW_SHOT_TEST_RANGES = TransformRanges((0.7, 1.3), (-0.3, 0.3))


def _hp(lengthscale, signal_variance, noise_variance=1e-5):
    return GpHyperparams.from_lengthscale(lengthscale, signal_variance, noise_variance)


def _row(obj_id, dim, domain, n, lengthscale, sf2, noise=1e-5):
    return ObjectiveSpec(obj_id, dim, domain, n, _hp(lengthscale, sf2, noise))


_UNIT2 = ((0.0, 1.0),) * 2
_UNIT3 = ((0.0, 1.0),) * 3

OOD_ROWS = {
    "ackley1d": _row("ackley1d", 1, ((-4, 4),), 1000, 0.21, 28.19),
    "levy1d": _row("levy1d", 1, ((-10, 10),), 1000, 1.05, 83.32),
    "schwefel1d": _row("schwefel1d", 1, ((-500, 500),), 1000, 18.46, 76868.65),
    "rosenbrock1d": _row("rosenbrock1d", 1, ((-5, 10),), 1000, 1.20, 87328.20),
    "sphere1d": _row("sphere1d", 1, ((-5, 5),), 1000, 18.46, 924202.43),
    "styblinski_tang1d": _row("styblinski_tang1d", 1, ((-5, 5),), 1000, 7.34, 119522207.86),
    "weierstrass1d": _row("weierstrass1d", 1, ((-0.5, 0.5),), 1000, 0.01, 0.39),
    "beale": _row("beale", 2, ((-4, 5),) * 2, 10000, 0.46, 546837.32),
    "branin": _row("branin", 2, ((-5, 10), (0, 15)), 10000, 4.65, 155233.52),
    "michalewicz": _row("michalewicz", 2, ((0, np.pi),) * 2, 10000, 0.22, 0.10),
    "goldstein_price": _row("goldstein_price", 2, ((-2, 2),) * 2, 10000, 0.27, 117903.96),
    "hartmann3": _row("hartmann3", 3, _UNIT3, 1728, [0.716, 0.298, 0.186], 0.83, 1.688e-11),
    "hartmann6": _row("hartmann6", 6, ((0, 1),) * 6, 729, 1.0, 1.0),
}

ID_ROWS = {
    "branin": _row("branin", 2, _UNIT2, 961, [0.235, 0.578], 2.0, 8.9e-16),
    "goldstein_price": _row("goldstein_price", 2, _UNIT2, 961, [0.130, 0.07], 0.616, 1e-6),
    "hartmann3": _row("hartmann3", 3, _UNIT3, 1728, [0.716, 0.298, 0.186], 0.83, 1.688e-11),
}


@dataclass(frozen=True)
class Preset:
    """Recipe for one experiment.

    ``train``/``validation``/``test`` list objective ids (keys of ``rows``).
    When ``n_train`` is 0 each training id contributes one untransformed
    instance, otherwise ``n_train`` instances are spread over the ids with
    transforms drawn from ``train_ranges``.  Test instances are always drawn
    from ``test_ranges``, except that instance seed 0 is the untransformed
    function when ``identity_first_test`` is set.
    """

    name: str
    rows: dict[str, ObjectiveSpec]
    train: tuple[str, ...]
    validation: tuple[str, ...] = ()
    test: tuple[str, ...] = ()
    n_train: int = 0
    n_validation: int = 0
    train_ranges: TransformRanges = ID_RANGES
    test_ranges: TransformRanges = ID_RANGES
    identity_first_test: bool = False
    trials: int = 30
    gp_lengthscale_range: tuple[float, float] | None = None
    description: str = ""

    def instance(self, obj_id: str, role: str, instance_seed: int) -> ObjectiveInstance:
        spec = self.rows[obj_id]
        rng = np.random.default_rng([ROLE_CODES[role], instance_seed, _stable_hash(obj_id)])
        if spec.id == "gp_sample":
            grid = _grid_cache(spec)
            gp_seed = int(rng.integers(2**63 - 1))
            inst = sample_gp_objective(
                spec.dim, self.gp_lengthscale_range, gp_seed, grid,
                signal_variance=spec.gp_hyperparams.signal_variance,
                noise_variance=spec.gp_hyperparams.noise_variance, domain=spec.domain)
            return inst
        if role == "test":
            if self.identity_first_test and instance_seed == 0:
                transform = Transform.identity(spec.dim)
            else:
                transform = self.test_ranges.sample(spec.dim, rng)
        else:
            n = self.n_train if role == "train" else self.n_validation
            if n == 0:
                transform = Transform.identity(spec.dim)
            else:
                transform = self.train_ranges.sample(spec.dim, rng)
        return make_instance(spec, transform, seed=instance_seed)

    def _split(self, ids, n, role, base_seed):
        if not ids:
            return []
        if n == 0:
            return [(i, self.instance(i, role, base_seed)) for i in ids]
        return [(ids[k % len(ids)], self.instance(ids[k % len(ids)], role, base_seed + k))
                for k in range(n)]

    def train_instances(self, seed: int = 0) -> list[ObjectiveInstance]:
        return [inst for _, inst in self._split(self.train, self.n_train, "train", seed)]

    def validation_instances(self, seed: int = 0) -> list[ObjectiveInstance]:
        return [inst for _, inst in
                self._split(self.validation, self.n_validation, "validation", seed)]

    def test_instances(self, n_instances: int, seed: int = 0):
        """Yield (objective id, instance seed, instance) for every test function."""
        for obj_id in self.test:
            for k in range(n_instances):
                yield obj_id, seed + k, self.instance(obj_id, "test", seed + k)


def _stable_hash(text: str) -> int:
    return int.from_bytes(text.encode(), "little") % (2**31)


_GRIDS: dict = {}


def _grid_cache(spec: ObjectiveSpec) -> np.ndarray:
    key = (spec.domain, spec.grid_size)
    if key not in _GRIDS:
        _GRIDS[key] = sobol_grid(spec.domain, spec.grid_size)
    return _GRIDS[key]


OOD_TEST = ("sphere1d", "styblinski_tang1d", "weierstrass1d", "beale", "branin",
            "michalewicz", "goldstein_price", "hartmann3", "hartmann6")


def _id_preset(name, obj_id):
    return Preset(name, {obj_id: ID_ROWS[obj_id]}, train=(obj_id,), validation=(obj_id,),
                  test=(obj_id,), n_train=20, n_validation=5,
                  description=f"{obj_id} on the unit cube, scaled and translated instances")


def _gp_rows(dim, grid_size):
    hp = GpHyperparams((0.1,), 1.0, 1e-20)
    return {"gp_sample": ObjectiveSpec("gp_sample", dim, ((0.0, 1.0),) * dim, grid_size, hp)}


PRESETS: dict[str, Preset] = {
    "ood-bench": Preset(
        "ood-bench", OOD_ROWS, train=("ackley1d", "levy1d", "schwefel1d"),
        validation=("rosenbrock1d",), test=OOD_TEST, identity_first_test=True,
        description="train on 1D Ackley/Levy/Schwefel, validate on Rosenbrock, "
                    "test on nine benchmarks"),
    "id-bench-branin": _id_preset("id-bench-branin", "branin"),
    "id-bench-gprice": _id_preset("id-bench-gprice", "goldstein_price"),
    "id-bench-hartmann3": _id_preset("id-bench-hartmann3", "hartmann3"),
    "gps-id": Preset(
        "gps-id", _gp_rows(3, 1728), train=("gp_sample",), test=("gp_sample",),
        n_train=25, trials=20, gp_lengthscale_range=(0.05, 0.5),
        description="functions drawn from a 3D RBF GP prior"),
    "gps-id-d4": Preset(
        "gps-id-d4", _gp_rows(4, 1728), train=("gp_sample",), test=("gp_sample",),
        n_train=25, trials=20, gp_lengthscale_range=(0.05, 0.5),
        description="test-only 4D variant of gps-id"),
    "few-shot-ackley2d": Preset(
        "few-shot-ackley2d",
        {"ackley2d": _row("ackley2d", 2, _UNIT2, 1000, [0.07, 0.018], 1.0, 8.9e-16)},
        train=("ackley2d",), test=("ackley2d",), n_train=5,
        test_ranges=FEW_SHOT_TEST_RANGES,
        description="five Ackley instances for adaptation, wider test transforms"),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_user_presets(path) -> None:
    """Override or add table rows from a JSON file.

    The file maps preset names to ``{"rows": {id: {dim, domain, grid_size,
    lengthscale, signal_variance, noise_variance}}}``; unspecified preset
    fields are inherited from the builtin of the same name.
    """
    with open(path) as fh:
        data = json.load(fh)
    for name, body in data.items():
        base = PRESETS.get(name)
        rows = dict(base.rows) if base else {}
        for obj_id, r in body.get("rows", {}).items():
            rows[obj_id] = _row(r.get("id", obj_id), r["dim"], r["domain"], r["grid_size"],
                                r["lengthscale"], r["signal_variance"],
                                r.get("noise_variance", 1e-5))
        kwargs = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in body.items() if k != "rows"}
        for key in ("train_ranges", "test_ranges"):
            if key in body:
                kwargs[key] = TransformRanges(tuple(body[key]["scale"]),
                                              tuple(body[key]["translation"]))
        if base is None:
            PRESETS[name] = Preset(name, rows, **kwargs)
        else:
            fields = {**base.__dict__, **kwargs, "rows": rows}
            PRESETS[name] = Preset(**fields)
