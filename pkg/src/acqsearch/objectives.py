"""Benchmark objectives, Sobol evaluation grids and objective instances.

Every benchmark is written for a batch of points of shape (n, d) and
returns an (n,) array.  An :class:`ObjectiveInstance` pins a benchmark to a
box domain, an output scale / input translation, and a cached Sobol grid
with its function values; the BO engine only ever looks at grid points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .gp import GpHyperparams, Dataset, kernel_matrix, _factorize

# ---------------------------------------------------------------------------
# benchmark functions


def ackley(x):
    a, b, c = 20.0, 0.2, 2 * np.pi
    d = x.shape[1]
    s1 = np.sum(x**2, axis=1) / d
    s2 = np.sum(np.cos(c * x), axis=1) / d
    return -a * np.exp(-b * np.sqrt(s1)) - np.exp(s2) + a + np.e


def levy(x):
    w = 1 + (x - 1) / 4
    head = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1) ** 2 * (1 + 10 * np.sin(np.pi * w[:, :-1] + 1) ** 2), axis=1)
    tail = (w[:, -1] - 1) ** 2 * (1 + np.sin(2 * np.pi * w[:, -1]) ** 2)
    return head + mid + tail


def schwefel(x):
    d = x.shape[1]
    return 418.9829 * d - np.sum(x * np.sin(np.sqrt(np.abs(x))), axis=1)


def rosenbrock(x):
    d = x.shape[1]
    if d == 1:
        # the sum over consecutive pairs is empty in 1D; use the 2D function on the diagonal
        t = x[:, 0]
        return 100.0 * (t - t**2) ** 2 + (1 - t) ** 2
    return np.sum(100.0 * (x[:, 1:] - x[:, :-1] ** 2) ** 2 + (1 - x[:, :-1]) ** 2, axis=1)


def sphere(x):
    return np.sum(x**2, axis=1)


def styblinski_tang(x):
    return 0.5 * np.sum(x**4 - 16 * x**2 + 5 * x, axis=1)


def weierstrass(x, a=0.5, b=3.0, k_max=20):
    k = np.arange(k_max + 1)
    ak, bk = a**k, b**k
    d = x.shape[1]
    terms = np.sum(ak * np.cos(2 * np.pi * bk * (x[..., None] + 0.5)), axis=-1)
    return np.sum(terms, axis=1) - d * np.sum(ak * np.cos(np.pi * bk))


def beale(x):
    x1, x2 = x[:, 0], x[:, 1]
    return ((1.5 - x1 + x1 * x2) ** 2
            + (2.25 - x1 + x1 * x2**2) ** 2
            + (2.625 - x1 + x1 * x2**3) ** 2)


def branin(x):
    x1, x2 = x[:, 0], x[:, 1]
    b = 5.1 / (4 * np.pi**2)
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def michalewicz(x, m=10):
    i = np.arange(1, x.shape[1] + 1)
    return -np.sum(np.sin(x) * np.sin(i * x**2 / np.pi) ** (2 * m), axis=1)


def goldstein_price(x):
    x1, x2 = x[:, 0], x[:, 1]
    f1 = 1 + (x1 + x2 + 1) ** 2 * (19 - 14 * x1 + 3 * x1**2 - 14 * x2 + 6 * x1 * x2 + 3 * x2**2)
    f2 = 30 + (2 * x1 - 3 * x2) ** 2 * (
        18 - 32 * x1 + 12 * x1**2 + 48 * x2 - 36 * x1 * x2 + 27 * x2**2)
    return f1 * f2


_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470],
                         [1091, 8732, 5547], [381, 5743, 8828]])
_H6_A = np.array([[10, 3, 17, 3.5, 1.7, 8], [0.05, 10, 17, 0.1, 8, 14],
                  [3, 3.5, 1.7, 10, 17, 8], [17, 8, 0.05, 10, 0.1, 14]])
_H6_P = 1e-4 * np.array([[1312, 1696, 5569, 124, 8283, 5886],
                         [2329, 4135, 8307, 3736, 1004, 9991],
                         [2348, 1451, 3522, 2883, 3047, 6650],
                         [4047, 8828, 8732, 5743, 1091, 381]])


def _hartmann(x, a, p):
    inner = np.sum(a[None] * (x[:, None, :] - p[None]) ** 2, axis=2)
    return -np.sum(_H_ALPHA * np.exp(-inner), axis=1)


def hartmann3(x):
    return _hartmann(x, _H3_A, _H3_P)


def hartmann6(x):
    return _hartmann(x, _H6_A, _H6_P)


@dataclass(frozen=True)
class Benchmark:
    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    domain: tuple[tuple[float, float], ...]
    minimum: float | None = None
    minimizer: tuple[float, ...] | None = None


BENCHMARKS: dict[str, Benchmark] = {
    "ackley1d": Benchmark(ackley, 1, ((-4.0, 4.0),), 0.0, (0.0,)),
    "ackley2d": Benchmark(ackley, 2, ((-4.0, 4.0),) * 2, 0.0, (0.0, 0.0)),
    "levy1d": Benchmark(levy, 1, ((-10.0, 10.0),), 0.0, (1.0,)),
    "schwefel1d": Benchmark(schwefel, 1, ((-500.0, 500.0),), 1.2728e-5, (420.968746,)),
    "rosenbrock1d": Benchmark(rosenbrock, 1, ((-5.0, 10.0),), 0.0, (1.0,)),
    "sphere1d": Benchmark(sphere, 1, ((-5.0, 5.0),), 0.0, (0.0,)),
    "styblinski_tang1d": Benchmark(styblinski_tang, 1, ((-5.0, 5.0),), -39.16616570377142,
                                   (-2.903534027771178,)),
    "weierstrass1d": Benchmark(weierstrass, 1, ((-0.5, 0.5),), 0.0, (0.0,)),
    "beale": Benchmark(beale, 2, ((-4.0, 5.0),) * 2, 0.0, (3.0, 0.5)),
    "branin": Benchmark(branin, 2, ((-5.0, 10.0), (0.0, 15.0)), 0.39788735772973816,
                        (np.pi, 2.275)),
    "michalewicz": Benchmark(michalewicz, 2, ((0.0, np.pi),) * 2, -1.8013034100985537,
                             (2.202905513296628, 1.570796326794896)),
    "goldstein_price": Benchmark(goldstein_price, 2, ((-2.0, 2.0),) * 2, 3.0, (0.0, -1.0)),
    "hartmann3": Benchmark(hartmann3, 3, ((0.0, 1.0),) * 3, -3.86278214782076,
                           (0.114614, 0.555649, 0.852547)),
    "hartmann6": Benchmark(hartmann6, 6, ((0.0, 1.0),) * 6, -3.32236801141551,
                           (0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573)),
}

# objective ids backed by stored grid values instead of a closed form
TABLE_IDS = ("gp_sample", "table_lookup")

# ---------------------------------------------------------------------------
# specs, transforms, instances


class DomainError(ValueError):
    pass


def _as_domain(domain) -> tuple[tuple[float, float], ...]:
    dom = tuple((float(lo), float(hi)) for lo, hi in domain)
    for lo, hi in dom:
        if not lo < hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
    return dom


@dataclass(frozen=True)
class ObjectiveSpec:
    """One row of an experiment table: which function, where, how densely, which GP."""

    id: str
    dim: int
    domain: tuple[tuple[float, float], ...]
    grid_size: int
    gp_hyperparams: GpHyperparams

    def __post_init__(self):
        object.__setattr__(self, "domain", _as_domain(self.domain))
        if len(self.domain) != self.dim:
            raise ValueError(f"{self.id}: {len(self.domain)} bounds for dim {self.dim}")
        if self.id in BENCHMARKS:
            if BENCHMARKS[self.id].dim != self.dim:
                raise ValueError(f"{self.id} is {BENCHMARKS[self.id].dim}-dimensional")
        elif self.id not in TABLE_IDS:
            raise ValueError(f"unknown objective id {self.id!r}")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")


@dataclass(frozen=True)
class Transform:
    scale: float = 1.0
    translation: tuple[float, ...] = ()

    def __post_init__(self):
        if self.scale == 0 or not math.isfinite(self.scale):
            raise ValueError("scale must be finite and non-zero")
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))

    @classmethod
    def identity(cls, dim: int) -> "Transform":
        return cls(1.0, (0.0,) * dim)


@dataclass(frozen=True, eq=False)
class ObjectiveInstance:
    spec: ObjectiveSpec
    transform: Transform
    seed: int
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape[0] == 0:
            raise ValueError("objective instance needs at least one grid value")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        self.grid.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def true_min(self) -> float:
        return float(np.min(self.values))

    @property
    def initial_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def argmin_index(self) -> int:
        return int(np.argmin(self.values))

    @property
    def hp(self) -> GpHyperparams:
        return self.spec.gp_hyperparams

    def to_record(self) -> dict:
        return {
            "id": self.spec.id,
            "dim": self.spec.dim,
            "domain": [list(b) for b in self.spec.domain],
            "transform": {"scale": self.transform.scale,
                          "translation": list(self.transform.translation)},
            "seed": self.seed,
            "grid_size": self.spec.grid_size,
            "hyperparams": self.spec.gp_hyperparams.to_dict(),
        }


def _closed_form(spec: ObjectiveSpec, transform: Transform, x: np.ndarray) -> np.ndarray:
    bench = BENCHMARKS[spec.id]
    lo = np.array([b[0] for b in spec.domain])
    hi = np.array([b[1] for b in spec.domain])
    shifted = np.clip(x - np.asarray(transform.translation), lo, hi)
    # presets on the unit cube are mapped onto the benchmark's own box
    clo = np.array([b[0] for b in bench.domain])
    chi = np.array([b[1] for b in bench.domain])
    if spec.domain != bench.domain:
        shifted = clo + (shifted - lo) / (hi - lo) * (chi - clo)
    return transform.scale * bench.fn(shifted)


def _check_in_domain(spec: ObjectiveSpec, x: np.ndarray):
    lo = np.array([b[0] for b in spec.domain])
    hi = np.array([b[1] for b in spec.domain])
    tol = 1e-12 * np.maximum(1.0, hi - lo)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise DomainError(f"point outside {spec.domain}")


def evaluate(inst: ObjectiveInstance, x) -> float:
    """Objective value at a single point of the instance's domain."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (inst.spec.dim,):
        raise DomainError(f"expected a {inst.spec.dim}-vector, got shape {x.shape}")
    _check_in_domain(inst.spec, x)
    if inst.spec.id in TABLE_IDS:
        i = int(np.argmin(np.sum((inst.grid - x) ** 2, axis=1)))
        return float(inst.values[i])
    return float(_closed_form(inst.spec, inst.transform, x[None, :])[0])


def sobol_grid(domain, n: int, dim: int | None = None) -> np.ndarray:
    """`n` unscrambled Sobol points (zero point skipped) mapped onto the box."""
    domain = _as_domain(domain)
    dim = len(domain) if dim is None else dim
    if n < 1 or dim < 1 or dim != len(domain):
        raise ValueError("need n >= 1 and one bound per dimension")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance-property warning for n+1 not a power of 2
        unit = qmc.Sobol(dim, scramble=False).random(n + 1)[1:]
    lo = np.array([b[0] for b in domain])
    hi = np.array([b[1] for b in domain])
    return lo + unit * (hi - lo)


def make_instance(spec: ObjectiveSpec, transform: Transform | None = None,
                  seed: int = 0) -> ObjectiveInstance:
    """Closed-form benchmark pinned to its Sobol grid."""
    if spec.id in TABLE_IDS:
        raise ValueError(f"{spec.id} instances are built from values, not a formula")
    transform = transform or Transform.identity(spec.dim)
    if len(transform.translation) != spec.dim:
        raise ValueError("translation length must equal the dimension")
    grid = sobol_grid(spec.domain, spec.grid_size)
    values = _closed_form(spec, transform, grid)
    return ObjectiveInstance(spec, transform, seed, grid, values)


def make_table_objective(values, grid, hp: GpHyperparams, seed: int = 0,
                         objective_id: str = "table_lookup", domain=None) -> ObjectiveInstance:
    """Lookup-table objective answering queries with the nearest grid point's value."""
    values = np.asarray(values, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    if values.size == 0:
        raise ValueError("empty value table")
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] != values.size:
        raise ValueError("one value per grid point is required")
    if domain is None:
        lo, hi = grid.min(axis=0), grid.max(axis=0)
        domain = tuple(zip(lo, np.where(hi > lo, hi, lo + 1.0)))
    spec = ObjectiveSpec(objective_id, grid.shape[1], domain, grid.shape[0], hp)
    return ObjectiveInstance(spec, Transform.identity(grid.shape[1]), seed,
                             grid.copy(), values.copy())


def sample_gp_objective(dim: int, lengthscale_range, seed: int, grid,
                        signal_variance: float = 1.0, noise_variance: float = 1e-20,
                        domain=None) -> ObjectiveInstance:
    """Draw one function from a zero-mean RBF GP prior, tabulated on `grid`.

    The lengthscale is drawn uniformly from `lengthscale_range`; it becomes
    the instance's own GP lengthscale.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("empty grid")
    if grid.shape[1] != dim:
        raise ValueError("grid dimensionality mismatch")
    rng = np.random.default_rng(seed)
    lengthscale = float(rng.uniform(*lengthscale_range))
    hp = GpHyperparams((lengthscale,), signal_variance, noise_variance)
    k = kernel_matrix(grid, grid, hp)
    chol, _ = _factorize(k, hp)
    values = np.tril(chol) @ rng.standard_normal(grid.shape[0])
    return make_table_objective(values, grid, hp, seed=seed, objective_id="gp_sample",
                                domain=domain)


def initial_design(inst: ObjectiveInstance) -> Dataset:
    """Single-row design at the worst grid point (first index on ties)."""
    i = inst.initial_index
    return Dataset(inst.grid[i:i + 1], inst.values[i:i + 1])
