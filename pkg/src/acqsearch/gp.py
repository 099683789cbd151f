"""Exact Gaussian-process regression over a fixed evaluation grid.

Zero prior mean, RBF kernel with either a shared or a per-dimension (ARD)
lengthscale.  Hyperparameters are consumed as given; nothing is learned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class GPNumericalError(RuntimeError):
    """Raised when the kernel matrix cannot be factorized even with maximal jitter."""


class DuplicateObservationError(ValueError):
    """Raised when a noiseless dataset would receive a repeated input row."""


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: tuple[float, ...]
    signal_variance: float
    noise_variance: float = 1e-5
    ard: bool = False

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in ls))
        if ls.size == 0 or np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError(f"lengthscales must be positive, got {self.lengthscales}")
        if not self.ard and ls.size != 1:
            raise ValueError("a non-ARD kernel stores exactly one lengthscale")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be non-negative")

    @classmethod
    def from_lengthscale(cls, lengthscale, signal_variance, noise_variance=1e-5):
        ls = np.atleast_1d(np.asarray(lengthscale, dtype=float))
        return cls(tuple(ls), float(signal_variance), float(noise_variance), ard=ls.size > 1)

    def scales_for(self, dim: int) -> np.ndarray:
        if self.ard:
            if len(self.lengthscales) != dim:
                raise ValueError(
                    f"{len(self.lengthscales)} ARD lengthscales for {dim}-dimensional inputs")
            return np.asarray(self.lengthscales)
        return np.full(dim, self.lengthscales[0])

    def to_dict(self) -> dict:
        return {
            "lengthscales": list(self.lengthscales),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "ard": self.ard,
        }


@dataclass(frozen=True)
class Dataset:
    """Observed inputs (n x d) and outputs (n,). Treated as immutable."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.atleast_1d(np.asarray(self.outputs, dtype=float))
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("dataset needs n >= 1 rows with matching outputs")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return self.outputs.shape[0]


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    variance: np.ndarray


def kernel_matrix(a, b, hp: GpHyperparams) -> np.ndarray:
    """RBF covariance between the rows of `a` and `b`."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    ls = hp.scales_for(a.shape[1])
    a = a / ls
    b = b / ls
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    np.maximum(sq, 0.0, out=sq)
    return hp.signal_variance * np.exp(-0.5 * sq)


def _factorize(k: np.ndarray, hp: GpHyperparams):
    # plain attempt first; then jitter relative to the signal variance, x10 per failure
    try:
        return linalg.cho_factor(k, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = JITTER_START
    eye = np.eye(k.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cho_factor(k + jitter * hp.signal_variance * eye, lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise GPNumericalError("kernel matrix is not positive definite after jitter escalation")


def fit_predict(data: Dataset, grid, hp: GpHyperparams) -> Posterior:
    """Posterior mean and variance of the zero-mean GP at every grid point."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    x, y = data.inputs, data.outputs
    k = kernel_matrix(x, x, hp)
    k[np.diag_indices_from(k)] += hp.noise_variance
    factor = _factorize(k, hp)
    k_star = kernel_matrix(grid, x, hp)
    alpha = linalg.cho_solve(factor, y)
    mean = k_star @ alpha
    v = linalg.solve_triangular(factor[0], k_star.T, lower=True)
    var = hp.signal_variance - np.sum(v * v, axis=0)
    return Posterior(mean=mean, variance=np.maximum(var, 0.0))


def append_observation(data: Dataset, x, y: float, noise_variance: float) -> Dataset:
    """Return a new dataset with one more row; `data` is left untouched.

    A repeated input row is refused when `noise_variance` is exactly zero.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if noise_variance == 0 and np.any(np.all(data.inputs == x[None, :], axis=1)):
        raise DuplicateObservationError(f"input {x.tolist()} already observed with zero noise")
    return Dataset(np.vstack([data.inputs, x[None, :]]), np.append(data.outputs, float(y)))
