"""Built-in benchmark dynamics and one-step data generation.

Three systems are registered:

  * ``sine``: the 2-D case-study system. Each coordinate relaxes toward a
    sine coupling of the other, x_d' = x_d - tau*x_d + 0.5*tau*sin(x_other),
    tau = 0.5. The origin is a fixed point.
  * ``linear1d``: x' = a*x with a = 0.5; stable, with a closed-form Gaussian
    next-state law that analytic oracles can integrate exactly.
  * ``linear2d``: x' = A x with A = diag(0.5, 0.4).

Data sets are one-step i.i.d. samples: inputs uniform over the domain,
outputs the dynamics plus isotropic Gaussian noise. Everything is driven by
``numpy.random.default_rng`` so a seed pins the data set bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gp import Dataset
from .partition import StateBox


@dataclass(frozen=True)
class BenchmarkSystem:
    """Named deterministic dynamics plus the process-noise level."""

    name: str
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    noise_std: float

    def step(self, x: np.ndarray, rng: np.random.Generator = None) -> np.ndarray:
        """One transition; noiseless when no generator is supplied."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(f"{self.name} expects {self.dim}-dimensional states")
        out = self.f(pts)
        if rng is not None and self.noise_std > 0:
            out = out + rng.normal(0.0, self.noise_std, size=out.shape)
        return out[0] if squeeze else out


_TAU = 0.5


def _sine_f(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    out[:, 0] = x[:, 0] - _TAU * x[:, 0] + 0.5 * _TAU * np.sin(x[:, 1])
    out[:, 1] = x[:, 1] - _TAU * x[:, 1] + 0.5 * _TAU * np.sin(x[:, 0])
    return out


_LIN1D_A = 0.5
_LIN2D_A = np.array([[0.5, 0.0], [0.0, 0.4]])


def _linear1d_f(x: np.ndarray) -> np.ndarray:
    return _LIN1D_A * x


def _linear2d_f(x: np.ndarray) -> np.ndarray:
    return x @ _LIN2D_A.T


_DEFAULTS = {
    "sine": (2, _sine_f, 3.16),
    "linear1d": (1, _linear1d_f, 0.5),
    "linear2d": (2, _linear2d_f, 0.5),
}


def make_system(name: str, noise_std: float = None) -> BenchmarkSystem:
    """Look up a registered system, optionally overriding its noise level."""
    if name not in _DEFAULTS:
        known = ", ".join(sorted(_DEFAULTS))
        raise ValueError(f"unknown system {name!r} (known: {known})")
    dim, f, default_noise = _DEFAULTS[name]
    sigma = default_noise if noise_std is None else float(noise_std)
    if sigma < 0:
        raise ValueError("noise_std must be nonnegative")
    return BenchmarkSystem(name=name, dim=dim, f=f, noise_std=sigma)


def linear_gain(name: str) -> np.ndarray:
    """The linear systems' matrix, for analytic oracles."""
    if name == "linear1d":
        return np.array([[_LIN1D_A]])
    if name == "linear2d":
        return _LIN2D_A.copy()
    raise ValueError("only the linear systems have a gain matrix")


def simulate(
    system: BenchmarkSystem, n_samples: int, seed: int, domain: StateBox
) -> Dataset:
    """Draw one-step samples: x ~ U(domain), y = f(x) + N(0, sigma^2 I)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if domain.dim != system.dim:
        raise ValueError("domain dimension does not match the system")
    rng = np.random.default_rng(seed)
    x = rng.uniform(domain.lower, domain.upper, size=(n_samples, system.dim))
    y = system.f(x) + rng.normal(0.0, system.noise_std, size=(n_samples, system.dim))
    return Dataset(x=x, y=y, noise_std=system.noise_std)
