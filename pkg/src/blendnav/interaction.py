"""Interaction potentials coupling operator intent, robot path, and crowd.

The joint potential factors into an attraction term pulling the robot's
planned velocities toward the operator's predicted commands and a
cooperation term discouraging robot-agent proximity.  Both are returned in
log space and are nonpositive, so the potential itself lives in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True, eq=False)
class AttractionParams:
    """Quadratic attraction between commands and robot velocity.

    ``sigma`` is a symmetric positive-definite matrix in command units
    squared; larger sigma means a weaker pull.
    """

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise InvalidInput(f"sigma must be square, got shape {sigma.shape}")
        if np.max(np.abs(sigma - sigma.T)) > 1e-9 * max(1.0, float(np.max(np.abs(sigma)))):
            raise InvalidInput("sigma must be symmetric")
        vals = np.linalg.eigvalsh(sigma)
        if np.any(vals <= 0):
            raise InvalidInput(f"sigma must be positive definite (eigenvalues {vals})")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_inv", np.linalg.inv(sigma))

    @property
    def inverse(self) -> np.ndarray:
        return self._inv


@dataclass(frozen=True)
class CooperationParams:
    """Robot-agent repulsion: strength in [0, 1), radius in meters."""

    strength: float
    radius: float

    def __post_init__(self):
        if not 0.0 <= self.strength < 1.0:
            raise InvalidInput(f"strength must be in [0, 1), got {self.strength!r}")
        if self.radius <= 0:
            raise InvalidInput(f"radius must be positive, got {self.radius!r}")


def _positions(trajectory: np.ndarray, name: str) -> np.ndarray:
    t = np.asarray(trajectory, dtype=float)
    if t.ndim != 2 or t.shape[1] < 2:
        raise InvalidInput(f"{name} must be (N, >=2), got shape {t.shape}")
    return t[:, :2]


def attraction_batch(h: np.ndarray, f_r: np.ndarray, params: AttractionParams,
                     dt: float) -> np.ndarray:
    """Vectorized attraction over batches h (S, N, 2), f_r (S, N, D>=2)."""
    v = np.diff(f_r[:, :, :2], axis=1) / dt          # (S, N-1, 2)
    dev = h[:, :-1, :] - v
    return -np.einsum("sni,ij,snj->s", dev, params.inverse, dev)


def attraction(h: np.ndarray, f_r: np.ndarray, params: AttractionParams,
               dt: float) -> float:
    """Log attraction potential between a command trajectory and a robot path.

    The robot path is reduced to velocities by first differences over ``dt``;
    each command step is penalized by its squared Mahalanobis distance to the
    matching velocity.  Result is 0 when they agree everywhere, negative
    otherwise.
    """
    h = np.asarray(h, dtype=float)
    f_r = np.asarray(f_r, dtype=float)
    if h.ndim != 2 or h.shape[1] != params.sigma.shape[0]:
        raise InvalidInput(f"h must be (N, {params.sigma.shape[0]}), got {h.shape}")
    _positions(f_r, "f_r")
    if h.shape[0] != f_r.shape[0]:
        raise InvalidInput(f"h and f_r must share a grid: {h.shape[0]} vs {f_r.shape[0]}")
    if h.shape[0] < 2:
        raise InvalidInput("need at least two grid points to difference a velocity")
    if dt <= 0:
        raise InvalidInput(f"dt must be positive, got {dt!r}")
    return float(attraction_batch(h[None], f_r[None], params, dt)[0])


def cooperation_batch(f_r: np.ndarray, agents: Sequence[np.ndarray],
                      params: CooperationParams) -> np.ndarray:
    """Vectorized cooperation over batches f_r (S, N, D>=2), agents [(S, N, 2)]."""
    s = f_r.shape[0]
    total = np.zeros(s)
    if params.strength == 0.0:
        return total
    p_r = f_r[:, :, :2]
    denom = 2.0 * params.radius ** 2
    for a in agents:
        d2 = np.sum((p_r - a[:, :, :2]) ** 2, axis=2)
        total += np.sum(np.log1p(-params.strength * np.exp(-d2 / denom)), axis=1)
    return total


def cooperation(f_r: np.ndarray, agents: Sequence[np.ndarray],
                params: CooperationParams) -> float:
    """Log cooperation potential between a robot path and agent paths.

    Sums ln(1 - strength * exp(-d^2 / 2 radius^2)) over agents and grid
    points; 0 with no agents or at large separation, ln(1 - strength) at
    coincidence.
    """
    f_r = np.asarray(f_r, dtype=float)
    _positions(f_r, "f_r")
    batched = []
    for i, a in enumerate(agents):
        a = np.asarray(a, dtype=float)
        _positions(a, f"agents[{i}]")
        if a.shape[0] != f_r.shape[0]:
            raise InvalidInput(f"agents[{i}] grid length {a.shape[0]} != robot {f_r.shape[0]}")
        batched.append(a[None])
    return float(cooperation_batch(f_r[None], batched, params)[0])


def joint_log_potential(h: np.ndarray, f_r: np.ndarray,
                        agents: Sequence[np.ndarray],
                        attraction_params: AttractionParams,
                        cooperation_params: CooperationParams,
                        dt: float) -> float:
    """Total log interaction: attraction plus cooperation.

    With no agents this reduces to the plain teleoperation coupling between
    operator commands and the robot path.
    """
    return (attraction(h, f_r, attraction_params, dt)
            + cooperation(f_r, agents, cooperation_params))
