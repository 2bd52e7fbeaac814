"""Gaussian-process machinery for trajectories.

Each trajectory dimension is an independent zero-mean GP over time with a
squared-exponential kernel and additive observation noise.  Conditioning
handles irregular, late, reordered or missing timestamped data: whatever
subset of observations is available is sorted canonically and conditioned
on; absent points are simply never part of the Gram matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput, NumericalError

OPERATOR_DIM = 2  # velocity command space (v_x, v_y)
ROBOT_DIM = 3     # pose space (x, y, theta)
AGENT_DIM = 2     # workspace position (x, y)

# Jitter ladder: fractions of signal_variance added to the Gram diagonal,
# escalating tenfold until Cholesky succeeds.
_JITTER_LADDER = tuple(10.0 ** k for k in range(-10, -3))

# Eigenvalues of a returned covariance may dip this far below zero before
# the matrix is declared not PSD.
PSD_TOLERANCE = -1e-9


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel hyperparameters plus observation noise."""

    signal_variance: float
    length_scale: float
    noise_variance: float

    def __post_init__(self):
        for name in ("signal_variance", "length_scale", "noise_variance"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInput(f"KernelParams.{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True, order=True)
class TimedObservation:
    """A timestamped, source-tagged measurement of one trajectory.

    ``timestamp`` is the sender clock at measurement time; ``receive_time``
    is when it actually arrived.  The pair may disagree in either direction.
    ``sequence`` is strictly increasing per source and breaks sort ties.
    """

    timestamp: float
    source: str
    sequence: int
    receive_time: float = 0.0
    value: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(float(v) for v in self.value))
        if not math.isfinite(self.timestamp):
            raise InvalidInput(f"observation timestamp must be finite, got {self.timestamp!r}")
        if not all(math.isfinite(v) for v in self.value):
            raise InvalidInput(f"non-finite observation value {self.value!r} "
                               f"(source={self.source}, seq={self.sequence})")

    @property
    def dim(self) -> int:
        return len(self.value)


def canonical_order(obs: Sequence[TimedObservation]) -> list[TimedObservation]:
    """Sort observations by (timestamp, source, sequence).

    Conditioning always happens in this order, so delivery order can never
    change a posterior: a reordered stream and an in-order stream with the
    same contents produce bit-identical results.
    """
    return sorted(obs, key=lambda o: (o.timestamp, o.source, o.sequence))


@dataclass(frozen=True)
class TimeGrid:
    """Discrete prediction grid: ``now`` plus ``horizon`` future steps of ``dt``."""

    now: float
    horizon: int
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidInput(f"TimeGrid.dt must be positive, got {self.dt!r}")
        if self.horizon < 1:
            raise InvalidInput(f"TimeGrid.horizon must be >= 1, got {self.horizon!r}")

    @property
    def size(self) -> int:
        return self.horizon + 1

    def times(self) -> np.ndarray:
        return self.now + self.dt * np.arange(self.size)

    def index_of(self, t: float) -> int:
        times = self.times()
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-6 * self.dt:
            raise InvalidInput(f"time {t} is not on the grid (nearest {times[i]})")
        return i


@dataclass(frozen=True)
class GpPosterior:
    """Per-dimension posterior mean and covariance over a time grid."""

    grid: TimeGrid
    mean: np.ndarray        # (N, D)
    covariance: np.ndarray  # (D, N, N)
    conditioning_set: tuple
    params: KernelParams

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        n = self.grid.size
        if mean.ndim != 2 or mean.shape[0] != n:
            raise InvalidInput(f"mean must have shape ({n}, D), got {mean.shape}")
        d = mean.shape[1]
        if cov.shape != (d, n, n):
            raise InvalidInput(f"covariance must have shape ({d}, {n}, {n}), got {cov.shape}")
        asym = np.max(np.abs(cov - np.transpose(cov, (0, 2, 1)))) if cov.size else 0.0
        if asym > 1e-8 * max(1.0, float(np.max(np.abs(cov)))):
            raise InvalidInput(f"covariance is not symmetric (max asymmetry {asym})")
        cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "conditioning_set", tuple(self.conditioning_set))

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    def variance_at(self, t: float) -> np.ndarray:
        """Per-dimension marginal variance at a grid time."""
        i = self.grid.index_of(t)
        return self.covariance[:, i, i].copy()

    def trace_at(self, t: float) -> float:
        return float(np.sum(self.variance_at(t)))

    def scaled(self, factor: float) -> "GpPosterior":
        """Same mean with covariance multiplied by ``factor`` (diffuseness control)."""
        return GpPosterior(self.grid, self.mean, self.covariance * float(factor),
                           self.conditioning_set, self.params)


@dataclass(frozen=True)
class GoalMixture:
    """Goal-conditioned GP mixture: one posterior per candidate goal."""

    components: tuple          # ((goal, GpPosterior), ...)
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple((tuple(float(g) for g in goal), post) for goal, post in self.components)
        w = np.asarray(self.weights, dtype=float)
        if len(comps) < 1:
            raise InvalidInput("GoalMixture needs at least one component")
        if w.shape != (len(comps),) or np.any(w < 0):
            raise InvalidInput("mixture weights must be nonnegative, one per component")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidInput(f"mixture weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def grid(self) -> TimeGrid:
        return self.components[0][1].grid

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def posteriors(self) -> list[GpPosterior]:
        return [p for _, p in self.components]

    def mean(self) -> np.ndarray:
        return sum(w * p.mean for w, p in zip(self.weights, self.posteriors()))

    def trace_at(self, t: float) -> float:
        """Weighted component trace plus between-component mean spread."""
        posts = self.posteriors()
        i = posts[0].grid.index_of(t)
        within = sum(w * float(np.sum(p.covariance[:, i, i]))
                     for w, p in zip(self.weights, posts))
        means = np.stack([p.mean[i] for p in posts])          # (K, D)
        center = np.sum(self.weights[:, None] * means, axis=0)
        spread = float(np.sum(self.weights * np.sum((means - center) ** 2, axis=1)))
        return within + spread

    def total_covariance(self) -> np.ndarray:
        """Moment-matched single-Gaussian covariance of the mixture, (D, N, N)."""
        posts = self.posteriors()
        mbar = self.mean()                                    # (N, D)
        d = posts[0].dim
        total = np.zeros_like(posts[0].covariance)
        for w, p in zip(self.weights, posts):
            total += w * p.covariance
            dev = (p.mean - mbar).T                           # (D, N)
            total += w * dev[:, :, None] * dev[:, None, :]
        return total


def _se_kernel(params: KernelParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = (a[:, None] - b[None, :]) / params.length_scale
    return params.signal_variance * np.exp(-0.5 * diff * diff)


def _chol_with_jitter(gram: np.ndarray, signal_variance: float,
                      timestamps: Sequence[float]) -> np.ndarray:
    eye = np.eye(gram.shape[0])
    for mult in _JITTER_LADDER:
        try:
            return np.linalg.cholesky(gram + (mult * signal_variance) * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "Gram matrix not positive definite after jitter ladder; "
        f"conditioning times: {list(timestamps)}", timestamps=timestamps)


def _cho_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # numpy has no triangular solver in its public linalg API; the Gram
    # matrices here are small enough that two general solves are fine.
    return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def _condition(params: KernelParams, times: np.ndarray, values: np.ndarray,
               noises: np.ndarray, query: np.ndarray):
    """Zero-mean SE-GP conditioning with per-observation noise.

    Returns (mean (M, D), covariance (M, M)); the covariance is shared by
    every dimension because all dimensions see the same timestamps.
    """
    k_qq = _se_kernel(params, query, query)
    if len(times) == 0:
        return np.zeros((len(query), values.shape[1])), k_qq
    gram = _se_kernel(params, times, times) + np.diag(noises)
    chol = _chol_with_jitter(gram, params.signal_variance, times)
    k_qx = _se_kernel(params, query, times)
    alpha = _cho_solve(chol, values)
    mean = k_qx @ alpha
    w = np.linalg.solve(chol, k_qx.T)                         # (n, M)
    cov = k_qq - w.T @ w
    return mean, 0.5 * (cov + cov.T)


def _log_marginal(params: KernelParams, times: np.ndarray, values: np.ndarray,
                  noises: np.ndarray, prior_mean: np.ndarray | None = None) -> float:
    """Log marginal likelihood of observations, summed over dimensions."""
    n, d = values.shape
    if n == 0:
        return 0.0
    gram = _se_kernel(params, times, times) + np.diag(noises)
    chol = _chol_with_jitter(gram, params.signal_variance, times)
    dev = values if prior_mean is None else values - prior_mean
    alpha = _cho_solve(chol, dev)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    quad = float(np.sum(dev * alpha))
    return -0.5 * (quad + d * logdet + n * d * math.log(2.0 * math.pi))


def _validated(obs: Sequence[TimedObservation], dim: int | None) -> tuple[list[TimedObservation], int]:
    ordered = canonical_order(obs)
    for o in ordered:
        if not math.isfinite(o.timestamp) or not all(math.isfinite(v) for v in o.value):
            raise InvalidInput(f"non-finite observation (source={o.source}, seq={o.sequence})")
    if ordered:
        d = ordered[0].dim
        if any(o.dim != d for o in ordered):
            raise InvalidInput("observations have inconsistent dimensions")
        if dim is not None and d != dim:
            raise InvalidInput(f"observations have dimension {d}, expected {dim}")
        return ordered, d
    return ordered, (dim if dim is not None else 1)


def posterior(params: KernelParams, obs: Sequence[TimedObservation],
              grid: TimeGrid, dim: int | None = None) -> GpPosterior:
    """Condition the zero-mean SE prior on the given observations over ``grid``.

    Observations may be empty, unordered, or have sequence gaps; exactly the
    provided set is conditioned on, in canonical order.  ``dim`` fixes the
    trajectory dimension when ``obs`` is empty.
    """
    ordered, d = _validated(obs, dim)
    times = np.array([o.timestamp for o in ordered], dtype=float)
    values = np.array([o.value for o in ordered], dtype=float).reshape(len(ordered), d)
    noises = np.full(len(ordered), params.noise_variance)
    mean, cov = _condition(params, times, values, noises, grid.times())
    return GpPosterior(grid, mean, np.repeat(cov[None, :, :], d, axis=0),
                       tuple(ordered), params)


def predictive_std_at_now(params: KernelParams, obs: Sequence[TimedObservation],
                          now: float, dim: int | None = None) -> np.ndarray:
    """Per-dimension posterior standard deviation at the single time ``now``."""
    ordered, d = _validated(obs, dim)
    times = np.array([o.timestamp for o in ordered], dtype=float)
    values = np.array([o.value for o in ordered], dtype=float).reshape(len(ordered), d)
    noises = np.full(len(ordered), params.noise_variance)
    _, cov = _condition(params, times, values, noises, np.array([float(now)]))
    var = max(0.0, float(cov[0, 0]))
    return np.full(d, math.sqrt(var))


def _psd_root(cov: np.ndarray) -> np.ndarray:
    """Matrix square root of a PSD covariance via eigendecomposition.

    Eigenvalues within PSD_TOLERANCE of zero are clamped; anything lower is
    a genuine failure.
    """
    vals, vecs = np.linalg.eigh(cov)
    if float(vals.min(initial=0.0)) < PSD_TOLERANCE * max(1.0, float(np.max(np.abs(vals), initial=1.0))):
        raise NumericalError(f"covariance not PSD (min eigenvalue {vals.min()})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def draw(post: GpPosterior, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` joint draws from the posterior, shape (count, N, D)."""
    n, d = post.mean.shape
    out = np.empty((count, n, d))
    for k in range(d):
        root = _psd_root(post.covariance[k])
        eps = rng.standard_normal((count, n))
        out[:, :, k] = post.mean[:, k][None, :] + eps @ root.T
    return out


def sample(post: GpPosterior, count: int, seed: int) -> np.ndarray:
    """I.i.d. posterior draws, deterministic given ``seed``; shape (count, N, D)."""
    if count < 1:
        raise InvalidInput(f"count must be >= 1, got {count}")
    return draw(post, count, np.random.default_rng(seed))


def _dim_log_density(mean: np.ndarray, cov: np.ndarray, x: np.ndarray,
                     signal_variance: float) -> np.ndarray:
    """Gaussian log-density of rows of ``x`` (S, N) under N(mean, cov)."""
    n = len(mean)
    chol = _chol_with_jitter(cov, signal_variance, ())
    dev = x - mean[None, :]
    sol = np.linalg.solve(chol, dev.T)                        # (N, S)
    quad = np.sum(sol * sol, axis=0)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (quad + logdet + n * math.log(2.0 * math.pi))


def log_density_batch(post: GpPosterior, trajectories: np.ndarray) -> np.ndarray:
    """Posterior log-density of each trajectory in a batch (S, N, D) -> (S,)."""
    trajectories = np.asarray(trajectories, dtype=float)
    s = trajectories.shape[0]
    n, d = post.mean.shape
    if trajectories.shape != (s, n, d):
        raise InvalidInput(f"trajectory batch must have shape (S, {n}, {d}), "
                           f"got {trajectories.shape}")
    total = np.zeros(s)
    for k in range(d):
        total += _dim_log_density(post.mean[:, k], post.covariance[k],
                                  trajectories[:, :, k], post.params.signal_variance)
    return total


def log_density(post: GpPosterior, trajectory: np.ndarray) -> float:
    """Gaussian log-density of one trajectory (N, D) under the posterior."""
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.shape != post.mean.shape:
        raise InvalidInput(f"trajectory must have shape {post.mean.shape}, "
                           f"got {trajectory.shape}")
    return float(log_density_batch(post, trajectory[None])[0])


def mixture_log_density_batch(mix: GoalMixture, trajectories: np.ndarray) -> np.ndarray:
    """Log of the weighted sum of component densities for a batch."""
    per_comp = np.stack([log_density_batch(p, trajectories) for p in mix.posteriors()])
    logw = np.log(mix.weights)[:, None]
    shifted = per_comp + logw
    top = np.max(shifted, axis=0)
    return top + np.log(np.sum(np.exp(shifted - top), axis=0))


def mixture_log_density(mix: GoalMixture, trajectory: np.ndarray) -> float:
    return float(mixture_log_density_batch(mix, np.asarray(trajectory, dtype=float)[None])[0])


def mixture_draw(mix: GoalMixture, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw by component weight, then from the chosen component's posterior."""
    posts = mix.posteriors()
    n, d = posts[0].mean.shape
    choice = rng.choice(len(posts), size=count, p=mix.weights)
    out = np.empty((count, n, d))
    for j, p in enumerate(posts):
        idx = np.flatnonzero(choice == j)
        if idx.size:
            out[idx] = draw(p, idx.size, rng)
    return out


def fit_hyperparameters(obs: Sequence[TimedObservation],
                        search_grid: Sequence[KernelParams]) -> KernelParams:
    """Grid-search kernel hyperparameters by log marginal likelihood.

    Ties (and equal duplicates) resolve to the earliest candidate.
    """
    ordered, d = _validated(obs, None)
    if len(ordered) < 3:
        raise InvalidInput(f"need at least 3 observations to fit, got {len(ordered)}")
    if not search_grid:
        raise InvalidInput("search grid must be non-empty")
    times = np.array([o.timestamp for o in ordered], dtype=float)
    values = np.array([o.value for o in ordered], dtype=float).reshape(len(ordered), d)
    best, best_ll = None, -math.inf
    for cand in search_grid:
        noises = np.full(len(ordered), cand.noise_variance)
        ll = _log_marginal(cand, times, values, noises)
        if ll > best_ll:
            best, best_ll = cand, ll
    return best


def mixture_posterior(params: KernelParams, obs: Sequence[TimedObservation],
                      goals: Sequence[Sequence[float]], grid: TimeGrid,
                      goal_noise: float) -> GoalMixture:
    """Multi-goal mixture: each component is the posterior given the
    observations plus a pseudo-observation of one goal at the final grid time.

    Component weights are proportional to the marginal likelihood of the
    observations under that component's goal-conditioned prior.
    """
    if len(goals) == 0:
        raise InvalidInput("mixture needs at least one goal")
    if goal_noise <= 0:
        raise InvalidInput(f"goal_noise must be positive, got {goal_noise!r}")
    ordered, d = _validated(obs, len(goals[0]) if len(goals) else None)
    t_end = float(grid.times()[-1])
    components = []
    log_weights = []
    obs_times = np.array([o.timestamp for o in ordered], dtype=float)
    obs_values = np.array([o.value for o in ordered], dtype=float).reshape(len(ordered), d)
    for goal in goals:
        if len(goal) != d:
            raise InvalidInput(f"goal {goal!r} has dimension {len(goal)}, expected {d}")
        pseudo = TimedObservation(timestamp=t_end, source="goal", sequence=0,
                                  receive_time=t_end, value=tuple(goal))
        combined = canonical_order(list(ordered) + [pseudo])
        times = np.array([o.timestamp for o in combined], dtype=float)
        values = np.array([o.value for o in combined], dtype=float)
        noises = np.array([goal_noise if o is pseudo else params.noise_variance
                           for o in combined])
        mean, cov = _condition(params, times, values, noises, grid.times())
        components.append((tuple(float(g) for g in goal),
                           GpPosterior(grid, mean, np.repeat(cov[None], d, axis=0),
                                       tuple(combined), params)))
        # marginal likelihood of obs under the goal-conditioned prior
        g_mean, g_cov = _condition(params, np.array([t_end]),
                                   np.array([goal], dtype=float),
                                   np.array([goal_noise]), obs_times)
        if len(ordered) == 0:
            log_weights.append(0.0)
        else:
            gram = g_cov + np.diag(np.full(len(ordered), params.noise_variance))
            chol = _chol_with_jitter(gram, params.signal_variance, obs_times)
            dev = obs_values - g_mean
            alpha = _cho_solve(chol, dev)
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
            ll = -0.5 * (float(np.sum(dev * alpha)) + d * logdet
                         + len(ordered) * d * math.log(2.0 * math.pi))
            log_weights.append(ll)
    logw = np.asarray(log_weights)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    return GoalMixture(tuple(components), w)
