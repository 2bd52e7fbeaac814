"""Joint-density assembly, sample-based MAP inference, and sliding autonomy.

A joint candidate (operator commands, robot path, agent paths) is scored by
the sum of its interaction log-potential and the log-density of each factor
under its own posterior.  MAP search draws a population from the factor
posteriors, keeps the best-scoring joint sample, then polishes it by
coordinate hill-climbing with proposal covariances shrunk 4x per iteration.
Control allocation between operator and robot is the normalized inverse of
their posterior traces at the current time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import gp, interaction
from .errors import InferenceFailure, InvalidInput
from .gp import GoalMixture, GpPosterior, KernelParams, TimedObservation, TimeGrid
from .interaction import AttractionParams, CooperationParams

ZERO_TRACE_CLAMP = 1e-12
_REFINE_SHRINK = 0.25     # covariance multiplier per refine iteration
_REFINE_ROUNDS = 8        # proposal batches per factor at each scale


@dataclass(frozen=True)
class PlannerConfig:
    """Receding-horizon MAP search settings."""

    horizon: int
    sample_count: int
    dt: float
    seed: int
    refine_iterations: int = 4

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInput(f"horizon must be >= 1, got {self.horizon}")
        if self.sample_count < 1:
            raise InvalidInput(f"sample_count must be >= 1, got {self.sample_count}")
        if self.refine_iterations < 0:
            raise InvalidInput(f"refine_iterations must be >= 0, got {self.refine_iterations}")
        if self.dt <= 0:
            raise InvalidInput(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class JointSample:
    """One joint realization of all trajectories with its unnormalized score."""

    h: np.ndarray | None
    f_r: np.ndarray
    agents: tuple
    unnormalized_log_density: float

    def __post_init__(self):
        if not math.isfinite(self.unnormalized_log_density):
            raise InvalidInput("joint sample log-density must be finite")
        object.__setattr__(self, "agents", tuple(self.agents))


@dataclass(frozen=True)
class AutonomyAllocation:
    """Inverse-uncertainty split of control between operator and robot."""

    operator_weight: float
    robot_weight: float
    operator_trace: float
    robot_trace: float
    degenerate: bool = False

    def __post_init__(self):
        if abs(self.operator_weight + self.robot_weight - 1.0) > 1e-12:
            raise InvalidInput("autonomy weights must sum to 1")


@dataclass(frozen=True)
class BlendResult:
    """Outcome of one planning tick.

    ``map_sample`` is None only on a fallback tick (inference failed and the
    previous action was repeated); ``diagnostics['fallback']`` is then True.
    """

    map_sample: JointSample | None
    next_action: np.ndarray
    autonomy: AutonomyAllocation
    diagnostics: dict


def _gaussian_terms(mean: np.ndarray, cov: np.ndarray, signal_variance: float):
    """Precision matrix and log-normalizer for fast repeated density queries."""
    n = len(mean)
    chol = gp._chol_with_jitter(cov, signal_variance, ())
    inv_chol = np.linalg.solve(chol, np.eye(n))
    precision = inv_chol.T @ inv_chol
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    log_norm = -0.5 * (logdet + n * math.log(2.0 * math.pi))
    return precision, log_norm


class _Factor:
    """Sampling/scoring adapter over a GpPosterior or GoalMixture.

    Density evaluation runs through per-dimension precision matrices built
    once per posterior, so the refine loop's many small batches stay cheap.
    """

    def __init__(self, name: str, model):
        self.name = name
        self.model = model
        self.is_mixture = isinstance(model, GoalMixture)
        self.grid = model.grid
        self.dim = model.dim
        cov = model.total_covariance() if self.is_mixture else model.covariance
        self._proposal_roots = [gp._psd_root(cov[k]) for k in range(self.dim)]
        posts = model.posteriors() if self.is_mixture else [model]
        self._comp_means = [p.mean for p in posts]
        self._comp_terms = []
        for p in posts:
            self._comp_terms.append([_gaussian_terms(p.mean[:, k], p.covariance[k],
                                                     p.params.signal_variance)
                                     for k in range(self.dim)])

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_mixture:
            return gp.mixture_draw(self.model, count, rng)
        return gp.draw(self.model, count, rng)

    def _component_ll(self, comp: int, batch: np.ndarray) -> np.ndarray:
        mean = self._comp_means[comp]
        total = np.zeros(batch.shape[0])
        for k in range(self.dim):
            precision, log_norm = self._comp_terms[comp][k]
            dev = batch[:, :, k] - mean[:, k][None, :]
            total += log_norm - 0.5 * np.einsum("sn,nm,sm->s", dev, precision, dev)
        return total

    def log_density(self, batch: np.ndarray) -> np.ndarray:
        if not self.is_mixture:
            return self._component_ll(0, batch)
        per_comp = np.stack([self._component_ll(c, batch)
                             for c in range(len(self._comp_means))])
        shifted = per_comp + np.log(self.model.weights)[:, None]
        top = np.max(shifted, axis=0)
        return top + np.log(np.sum(np.exp(shifted - top), axis=0))

    def propose(self, center: np.ndarray, count: int, std_scale: float,
                rng: np.random.Generator) -> np.ndarray:
        """Gaussian proposals around ``center`` at a shrunken covariance."""
        n = self.grid.size
        out = np.empty((count, n, self.dim))
        for k in range(self.dim):
            eps = rng.standard_normal((count, n))
            out[:, :, k] = center[:, k][None, :] + std_scale * (eps @ self._proposal_roots[k].T)
        return out


def _check_grids(factors: Sequence[_Factor], config: PlannerConfig | None = None):
    grid = factors[0].grid
    for f in factors[1:]:
        if f.grid != grid:
            raise InvalidInput(f"factor '{f.name}' grid {f.grid} differs from '{factors[0].name}' {grid}")
    if config is not None and grid.horizon != config.horizon:
        raise InvalidInput(f"posterior horizon {grid.horizon} != config horizon {config.horizon}")
    return grid


def joint_log_density(h: np.ndarray | None, f_r: np.ndarray,
                      agents: Sequence[np.ndarray],
                      operator: GpPosterior | GoalMixture | None,
                      robot: GpPosterior,
                      agent_posteriors: Sequence[GpPosterior],
                      attraction_params: AttractionParams,
                      cooperation_params: CooperationParams) -> float:
    """Unnormalized joint log-density of one candidate assignment.

    Sum of the interaction log-potential and each factor's own posterior
    log-density; the normalization constant is never computed since the MAP
    is invariant to it.  A mixture operator contributes the log of the
    weighted sum of its component densities.
    """
    if len(agents) != len(agent_posteriors):
        raise InvalidInput(f"{len(agents)} agent trajectories vs "
                           f"{len(agent_posteriors)} agent posteriors")
    factors = [_Factor("robot", robot)]
    if operator is not None:
        factors.append(_Factor("operator", operator))
    factors.extend(_Factor(f"agent{i}", p) for i, p in enumerate(agent_posteriors))
    grid = _check_grids(factors)

    f_r = np.asarray(f_r, dtype=float)
    total = gp.log_density_batch(robot, f_r[None])[0]
    if operator is not None:
        if h is None:
            raise InvalidInput("operator posterior given but no command trajectory")
        h = np.asarray(h, dtype=float)
        total += (gp.mixture_log_density(operator, h) if isinstance(operator, GoalMixture)
                  else gp.log_density(operator, h))
        total += interaction.attraction(h, f_r, attraction_params, grid.dt)
    agent_arrays = [np.asarray(a, dtype=float) for a in agents]
    for a, p in zip(agent_arrays, agent_posteriors):
        total += gp.log_density(p, a)
    total += interaction.cooperation(f_r, agent_arrays, cooperation_params)
    return float(total)


def autonomy_measure(operator: GpPosterior | GoalMixture | None,
                     robot: GpPosterior, now: float) -> AutonomyAllocation:
    """Allocate control proportionally to inverse posterior trace at ``now``."""
    robot_trace = robot.trace_at(now)
    if operator is None:
        op_trace = math.inf
    else:
        op_trace = operator.trace_at(now)
    degenerate = False
    if op_trace < ZERO_TRACE_CLAMP:
        op_trace, degenerate = ZERO_TRACE_CLAMP, True
    if robot_trace < ZERO_TRACE_CLAMP:
        robot_trace, degenerate = ZERO_TRACE_CLAMP, True
    inv_op = 0.0 if math.isinf(op_trace) else 1.0 / op_trace
    inv_rob = 0.0 if math.isinf(robot_trace) else 1.0 / robot_trace
    if inv_op + inv_rob == 0.0:
        w_op = 0.5
        degenerate = True
    else:
        w_op = inv_op / (inv_op + inv_rob)
    return AutonomyAllocation(operator_weight=w_op, robot_weight=1.0 - w_op,
                              operator_trace=op_trace, robot_trace=robot_trace,
                              degenerate=degenerate)


def _spread(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return math.nan
    return float(finite.max() - finite.min())


def map_infer(operator: GpPosterior | GoalMixture | None,
              robot: GpPosterior,
              agent_posteriors: Sequence[GpPosterior],
              attraction_params: AttractionParams,
              cooperation_params: CooperationParams,
              config: PlannerConfig) -> BlendResult:
    """Sample-score-refine MAP over the joint operator/robot/crowd density.

    Draws ``sample_count`` joint candidates (each factor independently from
    its posterior, mixtures by weight then component), keeps the argmax,
    then runs ``refine_iterations`` of coordinate hill-climbing: each factor
    is resampled around the incumbent with covariance shrunk 4x per
    iteration and improvements are kept.  Deterministic given the seed.
    """
    has_op = operator is not None
    op_factor = _Factor("operator", operator) if has_op else None
    robot_factor = _Factor("robot", robot)
    agent_factors = [_Factor(f"agent{i}", p) for i, p in enumerate(agent_posteriors)]
    ordered = ([op_factor] if has_op else []) + [robot_factor] + agent_factors
    grid = _check_grids(ordered, config)
    dt = grid.dt
    s = config.sample_count
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    h = op_factor.draw(s, rng) if has_op else None
    f_r = robot_factor.draw(s, rng)
    ags = [f.draw(s, rng) for f in agent_factors]

    ll_op = op_factor.log_density(h) if has_op else np.zeros(s)
    ll_rob = robot_factor.log_density(f_r)
    ll_ags = [f.log_density(a) for f, a in zip(agent_factors, ags)]
    attr = (interaction.attraction_batch(h, f_r, attraction_params, dt)
            if has_op else np.zeros(s))
    coops = [interaction.cooperation_batch(f_r, [a], cooperation_params) for a in ags]

    totals = ll_op + ll_rob + attr
    for ll_a, co in zip(ll_ags, coops):
        totals = totals + ll_a + co
    finite = np.isfinite(totals)
    if not finite.any():
        raise InferenceFailure(
            "no joint sample scored finite",
            diagnostics={"sample_count": s, "non_finite": int((~finite).sum())})
    masked = np.where(finite, totals, -np.inf)
    best = int(np.argmax(masked))

    inc = {
        "h": h[best].copy() if has_op else None,
        "f_r": f_r[best].copy(),
        "agents": [a[best].copy() for a in ags],
        "ll_op": float(ll_op[best]), "ll_rob": float(ll_rob[best]),
        "ll_ags": [float(x[best]) for x in ll_ags],
        "attr": float(attr[best]),
        "coops": [float(c[best]) for c in coops],
        "total": float(masked[best]),
    }
    initial_best = inc["total"]

    def improve_operator(std_scale, batch):
        cands = op_factor.propose(inc["h"], batch, std_scale, rng)
        ll_c = op_factor.log_density(cands)
        attr_c = interaction.attraction_batch(
            cands, np.broadcast_to(inc["f_r"], (batch, *inc["f_r"].shape)),
            attraction_params, dt)
        delta = (ll_c - inc["ll_op"]) + (attr_c - inc["attr"])
        j = int(np.argmax(delta))
        if not (np.isfinite(delta[j]) and delta[j] > 0):
            return False
        inc["h"] = cands[j].copy()
        inc["ll_op"] = float(ll_c[j])
        inc["attr"] = float(attr_c[j])
        inc["total"] += float(delta[j])
        return True

    def improve_robot(std_scale, batch):
        cands = robot_factor.propose(inc["f_r"], batch, std_scale, rng)
        ll_c = robot_factor.log_density(cands)
        attr_c = (interaction.attraction_batch(
            np.broadcast_to(inc["h"], (batch, *inc["h"].shape)), cands,
            attraction_params, dt) if has_op else np.zeros(batch))
        coops_c = [interaction.cooperation_batch(
            cands, [np.broadcast_to(a, (batch, *a.shape))], cooperation_params)
            for a in inc["agents"]]
        delta = (ll_c - inc["ll_rob"]) + (attr_c - inc["attr"])
        for co_c, co_i in zip(coops_c, inc["coops"]):
            delta = delta + (co_c - co_i)
        j = int(np.argmax(delta))
        if not (np.isfinite(delta[j]) and delta[j] > 0):
            return False
        inc["f_r"] = cands[j].copy()
        inc["ll_rob"] = float(ll_c[j])
        inc["attr"] = float(attr_c[j]) if has_op else 0.0
        inc["coops"] = [float(c[j]) for c in coops_c]
        inc["total"] += float(delta[j])
        return True

    def improve_agent(i, std_scale, batch):
        f = agent_factors[i]
        cands = f.propose(inc["agents"][i], batch, std_scale, rng)
        ll_c = f.log_density(cands)
        co_c = interaction.cooperation_batch(
            np.broadcast_to(inc["f_r"], (batch, *inc["f_r"].shape)),
            [cands], cooperation_params)
        delta = (ll_c - inc["ll_ags"][i]) + (co_c - inc["coops"][i])
        j = int(np.argmax(delta))
        if not (np.isfinite(delta[j]) and delta[j] > 0):
            return False
        inc["agents"][i] = cands[j].copy()
        inc["ll_ags"][i] = float(ll_c[j])
        inc["coops"][i] = float(co_c[j])
        inc["total"] += float(delta[j])
        return True

    moves = ([improve_operator] if has_op else []) + [improve_robot] + \
        [lambda sc, b, i=i: improve_agent(i, sc, b) for i in range(len(agent_factors))]
    batch = max(1, s // 8)
    incumbent_trace = [initial_best]
    for it in range(1, config.refine_iterations + 1):
        std_scale = math.sqrt(_REFINE_SHRINK) ** it
        for move in moves:
            for _ in range(_REFINE_ROUNDS):
                if not move(std_scale, batch):
                    break
        incumbent_trace.append(inc["total"])

    sample = JointSample(h=inc["h"], f_r=inc["f_r"], agents=tuple(inc["agents"]),
                         unnormalized_log_density=inc["total"])
    diagnostics = {
        "total": inc["total"],
        "attraction": inc["attr"],
        "cooperation": float(sum(inc["coops"])),
        "operator": inc["ll_op"] if has_op else math.nan,
        "robot": inc["ll_rob"],
        "agents": list(inc["ll_ags"]),
        "initial_best": initial_best,
        "refined_gain": inc["total"] - initial_best,
        "incumbent_trace": incumbent_trace,
        "spread": {
            "attraction": _spread(attr) if has_op else 0.0,
            "cooperation": _spread(sum(coops)) if coops else 0.0,
            "operator": _spread(ll_op) if has_op else 0.0,
            "robot": _spread(ll_rob),
            "agents": [_spread(x) for x in ll_ags],
        },
        "fallback": False,
    }
    autonomy = autonomy_measure(operator, robot, float(grid.times()[0]))
    return BlendResult(map_sample=sample, next_action=inc["f_r"][1].copy(),
                       autonomy=autonomy, diagnostics=diagnostics)


def velocity_command(next_action: np.ndarray, pose: np.ndarray, dt: float,
                     v_max: float) -> np.ndarray:
    """Velocity that moves the current pose toward the planned next state."""
    v = (np.asarray(next_action, dtype=float)[:2] - np.asarray(pose, dtype=float)[:2]) / dt
    speed = float(np.hypot(v[0], v[1]))
    if speed > v_max > 0:
        v = v * (v_max / speed)
    return v


@dataclass(frozen=True)
class SessionConfig:
    """Everything a planning session needs besides the observation stream."""

    operator_kernel: KernelParams
    robot_kernel: KernelParams
    agent_kernel: KernelParams
    attraction: AttractionParams
    cooperation: CooperationParams
    planner: PlannerConfig
    robot_goal: tuple | None = None           # (x, y) workspace goal
    robot_goal_noise: float = 0.25
    operator_goals: tuple = ()                # command-space goals for a mixture
    operator_goal_noise: float = 0.05
    history_window: int = 48


def _unwrap_angles(theta: np.ndarray) -> np.ndarray:
    """Continuous-angle view of a wrapped sequence (first value anchors)."""
    out = np.array(theta, dtype=float)
    for i in range(1, len(out)):
        out[i] += 2.0 * math.pi * round((out[i - 1] - out[i]) / (2.0 * math.pi))
    return out


class PlannerSession:
    """Single-writer receding-horizon planning loop.

    Each tick ingests whatever observations the network delivered (late,
    missing, reordered all permitted), rebuilds posteriors on a grid
    anchored at the tick, runs MAP inference, and emits the next action.
    A tick whose inference fails falls back to the previous action with a
    flagged diagnostic.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        self._buffers: dict[str, dict[int, TimedObservation]] = {}
        self._tick = 0
        self._last_action: np.ndarray | None = None
        self.last_result: BlendResult | None = None

    def ingest(self, delivered: Sequence[TimedObservation]):
        """Record delivered observations; duplicates (same source+sequence) are ignored."""
        for o in delivered:
            self._buffers.setdefault(o.source, {}).setdefault(o.sequence, o)

    def _windowed(self, source: str) -> list[TimedObservation]:
        buf = self._buffers.get(source)
        if not buf:
            return []
        ordered = gp.canonical_order(buf.values())
        return ordered[-self.config.history_window:]

    def _robot_observations(self) -> list[TimedObservation]:
        obs = self._windowed("robot")
        if not obs:
            return obs
        theta = _unwrap_angles(np.array([o.value[2] for o in obs]))
        return [replace(o, value=(o.value[0], o.value[1], float(th)))
                for o, th in zip(obs, theta)]

    def _robot_posterior(self, grid: TimeGrid) -> GpPosterior:
        cfg = self.config
        obs = self._robot_observations()
        if cfg.robot_goal is None:
            return gp.posterior(cfg.robot_kernel, obs, grid, dim=gp.ROBOT_DIM)
        if obs:
            last = obs[-1]
            heading = math.atan2(cfg.robot_goal[1] - last.value[1],
                                 cfg.robot_goal[0] - last.value[0])
            # keep the goal heading on the same winding as the observed angles
            heading += 2.0 * math.pi * round((last.value[2] - heading) / (2.0 * math.pi))
        else:
            heading = 0.0
        goal3 = (float(cfg.robot_goal[0]), float(cfg.robot_goal[1]), heading)
        mix = gp.mixture_posterior(cfg.robot_kernel, obs, [goal3], grid,
                                   cfg.robot_goal_noise)
        return mix.components[0][1]

    def _operator_posterior(self, grid: TimeGrid):
        cfg = self.config
        obs = self._windowed("operator")
        if cfg.operator_goals:
            return gp.mixture_posterior(cfg.operator_kernel, obs,
                                        list(cfg.operator_goals), grid,
                                        cfg.operator_goal_noise)
        return gp.posterior(cfg.operator_kernel, obs, grid, dim=gp.OPERATOR_DIM)

    def _agent_posteriors(self, grid: TimeGrid) -> list[GpPosterior]:
        sources = sorted(s for s in self._buffers if s.startswith("agent"))
        return [gp.posterior(self.config.agent_kernel, self._windowed(s), grid,
                             dim=gp.AGENT_DIM)
                for s in sources]

    def step(self, delivered: Sequence[TimedObservation], now: float) -> BlendResult:
        """One planning tick at simulated time ``now``."""
        self.ingest(delivered)
        cfg = self.config
        grid = TimeGrid(now=float(now), horizon=cfg.planner.horizon, dt=cfg.planner.dt)
        operator = self._operator_posterior(grid)
        robot = self._robot_posterior(grid)
        agents = self._agent_posteriors(grid)
        tick_seed = int(np.random.SeedSequence((cfg.planner.seed, self._tick))
                        .generate_state(1)[0])
        tick_config = replace(cfg.planner, seed=tick_seed)
        try:
            result = map_infer(operator, robot, agents, cfg.attraction,
                               cfg.cooperation, tick_config)
        except InferenceFailure as exc:
            if self._last_action is not None:
                action = self._last_action.copy()
            else:
                action = robot.mean[0].copy()
            result = BlendResult(
                map_sample=None, next_action=action,
                autonomy=autonomy_measure(operator, robot, float(grid.times()[0])),
                diagnostics={"fallback": True, "error": str(exc), **exc.diagnostics})
        self._last_action = result.next_action.copy()
        self.last_result = result
        self._tick += 1
        return result
