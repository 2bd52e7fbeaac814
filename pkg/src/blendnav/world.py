"""Discrete-time world: holonomic robot, goal-directed crowd, scripted operators.

The world owns ground truth and produces the timestamped measurements that
feed the network channels.  Commands are velocity vectors; heading is
derived from the commanded direction and wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInput
from .gp import TimedObservation

_SPEED_EPS = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise InvalidInput(f"non-finite robot state {(self.x, self.y, self.theta)}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def pose(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class AgentState:
    id: int
    x: float
    y: float
    goal: tuple
    speed: float

    def __post_init__(self):
        if self.speed < 0:
            raise InvalidInput(f"agent speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def step_robot(state: RobotState, command: Sequence[float], dt: float,
               v_max: float = math.inf) -> RobotState:
    """Integrate a velocity command for one step; heading follows the motion."""
    if dt <= 0:
        raise InvalidInput(f"dt must be positive, got {dt}")
    vx, vy = float(command[0]), float(command[1])
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise InvalidInput(f"non-finite command {command!r}")
    speed = math.hypot(vx, vy)
    if speed > v_max:
        vx, vy = vx * v_max / speed, vy * v_max / speed
        speed = v_max
    theta = math.atan2(vy, vx) if speed > _SPEED_EPS else state.theta
    return RobotState(state.x + vx * dt, state.y + vy * dt, theta)


def step_agents(agents: Sequence[AgentState], dt: float,
                rng: np.random.Generator, noise_std: float = 0.0) -> list[AgentState]:
    """Advance each agent toward its goal; agents at their goal stay put."""
    if dt <= 0:
        raise InvalidInput(f"dt must be positive, got {dt}")
    out = []
    for a in agents:
        dx, dy = a.goal[0] - a.x, a.goal[1] - a.y
        dist = math.hypot(dx, dy)
        if dist <= _SPEED_EPS:
            out.append(a)
            continue
        step = min(a.speed * dt, dist)
        nx = a.x + dx / dist * step
        ny = a.y + dy / dist * step
        if noise_std > 0:
            nx += noise_std * rng.standard_normal()
            ny += noise_std * rng.standard_normal()
        out.append(replace(a, x=nx, y=ny))
    return out


@dataclass(frozen=True)
class OperatorScript:
    """Headless operator model: waypoint follower, noisy joystick, or silence.

    The follower steers at full speed toward its next waypoint using whatever
    (possibly stale) snapshot it is shown; the noisy variant adds Gaussian
    noise to that command; ``silent`` emits nothing.  ``cutoff_tick`` mutes
    the script from that tick on, modeling operator dropout.
    """

    kind: str
    waypoints: tuple = ()
    noise_std: float = 0.0
    v_max: float = 1.0
    waypoint_radius: float = 0.25
    cutoff_tick: int | None = None

    def __post_init__(self):
        if self.kind not in ("waypoint-follower", "noisy-joystick", "silent"):
            raise InvalidInput(f"unknown script kind {self.kind!r}")
        if self.kind != "silent" and not self.waypoints:
            raise InvalidInput(f"{self.kind} script needs waypoints")
        if self.noise_std < 0:
            raise InvalidInput("noise_std must be >= 0")
        object.__setattr__(self, "waypoints",
                           tuple((float(x), float(y)) for x, y in self.waypoints))


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable view of the world handed to consoles and scripts."""

    tick: int
    time: float
    robot: RobotState
    agents: tuple
    goal: tuple | None


def scripted_command(script: OperatorScript, snapshot: WorldSnapshot | None,
                     tick: int, rng: np.random.Generator | None = None):
    """Command the script would send given its believed world view, or None.

    Pure function of the snapshot for the noiseless kinds: a follower shown
    a stale snapshot behaves exactly like an undelayed follower shown that
    same old state.
    """
    if script.kind == "silent" or snapshot is None:
        return None
    if script.cutoff_tick is not None and tick >= script.cutoff_tick:
        return None
    pos = snapshot.robot.pose()[:2]
    target = None
    for w in script.waypoints:
        if math.hypot(w[0] - pos[0], w[1] - pos[1]) > script.waypoint_radius:
            target = w
            break
    if target is None:
        return None
    d = np.array(target) - pos
    cmd = d / np.linalg.norm(d) * script.v_max
    if script.kind == "noisy-joystick" and script.noise_std > 0:
        if rng is None:
            raise InvalidInput("noisy-joystick needs an rng")
        cmd = cmd + script.noise_std * rng.standard_normal(2)
    return float(cmd[0]), float(cmd[1])


@dataclass(frozen=True)
class Scenario:
    """Initial conditions and physics settings for a run."""

    robot_start: tuple = (0.0, 0.0, 0.0)
    goal: tuple | None = None
    goal_radius: float = 0.3
    v_max: float = 1.0
    dt: float = 0.05
    agents: tuple = ()                      # ((x, y, goal_x, goal_y, speed), ...)
    agent_noise_std: float = 0.0
    robot_obs_noise_std: float = 0.0
    agent_obs_noise_std: float = 0.0
    script: OperatorScript = OperatorScript(kind="silent")

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidInput("scenario dt must be positive")
        if self.v_max <= 0:
            raise InvalidInput("scenario v_max must be positive")
        object.__setattr__(self, "agents", tuple(tuple(float(v) for v in a)
                                                 for a in self.agents))


class World:
    """Single-writer tick loop owning ground truth.

    Deterministic under seed: state is a pure fold over the initial state,
    the command stream, and the seeded noise streams.
    """

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.robot = RobotState(*scenario.robot_start)
        self.agents = [AgentState(id=i, x=a[0], y=a[1], goal=(a[2], a[3]), speed=a[4])
                       for i, a in enumerate(scenario.agents)]
        self.tick = 0
        seq = np.random.SeedSequence((seed, 0x1D))
        agent_seed, meas_seed = seq.spawn(2)
        self._agent_rng = np.random.default_rng(agent_seed)
        self._meas_rng = np.random.default_rng(meas_seed)
        self._seq_counters: dict[str, int] = {}

    @property
    def time(self) -> float:
        return self.tick * self.scenario.dt

    def snapshot(self) -> WorldSnapshot:
        return WorldSnapshot(tick=self.tick, time=self.time, robot=self.robot,
                             agents=tuple(self.agents), goal=self.scenario.goal)

    def step(self, command: Sequence[float] | None):
        """Advance one tick: integrate the robot command and move the crowd."""
        sc = self.scenario
        if command is not None:
            self.robot = step_robot(self.robot, command, sc.dt, sc.v_max)
        self.agents = step_agents(self.agents, sc.dt, self._agent_rng,
                                  sc.agent_noise_std)
        self.tick += 1

    def _next_seq(self, source: str) -> int:
        n = self._seq_counters.get(source, 0)
        self._seq_counters[source] = n + 1
        return n

    def measurements(self) -> list[TimedObservation]:
        """Onboard measurements of robot pose and agent positions at this tick."""
        sc = self.scenario
        now = self.time
        out = []
        pose = self.robot.pose()
        if sc.robot_obs_noise_std > 0:
            pose = pose + sc.robot_obs_noise_std * self._meas_rng.standard_normal(3)
            pose[2] = wrap_angle(pose[2])
        out.append(TimedObservation(timestamp=now, source="robot",
                                    sequence=self._next_seq("robot"),
                                    receive_time=now, value=tuple(pose)))
        for a in self.agents:
            pos = a.position()
            if sc.agent_obs_noise_std > 0:
                pos = pos + sc.agent_obs_noise_std * self._meas_rng.standard_normal(2)
            out.append(TimedObservation(timestamp=now, source=f"agent:{a.id}",
                                        sequence=self._next_seq(f"agent:{a.id}"),
                                        receive_time=now, value=tuple(pos)))
        return out

    def goal_reached(self) -> bool:
        g = self.scenario.goal
        if g is None:
            return False
        return math.hypot(g[0] - self.robot.x, g[1] - self.robot.y) <= self.scenario.goal_radius
