"""World simulation: robot kinematics, crowd motion, scripted operators."""

import math

import numpy as np
import pytest

from blendnav.errors import InvalidInput
from blendnav.world import (AgentState, OperatorScript, RobotState, Scenario,
                            World, scripted_command, step_agents, step_robot,
                            wrap_angle)


class TestRobot:
    def test_zero_command_is_identity(self):
        s = RobotState(1.0, 2.0, 0.5)
        assert step_robot(s, (0.0, 0.0), 0.1) == s

    def test_euler_step(self):
        s = step_robot(RobotState(0.0, 0.0, 0.0), (1.0, 0.0), 0.1)
        assert (s.x, s.y, s.theta) == (0.1, 0.0, 0.0)

    def test_diagonal_closed_form(self):
        v = (1.0 / math.sqrt(2), 1.0 / math.sqrt(2))
        s = RobotState(0.0, 0.0, 0.0)
        for _ in range(10):
            s = step_robot(s, v, 0.1)
        assert abs(s.x - math.sqrt(2) / 2) < 1e-12
        assert abs(s.y - math.sqrt(2) / 2) < 1e-12
        assert abs(s.theta - math.pi / 4) < 1e-12

    def test_speed_clamped(self):
        s = step_robot(RobotState(0.0, 0.0, 0.0), (10.0, 0.0), 1.0, v_max=1.0)
        assert abs(s.x - 1.0) < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInput):
            step_robot(RobotState(0.0, 0.0, 0.0), (math.nan, 0.0), 0.1)

    def test_theta_wrapped(self):
        assert RobotState(0.0, 0.0, 3 * math.pi).theta == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)


class TestAgents:
    def test_advances_along_line(self):
        a = AgentState(0, 0.0, 0.0, (1.0, 0.0), 1.0)
        out = step_agents([a], 0.1, np.random.default_rng(0), 0.0)[0]
        assert abs(out.x - 0.1) < 1e-12 and out.y == 0.0

    def test_at_goal_stays_put(self):
        a = AgentState(0, 1.0, 2.0, (1.0, 2.0), 1.0)
        out = step_agents([a], 0.1, np.random.default_rng(0), 0.5)[0]
        assert (out.x, out.y) == (1.0, 2.0)

    def test_never_overshoots(self):
        a = AgentState(0, 0.0, 0.0, (0.05, 0.0), 1.0)
        out = step_agents([a], 0.1, np.random.default_rng(0), 0.0)[0]
        assert (out.x, out.y) == (0.05, 0.0)

    def test_random_walk_variance(self):
        # displacement variance around the deterministic path ~ N * std^2
        rng = np.random.default_rng(21)
        std, n_steps, n_agents = 0.05, 40, 400
        agents = [AgentState(i, 0.0, 0.0, (1000.0, 0.0), 0.0)
                  for i in range(n_agents)]
        for _ in range(n_steps):
            agents = step_agents(agents, 0.1, rng, std)
        ys = np.array([a.y for a in agents])
        want = n_steps * std ** 2
        se = want * math.sqrt(2.0 / (n_agents - 1))
        assert abs(ys.var(ddof=1) - want) < 3 * se

    def test_distance_to_goal_non_increasing_without_noise(self):
        a = AgentState(0, 0.3, -0.7, (2.0, 1.0), 0.8)
        rng = np.random.default_rng(0)
        prev = math.hypot(a.goal[0] - a.x, a.goal[1] - a.y)
        for _ in range(50):
            a = step_agents([a], 0.1, rng, 0.0)[0]
            d = math.hypot(a.goal[0] - a.x, a.goal[1] - a.y)
            assert d <= prev + 1e-12
            prev = d


class TestScripts:
    def _snap(self, x=0.0, y=0.0):
        w = World(Scenario(robot_start=(x, y, 0.0)), seed=0)
        return w.snapshot()

    def test_waypoint_straight_ahead(self):
        script = OperatorScript(kind="waypoint-follower", waypoints=((5.0, 0.0),),
                                v_max=0.8)
        cmd = scripted_command(script, self._snap(), 0)
        assert cmd == (0.8, 0.0)

    def test_silent_emits_nothing(self):
        script = OperatorScript(kind="silent")
        for tick in range(5):
            assert scripted_command(script, self._snap(), tick) is None

    def test_pure_function_of_snapshot(self):
        script = OperatorScript(kind="waypoint-follower", waypoints=((1.0, 1.0),))
        old = self._snap(0.2, -0.1)
        assert scripted_command(script, old, 3) == scripted_command(script, old, 99)

    def test_cutoff_silences(self):
        script = OperatorScript(kind="waypoint-follower", waypoints=((5.0, 0.0),),
                                cutoff_tick=10)
        assert scripted_command(script, self._snap(), 9) is not None
        assert scripted_command(script, self._snap(), 10) is None

    def test_reached_waypoints_stop(self):
        script = OperatorScript(kind="waypoint-follower", waypoints=((0.1, 0.0),),
                                waypoint_radius=0.25)
        assert scripted_command(script, self._snap(), 0) is None

    def test_noisy_joystick_needs_rng(self):
        script = OperatorScript(kind="noisy-joystick", waypoints=((5.0, 0.0),),
                                noise_std=0.1)
        with pytest.raises(InvalidInput):
            scripted_command(script, self._snap(), 0, rng=None)
        cmd = scripted_command(script, self._snap(), 0,
                               rng=np.random.default_rng(0))
        assert cmd is not None and cmd != (1.0, 0.0)


class TestWorld:
    def test_deterministic_fold(self):
        sc = Scenario(agents=((0.0, 1.0, 3.0, 1.0, 0.5),), agent_noise_std=0.02,
                      robot_obs_noise_std=0.01)
        def trace():
            w = World(sc, seed=9)
            out = []
            for i in range(30):
                w.step((0.5, 0.1))
                out.append((w.robot.x, w.robot.y, w.agents[0].x, w.agents[0].y))
                out.extend(tuple(o.value) for o in w.measurements())
            return out
        assert trace() == trace()

    def test_speed_limit_respected(self):
        w = World(Scenario(v_max=0.7), seed=0)
        for _ in range(20):
            before = w.robot.pose()[:2]
            w.step((5.0, -3.0))
            speed = np.linalg.norm(w.robot.pose()[:2] - before) / w.scenario.dt
            assert speed <= 0.7 + 1e-9

    def test_measurement_sources_and_sequences(self):
        sc = Scenario(agents=((1.0, 1.0, 2.0, 2.0, 0.3),))
        w = World(sc, seed=1)
        first = w.measurements()
        w.step((0.0, 0.0))
        second = w.measurements()
        assert [o.source for o in first] == ["robot", "agent:0"]
        by_src = {o.source: o for o in second}
        assert by_src["robot"].sequence == 1
        assert by_src["agent:0"].sequence == 1

    def test_goal_reached(self):
        w = World(Scenario(goal=(0.5, 0.0), goal_radius=0.3), seed=0)
        assert not w.goal_reached()
        w.step((1.0, 0.0))
        for _ in range(5):
            w.step((1.0, 0.0))
        assert w.goal_reached()
