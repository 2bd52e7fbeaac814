"""Session engine and server bridging an operator console to the planner.

``TeleopSession`` is the transport-agnostic tick core: console lines go
through the impaired uplink into the planner, the planner's action drives
the world, and world snapshots return through the impaired downlink as
encoded messages.  The same core backs the headless experiment runner, the
scripted offline console, and the WebSocket server, so a scripted session
over the wire and a headless run are the same computation.
"""

from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .channel import Channel, ChannelConfig
from .errors import ProtocolError
from .gp import TimedObservation
from .planner import PlannerSession, SessionConfig, velocity_command
from .protocol import PROTOCOL_VERSION, WireMessage, decode, encode
from .world import RobotState, Scenario, World, scripted_command

log = logging.getLogger("blendnav.service")

MAX_COMMAND_RATE_HZ = 30.0
PATH_POINTS = 8


@dataclass
class ConsoleView:
    """What a console believes the world looks like (possibly stale)."""

    tick: int
    time: float
    robot: RobotState
    agents: tuple
    goal: tuple | None
    operator_weight: float
    robot_weight: float
    staleness_s: float


def _finite(x: float) -> float:
    return float(x) if math.isfinite(x) else 0.0


class TeleopSession:
    """One vehicle, one planner, two impaired channels, one console slot."""

    def __init__(self, scenario: Scenario, session_config: SessionConfig,
                 uplink: ChannelConfig, downlink: ChannelConfig, seed: int,
                 max_ticks: int = 2000):
        self.scenario = scenario
        self.seed = seed
        self.max_ticks = max_ticks
        root = np.random.SeedSequence((seed, 0x5E55))
        world_seed, up_seed, down_seed, plan_seed = (
            int(s.generate_state(1)[0]) for s in root.spawn(4))
        self.world = World(scenario, world_seed)
        self.planner = PlannerSession(_reseed_session(session_config, plan_seed))
        self.uplink = Channel(_reseed_channel(uplink, up_seed, "uplink"))
        self.downlink = Channel(_reseed_channel(downlink, down_seed, "downlink"))
        self._out_seq = 0
        self._latest_command: TimedObservation | None = None
        self.rows: list[dict] = []
        self.fallback_ticks = 0

    @property
    def dt(self) -> float:
        return self.scenario.dt

    def _rate_limit(self, commands: list[WireMessage]) -> list[WireMessage]:
        """Thin command bursts above the rate cap to the newest per tick."""
        cap = max(1, int(MAX_COMMAND_RATE_HZ * self.dt))
        return commands[-cap:] if len(commands) > cap else commands

    def tick(self, inbound: list[bytes]) -> list[bytes]:
        """Advance one tick; returns downlink lines due for the console."""
        now = self.world.time
        commands = []
        for line in inbound:
            try:
                msg = decode(line)
            except ProtocolError as exc:
                log.warning("dropping undecodable console line: %s", exc)
                continue
            if msg.type == "command":
                commands.append(msg)
        for msg in self._rate_limit(commands):
            self.uplink.send(msg, now)

        delivered = []
        for event in self.uplink.poll(now):
            msg = event.payload
            obs = TimedObservation(timestamp=msg.sent_at, source="operator",
                                   sequence=msg.seq,
                                   receive_time=event.delivery_time,
                                   value=(msg.body["vx"], msg.body["vy"]))
            delivered.append(obs)
            if (self._latest_command is None
                    or obs.timestamp > self._latest_command.timestamp):
                self._latest_command = obs
        delivered.extend(self.world.measurements())

        result = self.planner.step(delivered, now)
        if result.diagnostics.get("fallback"):
            self.fallback_ticks += 1
        pose = self.world.robot.pose()
        cmd = velocity_command(result.next_action, pose, self.dt, self.scenario.v_max)
        self.world.step(cmd)
        executed_v = (self.world.robot.pose()[:2] - pose[:2]) / self.dt

        if self._latest_command is not None:
            cv = np.array(self._latest_command.value)
            tracking = float(np.linalg.norm(executed_v - cv))
        else:
            tracking = math.nan
        clearances = [math.hypot(a.x - self.world.robot.x, a.y - self.world.robot.y)
                      for a in self.world.agents]
        self.rows.append({
            "tick": self.world.tick - 1,
            "time": now,
            "x": self.world.robot.x, "y": self.world.robot.y,
            "theta": self.world.robot.theta,
            "operator_weight": result.autonomy.operator_weight,
            "robot_weight": result.autonomy.robot_weight,
            "operator_pred_std": math.sqrt(result.autonomy.operator_trace)
            if math.isfinite(result.autonomy.operator_trace) else math.inf,
            "tracking_error": tracking,
            "min_clearance": min(clearances) if clearances else math.inf,
            "fallback": 1 if result.diagnostics.get("fallback") else 0,
        })

        snap = self.world.snapshot()
        planned = self._planned_path(result)
        ws_payload = {
            "tick": snap.tick, "time": snap.time,
            "robot": [snap.robot.x, snap.robot.y, snap.robot.theta],
            "agents": [[a.x, a.y] for a in snap.agents],
            "goal": list(snap.goal) if snap.goal is not None else [],
            "operator_weight": result.autonomy.operator_weight,
            "robot_weight": result.autonomy.robot_weight,
            "planned_path": planned,
        }
        diag = result.diagnostics
        bd_payload = {
            "tick": snap.tick,
            "total": _finite(diag.get("total", 0.0)),
            "attraction": _finite(diag.get("attraction", 0.0)),
            "cooperation": _finite(diag.get("cooperation", 0.0)),
            "operator": _finite(diag.get("operator", 0.0)),
            "robot": _finite(diag.get("robot", 0.0)),
            "agents": _finite(sum(diag.get("agents", []) or [0.0])),
            "fallback": 1 if diag.get("fallback") else 0,
        }
        self.downlink.send(("world_state", ws_payload, snap.time), snap.time)
        self.downlink.send(("blend_diag", bd_payload, snap.time), snap.time)

        out = []
        for event in self.downlink.poll(snap.time):
            mtype, payload, snap_time = event.payload
            body = dict(payload)
            if mtype == "world_state":
                body["staleness_s"] = event.delivery_time - snap_time
            msg = WireMessage(type=mtype, seq=self._out_seq,
                              sent_at=event.delivery_time, body=body)
            self._out_seq += 1
            out.append(encode(msg))
        return out

    def _planned_path(self, result) -> list:
        if result.map_sample is None:
            return []
        xy = result.map_sample.f_r[:, :2]
        if len(xy) > PATH_POINTS:
            idx = np.linspace(0, len(xy) - 1, PATH_POINTS).round().astype(int)
            xy = xy[idx]
        return [[float(p[0]), float(p[1])] for p in xy]

    def done(self) -> bool:
        return self.world.tick >= self.max_ticks or self.world.goal_reached()


def _reseed_channel(cfg: ChannelConfig, seed: int, direction: str) -> ChannelConfig:
    return ChannelConfig(base_delay=cfg.base_delay, delay_jitter=cfg.delay_jitter,
                         drop_probability=cfg.drop_probability,
                         direction=direction, seed=seed)


def _reseed_session(cfg: SessionConfig, seed: int) -> SessionConfig:
    from dataclasses import replace
    return replace(cfg, planner=replace(cfg.planner, seed=seed))


class ScriptedConsole:
    """Headless stand-in for the browser console, driven by an OperatorScript.

    It sees only what the downlink delivers and stamps commands with the
    echoed (stale) simulation clock, exactly like a live console would.
    """

    def __init__(self, script, seed: int = 0):
        self.script = script
        self._rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
        self._seq = 0
        self.view: ConsoleView | None = None
        self.decode_errors = 0

    def handle(self, lines: list[bytes]):
        for line in lines:
            try:
                msg = decode(line)
            except ProtocolError:
                self.decode_errors += 1
                continue
            if msg.type != "world_state":
                continue
            b = msg.body
            self.view = ConsoleView(
                tick=b["tick"], time=b["time"],
                robot=RobotState(*b["robot"]),
                agents=tuple((a[0], a[1]) for a in b["agents"]),
                goal=tuple(b["goal"]) if b["goal"] else None,
                operator_weight=b["operator_weight"],
                robot_weight=b["robot_weight"],
                staleness_s=b["staleness_s"])

    def poll_commands(self, tick: int) -> list[bytes]:
        cmd = scripted_command(self.script, self.view, tick, self._rng)
        if cmd is None:
            return []
        msg = WireMessage(type="command", seq=self._seq, sent_at=self.view.time,
                          body={"vx": cmd[0], "vy": cmd[1]})
        self._seq += 1
        return [encode(msg)]


@dataclass
class SessionResult:
    """Everything a completed scripted session produced."""

    rows: list
    completed: bool
    completion_tick: int | None
    fallback_ticks: int
    transcript: list = field(default_factory=list)


def run_session(session: TeleopSession, console: ScriptedConsole | None,
                record_transcript: bool = False) -> SessionResult:
    """Drive a session to goal or tick budget with an optional scripted console."""
    transcript = []
    while not session.done():
        tick = session.world.tick
        inbound = console.poll_commands(tick) if console is not None else []
        out = session.tick(inbound)
        if console is not None:
            console.handle(out)
        if record_transcript:
            transcript.extend(("in", line) for line in inbound)
            transcript.extend(("out", line) for line in out)
    completed = session.world.goal_reached()
    return SessionResult(rows=session.rows, completed=completed,
                         completion_tick=session.world.tick if completed else None,
                         fallback_ticks=session.fallback_ticks,
                         transcript=transcript)


class TeleopServer:
    """WebSocket front end: one live console per session, sessions never block.

    The tick loop runs at the scenario cadence whether or not a console is
    connected; a silent or absent console simply slides autonomy to the
    robot.  Reconnecting resumes the same session (sequence gaps are treated
    as loss).
    """

    def __init__(self, session: TeleopSession, pace: float = 1.0):
        self.session = session
        self.pace = pace
        self._console = None
        self._inbox: list[bytes] = []
        self._server = None
        self.ticker_done = asyncio.Event()

    async def _handshake(self, ws) -> bool:
        try:
            raw = await asyncio.wait_for(ws.recv(), timeout=10.0)
            msg = decode(raw if isinstance(raw, bytes) else raw.encode())
        except (ProtocolError, asyncio.TimeoutError) as exc:
            await ws.send(encode(WireMessage(
                type="error", seq=0, sent_at=self.session.world.time,
                body={"message": f"bad hello: {exc}"})))
            return False
        if msg.type != "hello" or msg.body.get("version") != PROTOCOL_VERSION:
            await ws.send(encode(WireMessage(
                type="error", seq=0, sent_at=self.session.world.time,
                body={"message": f"protocol version mismatch; server speaks "
                                 f"{PROTOCOL_VERSION}"})))
            return False
        now = self.session.world.time
        await ws.send(encode(WireMessage(type="hello", seq=0, sent_at=now,
                                         body={"version": PROTOCOL_VERSION,
                                               "role": "server"})))
        await ws.send(encode(WireMessage(
            type="config", seq=1, sent_at=now,
            body={"dt": self.session.dt,
                  "horizon": self.session.planner.config.planner.horizon,
                  "v_max": self.session.scenario.v_max})))
        return True

    async def _handle(self, ws):
        if self._console is not None:
            await ws.send(encode(WireMessage(
                type="error", seq=0, sent_at=self.session.world.time,
                body={"message": "session already has a console"})))
            await ws.close()
            return
        if not await self._handshake(ws):
            await ws.close()
            return
        self._console = ws
        log.info("console attached")
        try:
            async for raw in ws:
                self._inbox.append(raw if isinstance(raw, bytes) else raw.encode())
        finally:
            self._console = None
            log.info("console detached; session continues on autonomy")

    async def _ticker(self):
        try:
            while not self.session.done():
                inbound, self._inbox = self._inbox, []
                out = self.session.tick(inbound)
                ws = self._console
                if ws is not None:
                    for line in out:
                        try:
                            await ws.send(line)
                        except Exception:
                            break
                if self.pace > 0:
                    await asyncio.sleep(self.session.dt * self.pace)
                else:
                    await asyncio.sleep(0)
        finally:
            self.ticker_done.set()

    async def serve(self, host: str, port: int):
        import websockets

        async with websockets.serve(self._handle, host, port) as server:
            self._server = server
            log.info("listening on %s:%d", host, port)
            await self._ticker()
            ws = self._console
            if ws is not None:
                await ws.send(encode(WireMessage(
                    type="bye", seq=self.session._out_seq,
                    sent_at=self.session.world.time, body={})))
                await ws.close()
