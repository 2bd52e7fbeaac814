/**
 * Console-side session state. Everything here is either received from the
 * server or produced by local input; the console never invents world state.
 */

import { ProtocolError, WireMessage, decode, encode, makeMessage } from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export interface WorldState {
  tick: number;
  time: number;
  robot: [number, number, number];
  agents: [number, number][];
  goal: [number, number] | null;
  operator_weight: number;
  robot_weight: number;
  planned_path: [number, number][];
  staleness_s: number;
}

export interface ServerConfig {
  dt: number;
  horizon: number;
  v_max: number;
}

/** Link is declared stale after this long without any server message. */
export const STALE_LINK_MS = 2000;

export class ConsoleStore {
  status: ConnectionStatus = "disconnected";
  world: WorldState | null = null;
  config: ServerConfig | null = null;
  lastError = "";
  errorCount = 0;
  discardedCommands = 0;
  sentCommands = 0;
  lastMessageAtMs: number | null = null;
  private seq = 1; // 0 is spent on hello

  /** Clock the operator lives by: the (stale) time echoed in world_state. */
  echoedClock(): number | null {
    return this.world === null ? null : this.world.time;
  }

  vMax(): number {
    return this.config === null ? 1.0 : this.config.v_max;
  }

  helloLine(): string {
    return encode(makeMessage("hello", 0, 0.0,
                              { version: 1, role: "console" }));
  }

  /** Ingest one server line; malformed input counts an error and is dropped. */
  handleLine(line: string, nowMs: number): WireMessage | null {
    let msg: WireMessage;
    try {
      msg = decode(line);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.errorCount += 1;
        return null;
      }
      throw err;
    }
    this.lastMessageAtMs = nowMs;
    if (msg.type === "world_state") {
      const b = msg.body as Record<string, unknown>;
      this.world = {
        tick: b.tick as number,
        time: b.time as number,
        robot: b.robot as [number, number, number],
        agents: b.agents as [number, number][],
        goal: (b.goal as number[]).length === 2 ? b.goal as [number, number] : null,
        operator_weight: b.operator_weight as number,
        robot_weight: b.robot_weight as number,
        planned_path: b.planned_path as [number, number][],
        staleness_s: b.staleness_s as number,
      };
    } else if (msg.type === "config") {
      const b = msg.body as Record<string, unknown>;
      this.config = { dt: b.dt as number, horizon: b.horizon as number,
                      v_max: b.v_max as number };
    } else if (msg.type === "error") {
      this.lastError = String(msg.body.message);
    }
    return msg;
  }

  /**
   * Build an outbound command line for a normalized input vector, stamped
   * with the echoed clock. Disconnected (or clockless) commands are
   * discarded locally and counted so the UI can show the indicator.
   */
  sendCommand(input: { x: number; y: number }): string | null {
    const clock = this.echoedClock();
    if (this.status !== "connected" || clock === null) {
      this.discardedCommands += 1;
      return null;
    }
    const vmax = this.vMax();
    const line = encode(makeMessage("command", this.seq, clock,
                                    { vx: input.x * vmax, vy: input.y * vmax }));
    this.seq += 1;
    this.sentCommands += 1;
    return line;
  }

  linkStale(nowMs: number): boolean {
    return this.status === "connected"
      && this.lastMessageAtMs !== null
      && nowMs - this.lastMessageAtMs > STALE_LINK_MS;
  }
}
