/**
 * Pure scene construction: console state in, a deterministic list of draw
 * operations out. The canvas painter consumes these; tests snapshot them.
 * Every drawable traces back to a received message or local input state.
 */

import { ConsoleStore } from "./state.js";

export const GAUGE_QUANTUM = 0.01; // gauge renders in whole percent

export type DrawOp =
  | { kind: "circle"; x: number; y: number; r: number; style: "robot" | "agent" | "goal" }
  | { kind: "heading"; x: number; y: number; theta: number; len: number }
  | { kind: "path"; points: [number, number][]; style: "planned" }
  | { kind: "gauge"; operator: number; robot: number }
  | { kind: "label"; id: "staleness" | "status" | "errors" | "discarded" | "tick"; text: string }
  | { kind: "banner"; id: "stale-link" | "disconnected"; text: string };

function quantize(w: number): number {
  return Math.round(w / GAUGE_QUANTUM) * GAUGE_QUANTUM;
}

export function buildScene(store: ConsoleStore, nowMs: number): DrawOp[] {
  const ops: DrawOp[] = [];
  const world = store.world;
  if (world !== null) {
    if (world.goal !== null) {
      ops.push({ kind: "circle", x: world.goal[0], y: world.goal[1], r: 0.3,
                 style: "goal" });
    }
    if (world.planned_path.length > 0) {
      ops.push({ kind: "path", points: world.planned_path, style: "planned" });
    }
    for (const [ax, ay] of world.agents) {
      ops.push({ kind: "circle", x: ax, y: ay, r: 0.18, style: "agent" });
    }
    ops.push({ kind: "circle", x: world.robot[0], y: world.robot[1], r: 0.22,
               style: "robot" });
    ops.push({ kind: "heading", x: world.robot[0], y: world.robot[1],
               theta: world.robot[2], len: 0.38 });
    ops.push({ kind: "gauge", operator: quantize(world.operator_weight),
               robot: quantize(world.robot_weight) });
    ops.push({ kind: "label", id: "staleness",
               text: `view is ${world.staleness_s.toFixed(2)} s old` });
    ops.push({ kind: "label", id: "tick", text: `tick ${world.tick}` });
  }
  ops.push({ kind: "label", id: "status", text: store.status });
  if (store.errorCount > 0) {
    ops.push({ kind: "label", id: "errors", text: `${store.errorCount} bad msgs` });
  }
  if (store.discardedCommands > 0) {
    ops.push({ kind: "label", id: "discarded",
               text: `${store.discardedCommands} commands discarded offline` });
  }
  if (store.status !== "connected") {
    ops.push({ kind: "banner", id: "disconnected", text: "NOT CONNECTED" });
  } else if (store.linkStale(nowMs)) {
    ops.push({ kind: "banner", id: "stale-link", text: "STALE LINK" });
  }
  return ops;
}

/** Convenience for tests and HUD: the gauge op of a built scene, if any. */
export function gaugeOf(ops: DrawOp[]): { operator: number; robot: number } | null {
  for (const op of ops) {
    if (op.kind === "gauge") {
      return { operator: op.operator, robot: op.robot };
    }
  }
  return null;
}
