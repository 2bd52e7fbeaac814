/**
 * Protocol conformance: the console must encode and decode the frozen
 * golden vectors byte-exactly — the same file the server suite runs on.
 */

import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { test } from "node:test";

import { ProtocolError, WireMessage, decode, encode, makeMessage, q6 } from "../src/protocol.js";

const GOLDEN_URL = new URL("../../../protocol/golden_vectors.txt", import.meta.url);

function goldenMessages(): WireMessage[] {
  return [
    makeMessage("hello", 0, 0.0, { version: 1, role: "console" }),
    makeMessage("hello", 0, 0.0, { version: 1, role: "server" }),
    makeMessage("config", 1, 0.0, { dt: 0.05, horizon: 20, v_max: 1.0 }),
    makeMessage("command", 1, 0.0, { vx: 1.0, vy: 0.0 }),
    makeMessage("command", 2, 12.345678, { vx: -0.707107, vy: 0.5 }),
    makeMessage("world_state", 3, 0.35, {
      tick: 7, time: 0.35, robot: [1.25, -2.5, 0.785398],
      agents: [[0.1, 0.2], [3.0, -1.0]], goal: [5.0, 0.0],
      operator_weight: 0.25, robot_weight: 0.75,
      planned_path: [[1.25, -2.5], [1.3, -2.45]], staleness_s: 0.1,
    }),
    makeMessage("world_state", 4, 0.4, {
      tick: 8, time: 0.4, robot: [0.0, 0.0, 0.0], agents: [], goal: [],
      operator_weight: 0.0, robot_weight: 1.0, planned_path: [],
      staleness_s: 1.05,
    }),
    makeMessage("blend_diag", 5, 0.4, {
      tick: 8, total: -12.25, attraction: -3.5, cooperation: -0.125,
      operator: 4.5, robot: -8.0, agents: -5.125, fallback: 0,
    }),
    makeMessage("error", 6, 1.0,
                { message: "protocol version mismatch; server speaks 1" }),
    makeMessage("bye", 7, 99.999999, {}),
  ];
}

test("golden vectors encode byte-exactly", () => {
  const frozen = readFileSync(GOLDEN_URL, "utf-8").split(/(?<=\n)/);
  const built = goldenMessages().map(encode);
  assert.equal(frozen.length, 10);
  assert.deepEqual(built, frozen);
});

test("golden lines decode and re-encode identically", () => {
  const frozen = readFileSync(GOLDEN_URL, "utf-8").split(/(?<=\n)/);
  for (const line of frozen) {
    assert.equal(encode(decode(line)), line);
  }
});

test("messages survive a decode round trip", () => {
  for (const m of goldenMessages()) {
    assert.deepEqual(decode(encode(m)), m);
  }
});

test("floats quantize at construction and -0 normalizes", () => {
  const m = makeMessage("command", 3, 1.23456789, { vx: 0.1234567891, vy: -1e-9 });
  assert.equal(m.sent_at, 1.234568);
  assert.equal(m.body.vx, 0.123457);
  assert.ok(Object.is(m.body.vy, 0));
  assert.match(encode(m), /"vy":0\.000000/);
  assert.equal(q6(-0), 0);
});

test("schema violations are protocol errors", () => {
  assert.throws(() => makeMessage("teleport", 0, 0, {}), ProtocolError);
  assert.throws(() => makeMessage("command", 0, 0, { vx: 1 }), ProtocolError);
  assert.throws(() => makeMessage("command", 0, 0, { vx: 1, vy: 0, vz: 0 }),
                ProtocolError);
  assert.throws(() => makeMessage("command", -1 as number, 0, { vx: 1, vy: 0 }),
                ProtocolError);
  assert.throws(() => makeMessage("command", 0, 0, { vx: Infinity, vy: 0 }),
                ProtocolError);
});

test("malformed lines report a byte offset", () => {
  const line = encode(goldenMessages()[3]);
  try {
    decode(line.slice(0, 40));
    assert.fail("expected ProtocolError");
  } catch (err) {
    assert.ok(err instanceof ProtocolError);
    assert.ok((err as ProtocolError).offset > 0);
  }
  assert.throws(() => decode("not json\n"), ProtocolError);
  assert.throws(
    () => decode('{"type":"bye","seq":0,"sent_at":0.000000,"body":{},"z":1}\n'),
    ProtocolError);
});
