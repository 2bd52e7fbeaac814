/**
 * Canonical wire protocol, mirroring the server implementation byte for byte.
 *
 * One message per line: JSON with top-level keys in the fixed order
 * (type, seq, sent_at, body), body keys sorted, floats printed with exactly
 * six decimals and quantized to that grid at construction, -0 normalized
 * to 0. See ../../PROTOCOL.md; conformance is pinned by the shared golden
 * vector file.
 */

export const PROTOCOL_VERSION = 1;

export class ProtocolError extends Error {
  readonly offset: number;

  constructor(message: string, offset = 0) {
    super(message);
    this.name = "ProtocolError";
    this.offset = offset;
  }
}

type FieldKind = "int" | "float" | "str" | "vec2" | "vec3" | "vec2s" | "vec2?";

const SCHEMAS: Record<string, Record<string, FieldKind>> = {
  hello: { version: "int", role: "str" },
  config: { dt: "float", horizon: "int", v_max: "float" },
  command: { vx: "float", vy: "float" },
  world_state: {
    tick: "int", time: "float", robot: "vec3", agents: "vec2s",
    goal: "vec2?", operator_weight: "float", robot_weight: "float",
    planned_path: "vec2s", staleness_s: "float",
  },
  blend_diag: {
    tick: "int", total: "float", attraction: "float", cooperation: "float",
    operator: "float", robot: "float", agents: "float", fallback: "int",
  },
  error: { message: "str" },
  bye: {},
};

// wire field names are snake_case; kept verbatim so messages mirror the line
export interface WireMessage {
  type: string;
  seq: number;
  sent_at: number;
  body: Record<string, unknown>;
}

export function q6(x: number): number {
  if (!Number.isFinite(x)) {
    throw new ProtocolError(`non-finite float ${x} cannot be encoded`);
  }
  const q = Number(x.toFixed(6));
  return q === 0 ? 0 : q;
}

function fmt6(x: number): string {
  return (x === 0 ? 0 : x).toFixed(6);
}

function checkField(msgType: string, key: string, kind: FieldKind, value: unknown): unknown {
  const fail = (why: string): never => {
    throw new ProtocolError(`${msgType}.${key}: ${why}`);
  };
  switch (kind) {
    case "int":
      if (typeof value !== "number" || !Number.isInteger(value)) {
        fail(`expected integer, got ${JSON.stringify(value)}`);
      }
      return value;
    case "float":
      if (typeof value !== "number") {
        fail(`expected number, got ${JSON.stringify(value)}`);
      }
      return q6(value as number);
    case "str":
      if (typeof value !== "string") {
        fail(`expected string, got ${JSON.stringify(value)}`);
      }
      return value;
    case "vec2":
    case "vec3": {
      const n = kind === "vec2" ? 2 : 3;
      if (!Array.isArray(value) || value.length !== n) {
        fail(`expected ${n}-vector, got ${JSON.stringify(value)}`);
      }
      return (value as unknown[]).map((v) => q6(v as number));
    }
    case "vec2?":
      if (!Array.isArray(value) || (value.length !== 0 && value.length !== 2)) {
        fail(`expected empty or 2-vector, got ${JSON.stringify(value)}`);
      }
      return (value as unknown[]).map((v) => q6(v as number));
    case "vec2s":
      if (!Array.isArray(value)) {
        fail(`expected list of 2-vectors, got ${JSON.stringify(value)}`);
      }
      return (value as unknown[]).map((item) => {
        if (!Array.isArray(item) || item.length !== 2) {
          fail(`expected 2-vector element, got ${JSON.stringify(item)}`);
        }
        return (item as unknown[]).map((v) => q6(v as number));
      });
  }
}

/** Validate and quantize a message; throws ProtocolError on schema violations. */
export function makeMessage(type: string, seq: number, sentAt: number,
                            body: Record<string, unknown>): WireMessage {
  const schema = SCHEMAS[type];
  if (schema === undefined) {
    throw new ProtocolError(`unknown message type ${JSON.stringify(type)}`);
  }
  if (!Number.isInteger(seq) || seq < 0) {
    throw new ProtocolError(`seq must be a nonnegative integer, got ${seq}`);
  }
  if (typeof sentAt !== "number") {
    throw new ProtocolError(`sent_at must be a number, got ${JSON.stringify(sentAt)}`);
  }
  const schemaKeys = Object.keys(schema);
  for (const k of Object.keys(body)) {
    if (!(k in schema)) {
      throw new ProtocolError(`${type}: unknown body field ${JSON.stringify(k)}`);
    }
  }
  for (const k of schemaKeys) {
    if (!(k in body)) {
      throw new ProtocolError(`${type}: missing body field ${JSON.stringify(k)}`);
    }
  }
  const canon: Record<string, unknown> = {};
  for (const k of schemaKeys.sort()) {
    canon[k] = checkField(type, k, schema[k], body[k]);
  }
  return { type, seq, sent_at: q6(sentAt), body: canon };
}

function canonValue(kind: FieldKind, value: unknown): string {
  switch (kind) {
    case "int":
      return String(value);
    case "float":
      return fmt6(value as number);
    case "str":
      return JSON.stringify(value);
    case "vec2":
    case "vec3":
    case "vec2?":
      return "[" + (value as number[]).map(fmt6).join(",") + "]";
    case "vec2s":
      return "[" + (value as number[][])
        .map((item) => "[" + item.map(fmt6).join(",") + "]").join(",") + "]";
  }
}

/** Canonical newline-terminated encoding. */
export function encode(msg: WireMessage): string {
  const schema = SCHEMAS[msg.type];
  const body = Object.keys(schema).sort()
    .map((k) => `${JSON.stringify(k)}:${canonValue(schema[k], msg.body[k])}`)
    .join(",");
  return `{"type":${JSON.stringify(msg.type)},"seq":${msg.seq},` +
    `"sent_at":${fmt6(msg.sent_at)},"body":{${body}}}\n`;
}

/** Parse one line; ProtocolError carries the byte offset of the fault. */
export function decode(line: string): WireMessage {
  const text = line.replace(/\n+$/, "");
  const inner = text.indexOf("\n");
  if (inner >= 0) {
    throw new ProtocolError("multiple lines passed to decode", inner);
  }
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    const m = /position (\d+)/.exec((err as Error).message);
    throw new ProtocolError(`malformed message: ${(err as Error).message}`,
                            m ? Number(m[1]) : 0);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ProtocolError("message must be an object");
  }
  const obj = raw as Record<string, unknown>;
  for (const k of Object.keys(obj)) {
    if (!["type", "seq", "sent_at", "body"].includes(k)) {
      throw new ProtocolError(`unknown top-level field ${JSON.stringify(k)}`);
    }
  }
  for (const k of ["type", "seq", "sent_at", "body"]) {
    if (!(k in obj)) {
      throw new ProtocolError(`missing top-level field ${JSON.stringify(k)}`);
    }
  }
  if (typeof obj.body !== "object" || obj.body === null || Array.isArray(obj.body)) {
    throw new ProtocolError("body must be an object");
  }
  return makeMessage(obj.type as string, obj.seq as number,
                     obj.sent_at as number, obj.body as Record<string, unknown>);
}
