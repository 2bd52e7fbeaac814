/**
 * Virtual joystick: pointer drag (primary) with WASD fallback, plus the
 * fixed-cadence command emitter. Input vectors are normalized to unit norm
 * before any scaling by v_max; a centered stick produces nothing at all,
 * because operator silence is itself a signal that slides autonomy to the
 * robot.
 */

export interface InputVector {
  x: number;
  y: number;
}

const KEY_VECTORS: Record<string, [number, number]> = {
  KeyW: [1, 0],   // screen-up maps to +x (forward)
  KeyS: [-1, 0],
  KeyA: [0, 1],   // left is +y in the world frame
  KeyD: [0, -1],
};

export class JoystickCore {
  private pointer: InputVector | null = null;
  private keys = new Set<string>();

  /** Pointer drag offset in pixels relative to the pad center. */
  setPointerOffset(dxPx: number, dyPx: number, radiusPx: number): void {
    // screen y grows downward; world forward is +x, world left is +y
    const x = -dyPx / radiusPx;
    const y = -dxPx / radiusPx;
    const norm = Math.hypot(x, y);
    if (norm < 0.05) {
      this.pointer = { x: 0, y: 0 };
      return;
    }
    const clamp = norm > 1 ? 1 / norm : 1;
    this.pointer = { x: x * clamp, y: y * clamp };
  }

  clearPointer(): void {
    this.pointer = null;
  }

  keyDown(code: string): void {
    if (code in KEY_VECTORS) {
      this.keys.add(code);
    }
  }

  keyUp(code: string): void {
    this.keys.delete(code);
  }

  /** Current normalized deflection, or null when the stick is centered. */
  vector(): InputVector | null {
    if (this.pointer !== null) {
      const norm = Math.hypot(this.pointer.x, this.pointer.y);
      return norm > 1e-9 ? this.pointer : null;
    }
    let x = 0;
    let y = 0;
    for (const code of this.keys) {
      const [kx, ky] = KEY_VECTORS[code];
      x += kx;
      y += ky;
    }
    const norm = Math.hypot(x, y);
    if (norm < 1e-9) {
      return null;
    }
    return { x: x / norm, y: y / norm };
  }
}

export const COMMAND_PERIOD_MS = 100; // 10 Hz

/**
 * Emits at most one command slot per period on a fixed grid, regardless of
 * how often it is polled, so a held deflection produces commands at an even
 * 10 Hz and an idle stick produces none.
 */
export class CommandCadencer {
  private nextDueMs: number | null = null;

  constructor(private readonly periodMs: number = COMMAND_PERIOD_MS) {}

  /** True when a command slot is due for a non-idle input at ``nowMs``. */
  due(nowMs: number, input: InputVector | null): boolean {
    if (input === null) {
      return false;
    }
    if (this.nextDueMs === null) {
      this.nextDueMs = nowMs + this.periodMs;
      return true;
    }
    if (nowMs < this.nextDueMs) {
      return false;
    }
    this.nextDueMs += this.periodMs;
    if (nowMs >= this.nextDueMs) {
      // fell badly behind; resynchronize instead of bursting
      this.nextDueMs = nowMs + this.periodMs;
    }
    return true;
  }
}
