/** Browser wire-up: DOM events -> joystick -> cadenced commands -> socket. */

import { CommandCadencer, JoystickCore } from "./joystick.js";
import { ConsoleClient, browserSocketFactory } from "./net.js";
import { Painter } from "./painter.js";
import { buildScene } from "./scene.js";
import { ConsoleStore } from "./state.js";

function serverUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const explicit = params.get("server");
  if (explicit !== null) {
    return explicit;
  }
  const host = window.location.hostname || "127.0.0.1";
  const port = params.get("port") ?? "8765";
  return `ws://${host}:${port}`;
}

function setupJoystickPad(pad: HTMLElement, stick: JoystickCore): void {
  const radius = pad.clientWidth / 2;
  let tracking = false;
  const knob = document.getElementById("knob")!;

  const move = (ev: PointerEvent) => {
    if (!tracking) {
      return;
    }
    const rect = pad.getBoundingClientRect();
    const dx = ev.clientX - (rect.left + rect.width / 2);
    const dy = ev.clientY - (rect.top + rect.height / 2);
    stick.setPointerOffset(dx, dy, radius);
    const len = Math.min(Math.hypot(dx, dy), radius);
    const ang = Math.atan2(dy, dx);
    knob.style.transform =
      `translate(${len * Math.cos(ang)}px, ${len * Math.sin(ang)}px)`;
  };
  pad.addEventListener("pointerdown", (ev) => {
    tracking = true;
    pad.setPointerCapture(ev.pointerId);
    move(ev);
  });
  pad.addEventListener("pointermove", move);
  const release = () => {
    tracking = false;
    stick.clearPointer();
    knob.style.transform = "translate(0px, 0px)";
  };
  pad.addEventListener("pointerup", release);
  pad.addEventListener("pointercancel", release);
}

function start(): void {
  const store = new ConsoleStore();
  const stick = new JoystickCore();
  const cadencer = new CommandCadencer();
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const painter = new Painter(canvas);
  const client = new ConsoleClient(serverUrl(), store, browserSocketFactory);

  window.addEventListener("keydown", (ev) => stick.keyDown(ev.code));
  window.addEventListener("keyup", (ev) => stick.keyUp(ev.code));
  setupJoystickPad(document.getElementById("pad")!, stick);

  client.connect();

  const frame = () => {
    const nowMs = Date.now();
    const input = stick.vector();
    if (cadencer.due(nowMs, input)) {
      const line = store.sendCommand(input!);
      if (line !== null) {
        client.send(line);
      }
    }
    painter.paint(buildScene(store, nowMs));
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

window.addEventListener("DOMContentLoaded", start);
