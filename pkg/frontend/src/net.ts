/**
 * Transport wrapper: one line per WebSocket message, hello on open,
 * reconnect with backoff. The socket implementation is injected so the
 * browser uses the native WebSocket and tests use the ws package.
 */

import { ConsoleStore } from "./state.js";

export interface LineSocket {
  sendLine(line: string): void;
  close(): void;
}

export interface SocketEvents {
  onOpen(): void;
  onLine(line: string): void;
  onClose(): void;
}

export type SocketFactory = (url: string, events: SocketEvents) => LineSocket;

export class ConsoleClient {
  private socket: LineSocket | null = null;
  private closed = false;

  constructor(private readonly url: string,
              private readonly store: ConsoleStore,
              private readonly makeSocket: SocketFactory,
              private readonly now: () => number = () => Date.now(),
              private readonly reconnectDelayMs = 1000,
              private readonly schedule: (fn: () => void, ms: number) => void =
                (fn, ms) => { setTimeout(fn, ms); }) {}

  connect(): void {
    this.store.status = "connecting";
    this.socket = this.makeSocket(this.url, {
      onOpen: () => {
        this.store.status = "connected";
        this.socket!.sendLine(this.store.helloLine());
      },
      onLine: (line) => {
        this.store.handleLine(line, this.now());
      },
      onClose: () => {
        this.store.status = "disconnected";
        this.socket = null;
        if (!this.closed) {
          this.schedule(() => this.connect(), this.reconnectDelayMs);
        }
      },
    });
  }

  /** Send a prepared line; silently drops when the link is down. */
  send(line: string): void {
    if (this.socket !== null && this.store.status === "connected") {
      this.socket.sendLine(line);
    }
  }

  close(): void {
    this.closed = true;
    if (this.socket !== null) {
      this.socket.close();
    }
  }
}

/** Adapter over the browser's native WebSocket. */
export function browserSocketFactory(url: string, events: SocketEvents): LineSocket {
  const ws = new WebSocket(url);
  ws.onopen = () => events.onOpen();
  ws.onmessage = (ev) => events.onLine(String(ev.data));
  ws.onclose = () => events.onClose();
  ws.onerror = () => { /* close follows; nothing to do */ };
  return {
    sendLine: (line) => ws.send(line),
    close: () => ws.close(),
  };
}
