// Glue between the transport and the session view: applies events to the
// reducer, enforces the one-press-per-window rule before anything reaches
// the wire, and notifies the rendering layer after every change.

import {
  canRespond,
  initialView,
  lockResponse,
  reduce,
  setConnected,
  type SessionView,
} from "./session.js";
import { BridgeTransport, type SocketFactory } from "./transport.js";
import type { BridgeEvent, Condition, StartSessionRequest } from "./types.js";

export class SessionController {
  view: SessionView = initialView();
  private transport: BridgeTransport;
  private listeners = new Set<(view: SessionView) => void>();

  constructor(url: string, makeSocket?: SocketFactory, retryMs = 1000) {
    this.transport = new BridgeTransport(
      url,
      (event) => this.apply(event as unknown as BridgeEvent),
      (open) => this.update(setConnected(this.view, open)),
      makeSocket,
      retryMs,
    );
  }

  connect(): void {
    this.transport.connect();
  }

  close(): void {
    this.transport.close();
  }

  subscribe(listener: (view: SessionView) => void): () => void {
    this.listeners.add(listener);
    listener(this.view);
    return () => this.listeners.delete(listener);
  }

  private update(view: SessionView): void {
    this.view = view;
    for (const listener of this.listeners) listener(view);
  }

  private apply(event: BridgeEvent): void {
    this.update(reduce(this.view, event));
  }

  /** One press per response window; everything else is rejected locally. */
  submitResponse(choice: Condition): boolean {
    if (!canRespond(this.view)) return false;
    const locked = lockResponse(this.view);
    const sent = this.transport.send({
      type: "response",
      condition: choice,
      t_client_ms: Date.now(), // advisory only; the engine clocks RT
    });
    if (!sent) return false;
    this.update(locked);
    return true;
  }

  startSession(options: Omit<StartSessionRequest, "type">): boolean {
    return this.transport.send({ type: "start_session", ...options });
  }

  abortSession(): boolean {
    return this.transport.send({ type: "abort_session" });
  }

  requestStatus(): boolean {
    return this.transport.send({ type: "status" });
  }
}
