// Thin WebSocket wrapper with auto-retry. The socket constructor is
// injectable so tests can run under Node with the `ws` package while the
// browser uses the native WebSocket.

export interface SocketLike {
  readyState: number;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

const OPEN = 1;

export class BridgeTransport {
  private socket: SocketLike | null = null;
  private closed = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private onEvent: (event: Record<string, unknown>) => void,
    private onConnection: (open: boolean) => void,
    private makeSocket: SocketFactory = (u) =>
      new WebSocket(u) as unknown as SocketLike,
    private retryMs = 1000,
  ) {}

  connect(): void {
    this.closed = false;
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.socket = socket;
    socket.onopen = () => this.onConnection(true);
    socket.onmessage = (ev) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(String(ev.data));
      } catch {
        return; // junk frames are dropped, the channel stays up
      }
      if (parsed && typeof parsed === "object") {
        this.onEvent(parsed as Record<string, unknown>);
      }
    };
    socket.onerror = () => {
      /* onclose follows and owns the retry */
    };
    socket.onclose = () => {
      this.socket = null;
      this.onConnection(false);
      this.scheduleRetry();
    };
  }

  private scheduleRetry(): void {
    if (this.closed || this.retryTimer !== null) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.closed) this.connect();
    }, this.retryMs);
  }

  isOpen(): boolean {
    return this.socket !== null && this.socket.readyState === OPEN;
  }

  send(obj: Record<string, unknown>): boolean {
    if (!this.isOpen()) return false;
    try {
      this.socket!.send(JSON.stringify(obj));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    if (this.socket !== null) {
      try {
        this.socket.close();
      } catch {
        /* already gone */
      }
      this.socket = null;
    }
  }
}
