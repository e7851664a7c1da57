// Reconnecting websocket wrapper.  The DOM layer never touches WebSocket
// directly, and tests drive DashboardState with a fake transport instead.

export interface SocketEvents {
  onOpen(): void;
  onClose(): void;
  onLine(line: string): void;
}

export class ReconnectingSocket {
  private ws: WebSocket | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  private backoffMs = 1000;

  constructor(private url: string, private events: SocketEvents) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  send(line: string): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(line);
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.ws?.close();
  }

  private open(): void {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 1000;
      this.events.onOpen();
    };
    ws.onmessage = (ev) => {
      if (typeof ev.data === "string") this.events.onLine(ev.data);
    };
    ws.onclose = () => {
      this.events.onClose();
      this.scheduleRetry();
    };
    ws.onerror = () => ws.close();
  }

  private scheduleRetry(): void {
    if (this.closed) return;
    this.timer = setTimeout(() => this.open(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 1.5, 5000);
  }
}
