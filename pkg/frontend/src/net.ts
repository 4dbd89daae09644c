// WebSocket transport: one protocol message per binary socket message,
// automatic reconnect with capped exponential backoff.

export interface TransportHandlers {
  onMessage: (data: Uint8Array) => void;
  onOpen: () => void;
  onClose: (reason: string) => void;
}

export class SocketTransport {
  private ws: WebSocket | null = null;
  private closed = false;
  private backoffMs = 500;

  constructor(
    readonly url: string,
    readonly handlers: TransportHandlers,
  ) {
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    ws.binaryType = 'arraybuffer';
    ws.onopen = () => {
      this.backoffMs = 500;
      this.handlers.onOpen();
    };
    ws.onmessage = (ev) => {
      if (ev.data instanceof ArrayBuffer) {
        this.handlers.onMessage(new Uint8Array(ev.data));
      } else {
        console.warn('[net] ignoring non-binary message');
      }
    };
    ws.onclose = () => this.scheduleReconnect('socket closed');
    ws.onerror = () => {
      /* onclose follows; nothing to do here */
    };
    this.ws = ws;
  }

  private scheduleReconnect(reason: string): void {
    this.ws = null;
    if (this.closed) return;
    this.handlers.onClose(reason);
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, 8000);
    setTimeout(() => this.connect(), delay);
  }

  get ready(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }

  send(data: Uint8Array): boolean {
    if (!this.ready || this.ws === null) return false;
    try {
      this.ws.send(data);
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
    this.ws = null;
  }
}
