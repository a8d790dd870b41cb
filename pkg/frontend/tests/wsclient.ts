/** Minimal RFC 6455 client over node:net for integration tests. */
import { createHash, randomBytes } from "node:crypto";
import { Socket, createConnection } from "node:net";

const GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

export class WsTestClient {
  private sock!: Socket;
  private buf = Buffer.alloc(0);
  private messages: string[] = [];
  private waiters: ((m: string | null) => void)[] = [];
  private closed = false;

  async connect(host: string, port: number): Promise<void> {
    this.sock = createConnection({ host, port });
    await new Promise<void>((resolve, reject) => {
      this.sock.once("connect", resolve);
      this.sock.once("error", reject);
    });
    const key = randomBytes(16).toString("base64");
    const accept = createHash("sha1").update(key + GUID).digest("base64");
    this.sock.write(
      `GET / HTTP/1.1\r\nHost: ${host}:${port}\r\nUpgrade: websocket\r\n` +
      `Connection: Upgrade\r\nSec-WebSocket-Key: ${key}\r\nSec-WebSocket-Version: 13\r\n\r\n`);
    await new Promise<void>((resolve, reject) => {
      const onData = (chunk: Buffer) => {
        this.buf = Buffer.concat([this.buf, chunk]);
        const idx = this.buf.indexOf("\r\n\r\n");
        if (idx >= 0) {
          const head = this.buf.subarray(0, idx).toString("latin1");
          if (!head.includes(" 101 ") || !head.includes(accept)) {
            reject(new Error(`handshake rejected: ${head.slice(0, 80)}`));
            return;
          }
          this.buf = this.buf.subarray(idx + 4);
          this.sock.off("data", onData);
          this.sock.on("data", (c) => this.onData(c));
          this.sock.on("close", () => this.onClose());
          this.drain();
          resolve();
        }
      };
      this.sock.on("data", onData);
      this.sock.once("error", reject);
    });
  }

  private onClose(): void {
    this.closed = true;
    while (this.waiters.length) this.waiters.shift()!(null);
  }

  private onData(chunk: Buffer): void {
    this.buf = Buffer.concat([this.buf, chunk]);
    this.drain();
  }

  private drain(): void {
    for (;;) {
      if (this.buf.length < 2) return;
      const opcode = this.buf[0] & 0x0f;
      let len = this.buf[1] & 0x7f;
      let off = 2;
      if (len === 126) {
        if (this.buf.length < 4) return;
        len = this.buf.readUInt16BE(2);
        off = 4;
      } else if (len === 127) {
        if (this.buf.length < 10) return;
        len = Number(this.buf.readBigUInt64BE(2));
        off = 10;
      }
      if (this.buf.length < off + len) return;
      const payload = this.buf.subarray(off, off + len);
      this.buf = this.buf.subarray(off + len);
      if (opcode === 0x1) {
        const text = payload.toString("utf-8");
        const waiter = this.waiters.shift();
        if (waiter) waiter(text);
        else this.messages.push(text);
      } else if (opcode === 0x8) {
        this.onClose();
        return;
      }
    }
  }

  /** Next text message (FIFO), or null on close / timeout. */
  next(timeoutMs = 5000): Promise<string | null> {
    const queued = this.messages.shift();
    if (queued !== undefined) return Promise.resolve(queued);
    if (this.closed) return Promise.resolve(null);
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        const i = this.waiters.indexOf(wrapped);
        if (i >= 0) this.waiters.splice(i, 1);
        resolve(null);
      }, timeoutMs);
      const wrapped = (m: string | null) => {
        clearTimeout(timer);
        resolve(m);
      };
      this.waiters.push(wrapped);
    });
  }

  send(text: string): void {
    const payload = Buffer.from(text, "utf-8");
    const mask = randomBytes(4);
    const masked = Buffer.from(payload.map((b, i) => b ^ mask[i % 4]));
    let head: Buffer;
    if (payload.length < 126) {
      head = Buffer.from([0x81, 0x80 | payload.length]);
    } else {
      head = Buffer.alloc(4);
      head[0] = 0x81;
      head[1] = 0x80 | 126;
      head.writeUInt16BE(payload.length, 2);
    }
    this.sock.write(Buffer.concat([head, mask, masked]));
  }

  close(): void {
    try {
      this.sock.destroy();
    } catch {
      /* already gone */
    }
  }
}
