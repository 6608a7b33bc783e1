// Minimal STOMP 1.2 client over WebSocket: one frame per binary message,
// NUL-terminated frames, content-length for non-empty bodies, 1.2 header
// escaping. Mirrors the broker's wire contract exactly.

export interface StompFrame {
  command: string;
  headers: [string, string][];
  body: Uint8Array;
}

const ESCAPE: Record<string, string> = {
  "\\": "\\\\",
  "\r": "\\r",
  "\n": "\\n",
  ":": "\\c",
};
const UNESCAPE: Record<string, string> = {
  "\\": "\\",
  r: "\r",
  n: "\n",
  c: ":",
};

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

function escapeHeader(text: string): string {
  return text.replace(/[\\\r\n:]/g, (ch) => ESCAPE[ch]);
}

function unescapeHeader(text: string): string {
  let out = "";
  for (let i = 0; i < text.length; i++) {
    if (text[i] === "\\") {
      const next = text[i + 1];
      if (next === undefined || !(next in UNESCAPE)) {
        throw new Error(`invalid escape sequence in header: ${text}`);
      }
      out += UNESCAPE[next];
      i++;
    } else {
      out += text[i];
    }
  }
  return out;
}

export function header(
  frame: StompFrame,
  name: string,
): string | undefined {
  for (const [k, v] of frame.headers) {
    if (k === name) return v;
  }
  return undefined;
}

export function encodeFrame(frame: StompFrame): Uint8Array {
  const headers = frame.headers.filter(([k]) => k !== "content-length");
  if (frame.body.length > 0) {
    headers.push(["content-length", String(frame.body.length)]);
  }
  const lines = [frame.command];
  for (const [name, value] of headers) {
    lines.push(`${escapeHeader(name)}:${escapeHeader(value)}`);
  }
  const head = encoder.encode(lines.join("\n") + "\n\n");
  const out = new Uint8Array(head.length + frame.body.length + 1);
  out.set(head, 0);
  out.set(frame.body, head.length);
  out[out.length - 1] = 0;
  return out;
}

function findSequence(buf: Uint8Array, seq: number[], from: number): number {
  outer: for (let i = from; i <= buf.length - seq.length; i++) {
    for (let j = 0; j < seq.length; j++) {
      if (buf[i + j] !== seq[j]) continue outer;
    }
    return i;
  }
  return -1;
}

export function decodeFrame(buf: Uint8Array): StompFrame {
  let start = 0;
  while (start < buf.length && (buf[start] === 10 || buf[start] === 13)) start++;
  const headEnd = findSequence(buf, [10, 10], start);
  if (headEnd < 0) throw new Error("header section not terminated");
  const head = decoder.decode(buf.subarray(start, headEnd));
  const lines = head.split("\n");
  const command = lines[0].replace(/\r$/, "");
  const headers: [string, string][] = [];
  for (const raw of lines.slice(1)) {
    const line = raw.replace(/\r$/, "");
    const sep = line.indexOf(":");
    if (sep < 0) throw new Error(`header line without colon: ${line}`);
    headers.push([
      unescapeHeader(line.slice(0, sep)),
      unescapeHeader(line.slice(sep + 1)),
    ]);
  }
  const bodyStart = headEnd + 2;
  const lengthHeader = headers.find(([k]) => k === "content-length");
  let body: Uint8Array;
  if (lengthHeader) {
    const n = parseInt(lengthHeader[1], 10);
    if (bodyStart + n >= buf.length || buf[bodyStart + n] !== 0) {
      throw new Error("content-length disagrees with frame terminator");
    }
    body = buf.subarray(bodyStart, bodyStart + n);
  } else {
    const nul = buf.indexOf(0, bodyStart);
    if (nul < 0) throw new Error("missing terminating NUL");
    body = buf.subarray(bodyStart, nul);
  }
  return { command, headers, body };
}

export type MessageHandler = (frame: StompFrame) => void;

// Thin connection wrapper; subscriptions route MESSAGE frames by id.
export class StompClient {
  private ws: WebSocket;
  private subscriptions = new Map<string, MessageHandler>();
  private nextSubId = 1;
  onDisconnect: (() => void) | null = null;

  private constructor(ws: WebSocket) {
    this.ws = ws;
  }

  static connect(url: string): Promise<StompClient> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      ws.binaryType = "arraybuffer";
      const client = new StompClient(ws);
      ws.onerror = () => reject(new Error(`cannot reach broker at ${url}`));
      ws.onopen = () => {
        client.send({
          command: "CONNECT",
          headers: [
            ["accept-version", "1.2"],
            ["heart-beat", "0,0"],
          ],
          body: new Uint8Array(0),
        });
      };
      ws.onmessage = (event) => {
        const frame = decodeFrame(new Uint8Array(event.data as ArrayBuffer));
        if (frame.command === "CONNECTED") {
          ws.onmessage = (e) =>
            client.dispatch(decodeFrame(new Uint8Array(e.data as ArrayBuffer)));
          ws.onclose = () => client.onDisconnect?.();
          ws.onerror = () => client.onDisconnect?.();
          resolve(client);
        } else if (frame.command === "ERROR") {
          reject(new Error(header(frame, "message") ?? "broker error"));
        }
      };
    });
  }

  private dispatch(frame: StompFrame): void {
    if (frame.command === "MESSAGE") {
      const sub = header(frame, "subscription");
      if (sub) this.subscriptions.get(sub)?.(frame);
    } else if (frame.command === "ERROR") {
      console.error("broker error:", header(frame, "message"));
      this.ws.close();
    }
  }

  private send(frame: StompFrame): void {
    this.ws.send(encodeFrame(frame));
  }

  subscribe(destination: string, handler: MessageHandler): string {
    const id = `web-${this.nextSubId++}`;
    this.subscriptions.set(id, handler);
    this.send({
      command: "SUBSCRIBE",
      headers: [
        ["id", id],
        ["destination", destination],
      ],
      body: new Uint8Array(0),
    });
    return id;
  }

  publish(
    destination: string,
    body: Uint8Array,
    headers: [string, string][] = [],
  ): void {
    this.send({
      command: "SEND",
      headers: [["destination", destination], ...headers],
      body,
    });
  }

  close(): void {
    this.send({ command: "DISCONNECT", headers: [], body: new Uint8Array(0) });
    this.ws.close();
  }
}
