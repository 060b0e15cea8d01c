import { describe, expect, it, vi } from "vitest";

import { StreamingClient } from "../src/net.js";
import type { SocketLike } from "../src/net.js";
import { decode, encodeHello } from "../src/wire.js";

class FakeSocket implements SocketLike {
  binaryType = "arraybuffer";
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: Uint8Array[] = [];

  send(data: Uint8Array): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }

  deliver(data: Uint8Array): void {
    const buf = new ArrayBuffer(data.length);
    new Uint8Array(buf).set(data);
    this.onmessage?.({ data: buf });
  }
}

function makeClient(sockets: FakeSocket[]) {
  let now = 0;
  const client = new StreamingClient({
    url: "ws://test/",
    fovH: Math.PI / 2,
    feedbackPeriodMs: 10_000, // keep timers quiet during the test
    reconnectDelayMs: 1,
    socketFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    now: () => now++,
  }, () => ({ position: [0, 0, 0] as [number, number, number], yaw: 0,
              pitch: 0 }));
  return client;
}

describe("StreamingClient", () => {
  it("sends hello on connect and feedback carries the viewpoint", () => {
    const sockets: FakeSocket[] = [];
    const client = makeClient(sockets);
    client.start();
    sockets[0].onopen?.();
    expect(sockets[0].sent.length).toBe(1);
    const hello = decode(sockets[0].sent[0]);
    expect(hello.type).toBe("hello");
    client.sendFeedback();
    const fb = decode(sockets[0].sent[1]);
    expect(fb.type).toBe("viewport_feedback");
    client.stop();
  });

  it("reconnects with a fresh handshake after a drop", async () => {
    vi.useFakeTimers();
    const sockets: FakeSocket[] = [];
    const client = makeClient(sockets);
    client.start();
    sockets[0].onopen?.();
    expect(sockets.length).toBe(1);
    sockets[0].close(); // server went away
    await vi.advanceTimersByTimeAsync(5);
    expect(sockets.length).toBe(2);
    sockets[1].onopen?.();
    expect(decode(sockets[1].sent[0]).type).toBe("hello");
    client.stop();
    vi.useRealTimers();
  });

  it("drops malformed messages without dying", () => {
    const sockets: FakeSocket[] = [];
    const errors: string[] = [];
    let now = 0;
    const client = new StreamingClient({
      url: "ws://test/", fovH: 1.5, feedbackPeriodMs: 10_000,
      socketFactory: () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
      now: () => now++,
      events: { onDecodeError: (m) => errors.push(m) },
    }, () => ({ position: [0, 0, 0] as [number, number, number], yaw: 0,
                pitch: 0 }));
    client.start();
    sockets[0].onopen?.();
    sockets[0].deliver(new Uint8Array([9, 9, 9]));
    expect(errors.length).toBe(1);
    // a valid message still goes through afterwards
    sockets[0].deliver(encodeHello({ sendTimestampUs: 0n, fovH: 1,
                                     capabilities: 0 }));
    expect(client.connected).toBe(true);
    client.stop();
  });
});
