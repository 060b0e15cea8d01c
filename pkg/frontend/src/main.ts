import { FirstPersonCamera } from "./camera.js";
import { StreamingClient } from "./net.js";
import { DiagnosticsOverlay } from "./overlay.js";
import { PointRenderer } from "./renderer.js";

const FOV_H = Math.PI / 2;

function serverUrl(): string {
  const params = new URLSearchParams(location.search);
  const explicit = params.get("server");
  if (explicit) return explicit;
  const host = location.hostname || "127.0.0.1";
  const port = location.port ? Number(location.port) : 9361;
  return `ws://${host}:${port}/stream`;
}

function start() {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  canvas.width = innerWidth;
  canvas.height = innerHeight;
  addEventListener("resize", () => {
    canvas.width = innerWidth;
    canvas.height = innerHeight;
  });

  const camera = new FirstPersonCamera();
  camera.attach(canvas);
  const overlay = new DiagnosticsOverlay(document.body);
  const renderer = new PointRenderer(canvas);

  const client = new StreamingClient({
    url: serverUrl(),
    fovH: FOV_H,
    events: {
      onDecodeError: (m) => overlay.decodeError(m),
    },
  }, () => camera.state());
  client.start();

  let last = performance.now();
  function frame(now: number) {
    camera.tick(Math.min(0.1, (now - last) / 1000));
    last = now;
    renderer.sync(client.cache);
    client.cache.evictExpired(now);
    renderer.draw(camera, FOV_H);
    client.ackRendered(); // render-complete acks for freshly drawn frames
    overlay.frameRendered();
    overlay.update(now, client.connected, client.cache.totalPoints(),
                   client.bytesReceived, client.updatesReceived,
                   client.lastStats, client.offsetMeasured);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

start();
