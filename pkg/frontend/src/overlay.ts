/** Diagnostics panel: connection, FPS, latency, throughput, and the server's
 * current adaptation state (theta, point budget, predicted gaze). */

import { Stats } from "./wire.js";

export class DiagnosticsOverlay {
  private el: HTMLElement;
  private renderFrames = 0;
  private lastRateMs = 0;
  private renderFps = 0;
  private lastBytes = 0;
  private bytesPerSec = 0;
  private decodeErrors: string[] = [];

  constructor(parent: HTMLElement) {
    this.el = document.createElement("pre");
    this.el.style.cssText =
      "position:fixed;top:8px;left:8px;margin:0;padding:8px 10px;" +
      "background:rgba(0,0,0,.65);color:#9fe8a0;font:12px monospace;" +
      "border-radius:4px;pointer-events:none;white-space:pre;z-index:10";
    parent.appendChild(this.el);
  }

  frameRendered(): void {
    this.renderFrames++;
  }

  decodeError(message: string): void {
    this.decodeErrors.push(message);
    if (this.decodeErrors.length > 3) this.decodeErrors.shift();
  }

  update(nowMs: number, connected: boolean, points: number,
         bytesReceived: number, updates: number, stats: Stats | null,
         offsetMeasured: boolean): void {
    if (nowMs - this.lastRateMs >= 1000) {
      const dt = (nowMs - this.lastRateMs) / 1000;
      this.renderFps = this.renderFrames / dt;
      this.bytesPerSec = (bytesReceived - this.lastBytes) / dt;
      this.renderFrames = 0;
      this.lastBytes = bytesReceived;
      this.lastRateMs = nowMs;
    }
    const lines = [
      `link      ${connected ? "connected" : "reconnecting..."}` +
      `${offsetMeasured ? "" : " (clock sync pending)"}`,
      `render    ${this.renderFps.toFixed(0)} fps, ${points} points`,
      `downlink  ${(this.bytesPerSec / 1024).toFixed(0)} KiB/s, ` +
      `${updates} updates`,
    ];
    if (stats) {
      lines.push(
        `server    ${stats.fps.toFixed(1)} fps, ` +
        `${stats.latencyMs.toFixed(0)} ms latency`,
        `adapt     theta ${stats.theta.toFixed(2)}, ` +
        `budget ${stats.pointBudget}, reuse ${(stats.reuseRatio * 100).toFixed(0)}%`,
        `gaze      predicted yaw ${(stats.predictedYaw * 180 / Math.PI).toFixed(0)} deg`,
      );
    }
    for (const err of this.decodeErrors) {
      lines.push(`decode!   ${err}`);
    }
    this.el.textContent = lines.join("\n");
  }
}
