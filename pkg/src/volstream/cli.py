"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 runtime pipeline error.
Errors go to stderr as one-line JSON.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .config import PipelineConfig
from .errors import ConfigError, StreamError


def _fail(exc: StreamError, code: int) -> None:
    print(exc.to_json(), file=sys.stderr)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(exc, 2)
        except StreamError as exc:
            _fail(exc, 3)
    return wrapper


def _load_config(config_path: str | None, **overrides) -> PipelineConfig:
    if config_path:
        cfg = PipelineConfig.load(config_path)
    else:
        cfg = PipelineConfig()
    clean = {k: v for k, v in overrides.items() if v is not None}
    if clean:
        d = cfg.to_dict()
        d.update(clean)
        cfg = PipelineConfig.from_dict(d)
    cfg.validate()
    return cfg


config_option = click.option("--config", "config_path", type=click.Path(),
                             default=None, help="JSON config file")


@click.group()
def main():
    """Selective RGB-D volumetric streaming pipeline."""


@main.command()
@config_option
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--preset", default=None, help="scene preset override")
@click.option("--frames", type=int, default=None)
@click.option("--seed", type=int, default=None)
@handle_errors
def gen(config_path, out_dir, preset, frames, seed):
    """Render a synthetic dataset into the RGB-D directory format."""
    from .dataset import write_sequence
    from .runner import build_scene_spec
    from .synthetic import render_sequence

    cfg = _load_config(config_path, scene_preset=preset, scene_frames=frames,
                       seed=seed)
    spec = build_scene_spec(cfg)
    frame_lists, gt = render_sequence(spec)
    frames_by_camera = {cid: lst for cid, lst in enumerate(frame_lists)}
    intrinsics = {cid: cam.intrinsics for cid, cam in enumerate(spec.cameras)}
    write_sequence(out_dir, frames_by_camera, intrinsics, ground_truth=gt,
                   frame_period_us=spec.frame_period_us)
    n = sum(len(v) for v in frames_by_camera.values())
    click.echo(f"wrote {n} frames for {len(frames_by_camera)} cameras to {out_dir}")


@main.command()
@config_option
@click.option("--dataset", "dataset_dir", type=click.Path(), default=None,
              help="RGB-D directory (overrides config source)")
@click.option("--anchor", type=int, default=None, help="anchor camera id")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="report path (default: stdout)")
@handle_errors
def calibrate(config_path, dataset_dir, anchor, out_path):
    """Self-calibrate every camera against the anchor; emit a JSON report."""
    from .calibration import calibrate_from_frames
    from .runner import load_source

    overrides = {"anchor_camera": anchor}
    if dataset_dir:
        overrides.update(source_kind="directory", dataset_dir=dataset_dir)
    cfg = _load_config(config_path, **overrides)
    frames, intrinsics, grid, _ = load_source(cfg)
    first = {cid: lst[0] for cid, lst in frames.items()}
    state = calibrate_from_frames(first, cfg.anchor_camera, intrinsics,
                                  seed=cfg.seed)
    report = json.dumps(state.report(), indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(report + "\n")
        click.echo(f"calibration report written to {out_path}")
    else:
        click.echo(report)


def _sim_options(fn):
    fn = click.option("--bandwidth", "bandwidth_bps", type=float, default=None,
                      help="link capacity in bits/s")(fn)
    fn = click.option("--tick-ms", type=float, default=None)(fn)
    fn = click.option("--clients", type=int, default=None)(fn)
    fn = click.option("--no-selective", is_flag=True, default=False)(fn)
    fn = click.option("--no-viewport-adapt", is_flag=True, default=False)(fn)
    return fn


@main.command(name="run-sim")
@config_option
@_sim_options
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="metrics directory (metrics.ndjson + summary.json)")
@click.option("--seed", type=int, default=None)
@click.option("--dump-heatmaps", "heatmap_dir", type=click.Path(), default=None,
              help="debug: write per-tile change-score PGMs here")
@handle_errors
def run_sim(config_path, bandwidth_bps, tick_ms, clients, no_selective,
            no_viewport_adapt, out_dir, seed, heatmap_dir):
    """Deterministic virtual-clock simulation producing metrics files."""
    from .runner import simulate

    overrides = {"clients": clients, "seed": seed}
    if tick_ms is not None:
        overrides["tick_us"] = int(tick_ms * 1000)
    cfg = _load_config(config_path, **overrides)
    if heatmap_dir:
        from .debugtools import dump_change_heatmaps
        from .runner import load_source
        frames, _, grid, _ = load_source(cfg)
        paths = dump_change_heatmaps(
            frames, grid, heatmap_dir, stride=cfg.flow_stride,
            window=cfg.flow_window, eps_eig=cfg.flow_eps_eig,
            lambda_depth=cfg.lambda_depth, limit_frames=20)
        click.echo(f"wrote {len(paths)} change-score heatmaps to {heatmap_dir}")
    result = simulate(cfg, bandwidth_bps=bandwidth_bps,
                      selective=False if no_selective else None,
                      viewport_adapt=False if no_viewport_adapt else None)
    summaries = [m.summary() for m in result.metrics]
    payload = {
        "bandwidth_bps": bandwidth_bps or cfg.bandwidth_bps,
        "selective": not no_selective,
        "viewport_adapt": not no_viewport_adapt,
        "seed": cfg.seed,
        "clients": summaries,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for ci, m in enumerate(result.metrics):
            lines.extend(f'{{"client": {ci}, ' + ln[1:] for ln in m.ndjson_lines())
        (out / "metrics.ndjson").write_text("\n".join(lines) + "\n")
        (out / "summary.json").write_text(text + "\n")
        click.echo(f"metrics written to {out}")
    else:
        click.echo(text)


@main.command()
@config_option
@click.option("--bandwidths", default=None,
              help="comma-separated Mbps list, e.g. 20,50,100")
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def evaluate(config_path, bandwidths, out_path):
    """Quality + transmission report across bandwidth settings."""
    from .runner import evaluate as run_eval

    overrides = {}
    if bandwidths:
        overrides["bandwidths_bps"] = tuple(
            float(b) * 1e6 for b in bandwidths.split(","))
    cfg = _load_config(config_path, **overrides)
    report = run_eval(cfg)
    click.echo(report.to_text())
    if out_path:
        Path(out_path).write_text(report.to_json() + "\n")
        click.echo(f"report written to {out_path}")


@main.command()
@config_option
@click.option("--bandwidth", "bandwidth_mbps", type=float, default=100.0,
              help="bandwidth for the ablation rows, Mbps")
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def ablate(config_path, bandwidth_mbps, out_path):
    """Run the full system and both ablations at one bandwidth."""
    from .runner import simulate

    cfg = _load_config(config_path)
    bw = bandwidth_mbps * 1e6
    rows = {}
    for label, sel, va in (("full", None, None),
                           ("no-selective", False, None),
                           ("no-viewport-adapt", None, False)):
        result = simulate(cfg, bandwidth_bps=bw, selective=sel,
                          viewport_adapt=va)
        rows[label] = result.metrics[0].summary()
    lines = [f"{'variant':<20}{'FPS avg':>9}{'lat avg ms':>12}{'bytes':>12}"]
    for label, s in rows.items():
        lines.append(f"{label:<20}{s['fps']['avg']:>9.1f}"
                     f"{s['latency_ms']['avg']:>12.0f}{s['bytes_sent']:>12}")
    click.echo("\n".join(lines))
    if out_path:
        Path(out_path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        click.echo(f"ablation report written to {out_path}")


@main.command(name="run-server")
@config_option
@_sim_options
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=9360, help="TCP port (WebSocket on port+1)")
@click.option("--duration-s", type=float, default=None,
              help="stop after this many seconds (default: run until Ctrl-C)")
@handle_errors
def run_server(config_path, bandwidth_bps, tick_ms, clients, no_selective,
               no_viewport_adapt, host, port, duration_s):
    """Live server: framed TCP plus a browser-compatible WebSocket endpoint."""
    import asyncio

    from .server import serve

    overrides = {}
    if tick_ms is not None:
        overrides["tick_us"] = int(tick_ms * 1000)
    if bandwidth_bps is not None:
        overrides["bandwidth_bps"] = bandwidth_bps
    cfg = _load_config(config_path, **overrides)
    try:
        asyncio.run(serve(cfg, host=host, tcp_port=port, ws_port=port + 1,
                          selective=not no_selective,
                          viewport_adapt=not no_viewport_adapt,
                          duration_s=duration_s))
    except KeyboardInterrupt:
        click.echo("server stopped")


if __name__ == "__main__":
    main()
