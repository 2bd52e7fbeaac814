"""Command-line entry points: run, sweep, summarize, serve."""

from __future__ import annotations

import asyncio
import glob
import logging
import os

import click

from . import experiment
from .errors import BlendNavError
from .service import TeleopServer


def _setup_logging():
    level = os.environ.get("BLENDNAV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


@click.group()
def main():
    """Shared-autonomy teleoperation simulator."""
    _setup_logging()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def run(config_path, seed, out_dir):
    """Execute one headless closed-loop run and write its metrics."""
    try:
        config = experiment.load_config(config_path)
        metrics = experiment.run(config, seed)
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"run_seed{seed}.csv")
        experiment.save_metrics(metrics, path)
    except BlendNavError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {path}")
    click.echo(f"summary: {metrics.summary}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep(config_path, seed, out_dir):
    """Run every sweep cell and write a manifest plus per-cell metrics."""
    try:
        config = experiment.load_config(config_path)
        manifest = experiment.sweep(config, seed, out_dir)
    except BlendNavError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(manifest['cells'])} runs to {out_dir}")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def summarize(in_dir, out_path):
    """Aggregate metrics files into per-cell means and standard errors."""
    paths = sorted(glob.glob(os.path.join(in_dir, "*.csv")))
    try:
        experiment.summarize(paths, out_path)
    except BlendNavError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--pace", default=1.0, show_default=True, type=float,
              help="Real-time factor for the tick loop (0 = free-running).")
def serve(config_path, port, host, seed, pace):
    """Serve a live console session over WebSocket."""
    try:
        config = experiment.load_config(config_path)
        session = experiment.build_session(config, seed)
    except BlendNavError as exc:
        raise click.ClickException(str(exc))
    server = TeleopServer(session, pace=pace)
    click.echo(f"serving on ws://{host}:{port}")
    asyncio.run(server.serve(host, port))


if __name__ == "__main__":
    main()
