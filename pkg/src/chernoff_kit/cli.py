"""chernoff-kit command line: a thin client of the FastAPI service.

By default commands talk to an in-process instance of the service app
(ASGI transport, no sockets); --server points them at a running instance
instead.  Exit codes: 0 all suites pass, 2 any non-pass verdict, 3 config
error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from . import runner


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # TestClient is an httpx.Client that drives the ASGI app synchronously;
    # plain httpx.ASGITransport only supports the async client.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app)


@click.group()
def main():
    """Product-formula experiment runner."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, help="Concurrent suites.")
@click.option("--out", "out_dir", default=".", show_default=True)
@click.option("--server", default=None, help="URL of a running service instance.")
def run(config_path, jobs, out_dir, server):
    """Run the suites selected by a JSON config; write CSV + JSON reports."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(3)
    try:
        config = runner.parse_config(text)
        config = config.model_copy(update={"jobs": jobs})
    except runner.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(3)

    with _client(server) as client:
        resp = client.post("/run", json={"config": config.model_dump(mode="json")})
    if resp.status_code == 400 or resp.status_code == 422:
        click.echo(f"config error: {resp.text}", err=True)
        sys.exit(3)
    resp.raise_for_status()
    payload = resp.json()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{config.out_prefix}.csv"
    json_path = out / f"{config.out_prefix}.json"
    try:
        runner.write_atomic(csv_path, payload["csv_text"])
        runner.write_atomic(json_path, payload["json_text"])
    except OSError as exc:
        click.echo(f"write error for {out}: {exc}", err=True)
        sys.exit(1)

    for suite in payload["summary"]["suites"]:
        click.echo(f"{suite['name']}: {suite['verdict']}")
    click.echo(f"wrote {csv_path} and {json_path}")
    sys.exit(payload["exit_code"])


@main.command()
@click.option("--server", default=None)
def scenarios(server):
    """List built-in scenario names."""
    with _client(server) as client:
        resp = client.get("/scenarios")
    resp.raise_for_status()
    for name in resp.json()["scenarios"]:
        click.echo(name)


@main.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--server", default=None)
def rates(csv_path, server):
    """Refit convergence rates from a previously written report CSV."""
    with _client(server) as client:
        resp = client.post("/rates", json={"csv_text": Path(csv_path).read_text()})
    if resp.status_code == 400:
        click.echo(f"error: {resp.json()['detail']}", err=True)
        sys.exit(3)
    resp.raise_for_status()
    click.echo(json.dumps(resp.json()["rates"], indent=2, sort_keys=True))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Launch the FastAPI service under uvicorn."""
    import uvicorn

    uvicorn.run("chernoff_kit.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
