"""Operator command line: convert and seed study content, serve, inspect.

Exit codes are part of the contract: 0 on success, 1 when content failed
validation (findings go to stderr as JSON lines), 2 on I/O, network or
bind trouble. Scripts depend on that split to tell "fix the CSV" from
"retry later".
"""

from __future__ import annotations

import json
import socket
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import click

from . import pipeline
from .service import compute_summary, create_app, parse_instant
from .store import Store


@dataclass
class Config:
    host: str = "127.0.0.1"
    port: int = 8000
    database: str = ":memory:"
    timezone: str = "UTC"
    tracked_packages: str = ""
    admin_token: str = ""


def load_config(path: str | None) -> Config:
    if not path:
        return Config()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        _fail_line("E_IO", f"cannot read config: {exc}")
        raise SystemExit(2)
    except ValueError as exc:
        _fail_line("E_IO", f"config is not valid JSON: {exc}")
        raise SystemExit(2)
    known = {f.name for f in fields(Config)}
    return Config(**{k: v for k, v in raw.items() if k in known})


def _fail_line(code: str, message: str, location: str = "") -> None:
    click.echo(json.dumps({"code": code, "location": location, "message": message},
                          sort_keys=True), err=True)


def _report(error: pipeline.PipelineError) -> None:
    for finding in error.findings:
        click.echo(json.dumps(finding.to_json(), sort_keys=True), err=True)


@click.group()
@click.option("--config", "config_path", envvar="EMA_CONFIG", default=None,
              help="Path to a JSON config file.")
@click.option("--now", "now_text", default=None,
              help="Freeze the clock at an ISO 8601 instant (for tests and demos).")
@click.pass_context
def main(ctx, config_path, now_text):
    """Study content tooling and the API server."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path)
    clock = None
    if now_text:
        try:
            fixed = parse_instant(now_text)
        except ValueError:
            _fail_line("E_BAD_REQUEST", f"--now is not an ISO 8601 timestamp: {now_text}")
            raise SystemExit(2)
        clock = lambda: fixed
    ctx.obj["clock"] = clock


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(),
              help="Directory holding study.csv and friends.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Where to write the canonical JSON document.")
def convert(in_dir, out_path):
    """Turn one study's CSV workbook into a canonical JSON document."""
    try:
        workbook = pipeline.parse_workbook(in_dir)
        workbook = pipeline.clean_strings(workbook)
        document = pipeline.convert(workbook)
        pipeline.emit_json(document, out_path)
    except pipeline.PipelineError as exc:
        _report(exc)
        raise SystemExit(exc.exit_code)
    for warning in workbook.warnings:
        click.echo(json.dumps(warning.to_json(), sort_keys=True), err=True)
    counts = pipeline.document_element_counts(document)
    click.echo(json.dumps({"study_id": document["meta"]["study_id"],
                           "questionnaires": len(document["questionnaires"]),
                           "elements": counts}, sort_keys=True))


@main.command()
@click.option("--api", "api_base", required=True, help="Base URL of the API service.")
@click.option("--token", required=True, help="Operator bearer token.")
@click.option("--file", "file_path", required=True, type=click.Path(),
              help="Canonical JSON document to upload.")
def seed(api_base, token, file_path):
    """Upload a converted document; reseeding identical content is a no-op."""
    try:
        document = json.loads(Path(file_path).read_text(encoding="utf-8"))
    except OSError as exc:
        _fail_line("E_IO", f"cannot read document: {exc}")
        raise SystemExit(2)
    except ValueError as exc:
        _fail_line("E_IO", f"document is not valid JSON: {exc}")
        raise SystemExit(2)
    try:
        results = pipeline.seed(api_base, token, document)
    except pipeline.PipelineError as exc:
        _report(exc)
        raise SystemExit(exc.exit_code)
    for result in results:
        click.echo(json.dumps({"action": result.action,
                               "questionnaire_id": result.questionnaire_id,
                               "new_version": result.new_version}, sort_keys=True))


@main.command()
@click.pass_context
def serve(ctx):
    """Run the API server until SIGTERM; in-flight requests finish first."""
    import uvicorn

    config: Config = ctx.obj["config"]
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((config.host, config.port))
    except OSError as exc:
        _fail_line("E_BIND", f"cannot bind {config.host}:{config.port}: {exc}")
        raise SystemExit(2)
    finally:
        probe.close()

    store = Store(config.database)
    if config.admin_token:
        store.ensure_admin(config.admin_token,
                           datetime.now(timezone.utc).isoformat())
    app = create_app(store, ctx.obj["clock"])

    @app.on_event("shutdown")
    def _close_store():
        store.close()

    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


_TABLE_ROWS = (
    ("verified_users", "{:d}"),
    ("active_users", "{:d}"),
    ("activation_rate", "{:.1%}"),
    ("followup_users", "{:d}"),
    ("followup_rate", "{:.1%}"),
    ("mean_followups_per_followup_user", "{:.1f}"),
    ("answersheets_total", "{:d}"),
    ("os_ratio", "{:.1f}"),
    ("age_mean", "{:.1f}"),
    ("age_sd", "{:.1f}"),
)

_STUDY_COLUMNS = ("study", "subscriptions", "active_users", "followup_users",
                  "followup_rate", "mean_followups", "answersheets")


@main.command()
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.pass_context
def stats(ctx, fmt):
    """Print cohort summary figures from the configured database."""
    config: Config = ctx.obj["config"]
    if config.database != ":memory:" and not Path(config.database).exists():
        _fail_line("E_IO", f"no database at {config.database}")
        raise SystemExit(2)
    store = Store(config.database)
    try:
        summary = compute_summary(store.stats_snapshot())
    finally:
        store.close()

    if fmt == "json":
        click.echo(json.dumps(summary.to_json(), indent=2, sort_keys=True))
        return

    data = summary.to_json()
    width = max(len(name) for name, _ in _TABLE_ROWS)
    for name, pattern in _TABLE_ROWS:
        click.echo(f"{name:<{width}}  {pattern.format(data[name])}")
    if data["per_study"]:
        click.echo("")
        click.echo("  ".join(f"{c:>14}" for c in _STUDY_COLUMNS))
        for study_id, row in data["per_study"].items():
            cells = (study_id, str(row["subscriptions"]), str(row["active_users"]),
                     str(row["followup_users"]), f"{row['followup_rate']:.1%}",
                     f"{row['mean_followups_per_followup_user']:.1f}",
                     str(row["answersheets_total"]))
            click.echo("  ".join(f"{c:>14}" for c in cells))


if __name__ == "__main__":
    main()
