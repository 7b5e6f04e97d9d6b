"""Headless operation: run sessions, validate/render/diff programs, replay
traces, and launch the HTTP service.

Exit codes (stable, so batch scripts can tally outcomes):
  0  success / session converged
  1  input or validation error
  2  session exhausted its budget (partial result still written)
  3  model backend unavailable or unusable
  4  internal error
  5  replay divergence
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

import click

from . import __version__
from .config import load_service_config
from .gateway.base import BackendUnavailable, GatewayError, MalformedModelOutput
from .gateway.oracle import OracleGateway
from .gateway.remote import RemoteGateway
from .gateway.scripted import ScriptedGateway
from .geometry import extract_relations, structural_distance
from .grammar import (
    Canvas,
    Diagram,
    GrammarError,
    diagram_warnings,
    diff_diagrams,
    parse_diagram,
    serialize_diagram,
)
from .loop import DEFAULT_INSTRUCTION, Phase, SessionConfig
from .render.raster import encode_png, render_image
from .render.svg import compile_svg
from .session import SessionRunner, replay_trace
from .store import SessionStore, SessionTrace, TraceRecord

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_EXHAUSTED = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4
EXIT_DIVERGED = 5


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_canvas(text: str) -> Canvas:
    try:
        width, height = text.lower().split("x")
        return Canvas(int(width), int(height))
    except (ValueError, GrammarError) as exc:
        raise click.BadParameter(f"canvas must look like 200x150: {exc}") from exc


def _load_diagram(path: Path, canvas: Canvas) -> Diagram:
    return parse_diagram(path.read_text(encoding="utf-8"), canvas)


@click.group()
@click.version_option(version=__version__, prog_name="sketchvec")
def main() -> None:
    """Sketch-to-diagram agent: grammar tools, sessions, service."""


@main.command()
@click.option("--sketch", "sketch_path", required=True, type=click.Path(path_type=Path))
@click.option("--instruction", default=DEFAULT_INSTRUCTION, show_default=False)
@click.option("--backend", type=click.Choice(["remote", "oracle", "scripted"]), default="oracle")
@click.option("--canvas", "canvas_text", default="200x200", show_default=True)
@click.option("--max-steps", default=10, show_default=True)
@click.option("--candidate-count", default=5, show_default=True)
@click.option("--supersample", default=2, show_default=True)
@click.option("--target", "target_path", type=click.Path(path_type=Path), default=None,
              help="Known target diagram JSON (oracle backend with a PNG sketch).")
@click.option("--trace", "trace_path", type=click.Path(path_type=Path), default=None,
              help="Stored trace to replay (scripted backend).")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="Service config file (remote backend model endpoint).")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def run(
    sketch_path: Path,
    instruction: str,
    backend: str,
    canvas_text: str,
    max_steps: int,
    candidate_count: int,
    supersample: int,
    target_path: Path | None,
    trace_path: Path | None,
    config_path: Path | None,
    out_dir: Path,
) -> None:
    """Run one session; writes final.svg, final.json and trace.jsonl to --out."""
    canvas = _parse_canvas(canvas_text)
    if not sketch_path.exists():
        _fail(EXIT_INPUT, f"sketch file not found: {sketch_path}")
    out_dir.mkdir(parents=True, exist_ok=True)

    target: Diagram | None = None
    try:
        if backend == "oracle":
            if sketch_path.suffix.lower() == ".json":
                # A known diagram stands in for the sketch: render it and
                # use it as the oracle target.
                target = _load_diagram(sketch_path, canvas)
                sketch_png = encode_png(render_image(target, supersample))
            elif target_path is not None:
                target = _load_diagram(target_path, canvas)
                sketch_png = sketch_path.read_bytes()
            else:
                _fail(
                    EXIT_INPUT,
                    "oracle backend needs a target: pass a diagram JSON as "
                    "--sketch, or --target alongside a PNG sketch",
                )
            gateway = OracleGateway(target)
            config = SessionConfig(
                canvas=canvas,
                instruction=instruction,
                max_steps=max_steps,
                candidate_count=candidate_count,
                render_supersample=supersample,
            )
        elif backend == "scripted":
            if trace_path is None:
                _fail(EXIT_INPUT, "scripted backend needs --trace")
            trace = _read_trace_file(trace_path)
            config = SessionConfig.from_payload(
                {
                    k: v
                    for k, v in trace.meta.payload["config"].items()
                    if k not in ("backend", "oracle_target")
                }
            )
            gateway = ScriptedGateway(trace.records, config.canvas)
            sketch_png = sketch_path.read_bytes()
        else:
            service_config = load_service_config(config_path)
            if service_config.remote is None:
                _fail(
                    EXIT_INPUT,
                    "remote backend needs a model endpoint (config file or "
                    "SKETCHVEC_MODEL_ENDPOINT)",
                )
            gateway = RemoteGateway(service_config.remote)
            config = SessionConfig(
                canvas=canvas,
                instruction=instruction,
                max_steps=max_steps,
                candidate_count=candidate_count,
                render_supersample=supersample,
            )
        store = SessionStore(out_dir / "store")
        runner = SessionRunner.create(
            store, config, sketch_png, gateway,
            config_payload_extra={"backend": backend},
        )
        runner.run_steps(max_steps + 1)
    except GrammarError as exc:
        _fail(EXIT_INPUT, str(exc))
    except (BackendUnavailable, MalformedModelOutput, GatewayError) as exc:
        _fail(EXIT_BACKEND, str(exc))
    except click.exceptions.Exit:
        raise
    except Exception as exc:
        _fail(EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")

    final = runner.state.current
    (out_dir / "final.json").write_text(serialize_diagram(final) + "\n", encoding="utf-8")
    (out_dir / "final.svg").write_text(compile_svg(final).text, encoding="utf-8")
    shutil.copyfile(
        store.sessions_dir / runner.session_id / "trace.jsonl",
        out_dir / "trace.jsonl",
    )
    phase = runner.state.phase
    line = f"session {runner.session_id}: {phase.value} after {runner.state.step_count} step(s)"
    if target is not None:
        distance = structural_distance(final, target).value
        line += f", structural distance {distance:.4f}"
    click.echo(line)
    if phase is Phase.CONVERGED:
        sys.exit(EXIT_OK)
    if phase is Phase.EXHAUSTED:
        sys.exit(EXIT_EXHAUSTED)
    sys.exit(EXIT_INTERNAL)


@main.command()
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--canvas", "canvas_text", default="200x200", show_default=True)
def validate(path: Path, canvas_text: str) -> None:
    """Check a diagram file against the grammar; errors carry JSON pointers."""
    canvas = _parse_canvas(canvas_text)
    if not path.exists():
        _fail(EXIT_INPUT, f"file not found: {path}")
    try:
        diagram = parse_diagram(path.read_text(encoding="utf-8"), canvas)
    except GrammarError as exc:
        click.echo(f"{exc.path or '/'}: {exc.reason}", err=True)
        click.echo("1 error")
        sys.exit(EXIT_INPUT)
    for warning in diagram_warnings(diagram):
        click.echo(f"warning: {warning}")
    click.echo(f"0 errors ({len(diagram.shapes)} shape(s))")
    sys.exit(EXIT_OK)


@main.command()
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--canvas", "canvas_text", default="200x200", show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Output file; .svg by default, PNG with --raster.")
@click.option("--raster", is_flag=True, help="Write a PNG instead of SVG.")
@click.option("--supersample", default=2, show_default=True)
def render(path: Path, canvas_text: str, out_path: Path | None, raster: bool,
           supersample: int) -> None:
    """Compile a diagram file to SVG (or rasterize it deterministically)."""
    canvas = _parse_canvas(canvas_text)
    if not path.exists():
        _fail(EXIT_INPUT, f"file not found: {path}")
    try:
        diagram = parse_diagram(path.read_text(encoding="utf-8"), canvas)
    except GrammarError as exc:
        _fail(EXIT_INPUT, str(exc))
    if raster:
        png = encode_png(render_image(diagram, supersample))
        target = out_path or path.with_suffix(".png")
        target.write_bytes(png)
        click.echo(f"wrote {target}")
    else:
        svg = compile_svg(diagram).text
        if out_path is None:
            click.echo(svg, nl=False)
        else:
            out_path.write_text(svg, encoding="utf-8")
            click.echo(f"wrote {out_path}")
    sys.exit(EXIT_OK)


@main.command()
@click.argument("current", type=click.Path(path_type=Path))
@click.argument("target", type=click.Path(path_type=Path))
@click.option("--canvas", "canvas_text", default="200x200", show_default=True)
def diff(current: Path, target: Path, canvas_text: str) -> None:
    """Relations and fields present in one diagram but not the other."""
    canvas = _parse_canvas(canvas_text)
    try:
        a = _load_diagram(current, canvas)
        b = _load_diagram(target, canvas)
    except (OSError, GrammarError) as exc:
        _fail(EXIT_INPUT, str(exc))
    relations_a = {r.describe(a) for r in extract_relations(a)}
    relations_b = {r.describe(b) for r in extract_relations(b)}
    missing = sorted(relations_b - relations_a)
    extra = sorted(relations_a - relations_b)
    click.echo(f"relations in target missing from current ({len(missing)}):")
    for line in missing:
        click.echo(f"  + {line}")
    click.echo(f"relations in current absent from target ({len(extra)}):")
    for line in extra:
        click.echo(f"  - {line}")
    delta = diff_diagrams(a, b)
    click.echo(f"field-level edits to reach target ({delta.change_count}):")
    for line in delta.summary_lines():
        click.echo(f"  * {line}")
    distance = structural_distance(a, b).value
    click.echo(f"structural distance: {distance:.4f}")
    sys.exit(EXIT_OK)


def _read_trace_file(path: Path) -> SessionTrace:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for seq, line in enumerate(l for l in fh if l.strip()):
            records.append(TraceRecord.from_line(line, seq))
    if not records or records[0].type != "session_meta":
        raise GrammarError("trace must start with a session_meta record")
    return SessionTrace(records[0].payload.get("id", path.stem), tuple(records))


@main.command()
@click.argument("trace_path", type=click.Path(path_type=Path))
def replay(trace_path: Path) -> None:
    """Re-run a stored trace through the scripted backend; verify fidelity."""
    if not trace_path.exists():
        _fail(EXIT_INPUT, f"trace not found: {trace_path}")
    try:
        trace = _read_trace_file(trace_path)
        result = replay_trace(trace)
    except (GrammarError, KeyError, ValueError) as exc:
        _fail(EXIT_INPUT, f"unreadable trace: {type(exc).__name__}: {exc}")
    if result.faithful:
        click.echo(
            f"trace reproduced: {len(result.records)} step(s), "
            f"final phase {result.state.phase.value}"
        )
        sys.exit(EXIT_OK)
    click.echo("trace diverged:", err=True)
    for line in result.mismatches:
        click.echo(f"  {line}", err=True)
    sys.exit(EXIT_DIVERGED)


@main.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
def serve(config_path: Path | None, host: str | None, port: int | None) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    service_config = load_service_config(config_path)
    app = create_app(service_config)
    uvicorn.run(
        app,
        host=host or service_config.host,
        port=port or service_config.port,
        log_level="warning",
    )


if __name__ == "__main__":
    main()
