"""Command-line entry points for every pipeline role."""

from __future__ import annotations

import logging
import statistics
import sys
import threading

import click

from . import assets
from . import chatbot as cb
from . import features as feat
from . import gesture as ges
from . import orchestrator as orch
from . import schema
from .stomp import broker as broker_mod
from .stomp.client import ClientError, StompClient


def _connect(tcp: str) -> StompClient:
    host, _, port = tcp.rpartition(":")
    return StompClient(host or "127.0.0.1", int(port))


broker_tcp_option = click.option(
    "--broker-tcp", default=f"127.0.0.1:{broker_mod.DEFAULT_TCP_PORT}",
    show_default=True, help="Broker TCP address as host:port.",
)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Broker-mediated conversational agent pipeline."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--tcp-port", default=broker_mod.DEFAULT_TCP_PORT, show_default=True)
@click.option("--ws-port", default=broker_mod.DEFAULT_WS_PORT, show_default=True)
def broker(host: str, tcp_port: int, ws_port: int) -> None:
    """Serve the STOMP broker over TCP and WebSocket."""
    config = broker_mod.BrokerConfig(host=host, tcp_port=tcp_port, ws_port=ws_port)
    try:
        handle = broker_mod.broker_serve(config)
    except OSError as exc:
        raise click.ClickException(f"cannot bind broker: {exc}")
    click.echo(f"broker listening on tcp {host}:{tcp_port}, ws {host}:{ws_port}/stomp")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        handle.stop()


@main.command()
@broker_tcp_option
@click.option("--intents", type=click.Path(exists=True), default=None,
              help="Intent table config file (built-in table when omitted).")
@click.option("--per-syllable-s", default=0.15, show_default=True)
@click.option("--inter-word-gap-s", default=0.08, show_default=True)
def chatbot(broker_tcp: str, intents: str | None,
            per_syllable_s: float, inter_word_gap_s: float) -> None:
    """Run the chatbot component."""
    table = cb.load_intent_table(intents) if intents else cb.DEFAULT_INTENTS
    voice = cb.TtsVoice(per_syllable_s=per_syllable_s, inter_word_gap_s=inter_word_gap_s)
    try:
        with _connect(broker_tcp) as client:
            cb.chatbot_component_run(client, table, voice)
    except ClientError as exc:
        raise click.ClickException(str(exc))


@main.command()
@broker_tcp_option
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Gesture model weights (shipped reference when omitted).")
@click.option("--skeleton", "skeleton_path", type=click.Path(exists=True), default=None)
@click.option("--norm-stats", "stats_path", type=click.Path(exists=True), default=None)
def gesture(broker_tcp: str, model_path: str | None,
            skeleton_path: str | None, stats_path: str | None) -> None:
    """Run the gesture generation component."""
    model = ges.load_model(model_path) if model_path else assets.reference_model()
    skeleton = ges.load_skeleton(skeleton_path) if skeleton_path else ges.Skeleton()
    stats = feat.load_norm_stats(stats_path) if stats_path else assets.reference_norm_stats()
    try:
        with _connect(broker_tcp) as client:
            ges.gesture_component_run(client, model, skeleton, stats)
    except ClientError as exc:
        raise click.ClickException(str(exc))


@main.command()
@broker_tcp_option
@click.option("--timeout-s", default=orch.STAGE_TIMEOUT_S, show_default=True,
              help="Per-utterance stage timeout.")
def agent(broker_tcp: str, timeout_s: float) -> None:
    """Run the agent host."""
    try:
        with _connect(broker_tcp) as client:
            orch.agent_run(client, stage_timeout_s=timeout_s)
    except ClientError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.argument("script", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--intents", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--skeleton", "skeleton_path", type=click.Path(exists=True), default=None)
@click.option("--norm-stats", "stats_path", type=click.Path(exists=True), default=None)
def batch(script: str, out: str, intents: str | None, model_path: str | None,
          skeleton_path: str | None, stats_path: str | None) -> None:
    """Run the whole pipeline offline, one utterance per SCRIPT line."""
    try:
        reports = orch.run_batch(
            script, out,
            table=cb.load_intent_table(intents) if intents else None,
            model=ges.load_model(model_path) if model_path else None,
            skeleton=ges.load_skeleton(skeleton_path) if skeleton_path else None,
            stats=feat.load_norm_stats(stats_path) if stats_path else None,
        )
    except (orch.OrchestratorError, cb.ChatbotError, ges.GestureError,
            feat.FeatureError, schema.SchemaError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{len(reports)} utterances -> {out}")


@main.command()
@broker_tcp_option
@click.option("--text", required=True, help="Utterance text to send.")
@click.option("--session", default="cli", show_default=True)
@click.option("--timeout-s", default=orch.STAGE_TIMEOUT_S, show_default=True)
def send(broker_tcp: str, text: str, session: str, timeout_s: float) -> None:
    """Publish one utterance and await its playback bundle."""
    try:
        with _connect(broker_tcp) as client:
            bundle, total_ms = orch.send_utterance(
                client, text, session, timeout_s=timeout_s
            )
    except (ClientError, orch.OrchestratorError, schema.SchemaError) as exc:
        raise click.ClickException(str(exc))
    if bundle.error is not None:
        raise click.ClickException(f"pipeline error: {bundle.error}")
    click.echo(f"reply: {bundle.reply_text}")
    click.echo(f"motion: {bundle.motion.n_frames} frames at {bundle.motion.fps} FPS")
    if total_ms is not None:
        click.echo(f"total_ms: {total_ms:.1f}")


@main.command()
@click.argument("latency_tsv", type=click.Path(exists=True))
def report(latency_tsv: str) -> None:
    """Aggregate a latency.tsv into per-stage mean/max."""
    try:
        reports = orch.read_latency_tsv(latency_tsv)
    except (orch.OrchestratorError, ValueError) as exc:
        raise click.ClickException(str(exc))
    if not reports:
        raise click.ClickException("no rows")
    click.echo("stage\tmean_ms\tmax_ms")
    for stage in ("chatbot", "gesture", "transport", "total"):
        values = [getattr(r, f"{stage}_ms") for r in reports]
        click.echo(f"{stage}\t{statistics.fmean(values):.3f}\t{max(values):.3f}")


@main.command("gen-assets")
@click.option("--out", default=None, type=click.Path(),
              help="Target directory (package assets dir when omitted).")
def gen_assets(out: str | None) -> None:
    """Regenerate the shipped norm stats, model weights and skeleton."""
    paths = assets.generate_assets(out)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    sys.exit(main())
