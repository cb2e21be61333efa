"""``returnguard`` command-line entry point.

Every pipeline stage reads and writes inside one ``--out-dir``. Failures are
reported as one JSON line on stderr with a nonzero exit code (3 when an
upstream artifact changed after the stage that produced it).
"""
from __future__ import annotations

import dataclasses
import json
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

import click

from . import bpr, pipeline, productgbm
from .pipeline import PipelineConfig, PipelineError

DEFAULT_OUT = "artifacts"


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int = 1, kind: str = "CliError"):
        super().__init__(message)
        self.exit_code = exit_code
        self.kind = kind


def _emit(obj) -> None:
    click.echo(json.dumps(obj, sort_keys=True, default=str))


def _out_dir(f):
    return click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path),
                        default=DEFAULT_OUT, show_default=True, envvar="RETURNGUARD_OUT_DIR",
                        help="Pipeline artifact directory.")(f)


def _stage(fn, out_dir: Path) -> None:
    _emit(fn(out_dir))


@click.group()
def cli() -> None:
    """Cart return prediction pipeline and service."""


@cli.command("gen-data")
@_out_dir
@click.option("--seed", type=int, default=None, help="Pipeline seed (default 42 or from --config).")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, exists=True, path_type=Path),
              default=None, help="Pipeline config JSON.")
def gen_data(out_dir: Path, seed: int | None, config_path: Path | None) -> None:
    """Generate the synthetic dataset and start a fresh manifest."""
    cfg = None
    if config_path is not None:
        cfg = PipelineConfig.from_dict(json.loads(config_path.read_text()))
    _emit(pipeline.gen_data(out_dir, seed, cfg or PipelineConfig()))


@cli.command()
@_out_dir
def validate(out_dir: Path) -> None:
    """Check dataset integrity and report defects."""
    _stage(pipeline.validate, out_dir)


@cli.command()
@_out_dir
def implicit(out_dir: Path) -> None:
    """Learn signal weights and write implicit ratings."""
    _stage(pipeline.implicit_stage, out_dir)


@cli.command("train-bpr")
@_out_dir
def train_bpr(out_dir: Path) -> None:
    """Train user and product embeddings from implicit ratings."""
    _stage(pipeline.train_bpr, out_dir)


@cli.command("train-sizing")
@_out_dir
def train_sizing(out_dir: Path) -> None:
    """Train size-token embeddings from purchase histories."""
    _stage(pipeline.train_sizing, out_dir)


@cli.command("build-store")
@_out_dir
def build_store(out_dir: Path) -> None:
    """Aggregate user and product history into the feature store."""
    _stage(pipeline.build_store_stage, out_dir)


@cli.command("fit-encoder")
@_out_dir
def fit_encoder(out_dir: Path) -> None:
    """Fit the categorical one-hot encoder on training carts."""
    _stage(pipeline.fit_encoder_stage, out_dir)


@cli.command("train-cart")
@_out_dir
def train_cart(out_dir: Path) -> None:
    """Assemble cart features and train the cart-level network."""
    _stage(pipeline.train_cart, out_dir)


@cli.command("train-product")
@_out_dir
def train_product(out_dir: Path) -> None:
    """Train the item-level boosted trees on carts the cart model flags."""
    _stage(pipeline.train_product, out_dir)


@cli.command()
@_out_dir
def evaluate(out_dir: Path) -> None:
    """Run the feature ablation and write the table and curve CSVs."""
    _stage(pipeline.evaluate, out_dir)


@cli.command("run-all")
@_out_dir
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False, exists=True, path_type=Path),
              default=None)
def run_all(out_dir: Path, seed: int, config_path: Path | None) -> None:
    """Every stage from gen-data through evaluate; prints artifact digests."""
    cfg = PipelineConfig.from_dict(json.loads(config_path.read_text())) if config_path else None
    _emit(pipeline.run_all(out_dir, seed, cfg))


def _read_request(request: str) -> dict:
    text = Path(request[1:]).read_text() if request.startswith("@") else request
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError(f"request is not valid JSON: {e}", 2, "BadRequest") from None


_REQUEST_HELP = "Prediction request as JSON text, or @path to a JSON file."


@cli.command()
@click.option("--model-dir", type=click.Path(file_okay=False, exists=True, path_type=Path),
              default=DEFAULT_OUT, show_default=True, envvar="RETURNGUARD_MODEL_DIR")
@click.option("--store", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              envvar="RETURNGUARD_STORE")
@click.option("--policy", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              envvar="RETURNGUARD_POLICY")
@click.option("--request", required=True, help=_REQUEST_HELP)
def decide(model_dir: Path, store: Path | None, policy: Path | None, request: str) -> None:
    """Score one cart offline and print the decision."""
    from .rps.scoring import BadRequest, cart_from_request, load_predictor, response_body

    predictor = load_predictor(model_dir, store, policy)
    try:
        cart = cart_from_request(_read_request(request), int(time.time() * 1000))
    except BadRequest as e:
        raise CliError(str(e), 2, "BadRequest") from None
    start = time.perf_counter()
    scored = predictor.score(cart)
    _emit(response_body(scored, predictor.versions, (time.perf_counter() - start) * 1000.0))


@cli.command()
@click.option("--bind", default="127.0.0.1:8080", show_default=True, envvar="RETURNGUARD_BIND",
              help="host:port to listen on.")
@click.option("--model-dir", type=click.Path(file_okay=False, exists=True, path_type=Path),
              default=DEFAULT_OUT, show_default=True, envvar="RETURNGUARD_MODEL_DIR")
@click.option("--store", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              envvar="RETURNGUARD_STORE")
@click.option("--policy", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None,
              envvar="RETURNGUARD_POLICY")
def serve(bind: str, model_dir: Path, store: Path | None, policy: Path | None) -> None:
    """Serve POST /predict, GET /health and GET /metrics."""
    from .rps.scoring import load_predictor
    from .rps.service import make_server

    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"--bind must be host:port, got {bind!r}", 2, "BadOption")
    srv = make_server(load_predictor(model_dir, store, policy), host, int(port))
    click.echo(json.dumps({"listening": f"{host}:{srv.server_address[1]}"}), err=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()


@cli.command()
@click.option("--url", default="http://127.0.0.1:8080", show_default=True, envvar="RETURNGUARD_URL")
@click.option("--request", required=True, help=_REQUEST_HELP)
@click.option("--timeout", type=float, default=10.0, show_default=True)
def predict(url: str, request: str, timeout: float) -> None:
    """Send one request to a running service and print the response."""
    body = json.dumps(_read_request(request)).encode()
    req = urllib.request.Request(url.rstrip("/") + "/predict", body,
                                 {"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            _emit(json.loads(resp.read()))
    except urllib.error.HTTPError as e:
        raise CliError(f"HTTP {e.code}: {e.read().decode(errors='replace')}", 1, "HttpError") from None
    except urllib.error.URLError as e:
        raise CliError(f"cannot reach {url}: {e.reason}", 1, "ConnectionError") from None


@cli.group()
def embed() -> None:
    """Product embedding utilities."""


@embed.command("query")
@_out_dir
@click.option("--item", "items", multiple=True, required=True,
              help="Product id; give twice for a similarity.")
@click.option("--user", default=None, help="User id for an affinity score.")
def embed_query(out_dir: Path, items: tuple[str, ...], user: str | None) -> None:
    """Affinity of a user for an item, or cosine similarity of two items."""
    emb = bpr.EmbeddingMatrix.load(out_dir / pipeline.BPR)
    try:
        if user is not None and len(items) == 1:
            _emit({"user": user, "item": items[0], "affinity": bpr.affinity(emb, user, items[0])})
        elif user is None and len(items) == 2:
            _emit({"items": list(items), "similarity": bpr.similarity(emb, *items)})
        else:
            raise CliError("give --user with one --item, or two --item values", 2, "BadOption")
    except KeyError as e:
        raise CliError(f"unknown id {e.args[0]}", 2, "UnknownId") from None


@cli.group()
def gbm() -> None:
    """Item-level tree model utilities."""


@gbm.command("dump")
@_out_dir
@click.option("--max-trees", type=int, default=None, help="Only print the first N trees.")
def gbm_dump(out_dir: Path, max_trees: int | None) -> None:
    """Print the item model's trees in readable form."""
    from .features import product_feature_names

    model = productgbm.BoostedEnsemble.load(out_dir / pipeline.PRODUCTGBM)
    names = product_feature_names(pipeline.feature_context(out_dir))
    if max_trees is not None:
        model = dataclasses.replace(model, trees=model.trees[:max_trees])
    click.echo(productgbm.dump(model, names))


def _error_line(kind: str, message: str, **extra) -> str:
    return json.dumps({"error": kind, "message": message, **extra}, sort_keys=True)


def main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns the process exit code instead of raising SystemExit."""
    try:
        cli.main(args=argv, prog_name="returnguard", standalone_mode=False)
        return 0
    except PipelineError as e:
        click.echo(json.dumps(e.to_json(), sort_keys=True), err=True)
        return e.exit_code
    except CliError as e:
        click.echo(_error_line(e.kind, e.message), err=True)
        return e.exit_code
    except click.exceptions.Abort:
        click.echo(_error_line("Aborted", "aborted"), err=True)
        return 1
    except click.ClickException as e:
        click.echo(_error_line(type(e).__name__, e.format_message()), err=True)
        return e.exit_code
    except (OSError, ValueError, KeyError) as e:
        click.echo(_error_line(type(e).__name__, str(e)), err=True)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
