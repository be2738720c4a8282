"""panelforge command line.

Subcommands: data (validate / stats / split / synth), train (stage1 /
stage2), eval, generate, page, serve. Exit codes: 0 success, 2 schema or
validation failure, 3 missing input file or checkpoint, 1 anything else.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path

import click

import panelforge
from panelforge.data.annotations import AnnotationError, load_corpus
from panelforge.data.splits import SplitError, make_split
from panelforge.specs import GenerationDefaults, SpecValidationError, UnknownReferenceError, parse_panel_spec

EXIT_VALIDATION = 2
EXIT_MISSING = 3

logger = logging.getLogger(__name__)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_checkpoint_model(ckpt_path: str):
    from panelforge.models.generator import build_model
    from panelforge.training.checkpoint import CheckpointArchive, CheckpointError
    from panelforge.training.config import ConfigError, train_config_from_flat

    if not Path(ckpt_path).exists():
        _fail(EXIT_MISSING, f"checkpoint not found: {ckpt_path}")
    try:
        archive = CheckpointArchive.load(ckpt_path)
        cfg = train_config_from_flat(archive.config).effective_model()
        model = build_model(cfg)
        archive.apply_to_model(model)
    except (CheckpointError, ConfigError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    model.eval()
    return model


def _path_resolver(base: Path):
    def resolve(ref: str):
        from PIL import Image

        path = (base / ref).resolve() if not Path(ref).is_absolute() else Path(ref)
        if not path.exists():
            raise FileNotFoundError(ref)
        return Image.open(path).convert("L")

    return resolve


@click.group()
@click.version_option(version=panelforge.__version__, prog_name="panelforge")
@click.option("-v", "--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose: bool):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


# -- data -----------------------------------------------------------------


@main.group()
def data():
    """Corpus validation, statistics, splitting, synthesis."""


@data.command("validate")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
def data_validate(root):
    try:
        corpus = load_corpus(root)
    except AnnotationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    stats = corpus.stats()
    click.echo(f"ok: {stats.pages} pages, {stats.panels} panels validated")


@data.command("stats")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def data_stats(root, as_json: bool):
    try:
        corpus = load_corpus(root)
    except AnnotationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    stats = corpus.stats().as_dict()
    if as_json:
        click.echo(json.dumps(stats, sort_keys=True))
    else:
        for key, value in stats.items():
            click.echo(f"{key:>16}: {value}")


@data.command("split")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--eval-per-series", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write split manifest JSON here.")
def data_split(root, eval_per_series: int, seed: int, out):
    try:
        corpus = load_corpus(root)
        train, evalc = make_split(corpus, eval_per_series, seed=seed)
    except (AnnotationError, SplitError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    manifest = {
        "seed": seed,
        "eval_pages_per_series": eval_per_series,
        "train": [p.page_id for p in train.pages],
        "eval": [p.page_id for p in evalc.pages],
    }
    if out:
        Path(out).write_text(json.dumps(manifest, indent=2) + "\n")
        click.echo(f"wrote {out}")
    click.echo(f"train: {len(train.pages)} pages, eval: {len(evalc.pages)} pages")


@data.command("synth")
@click.argument("root", type=click.Path())
@click.option("--series", type=int, default=2, show_default=True)
@click.option("--pages", type=int, default=4, show_default=True, help="Pages per series.")
@click.option("--panel-size", type=int, default=128, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def data_synth(root, series: int, pages: int, panel_size: int, seed: int):
    """Generate a synthetic toy corpus (for demos and smoke tests)."""
    from panelforge.data.synthetic import make_synthetic_corpus

    corpus = make_synthetic_corpus(
        root, n_series=series, pages_per_series=pages,
        panel_size=(panel_size, panel_size), seed=seed,
    )
    stats = corpus.stats()
    click.echo(f"wrote {stats.pages} pages / {stats.panels} panels under {root}")


# -- training ---------------------------------------------------------------


@main.group()
def train():
    """Two-stage training."""


def _run_training(stage: int, config_path, data_root, out_dir, resume):
    from panelforge.training.checkpoint import CheckpointArchive, CheckpointError
    from panelforge.training.config import ConfigError, load_train_config
    from panelforge.training.harness import train_stage1, train_stage2

    if not Path(config_path).exists():
        _fail(EXIT_MISSING, f"config not found: {config_path}")
    try:
        cfg = load_train_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    if cfg.stage != stage:
        _fail(EXIT_VALIDATION, f"config declares stage {cfg.stage}, command is stage {stage}")
    try:
        corpus = load_corpus(data_root)
    except AnnotationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    try:
        if stage == 1:
            resume_archive = None
            if resume:
                if not Path(resume).exists():
                    _fail(EXIT_MISSING, f"resume checkpoint not found: {resume}")
                resume_archive = CheckpointArchive.load(resume)
            archive, _, log = train_stage1(corpus, cfg, out_dir=out_dir, resume=resume_archive)
        else:
            if not resume or not Path(resume).exists():
                _fail(EXIT_MISSING, "stage 2 requires --resume pointing at a stage-1 checkpoint")
            stage1 = CheckpointArchive.load(resume)
            archive, _, log = train_stage2(corpus, stage1, cfg, out_dir=out_dir)
    except (CheckpointError, ConfigError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    final = log.rows[-1]["smoothed"] if log.rows else float("nan")
    click.echo(f"stage {stage} done: {archive.step} steps, smoothed loss {final:.4f}")
    click.echo(f"outputs in {out_dir}")


@train.command("stage1")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", type=click.Path(), default=None)
def train_stage1_cmd(config_path, data_root, out_dir, resume):
    _run_training(1, config_path, data_root, out_dir, resume)


@train.command("stage2")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", type=click.Path(), required=True, help="Stage-1 checkpoint to freeze.")
def train_stage2_cmd(config_path, data_root, out_dir, resume):
    _run_training(2, config_path, data_root, out_dir, resume)


# -- evaluation ---------------------------------------------------------------


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--data", "data_root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", type=int, default=None, help="Sampler steps (default: model config).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=None, help="Character attention weight override.")
@click.option("--beta", type=float, default=None, help="Adapted-feature blend override.")
@click.option("--dialog-oracle", type=click.Choice(["none", "truth"]), default="none", show_default=True,
              help="'truth' echoes ground-truth boxes (plumbing check); plug a real detector via the API.")
@click.option("--json", "as_json", is_flag=True, help="Print the report JSON to stdout.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def eval_cmd(ckpt, data_root, out_path, steps, seed, alpha, beta, dialog_oracle, as_json, figures):
    """Generate one panel per eval record and score it."""
    from panelforge.evaluation import EvalOracles, FixedSeedAlignmentScorer, FixedSeedEmbedder, TruthDialogDetector, run_eval

    model = _load_checkpoint_model(ckpt)
    try:
        corpus = load_corpus(data_root)
    except AnnotationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    oracles = EvalOracles(
        embedder=FixedSeedEmbedder(),
        text_scorer=FixedSeedAlignmentScorer(vocab_size=model.config.vocab_size),
        dialog_detector=TruthDialogDetector() if dialog_oracle == "truth" else None,
    )
    report = run_eval(model, corpus, oracles, steps=steps, seed=seed, alpha=alpha, beta=beta)
    report.write(out_path, figures=figures)
    if as_json:
        click.echo(json.dumps(report.to_json_dict(), sort_keys=True))
    else:
        click.echo(report.render_text())
    click.echo(f"report written to {out_path}")


# -- generation ---------------------------------------------------------------


@main.command("generate")
@click.option("--spec", "spec_path", required=True, type=click.Path())
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def generate_cmd(spec_path, ckpt, out_path):
    """Generate one panel from a PanelSpec JSON file."""
    if not Path(spec_path).exists():
        _fail(EXIT_MISSING, f"spec not found: {spec_path}")
    model = _load_checkpoint_model(ckpt)
    try:
        doc = json.loads(Path(spec_path).read_text())
    except json.JSONDecodeError as exc:
        _fail(EXIT_VALIDATION, f"spec is not valid JSON: {exc}")
    try:
        spec = parse_panel_spec(
            doc,
            resolver=_path_resolver(Path(spec_path).parent),
            defaults=GenerationDefaults(alpha=model.config.alpha_infer, beta=model.config.beta,
                                        steps=model.config.steps),
            max_characters=model.config.n_c_cap,
            valid_sizes=[tuple(b) for b in model.config.buckets],
        )
    except SpecValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except UnknownReferenceError as exc:
        _fail(EXIT_MISSING, str(exc))
    started = time.time()
    image = model.generate(spec)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    image.save(out_path)
    click.echo(
        f"wrote {out_path} ({image.width}x{image.height}) in {time.time() - started:.2f}s "
        f"[config {model.config.config_hash()}]"
    )


@main.command("page")
@click.option("--script", "script_path", required=True, type=click.Path())
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def page_cmd(script_path, ckpt, out_path):
    """Generate panels from a page script and composite them."""
    from panelforge.compose import compose_page, parse_page_script, write_page

    if not Path(script_path).exists():
        _fail(EXIT_MISSING, f"page script not found: {script_path}")
    model = _load_checkpoint_model(ckpt)
    try:
        doc = json.loads(Path(script_path).read_text())
        script = parse_page_script(doc)
        page, metadata = compose_page(
            script, model, resolver=_path_resolver(Path(script_path).parent),
            defaults=GenerationDefaults(alpha=model.config.alpha_infer, beta=model.config.beta,
                                        steps=model.config.steps),
        )
    except json.JSONDecodeError as exc:
        _fail(EXIT_VALIDATION, f"page script is not valid JSON: {exc}")
    except SpecValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except UnknownReferenceError as exc:
        _fail(EXIT_MISSING, str(exc))
    write_page(page, metadata, out_path)
    click.echo(f"wrote {out_path} with {len(metadata)} panels")


# -- service -------------------------------------------------------------------


@main.command("serve")
@click.option("--ckpt", type=click.Path(), default=None, help="Checkpoint to serve (default: fresh toy model).")
@click.option("--data-dir", type=click.Path(), required=True, help="Directory for the store and images.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8750, show_default=True)
@click.option("--queue-depth", type=int, default=8, show_default=True)
def serve_cmd(ckpt, data_dir, host, port, queue_depth):
    """Run the HTTP generation service."""
    import uvicorn

    from panelforge.service.app import ServiceSettings, create_app

    if ckpt and not Path(ckpt).exists():
        _fail(EXIT_MISSING, f"checkpoint not found: {ckpt}")
    app = create_app(ServiceSettings(data_dir=data_dir, checkpoint_path=ckpt, queue_depth=queue_depth))
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
