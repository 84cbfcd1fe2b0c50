"""Command-line entry points for the pipelines and the session service.

Every command resolves one AppConfig (from --config, the PURL_CONFIG
variable, or defaults), logs the effective seed and config digest to
stderr, and exits nonzero with one diagnostic line per problem when
anything fails validation.
"""

from __future__ import annotations

import json
import statistics
import sys
from pathlib import Path

import click

from .config import AppConfig, config_hash, load_config
from .datagen import DatagenConfig, run_datagen, run_synth_datagen
from .errors import ConfigError, LexdiagError
from .metrics import score_text
from .pipelines import (
    PU_CHECKPOINT,
    bundle_from_artifacts,
    gateway_from_config,
    provider_from_config,
    save_bandit_stage,
    split_records,
    train_bandit_stage,
    train_pu_stage,
)
from .pu_model import PuModel
from .session import simulate_corpus
from .util import read_jsonl, write_json

TOKENIZATION_NOTE = "lower-cased, punctuation-stripped whitespace tokens"


def _announce(config: AppConfig, seed: int) -> None:
    click.echo(f"run: config={config_hash(config)} seed={seed}", err=True)


def _fail(exc: BaseException) -> None:
    if isinstance(exc, ConfigError):
        for problem in exc.problems:
            click.echo(f"config error: {problem}", err=True)
    else:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


@click.group()
@click.option(
    "--config",
    "config_path",
    envvar="PURL_CONFIG",
    type=click.Path(dir_okay=False),
    default=None,
    help="Configuration file (YAML). Defaults apply when omitted.",
)
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Diagnostic-dialogue engine: data generation, training, serving."""
    try:
        ctx.obj = load_config(config_path)
    except LexdiagError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "source", required=True,
              help="Directory of *.txt narratives, or synth:N.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-hop", default=None, type=int)
@click.option("--mask-ratio", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.pass_obj
def datagen(
    config: AppConfig,
    source: str,
    out_dir: str,
    n_hop: int | None,
    mask_ratio: float | None,
    seed: int | None,
) -> None:
    """Build a corpus from raw narratives or the synthetic generator."""
    try:
        run_seed = config.seed if seed is None else seed
        _announce(config, run_seed)
        cfg = DatagenConfig(
            seed=run_seed,
            mask_ratio=0.25 if mask_ratio is None else mask_ratio,
            n_hop=config.session.n_hop if n_hop is None else n_hop,
        )
        if source.startswith("synth:"):
            n_cases = int(source.split(":", 1)[1])
            manifest, _gateway = run_synth_datagen(n_cases, cfg, out_dir)
        else:
            src = Path(source)
            if not src.is_dir():
                raise ConfigError([f"--input: {source} is not a directory"])
            texts = [
                p.read_text(encoding="utf-8") for p in sorted(src.glob("*.txt"))
            ]
            if not texts:
                raise ConfigError([f"--input: no *.txt files under {source}"])
            gateway = gateway_from_config(config)
            manifest = run_datagen(texts, gateway, cfg, out_dir)
        counts = " ".join(f"{k}={v}" for k, v in sorted(manifest.counts.items()))
        click.echo(f"corpus {manifest.corpus_hash[:12]}: {counts}")
    except (LexdiagError, ValueError) as exc:
        _fail(exc)


@main.command("train-pu")
@click.option("--epochs", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--split", default="train", show_default=True)
@click.pass_obj
def train_pu(
    config: AppConfig, epochs: int | None, seed: int | None, split: str
) -> None:
    """Fit the domain scorer on the masked facts of a corpus split."""
    try:
        run_seed = config.seed if seed is None else seed
        _announce(config, run_seed)
        records = split_records(config, split)
        provider = provider_from_config(config)
        result, case_split = train_pu_stage(
            config, records, provider, epochs=epochs, seed=seed
        )
        out_dir = Path(config.paths.checkpoints)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint = out_dir / PU_CHECKPOINT
        result.model.save(checkpoint)
        final_risk = statistics.fmean(
            s.risk for s in result.steps[-len(case_split.cases):]
        )
        click.echo(
            f"trained on {len(case_split.cases)} cases "
            f"({len(case_split.skipped)} skipped), "
            f"final mean risk {final_risk:.6f}, saved {checkpoint}"
        )
    except LexdiagError as exc:
        _fail(exc)


@main.command("train-bandit")
@click.option("--seed", default=None, type=int)
@click.option("--split", default="train", show_default=True)
@click.pass_obj
def train_bandit(config: AppConfig, seed: int | None, split: str) -> None:
    """Train one per-case question-selection policy per corpus record."""
    try:
        run_seed = config.seed if seed is None else seed
        _announce(config, run_seed)
        records = split_records(config, split)
        provider = provider_from_config(config)
        gateway = gateway_from_config(config)
        model = PuModel.load(Path(config.paths.checkpoints) / PU_CHECKPOINT)
        result, case_embeddings = train_bandit_stage(
            config, records, provider, model, gateway, seed=seed
        )
        archive = save_bandit_stage(config, result, case_embeddings)
        pulls = [
            reward.r_total
            for series in result.rewards.values()
            for reward in series
        ]
        mean_reward = statistics.fmean(pulls) if pulls else 0.0
        click.echo(
            f"trained {len(result.states)} policies, "
            f"mean fused reward {mean_reward:.4f}, saved {archive}"
        )
    except LexdiagError as exc:
        _fail(exc)


@main.command()
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def simulate(config: AppConfig, split: str, out_path: str) -> None:
    """Replay corpus cases against the trained models with a scripted client."""
    try:
        _announce(config, config.seed)
        records = split_records(config, split)
        provider = provider_from_config(config)
        gateway = gateway_from_config(config)
        bundle = bundle_from_artifacts(config, provider)
        reports = simulate_corpus(records, bundle, gateway)
        with open(out_path, "w", encoding="utf-8") as fh:
            for report in reports:
                fh.write(json.dumps(report.to_dict(), ensure_ascii=False) + "\n")
        if reports:
            recovery = statistics.fmean(r.recovery_rate for r in reports)
            turns = statistics.fmean(r.turns for r in reports)
            click.echo(
                f"{len(reports)} sessions: mean recovery {recovery:.3f}, "
                f"mean turns {turns:.2f}, wrote {out_path}"
            )
        else:
            click.echo(f"0 sessions, wrote {out_path}")
    except LexdiagError as exc:
        _fail(exc)


@main.command("eval")
@click.option("--pred", "pred_path", required=True,
              type=click.Path(dir_okay=False, exists=True))
@click.option("--gold", "gold_path", required=True,
              type=click.Path(dir_okay=False, exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def eval_views(
    config: AppConfig, pred_path: str, gold_path: str, out_path: str
) -> None:
    """Score predicted court views against references, matched by case id.

    Both files are JSONL with rows {"case_id": ..., "text": ...}.
    """
    try:
        _announce(config, config.seed)
        problems: list[str] = []
        pred = _views_by_case(pred_path, problems)
        gold = _views_by_case(gold_path, problems)
        for case_id in sorted(set(pred) - set(gold)):
            problems.append(f"case {case_id!r} has a prediction but no reference")
        for case_id in sorted(set(gold) - set(pred)):
            problems.append(f"case {case_id!r} has a reference but no prediction")
        if problems:
            raise ConfigError(problems)
        if not pred:
            raise ConfigError(["no cases to score"])
        cases = {
            case_id: score_text(pred[case_id], gold[case_id]).as_dict()
            for case_id in sorted(pred)
        }
        metric_names = sorted(next(iter(cases.values())))
        report = {
            "tokenization": TOKENIZATION_NOTE,
            "cases": cases,
            "mean": {
                name: statistics.fmean(c[name] for c in cases.values())
                for name in metric_names
            },
        }
        write_json(out_path, report)
        mean = " ".join(f"{k}={v:.4f}" for k, v in sorted(report["mean"].items()))
        click.echo(f"{len(cases)} cases: {mean}")
    except LexdiagError as exc:
        _fail(exc)


def _views_by_case(path: str, problems: list[str]) -> dict[str, str]:
    views: dict[str, str] = {}
    for i, row in enumerate(read_jsonl(path)):
        case_id = row.get("case_id")
        text = row.get("text")
        if not isinstance(case_id, str) or not isinstance(text, str):
            problems.append(f"{path}:{i + 1}: rows need string case_id and text")
            continue
        if case_id in views:
            problems.append(f"{path}:{i + 1}: duplicate case {case_id!r}")
            continue
        views[case_id] = text
    return views


@main.command()
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.pass_obj
def serve(config: AppConfig, host: str | None, port: int | None) -> None:
    """Run the HTTP session service."""
    try:
        _announce(config, config.seed)
        import uvicorn

        from .service import create_app, load_runtime

        runtime = load_runtime(config)
        if not runtime.ready:
            click.echo(f"starting degraded: {runtime.load_error}", err=True)
        uvicorn.run(
            create_app(runtime),
            host=config.service.host if host is None else host,
            port=config.service.port if port is None else port,
            log_level="info",
        )
    except LexdiagError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
