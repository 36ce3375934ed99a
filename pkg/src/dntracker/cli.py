"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 I/O or format error,
4 acceptance failure (gradcheck tolerance or ablation ordering).
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .ablation import ablate
from .assignment import heuristic_track
from .checkpoint import config_fingerprint, load_checkpoint, save_checkpoint
from .config import PRESETS, config_doc, load_run_config
from .gradcheck import GRAD_RTOL, run_op_suite, tracker_loss_grad_error
from .reporting import (
    render_ablation_figures,
    render_eval_report,
    render_training_curve,
    write_runs_csv,
    write_summary_csv,
    write_summary_json,
)
from .tracker import init_model
from .training import (
    derive_seed,
    evaluate,
    make_eval_set,
    train,
    write_ndjson,
)
from .world import (
    ConfigError,
    FormatError,
    gen_sequence,
    save_sequence,
    stratify_occlusion,
    with_seed,
)

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ACCEPTANCE = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str):
    if path is None:
        _fail(EXIT_CONFIG, "--config is required")
    try:
        return load_run_config(path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


def _out_dir(out: str | None, fallback: str | None) -> Path:
    path = Path(out or fallback or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
@click.version_option(__version__)
def main():
    """Denoising-trained query-propagation tracker on a synthetic benchmark."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config JSON (world section used).")
@click.option("--count", default=1, show_default=True, help="Number of sequences to generate.")
@click.option("--seed", default=None, type=int, help="Override the world seed stream.")
@click.option("--out", default=None, help="Output directory.")
def gen(config_path, count, seed, out):
    """Generate SEQ1 sequence files plus a manifest JSON."""
    cfg, out_dir = _load_config(config_path)
    out_path = _out_dir(out, out_dir)
    base_seed = seed if seed is not None else cfg.world.seed
    entries = []
    for i in range(count):
        s = derive_seed(base_seed, 10, i)
        seq = gen_sequence(with_seed(cfg.world, s))
        name = f"seq_{i:04d}.seq1"
        try:
            save_sequence(seq, out_path / name)
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
        strata = stratify_occlusion(seq)
        entries.append(
            {
                "path": name,
                "seed": s,
                "strata_counts": {k: strata.count(k) for k in ("light", "moderate", "heavy")},
            }
        )
    manifest = {"version": 1, "count": count, "world": config_doc(cfg)["world"], "files": entries}
    (out_path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {count} sequences to {out_path}")


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(), help="Run config JSON.")
@click.option("--seed", default=None, type=int, help="Override the training seed.")
@click.option("--out", default=None, help="Output directory.")
@click.option("--threads", default=1, show_default=True, help="Accepted for symmetry; training is single-writer.")
def train_cmd(config_path, seed, out, threads):
    """Train a tracker; writes checkpoint, NDJSON log, loss figure, report."""
    cfg, out_dir = _load_config(config_path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    out_path = _out_dir(out, out_dir)
    model, log = train(cfg)
    fingerprint = config_fingerprint(config_doc(cfg))
    try:
        save_checkpoint(model, out_path / "checkpoint.dnt", steps=cfg.steps, fingerprint=fingerprint)
        write_ndjson(log, out_path / "train_log.ndjson")
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    render_training_curve(log, out_path / "train_loss.png")
    report = evaluate(model, make_eval_set(cfg), reject_cost=cfg.reject_cost)
    report_doc = report.to_dict()
    report_doc.update({"seed": cfg.seed, "strategy": cfg.strategy.value, "steps": cfg.steps})
    (out_path / "eval_report.json").write_text(json.dumps(report_doc, indent=2, sort_keys=True) + "\n")
    render_eval_report(report_doc, out_path / "eval_report.png")
    click.echo(f"final held-out accuracy: {report.association_accuracy:.4f}")


@main.command(name="eval")
@click.option("--config", "config_path", type=click.Path(), help="Run config JSON.")
@click.option("--checkpoint", "ckpt", default="none", show_default=True, help="Checkpoint path, or 'none'.")
@click.option("--untrained", is_flag=True, help="Evaluate a freshly initialized model (baseline).")
@click.option("--heuristic", is_flag=True, help="Evaluate the heuristic association baseline.")
@click.option("--shuffled-inputs", is_flag=True, help="Shuffle slot pairing at inference (shortcut stress).")
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, help="Output directory.")
def eval_cmd(config_path, ckpt, untrained, heuristic, shuffled_inputs, seed, out):
    """Evaluate a checkpoint (or baselines) on the held-out set."""
    cfg, out_dir = _load_config(config_path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    out_path = _out_dir(out, out_dir)
    eval_set = make_eval_set(cfg)
    label = "heuristic"
    if heuristic:
        report = evaluate(
            lambda s: heuristic_track(s, ema=cfg.ema, reject_cost=cfg.reject_cost), eval_set
        )
    else:
        if ckpt != "none":
            try:
                model, _meta = load_checkpoint(ckpt)
            except FormatError as exc:
                _fail(EXIT_IO, str(exc))
            except OSError as exc:
                _fail(EXIT_IO, str(exc))
            label = "checkpoint"
        elif untrained:
            model = init_model(cfg.world.channels, cfg.hidden, cfg.blocks, derive_seed(cfg.seed, 0))
            label = "untrained"
        else:
            _fail(EXIT_CONFIG, "provide --checkpoint PATH, --untrained, or --heuristic")
        report = evaluate(
            model,
            eval_set,
            reject_cost=cfg.reject_cost,
            shuffled_inputs_seed=cfg.seed if shuffled_inputs else None,
        )
    doc = report.to_dict()
    doc.update({"seed": cfg.seed, "strategy": label, "shuffled_inputs": bool(shuffled_inputs)})
    (out_path / "eval_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    render_eval_report(doc, out_path / "eval_report.png")
    click.echo(f"association accuracy: {report.association_accuracy:.4f}")


@main.command(name="ablate")
@click.option("--preset", default=None, help=f"One of {sorted(PRESETS)}.")
@click.option("--config", "config_path", type=click.Path(), help="Run config JSON (alternative to --preset).")
@click.option("--seeds", default="0,1,2,3,4", show_default=True, help="Comma-separated seeds.")
@click.option("--seed", default=None, type=int, help="Base offset added to every seed.")
@click.option("--long-factor", default=4, show_default=True)
@click.option("--out", default=None, help="Output directory.")
@click.option("--threads", default=1, show_default=True, help="Parallel training workers.")
def ablate_cmd(preset, config_path, seeds, seed, long_factor, out, threads):
    """Train/evaluate the noise-strategy grid; write CSV/JSON and figures."""
    if preset is not None:
        if preset not in PRESETS:
            _fail(EXIT_CONFIG, f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        base, preset_seeds, long_factor = PRESETS[preset]
        seed_tuple = preset_seeds
        out_dir = None
    elif config_path is not None:
        base, out_dir = _load_config(config_path)
        seed_tuple = None
    else:
        _fail(EXIT_CONFIG, "provide --preset or --config")
    if seed_tuple is None or seeds != "0,1,2,3,4":
        try:
            seed_tuple = tuple(int(s) for s in seeds.split(","))
        except ValueError:
            _fail(EXIT_CONFIG, f"bad --seeds value {seeds!r}")
    if seed is not None:
        seed_tuple = tuple(s + seed for s in seed_tuple)
    out_path = _out_dir(out, out_dir if preset is None else None)
    rows, summary = ablate(base, seeds=seed_tuple, long_factor=long_factor, threads=threads)
    try:
        write_runs_csv(rows, out_path / "ablation_runs.csv")
        write_summary_csv(summary, out_path / "ablation_summary.csv")
        write_summary_json(summary, out_path / "ablation_summary.json")
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    render_ablation_figures(summary, out_path)
    click.echo(
        f"shuffle - none = {summary['shuffle_minus_none']:+.4f} "
        f"(pooled SE {summary['pooled_standard_error']:.4f})"
    )
    if not summary["ordering_ok"]:
        _fail(EXIT_ACCEPTANCE, "ablation ordering check failed: shuffle did not beat none")


@main.command()
@click.option("--trials", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
def gradcheck(trials, seed):
    """Finite-difference check of every op and the end-to-end tracker loss."""
    results = run_op_suite(trials=trials, seed=seed)
    failed = False
    for name, err in results:
        status = "ok" if err < GRAD_RTOL else "FAIL"
        if err >= GRAD_RTOL:
            failed = True
        click.echo(f"{status:4s} {name:16s} max rel err {err:.3e}")
    err = tracker_loss_grad_error(seed)
    status = "ok" if err < GRAD_RTOL else "FAIL"
    if err >= GRAD_RTOL:
        failed = True
    click.echo(f"{status:4s} {'tracker_loss':16s} max rel err {err:.3e}")
    if failed:
        _fail(EXIT_ACCEPTANCE, f"gradient check exceeded {GRAD_RTOL} relative error")


if __name__ == "__main__":
    main()
