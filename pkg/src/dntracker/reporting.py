"""Delimited outputs and the figures rendered alongside them."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ablation import RUNS_CSV_HEADER


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def write_runs_csv(rows: list[dict], path) -> None:
    lines = [RUNS_CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r["strategy"],
                    str(r["steps"]),
                    str(r["seed"]),
                    _fmt(r["accuracy"]),
                    _fmt(r["light"]),
                    _fmt(r["moderate"]),
                    _fmt(r["heavy"]),
                    str(r["id_switches"]),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(summary: dict, path) -> None:
    metrics = ("accuracy", "light", "moderate", "heavy", "id_switches")
    header = ["strategy", "steps"]
    for m in metrics:
        header += [f"{m}_mean", f"{m}_std"]
    lines = [",".join(header)]
    for cell in summary["table"]:
        row = [cell["strategy"], str(cell["steps"])]
        for m in metrics:
            if m in cell:
                row += [_fmt(cell[m]["mean"]), _fmt(cell[m]["std"])]
            else:
                row += ["nan", "nan"]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def render_ablation_figures(summary: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []

    cells = summary["table"]
    labels = [f"{c['strategy']}\n{c['steps']} steps" if c["steps"] else c["strategy"] for c in cells]
    means = [c["accuracy"]["mean"] for c in cells]
    stds = [c["accuracy"]["std"] for c in cells]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.bar(range(len(cells)), means, yerr=stds, capsize=4, color="#4878cf")
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("association accuracy")
    ax.set_ylim(0, 1)
    ax.set_title("Noise-strategy ablation (mean over seeds, held-out)")
    fig.tight_layout()
    p = out_dir / "ablation_accuracy.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    strata = ("light", "moderate", "heavy")
    learned = [c for c in cells if "light" in c]
    x = np.arange(len(learned))
    width = 0.25
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for i, s in enumerate(strata):
        ax.bar(
            x + (i - 1) * width,
            [c[s]["mean"] for c in learned],
            width,
            yerr=[c[s]["std"] for c in learned],
            capsize=3,
            label=s,
        )
    ax.set_xticks(x)
    ax.set_xticklabels(
        [f"{c['strategy']}\n{c['steps']} steps" for c in learned], fontsize=8
    )
    ax.set_ylabel("association accuracy")
    ax.set_ylim(0, 1)
    ax.legend(title="occlusion stratum")
    ax.set_title("Accuracy by occlusion stratum")
    fig.tight_layout()
    p = out_dir / "ablation_strata.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def render_training_curve(log: list[dict], path) -> None:
    steps = [r["step"] for r in log]
    losses = [r["loss"] for r in log]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(steps, losses, lw=0.8, label="loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    evals = [(r["step"], r["eval_accuracy"]) for r in log if "eval_accuracy" in r]
    if evals:
        ax2 = ax.twinx()
        ax2.plot(*zip(*evals), "o-", color="#d65f5f", label="held-out accuracy")
        ax2.set_ylabel("accuracy")
        ax2.set_ylim(0, 1)
    ax.set_title("Training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_report(report: dict, path) -> None:
    strata = ("light", "moderate", "heavy")
    vals = [report[f"accuracy_{s}"] for s in strata]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(strata, vals, color=["#6acc65", "#ee854a", "#d65f5f"])
    ax.axhline(report["association_accuracy"], ls="--", color="k", lw=1, label="overall")
    ax.set_ylim(0, 1)
    ax.set_ylabel("association accuracy")
    ax.set_title(f"Evaluation (ID switches: {report['id_switches']})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
