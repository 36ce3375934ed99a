"""The nine headline acceptance checks, one test each, printing a
PASS/FAIL line per criterion. The expensive training grid (criteria 5-8)
is trained once per session and shared.

Run just these with: pytest tests/test_acceptance.py -v -s
"""

import itertools
import json
import time

import conftest
from dataclasses import replace

import numpy as np
import pytest
from click.testing import CliRunner

from dntracker.ablation import ablate
from dntracker.assignment import heuristic_track, hungarian
from dntracker.autodiff import AdamState
from dntracker.cli import main as cli_main
from dntracker.config import STANDARD_TRAIN
from dntracker.gradcheck import GRAD_RTOL, run_op_suite, tracker_loss_grad_error
from dntracker.noise import (
    NoiseStrategy,
    fisher_yates_permutation,
    noise_crop_concat,
    noise_shuffle,
    noise_weighted_average,
)
from dntracker.tracker import init_model, tracker_forward
from dntracker.training import evaluate, make_eval_set, train, training_step
from dntracker.world import WorldConfig, gen_sequence, with_seed

SEEDS = (0, 1, 2, 3, 4)
LONG_FACTOR = 4


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    print(f"\n{line}")
    conftest.record_criterion(line)


@pytest.fixture(scope="session")
def grid():
    """The strategy-by-steps training grid behind criteria 5-8."""
    t0 = time.time()
    rows, summary = ablate(STANDARD_TRAIN, seeds=SEEDS, long_factor=LONG_FACTOR, threads=1)
    summary["wall_seconds"] = time.time() - t0
    return rows, summary


def mean_acc(rows, strategy, steps):
    sel = [r["accuracy"] for r in rows if r["strategy"] == strategy and r["steps"] == steps]
    assert len(sel) == len(SEEDS)
    return float(np.mean(sel))


def std_acc(rows, strategy, steps):
    sel = [r["accuracy"] for r in rows if r["strategy"] == strategy and r["steps"] == steps]
    return float(np.std(sel, ddof=1))


def test_criterion_1_noise_exactness():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(4, 6))
    n, c = q.shape
    ok = True
    # forced alpha=1 and forced j=i are identities
    out = noise_weighted_average(q, rng, alphas=np.ones(n), partners=rng.integers(0, n, n))
    ok &= np.array_equal(out.noised, q)
    out = noise_weighted_average(q, rng, alphas=rng.random(n), partners=np.arange(n))
    ok &= np.array_equal(out.noised, q)
    # k=C keeps the row, k=0 takes the partner wholesale
    partners = np.array([1, 2, 3, 0])
    out = noise_crop_concat(q, rng, cuts=np.full(n, c), partners=partners)
    ok &= np.array_equal(out.noised, q)
    out = noise_crop_concat(q, rng, cuts=np.zeros(n, dtype=int), partners=partners)
    ok &= np.array_equal(out.noised, q[partners])
    # single-row shuffle is the identity
    single = rng.normal(size=(1, 6))
    out = noise_shuffle(single, rng)
    ok &= np.array_equal(out.noised, single) and list(out.permutation) == [0]
    # shuffle uniformity at N=3: each permutation within +-0.02 of 1/6
    counts = {}
    draws = 10_000
    u_rng = np.random.default_rng(42)
    for _ in range(draws):
        p = tuple(fisher_yates_permutation(3, u_rng))
        counts[p] = counts.get(p, 0) + 1
    worst = max(abs(cnt / draws - 1 / 6) for cnt in counts.values())
    ok &= len(counts) == 6 and worst < 0.02
    report(
        "criterion 1 (noise-op exactness)",
        bool(ok),
        f"identity/boundary cases exact; uniformity worst deviation {worst:.4f} < 0.02",
    )
    assert ok


def test_criterion_2_hungarian_brute_force():
    def brute(cost):
        m = cost.shape[0]
        return min(
            sum(cost[r, p[r]] for r in range(m))
            for p in itertools.permutations(range(m))
        )

    worst = 0.0
    for n in range(2, 8):
        rng = np.random.default_rng(n)
        for _ in range(200):
            cost = rng.integers(0, 5, size=(n, n)).astype(float)
            sol = hungarian(cost)
            worst = max(worst, abs(sol.total_cost - brute(cost)))
    ok = worst == 0.0
    report(
        "criterion 2 (hungarian oracle)",
        ok,
        f"200 matrices per n in 2..7; max |cost - brute force| = {worst}",
    )
    assert ok


def test_criterion_3_gradient_suite():
    t0 = time.time()
    results = run_op_suite(trials=10, seed=0)
    results.append(("tracker_loss", tracker_loss_grad_error(0)))
    elapsed = time.time() - t0
    worst_name, worst = max(results, key=lambda kv: kv[1])
    ok = worst < GRAD_RTOL and elapsed < 60.0
    report(
        "criterion 3 (gradient suite)",
        ok,
        f"worst {worst_name} rel err {worst:.2e} < 1e-5; {elapsed:.1f}s < 60s",
    )
    assert ok


def test_criterion_4_attention_symmetry():
    worst_inv = 0.0
    worst_equiv = 0.0
    for trial in range(10):
        rng = np.random.default_rng(trial)
        model = init_model(12, 16, 1, trial)
        refs = rng.normal(size=(5, 12))
        paired = rng.normal(size=(5, 12))
        pool = rng.normal(size=(7, 12))
        base = tracker_forward(model, refs, pool, paired).data
        pperm = rng.permutation(7)
        out = tracker_forward(model, refs, pool[pperm], paired).data
        worst_inv = max(worst_inv, float(np.abs(out - base).max()))
        sperm = rng.permutation(5)
        out = tracker_forward(model, refs[sperm], pool, paired[sperm]).data
        worst_equiv = max(worst_equiv, float(np.abs(out - base[sperm]).max()))
    ok = worst_inv <= 1e-9 and worst_equiv <= 1e-9
    report(
        "criterion 4 (attention symmetry)",
        ok,
        f"pool-permutation invariance {worst_inv:.1e}, slot equivariance {worst_equiv:.1e} (<= 1e-9)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_5_strategy_ordering(grid):
    rows, summary = grid
    base = STANDARD_TRAIN.steps
    none = mean_acc(rows, "none", base)
    wa = mean_acc(rows, "weighted_average", base)
    cc = mean_acc(rows, "crop_concat", base)
    sh = mean_acc(rows, "shuffle", base)
    margin = sh - none
    pooled_se = summary["pooled_standard_error"]
    ok = margin >= 0.02 and margin > pooled_se and wa > none and cc > none
    report(
        "criterion 5 (strategy ordering)",
        ok,
        f"none {none:.4f} | w.a. {wa:.4f} | c&c {cc:.4f} | shuffle {sh:.4f}; "
        f"margin {margin:.4f} (>= 0.02 and > pooled SE {pooled_se:.4f}); "
        f"w.a.>none {wa > none}, c&c>none {cc > none}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_6_iteration_scaling(grid):
    rows, summary = grid
    base = STANDARD_TRAIN.steps
    long_steps = base * LONG_FACTOR
    sh_base = mean_acc(rows, "shuffle", base)
    sh_long = mean_acc(rows, "shuffle", long_steps)
    none_base = mean_acc(rows, "none", base)
    none_long = mean_acc(rows, "none", long_steps)
    pooled_sd = float(
        np.sqrt((std_acc(rows, "none", base) ** 2 + std_acc(rows, "none", long_steps) ** 2) / 2)
    )
    ok = sh_long >= sh_base and abs(none_long - none_base) <= pooled_sd
    ok = ok and summary["wall_seconds"] < 90 * 60
    report(
        "criterion 6 (iteration scaling)",
        ok,
        f"shuffle {sh_base:.4f} -> {sh_long:.4f} at {LONG_FACTOR}x (must not drop); "
        f"none {none_base:.4f} -> {none_long:.4f}, |delta| {abs(none_long - none_base):.4f} "
        f"<= pooled sd {pooled_sd:.4f}; grid wall time {summary['wall_seconds'] / 60:.1f} min",
    )
    assert ok


@pytest.mark.slow
def test_criterion_7_shortcut_reliance(grid):
    rows, _ = grid
    base = STANDARD_TRAIN.steps

    def drop(strategy):
        sel = [r for r in rows if r["strategy"] == strategy and r["steps"] == base]
        return float(np.mean([r["accuracy"] - r["shuffled_inputs_accuracy"] for r in sel]))

    none_drop = drop("none")
    shuffle_drop = drop("shuffle")
    ok = none_drop >= 0.05 and shuffle_drop < none_drop
    report(
        "criterion 7 (shortcut test)",
        ok,
        f"accuracy drop under shuffled inputs: none {none_drop:.4f} (>= 0.05), "
        f"shuffle {shuffle_drop:.4f} (strictly smaller)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_8_heuristic_baseline(grid):
    rows, _ = grid
    # exact 1.0 on noiseless sequences
    world = WorldConfig(
        frames=16, slots=6, channels=12, objects=4, drift_sigma=0.02, seed=0
    )
    clean = evaluate(heuristic_track, [gen_sequence(with_seed(world, s)) for s in range(5)])
    heuristic = float(
        np.mean(
            [
                r["heuristic_accuracy"]
                for r in rows
                if r["strategy"] == "none" and r["steps"] == STANDARD_TRAIN.steps
            ]
        )
    )
    best_strategy, best = max(
        (
            (f"{r['strategy']}@{r['steps']}", mean_acc(rows, r["strategy"], r["steps"]))
            for r in rows
        ),
        key=lambda kv: kv[1],
    )
    ok = clean.association_accuracy == 1.0 and best > heuristic
    report(
        "criterion 8 (heuristic baseline)",
        ok,
        f"heuristic on noiseless sequences {clean.association_accuracy:.4f} (== 1.0); "
        f"best learned {best_strategy} {best:.4f} > heuristic {heuristic:.4f}",
    )
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    """Byte-identical artifacts across runs, thread-count independence.

    Uses the real CLI ablate path at reduced scale; the full-size preset
    command is documented in the README and takes about an hour.
    """
    doc = {
        "world": {
            "frames": 6,
            "slots": 4,
            "channels": 10,
            "objects": 3,
            "position_channels": 4,
            "drift_sigma": 0.05,
            "occlusion_rate": 0.2,
            "confusion_pairs": 1,
        },
        "train": {"steps": 20, "hidden": 8, "eval_sequences": 2},
    }
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(doc))
    runner = CliRunner()
    outputs = {}
    for tag, threads in [("a", 1), ("b", 1), ("c", 2)]:
        out = tmp_path / tag
        result = runner.invoke(
            cli_main,
            [
                "ablate",
                "--config",
                str(cfg),
                "--seeds",
                "7,8",
                "--long-factor",
                "2",
                "--threads",
                str(threads),
                "--out",
                str(out),
            ],
        )
        assert result.exit_code in (0, 4), result.output
        outputs[tag] = {
            name: (out / name).read_bytes()
            for name in ("ablation_runs.csv", "ablation_summary.csv", "ablation_summary.json")
        }
    identical = outputs["a"] == outputs["b"]
    thread_independent = outputs["a"] == outputs["c"]
    ok = identical and thread_independent
    report(
        "criterion 9 (determinism)",
        ok,
        f"repeat run byte-identical: {identical}; threads=2 byte-identical: {thread_independent} "
        "(reduced scale; full preset documented in README)",
    )
    assert ok


@pytest.mark.slow
def test_supervision_regression_slot_consistent_beats_sigma_following():
    """Swapping Shuffle supervision to follow the permutation must
    measurably degrade held-out accuracy (pins the supervision reading)."""
    cfg = replace(STANDARD_TRAIN, steps=600)
    deltas = []
    for seed in range(3):
        accs = {}
        for follow in (False, True):
            c = replace(cfg, seed=seed, strategy=NoiseStrategy.SHUFFLE)
            model = init_model(c.world.channels, c.hidden, c.blocks, seed)
            state = AdamState(learning_rate=c.learning_rate)
            rng = np.random.default_rng(seed)
            for step in range(c.steps):
                seq = gen_sequence(with_seed(c.world, 10_000 + 7 * seed + step))
                training_step(
                    model,
                    seq,
                    c.strategy,
                    rng,
                    state,
                    temperature=c.temperature,
                    follow_permutation=follow,
                )
            accs[follow] = evaluate(model, make_eval_set(c)).association_accuracy
        deltas.append(accs[False] - accs[True])
    mean_delta = float(np.mean(deltas))
    ok = mean_delta > 0.0
    report(
        "supervision regression",
        ok,
        f"slot-consistent minus sigma-following accuracy, mean over 3 seeds: {mean_delta:+.4f}",
    )
    assert ok


@pytest.mark.slow
def test_loss_decreases_for_every_strategy(grid):
    rows, _ = grid
    base = STANDARD_TRAIN.steps
    bad = [
        f"{r['strategy']}/seed{r['seed']}"
        for r in rows
        if r["steps"] == base and not (r["loss_median_late"] < r["loss_median_early"])
    ]
    ok = not bad
    report(
        "loss-decrease invariant",
        ok,
        "median late-window loss below early window for every base run"
        + ("" if ok else f"; violators: {bad}"),
    )
    assert ok


def test_eval_report_weighted_mean_identity():
    cfg = replace(STANDARD_TRAIN, eval_sequences=4)
    rep = evaluate(heuristic_track, make_eval_set(cfg))
    weighted = (
        rep.accuracy_light * rep.observations_light
        + rep.accuracy_moderate * rep.observations_moderate
        + rep.accuracy_heavy * rep.observations_heavy
    ) / rep.num_observations
    assert abs(weighted - rep.association_accuracy) <= 1e-12
