"""Denoising training loop, identity loss, tracking metrics.

Training walks a sequence frame by frame, teacher-aligned: references
start from the aligned first frame and are teacher-forced on the model's
own outputs afterwards. The tracker's slot-paired input at each frame is
the aligned query set pushed through the configured noise strategy; the
attention pool stays clean. Supervision is slot-consistent: slot i must
score highest against the clean aligned query of the object canonical to
slot i, or against the learned inactive key while that object is occluded.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import (
    DEFAULT_EMA,
    DEFAULT_REJECT_COST,
    TrackAssignment,
    align_to_ground_truth,
    canonical_slots,
)
from .autodiff import AdamState, Tape, Tensor, adam_step
from .noise import NoiseOutcome, NoiseStrategy, apply_noise
from .tracker import TrackerModel, init_model, propagate, tracker_forward
from .world import Sequence, WorldConfig, gen_sequence, stratify_occlusion, with_seed

# stream tags for deriving independent seed streams from one run seed
_STREAM_INIT = 0
_STREAM_TRAIN_WORLD = 1
_STREAM_EVAL_WORLD = 2
_STREAM_NOISE = 3
_STREAM_SHUFFLED_EVAL = 4


@dataclass(frozen=True)
class TrainConfig:
    world: WorldConfig
    strategy: NoiseStrategy = NoiseStrategy.NONE
    steps: int = 3000
    batch_sequences: int = 1
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_every: int = 0  # 0 = final evaluation only
    seed: int = 0
    temperature: float = 0.1
    blocks: int = 1
    hidden: int = 32
    eval_sequences: int = 8
    noise_prob: float = 1.0  # per-frame chance of applying the strategy
    ema: float = DEFAULT_EMA  # heuristic-baseline memory mixing
    reject_cost: float = DEFAULT_REJECT_COST

    def validate(self) -> None:
        from .world import ConfigError

        self.world.validate()
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_sequences < 1:
            raise ConfigError("batch_sequences must be >= 1")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be > 0")
        if not (0.0 <= self.noise_prob <= 1.0):
            raise ConfigError("noise_prob must be in [0, 1]")
        if self.eval_sequences < 1:
            raise ConfigError("eval_sequences must be >= 1")


@dataclass
class EvalReport:
    association_accuracy: float
    accuracy_light: float
    accuracy_moderate: float
    accuracy_heavy: float
    id_switches: int
    num_sequences: int
    num_observations: int
    seed: int = 0
    strategy: str = ""
    steps: int = 0
    observations_light: int = 0
    observations_moderate: int = 0
    observations_heavy: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def derive_seed(*parts: int) -> int:
    return int(
        np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]).generate_state(1)[0]
    )


def make_eval_set(config: TrainConfig) -> list[Sequence]:
    """Held-out sequences; seed stream disjoint from the training stream."""
    return [
        gen_sequence(with_seed(config.world, derive_seed(config.seed, _STREAM_EVAL_WORLD, i)))
        for i in range(config.eval_sequences)
    ]


def _frame_targets(identity: np.ndarray, inactive_index: int) -> np.ndarray:
    """Target column per slot: the slot itself while its object is visible,
    the inactive column otherwise."""
    n = identity.shape[0]
    return np.where(identity >= 0, np.arange(n), inactive_index)


def training_step(
    model: TrackerModel,
    sequences: list[Sequence] | Sequence,
    strategy: NoiseStrategy,
    rng: np.random.Generator,
    state: AdamState,
    temperature: float = 0.1,
    noise_prob: float = 1.0,
    follow_permutation: bool = False,
) -> float:
    """One denoising step: forward over each sequence, one backward pass,
    one Adam update. Returns the scalar loss.

    follow_permutation retargets shuffled frames to track the permutation
    instead of staying slot-consistent (kept only as a regression probe
    for the supervision-reading decision).
    """
    if isinstance(sequences, Sequence):
        sequences = [sequences]
    tape = Tape()
    params = dict(model.named_parameters())
    inactive = model.params["inactive_key"]
    losses: list[Tensor] = []
    for seq in sequences:
        canonical = canonical_slots(seq)
        aligned = [align_to_ground_truth(fr, canonical) for fr in seq.frames]
        n = seq.num_slots
        refs: Tensor = Tensor(aligned[0].queries)
        for t in range(1, len(aligned)):
            clean = aligned[t].queries
            if noise_prob >= 1.0 or rng.random() < noise_prob:
                outcome = apply_noise(strategy, clean, rng)
            else:
                outcome = apply_noise(NoiseStrategy.NONE, clean, rng)
            out = tracker_forward(model, refs, Tensor(clean), Tensor(outcome.noised), tape)
            keys = tape.concat([Tensor(clean), inactive], axis=0)
            logits = tape.scale(tape.matmul(out, tape.transpose(keys)), 1.0 / temperature)
            targets = _targets_for(aligned[t].identity, outcome, n, follow_permutation)
            losses.append(tape.cross_entropy(logits, targets))
            refs = out
    loss = tape.scale(tape.add_n(losses), 1.0 / len(losses))
    tape.backward(loss, leaves=params.values())
    grads = {name: p.grad for name, p in params.items()}
    adam_step(params, grads, state)
    return loss.item()


def _targets_for(
    identity: np.ndarray, outcome: NoiseOutcome, n: int, follow_permutation: bool
) -> np.ndarray:
    if not follow_permutation:
        return _frame_targets(identity, n)
    sigma = outcome.permutation
    return np.where(identity[sigma] >= 0, sigma, n)


def train(config: TrainConfig, log_sink=None) -> tuple[TrackerModel, list[dict]]:
    """Fresh sequences every step; periodic held-out evaluation.

    log_sink, when given, receives each NDJSON-able record as it is made.
    """
    config.validate()
    model = init_model(
        config.world.channels, config.hidden, config.blocks, derive_seed(config.seed, _STREAM_INIT)
    )
    state = AdamState(
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    eval_set = make_eval_set(config) if config.eval_every else None
    log: list[dict] = []
    for step in range(1, config.steps + 1):
        seqs = [
            gen_sequence(
                with_seed(config.world, derive_seed(config.seed, _STREAM_TRAIN_WORLD, step, b))
            )
            for b in range(config.batch_sequences)
        ]
        rng = np.random.default_rng(derive_seed(config.seed, _STREAM_NOISE, step))
        loss = training_step(
            model,
            seqs,
            config.strategy,
            rng,
            state,
            temperature=config.temperature,
            noise_prob=config.noise_prob,
        )
        record = {"step": step, "loss": loss}
        if eval_set is not None and step % config.eval_every == 0:
            record["eval_accuracy"] = evaluate(
                model, eval_set, reject_cost=config.reject_cost
            ).association_accuracy
        log.append(record)
        if log_sink is not None:
            log_sink(record)
    return model, log


def count_id_switches(history: list[int]) -> int:
    """Switches in one object's assigned-track history (visible frames only)."""
    ids = [h for h in history if h >= 0]
    return sum(1 for a, b in zip(ids, ids[1:]) if a != b)


def score_assignment(
    seq: Sequence, assignment: TrackAssignment
) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-object (correct, observed) counts plus total ID switches.

    A (frame, object) observation is correct when the assigned track id
    equals the object's canonical slot.
    """
    canonical = canonical_slots(seq)
    k = seq.num_objects
    correct = np.zeros(k, dtype=np.int64)
    observed = np.zeros(k, dtype=np.int64)
    histories: list[list[int]] = [[] for _ in range(k)]
    for frame, assigned in zip(seq.frames, assignment.track_ids):
        for row, obj in enumerate(frame.identity):
            if obj < 0:
                continue
            tid = int(assigned[row])
            observed[obj] += 1
            if tid == canonical.get(int(obj), -2):
                correct[obj] += 1
            histories[obj].append(tid)
    switches = sum(count_id_switches(h) for h in histories)
    return correct, observed, switches


def evaluate(
    model_or_tracks,
    eval_set: list[Sequence],
    reject_cost: float = DEFAULT_REJECT_COST,
    shuffled_inputs_seed: int | None = None,
) -> EvalReport:
    """Propagate over each sequence and aggregate occlusion-stratified
    association accuracy. Pure in its inputs.

    model_or_tracks is either a TrackerModel or a callable mapping a
    Sequence to a TrackAssignment (used for the heuristic baseline).
    shuffled_inputs_seed switches on the input-shuffling stress.
    """
    strata_names = ("light", "moderate", "heavy")
    correct = {s: 0 for s in strata_names}
    observed = {s: 0 for s in strata_names}
    switches = 0
    for i, seq in enumerate(eval_set):
        if callable(model_or_tracks) and not isinstance(model_or_tracks, TrackerModel):
            tracks = model_or_tracks(seq)
        else:
            rng = (
                np.random.default_rng(
                    derive_seed(shuffled_inputs_seed, _STREAM_SHUFFLED_EVAL, i)
                )
                if shuffled_inputs_seed is not None
                else None
            )
            tracks, _ = propagate(model_or_tracks, seq, reject_cost, pairing_rng=rng)
        c, o, sw = score_assignment(seq, tracks)
        strata = stratify_occlusion(seq)
        for obj, stratum in enumerate(strata):
            correct[stratum] += int(c[obj])
            observed[stratum] += int(o[obj])
        switches += sw
    total_obs = sum(observed.values())
    total_correct = sum(correct.values())

    def acc(s):
        return correct[s] / observed[s] if observed[s] else 0.0

    return EvalReport(
        association_accuracy=total_correct / total_obs if total_obs else 0.0,
        accuracy_light=acc("light"),
        accuracy_moderate=acc("moderate"),
        accuracy_heavy=acc("heavy"),
        id_switches=int(switches),
        num_sequences=len(eval_set),
        num_observations=int(total_obs),
        observations_light=observed["light"],
        observations_moderate=observed["moderate"],
        observations_heavy=observed["heavy"],
    )


def write_ndjson(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
