"""The trainable referring tracker.

Each of the N slot streams starts from the previous frame's output query
for that slot plus the (possibly noised) current-frame query paired with
the slot. A stack of cross-attention blocks then lets every stream read
the current frame's query set as an unordered key/value pool:

    x   <- refs + paired
    x   <- layer_norm(x + W_o(Attention(x W_q, pool W_k, pool W_v)))
    x   <- layer_norm(x + FFN(x))        (repeated per block)
    out <- x W_head

The pool pathway is permutation-invariant: reordering pool rows never
changes the outputs. Permuting the slot streams (refs together with their
paired rows) permutes the outputs identically. Single attention head,
scale 1/sqrt(C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import (
    DEFAULT_REJECT_COST,
    TrackAssignment,
    cosine_similarity_matrix,
    hungarian,
)
from .autodiff import ShapeError, Tape, Tensor
from .world import Sequence

LN_EPS = 1e-5

# per block, in stable (alphabetical) enumeration order
_BLOCK_PARAMS = (
    ("attn_k_b", "bias"),
    ("attn_k_w", "proj"),
    ("attn_o_b", "bias"),
    ("attn_o_w", "proj"),
    ("attn_q_b", "bias"),
    ("attn_q_w", "proj"),
    ("attn_v_b", "bias"),
    ("attn_v_w", "proj"),
    ("ffn_b1", "bias_h"),
    ("ffn_b2", "bias"),
    ("ffn_w1", "proj_ch"),
    ("ffn_w2", "proj_hc"),
    ("norm1_b", "bias"),
    ("norm1_g", "gain"),
    ("norm2_b", "bias"),
    ("norm2_g", "gain"),
)


@dataclass
class TrackerModel:
    blocks: int  # L
    channels: int  # C
    hidden: int  # H
    params: dict[str, "Tensor"]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Stable order: block-major, names alphabetical within a block,
        then the top-level head and inactive key."""
        return list(self.params.items())

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())


def expected_parameter_count(channels: int, hidden: int, blocks: int) -> int:
    """L*(4C^2 + 4C + 2CH + H + C + 4C) + 2C^2 + C.

    Per block: four C x C projections with biases (4C^2 + 4C), the
    feed-forward pair (2CH + H + C) and two layer-norm pairs (4C); plus
    the C x C identity head, the C x C paired-input gate and the length-C
    inactive key.
    """
    c, h = channels, hidden
    return blocks * (4 * c * c + 4 * c + 2 * c * h + h + c + 4 * c) + 2 * c * c + c


# identity-biased attention init: scores start proportional to the raw
# inner products between slot streams and pool rows, so content retrieval
# gives a usable gradient from the first step instead of a uniform softmax
ATTN_INIT_SCALE = 2.5


def init_model(channels: int, hidden: int, blocks: int, seed: int) -> TrackerModel:
    """Attention projections start at scaled identities plus uniform noise
    in [-1/sqrt(C), 1/sqrt(C)]; FFN projections pure noise; gains 1,
    biases 0."""
    if channels < 1 or hidden < 1 or blocks < 1:
        raise ShapeError("channels, hidden and blocks must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(channels)
    c, h = channels, hidden
    shapes = {
        "proj": (c, c),
        "proj_ch": (c, h),
        "proj_hc": (h, c),
        "bias": (c,),
        "bias_h": (h,),
        "gain": (c,),
    }
    identity_scale = {
        "attn_q_w": ATTN_INIT_SCALE,
        "attn_k_w": ATTN_INIT_SCALE,
        "attn_v_w": 1.0,
        "attn_o_w": 1.0,
    }
    params: dict[str, Tensor] = {}
    for b in range(blocks):
        for name, kind in _BLOCK_PARAMS:
            shape = shapes[kind]
            if kind.startswith("proj"):
                data = rng.uniform(-bound, bound, shape)
                if name in identity_scale:
                    data = data + identity_scale[name] * np.eye(c)
            elif kind == "gain":
                data = np.ones(shape)
            else:
                data = np.zeros(shape)
            params[f"block{b}.{name}"] = Tensor(data, requires_grad=True)
    params["head_w"] = Tensor(
        rng.uniform(-bound, bound, (c, c)) + np.eye(c), requires_grad=True
    )
    params["inactive_key"] = Tensor(rng.uniform(-bound, bound, (1, c)), requires_grad=True)
    params["input_w"] = Tensor(rng.uniform(-bound, bound, (c, c)), requires_grad=True)
    return TrackerModel(blocks=blocks, channels=channels, hidden=hidden, params=params)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tracker_forward(
    model: TrackerModel,
    refs,
    pool,
    paired=None,
    tape: Tape | None = None,
) -> Tensor:
    """Denoise one frame: slot streams (refs [+ paired]) attend over pool.

    refs and paired are N x C (slot-wise); pool is M x C and unordered.
    Returns an N x C Tensor on the given (or a throwaway) tape.
    """
    tape = tape if tape is not None else Tape()
    refs = _as_tensor(refs)
    pool = _as_tensor(pool)
    c = model.channels
    if refs.data.ndim != 2 or refs.data.shape[1] != c:
        raise ShapeError(f"refs shape {refs.data.shape} does not match channels {c}")
    if pool.data.ndim != 2 or pool.data.shape[1] != c:
        raise ShapeError(f"pool shape {pool.data.shape} does not match channels {c}")
    if paired is not None:
        paired = _as_tensor(paired)
        if paired.data.shape != refs.data.shape:
            raise ShapeError(
                f"paired shape {paired.data.shape} does not match refs {refs.data.shape}"
            )
        # learned gate on the slot-paired pathway: training can amplify it
        # (pass-through shortcut) or suppress it (content retrieval)
        x = tape.add(refs, tape.matmul(paired, model.params["input_w"]))
    else:
        x = refs
    p = model.params
    inv_sqrt_c = 1.0 / math.sqrt(c)
    for b in range(model.blocks):
        pre = f"block{b}."
        q = tape.add(tape.matmul(x, p[pre + "attn_q_w"]), p[pre + "attn_q_b"])
        k = tape.add(tape.matmul(pool, p[pre + "attn_k_w"]), p[pre + "attn_k_b"])
        v = tape.add(tape.matmul(pool, p[pre + "attn_v_w"]), p[pre + "attn_v_b"])
        scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_c)
        att = tape.matmul(tape.softmax(scores, axis=-1), v)
        att = tape.add(tape.matmul(att, p[pre + "attn_o_w"]), p[pre + "attn_o_b"])
        x = tape.layer_norm(tape.add(x, att), p[pre + "norm1_g"], p[pre + "norm1_b"], LN_EPS)
        hdn = tape.gelu(tape.add(tape.matmul(x, p[pre + "ffn_w1"]), p[pre + "ffn_b1"]))
        ffn = tape.add(tape.matmul(hdn, p[pre + "ffn_w2"]), p[pre + "ffn_b2"])
        x = tape.layer_norm(tape.add(x, ffn), p[pre + "norm2_g"], p[pre + "norm2_b"], LN_EPS)
    return tape.matmul(x, p["head_w"])


def _visible_rows(queries: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.abs(queries).sum(axis=1) > 0)


def pair_observations(
    refs: np.ndarray,
    queries: np.ndarray,
    reject_cost: float = DEFAULT_REJECT_COST,
) -> tuple[np.ndarray, np.ndarray]:
    """Assign each visible query row to a reference slot (cosine + hungarian).

    Returns (paired N x C matrix with zero rows for unmatched slots,
    visible row indices). This mirrors the heuristic pre-alignment whose
    mistakes the denoising training simulates.
    """
    n = refs.shape[0]
    rows = _visible_rows(queries)
    paired = np.zeros_like(refs)
    if rows.size:
        cost = 1.0 - cosine_similarity_matrix(refs, queries[rows])
        sol = hungarian(cost)
        for slot, col in enumerate(sol.mapping):
            if col >= 0 and cost[slot, col] <= reject_cost:
                paired[slot] = queries[rows[col]]
    return paired, rows


def propagate(
    model: TrackerModel,
    seq: Sequence,
    reject_cost: float = DEFAULT_REJECT_COST,
    pairing_rng: np.random.Generator | None = None,
) -> tuple[TrackAssignment, list[np.ndarray]]:
    """Frame-by-frame inference.

    Frame 1 seeds the references with the raw queries (slot i = track i).
    Later frames pre-pair visible queries to the propagated references
    (the model's own previous outputs), run the tracker, then assign each
    visible row the track id of the output slot it matches under hungarian
    on 1 - cosine (matches costlier than reject_cost spawn a fresh track
    id). References become the outputs, so pre-pairing mistakes feed back
    into the next frame: a tracker that merely passes its paired input
    through compounds those mistakes, which is what denoising training is
    meant to prevent.

    pairing_rng, when given, replaces the pre-pairing with a uniformly
    random slot permutation; this is the input-shuffling stress used to
    probe shortcut reliance.
    """
    n = seq.num_slots
    first = seq.frames[0]
    refs = first.queries.copy()
    assigned0 = np.where(_visible_mask(first.queries), np.arange(n), -1)
    assignments = [assigned0]
    outputs = [refs.copy()]
    next_id = n
    for frame in seq.frames[1:]:
        q = frame.queries
        if pairing_rng is None:
            paired, rows = pair_observations(refs, q, reject_cost)
        else:
            rows = _visible_rows(q)
            paired = np.zeros_like(refs)
            slots = pairing_rng.permutation(n)[: rows.size]
            paired[slots] = q[rows]
        pool = q[rows] if rows.size else np.zeros((1, q.shape[1]))
        out = tracker_forward(model, refs, pool, paired).data
        assigned = np.full(n, -1, dtype=np.int64)
        if rows.size:
            cost = 1.0 - cosine_similarity_matrix(out, q[rows])
            sol = hungarian(cost)
            matched = set()
            for slot, col in enumerate(sol.mapping):
                if col >= 0 and cost[slot, col] <= reject_cost:
                    assigned[rows[col]] = slot
                    matched.add(int(col))
            for col in range(rows.size):
                if col not in matched:
                    assigned[rows[col]] = next_id
                    next_id += 1
        assignments.append(assigned)
        outputs.append(out)
        refs = out
    return TrackAssignment(track_ids=assignments), outputs


def _visible_mask(queries: np.ndarray) -> np.ndarray:
    return np.abs(queries).sum(axis=1) > 0
