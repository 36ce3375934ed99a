"""Finite-difference verification of every differentiable op.

The checks here are the independent oracle for the tape's backward rules:
central differences at step 1e-6 in 64-bit, compared against tape
gradients with a relative-error cap of 1e-5.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor

FD_STEP = 1e-6
GRAD_RTOL = 1e-5


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def finite_difference(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * step)
    return g


def max_grad_error(build, inputs: list[np.ndarray], step: float = FD_STEP) -> float:
    """Compare tape gradients of build(tape, tensors) against finite differences.

    build must return a scalar Tensor and be a pure function of its inputs.
    Returns the worst relative error over all input elements.
    """
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    tensors = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    tape = Tape()
    loss = build(tape, tensors)
    tape.backward(loss, leaves=tensors)

    worst = 0.0
    for k in range(len(inputs)):

        def f_of_k(xk, k=k):
            probe = [x.copy() for x in inputs]
            probe[k] = xk
            t2 = [Tensor(p) for p in probe]
            return build(Tape(), t2).item()

        fd = finite_difference(f_of_k, inputs[k].copy(), step)
        worst = max(worst, relative_error(tensors[k].grad, fd))
    return worst


def _suite_cases(rng: np.random.Generator):
    """(name, build, inputs) triples covering every differentiable op."""
    u = lambda *shape: rng.uniform(-2.0, 2.0, shape)

    def case_matmul(tape, ts):
        return tape.sum(tape.matmul(ts[0], ts[1]))

    def case_add(tape, ts):
        return tape.sum(tape.mul(tape.add(ts[0], ts[1]), ts[0]))

    def case_add_row(tape, ts):
        return tape.sum(tape.mul(tape.add(ts[0], ts[1]), ts[0]))

    def case_sub(tape, ts):
        return tape.sum(tape.mul(tape.sub(ts[0], ts[1]), ts[1]))

    def case_mul(tape, ts):
        return tape.sum(tape.mul(ts[0], ts[1]))

    def case_scale(tape, ts):
        return tape.sum(tape.scale(ts[0], -1.7))

    def case_transpose(tape, ts):
        return tape.sum(tape.matmul(tape.transpose(ts[0]), ts[0]))

    def case_concat(tape, ts):
        c = tape.concat([ts[0], ts[1]], axis=-1)
        return tape.sum(tape.mul(c, c))

    def case_concat_rows(tape, ts):
        c = tape.concat([ts[0], ts[1]], axis=0)
        return tape.sum(tape.mul(c, c))

    def case_slice(tape, ts):
        return tape.sum(tape.mul(tape.slice_last(ts[0], 1, 4), tape.slice_last(ts[0], 2, 5)))

    def case_relu(tape, ts):
        return tape.sum(tape.relu(ts[0]))

    def case_gelu(tape, ts):
        return tape.sum(tape.mul(tape.gelu(ts[0]), ts[0]))

    def case_softmax(tape, ts):
        s = tape.softmax(ts[0], axis=-1)
        return tape.sum(tape.mul(s, ts[0]))

    def case_layer_norm(tape, ts):
        y = tape.layer_norm(ts[0], ts[1], ts[2])
        return tape.sum(tape.mul(y, y))

    def case_mean(tape, ts):
        return tape.mean(tape.mul(ts[0], ts[0]))

    def case_cross_entropy(tape, ts):
        return tape.cross_entropy(ts[0], [1, 0, 3, 2])

    def case_attention(tape, ts):
        q, k, v = ts
        scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / np.sqrt(q.data.shape[1]))
        out = tape.matmul(tape.softmax(scores, axis=-1), v)
        return tape.sum(tape.mul(out, out))

    return [
        ("matmul", case_matmul, [u(3, 4), u(4, 3)]),
        ("add", case_add, [u(3, 5), u(3, 5)]),
        ("add_rowvec", case_add_row, [u(3, 5), u(5)]),
        ("sub", case_sub, [u(3, 5), u(3, 5)]),
        ("mul", case_mul, [u(3, 5), u(3, 5)]),
        ("scale", case_scale, [u(4, 4)]),
        ("transpose", case_transpose, [u(3, 5)]),
        ("concat_last", case_concat, [u(3, 4), u(3, 2)]),
        ("concat_rows", case_concat_rows, [u(3, 4), u(2, 4)]),
        ("slice_last", case_slice, [u(3, 6)]),
        ("relu", case_relu, [u(4, 6) + 0.05]),
        ("gelu", case_gelu, [u(4, 6)]),
        ("softmax", case_softmax, [u(3, 6)]),
        ("layer_norm", case_layer_norm, [u(2, 8), u(8), u(8)]),
        ("mean", case_mean, [u(3, 7)]),
        ("cross_entropy", case_cross_entropy, [u(4, 5)]),
        ("attention", case_attention, [u(3, 4), u(5, 4), u(5, 4)]),
    ]


def tracker_loss_grad_error(seed: int = 0) -> float:
    """End-to-end gradient check: a two-frame tracker loss on a small model."""
    from .tracker import TrackerModel, init_model, tracker_forward

    rng = np.random.default_rng(seed)
    n, c, h = 3, 8, 12
    ref_model = init_model(c, h, 1, seed)
    names = [name for name, _ in ref_model.named_parameters()]
    shapes = [p.data.shape for _, p in ref_model.named_parameters()]
    refs = rng.uniform(-1, 1, (n, c))
    pool1 = rng.uniform(-1, 1, (n, c))
    paired1 = rng.uniform(-1, 1, (n, c))
    pool2 = rng.uniform(-1, 1, (n, c))
    paired2 = rng.uniform(-1, 1, (n, c))
    targets = [0, 1, 2]

    def build(tape, tensors):
        params = dict(zip(names, tensors))
        model = TrackerModel(blocks=1, channels=c, hidden=h, params=params)
        out = tracker_forward(model, Tensor(refs), Tensor(pool1), Tensor(paired1), tape)
        out2 = tracker_forward(model, out, Tensor(pool2), Tensor(paired2), tape)
        keys = tape.concat([Tensor(pool2), params["inactive_key"]], axis=0)
        logits = tape.scale(tape.matmul(out2, tape.transpose(keys)), 1.0 / 0.5)
        return tape.cross_entropy(logits, targets)

    inputs = [rng.uniform(-0.5, 0.5, s) for s in shapes]
    return max_grad_error(build, inputs)


def run_op_suite(trials: int = 10, seed: int = 0) -> list[tuple[str, float]]:
    """Worst finite-difference error per op over `trials` random points."""
    results = []
    for trial in range(trials):
        rng = np.random.default_rng(seed + trial)
        for name, build, inputs in _suite_cases(rng):
            err = max_grad_error(build, inputs)
            results.append((f"{name}[{trial}]", err))
    worst: dict[str, float] = {}
    for tag, err in results:
        op = tag.split("[")[0]
        worst[op] = max(worst.get(op, 0.0), err)
    return sorted(worst.items())
