import numpy as np
import pytest

from dntracker.autodiff import ShapeError, Tensor
from dntracker.tracker import (
    TrackerModel,
    expected_parameter_count,
    init_model,
    pair_observations,
    propagate,
    tracker_forward,
)
from dntracker.world import WorldConfig, gen_sequence, with_seed


def small_model(seed=0, c=8, h=12, blocks=1):
    return init_model(c, h, blocks, seed)


def test_parameter_count_matches_formula():
    for c, h, blocks in [(8, 12, 1), (16, 32, 1), (16, 32, 2), (4, 4, 3)]:
        model = init_model(c, h, blocks, 0)
        assert model.parameter_count() == expected_parameter_count(c, h, blocks)


def test_init_is_deterministic_and_seed_sensitive():
    a = small_model(seed=5)
    b = small_model(seed=5)
    c = small_model(seed=6)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    assert any(
        not np.array_equal(pa.data, pc.data)
        for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters())
    )


def test_init_rejects_bad_sizes():
    with pytest.raises(ShapeError):
        init_model(0, 4, 1, 0)
    with pytest.raises(ShapeError):
        init_model(4, 4, 0, 0)


def test_forward_shape_and_determinism():
    model = small_model()
    rng = np.random.default_rng(0)
    refs = rng.normal(size=(5, 8))
    pool = rng.normal(size=(3, 8))
    out1 = tracker_forward(model, refs, pool).data
    out2 = tracker_forward(model, refs, pool).data
    assert out1.shape == (5, 8)
    assert np.array_equal(out1, out2)


def test_forward_shape_errors():
    model = small_model()
    with pytest.raises(ShapeError):
        tracker_forward(model, np.zeros((3, 7)), np.zeros((3, 8)))
    with pytest.raises(ShapeError):
        tracker_forward(model, np.zeros((3, 8)), np.zeros((3, 9)))
    with pytest.raises(ShapeError):
        tracker_forward(model, np.zeros((3, 8)), np.zeros((3, 8)), np.zeros((4, 8)))


def test_pool_permutation_invariance():
    """Reordering the unordered observation pool never changes outputs."""
    model = small_model(seed=3)
    rng = np.random.default_rng(1)
    refs = rng.normal(size=(4, 8))
    paired = rng.normal(size=(4, 8))
    pool = rng.normal(size=(6, 8))
    base = tracker_forward(model, refs, pool, paired).data
    for s in range(5):
        perm = np.random.default_rng(s).permutation(6)
        out = tracker_forward(model, refs, pool[perm], paired).data
        assert np.allclose(out, base, atol=1e-12)


def test_slot_permutation_equivariance():
    """Permuting slot streams (refs with their paired rows) permutes outputs."""
    model = small_model(seed=4)
    rng = np.random.default_rng(2)
    refs = rng.normal(size=(5, 8))
    paired = rng.normal(size=(5, 8))
    pool = rng.normal(size=(4, 8))
    base = tracker_forward(model, refs, pool, paired).data
    for s in range(5):
        perm = np.random.default_rng(100 + s).permutation(5)
        out = tracker_forward(model, refs[perm], pool, paired[perm]).data
        assert np.allclose(out, base[perm], atol=1e-12)


def test_paired_pathway_changes_output():
    model = small_model(seed=5)
    rng = np.random.default_rng(3)
    refs = rng.normal(size=(4, 8))
    pool = rng.normal(size=(4, 8))
    with_paired = tracker_forward(model, refs, pool, pool.copy()).data
    without = tracker_forward(model, refs, pool).data
    assert not np.allclose(with_paired, without)


def test_pair_observations_matches_by_cosine():
    rng = np.random.default_rng(6)
    refs = rng.normal(size=(4, 8))
    refs /= np.linalg.norm(refs, axis=1, keepdims=True)
    queries = np.zeros((4, 8))
    order = [2, 0, 3, 1]
    for row, slot in enumerate(order):
        queries[row] = refs[slot] + 0.01 * rng.normal(size=8)
    paired, rows = pair_observations(refs, queries)
    assert list(rows) == [0, 1, 2, 3]
    for row, slot in enumerate(order):
        assert np.array_equal(paired[slot], queries[row])


def test_pair_observations_skips_empty_rows_and_rejects():
    rng = np.random.default_rng(7)
    refs = rng.normal(size=(3, 8))
    queries = np.zeros((3, 8))
    queries[1] = -refs[0] * 5.0  # worse than any accept threshold < 2
    paired, rows = pair_observations(refs, queries, reject_cost=0.5)
    assert list(rows) == [1]
    assert np.all(paired == 0.0)


WORLD = WorldConfig(
    frames=10,
    slots=6,
    channels=12,
    objects=4,
    position_channels=4,
    drift_sigma=0.03,
    occlusion_rate=0.2,
    seed=0,
)


def test_propagate_first_frame_seeds_slot_ids():
    model = init_model(WORLD.channels, 16, 1, 0)
    seq = gen_sequence(WORLD)
    tracks, outputs = propagate(model, seq)
    assert len(tracks.track_ids) == seq.num_frames
    assert len(outputs) == seq.num_frames
    first = seq.frames[0]
    for row in range(seq.num_slots):
        expect = row if first.identity[row] >= 0 else -1
        assert tracks.track_ids[0][row] == expect
    assert np.array_equal(outputs[0], first.queries)


def test_propagate_assigns_each_visible_row_once():
    model = init_model(WORLD.channels, 16, 1, 1)
    seq = gen_sequence(with_seed(WORLD, 3))
    tracks, _ = propagate(model, seq)
    for frame, assigned in zip(seq.frames, tracks.track_ids):
        vis = frame.identity >= 0
        assert np.all(assigned[~vis] == -1)
        real = assigned[vis]
        assert np.all(real >= 0)
        assert len(set(real.tolist())) == len(real)  # no duplicated track ids


def test_propagate_deterministic():
    model = init_model(WORLD.channels, 16, 1, 2)
    seq = gen_sequence(with_seed(WORLD, 5))
    a, _ = propagate(model, seq)
    b, _ = propagate(model, seq)
    for x, y in zip(a.track_ids, b.track_ids):
        assert np.array_equal(x, y)


def test_propagate_shuffled_pairing_differs():
    model = init_model(WORLD.channels, 16, 1, 2)
    seq = gen_sequence(with_seed(WORLD, 5))
    a, _ = propagate(model, seq)
    b, _ = propagate(model, seq, pairing_rng=np.random.default_rng(0))
    assert any(not np.array_equal(x, y) for x, y in zip(a.track_ids, b.track_ids))
