"""Synthetic video-instance sequences: per-frame unordered query sets.

Each object carries a unit-norm appearance sub-vector (a slow random walk)
and a smooth 2-D trajectory embedded in the trailing position channels.
Slot order within a frame is a fresh uniform permutation, so slot indices
carry no identity information. Occlusion removes an object from the frame
entirely (zero row, identity -1).

Confusion pairs are generated with near-identical appearance and crossing
trajectories; the second member is forcibly occluded while the pair
overlaps, so telling them apart afterwards requires the position channels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

POSITION_SCALE = 0.5
CONFUSION_APPEARANCE_EPS = 1e-3
CONFUSION_CROSS_RADIUS = 0.35
MIN_CROSSING_SPAN = 1.0

SEQ_MAGIC = b"SEQ1"
SEQ_VERSION = 1

STRATA = ("light", "moderate", "heavy")


class ConfigError(ValueError):
    """Invalid generator or run configuration."""


class FormatError(ValueError):
    """Malformed binary file; message names the byte offset."""


@dataclass(frozen=True)
class WorldConfig:
    frames: int  # T
    slots: int  # N
    channels: int  # C
    objects: int  # K
    position_channels: int = 4  # P
    drift_sigma: float = 0.0
    occlusion_rate: float = 0.0
    confusion_pairs: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.frames < 2:
            raise ConfigError(f"frames must be >= 2, got {self.frames}")
        if self.slots < 1 or self.objects < 1:
            raise ConfigError("slots and objects must be positive")
        if self.objects > self.slots:
            raise ConfigError(f"objects ({self.objects}) may not exceed slots ({self.slots})")
        if not (2 <= self.position_channels < self.channels):
            raise ConfigError(
                f"position_channels must be in [2, channels), got "
                f"{self.position_channels} with channels={self.channels}"
            )
        if self.drift_sigma < 0.0:
            raise ConfigError("drift_sigma must be >= 0")
        if not (0.0 <= self.occlusion_rate < 1.0):
            raise ConfigError("occlusion_rate must be in [0, 1)")
        if self.confusion_pairs < 0 or 2 * self.confusion_pairs > self.objects:
            raise ConfigError("confusion_pairs must fit within the object count")


@dataclass
class QueryFrame:
    queries: np.ndarray  # N x C float64
    identity: np.ndarray  # N int32, -1 = empty slot

    @property
    def visible(self) -> np.ndarray:
        return self.identity >= 0


@dataclass
class Sequence:
    frames: list[QueryFrame]
    num_objects: int
    position_channels: int
    occlusion_fraction: np.ndarray  # per object, fraction of frames occluded
    # per-frame slot of each object (-1 when occluded); populated by the
    # generator for tests, never serialized
    slot_of_object: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_slots(self) -> int:
        return self.frames[0].queries.shape[0]

    @property
    def num_channels(self) -> int:
        return self.frames[0].queries.shape[1]


def _position_embedding(pos: np.ndarray, p_channels: int) -> np.ndarray:
    reps = (p_channels + 1) // 2
    return POSITION_SCALE * np.tile(pos, reps)[:p_channels]


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def gen_sequence(config: WorldConfig) -> Sequence:
    """Deterministic in config.seed. Frame 1 shows every object, so each
    object's canonical slot is its frame-1 slot."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    T, N, C, K = config.frames, config.slots, config.channels, config.objects
    P = config.position_channels
    A = C - P

    # trajectories: linear start -> end inside [-1, 1]^2
    starts = np.empty((K, 2))
    ends = np.empty((K, 2))
    pair_leader = {2 * p: 2 * p + 1 for p in range(config.confusion_pairs)}
    for k in range(K):
        if k in pair_leader.values():
            continue  # set when the leader is drawn
        s = rng.uniform(-1.0, 1.0, 2)
        e = rng.uniform(-1.0, 1.0, 2)
        if k in pair_leader:
            # leaders need a real crossing span so the pair separates again
            while np.linalg.norm(e - s) < MIN_CROSSING_SPAN:
                s = rng.uniform(-1.0, 1.0, 2)
                e = rng.uniform(-1.0, 1.0, 2)
        starts[k], ends[k] = s, e
        if k in pair_leader:
            j = pair_leader[k]
            starts[j] = e + 0.05 * rng.normal(size=2)
            ends[j] = s + 0.05 * rng.normal(size=2)

    # appearance: unit-norm base vectors; pair followers are near-copies
    appearance = rng.normal(size=(K, A))
    for k in range(K):
        if k in pair_leader.values():
            leader = k - 1
            appearance[k] = appearance[leader] + CONFUSION_APPEARANCE_EPS * rng.normal(size=A)
        appearance[k] = _unit(appearance[k])

    tau = np.arange(T) / (T - 1)
    positions = starts[:, None, :] + (ends - starts)[:, None, :] * tau[None, :, None]  # K x T x 2

    frames: list[QueryFrame] = []
    slot_of_object: list[np.ndarray] = []
    visible_count = np.zeros(K, dtype=np.int64)
    app = appearance.copy()

    for t in range(T):
        if t > 0:
            step = rng.normal(size=(K, A))
            if config.drift_sigma > 0.0:
                app = app + config.drift_sigma * step
                norms = np.linalg.norm(app, axis=1, keepdims=True)
                app = app / np.where(norms > 0, norms, 1.0)
            vis = rng.random(K) >= config.occlusion_rate
            for p in range(config.confusion_pairs):
                a, b = 2 * p, 2 * p + 1
                if np.linalg.norm(positions[a, t] - positions[b, t]) < CONFUSION_CROSS_RADIUS:
                    vis[a] = False
                    vis[b] = False
        else:
            vis = np.ones(K, dtype=bool)

        perm = rng.permutation(N)
        queries = np.zeros((N, C))
        identity = np.full(N, -1, dtype=np.int32)
        slots = np.full(K, -1, dtype=np.int64)
        for k in range(K):
            if not vis[k]:
                continue
            s = int(perm[k])
            queries[s, :A] = app[k]
            queries[s, A:] = _position_embedding(positions[k, t], P)
            identity[s] = k
            slots[k] = s
            visible_count[k] += 1
        frames.append(QueryFrame(queries=queries, identity=identity))
        slot_of_object.append(slots)

    return Sequence(
        frames=frames,
        num_objects=K,
        position_channels=P,
        occlusion_fraction=1.0 - visible_count / float(T),
        slot_of_object=slot_of_object,
    )


def stratum_of(fraction: float) -> str:
    if fraction < 0.25:
        return "light"
    if fraction < 0.5:
        return "moderate"
    return "heavy"


def stratify_occlusion(seq: Sequence) -> list[str]:
    """Per-object occlusion stratum: light < 0.25 <= moderate < 0.5 <= heavy."""
    return [stratum_of(float(f)) for f in seq.occlusion_fraction]


# ---- SEQ1 binary serialization (little-endian) ----


def save_sequence(seq: Sequence, path) -> None:
    T, N, C, K = seq.num_frames, seq.num_slots, seq.num_channels, seq.num_objects
    parts = [SEQ_MAGIC, struct.pack("<6I", SEQ_VERSION, T, N, C, K, seq.position_channels)]
    parts.append(np.asarray(seq.occlusion_fraction, dtype="<f8").tobytes())
    for fr in seq.frames:
        parts.append(np.ascontiguousarray(fr.queries, dtype="<f8").tobytes())
        parts.append(np.asarray(fr.identity, dtype="<i4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise FormatError(f"truncated sequence file: {what} at offset {offset}")
    return buf[offset : offset + size], offset + size


def load_sequence(path) -> Sequence:
    with open(path, "rb") as fh:
        buf = fh.read()
    chunk, off = _take(buf, 0, 4, "magic")
    if chunk != SEQ_MAGIC:
        raise FormatError(f"bad magic {chunk!r} at offset 0 (expected {SEQ_MAGIC!r})")
    chunk, off = _take(buf, off, 24, "header")
    version, T, N, C, K, P = struct.unpack("<6I", chunk)
    if version != SEQ_VERSION:
        raise FormatError(f"unsupported sequence version {version} at offset 4")
    chunk, off = _take(buf, off, 8 * K, "occlusion fractions")
    occl = np.frombuffer(chunk, dtype="<f8").copy()
    frames = []
    for t in range(T):
        chunk, off = _take(buf, off, 8 * N * C, f"frame {t} queries")
        queries = np.frombuffer(chunk, dtype="<f8").reshape(N, C).copy()
        chunk, off = _take(buf, off, 4 * N, f"frame {t} identities")
        identity = np.frombuffer(chunk, dtype="<i4").copy()
        frames.append(QueryFrame(queries=queries, identity=identity))
    if off != len(buf):
        raise FormatError(f"trailing bytes at offset {off}")
    return Sequence(
        frames=frames, num_objects=K, position_channels=P, occlusion_fraction=occl
    )


def with_seed(config: WorldConfig, seed: int) -> WorldConfig:
    return replace(config, seed=int(seed))
