"""Feature/label storage and the synthetic planted-event generator.

On-disk layout
--------------
A feature file holds two consecutive blocks, audio first. Each block is:

    magic  b"AVF1"
    rank   little-endian u32
    extent little-endian u32, `rank` of them
    data   product(extents) little-endian f32 values

Audio is (T, d_a) and visual is (T, h, w, d_v). A dataset is a directory of
feature files plus a UTF-8 JSON manifest (paths relative to the manifest)
declaring the shared dimensions and per-video labels.

Structural damage (bad magic, file ending mid-field) raises FormatError;
a block whose header disagrees with the manifest raises ConsistencyError;
non-finite payloads raise DataError.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConsistencyError, ContractError, DataError, FormatError,
                     LabelError)

MAGIC = b"AVF1"
_MAX_RANK = 4
MANIFEST_VERSION = "avf-synth-1"


# ---------------------------------------------------------------------------
# domain records


@dataclass
class FeatureBundle:
    """One video's precomputed audio and visual features."""

    audio: np.ndarray   # (T, d_a) f32
    visual: np.ndarray  # (T, h, w, d_v) f32
    video_id: str

    def __post_init__(self):
        self.audio = np.ascontiguousarray(self.audio, dtype=np.float32)
        self.visual = np.ascontiguousarray(self.visual, dtype=np.float32)
        if self.audio.ndim != 2 or self.visual.ndim != 4:
            raise ContractError(
                f"bundle needs audio (T,d_a) and visual (T,h,w,d_v), "
                f"got {self.audio.shape} and {self.visual.shape}")
        if self.audio.shape[0] != self.visual.shape[0]:
            raise ContractError(
                f"audio covers {self.audio.shape[0]} segments but visual "
                f"covers {self.visual.shape[0]}")
        if self.audio.shape[0] < 2:
            raise ContractError("a bundle needs at least 2 segments "
                                "(motion extraction requires a neighbor)")
        if not (np.isfinite(self.audio).all() and np.isfinite(self.visual).all()):
            raise DataError(f"bundle {self.video_id!r} contains non-finite values")


@dataclass
class LabelRecord:
    """Video-level class plus per-segment relevance and class labels.

    `segment_class[t]` equals `video_class` exactly when `segment_relevance[t]`
    is 1 and equals the background index (== class count) otherwise. A video
    with no relevant segment is only legal when its video_class is the
    background index (synthetic negative mode).
    """

    video_class: int
    segment_relevance: np.ndarray  # (T,) in {0,1}
    segment_class: np.ndarray      # (T,) in [0, C]

    def __post_init__(self):
        self.segment_relevance = np.asarray(self.segment_relevance, dtype=np.int64)
        self.segment_class = np.asarray(self.segment_class, dtype=np.int64)

    def validate(self, n_classes: int) -> None:
        rel, seg = self.segment_relevance, self.segment_class
        if rel.shape != seg.shape or rel.ndim != 1:
            raise LabelError(f"label arrays disagree: {rel.shape} vs {seg.shape}")
        if not np.isin(rel, (0, 1)).all():
            raise LabelError("segment_relevance must be 0/1")
        if seg.min() < 0 or seg.max() > n_classes:
            raise LabelError(f"segment_class outside [0, {n_classes}]")
        if not 0 <= self.video_class <= n_classes:
            raise LabelError(f"video_class {self.video_class} outside [0, {n_classes}]")
        if rel.sum() == 0:
            if self.video_class != n_classes:
                raise LabelError("a video with no relevant segment must carry "
                                 "the background class")
        elif self.video_class >= n_classes:
            raise LabelError("an event video cannot carry the background class")
        expected = np.where(rel == 1, self.video_class, n_classes)
        if not (seg == expected).all():
            raise LabelError("segment_class must equal video_class on relevant "
                             "segments and background elsewhere")


@dataclass
class ManifestEntry:
    video_id: str
    path: str
    label: LabelRecord


@dataclass
class DatasetManifest:
    version: str
    classes: int
    T: int
    d_a: int
    d_v: int
    h: int
    w: int
    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self) -> None:
        for name in ("classes", "T", "d_a", "d_v", "h", "w"):
            if getattr(self, name) < 1:
                raise ConsistencyError(f"manifest field {name} must be >= 1")
        if self.classes < 2:
            raise ConsistencyError("need at least 2 classes")
        seen = set()
        for entry in self.entries:
            if entry.video_id in seen:
                raise ConsistencyError(f"duplicate video_id {entry.video_id!r}")
            seen.add(entry.video_id)
            if len(entry.label.segment_relevance) != self.T:
                raise ConsistencyError(
                    f"{entry.video_id}: labels cover "
                    f"{len(entry.label.segment_relevance)} segments, header says {self.T}")
            entry.label.validate(self.classes)

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "classes": self.classes,
            "T": self.T, "d_a": self.d_a, "d_v": self.d_v,
            "h": self.h, "w": self.w,
            "entries": [
                {
                    "video_id": e.video_id,
                    "path": e.path,
                    "video_class": int(e.label.video_class),
                    "segment_relevance": [int(v) for v in e.label.segment_relevance],
                    "segment_class": [int(v) for v in e.label.segment_class],
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=1)


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    manifest.validate()
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.to_json())
        f.flush()
        os.fsync(f.fileno())


def load_manifest(path: str) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        manifest = DatasetManifest(
            version=doc["version"], classes=doc["classes"], T=doc["T"],
            d_a=doc["d_a"], d_v=doc["d_v"], h=doc["h"], w=doc["w"],
            entries=[
                ManifestEntry(
                    video_id=e["video_id"], path=e["path"],
                    label=LabelRecord(
                        video_class=e["video_class"],
                        segment_relevance=np.array(e["segment_relevance"]),
                        segment_class=np.array(e["segment_class"]),
                    ))
                for e in doc["entries"]
            ])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: manifest is missing field {exc}") from exc
    manifest.validate()
    return manifest


# ---------------------------------------------------------------------------
# binary blocks


def write_block(f, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    f.write(MAGIC)
    f.write(np.uint32(arr.ndim).astype("<u4").tobytes())
    f.write(np.asarray(arr.shape, dtype="<u4").tobytes())
    f.write(arr.tobytes())


def _read_exact(f, n: int, path: str, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: file ends inside {what}")
    return buf


def read_block(f, path: str, expect_shape: tuple[int, ...] | None = None) -> np.ndarray:
    magic = _read_exact(f, 4, path, "magic bytes")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    rank = int(np.frombuffer(_read_exact(f, 4, path, "rank"), dtype="<u4")[0])
    if not 1 <= rank <= _MAX_RANK:
        raise FormatError(f"{path}: block rank {rank} outside 1..{_MAX_RANK}")
    extents = tuple(
        int(n) for n in np.frombuffer(_read_exact(f, 4 * rank, path, "extents"), dtype="<u4"))
    if any(n < 1 for n in extents):
        raise FormatError(f"{path}: block declares zero extent {extents}")
    if expect_shape is not None and extents != tuple(expect_shape):
        raise ConsistencyError(
            f"{path}: block header declares {extents}, expected {tuple(expect_shape)}")
    count = int(np.prod(extents, dtype=np.int64))
    payload = _read_exact(f, 4 * count, path, f"payload of {count} values")
    return np.frombuffer(payload, dtype="<f4").reshape(extents).astype(np.float32)


def save_bundle(bundle: FeatureBundle, path: str) -> None:
    """Write audio then visual blocks; synced to disk before returning."""
    with open(path, "wb") as f:
        write_block(f, bundle.audio)
        write_block(f, bundle.visual)
        f.flush()
        os.fsync(f.fileno())


def load_bundle(path: str, manifest: DatasetManifest, video_id: str = "") -> FeatureBundle:
    """Read one feature file, checking every block against the manifest dims."""
    with open(path, "rb") as f:
        audio = read_block(f, path, (manifest.T, manifest.d_a))
        visual = read_block(f, path, (manifest.T, manifest.h, manifest.w, manifest.d_v))
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after the visual block")
    if not (np.isfinite(audio).all() and np.isfinite(visual).all()):
        raise DataError(f"{path}: payload contains non-finite values")
    return FeatureBundle(audio=audio, visual=visual, video_id=video_id)


def load_entry(manifest: DatasetManifest, entry: ManifestEntry, base_dir: str) -> FeatureBundle:
    return load_bundle(os.path.join(base_dir, entry.path), manifest, entry.video_id)


def validate_dataset(manifest: DatasetManifest, base_dir: str) -> None:
    """Load every file and re-check labels; raises on any inconsistency."""
    manifest.validate()
    for entry in manifest.entries:
        load_entry(manifest, entry, base_dir)


# ---------------------------------------------------------------------------
# synthetic planted-event data


@dataclass
class SynthInfo:
    """Generator-side truth that is not part of the on-disk dataset."""

    audio_prototypes: np.ndarray   # (C, d_a), orthonormal rows
    visual_patterns: np.ndarray    # (C, 2, h, w, d_v), two orthonormal frames per class
    spans: list[tuple[int, int]]
    distractor_masks: list[np.ndarray]  # (T,) bool per video


def _orthonormal_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    if count > dim:
        raise ContractError(f"cannot draw {count} orthonormal vectors in {dim} dims")
    basis, r = np.linalg.qr(rng.normal(size=(dim, count)))
    basis = basis * np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
    return basis.T


def _unit_noise(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    """Gaussian noise whose expected vector norm over the trailing feature
    axes is ~`scale` (so snr compares prototype norm to noise norm)."""
    dim = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
    return rng.normal(0.0, scale / np.sqrt(dim), size=shape)


def synth_dataset(out_dir: str, seed: int, n_videos: int, *, T: int = 10,
                  d_a: int = 32, d_v: int = 64, h: int = 3, w: int = 3,
                  classes: int = 4, snr: float = 3.0,
                  distractor_prob: float = 0.5,
                  background_fraction: float = 0.0,
                  drift_step: float = np.pi / 2,
                  amplitude: float = 4.0,
                  clutter: float = 1.0) -> tuple[DatasetManifest, SynthInfo]:
    """Generate a planted-event dataset and write it under `out_dir`.

    Each video gets a class and an event span. Inside the span the audio is
    the class prototype plus noise and the visual stream is a class-specific
    pattern that drifts (rotates within a 2-plane) from segment to segment, so
    motion extraction has signal. Outside the span both streams are noise
    around a static per-video background frame, except that each background
    segment independently becomes, with `distractor_prob`, a distractor: the
    audio leaks the class prototype while the visuals stay frozen. Everything
    is deterministic in `seed`.

    `snr` is the ratio of prototype norm to expected noise norm; `amplitude`
    scales signal and noise together (it changes activation magnitudes, not
    separability). `clutter` scales the static background frame relative to
    the noise: clutter makes per-video static visual content dominate pattern
    detection while leaving temporal differences untouched, which is what
    gives motion-based discrimination its edge.
    """
    if classes < 2:
        raise ContractError("need at least 2 classes")
    if T < 2 or min(d_a, d_v, h, w) < 1:
        raise ContractError(f"invalid dims T={T} d_a={d_a} d_v={d_v} h={h} w={w}")
    noise_scale = 0.0 if np.isinf(snr) else 1.0 / float(snr)

    os.makedirs(out_dir, exist_ok=True)
    seq = np.random.SeedSequence(seed)
    children = seq.spawn(n_videos + 1)
    proto_rng = np.random.default_rng(children[0])
    audio_protos = _orthonormal_rows(proto_rng, classes, d_a)
    visual_patterns = _orthonormal_rows(proto_rng, 2 * classes, h * w * d_v) \
        .reshape(classes, 2, h, w, d_v)

    manifest = DatasetManifest(version=MANIFEST_VERSION, classes=classes,
                               T=T, d_a=d_a, d_v=d_v, h=h, w=w)
    spans: list[tuple[int, int]] = []
    masks: list[np.ndarray] = []
    for i in range(n_videos):
        rng = np.random.default_rng(children[i + 1])
        is_negative = rng.random() < background_fraction
        cls = int(rng.integers(classes))
        length = int(rng.integers(1, T + 1))
        start = int(rng.integers(0, T - length + 1))
        if is_negative:
            start, length = 0, 0
        end = start + length

        background = _unit_noise(rng, (h, w, d_v), clutter * noise_scale)  # static scene
        audio = _unit_noise(rng, (T, d_a), noise_scale)
        visual = background[None] + _unit_noise(rng, (T, h, w, d_v), noise_scale)
        distractor = np.zeros(T, dtype=bool)
        for t in range(T):
            if start <= t < end:
                angle = drift_step * (t - start)
                pattern = (np.cos(angle) * visual_patterns[cls, 0]
                           + np.sin(angle) * visual_patterns[cls, 1])
                audio[t] += audio_protos[cls]
                visual[t] += pattern
            elif rng.random() < distractor_prob:
                distractor[t] = True
                audio[t] += audio_protos[cls]   # leaked event audio
                visual[t] = background          # frozen frame, no fresh jitter

        relevance = np.zeros(T, dtype=np.int64)
        relevance[start:end] = 1
        video_class = classes if is_negative else cls
        label = LabelRecord(
            video_class=video_class,
            segment_relevance=relevance,
            segment_class=np.where(relevance == 1, video_class, classes))
        label.validate(classes)

        video_id = f"vid_{i:04d}"
        path = f"{video_id}.avf"
        bundle = FeatureBundle(audio=(amplitude * audio).astype(np.float32),
                               visual=(amplitude * visual).astype(np.float32),
                               video_id=video_id)
        save_bundle(bundle, os.path.join(out_dir, path))
        manifest.entries.append(ManifestEntry(video_id=video_id, path=path, label=label))
        spans.append((start, end))
        masks.append(distractor)

    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    validate_dataset(manifest, out_dir)
    return manifest, SynthInfo(audio_prototypes=audio_protos,
                               visual_patterns=visual_patterns,
                               spans=spans, distractor_masks=masks)


def nearest_prototype_accuracy(manifest: DatasetManifest, base_dir: str,
                               prototypes: np.ndarray) -> float:
    """Classify every relevant segment's audio by maximum prototype dot
    product; the fraction correct bounds what a learned model should reach."""
    hits = total = 0
    for entry in manifest.entries:
        bundle = load_entry(manifest, entry, base_dir)
        for t in range(manifest.T):
            if entry.label.segment_relevance[t] == 1:
                pred = int(np.argmax(prototypes @ bundle.audio[t]))
                hits += pred == entry.label.video_class
                total += 1
    return hits / total if total else 0.0
