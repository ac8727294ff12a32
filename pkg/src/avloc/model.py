"""End-to-end model assembly: configuration, seeded initialization, forward.

The pipeline per video is: motion extraction from the visual stream, motion
gating of the audio stream, audio-guided channel and spatial gating of the
visual stream, bidirectional cross-modal relation attention, interaction
fusion, then the classification heads. Config toggles swap whole stages for
constants (zero motion, zero past motion, no temporal gate) without touching
anything downstream, which is what the ablation runner exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import attention, fusion, heads, motion
from .data import FeatureBundle
from .errors import ConfigError, ShapeError
from .heads import HeadLeaves, HeadParams, Prediction

MOTION_MODES = ("pfme", "future_only", "off")
MODES = ("supervised", "weak")


@dataclass
class Dims:
    """Desk-scale defaults; a production-scale config would be
    d_a=128, d_v=512, h=w=7, hidden=512, relation=256."""

    T: int = 10
    d_a: int = 32
    d_v: int = 64
    h: int = 3
    w: int = 3
    classes: int = 4
    hidden: int = 64     # shared hidden width of the visual gates
    relation: int = 64   # channel width of the relation branches

    def validate(self) -> None:
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        for name in ("d_a", "d_v", "h", "w", "hidden", "relation"):
            if getattr(self, name) < 1:
                raise ConfigError(f"dims field {name} must be >= 1")


@dataclass
class ModelConfig:
    dims: Dims = field(default_factory=Dims)
    mode: str = "supervised"
    motion: str = "pfme"                 # pfme | future_only | off
    temporal_attention: bool = True
    scale_mode: str = "sqrt"             # sqrt | linear attention scaling
    past_variant: str = "printed"

    def validate(self) -> None:
        self.dims.validate()
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.motion not in MOTION_MODES:
            raise ConfigError(f"motion must be one of {MOTION_MODES}, got {self.motion!r}")
        if self.scale_mode not in fusion.SCALE_MODES:
            raise ConfigError(f"scale_mode must be one of {fusion.SCALE_MODES}")
        if self.past_variant not in motion.PAST_VARIANTS:
            raise ConfigError(f"past_variant must be one of {motion.PAST_VARIANTS}")

    @property
    def n_class_outputs(self) -> int:
        # weak mode scores background as an explicit extra class
        return self.dims.classes + (1 if self.mode == "weak" else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        cfg = cls(dims=Dims(**doc["dims"]),
                  **{k: v for k, v in doc.items() if k != "dims"})
        cfg.validate()
        return cfg


@dataclass
class ModelParams:
    """Every learned weight, reconstructible bit-exactly from (seed, config)."""

    motion: motion.MotionParams
    audio_gate: attention.AudioGateParams
    visual_gate: attention.VisualGateParams
    streams: fusion.StreamProjections
    audio_branch: fusion.CrossModalParams
    visual_branch: fusion.CrossModalParams
    interaction: fusion.CrossModalParams
    head: HeadParams
    seed: int

    def items(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in a fixed order shared by the optimizer,
        checkpoints, and leaf registration."""
        out = []
        for group_name in ("motion", "audio_gate", "visual_gate", "streams",
                           "audio_branch", "visual_branch", "interaction", "head"):
            group = getattr(self, group_name)
            for field_name in group.__dataclass_fields__:
                out.append((f"{group_name}.{field_name}", getattr(group, field_name)))
        return out

    def set_array(self, name: str, value: np.ndarray) -> None:
        group_name, field_name = name.split(".", 1)
        group = getattr(self, group_name)
        current = getattr(group, field_name)
        if current.shape != value.shape:
            raise ShapeError(f"{name}: checkpoint shape {value.shape} != {current.shape}")
        setattr(group, field_name, np.ascontiguousarray(value, dtype=np.float32))


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # bound sqrt(3/fan_in) keeps activation variance ~constant layer to layer
    fan_in = int(np.prod(shape[:-1]))
    bound = float(np.sqrt(3.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _identity_plus_noise(rng: np.random.Generator, k: int, channels: int) -> np.ndarray:
    """Temporal-difference conv init: exact identity at the center tap,
    sigma=0.01 noise elsewhere, so early training approximates plain frame
    differencing."""
    kernel = rng.normal(0.0, 0.01, size=(k, k, channels, channels)).astype(np.float32)
    kernel[k // 2, k // 2] = np.eye(channels, dtype=np.float32)
    return kernel


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Draw all weights from one splittable stream per parameter group."""
    cfg.validate()
    d = cfg.dims
    groups = np.random.SeedSequence(seed).spawn(8)
    rngs = [np.random.default_rng(s) for s in groups]
    d_m, d_h, n_out = d.relation, d.hidden, cfg.n_class_outputs

    motion_params = motion.MotionParams(
        align_kernel=_fan_in_uniform(rngs[0], (1, 1, d.d_v, d.d_a)),
        past_kernel=_identity_plus_noise(rngs[0], 3, d.d_a),
        future_kernel=_identity_plus_noise(rngs[0], 3, d.d_a),
        out_map=_fan_in_uniform(rngs[0], (d.d_a, d.d_a)))
    # zero-init so the temporal gate starts uniform (a neutral 1 + 1/T boost)
    # instead of a near-one-hot softmax that starves most segments early
    audio_gate = attention.AudioGateParams(
        temporal_weight=np.zeros((d.d_a, 1), dtype=np.float32))
    visual_gate = attention.VisualGateParams(
        channel_audio=_fan_in_uniform(rngs[2], (d.d_a, d_h)),
        channel_visual=_fan_in_uniform(rngs[2], (d.d_v, d_h)),
        channel_align=_fan_in_uniform(rngs[2], (d_h, d.d_v)),
        channel_value=_fan_in_uniform(rngs[2], (d.d_v, d.d_v)),
        spatial_audio=_fan_in_uniform(rngs[2], (d.d_a, d_h)),
        spatial_visual=_fan_in_uniform(rngs[2], (d.d_v, d_h)),
        spatial_score=_fan_in_uniform(rngs[2], (d_h, 1)))
    streams = fusion.StreamProjections(
        audio=_fan_in_uniform(rngs[3], (d.d_a, d_m)),
        visual=_fan_in_uniform(rngs[3], (d.d_v, d_m)),
        fused=_fan_in_uniform(rngs[3], (2 * d_m, d_m)))
    audio_branch = fusion.CrossModalParams(
        query_proj=_fan_in_uniform(rngs[4], (d_m, d_m)),
        key_proj=_fan_in_uniform(rngs[4], (d_m, d_m)),
        value_proj=_fan_in_uniform(rngs[4], (d_m, d_m)))
    visual_branch = fusion.CrossModalParams(
        query_proj=_fan_in_uniform(rngs[5], (d_m, d_m)),
        key_proj=_fan_in_uniform(rngs[5], (d_m, d_m)),
        value_proj=_fan_in_uniform(rngs[5], (d_m, d_m)))
    interaction = fusion.CrossModalParams(
        query_proj=_fan_in_uniform(rngs[6], (d_m, d_m)),
        key_proj=_fan_in_uniform(rngs[6], (d_m, d_m)),
        value_proj=_fan_in_uniform(rngs[6], (d_m, 2 * d_m)))
    head = HeadParams(
        class_weight=_fan_in_uniform(rngs[7], (2 * d_m, n_out)),
        class_bias=np.zeros((1, n_out), dtype=np.float32),
        event_weight=_fan_in_uniform(rngs[7], (2 * d_m, 1)),
        event_bias=np.zeros((1, 1), dtype=np.float32))
    return ModelParams(motion=motion_params, audio_gate=audio_gate,
                       visual_gate=visual_gate, streams=streams,
                       audio_branch=audio_branch, visual_branch=visual_branch,
                       interaction=interaction, head=head, seed=seed)


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class ForwardPass:
    """Tape outputs of one video plus the leaf tensors for backward."""

    leaves: dict[str, ad.Tensor]
    fused: ad.Tensor                  # (T, 2*d_m)
    class_probs: ad.Tensor            # (1, n_out)
    event_scores: ad.Tensor           # (T, 1)
    segment_logits: ad.Tensor | None  # (T, n_out), weak mode only
    stages: dict[str, ad.Tensor]

    def leaf_list(self) -> list[ad.Tensor]:
        return list(self.leaves.values())


def run_forward(tape: ad.Tape, params: ModelParams, audio: np.ndarray,
                visual: np.ndarray, cfg: ModelConfig) -> ForwardPass:
    cfg.validate()
    d = cfg.dims
    if tuple(audio.shape) != (d.T, d.d_a) or tuple(visual.shape) != (d.T, d.h, d.w, d.d_v):
        raise ShapeError(f"features {audio.shape}/{visual.shape} do not match "
                         f"config dims T={d.T} d_a={d.d_a} d_v={d.d_v} h={d.h} w={d.w}")
    leaves = {name: tape.leaf(arr) for name, arr in params.items()}
    audio_in = tape.leaf(audio)
    visual_in = tape.leaf(visual)
    stages: dict[str, ad.Tensor] = {}

    if cfg.motion == "off":
        motion_feat = tape.zeros((d.T, d.d_a))
    else:
        aligned = motion.align_channels(visual_in, leaves["motion.align_kernel"])
        stages["motion.align"] = aligned
        if cfg.motion == "future_only":
            past = tape.zeros((d.T, d.h, d.w, d.d_a))
            future = motion.future_motion(aligned, leaves["motion.future_kernel"])
        else:
            past, future = motion.past_future_motion(
                aligned, leaves["motion.past_kernel"], leaves["motion.future_kernel"],
                cfg.past_variant)
        motion_feat = motion.fuse_and_pool(past, future, leaves["motion.out_map"])
    stages["motion.feature"] = motion_feat

    audio_gated = attention.motion_guided_audio(
        audio_in, motion_feat, leaves["audio_gate.temporal_weight"],
        use_temporal=cfg.temporal_attention)
    stages["audio_attention"] = audio_gated

    gate_leaves = attention.VisualGateLeaves(
        *(leaves[f"visual_gate.{f}"] for f in (
            "channel_audio", "channel_visual", "channel_align", "channel_value",
            "spatial_audio", "spatial_visual", "spatial_score")))
    visual_gated = attention.audio_guided_channel(audio_gated, visual_in, gate_leaves)
    stages["visual_channel"] = visual_gated
    visual_static = attention.audio_guided_spatial(audio_gated, visual_gated, gate_leaves)
    stages["visual_spatial"] = visual_static

    audio_rel, visual_rel = fusion.relation_aware(
        audio_gated, visual_static,
        leaves["streams.audio"], leaves["streams.visual"],
        fusion.CrossModalLeaves(*(leaves[f"audio_branch.{f}"] for f in
                                  ("query_proj", "key_proj", "value_proj"))),
        fusion.CrossModalLeaves(*(leaves[f"visual_branch.{f}"] for f in
                                  ("query_proj", "key_proj", "value_proj"))),
        cfg.scale_mode)
    stages["relation.audio"] = audio_rel
    stages["relation.visual"] = visual_rel

    fused = fusion.interact(
        audio_rel, visual_rel, leaves["streams.fused"],
        fusion.CrossModalLeaves(*(leaves[f"interaction.{f}"] for f in
                                  ("query_proj", "key_proj", "value_proj"))),
        cfg.scale_mode)
    stages["interaction"] = fused

    head_leaves = HeadLeaves(*(leaves[f"head.{f}"] for f in (
        "class_weight", "class_bias", "event_weight", "event_bias")))
    class_probs = heads.class_distribution(fused, head_leaves)
    event_scores = heads.event_relevance(fused, head_leaves)
    segment_logits = heads.per_segment_logits(fused, head_leaves) \
        if cfg.mode == "weak" else None
    stages["classifier"] = class_probs

    return ForwardPass(leaves=leaves, fused=fused, class_probs=class_probs,
                       event_scores=event_scores, segment_logits=segment_logits,
                       stages=stages)


def predict(params: ModelParams, cfg: ModelConfig, bundle: FeatureBundle) -> Prediction:
    """Forward one video on a fresh tape and decode.

    Supervised decoding thresholds the relevance score at 0.5 and assigns the
    video's argmax class to every event segment. Weak decoding takes the
    per-segment argmax over C+1 scores (relevance is untrained in weak mode)
    and reports the time-aggregated distribution as the video-level one.
    """
    tape = ad.Tape()
    fwd = run_forward(tape, params, bundle.audio, bundle.visual, cfg)
    event_scores = fwd.event_scores.data[:, 0].copy()
    if cfg.mode == "weak":
        logits = fwd.segment_logits.data
        video_logits = logits.sum(axis=0)
        video_logits = video_logits - video_logits.max()
        probs = np.exp(video_logits)
        probs /= probs.sum()
        decoded = heads.decode_weak(logits)
    else:
        probs = fwd.class_probs.data[0].copy()
        decoded = heads.decode_supervised(probs, event_scores)
    return Prediction(video_id=bundle.video_id, event_scores=event_scores,
                      class_probs=np.asarray(probs), decoded=decoded)
