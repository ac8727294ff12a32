"""Cross-modal relation attention and the audio-visual interaction stage.

The primitive lets a (T, d) query sequence attend over the concatenation of
itself and a partner sequence along time (2T keys/values), so every segment
can mix evidence from both modalities at every time step. Two relation
branches run it in both directions; the interaction stage runs it once more
on the elementwise product of the branches against their channel
concatenation, with a residual, yielding the (T, 2*d_m) classification
feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

SCALE_MODES = ("sqrt", "linear")


@dataclass
class CrossModalParams:
    query_proj: np.ndarray  # (d_in, d_m)
    key_proj: np.ndarray    # (d_in, d_m)
    value_proj: np.ndarray  # (d_in, d_out)


@dataclass
class StreamProjections:
    """Width reconciliation in front of / inside the relation stages."""

    audio: np.ndarray  # (d_a, d_m)
    visual: np.ndarray  # (d_v, d_m)
    fused: np.ndarray   # (2*d_m, d_m)


def attention_scale(d_m: int, scale_mode: str) -> float:
    if scale_mode == "sqrt":
        return 1.0 / math.sqrt(d_m)
    if scale_mode == "linear":
        return 1.0 / d_m
    raise ConfigError(f"scale_mode must be one of {SCALE_MODES}, got {scale_mode!r}")


def cross_modal_attend(query_seq: ad.Tensor, context_seq: ad.Tensor,
                       query_proj: ad.Tensor, key_proj: ad.Tensor,
                       value_proj: ad.Tensor, scale_mode: str = "sqrt",
                       return_weights: bool = False):
    """Single-head attention of `query_seq` over [query_seq; context_seq].

    Both sequences must share channel width; keys and values come from their
    time-axis concatenation, so each of the T output rows is a convex mixture
    of 2T value rows.
    """
    if query_seq.ndim != 2 or context_seq.ndim != 2 \
            or query_seq.shape[1] != context_seq.shape[1]:
        raise ShapeError(f"query {query_seq.shape} and context {context_seq.shape} "
                         "must be (T, d) with equal d")
    merged = ad.concat(query_seq, context_seq, axis=0)          # (2T, d)
    q = ad.matmul(query_seq, query_proj)                        # (T, d_m)
    k = ad.matmul(merged, key_proj)                             # (2T, d_m)
    v = ad.matmul(merged, value_proj)                           # (2T, d_out)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)),
                      attention_scale(q.shape[1], scale_mode))  # (T, 2T)
    weights = ad.softmax(scores, axis=1)
    out = ad.matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def relation_aware(audio_seq: ad.Tensor, visual_seq: ad.Tensor,
                   audio_proj: ad.Tensor, visual_proj: ad.Tensor,
                   audio_branch: "CrossModalLeaves", visual_branch: "CrossModalLeaves",
                   scale_mode: str = "sqrt") -> tuple[ad.Tensor, ad.Tensor]:
    """Project both streams to d_m, then let each attend over both."""
    a = ad.matmul(audio_seq, audio_proj)
    v = ad.matmul(visual_seq, visual_proj)
    visual_rel = cross_modal_attend(v, a, visual_branch.query_proj,
                                    visual_branch.key_proj, visual_branch.value_proj,
                                    scale_mode)
    audio_rel = cross_modal_attend(a, v, audio_branch.query_proj,
                                   audio_branch.key_proj, audio_branch.value_proj,
                                   scale_mode)
    return audio_rel, visual_rel


def interact(audio_rel: ad.Tensor, visual_rel: ad.Tensor, fused_proj: ad.Tensor,
             branch: "CrossModalLeaves", scale_mode: str = "sqrt") -> ad.Tensor:
    """Fuse the relation branches into the (T, 2*d_m) classification feature.

    The concatenated pair is the residual; the attention mixes the
    elementwise product (resonance) against a width-reconciled view of the
    pair.
    """
    if audio_rel.shape != visual_rel.shape:
        raise ShapeError(f"relation branches disagree: {audio_rel.shape} vs {visual_rel.shape}")
    resonance = ad.mul(audio_rel, visual_rel)                    # (T, d_m)
    paired = ad.concat(audio_rel, visual_rel, axis=1)            # (T, 2*d_m)
    context = ad.matmul(paired, fused_proj)                      # (T, d_m)
    mixed = cross_modal_attend(resonance, context, branch.query_proj,
                               branch.key_proj, branch.value_proj, scale_mode)
    return ad.add(mixed, paired)


@dataclass
class CrossModalLeaves:
    query_proj: ad.Tensor
    key_proj: ad.Tensor
    value_proj: ad.Tensor

    @classmethod
    def register(cls, tape: ad.Tape, params: CrossModalParams) -> "CrossModalLeaves":
        return cls(tape.leaf(params.query_proj), tape.leaf(params.key_proj),
                   tape.leaf(params.value_proj))
