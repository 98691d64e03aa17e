"""Model kinds built from the neural core.

Three kinds share the same recurrent encoder:
  ctc     encoder + linear head over vocab + blank (blank = last class)
  frame   encoder + linear head over vocab (per-frame classifier,
          trained against forced alignments)
  encdec  encoder + attention decoder over vocab + EOS
"""

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .nn.params import ParamSet, init_uniform
from .nn.encoder import EncoderConfig, encoder_shapes, encode, encode_backward
from .nn.decoder import DecoderConfig, decoder_shapes
from .nn.checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from .losses import log_softmax, frame_ce_loss, frame_distill_loss, ctc_loss, seq_ce_loss

KINDS = ("ctc", "encdec", "frame")


@dataclass
class ModelConfig:
    kind: str
    vocab_size: int
    feature_dim: int = 16
    enc_layers: int = 2
    enc_hidden: int = 32
    subsample_factor: int = 2
    bidirectional: bool = True
    dec_embed: int = 16
    dec_hidden: int = 32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown model kind %r" % self.kind)

    def encoder_config(self):
        return EncoderConfig(
            input_dim=self.feature_dim,
            num_layers=self.enc_layers,
            hidden_units=self.enc_hidden,
            subsample_factor=self.subsample_factor,
            bidirectional=self.bidirectional,
        )

    def decoder_config(self):
        return DecoderConfig(
            vocab_size=self.vocab_size,
            enc_dim=self.encoder_config().output_dim,
            embed_dim=self.dec_embed,
            hidden=self.dec_hidden,
        )

    @property
    def num_output_classes(self):
        if self.kind == "ctc":
            return self.vocab_size + 1  # + blank
        if self.kind == "frame":
            return self.vocab_size
        return self.vocab_size + 1  # + EOS

    @property
    def blank_id(self):
        return self.vocab_size


def model_shapes(cfg):
    enc = cfg.encoder_config()
    shapes = encoder_shapes(enc)
    if cfg.kind in ("ctc", "frame"):
        shapes["head.W"] = (cfg.num_output_classes, enc.output_dim)
        shapes["head.b"] = (cfg.num_output_classes,)
    else:
        shapes.update(decoder_shapes(cfg.decoder_config()))
    return shapes


def init_model(cfg, seed):
    return init_uniform(model_shapes(cfg), seed)


@dataclass
class ModelBundle:
    cfg: ModelConfig
    params: ParamSet
    step: int = 0
    phase: str = "burn_in"

    def num_params(self):
        return sum(v.size for v in self.params.entries.values())


def save_model(bundle, path):
    save_checkpoint(Checkpoint(bundle.params, bundle.step, bundle.phase), path)
    with open(path + ".json", "w") as f:
        json.dump(asdict(bundle.cfg), f, indent=2)


def load_model(path):
    ckpt = load_checkpoint(path)
    with open(path + ".json") as f:
        cfg = ModelConfig(**json.load(f))
    return ModelBundle(cfg=cfg, params=ckpt.params, step=ckpt.step, phase=ckpt.phase)


# ------------------------------------------------------------------- forward

def frame_logprobs(bundle, frames, with_cache=False):
    """Per-frame class log-probs for ctc/frame kinds (subsampled rate)."""
    if bundle.cfg.kind == "encdec":
        raise ValueError("encdec models have no frame-level posteriors")
    enc_cfg = bundle.cfg.encoder_config()
    encoded, cache = encode(frames, bundle.params, enc_cfg)
    W = bundle.params["head.W"]
    b = bundle.params["head.b"]
    logits = encoded @ W.T + b
    logp = log_softmax(logits)
    if with_cache:
        return logp, (encoded, cache)
    return logp


def encode_utterance(bundle, frames):
    enc_cfg = bundle.cfg.encoder_config()
    encoded, _ = encode(frames, bundle.params, enc_cfg)
    return encoded


def _head_backward(dlogits, encoded, cache, bundle, grads):
    W = bundle.params["head.W"]
    grads["head.W"] += dlogits.T @ encoded
    grads["head.b"] += dlogits.sum(axis=0)
    dencoded = dlogits @ W
    encode_backward(dencoded, cache, bundle.params, bundle.cfg.encoder_config(), grads)


def _logsoftmax_backward(dlogprobs, logprobs):
    probs = np.exp(logprobs)
    return dlogprobs - probs * dlogprobs.sum(axis=1, keepdims=True)


def subsampled_frame_labels(tokens, token_frames, subsample_factor):
    """Forced-alignment labels at the encoder output rate.

    Each output step takes the label of the first input frame it covers.
    """
    full = np.repeat(np.asarray(tokens, dtype=int), token_frames)
    return full[::subsample_factor]


# ----------------------------------------------------------- loss dispatchers

def utterance_loss(bundle, frames, target, grads=None, teacher=None):
    """Loss (and grads, if requested) for one utterance.

    target meaning per kind: token ids for ctc/encdec; per-output-frame
    labels for frame kind. teacher: SparsePosterior/Posteriorgram for
    distillation on ctc/frame kinds (overrides target).
    """
    cfg = bundle.cfg
    if cfg.kind == "encdec":
        enc_cfg = cfg.encoder_config()
        encoded, cache = encode(frames, bundle.params, enc_cfg)
        loss, dencoded = seq_ce_loss(encoded, target, bundle.params, cfg.decoder_config(), grads)
        if grads is not None:
            encode_backward(dencoded, cache, bundle.params, enc_cfg, grads)
        return loss

    logp, (encoded, cache) = frame_logprobs(bundle, frames, with_cache=True)
    if teacher is not None:
        loss, dlogits, _ = frame_distill_loss(teacher, logp)
    elif cfg.kind == "ctc":
        loss, dlogprobs = ctc_loss(logp, target)
        dlogits = _logsoftmax_backward(dlogprobs, logp)
    else:
        loss, dlogits = frame_ce_loss(logp, target)
    if grads is not None:
        _head_backward(dlogits, encoded, cache, bundle, grads)
    return loss
