"""Autoregressive recurrent decoder with dot-product attention.

Token spaces:
  input embeddings: vocab tokens 0..K-1 plus begin-of-sequence at index K
  output classes:   vocab tokens 0..K-1 plus end-of-sequence at index K

Parameters under a prefix (default "dec"):
  {p}.E   ((K+1) x e)        token embeddings (row K = BOS)
  {p}.cell.{W,U,b}           gated recurrent cell, input dim e + enc_dim
  {p}.Wq  (enc_dim x hd)     attention query projection
  {p}.Wo  ((K+1) x (hd+enc_dim)), {p}.bo  output projection
"""

from dataclasses import dataclass

import numpy as np

from .gru import cell_shapes, gru_step, gru_step_backward

BOS_OFFSET = 0  # BOS embedding row index is vocab_size + BOS_OFFSET


class InputError(Exception):
    pass


@dataclass
class DecoderConfig:
    vocab_size: int
    enc_dim: int
    embed_dim: int = 16
    hidden: int = 32

    @property
    def bos_id(self):
        return self.vocab_size

    @property
    def eos_id(self):
        return self.vocab_size

    @property
    def num_classes(self):
        return self.vocab_size + 1


def decoder_shapes(cfg, prefix="dec"):
    shapes = {
        "%s.E" % prefix: (cfg.vocab_size + 1, cfg.embed_dim),
        "%s.Wq" % prefix: (cfg.enc_dim, cfg.hidden),
        "%s.Wo" % prefix: (cfg.num_classes, cfg.hidden + cfg.enc_dim),
        "%s.bo" % prefix: (cfg.num_classes,),
    }
    shapes.update(cell_shapes("%s.cell" % prefix, cfg.embed_dim + cfg.enc_dim, cfg.hidden))
    return shapes


def init_decoder_params(cfg, seed, prefix="dec"):
    from .params import init_uniform

    return init_uniform(decoder_shapes(cfg, prefix), seed)


def _log_softmax(logits):
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def step(token, h_prev, encoded, params, cfg, prefix="dec"):
    """One decode step; returns (logprobs, h, attention weights, cache)."""
    if encoded.shape[0] == 0:
        raise InputError("empty encoded sequence")
    E = params["%s.E" % prefix]
    Wq = params["%s.Wq" % prefix]
    Wo = params["%s.Wo" % prefix]
    bo = params["%s.bo" % prefix]

    q = Wq @ h_prev
    scores = encoded @ q
    scores = scores - np.max(scores)
    alpha = np.exp(scores)
    alpha /= np.sum(alpha)
    context = alpha @ encoded

    x = np.concatenate([E[token], context])
    h, gru_cache = gru_step(x, h_prev, params, "%s.cell" % prefix)
    hc = np.concatenate([h, context])
    logits = Wo @ hc + bo
    logprobs = _log_softmax(logits)
    cache = (token, h_prev, alpha, q, context, h, hc, gru_cache, logprobs)
    return logprobs, h, alpha, cache


def step_backward(dlogits, dh_carry, cache, encoded, dencoded, params, cfg, grads, prefix="dec"):
    """Backward for one step; returns dh_prev (gradient into the previous state)."""
    token, h_prev, alpha, q, context, h, hc, gru_cache, _ = cache
    Wo = params["%s.Wo" % prefix]
    Wq = params["%s.Wq" % prefix]
    hd = cfg.hidden
    e = cfg.embed_dim

    grads["%s.Wo" % prefix] += np.outer(dlogits, hc)
    grads["%s.bo" % prefix] += dlogits
    dhc = Wo.T @ dlogits
    dh = dhc[:hd] + dh_carry
    dcontext = dhc[hd:]

    dx, dh_prev = gru_step_backward(dh, gru_cache, params, "%s.cell" % prefix, grads)
    grads["%s.E" % prefix][token] += dx[:e]
    dcontext = dcontext + dx[e:]

    dalpha = encoded @ dcontext
    dencoded += np.outer(alpha, dcontext)
    dscores = alpha * (dalpha - np.dot(alpha, dalpha))
    dq = encoded.T @ dscores
    dencoded += np.outer(dscores, q)
    grads["%s.Wq" % prefix] += np.outer(dq, h_prev)
    dh_prev = dh_prev + Wq.T @ dq
    return dh_prev


def decoder_step(prev_tokens, encoded, params, cfg, prefix="dec"):
    """Distribution over the next token given a prefix starting with BOS.

    Returns (probs over K+1 classes, attention weights of the last step).
    """
    if len(prev_tokens) == 0 or prev_tokens[0] != cfg.bos_id:
        raise InputError("prefix must begin with the BOS token")
    h = np.zeros(cfg.hidden)
    logprobs = alpha = None
    for token in prev_tokens:
        logprobs, h, alpha, _ = step(token, h, encoded, params, cfg, prefix)
    return np.exp(logprobs), alpha


def decoder_forward(encoded, targets, params, cfg, prefix="dec"):
    """Teacher-forced pass over targets (without BOS/EOS; EOS appended).

    Returns (logprob matrix (M+1 x K+1), caches).
    """
    inputs = [cfg.bos_id] + list(targets)
    h = np.zeros(cfg.hidden)
    caches = []
    logprob_rows = np.empty((len(inputs), cfg.num_classes))
    for i, token in enumerate(inputs):
        logprobs, h, _, cache = step(token, h, encoded, params, cfg, prefix)
        logprob_rows[i] = logprobs
        caches.append(cache)
    return logprob_rows, caches


def decoder_backward(dlogprob_rows, caches, encoded, params, cfg, grads, prefix="dec"):
    """Backprop teacher-forced pass given grads w.r.t. per-step logits.

    dlogprob_rows must already be gradients w.r.t. pre-softmax logits
    composed with log-softmax (i.e. d loss / d logits). Returns dencoded.
    """
    dencoded = np.zeros_like(encoded)
    dh = np.zeros(cfg.hidden)
    for i in range(len(caches) - 1, -1, -1):
        dh = step_backward(
            dlogprob_rows[i], dh, caches[i], encoded, dencoded, params, cfg, grads, prefix
        )
    return dencoded
