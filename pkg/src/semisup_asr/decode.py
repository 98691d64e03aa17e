"""Hypothesis generation and scoring.

Includes a stupid-backoff n-gram LM over character tokens, greedy and
prefix beam search for CTC (optionally LM-fused), length-bounded beam
search for the encoder-decoder, run-collapse decoding for the frame
classifier, and word error rate via Levenshtein alignment.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .models import frame_logprobs, encode_utterance
from .nn import decoder as dec_mod


class InputError(Exception):
    pass


class ScoringError(Exception):
    pass


class TrainingError(Exception):
    pass


@dataclass
class Hypothesis:
    tokens: list
    score: float
    per_token_scores: list | None = None


# ------------------------------------------------------------------ n-gram LM

class NGramLM:
    """Maximum-likelihood n-gram scores with stupid backoff (factor 0.4).

    score(w | ctx) = count(ctx + w) / count(ctx) when the full context was
    seen, else backoff_factor * score(w | shorter ctx); grounded at an
    add-1-smoothed unigram.
    """

    def __init__(self, order, vocab_size, backoff_factor=0.4):
        self.order = order
        self.vocab_size = vocab_size
        self.backoff_factor = backoff_factor
        self.counts = [dict() for _ in range(order)]  # n-1 -> {ngram tuple: count}
        self.context_counts = [dict() for _ in range(order)]
        self.total_unigrams = 0

    def add_sequence(self, tokens):
        tokens = list(tokens)
        self.total_unigrams += len(tokens)
        for n in range(1, self.order + 1):
            for i in range(len(tokens) - n + 1):
                gram = tuple(tokens[i:i + n])
                self.counts[n - 1][gram] = self.counts[n - 1].get(gram, 0) + 1
                ctx = gram[:-1]
                self.context_counts[n - 1][ctx] = self.context_counts[n - 1].get(ctx, 0) + 1

    def score(self, token, context=()):
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        return self._score(token, context)

    def _score(self, token, context):
        n = len(context) + 1
        gram = context + (token,)
        seen = self.counts[n - 1].get(gram)
        if seen is not None:
            return seen / self.context_counts[n - 1][context]
        if n == 1:
            unigram = self.counts[0].get((token,), 0)
            return (unigram + 1) / (self.total_unigrams + self.vocab_size)
        return self.backoff_factor * self._score(token, context[1:])

    def logscore(self, token, context=()):
        return math.log(self.score(token, context))


def train_ngram(transcripts, order=5, vocab_size=None, backoff_factor=0.4):
    if not transcripts:
        raise TrainingError("empty transcript corpus")
    if order < 1:
        raise TrainingError("order must be >= 1")
    if vocab_size is None:
        vocab_size = max((max(t) for t in transcripts if t), default=0) + 1
    lm = NGramLM(order, vocab_size, backoff_factor)
    for tokens in transcripts:
        lm.add_sequence(tokens)
    return lm


# ------------------------------------------------------------------------ CTC

def collapse_path(path, blank):
    """Remove repeats then blanks (the CTC collapse function)."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return out


def ctc_greedy(logprobs):
    """Best-path decode: per-frame argmax, collapsed."""
    logp = np.asarray(logprobs)
    path = np.argmax(logp, axis=1)
    blank = logp.shape[1] - 1
    score = float(np.sum(np.max(logp, axis=1)))
    return Hypothesis(tokens=collapse_path(path, blank), score=score)


def ctc_beam_search(logprobs, beam=20, lm=None, lm_weight=0.0):
    """Prefix beam search over collapsed label sequences.

    Combined ranking score = log P_acoustic(prefix) + lm_weight * LM
    log-score; ties break toward the lexicographically smaller token
    sequence. With beam=1 and no LM this reduces to greedy best-path
    collapse.
    """
    logp = np.asarray(logprobs, dtype=np.float64)
    if logp.size == 0:
        raise InputError("empty logprobs")
    if beam < 1 or lm_weight < 0:
        raise InputError("beam must be >= 1 and lm_weight >= 0")
    if beam == 1 and (lm is None or lm_weight == 0.0):
        return [ctc_greedy(logp)]
    T, K1 = logp.shape
    blank = K1 - 1
    NEG = -np.inf
    # prefix -> [log p ending in blank, log p ending in non-blank, lm logscore]
    beams = {(): [0.0, NEG, 0.0]}
    for t in range(T):
        new = {}

        def bucket(prefix, lm_score):
            entry = new.get(prefix)
            if entry is None:
                entry = [NEG, NEG, lm_score]
                new[prefix] = entry
            return entry

        for prefix, (pb, pnb, lm_score) in beams.items():
            total = np.logaddexp(pb, pnb)
            # stay on blank
            entry = bucket(prefix, lm_score)
            entry[0] = np.logaddexp(entry[0], total + logp[t, blank])
            # repeat the final label without a separating blank
            if prefix:
                entry[1] = np.logaddexp(entry[1], pnb + logp[t, prefix[-1]])
            for c in range(blank):
                if prefix and c == prefix[-1]:
                    ext_mass = pb  # repeat needs a blank in between
                else:
                    ext_mass = total
                if ext_mass == NEG:
                    continue
                ext = prefix + (c,)
                ext_lm = lm_score
                if lm is not None and ext not in new:
                    ext_lm = lm_score + lm.logscore(c, prefix)
                entry = bucket(ext, ext_lm)
                entry[1] = np.logaddexp(entry[1], ext_mass + logp[t, c])

        ranked = sorted(
            new.items(),
            key=lambda kv: (
                -(np.logaddexp(kv[1][0], kv[1][1]) + lm_weight * kv[1][2]),
                kv[0],
            ),
        )
        beams = dict(ranked[:beam])

    hyps = []
    for prefix, (pb, pnb, lm_score) in beams.items():
        score = float(np.logaddexp(pb, pnb) + lm_weight * lm_score)
        hyps.append(Hypothesis(tokens=list(prefix), score=score))
    hyps.sort(key=lambda h: (-h.score, h.tokens))
    return hyps


# ------------------------------------------------------- encoder-decoder beam

def encdec_beam_search(encoded, params, dec_cfg, beam=20, max_len=40, length_norm=False):
    """Length-bounded beam search on decoder steps; no LM fusion.

    Hypotheses end at EOS or max_len; ranked by total log-prob (mean
    log-prob when length_norm); ties break lexicographically.
    """
    if beam < 1 or max_len < 1:
        raise InputError("beam and max_len must be >= 1")
    h0 = np.zeros(dec_cfg.hidden)
    # active: (tokens tuple, score, per-token scores, state, last token)
    active = [((), 0.0, [], h0, dec_cfg.bos_id)]
    finished = []
    for _ in range(max_len):
        candidates = []
        for tokens, score, steps, h, last in active:
            logprobs, h_next, _, _ = dec_mod.step(last, h, encoded, params, dec_cfg)
            for c in range(dec_cfg.num_classes):
                cand_score = score + float(logprobs[c])
                if c == dec_cfg.eos_id:
                    finished.append(
                        Hypothesis(list(tokens), cand_score, steps + [float(logprobs[c])])
                    )
                else:
                    candidates.append(
                        (tokens + (c,), cand_score, steps + [float(logprobs[c])], h_next, c)
                    )
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[1], c[0]))
        active = candidates[:beam]
    for tokens, score, steps, _, _ in active:  # ran into the length bound
        finished.append(Hypothesis(list(tokens), score, steps))

    def rank_score(h):
        if length_norm and h.tokens:
            return h.score / (len(h.tokens) + 1)
        return h.score

    finished.sort(key=lambda h: (-rank_score(h), h.tokens))
    return finished[:beam]


def frame_greedy(logprobs):
    """Frame-classifier decode: argmax labels, runs collapsed to tokens."""
    logp = np.asarray(logprobs)
    path = np.argmax(logp, axis=1)
    out = []
    prev = None
    for p in path:
        if p != prev:
            out.append(int(p))
        prev = p
    return Hypothesis(tokens=out, score=float(np.sum(np.max(logp, axis=1))))


# ----------------------------------------------------------------- dispatcher

@dataclass
class DecodeConfig:
    beam: int = 20
    lm: NGramLM | None = None
    lm_weight: float = 0.5
    max_len: int = 48
    length_norm: bool = False


def decode_utterance(bundle, frames, cfg=None):
    """Top-ranked hypothesis list for one utterance under the model kind."""
    cfg = cfg or DecodeConfig()
    kind = bundle.cfg.kind
    if kind == "encdec":
        encoded = encode_utterance(bundle, frames)
        return encdec_beam_search(
            encoded, bundle.params, bundle.cfg.decoder_config(),
            beam=cfg.beam, max_len=cfg.max_len, length_norm=cfg.length_norm,
        )
    logp = frame_logprobs(bundle, frames)
    if kind == "frame":
        return [frame_greedy(logp)]
    return ctc_beam_search(logp, beam=cfg.beam, lm=cfg.lm, lm_weight=cfg.lm_weight)


# ------------------------------------------------------------------------ WER

def word_error_rate(ref_words, hyp_words):
    """Levenshtein word alignment with unit costs.

    Returns {"wer", "subs", "ins", "dels"}; on cost ties a substitution
    is preferred over an insertion+deletion pair.
    """
    ref = list(ref_words)
    hyp = list(hyp_words)
    if not ref:
        raise ScoringError("empty reference")
    N, M = len(ref), len(hyp)
    # cell: (cost, subs, ins, dels)
    row = [(j, 0, j, 0) for j in range(M + 1)]
    for i in range(1, N + 1):
        prev = row
        row = [(i, 0, 0, i)]
        for j in range(1, M + 1):
            if ref[i - 1] == hyp[j - 1]:
                cand = [(prev[j - 1][0], prev[j - 1], (0, 0, 0))]
            else:
                cand = [(prev[j - 1][0] + 1, prev[j - 1], (1, 0, 0))]
            cand.append((prev[j][0] + 1, prev[j], (0, 0, 1)))  # deletion
            cand.append((row[j - 1][0] + 1, row[j - 1], (0, 1, 0)))  # insertion
            cost, cell, (ds, di, dd) = min(cand, key=lambda c: c[0])
            row.append((cost, cell[1] + ds, cell[2] + di, cell[3] + dd))
    cost, subs, ins, dels = row[M]
    return {"wer": cost / N, "subs": subs, "ins": ins, "dels": dels}
