"""Training objectives: frame CE, frame-level distillation, CTC, sequence CE.

All losses return (loss, gradient) with the gradient taken w.r.t. the
pre-softmax logits, so heads can chain straight into the encoder
backward pass. CTC works in log space throughout.
"""

from dataclasses import dataclass

import numpy as np

from .nn.decoder import decoder_forward, decoder_backward


class LabelError(Exception):
    pass


class AlignmentError(Exception):
    pass


class FeasibilityError(Exception):
    pass


class BatchError(Exception):
    pass


@dataclass
class Posteriorgram:
    utt_id: str
    probs: np.ndarray  # T' x K, rows sum to 1

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if np.any(self.probs < -1e-9) or np.any(self.probs > 1 + 1e-9):
            raise ValueError("posterior entries must lie in [0, 1]")
        if np.max(np.abs(self.probs.sum(axis=1) - 1.0)) > 1e-5:
            raise ValueError("posterior rows must sum to 1")

    @property
    def num_frames(self):
        return self.probs.shape[0]


@dataclass
class SparsePosterior:
    utt_id: str
    frames: list  # per frame: list of (class_id, prob), probs descending
    k: int

    def __post_init__(self):
        for row in self.frames:
            ids = [c for c, _ in row]
            probs = [p for _, p in row]
            if len(row) > self.k or len(set(ids)) != len(ids):
                raise ValueError("bad sparse posterior frame")
            if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
                raise ValueError("sparse probs must be descending")
            if sum(probs) > 1 + 1e-6:
                raise ValueError("sparse probs sum above 1")

    @property
    def num_frames(self):
        return len(self.frames)

    def dense(self, num_classes, renormalize=True):
        out = np.zeros((self.num_frames, num_classes))
        for t, row in enumerate(self.frames):
            for cid, p in row:
                out[t, cid] = p
            total = out[t].sum()
            if renormalize and total > 0:
                out[t] /= total
        return out


def save_sparse_posterior(sparse, path):
    """Container format: tensors class_ids and probs (T' x k, short rows
    padded with id -1 / prob 0) plus a scalar k."""
    from .nn.checkpoint import Checkpoint, save_checkpoint
    from .nn.params import ParamSet

    T = sparse.num_frames
    ids = np.full((T, sparse.k), -1.0)
    probs = np.zeros((T, sparse.k))
    for t, row in enumerate(sparse.frames):
        for j, (cid, p) in enumerate(row):
            ids[t, j] = cid
            probs[t, j] = p
    params = ParamSet({"class_ids": ids, "probs": probs, "k": np.array([float(sparse.k)])})
    save_checkpoint(Checkpoint(params=params), path)


def load_sparse_posterior(utt_id, path):
    from .nn.checkpoint import load_checkpoint

    ckpt = load_checkpoint(path)
    ids = ckpt.params["class_ids"]
    probs = ckpt.params["probs"]
    k = int(ckpt.params["k"][0])
    frames = []
    for t in range(ids.shape[0]):
        row = [
            (int(ids[t, j]), float(probs[t, j]))
            for j in range(ids.shape[1])
            if ids[t, j] >= 0
        ]
        frames.append(row)
    return SparsePosterior(utt_id=utt_id, frames=frames, k=k)


def log_softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def frame_ce_loss(student_logprobs, labels):
    """Mean negative log-likelihood of per-frame labels.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / T'.
    """
    logp = np.asarray(student_logprobs, dtype=np.float64)
    T, K = logp.shape
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != T:
        raise LabelError("label length must equal frame count")
    if np.any(labels < 0) or np.any(labels >= K):
        raise LabelError("label id out of range")
    loss = -float(np.mean(logp[np.arange(T), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(T), labels] -= 1.0
    dlogits /= T
    return loss, dlogits


def frame_distill_loss(teacher, student_logprobs, renormalize=True):
    """Teacher-weighted cross entropy averaged over frames.

    Accepts a dense Posteriorgram or a SparsePosterior (missing classes
    count as teacher probability zero; sparse rows are renormalized to
    sum 1 unless disabled). Returns (loss, dlogits, info) where info
    carries the equivalent KL value and the teacher entropy.
    """
    logp = np.asarray(student_logprobs, dtype=np.float64)
    T, K = logp.shape
    if isinstance(teacher, SparsePosterior):
        tprobs = teacher.dense(K, renormalize=renormalize)
    else:
        tprobs = np.asarray(teacher.probs, dtype=np.float64)
    if tprobs.shape[0] != T:
        raise AlignmentError("teacher/student frame counts differ")
    loss = -float(np.sum(tprobs * logp) / T)
    row_mass = tprobs.sum(axis=1, keepdims=True)
    dlogits = (np.exp(logp) * row_mass - tprobs) / T
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(tprobs > 0, tprobs * np.log(tprobs), 0.0)
    entropy = -float(np.sum(plogp) / T)
    return loss, dlogits, {"teacher_entropy": entropy, "kl": loss - entropy}


def ctc_feasible(num_frames, labels):
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return num_frames >= len(labels) + repeats


def ctc_loss(logprobs, labels):
    """Log-space CTC forward-backward; blank is the last class index.

    Returns (loss, dlogprobs) where dlogprobs[t, k] = -gamma_t(k), the
    negative posterior over classes occupied at frame t.
    """
    logp = np.asarray(logprobs, dtype=np.float64)
    T, K1 = logp.shape
    blank = K1 - 1
    labels = list(labels)
    if any(l < 0 or l >= blank for l in labels):
        raise LabelError("label id out of range")
    if not ctc_feasible(T, labels):
        raise FeasibilityError(
            "label of length %d (with repeats) cannot fit in %d frames" % (len(labels), T)
        )
    ext = [blank]
    for l in labels:
        ext += [l, blank]
    ext = np.asarray(ext, dtype=int)
    S = len(ext)
    NEG = -np.inf
    emit = logp[:, ext]  # T x S

    # skip transition s-2 -> s allowed where ext[s] is a label differing
    # from ext[s-2]
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    def _lse(stack):
        m = np.max(stack, axis=0)
        finite = np.isfinite(m)
        out = np.full(m.shape, NEG)
        if np.any(finite):
            out[finite] = m[finite] + np.log(
                np.sum(np.exp(stack[:, finite] - m[finite]), axis=0)
            )
        return out

    alpha = np.full((T, S), NEG)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        shift1 = np.concatenate(([NEG], prev[:-1]))
        shift2 = np.full(S, NEG)
        shift2[2:] = prev[:-2]
        shift2[~skip_ok] = NEG
        alpha[t] = _lse(np.stack([prev, shift1, shift2])) + emit[t]

    total = alpha[T - 1, S - 1]
    if S > 1:
        total = np.logaddexp(total, alpha[T - 1, S - 2])
    if not np.isfinite(total):
        raise FeasibilityError("no feasible alignment path")

    beta = np.full((T, S), NEG)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        shift1 = np.concatenate((nxt[1:], [NEG]))
        shift2 = np.full(S, NEG)
        shift2[:-2] = nxt[2:]
        shift2[:-2][~skip_ok[2:]] = NEG
        beta[t] = _lse(np.stack([nxt, shift1, shift2])) + emit[t]

    # gamma_t(k): posterior mass of states emitting class k at frame t
    occ = alpha + beta - emit - total
    occ = np.where(np.isfinite(occ), np.exp(occ), 0.0)
    dlogprobs = np.zeros_like(logp)
    np.add.at(dlogprobs, (np.arange(T)[:, None], ext[None, :]), occ)
    return float(-total), -dlogprobs


def seq_ce_loss(encoded, target, params, dec_cfg, grads=None, prefix="dec"):
    """Teacher-forced sequence cross entropy (EOS appended internally).

    Returns (loss, dencoded); decoder parameter grads accumulate into
    `grads` when given.
    """
    target = list(target)
    if len(target) == 0:
        raise LabelError("empty target sequence")
    if any(t < 0 or t >= dec_cfg.vocab_size for t in target):
        raise LabelError("token id outside vocabulary")
    logprob_rows, caches = decoder_forward(encoded, target, params, dec_cfg, prefix)
    targets_out = target + [dec_cfg.eos_id]
    idx = np.arange(len(targets_out))
    loss = -float(np.sum(logprob_rows[idx, targets_out]))
    if grads is None:
        return loss, None
    dlogits = np.exp(logprob_rows)
    dlogits[idx, targets_out] -= 1.0
    dencoded = decoder_backward(dlogits, caches, encoded, params, dec_cfg, grads, prefix)
    return loss, dencoded


def multitask_loss(items):
    """Unweighted sum of per-utterance losses from a tagged mini-batch.

    items: list of {"tag": str, "loss": float, "grads": ParamSet or None}.
    Parameters are shared across sources, so contributions simply add.
    """
    if not items:
        raise BatchError("empty batch")
    total = 0.0
    combined = None
    for item in items:
        if not item.get("tag"):
            raise BatchError("untagged utterance in batch")
        total += item["loss"]
        g = item.get("grads")
        if g is not None:
            if combined is None:
                combined = g.zeros_like()
            combined.add_(g)
    return total, combined
