"""Self-labeling machinery: segmentation, teacher posterior extraction,
top-1 self-labels, and the iterative distillation driver.

Teacher posteriors are produced at the teacher's post-subsampling frame
rate; students must use the same subsample factor so no realignment is
needed.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import FeatureSequence, Utterance
from .models import ModelBundle, frame_logprobs, init_model
from .losses import SparsePosterior
from .decode import DecodeConfig, decode_utterance
from .vocab import SPACE_ID


class SegmentationError(Exception):
    pass


class IterationError(Exception):
    def __init__(self, message, partial_reports):
        super().__init__(message)
        self.partial_reports = partial_reports


@dataclass
class SegmentationResult:
    parent_utt_id: str
    segments: list  # of {"start_frame", "end_frame", "utt_id"}


@dataclass
class IterationPlan:
    rounds: list  # of ModelConfig (round r's teacher = round r-1's student)

    def __post_init__(self):
        if not self.rounds:
            raise ValueError("iteration plan needs at least one round")


def _greedy_labels(bundle, frames):
    """Per-output-frame argmax labels under a frame-level teacher."""
    if bundle.cfg.kind == "encdec":
        raise SegmentationError("segmentation teacher must have a frame-level head")
    logp = frame_logprobs(bundle, frames)
    return np.argmax(logp, axis=1)


def segment_unlabeled(utterance, teacher, max_seconds, nonspeech_run=30):
    """Cut an utterance into speech chunks of at most max_seconds.

    Output frames whose greedy teacher label is blank or the space class
    and that sit in a run of at least `nonspeech_run` input frames are
    non-speech; remaining speech runs are cut at hypothesized token
    boundaries, hard-cutting only when one token run exceeds the limit.
    """
    if max_seconds <= 0:
        raise SegmentationError("max_seconds must be positive")
    feats = utterance.features
    sub = teacher.cfg.subsample_factor
    labels = _greedy_labels(teacher, feats.frames)
    silence_ids = {SPACE_ID}
    if teacher.cfg.kind == "ctc":
        silence_ids.add(teacher.cfg.blank_id)

    T = feats.num_frames
    max_frames = max(1, int(max_seconds * 1000.0 / feats.frame_shift_ms))

    # token runs over output frames -> spans over input frames
    runs = []  # (label, start_in, end_in)
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((int(labels[start]), start * sub, min(i * sub, T)))
            start = i

    segments = []

    def close(chunk_start, chunk_end):
        if chunk_end > chunk_start:
            segments.append(
                {
                    "start_frame": chunk_start,
                    "end_frame": chunk_end,
                    "utt_id": "%s~%03d" % (utterance.utt_id, len(segments)),
                }
            )

    chunk_start = None
    chunk_end = None
    for label, s, e in runs:
        nonspeech = label in silence_ids and (e - s) >= nonspeech_run
        if nonspeech:
            if chunk_start is not None:
                close(chunk_start, chunk_end)
                chunk_start = None
            continue
        if chunk_start is None:
            chunk_start, chunk_end = s, s
        if (e - chunk_start) <= max_frames:
            chunk_end = e
            continue
        # token run does not fit: close at this token boundary
        close(chunk_start, chunk_end)
        chunk_start, chunk_end = s, s
        while (e - chunk_start) > max_frames:  # single oversized token run
            close(chunk_start, chunk_start + max_frames)
            chunk_start += max_frames
            chunk_end = chunk_start
        chunk_end = e
    if chunk_start is not None:
        close(chunk_start, chunk_end)
    return SegmentationResult(parent_utt_id=utterance.utt_id, segments=segments)


def slice_segments(utterance, result):
    """Materialize segment Utterances from a SegmentationResult."""
    out = []
    for seg in result.segments:
        frames = utterance.features.frames[seg["start_frame"]:seg["end_frame"]]
        feats = FeatureSequence(seg["utt_id"], frames, utterance.features.frame_shift_ms)
        out.append(Utterance(features=feats))
    return out


def segment_corpus(utts, teacher, max_seconds, nonspeech_run=30):
    segments = []
    for utt in utts:
        result = segment_unlabeled(utt, teacher, max_seconds, nonspeech_run)
        segments.extend(slice_segments(utt, result))
    return segments


def extract_teacher_posteriors(utterance, teacher, top_k):
    """Top-k sparsified teacher posteriors plus kept-mass coverage.

    Coverage is the mean over frames of the kept probability mass before
    any renormalization.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    logp = frame_logprobs(teacher, utterance.features.frames)
    probs = np.exp(logp)
    frames = []
    kept_mass = []
    for row in probs:
        order = np.argsort(-row, kind="stable")[:top_k]
        frames.append([(int(c), float(row[c])) for c in order])
        kept_mass.append(float(row[order].sum()))
    sparse = SparsePosterior(utt_id=utterance.utt_id, frames=frames, k=top_k)
    return sparse, float(np.mean(kept_mass)) if kept_mass else 1.0


def generate_selflabels(segments, teacher, decode_cfg, vocab, min_score=None):
    """Attach the teacher's top-1 hypothesis as each segment's transcript.

    CTC teachers use whatever LM fusion decode_cfg carries; enc-dec
    decoding never fuses an LM. Segments with empty hypotheses (or below
    min_score, when set) are dropped and counted.
    """
    labeled = []
    stats = {"labeled": 0, "dropped_empty": 0, "dropped_low_score": 0, "failed": 0}
    for seg in segments:
        try:
            hyp = decode_utterance(teacher, seg.features.frames, decode_cfg)[0]
        except Exception:
            stats["failed"] += 1
            continue
        text = " ".join(vocab.decode(hyp.tokens).split())
        if not text:
            stats["dropped_empty"] += 1
            continue
        if min_score is not None and hyp.score < min_score:
            stats["dropped_low_score"] += 1
            continue
        labeled.append(
            Utterance(features=seg.features, transcript=text, metadata=seg.metadata)
        )
        stats["labeled"] += 1
    return labeled, stats


def run_iterative_distillation(plan, baseline_teacher, supervised_utts, unlabeled_utts,
                               test_sets, vocab, train_plan_factory, top_k=3,
                               seed=0, decode_cfg=None, distill_share=0.7,
                               pool_schedule="grow"):
    """Frame-level distillation rounds with progressively larger students.

    Per round: extract top-k teacher posteriors on the unlabeled set,
    train that round's student on a supervised/distillation train-main
    mix (supervised-only burn-in and fine-tune), evaluate WER
    everywhere, then promote the student to teacher. Keeping ground
    truth in the mix lets a student improve past its teacher instead of
    merely converging to it.

    pool_schedule controls how the unlabeled pool is spent:
      - "grow": round r labels the first (r+1)/R fraction, so every
        round adds data its teacher has never trained on (iterative
        self-training with progressively more data);
      - "split": disjoint slice per round;
      - "full": every round labels everything.
    Any round failure raises IterationError carrying the reports
    finished so far.
    """
    from .trainer import run_three_phase, evaluate, build_items, distill_items

    teacher = baseline_teacher
    reports = []
    prev_size = teacher.num_params()
    num_rounds = len(plan.rounds)
    for round_idx, student_cfg in enumerate(plan.rounds):
        try:
            if student_cfg.subsample_factor != teacher.cfg.subsample_factor:
                raise ValueError("student and teacher must share a subsample factor")
            share = len(unlabeled_utts) // num_rounds
            last = round_idx == num_rounds - 1
            if pool_schedule == "grow" and num_rounds > 1:
                pool = unlabeled_utts if last else unlabeled_utts[:(round_idx + 1) * share]
            elif pool_schedule == "split" and num_rounds > 1:
                lo = round_idx * share
                pool = unlabeled_utts[lo:] if last else unlabeled_utts[lo:lo + share]
            else:
                pool = unlabeled_utts
            posteriors = []
            coverages = []
            for utt in pool:
                sparse, cov = extract_teacher_posteriors(utt, teacher, top_k)
                posteriors.append(sparse)
                coverages.append(cov)
            student = ModelBundle(student_cfg, init_model(student_cfg, [seed, round_idx]))
            if student.num_params() < prev_size:
                raise ValueError("student parameter counts must be non-decreasing")
            prev_size = student.num_params()
            sup_items, _ = build_items(supervised_utts, student_cfg, vocab, "supervised")
            dist_items = distill_items(pool, posteriors)
            plan_cfg = train_plan_factory(round_idx)
            plan_cfg.train_main.mix = {"supervised": 1.0 - distill_share,
                                       "distill": distill_share}
            sources = {"supervised": sup_items, "distill": dist_items}
            student, train_report = run_three_phase(
                student, plan_cfg, sources, [seed, 100 + round_idx]
            )
            wers = evaluate(student, test_sets, vocab, decode_cfg)
            reports.append(
                {
                    "round": round_idx + 1,
                    "num_params": student.num_params(),
                    "mean_topk_coverage": float(np.mean(coverages)) if coverages else 1.0,
                    "wers": wers,
                    "train_report": train_report,
                }
            )
            teacher = student
        except Exception as exc:
            raise IterationError("round %d failed: %s" % (round_idx + 1, exc), reports) from exc
    return reports
