"""Three-phase training orchestration (burn-in / train-main / fine-tune).

All regimes share this driver: supervised, self-labeled, frame
distillation, and weak supervision only differ in the training items
and the train-main source mix. Checkpoints saved during train-main are
averaged to initialize fine-tune.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import FeatureSequence, mask_time_freq
from .models import utterance_loss, subsampled_frame_labels
from .nn.adam import AdamState, adam_step, clip_gradients
from .nn.checkpoint import Checkpoint, average_checkpoints, save_checkpoint
from .losses import FeasibilityError, ctc_feasible
from .decode import DecodeConfig, decode_utterance, word_error_rate, ScoringError
from .weaksup import MixSpec, mixed_batch_sampler


class PlanError(Exception):
    pass


class DivergenceError(Exception):
    pass


@dataclass
class PhaseSpec:
    steps: int
    lr: float

    def __post_init__(self):
        if self.steps < 0 or self.lr <= 0:
            raise PlanError("steps must be >= 0 and lr > 0")


@dataclass
class TrainMainSpec(PhaseSpec):
    mix: dict = field(default_factory=lambda: {"supervised": 1.0})
    ckpt_every: int = 200
    avg_last: int = 5

    def __post_init__(self):
        super().__post_init__()
        if self.avg_last < 1 or self.ckpt_every < 1:
            raise PlanError("avg_last and ckpt_every must be >= 1")


@dataclass
class PhasePlan:
    burn_in: PhaseSpec
    train_main: TrainMainSpec
    fine_tune: PhaseSpec
    batch_size: int = 16
    reset_optimizer: bool = True
    clip_norm: float = 10.0


def default_plan(burn_in=200, train_main=600, fine_tune=100, lr=4e-4, ft_lr=4e-5,
                 batch_size=16, ckpt_every=100, avg_last=5, mix=None):
    return PhasePlan(
        burn_in=PhaseSpec(burn_in, lr),
        train_main=TrainMainSpec(train_main, lr, mix=mix or {"supervised": 1.0},
                                 ckpt_every=ckpt_every, avg_last=avg_last),
        fine_tune=PhaseSpec(fine_tune, ft_lr),
        batch_size=batch_size,
    )


@dataclass
class TrainItem:
    features: FeatureSequence
    target: object  # tokens (ctc/encdec) or frame labels (frame kind)
    tag: str
    teacher: object = None  # SparsePosterior / Posteriorgram for distillation

    @property
    def utt_id(self):
        return self.features.utt_id


def build_items(utts, model_cfg, vocab, tag, target_source="transcript"):
    """Turn utterances into trainable items for a model kind.

    Returns (items, skipped) where skipped counts utterances without a
    usable target (or CTC-infeasible ones).
    """
    items = []
    skipped = 0
    sub = model_cfg.subsample_factor
    for utt in utts:
        text = utt.metadata if target_source == "metadata" else utt.transcript
        if text is None or not text.strip():
            skipped += 1
            continue
        tokens = vocab.encode(text)
        if model_cfg.kind == "frame":
            if utt.token_frames is None:
                skipped += 1
                continue
            target = subsampled_frame_labels(tokens, utt.token_frames, sub)
        elif model_cfg.kind == "ctc":
            out_len = -(-utt.features.num_frames // sub)
            if not ctc_feasible(out_len, tokens):
                skipped += 1
                continue
            target = tokens
        else:
            target = tokens
        items.append(TrainItem(features=utt.features, target=target, tag=tag))
    return items, skipped


def distill_items(utts, posteriors, tag="distill"):
    """Items that train against teacher posteriors instead of labels."""
    by_id = {p.utt_id: p for p in posteriors}
    items = []
    for utt in utts:
        post = by_id.get(utt.utt_id)
        if post is None:
            continue
        items.append(TrainItem(features=utt.features, target=None, tag=tag, teacher=post))
    return items


@dataclass
class ExperimentReport:
    config: dict
    seed: int
    loss_curves: dict = field(default_factory=dict)  # phase -> [(step, loss)]
    wers: dict = field(default_factory=dict)  # test set -> metrics
    wall_clock_s: float = 0.0
    notes: dict = field(default_factory=dict)


def _batch_step(bundle, batch, state, lr, clip_norm, mask_policy, mask_seed):
    grads = bundle.params.zeros_like()
    total = 0.0
    used = 0
    for i, item in enumerate(batch):
        feats = item.features
        if mask_policy is not None:
            feats = mask_time_freq(feats, mask_policy, [mask_seed, i])
        try:
            loss = utterance_loss(bundle, feats.frames, item.target, grads, teacher=item.teacher)
        except FeasibilityError:
            continue
        total += loss
        used += 1
    if used == 0:
        return None
    clip_gradients(grads, clip_norm, used)
    adam_step(bundle.params, grads, state, lr)
    return total / used


def run_three_phase(bundle, plan, sources, seed, mask_policy=None, work_dir=None,
                    log_every=10, verbose=False):
    """Run burn-in -> train-main -> fine-tune; returns (bundle, report).

    sources: dict tag -> list[TrainItem]; burn-in and fine-tune use the
    "supervised" source only, train-main follows plan.train_main.mix.
    """
    t0 = time.time()
    report = ExperimentReport(config={"plan": asdict(plan)}, seed=seed)
    phases = [
        ("burn_in", plan.burn_in, {"supervised": 1.0}),
        ("train_main", plan.train_main, plan.train_main.mix),
        ("fine_tune", plan.fine_tune, {"supervised": 1.0}),
    ]
    state = AdamState(bundle.params)
    step_total = bundle.step
    for phase_idx, (phase, spec, mix) in enumerate(phases):
        bundle.phase = phase
        if plan.reset_optimizer:
            state = AdamState(bundle.params)
        curve = []
        saved = []
        if spec.steps > 0:
            sampler = mixed_batch_sampler(
                sources, MixSpec(mix), plan.batch_size, [seed, phase_idx]
            )
            for step in range(1, spec.steps + 1):
                tag, batch = next(sampler)
                loss = _batch_step(
                    bundle, batch, state, spec.lr, plan.clip_norm,
                    mask_policy, [seed, phase_idx, step],
                )
                step_total += 1
                if loss is not None and not np.isfinite(loss):
                    report.notes["diverged_at"] = (phase, step)
                    report.loss_curves[phase] = curve
                    raise DivergenceError("non-finite loss in %s at step %d" % (phase, step))
                if loss is not None and (step % log_every == 0 or step == spec.steps):
                    curve.append((step, loss))
                    if verbose:
                        print("[%s] step %d loss %.4f (%s)" % (phase, step, loss, tag))
                if phase == "train_main" and step % spec.ckpt_every == 0:
                    ckpt = Checkpoint(bundle.params.copy(), step_total, phase)
                    saved.append(ckpt)
                    if work_dir is not None:
                        save_checkpoint(ckpt, "%s/ckpt_%06d.bin" % (work_dir, step_total))
        report.loss_curves[phase] = curve
        if phase == "train_main":
            if not saved:
                saved = [Checkpoint(bundle.params.copy(), step_total, phase)]
            averaged = average_checkpoints(saved, spec.avg_last)
            bundle.params = averaged.params
            report.notes["averaged_checkpoints"] = min(spec.avg_last, len(saved))
    bundle.step = step_total
    report.wall_clock_s = time.time() - t0
    return bundle, report


def evaluate(bundle, test_sets, vocab, decode_cfg=None):
    """Corpus WER per test set; skips utterances without transcripts."""
    decode_cfg = decode_cfg or DecodeConfig()
    table = {}
    for name, utts in test_sets.items():
        errors = subs = ins = dels = ref_len = 0
        scored = skipped = 0
        for utt in utts:
            if utt.transcript is None:
                skipped += 1
                continue
            hyp = decode_utterance(bundle, utt.features.frames, decode_cfg)[0]
            hyp_words = vocab.decode(hyp.tokens).split()
            ref_words = utt.transcript.split()
            try:
                m = word_error_rate(ref_words, hyp_words)
            except ScoringError:
                skipped += 1
                continue
            subs += m["subs"]
            ins += m["ins"]
            dels += m["dels"]
            ref_len += len(ref_words)
            scored += 1
        errors = subs + ins + dels
        table[name] = {
            "wer": errors / ref_len if ref_len else 0.0,
            "subs": subs,
            "ins": ins,
            "dels": dels,
            "num_utts": scored,
            "skipped": skipped,
        }
    return table
