"""End-to-end experiment recipes on the synthetic difficulty ladder.

The ladder: supervised data at a mild noise level, test sets clean <
noisy < extreme, and an unlabeled pool spanning the range. Recipes here
back both the `run-experiment` CLI subcommand and the acceptance suite.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusSpec, AugmentPolicy, generate_utterances, expand_with_augmentation
from .vocab import Vocab
from .models import ModelBundle, ModelConfig, init_model
from .decode import DecodeConfig, train_ngram
from .trainer import default_plan, run_three_phase, evaluate, build_items
from .distill import generate_selflabels, extract_teacher_posteriors, IterationPlan, run_iterative_distillation
from .weaksup import MixSpec, filter_metadata


@dataclass
class WorldConfig:
    num_supervised: int = 200
    num_unlabeled: int = 600
    num_weak: int = 200
    num_test: int = 60
    vocab_size: int = 9
    feature_dim: int = 16
    train_sigma: float = 0.35
    test_sigmas: dict = field(default_factory=lambda: {"clean": 0.25, "noisy": 0.55, "extreme": 0.8})
    unlabeled_sigmas: tuple = (0.3, 0.5, 0.7)
    metadata_noise: float = 0.6
    token_len_range: tuple = (6, 16)
    frames_per_token_range: tuple = (2, 4)
    seed: int = 0
    augment: bool = True


@dataclass
class World:
    cfg: WorldConfig
    vocab: Vocab
    supervised: list  # augmented supervised training utterances
    supervised_raw: list
    unlabeled: list
    weak: list
    test_sets: dict


def _spec(cfg, num, sigma, kind, metadata_noise=0.0):
    return CorpusSpec(
        num_utts=num,
        vocab_size=cfg.vocab_size,
        token_len_range=cfg.token_len_range,
        frames_per_token_range=cfg.frames_per_token_range,
        noise_sigma=sigma,
        metadata_noise=metadata_noise,
        feature_dim=cfg.feature_dim,
        kind=kind,
    )


def make_world(cfg):
    vocab = Vocab(cfg.vocab_size)
    sup = generate_utterances(_spec(cfg, cfg.num_supervised, cfg.train_sigma, "supervised"),
                              [cfg.seed, 1], id_prefix="sup")
    unl = []
    per = cfg.num_unlabeled // len(cfg.unlabeled_sigmas)
    for i, sigma in enumerate(cfg.unlabeled_sigmas):
        n = per if i < len(cfg.unlabeled_sigmas) - 1 else cfg.num_unlabeled - per * (len(cfg.unlabeled_sigmas) - 1)
        unl += generate_utterances(_spec(cfg, n, sigma, "unlabeled"),
                                   [cfg.seed, 2, i], id_prefix="unl%d_" % i)
    weak = generate_utterances(
        _spec(cfg, cfg.num_weak, cfg.unlabeled_sigmas[1], "weak", cfg.metadata_noise),
        [cfg.seed, 3], id_prefix="weak")
    tests = {}
    for i, (name, sigma) in enumerate(sorted(cfg.test_sigmas.items())):
        tests[name] = generate_utterances(_spec(cfg, cfg.num_test, sigma, "supervised"),
                                          [cfg.seed, 4, i], id_prefix="test_%s_" % name)
    if cfg.augment:
        sup_aug = expand_with_augmentation(sup, AugmentPolicy(), [cfg.seed, 5])
    else:
        sup_aug = list(sup)
    return World(cfg=cfg, vocab=vocab, supervised=sup_aug, supervised_raw=sup,
                 unlabeled=unl, weak=weak, test_sets=tests)


def model_config(world, kind, hidden=24):
    return ModelConfig(
        kind=kind,
        vocab_size=world.vocab.size,
        feature_dim=world.cfg.feature_dim,
        enc_layers=2,
        enc_hidden=hidden,
        dec_embed=12,
        dec_hidden=hidden,
    )


def decode_config(world, kind, beam=None, with_lm=False):
    lm = None
    lm_weight = 0.0
    if with_lm and kind == "ctc":
        transcripts = [world.vocab.encode(u.transcript) for u in world.supervised_raw
                       if u.transcript]
        lm = train_ngram(transcripts, order=5, vocab_size=world.vocab.size)
        lm_weight = 0.5
    if beam is None:
        beam = 20 if kind == "encdec" else 8
    max_len = int(world.cfg.token_len_range[1] * 1.8) + 4
    return DecodeConfig(beam=beam, lm=lm, lm_weight=lm_weight, max_len=max_len)


def train_supervised(world, kind, plan=None, hidden=24, seed=0, mask_policy=None):
    cfg = model_config(world, kind, hidden)
    bundle = ModelBundle(cfg, init_model(cfg, [seed, 11]))
    items, _ = build_items(world.supervised, cfg, world.vocab, "supervised")
    plan = plan or default_plan()
    sources = {"supervised": items}
    bundle, report = run_three_phase(bundle, plan, sources, [seed, 12],
                                     mask_policy=mask_policy)
    return bundle, report


def selflabel_experiment(world, kind, plan_baseline=None, plan_student=None,
                         seed=0, sl_share=0.7, label_beam=4, eval_cfg=None,
                         labeler=None, labeled=None):
    """Sequence-level self-labeling: baseline teacher -> top-1 labels ->
    student trained on supervised + self-labeled mix. Returns both WER
    tables and the relative change on each test set.

    By default the baseline labels the pool itself. Passing `labeler` (a
    trained bundle, typically the strongest available baseline decoded
    with LM fusion) or `labeled` (an already self-labeled manifest)
    decouples label generation from the student's model family: the
    supervised baseline of the strongest system generates the labels
    that every student trains on.
    """
    baseline, base_report = train_supervised(world, kind, plan_baseline, seed=seed)
    eval_cfg = eval_cfg or decode_config(world, kind)
    base_wers = evaluate(baseline, world.test_sets, world.vocab, eval_cfg)

    if labeled is not None:
        label_stats = {"labeled": len(labeled), "dropped_empty": 0,
                       "dropped_low_score": 0, "failed": 0}
    else:
        teacher = labeler if labeler is not None else baseline
        label_cfg = decode_config(world, teacher.cfg.kind, beam=label_beam,
                                  with_lm=(teacher.cfg.kind == "ctc"))
        labeled, label_stats = generate_selflabels(world.unlabeled, teacher, label_cfg, world.vocab)

    cfg = baseline.cfg
    student = ModelBundle(cfg, init_model(cfg, [seed, 21]))
    sup_items, _ = build_items(world.supervised, cfg, world.vocab, "supervised")
    sl_items, sl_skipped = build_items(labeled, cfg, world.vocab, "selflabel")
    plan = plan_student or default_plan()
    plan.train_main.mix = {"supervised": 1.0 - sl_share, "selflabel": sl_share}
    sources = {"supervised": sup_items, "selflabel": sl_items}
    student, student_report = run_three_phase(student, plan, sources, [seed, 22])
    student_wers = evaluate(student, world.test_sets, world.vocab, eval_cfg)

    rel = {
        name: 1.0 - student_wers[name]["wer"] / base_wers[name]["wer"]
        if base_wers[name]["wer"] > 0 else 0.0
        for name in base_wers
    }
    return {
        "kind": kind,
        "baseline": baseline,
        "student": student,
        "baseline_wers": base_wers,
        "student_wers": student_wers,
        "relative_improvement": rel,
        "labeled": labeled,
        "label_stats": {**label_stats, "ctc_infeasible": sl_skipped},
        "reports": {"baseline": base_report, "student": student_report},
    }


def weak_videos(world, baseline, label_cfg):
    """Treat each weak utterance as a one-segment video with baseline hyps."""
    labeled, _ = generate_selflabels(world.weak, baseline, label_cfg, world.vocab)
    hyp_by_id = {u.utt_id: u.transcript for u in labeled}
    videos = []
    for utt in world.weak:
        videos.append({
            "video_id": utt.utt_id,
            "metadata": utt.metadata,
            "segments": [utt],
            "baseline_hyps": [hyp_by_id.get(utt.utt_id, "")],
        })
    return videos


def weaksup_experiment(world, plan_factory=None, seed=0, sl_share=0.7,
                       ws_share=0.5, combo_sl=0.7, label_beam=4, labeler=None,
                       min_overlap_frac=0.0):
    """Table-3 style comparison: SL vs WS vs the 0.7 SL + 0.3 WS combination.

    All systems are encoder-decoder with the same budgets; returns WER
    tables keyed by system name. Self-labels come from `labeler` (e.g. a
    CTC baseline decoded with LM fusion) when given, otherwise from the
    encoder-decoder baseline itself.
    """
    plan_factory = plan_factory or default_plan
    kind = "encdec"
    baseline, _ = train_supervised(world, kind, plan_factory(), seed=seed)
    eval_cfg = decode_config(world, kind)
    label_cfg = decode_config(world, kind, beam=label_beam)

    teacher = labeler if labeler is not None else baseline
    teacher_cfg = decode_config(world, teacher.cfg.kind, beam=label_beam,
                                with_lm=(teacher.cfg.kind == "ctc"))
    labeled, _ = generate_selflabels(world.unlabeled, teacher, teacher_cfg, world.vocab)
    videos = weak_videos(world, baseline, label_cfg)
    pairs, filter_stats = filter_metadata(videos, vocab=world.vocab,
                                          min_overlap_frac=min_overlap_frac)
    weak_utts = []
    for pair in pairs:
        seg = pair.segment
        weak_utts.append(type(seg)(features=seg.features, metadata=seg.metadata))

    cfg = baseline.cfg
    sup_items, _ = build_items(world.supervised, cfg, world.vocab, "supervised")
    sl_items, _ = build_items(labeled, cfg, world.vocab, "selflabel")
    ws_items, _ = build_items(weak_utts, cfg, world.vocab, "weak", target_source="metadata")

    def run(name, mix, sources):
        bundle = ModelBundle(cfg, init_model(cfg, [seed, 31]))
        plan = plan_factory()
        plan.train_main.mix = mix
        bundle, _ = run_three_phase(bundle, plan, sources, [seed, 32])
        return evaluate(bundle, world.test_sets, world.vocab, eval_cfg)

    results = {
        "baseline": evaluate(baseline, world.test_sets, world.vocab, eval_cfg),
        "selflabel": run("selflabel", {"supervised": 1 - sl_share, "selflabel": sl_share},
                         {"supervised": sup_items, "selflabel": sl_items}),
        "weaksup": run("weaksup", {"supervised": 1 - ws_share, "weak": ws_share},
                       {"supervised": sup_items, "weak": ws_items}),
        "combo": run(
            "combo",
            {"supervised": 1 - sl_share,
             "selflabel": sl_share * combo_sl,
             "weak": sl_share * (1 - combo_sl)},
            {"supervised": sup_items, "selflabel": sl_items, "weak": ws_items},
        ),
    }
    return {"wers": results, "filter_stats": filter_stats}


def iterative_experiment(world, seed=0, hidden_sizes=(24, 32, 40), plan_factory=None,
                         top_k=3):
    """Iterative frame-level distillation with growing frame classifiers."""
    plan_factory = plan_factory or (lambda r: default_plan())
    teacher, _ = train_supervised(world, "frame", plan_factory(0), hidden=hidden_sizes[0],
                                  seed=seed)
    eval_cfg = DecodeConfig(beam=1)
    teacher_wers = evaluate(teacher, world.test_sets, world.vocab, eval_cfg)
    plan = IterationPlan(rounds=[model_config(world, "frame", h) for h in hidden_sizes[1:]])
    reports = run_iterative_distillation(
        plan, teacher, world.supervised, world.unlabeled, world.test_sets, world.vocab,
        lambda r: plan_factory(r + 1), top_k=top_k, seed=seed, decode_cfg=eval_cfg,
    )
    return {"teacher_wers": teacher_wers, "rounds": reports}


def topk_coverage(world, ctc_teacher, top_k=3, max_utts=200):
    """Mean kept probability mass of top-k sparsification on the corpus."""
    covs = []
    for utt in world.unlabeled[:max_utts]:
        _, cov = extract_teacher_posteriors(utt, ctc_teacher, top_k)
        covs.append(cov)
    return float(np.mean(covs))
