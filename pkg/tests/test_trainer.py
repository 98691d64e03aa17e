"""Three-phase training driver, item building, evaluation, reports."""

import glob
import os

import numpy as np
import pytest

from semisup_asr.corpus import CorpusSpec, generate_utterances, AugmentPolicy
from semisup_asr.models import ModelConfig, ModelBundle, init_model, save_model, load_model
from semisup_asr.trainer import (
    PlanError,
    PhaseSpec,
    TrainMainSpec,
    default_plan,
    build_items,
    distill_items,
    run_three_phase,
    evaluate,
)
from semisup_asr.losses import SparsePosterior
from semisup_asr.decode import DecodeConfig
from semisup_asr.vocab import Vocab
from semisup_asr.nn.checkpoint import load_checkpoint
from semisup_asr import report as report_mod


VOCAB = Vocab(6)
SPEC = CorpusSpec(num_utts=10, vocab_size=6, feature_dim=8, token_len_range=(4, 7),
                  noise_sigma=0.2)


def small_model(kind="ctc", seed=0):
    cfg = ModelConfig(kind=kind, vocab_size=6, feature_dim=8, enc_hidden=6,
                      dec_embed=4, dec_hidden=6)
    return ModelBundle(cfg, init_model(cfg, seed))


def small_plan(**kw):
    args = dict(burn_in=3, train_main=6, fine_tune=2, lr=1e-3, ft_lr=1e-4,
                batch_size=4, ckpt_every=2, avg_last=2)
    args.update(kw)
    return default_plan(**args)


# ----------------------------------------------------------------------- plan

def test_plan_validation():
    with pytest.raises(PlanError):
        PhaseSpec(steps=-1, lr=1e-3)
    with pytest.raises(PlanError):
        PhaseSpec(steps=5, lr=0.0)
    with pytest.raises(PlanError):
        TrainMainSpec(steps=5, lr=1e-3, avg_last=0)
    with pytest.raises(PlanError):
        TrainMainSpec(steps=5, lr=1e-3, ckpt_every=0)


# ---------------------------------------------------------------- build items

def test_build_items_per_kind():
    utts = generate_utterances(SPEC, seed=0)
    for kind in ("ctc", "encdec", "frame"):
        cfg = small_model(kind).cfg
        items, skipped = build_items(utts, cfg, VOCAB, "supervised")
        assert len(items) + skipped == len(utts)
        for item, utt in zip(items, utts[:len(items)]):
            if kind == "frame":
                out_len = -(-utt.features.num_frames // cfg.subsample_factor)
                assert len(item.target) == out_len
            else:
                assert list(item.target) == VOCAB.encode(utt.transcript)


def test_build_items_skips_ctc_infeasible():
    utts = generate_utterances(SPEC, seed=1)
    # long transcript in few frames: make every utterance infeasible
    for utt in utts:
        utt.features.frames = utt.features.frames[:2]
    items, skipped = build_items(utts, small_model("ctc").cfg, VOCAB, "supervised")
    assert items == [] and skipped == len(utts)


def test_build_items_metadata_source_and_missing_targets():
    utts = generate_utterances(
        CorpusSpec(num_utts=4, vocab_size=6, feature_dim=8, kind="weak",
                   metadata_noise=0.5), seed=2)
    cfg = small_model("encdec").cfg
    items, skipped = build_items(utts, cfg, VOCAB, "weak", target_source="metadata")
    assert len(items) == 4 and skipped == 0
    # same utterances have no transcript: everything is skipped
    items, skipped = build_items(utts, cfg, VOCAB, "weak")
    assert items == [] and skipped == 4


def test_distill_items_pairs_by_utt_id():
    utts = generate_utterances(SPEC, seed=3)[:3]
    posteriors = [
        SparsePosterior(utt.utt_id, [[(0, 1.0)]], k=1) for utt in utts[:2]
    ]
    items = distill_items(utts, posteriors)
    assert [i.utt_id for i in items] == [u.utt_id for u in utts[:2]]
    assert all(i.teacher is not None for i in items)


# ------------------------------------------------------------------- training

def test_run_three_phase_structure(tmp_path):
    utts = generate_utterances(SPEC, seed=4)
    bundle = small_model("ctc")
    items, _ = build_items(utts, bundle.cfg, VOCAB, "supervised")
    plan = small_plan()
    bundle, report = run_three_phase(bundle, plan, {"supervised": items}, seed=0,
                                     work_dir=str(tmp_path))
    assert bundle.phase == "fine_tune"
    assert bundle.step == 3 + 6 + 2
    assert set(report.loss_curves) == {"burn_in", "train_main", "fine_tune"}
    assert report.notes["averaged_checkpoints"] == 2
    # checkpoints written during train-main at the configured cadence
    paths = sorted(glob.glob(str(tmp_path / "ckpt_*.bin")))
    assert len(paths) == 3  # steps 2, 4, 6 within train-main
    assert load_checkpoint(paths[0]).phase == "train_main"


def test_run_three_phase_deterministic():
    utts = generate_utterances(SPEC, seed=5)

    def run():
        bundle = small_model("frame", seed=1)
        items, _ = build_items(utts, bundle.cfg, VOCAB, "supervised")
        bundle, _ = run_three_phase(bundle, small_plan(), {"supervised": items}, seed=9)
        return bundle.params

    a, b = run(), run()
    for name in a.names():
        assert np.array_equal(a[name], b[name])


def test_run_three_phase_mix_sources():
    utts = generate_utterances(SPEC, seed=6)
    bundle = small_model("encdec")
    items, _ = build_items(utts, bundle.cfg, VOCAB, "supervised")
    other = [i for i in items[:4]]
    plan = small_plan()
    plan.train_main.mix = {"supervised": 0.5, "selflabel": 0.5}
    bundle, report = run_three_phase(
        bundle, plan, {"supervised": items, "selflabel": other}, seed=0)
    assert bundle.step == 11


def test_training_reduces_loss():
    utts = generate_utterances(SPEC, seed=7)
    bundle = small_model("frame")
    items, _ = build_items(utts, bundle.cfg, VOCAB, "supervised")
    plan = small_plan(burn_in=10, train_main=60, fine_tune=5, lr=3e-3, ft_lr=3e-4)
    bundle, report = run_three_phase(bundle, plan, {"supervised": items}, seed=0,
                                     log_every=1)
    curve = report.loss_curves["train_main"]
    assert curve[-1][1] < curve[0][1]


# ----------------------------------------------------------------- evaluation

def test_evaluate_table_shape():
    utts = generate_utterances(SPEC, seed=8)
    bundle = small_model("ctc")
    table = evaluate(bundle, {"dev": utts[:4]}, VOCAB, DecodeConfig(beam=2))
    row = table["dev"]
    assert set(row) == {"wer", "subs", "ins", "dels", "num_utts", "skipped"}
    assert row["num_utts"] == 4
    assert row["wer"] >= 0.0


def test_evaluate_skips_unlabeled():
    utts = generate_utterances(SPEC, seed=9)[:3]
    utts[0].transcript = None
    table = evaluate(small_model("ctc"), {"dev": utts}, VOCAB, DecodeConfig(beam=1))
    assert table["dev"]["num_utts"] == 2
    assert table["dev"]["skipped"] == 1


# -------------------------------------------------------------- model save/load

def test_model_save_load_roundtrip(tmp_path):
    bundle = small_model("encdec")
    bundle.step = 77
    bundle.phase = "train_main"
    path = str(tmp_path / "model.bin")
    save_model(bundle, path)
    back = load_model(path)
    assert back.cfg == bundle.cfg
    assert back.step == 77 and back.phase == "train_main"
    for name in bundle.params.names():
        assert np.array_equal(back.params[name], bundle.params[name])


# -------------------------------------------------------------------- reports

def test_write_experiment_report_outputs(tmp_path):
    from semisup_asr.trainer import ExperimentReport

    report = ExperimentReport(config={"x": 1}, seed=3)
    report.loss_curves = {"burn_in": [(1, 2.0), (2, 1.5)], "train_main": [(1, 1.0)]}
    report.wers = {"clean": {"wer": 0.1, "subs": 1, "ins": 0, "dels": 2, "num_utts": 5}}
    paths = report_mod.write_experiment_report(str(tmp_path), "demo", report)
    for key in ("loss_csv", "loss_png", "wer_csv", "wer_png", "summary"):
        assert os.path.exists(paths[key])
    with open(paths["wer_csv"]) as f:
        lines = f.read().strip().splitlines()
    assert lines[0] == "set,wer,subs,ins,dels"
    assert lines[1].startswith("clean,0.1000,1,0,2")
