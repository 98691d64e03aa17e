"""Command line interface.

Subcommands: gen-data, train, label, filter-ws, decode, score, avg-ckpt,
run-experiment. Each reads an optional flat key=value config file
(dotted keys) plus --set overrides; the effective config is echoed for
reproducibility.
"""

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import corpus as corpus_mod
from .corpus import CorpusSpec, load_manifest, write_manifest, Utterance
from .vocab import Vocab
from .models import ModelBundle, ModelConfig, init_model, save_model, load_model
from .decode import DecodeConfig, decode_utterance, word_error_rate, train_ngram
from .trainer import default_plan, run_three_phase, evaluate, build_items
from .distill import segment_corpus, extract_teacher_posteriors, generate_selflabels
from .losses import save_sparse_posterior
from .weaksup import filter_metadata
from .nn.checkpoint import load_checkpoint, save_checkpoint, average_checkpoints
from . import report as report_mod


class ConfigError(Exception):
    pass


def parse_value(raw):
    raw = raw.strip()
    for caster in (int, float):
        try:
            return caster(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def read_config(path):
    cfg = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s line %d: expected key=value" % (path, lineno))
            key, value = line.split("=", 1)
            cfg[key.strip()] = parse_value(value)
    return cfg


def effective_config(args):
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError("--set expects key=value, got %r" % item)
        key, value = item.split("=", 1)
        cfg[key] = parse_value(value)
    return cfg


def echo_config(name, cfg):
    print("# %s config:" % name)
    for key in sorted(cfg):
        print("#   %s = %s" % (key, cfg[key]))


def plan_from_config(cfg):
    plan = default_plan(
        burn_in=cfg.get("burn_in.steps", 200),
        train_main=cfg.get("train_main.steps", 600),
        fine_tune=cfg.get("fine_tune.steps", 100),
        lr=cfg.get("burn_in.lr", 4e-4),
        ft_lr=cfg.get("fine_tune.lr", 4e-5),
        batch_size=cfg.get("batch_size", 16),
        ckpt_every=cfg.get("train_main.ckpt_every", 200),
        avg_last=cfg.get("train_main.avg_last", 5),
    )
    plan.train_main.lr = cfg.get("train_main.lr", plan.burn_in.lr)
    return plan


def read_hyp_file(path):
    """jsonl with utt_id plus one of hyp_text/transcript/text."""
    records = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            text = rec.get("hyp_text", rec.get("transcript", rec.get("text", "")))
            records[rec["utt_id"]] = text
    return records


# ---------------------------------------------------------------- subcommands

def cmd_gen_data(args):
    cfg = effective_config(args)
    spec = CorpusSpec(
        num_utts=args.num_utts,
        vocab_size=args.vocab_size,
        noise_sigma=args.noise_sigma,
        metadata_noise=args.metadata_noise,
        feature_dim=cfg.get("feature_dim", 16),
        kind=args.kind,
    )
    echo_config("gen-data", {**cfg, "num_utts": args.num_utts, "seed": args.seed,
                             "kind": args.kind})
    path = corpus_mod.generate_corpus(spec, args.seed, args.out_dir)
    print("wrote %s" % path)
    return 0


def cmd_train(args):
    cfg = effective_config(args)
    echo_config("train", cfg)
    utts = load_manifest(args.manifest)
    vocab = Vocab(cfg.get("vocab_size", 9))
    model_cfg = ModelConfig(
        kind=args.kind,
        vocab_size=vocab.size,
        feature_dim=utts[0].features.dim,
        enc_layers=cfg.get("enc_layers", 2),
        enc_hidden=cfg.get("enc_hidden", 24),
        dec_embed=cfg.get("dec_embed", 12),
        dec_hidden=cfg.get("dec_hidden", 24),
    )
    bundle = ModelBundle(model_cfg, init_model(model_cfg, args.seed))
    items, skipped = build_items(utts, model_cfg, vocab, "supervised")
    if not items:
        print("no trainable utterances in %s" % args.manifest, file=sys.stderr)
        return 1
    if skipped:
        print("# skipped %d utterances without usable targets" % skipped)
    plan = plan_from_config(cfg)
    bundle, report = run_three_phase(bundle, plan, {"supervised": items}, args.seed,
                                     verbose=cfg.get("verbose", False))
    save_model(bundle, args.out)
    print("saved model to %s (step %d)" % (args.out, bundle.step))
    if args.report_dir:
        report_mod.write_experiment_report(args.report_dir, "train", report)
    return 0


def cmd_label(args):
    cfg = effective_config(args)
    echo_config("label", cfg)
    teacher = load_model(args.teacher)
    utts = load_manifest(args.manifest)
    vocab = Vocab(cfg.get("vocab_size", 9))
    os.makedirs(args.out, exist_ok=True)
    if teacher.cfg.kind != "encdec":
        segments = segment_corpus(utts, teacher, args.max_seconds,
                                  nonspeech_run=cfg.get("nonspeech_run", 30))
    else:
        segments = utts
    if args.mode == "frame-topk":
        post_dir = os.path.join(args.out, "posteriors")
        os.makedirs(post_dir, exist_ok=True)
        coverages = []
        kept = []
        for seg in segments:
            sparse, cov = extract_teacher_posteriors(seg, teacher, args.top_k)
            save_sparse_posterior(sparse, os.path.join(post_dir, "%s.bin" % seg.utt_id.replace("#", "_")))
            coverages.append(cov)
            kept.append(seg)
        write_manifest(kept, os.path.join(args.out, "manifest.jsonl"), args.out)
        print("wrote %d posterior files; mean top-%d coverage %.4f"
              % (len(kept), args.top_k, float(np.mean(coverages)) if coverages else 1.0))
    else:
        lm = None
        lm_weight = 0.0
        if args.lm_manifest and teacher.cfg.kind == "ctc":
            lm_utts = load_manifest(args.lm_manifest)
            lm = train_ngram([vocab.encode(u.transcript) for u in lm_utts if u.transcript],
                             order=cfg.get("lm_order", 5), vocab_size=vocab.size)
            lm_weight = cfg.get("lm_weight", 0.5)
        dc = DecodeConfig(beam=cfg.get("beam", 8), lm=lm, lm_weight=lm_weight,
                          max_len=cfg.get("max_len", 48))
        labeled, stats = generate_selflabels(segments, teacher, dc, vocab)
        write_manifest(labeled, os.path.join(args.out, "manifest.jsonl"), args.out)
        print("self-labeled %d segments (%s)" % (len(labeled), stats))
    return 0


def cmd_filter_ws(args):
    cfg = effective_config(args)
    echo_config("filter-ws", cfg)
    utts = load_manifest(args.manifest)
    hyps = read_hyp_file(args.baseline_hyps)
    by_parent = {}
    for utt in utts:
        parent = utt.utt_id.split("~")[0]
        by_parent.setdefault(parent, []).append(utt)
    videos = []
    for parent, segments in sorted(by_parent.items()):
        videos.append({
            "video_id": parent,
            "metadata": next((u.metadata for u in segments if u.metadata), None),
            "segments": segments,
            "baseline_hyps": [hyps.get(u.utt_id, "") for u in segments],
        })
    pairs, stats = filter_metadata(videos, args.min_chars, args.max_chars)
    out_utts = []
    for pair in pairs:
        seg = pair.segment
        out_utts.append(Utterance(features=seg.features,
                                  metadata="".join(pair.metadata_tokens)
                                  if pair.metadata_tokens and isinstance(pair.metadata_tokens[0], str)
                                  else seg.metadata))
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(out_utts, args.out, out_dir)
    if args.stats:
        with open(args.stats, "w") as f:
            f.write("reason,count\n")
            for reason in sorted(stats):
                f.write("%s,%d\n" % (reason, stats[reason]))
    print("kept %d videos -> %d weak pairs (%s)" % (stats["kept"], len(pairs), stats))
    return 0


def cmd_decode(args):
    cfg = effective_config(args)
    echo_config("decode", cfg)
    bundle = load_model(args.model)
    utts = load_manifest(args.manifest)
    vocab = Vocab(cfg.get("vocab_size", 9))
    lm = None
    lm_weight = 0.0
    if args.lm_manifest and bundle.cfg.kind == "ctc":
        lm_utts = load_manifest(args.lm_manifest)
        lm = train_ngram([vocab.encode(u.transcript) for u in lm_utts if u.transcript],
                         order=cfg.get("lm_order", 5), vocab_size=vocab.size)
        lm_weight = args.lm_weight
    dc = DecodeConfig(beam=args.beam, lm=lm, lm_weight=lm_weight,
                      max_len=cfg.get("max_len", 48))
    with open(args.out, "w") as f:
        for utt in utts:
            hyp = decode_utterance(bundle, utt.features.frames, dc)[0]
            text = " ".join(vocab.decode(hyp.tokens).split())
            f.write(json.dumps({"utt_id": utt.utt_id, "hyp_text": text,
                                "score": hyp.score}) + "\n")
    print("decoded %d utterances -> %s" % (len(utts), args.out))
    return 0


def cmd_score(args):
    refs = read_hyp_file(args.ref)
    hyps = read_hyp_file(args.hyp)
    subs = ins = dels = ref_len = 0
    missing = 0
    for utt_id, ref_text in refs.items():
        ref_words = ref_text.split()
        if not ref_words:
            continue
        hyp_words = hyps.get(utt_id, "").split()
        if utt_id not in hyps:
            missing += 1
        m = word_error_rate(ref_words, hyp_words)
        subs += m["subs"]
        ins += m["ins"]
        dels += m["dels"]
        ref_len += len(ref_words)
    if ref_len == 0:
        print("no scorable reference words", file=sys.stderr)
        return 1
    wer = (subs + ins + dels) / ref_len
    table = {args.set_name: {"wer": wer, "subs": subs, "ins": ins, "dels": dels}}
    if args.out:
        report_mod.write_wer_csv(args.out, table)
    print("set,wer,subs,ins,dels")
    print("%s,%.4f,%d,%d,%d" % (args.set_name, wer, subs, ins, dels))
    if missing:
        print("# %d reference utterances had no hypothesis" % missing)
    return 0


def cmd_avg_ckpt(args):
    paths = sorted(glob.glob(os.path.join(args.ckpt_dir, "ckpt_*.bin")))
    if not paths:
        print("no checkpoints under %s" % args.ckpt_dir, file=sys.stderr)
        return 1
    ckpts = [load_checkpoint(p) for p in paths]
    averaged = average_checkpoints(ckpts, args.last)
    save_checkpoint(averaged, args.out)
    print("averaged %d of %d checkpoints -> %s"
          % (min(args.last, len(ckpts)), len(ckpts), args.out))
    return 0


def cmd_run_experiment(args):
    from . import experiments as exp

    cfg = effective_config(args)
    echo_config("run-experiment", cfg)
    kind = cfg.get("experiment.kind", "selflabel")
    world_cfg = exp.WorldConfig(
        num_supervised=cfg.get("world.num_supervised", 200),
        num_unlabeled=cfg.get("world.num_unlabeled", 400),
        num_weak=cfg.get("world.num_weak", 150),
        num_test=cfg.get("world.num_test", 40),
        metadata_noise=cfg.get("world.metadata_noise", 0.6),
        seed=cfg.get("seed", 0),
        augment=cfg.get("world.augment", True),
    )
    world = exp.make_world(world_cfg)
    plan = plan_from_config(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    from .trainer import ExperimentReport

    if kind == "supervised":
        model_kind = cfg.get("model.kind", "ctc")
        bundle, report = exp.train_supervised(world, model_kind, plan,
                                              seed=cfg.get("seed", 0))
        report.wers = evaluate(bundle, world.test_sets, world.vocab,
                               exp.decode_config(world, model_kind))
        report_mod.write_experiment_report(args.out_dir, "supervised", report)
    elif kind == "selflabel":
        model_kind = cfg.get("model.kind", "encdec")
        result = exp.selflabel_experiment(
            world, model_kind, plan_baseline=plan, plan_student=plan_from_config(cfg),
            seed=cfg.get("seed", 0))
        report = result["reports"]["student"]
        report.wers = result["student_wers"]
        report_mod.write_experiment_report(
            args.out_dir, "selflabel_%s" % model_kind, report,
            wer_tables={"baseline": result["baseline_wers"],
                        "selflabel": result["student_wers"]})
        print("relative WER change:", {k: round(v, 3) for k, v in
                                       result["relative_improvement"].items()})
    elif kind == "weaksup":
        result = exp.weaksup_experiment(world, lambda: plan_from_config(cfg),
                                        seed=cfg.get("seed", 0))
        report = ExperimentReport(config=cfg, seed=cfg.get("seed", 0))
        report.wers = result["wers"]["combo"]
        report_mod.write_experiment_report(args.out_dir, "weaksup", report,
                                           wer_tables=result["wers"])
    elif kind == "iterative":
        result = exp.iterative_experiment(world, seed=cfg.get("seed", 0),
                                          plan_factory=lambda r: plan_from_config(cfg))
        tables = {"round0": result["teacher_wers"]}
        for rep in result["rounds"]:
            tables["round%d" % rep["round"]] = rep["wers"]
        report = ExperimentReport(config=cfg, seed=cfg.get("seed", 0))
        report.wers = tables["round%d" % len(result["rounds"])] if result["rounds"] else {}
        report_mod.write_experiment_report(args.out_dir, "iterative", report,
                                           wer_tables=tables)
    else:
        print("unknown experiment kind %r" % kind, file=sys.stderr)
        return 2
    print("reports written to %s" % args.out_dir)
    return 0


# --------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="semisup-asr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--num-utts", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=9)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--metadata-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", default="supervised",
                   choices=["supervised", "unlabeled", "weak", "both"])
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="three-phase supervised training")
    common(p)
    p.add_argument("--kind", required=True, choices=["ctc", "encdec", "frame"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("label", help="segment + label unlabeled data with a teacher")
    common(p)
    p.add_argument("--teacher", required=True)
    p.add_argument("--mode", required=True, choices=["frame-topk", "sequence-top1"])
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--max-seconds", type=float, default=10.0)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lm-manifest")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("filter-ws", help="metadata length/overlap filtering")
    common(p)
    p.add_argument("--min-chars", type=int, default=50)
    p.add_argument("--max-chars", type=int, default=700)
    p.add_argument("--baseline-hyps", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="rejection stats CSV path")
    p.set_defaults(func=cmd_filter_ws)

    p = sub.add_parser("decode", help="decode a manifest with a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=8)
    p.add_argument("--lm-manifest")
    p.add_argument("--lm-weight", type=float, default=0.5)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="WER between reference and hypothesis files")
    common(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--set-name", default="default")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("avg-ckpt", help="average the last N checkpoints")
    common(p)
    p.add_argument("ckpt_dir")
    p.add_argument("--last", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_avg_ckpt)

    p = sub.add_parser("run-experiment", help="end-to-end synthetic experiment")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
