"""Weak supervision from metadata: filtering, sharing, and mixed batches.

The metadata filter keeps a video when its metadata length is within the
configured character bounds (inclusive) and the metadata shares at least
one word with the video's baseline hypotheses; surviving videos attach
their full metadata to every segment.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import Utterance


class ConfigurationError(Exception):
    pass


class UnsupportedModeError(Exception):
    pass


@dataclass
class WeakPair:
    segment: Utterance
    metadata_tokens: list
    parent_video_id: str


@dataclass
class MixSpec:
    ratios: dict  # source tag -> probability

    def __post_init__(self):
        if any(r < 0 for r in self.ratios.values()):
            raise ConfigurationError("mix ratios must be non-negative")
        if abs(sum(self.ratios.values()) - 1.0) > 1e-9:
            raise ConfigurationError("mix ratios must sum to 1")


def word_set(text):
    return set(text.lower().split())


def filter_metadata(videos, min_chars=50, max_chars=700, vocab=None,
                    min_overlap_frac=0.0):
    """Apply the length and word-overlap filters; share metadata per video.

    videos: list of {"video_id", "metadata", "segments": [Utterance],
    "baseline_hyps": [str]}. Returns (weak_pairs, stats) where stats
    counts rejections per reason. By default any shared word with the
    baseline hypotheses keeps a video; min_overlap_frac > 0 additionally
    requires that fraction of the metadata's distinct words to appear in
    the hypotheses, which discards metadata dominated by off-content
    text.
    """
    if not (0 < min_chars <= max_chars):
        raise ConfigurationError("need 0 < min_chars <= max_chars")
    pairs = []
    stats = {"kept": 0, "too_short": 0, "too_long": 0, "no_overlap": 0}
    for video in videos:
        metadata = video["metadata"] or ""
        if len(metadata) < min_chars:
            stats["too_short"] += 1
            continue
        if len(metadata) > max_chars:
            stats["too_long"] += 1
            continue
        hyp_words = set()
        for hyp in video.get("baseline_hyps", []):
            hyp_words |= word_set(hyp)
        meta_words = word_set(metadata)
        overlap = len(meta_words & hyp_words)
        needed = max(1, int(np.ceil(min_overlap_frac * len(meta_words)))) \
            if meta_words else 1
        if overlap < needed:
            stats["no_overlap"] += 1
            continue
        stats["kept"] += 1
        tokens = vocab.encode(metadata) if vocab is not None else list(metadata)
        for segment in video["segments"]:
            pairs.append(
                WeakPair(
                    segment=segment,
                    metadata_tokens=list(tokens),
                    parent_video_id=video["video_id"],
                )
            )
    return pairs, stats


def mixed_batch_sampler(sources, spec, batch_size, seed):
    """Infinite stream of (tag, batch) with whole-batch source purity.

    The source tag is drawn i.i.d. per batch with probability = ratio;
    within a source, sampling is without replacement per epoch using a
    seeded shuffle.
    """
    tags = sorted(t for t, r in spec.ratios.items() if r > 0)
    for tag in tags:
        if not sources.get(tag):
            raise ConfigurationError("source %r has nonzero ratio but no data" % tag)
    probs = [spec.ratios[t] for t in tags]
    rng = np.random.default_rng([seed, 0])
    epoch_rngs = {t: np.random.default_rng([seed, 1 + i]) for i, t in enumerate(tags)}
    queues = {t: [] for t in tags}

    def refill(tag):
        order = epoch_rngs[tag].permutation(len(sources[tag]))
        queues[tag] = [sources[tag][i] for i in order]

    while True:
        tag = tags[rng.choice(len(tags), p=probs)] if len(tags) > 1 else tags[0]
        batch = []
        while len(batch) < batch_size:
            if not queues[tag]:
                refill(tag)
            batch.append(queues[tag].pop())
        yield tag, batch


def weaksup_train(bundle, supervised_items, weak_items, mix, plan, seed, **kwargs):
    """Three-phase weak-supervision training (encoder-decoder only)."""
    if bundle.cfg.kind != "encdec":
        raise UnsupportedModeError(
            "weak supervision needs the encoder-decoder model; %s heads assume "
            "frame-level or monotonic alignment" % bundle.cfg.kind
        )
    from .trainer import run_three_phase

    sources = {"supervised": supervised_items, "weak": weak_items}
    plan.train_main.mix = dict(mix.ratios)
    return run_three_phase(bundle, plan, sources, seed, **kwargs)
