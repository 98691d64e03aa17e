"""Synthetic corpus generation, augmentation, and manifest I/O.

Utterances are built from a word lexicon over a character vocabulary.
Every character has a fixed prototype feature vector; an utterance's
features are its characters' prototypes repeated for a random number of
frames each, plus Gaussian noise. The generator therefore knows the
exact token-to-frame alignment, which is stored in the manifest and
reused as forced alignment for frame-level training.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .nn.checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from .nn.params import ParamSet
from .vocab import Vocab, SPACE_ID


class SpecError(Exception):
    pass


class ManifestError(Exception):
    pass


@dataclass
class FeatureSequence:
    utt_id: str
    frames: np.ndarray  # T x d
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise SpecError("features must be a T x d matrix with T >= 1")
        if not np.all(np.isfinite(self.frames)):
            raise SpecError("features must be finite")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    @property
    def duration_s(self):
        return self.num_frames * self.frame_shift_ms / 1000.0


@dataclass
class Utterance:
    features: FeatureSequence
    transcript: str | None = None  # text over the character vocab
    metadata: str | None = None
    token_frames: list | None = None  # frames per transcript character

    @property
    def utt_id(self):
        return self.features.utt_id

    @property
    def duration_s(self):
        return self.features.duration_s


@dataclass
class AugmentPolicy:
    speed_factors: list = field(default_factory=lambda: [0.9, 1.1])
    noise_snr_db_range: tuple = (5.0, 20.0)
    time_masks: int = 2
    time_mask_max: int = 10
    freq_masks: int = 2
    freq_mask_max: int = 4

    def __post_init__(self):
        if min(self.time_masks, self.freq_masks, self.time_mask_max, self.freq_mask_max) < 0:
            raise SpecError("mask counts and widths must be >= 0")


@dataclass
class CorpusSpec:
    num_utts: int
    vocab_size: int = 9
    token_len_range: tuple = (6, 18)
    frames_per_token_range: tuple = (2, 5)
    noise_sigma: float = 0.1
    metadata_noise: float = 0.0
    feature_dim: int = 16
    lexicon_size: int = 40
    frame_shift_ms: float = 10.0
    prototype_seed: int = 1234
    kind: str = "supervised"  # supervised | unlabeled | weak | both

    def __post_init__(self):
        if self.num_utts < 1:
            raise SpecError("num_utts must be >= 1")
        if self.vocab_size < 2:
            raise SpecError("vocab size must be >= 2")
        if self.token_len_range[0] < 1 or self.token_len_range[0] > self.token_len_range[1]:
            raise SpecError("bad token_len_range")
        if self.frames_per_token_range[0] < 1:
            raise SpecError("bad frames_per_token_range")


def char_prototypes(vocab, dim, prototype_seed=1234):
    """Fixed per-character prototype vectors, shared across corpora."""
    rng = np.random.default_rng(prototype_seed)
    protos = rng.uniform(-1.0, 1.0, size=(vocab.size, dim))
    protos[SPACE_ID] *= 0.1  # space behaves like near-silence
    return protos


def build_lexicon(vocab, lexicon_size, prototype_seed=1234):
    """Deterministic word list (2-4 letters, no adjacent repeats)."""
    rng = np.random.default_rng([prototype_seed, 7])
    letters = vocab.chars[1:]
    words = []
    seen = set()
    while len(words) < lexicon_size:
        length = int(rng.integers(2, 5))
        chars = []
        for _ in range(length):
            c = letters[int(rng.integers(len(letters)))]
            while chars and c == chars[-1]:
                c = letters[int(rng.integers(len(letters)))]
            chars.append(c)
        word = "".join(chars)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _sample_transcript(rng, lexicon, token_len_range):
    lo, hi = token_len_range
    target = int(rng.integers(lo, hi + 1))
    words = [lexicon[int(rng.integers(len(lexicon)))]]
    while len(" ".join(words)) < target:
        words.append(lexicon[int(rng.integers(len(lexicon)))])
    return " ".join(words)


def _sample_metadata(rng, transcript_words, lexicon, noise):
    if noise <= 0:
        words = list(transcript_words)
        target = max(60, len(" ".join(words)))
        while len(" ".join(words)) < target:
            words.append(transcript_words[len(words) % len(transcript_words)])
        return " ".join(words)
    kept = [w for w in transcript_words if rng.random() >= noise]
    distractors = [w for w in lexicon if w not in set(transcript_words)]
    target = int(rng.integers(30, 761))
    words = kept
    while len(" ".join(words)) < target and distractors:
        if rng.random() < noise:
            words.append(distractors[int(rng.integers(len(distractors)))])
        else:
            words.append(transcript_words[int(rng.integers(len(transcript_words)))])
    rng.shuffle(words)
    return " ".join(words)


def synthesize_utterance(spec, vocab, protos, lexicon, utt_id, sub_seed):
    """Build one utterance deterministically from its sub-seed."""
    rng = np.random.default_rng(sub_seed)
    transcript = _sample_transcript(rng, lexicon, spec.token_len_range)
    tokens = vocab.encode(transcript)
    lo, hi = spec.frames_per_token_range
    token_frames = [int(rng.integers(lo, hi + 1)) for _ in tokens]
    rows = []
    for tok, n in zip(tokens, token_frames):
        rows.append(np.tile(protos[tok], (n, 1)))
    frames = np.concatenate(rows, axis=0)
    if spec.noise_sigma > 0:
        frames = frames + rng.normal(0.0, spec.noise_sigma, size=frames.shape)
    frames = frames.astype(np.float32).astype(np.float64)
    features = FeatureSequence(utt_id, frames, spec.frame_shift_ms)
    metadata = None
    if spec.kind in ("weak", "both"):
        metadata = _sample_metadata(rng, transcript.split(), lexicon, spec.metadata_noise)
    keep_transcript = spec.kind in ("supervised", "both")
    return Utterance(
        features=features,
        transcript=transcript if keep_transcript else None,
        metadata=metadata,
        token_frames=token_frames if keep_transcript else None,
    )


def generate_utterances(spec, seed, id_prefix="utt"):
    """In-memory corpus generation; each utterance has its own sub-seed."""
    vocab = Vocab(spec.vocab_size)
    protos = char_prototypes(vocab, spec.feature_dim, spec.prototype_seed)
    lexicon = build_lexicon(vocab, spec.lexicon_size, spec.prototype_seed)
    utts = []
    for i in range(spec.num_utts):
        utt_id = "%s%06d" % (id_prefix, i)
        utts.append(synthesize_utterance(spec, vocab, protos, lexicon, utt_id, [seed, i]))
    return utts


def generate_corpus(spec, seed, out_dir):
    """Write feature files + manifest under out_dir; returns manifest path."""
    utts = generate_utterances(spec, seed)
    os.makedirs(os.path.join(out_dir, "feats"), exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(utts, manifest_path, out_dir)
    return manifest_path


# ---------------------------------------------------------------- augmentation

def speed_perturb(features, factor):
    """Resample in time: output length round(T/factor), linear interpolation."""
    if factor <= 0:
        raise SpecError("speed factor must be positive")
    T = features.num_frames
    out_len = max(1, round(T / factor))
    positions = np.arange(out_len) * factor
    lo = np.clip(np.floor(positions).astype(int), 0, T - 1)
    hi = np.clip(lo + 1, 0, T - 1)
    frac = np.clip(positions - lo, 0.0, 1.0)[:, None]
    frames = (1.0 - frac) * features.frames[lo] + frac * features.frames[hi]
    return FeatureSequence(features.utt_id, frames, features.frame_shift_ms)


def superpose_noise(features, noise, snr_db, seed):
    """Add a tiled/cropped noise clip at the requested signal-to-noise ratio.

    A zero-energy signal falls back to unit noise gain.
    """
    if noise.dim != features.dim:
        raise SpecError("noise feature dimension mismatch")
    rng = np.random.default_rng(seed)
    T = features.num_frames
    clip = noise.frames
    if clip.shape[0] < T:
        reps = -(-T // clip.shape[0])
        clip = np.tile(clip, (reps, 1))
    start = int(rng.integers(0, clip.shape[0] - T + 1))
    clip = clip[start:start + T]
    sig_energy = float(np.sum(features.frames ** 2))
    noise_energy = float(np.sum(clip ** 2))
    if noise_energy == 0:
        return FeatureSequence(features.utt_id, features.frames.copy(), features.frame_shift_ms)
    if sig_energy == 0:
        gain = 1.0
    else:
        gain = np.sqrt(sig_energy / (noise_energy * 10.0 ** (snr_db / 10.0)))
    frames = features.frames + gain * clip
    return FeatureSequence(features.utt_id, frames, features.frame_shift_ms)


def mask_time_freq(features, policy, seed):
    """SpecAugment-style masking filled with the per-utterance mean."""
    rng = np.random.default_rng(seed)
    frames = features.frames.copy()
    T, d = frames.shape
    fill = float(np.mean(frames))
    for _ in range(policy.time_masks):
        width = int(rng.integers(0, min(policy.time_mask_max, T) + 1))
        if width == 0:
            continue
        start = int(rng.integers(0, T - width + 1))
        frames[start:start + width, :] = fill
    for _ in range(policy.freq_masks):
        width = int(rng.integers(0, min(policy.freq_mask_max, d) + 1))
        if width == 0:
            continue
        start = int(rng.integers(0, d - width + 1))
        frames[:, start:start + width] = fill
    return FeatureSequence(features.utt_id, frames, features.frame_shift_ms)


def make_noise_clip(dim, num_frames=1000, seed=99):
    """Stand-in for real noise events: smoothed Gaussian noise."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(0.0, 1.0, size=(num_frames, dim))
    kernel = np.ones(5) / 5.0
    smoothed = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="same"), 0, raw)
    return FeatureSequence("noise", smoothed)


def _scaled_token_frames(token_frames, orig_len, out_len, factor):
    """Map a per-token frame alignment through speed perturbation."""
    bounds = np.cumsum(token_frames)
    positions = np.arange(out_len) * factor
    labels = np.searchsorted(bounds, positions, side="right")
    labels = np.clip(labels, 0, len(token_frames) - 1)
    counts = [0] * len(token_frames)
    for lab in labels:
        counts[lab] += 1
    return counts


def expand_with_augmentation(utts, policy, seed, noise_clip=None):
    """Materialize speed-perturbed and noise-superposed copies.

    Returns the original utterances plus one copy per speed factor and one
    noise copy, mirroring offline corpus expansion; masking stays on-the-fly.
    """
    if noise_clip is None and utts:
        noise_clip = make_noise_clip(utts[0].features.dim, seed=[seed, 0])
    rng = np.random.default_rng([seed, 1])
    out = list(utts)
    for utt in utts:
        for factor in policy.speed_factors:
            feats = speed_perturb(utt.features, factor)
            feats.utt_id = "%s#sp%s" % (utt.utt_id, factor)
            tf = None
            if utt.token_frames:
                tf = _scaled_token_frames(
                    utt.token_frames, utt.features.num_frames, feats.num_frames, factor
                )
            out.append(Utterance(feats, utt.transcript, utt.metadata, tf))
        snr = rng.uniform(*policy.noise_snr_db_range)
        feats = superpose_noise(utt.features, noise_clip, snr, [seed, 2, len(out)])
        feats.utt_id = "%s#noise" % utt.utt_id
        out.append(Utterance(feats, utt.transcript, utt.metadata, utt.token_frames))
    return out


# ------------------------------------------------------------------- manifests

def save_features(features, path):
    params = ParamSet({"feats": features.frames})
    params.set("frame_shift_ms", np.array([features.frame_shift_ms]))
    save_checkpoint(Checkpoint(params=params), path)


def load_features(utt_id, path):
    ckpt = load_checkpoint(path)
    shift = float(ckpt.params["frame_shift_ms"][0])
    return FeatureSequence(utt_id, ckpt.params["feats"], shift)


def write_manifest(utts, manifest_path, base_dir):
    feats_dir = os.path.join(base_dir, "feats")
    os.makedirs(feats_dir, exist_ok=True)
    with open(manifest_path, "w") as f:
        for utt in utts:
            rel = os.path.join("feats", "%s.bin" % utt.utt_id.replace("#", "_"))
            save_features(utt.features, os.path.join(base_dir, rel))
            record = {
                "utt_id": utt.utt_id,
                "feats": rel,
                "duration_s": utt.duration_s,
            }
            if utt.transcript is not None:
                record["transcript"] = utt.transcript
            if utt.metadata is not None:
                record["metadata"] = utt.metadata
            if utt.token_frames is not None:
                record["token_frames"] = utt.token_frames
            f.write(json.dumps(record) + "\n")
    return manifest_path


def load_manifest(manifest_path, base_dir=None):
    if base_dir is None:
        base_dir = os.path.dirname(manifest_path)
    utts = []
    with open(manifest_path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError("line %d: %s" % (lineno, exc)) from exc
            feats_path = os.path.join(base_dir, record["feats"])
            if not os.path.exists(feats_path):
                raise IOError("line %d: missing feature file %s" % (lineno, feats_path))
            features = load_features(record["utt_id"], feats_path)
            features.frame_shift_ms = features.frame_shift_ms  # already loaded
            utts.append(
                Utterance(
                    features=features,
                    transcript=record.get("transcript"),
                    metadata=record.get("metadata"),
                    token_frames=record.get("token_frames"),
                )
            )
    return utts
