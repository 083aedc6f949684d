"""Manifest ingestion, label mapping, cross-validation folds and a synthetic corpus."""

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import BUILD_ID
from .dsp import write_wav
from .errors import ManifestError, ParameterError
from .numeric import RngStream

MANIFEST_FIELDS = ["id", "audio_path", "session", "speaker", "dialogue_kind", "label",
                   "arousal", "power", "valence"]
DIALOGUE_KINDS = ("improvised", "scripted")
EMOTIONS = ("neutral", "happiness", "sadness", "anger")
DIMENSIONS = ("arousal", "power", "valence")
BINS = ("low", "mid", "high")
EXCLUDED = None


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str
    session: int
    speaker: str
    dialogue_kind: str
    categorical_raw: str
    arousal: float
    power: float
    valence: float

    def dimension(self, name):
        return getattr(self, name)


class LabelMap:
    """Raw categorical label -> class index over the four kept emotions.

    ``excited`` shares the happiness index; every other unknown label is
    excluded. Matching is case-insensitive.
    """

    def __init__(self, classes=EMOTIONS, aliases=None):
        self.classes = tuple(classes)
        self.index = {name: i for i, name in enumerate(self.classes)}
        for alias, target in (aliases if aliases is not None else {"excited": "happiness"}).items():
            self.index[alias] = self.index[target]

    def __call__(self, raw):
        return self.index.get(raw.strip().lower(), EXCLUDED)

    @property
    def n_classes(self):
        return len(self.classes)


DEFAULT_LABEL_MAP = LabelMap()


def map_categorical(raw, lm=DEFAULT_LABEL_MAP):
    """Class index for ``raw``, or ``None`` when the label is excluded."""
    return lm(raw)


def bin_dimensional(value):
    """0 (low, < 3), 1 (mid, == 3) or 2 (high, > 3) for a rating in [1, 5]."""
    value = float(value)
    if not 1.0 <= value <= 5.0:
        raise ManifestError(f"dimensional rating {value} outside [1, 5]")
    if value < 3.0:
        return 0
    if value == 3.0:
        return 1
    return 2


def _parse_rating(text, column, line):
    try:
        value = float(text)
    except ValueError:
        raise ManifestError(f"{column} {text!r} is not a number", line) from None
    if not 1.0 <= value <= 5.0:
        raise ManifestError(f"{column} = {value} outside [1, 5]", line)
    return value


def load_manifest(path):
    """Parse and validate a CSV manifest; audio paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("empty manifest", 1) from None
        if [h.strip() for h in header] != MANIFEST_FIELDS:
            raise ManifestError(f"header must be {','.join(MANIFEST_FIELDS)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ManifestError(f"expected {len(MANIFEST_FIELDS)} fields, got {len(row)}", line)
            uid, audio, session, speaker, kind, label, a, p, v = (cell.strip() for cell in row)
            if not uid:
                raise ManifestError("empty id", line)
            if uid in seen:
                raise ManifestError(f"duplicate id {uid!r}", line)
            seen.add(uid)
            try:
                session_no = int(session)
            except ValueError:
                raise ManifestError(f"session {session!r} is not an integer", line) from None
            if session_no < 1:
                raise ManifestError(f"session must be >= 1, got {session_no}", line)
            kind = kind.lower()
            if kind not in DIALOGUE_KINDS:
                raise ManifestError(f"dialogue_kind {kind!r} not in {DIALOGUE_KINDS}", line)
            audio_path = audio if os.path.isabs(audio) else str(base / audio)
            records.append(UtteranceRecord(
                uid, audio_path, session_no, speaker, kind, label.lower(),
                _parse_rating(a, "arousal", line), _parse_rating(p, "power", line),
                _parse_rating(v, "valence", line)))
    return records


def write_manifest(path, rows):
    """Write manifest rows (dicts keyed by MANIFEST_FIELDS)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# -- folds -----------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    name: str
    train_ids: tuple
    test_ids: tuple


@dataclass
class FoldPlan:
    scheme: str
    folds: list = field(default_factory=list)

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def make_folds(records, scheme="loso", k=10, seed=0, train_fraction=0.9):
    """Build train/test splits.

    ``loso`` holds out one session per fold (sessions partition speakers);
    ``kfold`` shuffles ids with ``seed`` and deals them into ``k`` near-equal
    test shards; ``holdout`` is a single shuffled ``train_fraction`` split.
    """
    ids = [r.id for r in records]
    if scheme == "loso":
        sessions = sorted({r.session for r in records})
        if len(sessions) < 2:
            raise ParameterError(f"leave-one-session-out needs >= 2 sessions, found {len(sessions)}")
        folds = []
        for s in sessions:
            test = tuple(r.id for r in records if r.session == s)
            train = tuple(r.id for r in records if r.session != s)
            folds.append(Fold(f"session{s}", train, test))
        return FoldPlan("loso", folds)
    order = RngStream(seed).child(0x5F01D).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    if scheme == "kfold":
        if k < 2 or len(ids) < k:
            raise ParameterError(f"{k}-fold cross-validation needs k >= 2 and >= {k} records, got {len(ids)}")
        shards = np.array_split(np.arange(len(ids)), k)
        folds = []
        for i, shard in enumerate(shards):
            test_set = set(shard.tolist())
            test = tuple(shuffled[j] for j in shard)
            train = tuple(shuffled[j] for j in range(len(ids)) if j not in test_set)
            folds.append(Fold(f"fold{i + 1}", train, test))
        return FoldPlan(f"kfold({k})", folds)
    if scheme == "holdout":
        n_train = int(round(train_fraction * len(ids)))
        if not 0 < n_train < len(ids):
            raise ParameterError(f"holdout split of {len(ids)} records leaves an empty side")
        return FoldPlan(f"holdout({train_fraction})",
                        [Fold("holdout", tuple(shuffled[:n_train]), tuple(shuffled[n_train:]))])
    raise ParameterError(f"unknown fold scheme {scheme!r}")


# -- synthetic corpus --------------------------------------------------------

# Per-class voice: fundamental range (Hz), spectral tilt (harmonic amplitude
# ~ k**-tilt), amplitude-modulation rate (Hz) and depth, and formant-like
# emphasis bands (centre Hz, bandwidth Hz, gain).
CLASS_VOICES = {
    "neutral": {"f0": (105.0, 135.0), "tilt": 1.0, "am_rate": 2.0, "am_depth": 0.15,
                "formants": ((500.0, 120.0, 4.0), (1500.0, 200.0, 2.0))},
    "happiness": {"f0": (210.0, 260.0), "tilt": 0.7, "am_rate": 5.0, "am_depth": 0.45,
                  "formants": ((750.0, 150.0, 5.0), (2300.0, 250.0, 4.0))},
    "sadness": {"f0": (80.0, 100.0), "tilt": 1.7, "am_rate": 1.0, "am_depth": 0.1,
                "formants": ((380.0, 100.0, 5.0), (1000.0, 150.0, 2.0))},
    "anger": {"f0": (160.0, 200.0), "tilt": 0.35, "am_rate": 8.0, "am_depth": 0.6,
              "formants": ((900.0, 200.0, 4.0), (3000.0, 400.0, 6.0))},
}

# Centre (arousal, power, valence) per class; each rating adds a jitter drawn
# uniformly from {-0.8, -0.7, ..., 0.8} and is clipped to [1, 5].
CLASS_DIMENSIONS = {
    "neutral": (3.0, 3.0, 3.0),
    "happiness": (4.0, 3.5, 4.2),
    "sadness": (1.9, 2.0, 1.9),
    "anger": (4.3, 4.1, 1.8),
}

SNR_DB = 20.0


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 7
    n_sessions: int = 5
    speakers_per_session: int = 2
    utterances_per_speaker: int = 12
    sample_rate: int = 16000
    min_duration: float = 1.0
    max_duration: float = 3.0
    snr_db: float = SNR_DB
    gain_db: float = 12.0  # per-utterance loudness drawn from +/- this range


def _synth_voice(rng, voice, pitch_factor, n_samples, sample_rate, snr_db, gain_db):
    t = np.arange(n_samples) / sample_rate
    lo, hi = voice["f0"]
    base = rng.uniform(1, lo, hi)[0] * pitch_factor
    n_harm = int(min(40, 7000.0 // base))
    k = np.arange(1, n_harm + 1)
    freqs = k * base
    env = np.ones(n_harm)
    for centre, bw, gain in voice["formants"]:
        env += gain * np.exp(-0.5 * ((freqs - centre) / bw) ** 2)
    amps = env * k ** (-voice["tilt"])
    harm_phase = rng.uniform(n_harm, 0.0, 2.0 * np.pi)
    phase = 2.0 * np.pi * base * t
    signal = np.zeros(n_samples)
    for kk, a, p in zip(k, amps, harm_phase):
        signal += a * np.sin(kk * phase + p)
    am_phase = rng.uniform(1, 0.0, 2.0 * np.pi)[0]
    signal *= 1.0 + voice["am_depth"] * np.sin(2.0 * np.pi * voice["am_rate"] * t + am_phase)
    level = 0.1 * 10.0 ** (rng.uniform(1, -gain_db, gain_db)[0] / 20.0)
    signal *= level / np.sqrt(np.mean(signal ** 2))
    signal += level * 10.0 ** (-snr_db / 20.0) * rng.standard_normal(n_samples)
    ramp = min(n_samples // 2, int(0.01 * sample_rate))
    fade = np.linspace(0.0, 1.0, ramp, endpoint=False)
    signal[:ramp] *= fade
    signal[n_samples - ramp:] *= fade[::-1]
    return signal


def _rating(rng, centre):
    jitter = (int(rng.integers(1, 17)[0]) - 8) / 10.0
    return min(5.0, max(1.0, round(centre + jitter, 1)))


def generate_synthetic_corpus(out_dir, seed=7, n_sessions=5, speakers_per_session=2,
                              utterances_per_speaker=12, sample_rate=16000):
    """Write WAV files, ``manifest.csv`` and ``corpus_meta.json`` under ``out_dir``.

    Utterances cycle through the four emotions per speaker so classes are
    balanced; every other happiness utterance is labelled ``excited``.
    Returns the manifest path.
    """
    cfg = SyntheticConfig(seed, n_sessions, speakers_per_session, utterances_per_speaker, sample_rate)
    if n_sessions < 1 or speakers_per_session < 1 or utterances_per_speaker < 1:
        raise ParameterError("sessions, speakers and utterances must all be >= 1")
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    root = RngStream(seed)
    rows = []
    genders = "FM"
    for s in range(1, n_sessions + 1):
        for sp in range(speakers_per_session):
            tag = genders[sp] if speakers_per_session <= 2 else f"S{sp + 1}"
            speaker = f"Ses{s:02d}{tag}"
            spk_rng = root.child(s, sp)
            pitch_factor = spk_rng.uniform(1, 0.92, 1.08)[0]
            for u in range(utterances_per_speaker):
                emotion = EMOTIONS[(u + s + sp) % len(EMOTIONS)]
                rng = spk_rng.child(u)
                duration = rng.uniform(1, cfg.min_duration, cfg.max_duration)[0]
                n = int(round(duration * sample_rate))
                audio = _synth_voice(rng, CLASS_VOICES[emotion], pitch_factor, n, sample_rate,
                                     cfg.snr_db, cfg.gain_db)
                uid = f"{speaker}_{u:03d}"
                rel = f"wav/{uid}.wav"
                write_wav(out / rel, audio, sample_rate)
                raw = emotion
                if emotion == "happiness" and (u // len(EMOTIONS)) % 2 == 1:
                    raw = "excited"
                a, p, v = (_rating(rng, c) for c in CLASS_DIMENSIONS[emotion])
                rows.append({"id": uid, "audio_path": rel, "session": s, "speaker": speaker,
                             "dialogue_kind": DIALOGUE_KINDS[u % 2], "label": raw,
                             "arousal": f"{a:.1f}", "power": f"{p:.1f}", "valence": f"{v:.1f}"})
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows)
    meta = {"generator": BUILD_ID, "config": cfg.__dict__, "class_voices": CLASS_VOICES,
            "class_dimensions": CLASS_DIMENSIONS, "n_utterances": len(rows)}
    with open(out / "corpus_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
