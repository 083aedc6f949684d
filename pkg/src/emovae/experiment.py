"""Cross-validated AE/VAE/CVAE + LSTM experiments and the latent-size sweep.

Per fold: standardize segments on the training split, fit the autoencoder on
training segments, extract per-segment latent features for every utterance,
train the LSTM on 90% of the training utterances with early stopping on the
remaining 10%, and score the held-out fold.

CVAE features never see a label at extraction time: they are averaged over
the four candidate one-hot conditions, for training and test utterances
alike. Labels only enter through representation learning on the training
split.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import BUILD_ID
from .classifier import ClassifierSpec, LstmClassifier, SequenceExample, TrainConfig, train
from .corpus import DIMENSIONS, EMOTIONS, bin_dimensional, make_folds, map_categorical
from .dsp import LogMelExtractor, Standardizer, read_wav
from .errors import EmovaeError
from .metrics import ConfusionMatrix, shuffled_label_f1, summarize
from .models import (CVAE, EncoderDecoderSpec, FitConfig, SegmentAutoencoder,
                     extract_features_marginal, fit, one_hot)
from .numeric import RngStream

log = logging.getLogger(__name__)

MODEL_NAMES = {"ae": "AE-LSTM", "vae": "VAE-LSTM", "cvae": "CVAE-LSTM"}
DIM_SHORT = {"arousal": "A", "power": "P", "valence": "V"}


class FoldError(EmovaeError):
    pass


def targets_for(task):
    return ("emotion",) if task == "categorical" else DIMENSIONS


def class_names(target):
    return EMOTIONS if target == "emotion" else ("low", "mid", "high")


def label_of(record, target):
    if target == "emotion":
        return map_categorical(record.categorical_raw)
    return bin_dimensional(record.dimension(target))


def eligible_records(records, task):
    """Categorical runs drop records whose label is excluded; dimensional runs keep all."""
    if task == "categorical":
        return [r for r in records if map_categorical(r.categorical_raw) is not None]
    return list(records)


_SEGMENT_CACHE = {}


def extractor_for(dsp):
    return LogMelExtractor(dsp.sample_rate, dsp.win_ms, dsp.hop_ms, dsp.n_fft, dsp.n_mels,
                           dsp.fmin, dsp.fmax, dsp.floor, dsp.frames_per_segment)


def load_segments(records, dsp):
    """Raw (unstandardized) LogMel segments per utterance id, cached per process."""
    key = tuple(sorted(vars(dsp).items()))
    ex = None
    out = {}
    for r in records:
        ck = (r.audio_path, key)
        if ck not in _SEGMENT_CACHE:
            ex = ex or extractor_for(dsp)
            _SEGMENT_CACHE[ck] = ex.segments(read_wav(r.audio_path, r.id))
        out[r.id] = _SEGMENT_CACHE[ck]
    return out


def fold_plan(records, cfg, seed=0):
    scheme = cfg.cv.categorical if cfg.task == "categorical" else cfg.cv.dimensional
    return make_folds(records, scheme, k=cfg.cv.dimensional_folds, seed=seed,
                      train_fraction=cfg.cv.holdout_fraction)


@dataclass
class FoldResult:
    seed: int
    fold: str
    confusion: dict  # target -> ConfusionMatrix
    predictions: dict  # target -> list of (utterance_id, true, pred, probs)
    rep_history: list
    clf_history: dict  # target -> list of epoch dicts
    checkpoints: list = field(default_factory=list)


def representation_spec(cfg, n_conditions):
    rep = cfg.representation
    return EncoderDecoderSpec(
        model_kind=cfg.model_kind, input_dim=cfg.dsp.frames_per_segment * cfg.dsp.n_mels,
        hidden_dims=tuple(rep.hidden_dims), latent_dim=rep.latent_dim,
        condition_dim=n_conditions if cfg.model_kind == CVAE else 0,
        activation=rep.activation, logvar_clamp=rep.logvar_clamp)


def run_fold(cfg, records, segments, fold, seed, fold_index, checkpoint_dir=None):
    """Train and evaluate one fold for one seed."""
    rng = RngStream(seed).child(fold_index)
    by_id = {r.id: r for r in records}
    train_recs = [by_id[i] for i in fold.train_ids]
    test_recs = [by_id[i] for i in fold.test_ids]
    mode = cfg.effective_feature_mode
    n_emotions = len(EMOTIONS)

    seg_std = Standardizer.fit(np.vstack([segments[r.id] for r in train_recs]))
    used = set(fold.train_ids) | set(fold.test_ids)
    std_segments = {r.id: seg_std.transform(segments[r.id]) for r in records if r.id in used}

    # representation learning; a CVAE trains only on utterances with a kept label
    spec = representation_spec(cfg, n_emotions)
    model = SegmentAutoencoder(spec, rng.child(1), cfg.representation.adam.build())
    rep_recs = train_recs
    conditions = None
    if spec.model_kind == CVAE:
        rep_recs = [r for r in train_recs if map_categorical(r.categorical_raw) is not None]
        conditions = np.vstack([
            one_hot(np.full(len(std_segments[r.id]), map_categorical(r.categorical_raw)), n_emotions)
            for r in rep_recs])
    X = np.vstack([std_segments[r.id] for r in rep_recs])
    rep = cfg.representation
    fit_cfg = FitConfig(rep.epochs, rep.batch_size, rep.recon_threshold, rep.kl_weight)
    fit_result = fit(model, X, conditions, fit_cfg, rng.child(2))

    feat_rng = rng.child(3)
    features = {uid: extract_features_marginal(model, seg, mode, feat_rng)
                for uid, seg in std_segments.items()}

    # inner validation split, deterministic per seed and fold
    order = rng.child(4).permutation(len(train_recs))
    n_val = max(1, int(math.ceil(cfg.classifier.validation_fraction * len(train_recs))))
    val_recs = [train_recs[i] for i in order[:n_val]]
    fit_recs = [train_recs[i] for i in order[n_val:]]
    if not fit_recs:
        raise FoldError(f"fold {fold.name}: too few training utterances for a validation split")

    if cfg.classifier.standardize_features:
        feat_std = Standardizer.fit(np.vstack([features[r.id] for r in fit_recs]))
        features = {uid: feat_std.transform(f) for uid, f in features.items()}

    stem = f"seed{seed}_{fold.name}"
    checkpoints = []
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / f"{stem}_rep.emovae"
        model.save(path)
        checkpoints.append(path.name)

    confusion, predictions, clf_history = {}, {}, {}
    clf_cfg = cfg.classifier
    for ti, target in enumerate(targets_for(cfg.task)):
        n_classes = len(class_names(target))

        def examples(recs):
            return [SequenceExample(r.id, features[r.id], label_of(r, target)) for r in recs]

        clf_spec = ClassifierSpec(features[fold.train_ids[0]].shape[1], n_classes,
                                  tuple(clf_cfg.lstm_hidden), clf_cfg.readout)
        clf = LstmClassifier(clf_spec, rng.child(5, ti), clf_cfg.adam.build())
        result = train(clf, examples(fit_recs), examples(val_recs),
                       TrainConfig(clf_cfg.max_epochs, clf_cfg.patience, clf_cfg.batch_size),
                       rng.child(6, ti))
        test = examples(test_recs)
        probs = clf.predict_proba([e.features for e in test])
        pred = np.argmax(probs, axis=1)
        true = [e.label for e in test]
        confusion[target] = ConfusionMatrix.from_predictions(true, pred, n_classes)
        predictions[target] = [(e.utterance_id, e.label, int(p), pr.tolist())
                               for e, p, pr in zip(test, pred, probs)]
        clf_history[target] = result.history
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"{stem}_clf_{target}.emovae"
            clf.save(path, {"target": target, "best_epoch": result.best_epoch})
            checkpoints.append(path.name)

    return FoldResult(seed, fold.name, confusion, predictions,
                      [tuple(h) for h in fit_result.history], clf_history, checkpoints)


def _run_task(args):
    cfg, records, segments, fold, seed, fold_index, checkpoint_dir = args
    try:
        return run_fold(cfg, records, segments, fold, seed, fold_index, checkpoint_dir)
    except EmovaeError as exc:
        raise FoldError(f"seed {seed}, fold {fold.name}: {exc}") from exc


@dataclass
class ExperimentReport:
    config: dict
    task: str
    model_kind: str
    fold_scheme: str
    folds: list  # FoldResult, ordered by (seed, fold)

    @property
    def seeds(self):
        return sorted({f.seed for f in self.folds})

    @property
    def targets(self):
        return targets_for(self.task)

    def aggregate(self, seed, target):
        cms = [f.confusion[target] for f in self.folds if f.seed == seed]
        total = cms[0]
        for cm in cms[1:]:
            total = total + cm
        return total

    def pooled(self, seed, target):
        """(true, predicted) over every test utterance of one seed."""
        rows = [p for f in self.folds if f.seed == seed for p in f.predictions[target]]
        return [r[1] for r in rows], [r[2] for r in rows]

    def chance_f1(self, seed, target, n_permutations=200):
        true, pred = self.pooled(seed, target)
        return shuffled_label_f1(true, pred, len(class_names(target)),
                                 RngStream(seed).child(0xC4A7CE), n_permutations)

    def seed_metrics(self, seed):
        out = {t: summarize(self.aggregate(seed, t)) for t in self.targets}
        if self.task == "dimensional":
            out["mean_f1"] = sum(out[t]["macro_f1"] for t in self.targets) / len(self.targets)
        return out

    def summary(self):
        per_seed = [self.seed_metrics(s) for s in self.seeds]
        out = {}
        for t in self.targets:
            out[t] = {k: float(np.mean([m[t][k] for m in per_seed])) for k in ("wa", "ua", "macro_f1")}
        if self.task == "dimensional":
            out["mean_f1"] = float(np.mean([m["mean_f1"] for m in per_seed]))
        return out

    def to_dict(self):
        seeds = []
        for s in self.seeds:
            folds = [{"fold": f.fold,
                      "confusion": {t: f.confusion[t].tolist() for t in self.targets},
                      "representation_final_loss": list(f.rep_history[-1]) if f.rep_history else None,
                      "classifier_epochs": {t: len(f.clf_history[t]) for t in self.targets}}
                     for f in self.folds if f.seed == s]
            metrics = self.seed_metrics(s)
            agg = {t: dict(metrics[t], confusion=self.aggregate(s, t).tolist(),
                           shuffled_label_macro_f1=self.chance_f1(s, t)) for t in self.targets}
            entry = {"seed": s, "folds": folds, "aggregate": agg}
            if self.task == "dimensional":
                entry["mean_f1"] = metrics["mean_f1"]
            seeds.append(entry)
        return {
            "build": BUILD_ID,
            "task": self.task,
            "model": MODEL_NAMES[self.model_kind],
            "fold_scheme": self.fold_scheme,
            "classes": {t: list(class_names(t)) for t in self.targets},
            "config": self.config,
            "runs": seeds,
            "summary": self.summary(),
            "checkpoints": [c for f in self.folds for c in f.checkpoints],
        }


def run_experiment(records, cfg, checkpoint_dir=None, jobs=None):
    """Run every (seed, fold) pair of ``cfg`` and collect an :class:`ExperimentReport`."""
    records = eligible_records(records, cfg.task)
    if not records:
        raise EmovaeError(f"no records are eligible for the {cfg.task} task")
    segments = load_segments(records, cfg.dsp)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    tasks = []
    scheme = None
    for seed in cfg.seeds:
        plan = fold_plan(records, cfg, seed)
        scheme = plan.scheme
        for i, fold in enumerate(plan):
            tasks.append((cfg, records, segments, fold, seed, i, checkpoint_dir))
    jobs = cfg.jobs if jobs is None else jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = []
        for t in tasks:
            log.info("seed %d, fold %s", t[4], t[3].name)
            results.append(_run_task(t))
    return ExperimentReport(cfg.to_dict(), cfg.task, cfg.model_kind, scheme, results)


DEFAULT_SWEEP_SIZES = (32, 64, 128, 256, 512)


def latent_sweep(records, cfg, sizes=DEFAULT_SWEEP_SIZES, checkpoint_dir=None, jobs=None):
    """One experiment per latent size with shared seeds; rows sorted by size."""
    if not sizes:
        raise EmovaeError("the sweep needs at least one latent size")
    rows = []
    reports = {}
    for size in sorted(sizes):
        sub = replace(cfg, representation=replace(cfg.representation, latent_dim=int(size)))
        ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / f"latent{size}"
        report = run_experiment(records, sub, ckpt, jobs)
        reports[size] = report
        summ = report.summary()
        row = {"latent_dim": int(size), "model": MODEL_NAMES[cfg.model_kind]}
        if cfg.task == "categorical":
            row.update(wa=summ["emotion"]["wa"], ua=summ["emotion"]["ua"])
        else:
            for t in DIMENSIONS:
                row[f"{DIM_SHORT[t].lower()}_f1"] = summ[t]["macro_f1"]
            row["mean_f1"] = summ["mean_f1"]
        rows.append(row)
    return rows, reports
