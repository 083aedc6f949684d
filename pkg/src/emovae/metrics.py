"""Confusion-matrix metrics.

WA is overall accuracy, UA the mean per-class recall over classes that occur
in the ground truth, and F1 is reported per class plus a macro mean over the
same classes. Ratios are formed with :class:`fractions.Fraction` and only
converted to float at the end, so hand-computed values match exactly.
"""

from fractions import Fraction

import numpy as np

from .errors import DimensionError, ParameterError


class ConfusionMatrix:
    """Integer counts, rows = true class, columns = predicted class."""

    def __init__(self, counts):
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ParameterError("confusion counts must be non-negative")
        self.counts = counts

    @classmethod
    def zeros(cls, n_classes):
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @classmethod
    def from_predictions(cls, true, pred, n_classes):
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
        return cls(cm)

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()})"

    def tolist(self):
        return self.counts.tolist()


def _as_cm(cm):
    return cm if isinstance(cm, ConfusionMatrix) else ConfusionMatrix(cm)


def weighted_accuracy(cm):
    cm = _as_cm(cm)
    if cm.total == 0:
        raise ParameterError("weighted accuracy of an empty confusion matrix")
    return float(Fraction(int(np.trace(cm.counts)), cm.total))


def unweighted_accuracy(cm):
    cm = _as_cm(cm)
    recalls = []
    for c in range(cm.n_classes):
        row = int(cm.counts[c].sum())
        if row:
            recalls.append(Fraction(int(cm.counts[c, c]), row))
    if not recalls:
        raise ParameterError("unweighted accuracy needs at least one class with true instances")
    return float(sum(recalls) / len(recalls))


def f_measure(cm):
    """(per-class F1 list, macro F1 over classes present in the ground truth)."""
    cm = _as_cm(cm)
    if cm.total == 0:
        raise ParameterError("F-measure of an empty confusion matrix")
    f1s = []
    present = []
    for c in range(cm.n_classes):
        tp = int(cm.counts[c, c])
        predicted = int(cm.counts[:, c].sum())
        actual = int(cm.counts[c].sum())
        p = Fraction(tp, predicted) if predicted else Fraction(0)
        r = Fraction(tp, actual) if actual else Fraction(0)
        f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
        f1s.append(f1)
        if actual:
            present.append(f1)
    macro = sum(present) / len(present) if present else Fraction(0)
    return [float(f) for f in f1s], float(macro)


def summarize(cm):
    cm = _as_cm(cm)
    per_class, macro = f_measure(cm)
    return {"wa": weighted_accuracy(cm), "ua": unweighted_accuracy(cm),
            "f1": per_class, "macro_f1": macro, "n": cm.total}


def shuffled_label_f1(true, pred, n_classes, rng, n_permutations=200):
    """Chance macro F1: mean macro F1 of ``pred`` against randomly permuted ``true``.

    Permuting the ground truth keeps both the label and the prediction
    marginals, so the result is the score a classifier with the same output
    distribution would get with no information about the input.
    """
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape or true.size == 0:
        raise DimensionError("need equal-length, non-empty label and prediction vectors")
    if n_permutations < 1:
        raise ParameterError("n_permutations must be at least 1")
    scores = [f_measure(ConfusionMatrix.from_predictions(true[rng.permutation(true.size)], pred,
                                                          n_classes))[1]
              for _ in range(n_permutations)]
    return float(np.mean(scores))
