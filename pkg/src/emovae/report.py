"""Write experiment reports to a directory.

Everything written here is a pure function of the report contents: JSON keys
are sorted, floats use ``repr`` and nothing records wall-clock time, so two
runs with the same config produce identical bytes.
"""

import csv
import json
from pathlib import Path

from .corpus import DIMENSIONS
from .experiment import DIM_SHORT, MODEL_NAMES, class_names
from . import plotting

SWEEP_HEADER = ("latent_dim", "model", "wa", "ua")
SWEEP_DIM_HEADER = ("latent_dim", "model", "a_f1", "p_f1", "v_f1", "mean_f1")


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_predictions(path, predictions, n_classes):
    header = ["utterance_id", "true", "predicted"] + [f"p_{i}" for i in range(n_classes)]
    rows = [[uid, true, pred, *[repr(float(p)) for p in probs]]
            for uid, true, pred, probs in sorted(predictions)]
    return _write_csv(path, header, rows)


def _metric_rows(report):
    rows = []
    for s in report.seeds:
        m = report.seed_metrics(s)
        for t in report.targets:
            rows.append([s, t, m[t]["wa"], m[t]["ua"], m[t]["macro_f1"]])
    summ = report.summary()
    for t in report.targets:
        rows.append(["mean", t, summ[t]["wa"], summ[t]["ua"], summ[t]["macro_f1"]])
    return rows


def _per_class_rows(report):
    rows = []
    for s in report.seeds:
        m = report.seed_metrics(s)
        for t in report.targets:
            for name, f1 in zip(class_names(t), m[t]["f1"]):
                rows.append([s, t, name, f1])
    return rows


def markdown_table(report):
    """Table 1 layout for the categorical task, Table 2 layout for the dimensional one."""
    summ = report.summary()
    name = MODEL_NAMES[report.model_kind]
    seeds = ", ".join(str(s) for s in report.seeds)
    if report.task == "categorical":
        head = "| Model | WA (%) | UA (%) |\n|---|---:|---:|\n"
        e = summ["emotion"]
        body = f"| {name} | {100 * e['wa']:.2f} | {100 * e['ua']:.2f} |\n"
        caption = "Accuracy over four emotions"
    else:
        head = "| Model | A | P | V | Mean |\n|---|---:|---:|---:|---:|\n"
        vals = [100 * summ[t]["macro_f1"] for t in DIMENSIONS] + [100 * summ["mean_f1"]]
        body = f"| {name} | " + " | ".join(f"{v:.2f}" for v in vals) + " |\n"
        caption = "Macro F1 (%) per dimension; Mean is the arithmetic mean of A, P and V"
    return (f"{caption}, {report.fold_scheme} cross-validation, "
            f"mean over seeds [{seeds}].\n\n{head}{body}")


def write_report(report, out_dir, figures=True):
    """Emit report.json, the CSV tables, report.md, prediction dumps and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_json(out / "report.json", report.to_dict())]
    written.append(_write_csv(out / "metrics.csv", ("seed", "target", "wa", "ua", "macro_f1"),
                              _metric_rows(report)))
    written.append(_write_csv(out / "per_class_f1.csv", ("seed", "target", "class", "f1"),
                              _per_class_rows(report)))
    (out / "report.md").write_text(markdown_table(report), encoding="utf-8")
    written.append(out / "report.md")

    rep_rows = [[f.seed, f.fold, e, *h] for f in report.folds
                for e, h in enumerate(f.rep_history, start=1)]
    written.append(_write_csv(out / "rep_history.csv",
                              ("seed", "fold", "epoch", "total", "recon", "kl"), rep_rows))
    clf_rows = [[f.seed, f.fold, t, h["epoch"], h["train_loss"], h["val_loss"]]
                for f in report.folds for t in report.targets for h in f.clf_history[t]]
    written.append(_write_csv(out / "clf_history.csv",
                              ("seed", "fold", "target", "epoch", "train_loss", "val_loss"), clf_rows))

    for s in report.seeds:
        for t in report.targets:
            preds = [p for f in report.folds if f.seed == s for p in f.predictions[t]]
            written.append(write_predictions(out / f"predictions_seed{s}_{t}.csv", preds,
                                             len(class_names(t))))
            if figures:
                written.append(plotting.plot_confusion(
                    report.aggregate(s, t).counts, class_names(t),
                    out / f"confusion_seed{s}_{t}.png",
                    title=f"{MODEL_NAMES[report.model_kind]}, {t}, seed {s}"))
    if figures and report.folds and report.folds[0].rep_history:
        first = report.seeds[0]
        hist = {f.fold: f.rep_history for f in report.folds if f.seed == first}
        written.append(plotting.plot_loss_history(hist, out / f"rep_loss_seed{first}.png"))
    return written


def sweep_header(task):
    return SWEEP_HEADER if task == "categorical" else SWEEP_DIM_HEADER


def write_sweep(rows, task, out_dir, figures=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = sweep_header(task)
    written = [_write_csv(out / "sweep.csv", header, [[r[k] for k in header] for r in rows])]
    md = "| Latent size | " + " | ".join(h.upper() for h in header[2:]) + " |\n"
    md += "|---:|" + "---:|" * (len(header) - 2) + "\n"
    for r in rows:
        md += f"| {r['latent_dim']} | " + " | ".join(f"{100 * r[k]:.2f}" for k in header[2:]) + " |\n"
    (out / "sweep.md").write_text(md, encoding="utf-8")
    written.append(out / "sweep.md")
    if figures:
        metrics = ("wa", "ua") if task == "categorical" else \
            tuple(f"{DIM_SHORT[d].lower()}_f1" for d in DIMENSIONS) + ("mean_f1",)
        written.append(plotting.plot_sweep(rows, out / "sweep.png", metrics))
    return written
