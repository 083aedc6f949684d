"""Report figures rendered to PNG files with the Agg backend."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}

# no timestamps or version strings in the PNG, so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_confusion(counts, labels, path, title=None):
    counts = np.asarray(counts)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        rows = counts.sum(axis=1, keepdims=True)
        frac = np.divide(counts, rows, out=np.zeros(counts.shape), where=rows > 0)
        ax.imshow(frac, cmap="Blues", vmin=0.0, vmax=1.0)
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                        color="white" if frac[i, j] > 0.6 else "black")
        ax.set_xticks(range(len(labels)), labels, rotation=30)
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_loss_history(histories, path, title="Representation training"):
    """``histories`` maps a run label to a list of (total, recon, kl) tuples."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for label, hist in histories.items():
            recon = [h[1] for h in hist]
            ax.plot(np.arange(1, len(recon) + 1), recon, lw=1.0, label=label)
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.set_xlabel("epoch")
        ax.set_ylabel("reconstruction error per segment")
        ax.set_title(title)
        if 1 < len(histories) <= 10:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(rows, path, metrics=("wa", "ua")):
    """Accuracy (or F1) against latent size, one line per metric."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        sizes = [r["latent_dim"] for r in rows]
        for m in metrics:
            ax.plot(sizes, [100.0 * r[m] for r in rows], marker="o", lw=1.2, label=m.upper())
        ax.set_xscale("log", base=2)
        ax.set_xticks(sizes, [str(s) for s in sizes])
        ax.set_xlabel("number of latent features")
        ax.set_ylabel("score (%)")
        ax.set_title(rows[0]["model"] if rows else "")
        ax.legend(frameon=False)
        return _save(fig, path)
