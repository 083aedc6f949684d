"""Finite-difference verification of every hand-written backward pass.

Each case builds a small random model, computes analytic gradients once and
compares every parameter tensor against central differences. The VAE and
CVAE cases freeze the reparameterization noise so the loss is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierSpec, LstmClassifier
from .models import AE, CVAE, VAE, EncoderDecoderSpec, SegmentAutoencoder, one_hot
from .numeric import RngStream, finite_difference_gradient, relative_error

SUITES = (AE, VAE, CVAE, "lstm")
TOLERANCE = 1e-4


@dataclass(frozen=True)
class CaseResult:
    suite: str
    index: int
    description: str
    errors: dict  # parameter name -> max relative error

    @property
    def max_error(self):
        return max(self.errors.values())


def _check_params(params, loss_of, eps):
    """Compare ``p.grad`` with central differences of ``loss_of()`` for each parameter."""
    errors = {}
    for p in params:
        base = p.value.copy()

        def f(flat, p=p):
            p.value[...] = flat.reshape(p.value.shape)
            return loss_of()

        numeric = finite_difference_gradient(f, base, eps, order=4)
        p.value[...] = base
        errors[p.name] = relative_error(p.grad, numeric)
    return errors


def _draw(rng, low, high, n=1):
    """``n`` integers from ``[low, high]``."""
    return tuple(int(v) + low for v in rng.integers(n, high - low + 1))


def autoencoder_case(kind, rng, eps=1e-3):
    (d_in,), (latent,), (batch,), (n_cond,) = (_draw(rng, 2, 7), _draw(rng, 1, 4),
                                               _draw(rng, 1, 4), _draw(rng, 2, 4))
    hidden = _draw(rng, 2, 6, _draw(rng, 1, 2)[0])
    kl_weight = float(rng.uniform(1, 0.25, 1.5)[0])
    spec = EncoderDecoderSpec(kind, input_dim=d_in, hidden_dims=hidden, latent_dim=latent,
                              condition_dim=n_cond if kind == CVAE else 0)
    model = SegmentAutoencoder(spec, rng.child(0))
    x = rng.child(1).standard_normal(batch * d_in).reshape(batch, d_in)
    c = one_hot(rng.child(2).integers(batch, n_cond), n_cond) if kind == CVAE else None
    delta = rng.child(3).standard_normal(batch * latent).reshape(batch, latent)

    model.zero_grad()
    model.loss_and_grad(x, c, delta=delta, kl_weight=kl_weight)
    errors = _check_params(model.parameters(),
                           lambda: model.loss(x, c, delta=delta, kl_weight=kl_weight).total, eps)
    desc = f"in={d_in} hidden={hidden} latent={latent} batch={batch} kl_weight={kl_weight:.3f}"
    if kind == CVAE:
        desc += f" conditions={n_cond}"
    return desc, errors


def lstm_case(rng, eps=1e-3):
    (d_in,), (n_classes,), (batch,) = _draw(rng, 1, 4), _draw(rng, 2, 4), _draw(rng, 1, 4)
    hidden = _draw(rng, 2, 4, 2)
    readout = ("final", "mean")[_draw(rng, 0, 1)[0]]
    lengths = list(_draw(rng.child(3), 1, 5, batch))
    clf = LstmClassifier(ClassifierSpec(d_in, n_classes, hidden, readout), rng.child(0))
    xs = rng.child(1)
    seqs = [xs.child(i).standard_normal(n * d_in).reshape(n, d_in) for i, n in enumerate(lengths)]
    labels = rng.child(2).integers(batch, n_classes)

    clf.zero_grad()
    clf.loss_and_grad(seqs, labels)
    errors = _check_params(clf.parameters(),
                           lambda: float(clf.sequence_losses(seqs, labels).mean()), eps)
    desc = f"in={d_in} hidden={hidden} classes={n_classes} lengths={lengths} readout={readout}"
    return desc, errors


def run_gradcheck(n_cases=400, seed=0, suites=SUITES):
    """Run ``n_cases`` random configurations spread round-robin over ``suites``."""
    root = RngStream(seed)
    results = []
    for i in range(n_cases):
        suite = suites[i % len(suites)]
        rng = root.child(i)
        if suite == "lstm":
            desc, errors = lstm_case(rng)
        else:
            desc, errors = autoencoder_case(suite, rng)
        results.append(CaseResult(suite, i, desc, errors))
    return results


def summarize(results, tolerance=TOLERANCE):
    """Per-suite (cases, worst error, passed) plus an overall verdict."""
    table = {}
    for r in results:
        n, worst = table.get(r.suite, (0, 0.0))
        table[r.suite] = (n + 1, max(worst, r.max_error))
    rows = {s: (n, worst, worst < tolerance) for s, (n, worst) in table.items()}
    return rows, all(ok for _, _, ok in rows.values())
