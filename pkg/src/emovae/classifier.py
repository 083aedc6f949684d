"""Two-layer LSTM utterance classifier over sequences of segment features.

Gate equations per step::

    i = sigmoid(W_i x + U_i h + b_i)     f = sigmoid(W_f x + U_f h + b_f)
    g = tanh(W_g x + U_g h + b_g)        o = sigmoid(W_o x + U_o h + b_o)
    c = f * c_prev + i * g               h = o * tanh(c)

The four gates are stored stacked in the order (input, forget, cell, output).
The second layer's hidden state at each sequence's last valid step (or the
mean over valid steps) goes through a dense layer and a softmax; training
minimizes cross-entropy with backpropagation through time.
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import container
from .errors import DimensionError, NumericError, ParameterError
from .numeric import AdamConfig, Parameter, RngStream, adam_update, glorot_uniform

GATES = ("input", "forget", "cell", "output")
READOUTS = ("final", "mean")


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class SequenceExample:
    utterance_id: str
    features: np.ndarray  # (T, input_dim)
    label: int

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        if self.features.shape[0] < 1:
            raise ParameterError(f"{self.utterance_id}: empty feature sequence")


@dataclass(frozen=True)
class ClassifierSpec:
    input_dim: int
    n_classes: int
    lstm_hidden: tuple = (128, 128)
    readout: str = "final"
    forget_bias: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lstm_hidden", tuple(int(h) for h in self.lstm_hidden))
        if len(self.lstm_hidden) != 2:
            raise ParameterError(f"the classifier has exactly two LSTM layers, got {self.lstm_hidden}")
        if self.n_classes < 2:
            raise ParameterError(f"need at least two classes, got {self.n_classes}")
        if self.readout not in READOUTS:
            raise ParameterError(f"unknown readout {self.readout!r}; expected one of {READOUTS}")


def lstm_cell(x_t, h_prev, c_prev, W, U, b):
    """One LSTM step for a batch; W (4H, I), U (4H, H), b (4H,) stacked by gate."""
    H = U.shape[1]
    if W.shape[0] != 4 * H or U.shape[0] != 4 * H or b.shape != (4 * H,):
        raise DimensionError(f"inconsistent gate shapes W{W.shape} U{U.shape} b{b.shape}")
    if np.shape(x_t)[-1] != W.shape[1] or np.shape(h_prev)[-1] != H or np.shape(c_prev)[-1] != H:
        raise DimensionError(
            f"x {np.shape(x_t)}, h {np.shape(h_prev)}, c {np.shape(c_prev)} do not match W{W.shape} U{U.shape}")
    a = x_t @ W.T + h_prev @ U.T + b
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H:2 * H])
    g = np.tanh(a[..., 2 * H:3 * H])
    o = sigmoid(a[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


class _LstmLayer:
    def __init__(self, prefix, params):
        self.W = params[f"{prefix}.W"]
        self.U = params[f"{prefix}.U"]
        self.b = params[f"{prefix}.b"]
        self.hidden = self.U.value.shape[1]

    def forward(self, X):
        B, T, _ = X.shape
        H = self.hidden
        W, U, b = self.W.value, self.U.value, self.b.value
        xw = X @ W.T + b  # input projections for all steps at once
        hs = np.zeros((B, T + 1, H))
        cs = np.zeros((B, T + 1, H))
        gates = np.empty((B, T, 4 * H))
        tanh_c = np.empty((B, T, H))
        for t in range(T):
            a = xw[:, t] + hs[:, t] @ U.T
            gi = sigmoid(a[:, :H])
            gf = sigmoid(a[:, H:2 * H])
            gg = np.tanh(a[:, 2 * H:3 * H])
            go = sigmoid(a[:, 3 * H:])
            cs[:, t + 1] = gf * cs[:, t] + gi * gg
            tanh_c[:, t] = np.tanh(cs[:, t + 1])
            hs[:, t + 1] = go * tanh_c[:, t]
            gates[:, t, :H] = gi
            gates[:, t, H:2 * H] = gf
            gates[:, t, 2 * H:3 * H] = gg
            gates[:, t, 3 * H:] = go
        return hs[:, 1:], (X, hs, cs, gates, tanh_c)

    def backward(self, dH, cache):
        X, hs, cs, gates, tanh_c = cache
        B, T, _ = X.shape
        H = self.hidden
        U = self.U.value
        dA = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            gi = gates[:, t, :H]
            gf = gates[:, t, H:2 * H]
            gg = gates[:, t, 2 * H:3 * H]
            go = gates[:, t, 3 * H:]
            dh = dH[:, t] + dh_next
            tc = tanh_c[:, t]
            dc = dh * go * (1.0 - tc * tc) + dc_next
            dA[:, t, :H] = dc * gg * gi * (1.0 - gi)
            dA[:, t, H:2 * H] = dc * cs[:, t] * gf * (1.0 - gf)
            dA[:, t, 2 * H:3 * H] = dc * gi * (1.0 - gg * gg)
            dA[:, t, 3 * H:] = dh * tc * go * (1.0 - go)
            dh_next = dA[:, t] @ U
            dc_next = dc * gf
        flat = dA.reshape(B * T, 4 * H)
        self.W.grad += flat.T @ X.reshape(B * T, -1)
        self.U.grad += flat.T @ hs[:, :-1].reshape(B * T, H)
        self.b.grad += flat.sum(axis=0)
        return dA @ self.W.value


def pad_batch(sequences):
    """Right-pad a list of (T_i, D) arrays to (B, T_max, D) plus their lengths."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if lengths.size == 0 or lengths.min() < 1:
        raise ParameterError("every sequence needs at least one step")
    dim = sequences[0].shape[1]
    X = np.zeros((len(sequences), int(lengths.max()), dim))
    for i, s in enumerate(sequences):
        if s.shape[1] != dim:
            raise DimensionError(f"sequence {i} has feature width {s.shape[1]}, expected {dim}")
        X[i, :len(s)] = s
    return X, lengths


class LstmClassifier:
    def __init__(self, spec, rng=None, adam=None, seed=0):
        self.spec = spec
        self.adam = adam if adam is not None else AdamConfig(beta1=0.9, beta2=0.999)
        rng = rng if rng is not None else RngStream(seed)
        self.params = OrderedDict()
        fan_in = spec.input_dim
        for li, H in enumerate(spec.lstm_hidden, start=1):
            W = np.vstack([glorot_uniform(rng, H, fan_in) for _ in GATES])
            U = np.vstack([glorot_uniform(rng, H, H) for _ in GATES])
            b = np.zeros(4 * H)
            b[H:2 * H] = spec.forget_bias
            for name, val in (("W", W), ("U", U), ("b", b)):
                self.params[f"lstm{li}.{name}"] = Parameter(f"lstm{li}.{name}", val)
            fan_in = H
        self.params["dense.W"] = Parameter("dense.W", glorot_uniform(rng, spec.n_classes, fan_in))
        self.params["dense.b"] = Parameter("dense.b", np.zeros(spec.n_classes))

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0.0

    def gate_params(self, layer, gate):
        """(W_g, U_g, b_g) views for ``layer`` in {1, 2} and a gate name."""
        H = self.spec.lstm_hidden[layer - 1]
        k = GATES.index(gate)
        sl = slice(k * H, (k + 1) * H)
        return (self.params[f"lstm{layer}.W"].value[sl], self.params[f"lstm{layer}.U"].value[sl],
                self.params[f"lstm{layer}.b"].value[sl])

    def _readout_mask(self, lengths, T):
        B = len(lengths)
        if self.spec.readout == "final":
            m = np.zeros((B, T))
            m[np.arange(B), lengths - 1] = 1.0
        else:
            m = (np.arange(T)[None, :] < lengths[:, None]) / lengths[:, None]
        return m

    def _forward(self, X, lengths):
        if X.shape[2] != self.spec.input_dim:
            raise DimensionError(f"features have width {X.shape[2]}, expected {self.spec.input_dim}")
        l1 = _LstmLayer("lstm1", self.params)
        l2 = _LstmLayer("lstm2", self.params)
        H1, c1 = l1.forward(X)
        H2, c2 = l2.forward(H1)
        mask = self._readout_mask(lengths, X.shape[1])
        read = np.einsum("bt,bth->bh", mask, H2)
        logits = read @ self.params["dense.W"].value.T + self.params["dense.b"].value
        return logits, (l1, c1, l2, c2, mask, read)

    def logits(self, sequences):
        X, lengths = pad_batch([np.atleast_2d(s) for s in sequences])
        return self._forward(X, lengths)[0]

    def predict_proba(self, sequences):
        return softmax(self.logits(sequences))

    def predict(self, sequences):
        """Argmax class per sequence; ties go to the lowest index."""
        return np.argmax(self.logits(sequences), axis=1)

    def sequence_losses(self, sequences, labels):
        """Cross-entropy of each sequence, evaluated as one padded batch."""
        lp = log_softmax(self.logits(sequences))
        labels = np.asarray(labels, dtype=np.int64)
        return -lp[np.arange(len(labels)), labels]

    def loss_and_grad(self, sequences, labels):
        """Mean cross-entropy over the batch; gradients are accumulated."""
        X, lengths = pad_batch([np.atleast_2d(s) for s in sequences])
        labels = np.asarray(labels, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= self.spec.n_classes:
            raise ParameterError(f"labels must lie in [0, {self.spec.n_classes})")
        logits, (l1, c1, l2, c2, mask, read) = self._forward(X, lengths)
        B = len(labels)
        lp = log_softmax(logits)
        loss = float(-lp[np.arange(B), labels].mean())

        dlogits = np.exp(lp)
        dlogits[np.arange(B), labels] -= 1.0
        dlogits /= B
        Wd = self.params["dense.W"]
        Wd.grad += dlogits.T @ read
        self.params["dense.b"].grad += dlogits.sum(axis=0)
        dread = dlogits @ Wd.value
        dH2 = mask[:, :, None] * dread[:, None, :]
        dH1 = l2.backward(dH2, c2)
        l1.backward(dH1, c1)
        return loss

    # -- persistence -----------------------------------------------------

    def snapshot(self):
        return {name: p.value.copy() for name, p in self.params.items()}

    def restore(self, values):
        for name, val in values.items():
            self.params[name].value[...] = val

    def meta(self):
        spec = asdict(self.spec)
        spec["lstm_hidden"] = list(spec["lstm_hidden"])
        return {"kind": "classifier", "spec": spec, "adam": asdict(self.adam)}

    def save(self, path, extra_meta=None):
        meta = self.meta()
        if extra_meta:
            meta.update(extra_meta)
        container.save(path, OrderedDict((n, p.value) for n, p in self.params.items()), meta)

    @classmethod
    def load(cls, path):
        tensors, meta = container.load(path)
        spec = dict(meta["spec"])
        spec["lstm_hidden"] = tuple(spec["lstm_hidden"])
        clf = cls(ClassifierSpec(**spec), adam=AdamConfig(**meta["adam"]))
        clf.restore(tensors)
        return clf


@dataclass
class TrainConfig:
    max_epochs: int = 20
    patience: int = 3
    batch_size: int = 8


@dataclass
class TrainResult:
    history: list = field(default_factory=list)  # dicts: epoch, train_loss, val_loss
    best_epoch: int = 0


def _mean_loss(clf, examples, batch_size=64):
    total = 0.0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        total += clf.sequence_losses([e.features for e in chunk], [e.label for e in chunk]).sum()
    return total / len(examples)


def train(clf, train_set, val_set, config=None, rng=None):
    """Minibatch Adam training with early stopping on validation loss.

    The classifier is left holding the parameters of the epoch with the
    lowest validation loss.
    """
    config = config or TrainConfig()
    rng = rng if rng is not None else RngStream(0)
    if not train_set or not val_set:
        raise ParameterError("training and validation sets must both be non-empty")
    result = TrainResult()
    best_loss = np.inf
    best = clf.snapshot()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            clf.zero_grad()
            loss = clf.loss_and_grad([e.features for e in batch], [e.label for e in batch])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite classifier loss in epoch {epoch}, batch starting at {start}")
            clf.adam = adam_update(clf.parameters(), clf.adam)
            total += loss * len(batch)
        val_loss = float(_mean_loss(clf, val_set))
        result.history.append({"epoch": epoch, "train_loss": total / len(train_set), "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss, best, stale = val_loss, clf.snapshot(), 0
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    clf.restore(best)
    return result

