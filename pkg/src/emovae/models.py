"""Segment-level representation learners: AE, VAE and CVAE.

All three share one fully connected encoder/decoder with hand-written
backpropagation. The encoder maps a standardized 800-value LogMel segment
(concatenated with a one-hot emotion label for the CVAE) through tanh hidden
layers to a latent head; the decoder mirrors the hidden sizes and ends in a
linear layer.

* AE: a single linear bottleneck code, trained on squared error only.
* VAE: mean and log-variance heads, ``z = mu + delta * exp(0.5 * log_var)``
  with ``delta ~ N(0, I)``, trained on squared error plus KL to N(0, I).
* CVAE: as VAE, with the label appended to both encoder and decoder inputs.
"""

from collections import OrderedDict, namedtuple
from dataclasses import asdict, dataclass, field

import numpy as np

from . import container
from .errors import DimensionError, ModelKindError, NumericError, ParameterError
from .numeric import AdamConfig, Parameter, RngStream, adam_update, glorot_uniform

AE, VAE, CVAE = "ae", "vae", "cvae"
MODEL_KINDS = (AE, VAE, CVAE)
FEATURE_MODES = ("mu", "mu-logvar", "sample")

LossComponents = namedtuple("LossComponents", ["total", "recon", "kl"])


def _tanh(a):
    return np.tanh(a)


def _tanh_grad(y):
    return 1.0 - y * y


def _relu(a):
    return np.maximum(a, 0.0)


def _relu_grad(y):
    return (y > 0.0).astype(np.float64)


ACTIVATIONS = {"tanh": (_tanh, _tanh_grad), "relu": (_relu, _relu_grad)}


@dataclass(frozen=True)
class EncoderDecoderSpec:
    model_kind: str = VAE
    input_dim: int = 800
    hidden_dims: tuple = (512, 256)
    latent_dim: int = 128
    condition_dim: int = 0
    activation: str = "tanh"
    logvar_clamp: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "model_kind", self.model_kind.lower())
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.model_kind not in MODEL_KINDS:
            raise ModelKindError(f"unknown model kind {self.model_kind!r}; expected one of {MODEL_KINDS}")
        if self.latent_dim < 1 or self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ParameterError(f"all layer sizes must be positive: {self}")
        if self.model_kind == CVAE and self.condition_dim < 1:
            raise ParameterError("a CVAE needs condition_dim >= 1 (the number of emotion classes)")
        if self.model_kind != CVAE and self.condition_dim != 0:
            raise ParameterError(f"{self.model_kind} models take no condition; got condition_dim={self.condition_dim}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")

    @property
    def variational(self):
        return self.model_kind != AE

    @property
    def encoder_input_dim(self):
        return self.input_dim + self.condition_dim

    @property
    def decoder_input_dim(self):
        return self.latent_dim + self.condition_dim

    @property
    def decoder_hidden_dims(self):
        return tuple(reversed(self.hidden_dims))

    def feature_dim(self, mode):
        return 2 * self.latent_dim if mode == "mu-logvar" else self.latent_dim


@dataclass
class LatentParams:
    mu: np.ndarray
    log_var: np.ndarray = None  # absent for AE


def one_hot(labels, n_classes):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ParameterError(f"labels must lie in [0, {n_classes}), got {labels.tolist()}")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def kl_divergence(lp):
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over latent dims.

    Returns a scalar for a single vector, one value per row for a batch.
    """
    mu = np.asarray(lp.mu, dtype=np.float64)
    lv = np.asarray(lp.log_var, dtype=np.float64)
    return 0.5 * np.sum(mu * mu + np.expm1(lv) - lv, axis=-1)  # expm1 keeps tiny log_var from cancelling below 0


def reparameterize(lp, rng=None, delta=None):
    """z = mu + delta * exp(0.5 * log_var); ``delta`` is drawn from ``rng`` unless given."""
    mu = np.asarray(lp.mu, dtype=np.float64)
    if delta is None:
        delta = rng.standard_normal(mu.size).reshape(mu.shape)
    return mu + delta * np.exp(0.5 * np.asarray(lp.log_var))


def vae_loss(x, x_hat, lp, kl_weight=1.0):
    """Batch-mean (total, recon, kl); recon is the squared error summed over features."""
    x = np.atleast_2d(x)
    x_hat = np.atleast_2d(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"target {x.shape} and reconstruction {x_hat.shape} differ")
    recon = float(np.mean(np.sum((x - x_hat) ** 2, axis=1)))
    if lp is None or lp.log_var is None:
        kl = 0.0
    else:
        kl = float(np.mean(np.atleast_1d(kl_divergence(lp))))
    return LossComponents(recon + kl_weight * kl, recon, kl)


class SegmentAutoencoder:
    """AE / VAE / CVAE over flattened LogMel segments.

    Parameters are created in a fixed order (encoder, mean head, decoder,
    output, then log-variance head) so an AE and a VAE built from the same
    seed share every weight except the log-variance head.
    """

    def __init__(self, spec, rng=None, adam=None, seed=0):
        self.spec = spec
        self.adam = adam if adam is not None else AdamConfig()
        self.params = OrderedDict()
        rng = rng if rng is not None else RngStream(seed)
        act, _ = ACTIVATIONS[spec.activation]
        self._act = act

        sizes = (spec.encoder_input_dim,) + spec.hidden_dims
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            self._add(f"enc{i}", rng, fan_out, fan_in)
        self._add("mu", rng, spec.latent_dim, sizes[-1])
        dsizes = (spec.decoder_input_dim,) + spec.decoder_hidden_dims
        for i, (fan_in, fan_out) in enumerate(zip(dsizes, dsizes[1:])):
            self._add(f"dec{i}", rng, fan_out, fan_in)
        self._add("out", rng, spec.input_dim, dsizes[-1])
        if spec.variational:
            self._add("logvar", rng, spec.latent_dim, sizes[-1])

    def _add(self, name, rng, fan_out, fan_in):
        self.params[f"{name}.W"] = Parameter(f"{name}.W", glorot_uniform(rng, fan_out, fan_in))
        self.params[f"{name}.b"] = Parameter(f"{name}.b", np.zeros(fan_out))

    def _layer(self, name):
        return self.params[f"{name}.W"], self.params[f"{name}.b"]

    @property
    def kind(self):
        return self.spec.model_kind

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self):
        return sum(p.value.size for p in self.params.values())

    # -- forward ---------------------------------------------------------

    def _check_condition(self, c, n_rows):
        if self.kind == CVAE:
            if c is None:
                raise ModelKindError("a CVAE needs a condition vector")
            c = np.atleast_2d(np.asarray(c, dtype=np.float64))
            if c.shape[1] != self.spec.condition_dim:
                raise DimensionError(f"condition has {c.shape[1]} entries, expected {self.spec.condition_dim}")
            if c.shape[0] == 1 and n_rows > 1:
                c = np.repeat(c, n_rows, axis=0)
            if c.shape[0] != n_rows:
                raise DimensionError(f"{c.shape[0]} conditions for {n_rows} rows")
            return c
        if c is not None:
            raise ModelKindError(f"{self.kind} models take no condition vector")
        return None

    def _check_input(self, x, width, what):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != width:
            raise DimensionError(f"{what} has {x.shape[1]} values, expected {width}")
        return x, single

    def _encode_hidden(self, x, c):
        h = x if c is None else np.hstack([x, c])
        hidden = [h]
        for i in range(len(self.spec.hidden_dims)):
            W, b = self._layer(f"enc{i}")
            h = self._act(h @ W.value.T + b.value)
            hidden.append(h)
        return hidden

    def _heads(self, h):
        W, b = self._layer("mu")
        mu = h @ W.value.T + b.value
        if not self.spec.variational:
            return mu, None, None
        W, b = self._layer("logvar")
        lv_raw = h @ W.value.T + b.value
        clamp = self.spec.logvar_clamp
        return mu, np.clip(lv_raw, -clamp, clamp), lv_raw

    def _decode_hidden(self, z, c):
        d = z if c is None else np.hstack([z, c])
        hidden = [d]
        for i in range(len(self.spec.hidden_dims)):
            W, b = self._layer(f"dec{i}")
            d = self._act(d @ W.value.T + b.value)
            hidden.append(d)
        W, b = self._layer("out")
        return hidden, d @ W.value.T + b.value

    def encode(self, x, c=None):
        x, single = self._check_input(x, self.spec.input_dim, "segment")
        c = self._check_condition(c, x.shape[0])
        mu, lv, _ = self._heads(self._encode_hidden(x, c)[-1])
        if single:
            mu = mu[0]
            lv = None if lv is None else lv[0]
        return LatentParams(mu, lv)

    def decode(self, z, c=None):
        z, single = self._check_input(z, self.spec.latent_dim, "latent vector")
        c = self._check_condition(c, z.shape[0])
        x_hat = self._decode_hidden(z, c)[1]
        return x_hat[0] if single else x_hat

    def reconstruct(self, x, c=None):
        """Deterministic reconstruction through the mean code."""
        lp = self.encode(x, c)
        return self.decode(lp.mu, c)

    # -- training --------------------------------------------------------

    def loss(self, x, c=None, delta=None, rng=None, kl_weight=1.0):
        """Batch-mean loss components without touching gradients."""
        x, _ = self._check_input(x, self.spec.input_dim, "segment")
        c = self._check_condition(c, x.shape[0])
        mu, lv, _ = self._heads(self._encode_hidden(x, c)[-1])
        if self.spec.variational:
            lp = LatentParams(mu, lv)
            if delta is None:
                delta = rng.standard_normal(mu.size).reshape(mu.shape)
            z = reparameterize(lp, delta=np.broadcast_to(delta, mu.shape))
        else:
            lp, z = None, mu
        x_hat = self._decode_hidden(z, c)[1]
        return vae_loss(x, x_hat, lp, kl_weight)

    def loss_and_grad(self, x, c=None, delta=None, rng=None, kl_weight=1.0):
        """Batch-mean loss; gradients are added to each ``Parameter.grad``.

        ``delta`` fixes the reparameterization noise (shape batch x latent);
        otherwise it is drawn from ``rng``.
        """
        x, _ = self._check_input(x, self.spec.input_dim, "segment")
        n = x.shape[0]
        c = self._check_condition(c, n)
        spec = self.spec
        _, act_grad = ACTIVATIONS[spec.activation]

        enc = self._encode_hidden(x, c)
        mu, lv, lv_raw = self._heads(enc[-1])
        if spec.variational:
            if delta is None:
                delta = rng.standard_normal(n * spec.latent_dim).reshape(n, spec.latent_dim)
            delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), mu.shape)
            sigma = np.exp(0.5 * lv)
            z = mu + delta * sigma
            kl_rows = 0.5 * np.sum(mu * mu + sigma * sigma - 1.0 - lv, axis=1)
            kl = float(np.mean(kl_rows))
        else:
            z = mu
            kl = 0.0
        dec, x_hat = self._decode_hidden(z, c)
        diff = x_hat - x
        recon = float(np.mean(np.sum(diff * diff, axis=1)))
        total = recon + kl_weight * kl

        # decoder
        g = (2.0 / n) * diff
        W, b = self._layer("out")
        W.grad += g.T @ dec[-1]
        b.grad += g.sum(axis=0)
        g = g @ W.value
        for i in reversed(range(len(spec.hidden_dims))):
            g = g * act_grad(dec[i + 1])
            W, b = self._layer(f"dec{i}")
            W.grad += g.T @ dec[i]
            b.grad += g.sum(axis=0)
            g = g @ W.value
        dz = g[:, :spec.latent_dim]

        # sampling node and KL
        h = enc[-1]
        W, b = self._layer("mu")
        dmu = dz + (kl_weight / n) * mu if spec.variational else dz
        W.grad += dmu.T @ h
        b.grad += dmu.sum(axis=0)
        dh = dmu @ W.value
        if spec.variational:
            dlv = dz * delta * 0.5 * sigma + (kl_weight / n) * 0.5 * (sigma * sigma - 1.0)
            clamp = spec.logvar_clamp
            dlv = dlv * ((lv_raw >= -clamp) & (lv_raw <= clamp))
            W, b = self._layer("logvar")
            W.grad += dlv.T @ h
            b.grad += dlv.sum(axis=0)
            dh = dh + dlv @ W.value

        # encoder
        g = dh
        for i in reversed(range(len(spec.hidden_dims))):
            g = g * act_grad(enc[i + 1])
            W, b = self._layer(f"enc{i}")
            W.grad += g.T @ enc[i]
            b.grad += g.sum(axis=0)
            if i:
                g = g @ W.value
        return LossComponents(total, recon, kl)

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0.0

    # -- persistence -----------------------------------------------------

    def state(self):
        tensors = OrderedDict()
        for name, p in self.params.items():
            tensors[name] = p.value
        for name, p in self.params.items():
            tensors[name + ".m"] = p.m
            tensors[name + ".v"] = p.v
        return tensors

    def meta(self):
        spec = asdict(self.spec)
        spec["hidden_dims"] = list(spec["hidden_dims"])
        return {"kind": "representation", "model_kind": self.kind, "spec": spec,
                "adam": asdict(self.adam)}

    def save(self, path):
        container.save(path, self.state(), self.meta())

    @classmethod
    def load(cls, path):
        tensors, meta = container.load(path)
        return cls.from_state(tensors, meta)

    @classmethod
    def from_state(cls, tensors, meta):
        spec_fields = dict(meta["spec"])
        spec_fields["hidden_dims"] = tuple(spec_fields["hidden_dims"])
        model = cls.__new__(cls)
        model.spec = EncoderDecoderSpec(**spec_fields)
        model.adam = AdamConfig(**meta["adam"])
        model._act = ACTIVATIONS[model.spec.activation][0]
        model.params = OrderedDict()
        for name in [k for k in tensors if not k.endswith((".m", ".v"))]:
            p = Parameter(name, tensors[name])
            p.m = np.array(tensors.get(name + ".m", np.zeros_like(p.value)))
            p.v = np.array(tensors.get(name + ".v", np.zeros_like(p.value)))
            model.params[name] = p
        return model


def train_step(model, x, c=None, rng=None, kl_weight=1.0, delta=None, batch_id=None):
    """One Adam step on a minibatch. Returns the batch-mean loss components."""
    if np.asarray(x).shape[0] == 0:
        raise ParameterError("empty minibatch")
    model.zero_grad()
    # a diverged batch is reported below rather than through numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        loss = model.loss_and_grad(x, c, delta=delta, rng=rng, kl_weight=kl_weight)
    if not np.isfinite(loss.total):
        where = f" in batch {batch_id}" if batch_id is not None else ""
        raise NumericError(f"non-finite loss{where}: recon={loss.recon}, kl={loss.kl}")
    model.adam = adam_update(model.parameters(), model.adam)
    return loss


@dataclass
class FitConfig:
    epochs: int = 10
    batch_size: int = 128
    recon_threshold: float = None
    kl_weight: float = 1.0


@dataclass
class FitResult:
    history: list = field(default_factory=list)  # LossComponents per epoch
    stopped_early: bool = False


def fit(model, segments, conditions=None, config=None, rng=None):
    """Train ``model`` on standardized segments with deterministic shuffling.

    Stops once an epoch's mean reconstruction error drops below
    ``config.recon_threshold`` (when set). ``conditions`` are one-hot rows
    aligned with ``segments`` (CVAE only).
    """
    config = config or FitConfig()
    rng = rng if rng is not None else RngStream(0)
    segments = np.asarray(segments, dtype=np.float64)
    n = segments.shape[0] if segments.ndim == 2 else 0
    if n == 0:
        raise ParameterError("cannot fit on an empty set of segments")
    if conditions is not None:
        conditions = np.asarray(conditions, dtype=np.float64)
    result = FitResult()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            c = None if conditions is None else conditions[idx]
            loss = train_step(model, segments[idx], c, rng=rng, kl_weight=config.kl_weight,
                              batch_id=f"{epoch}:{bi}")
            sums += np.array(loss) * len(idx)
        epoch_loss = LossComponents(*(sums / n))
        result.history.append(epoch_loss)
        if config.recon_threshold is not None and epoch_loss.recon < config.recon_threshold:
            result.stopped_early = epoch + 1 < config.epochs
            break
    return result


def extract_features(model, x, c=None, mode="mu-logvar", rng=None, delta=None):
    """Latent features for a batch of segments (or one segment).

    ``mu`` gives the mean code (the AE's bottleneck), ``mu-logvar`` the mean
    and log-variance concatenated, ``sample`` one reparameterized draw.
    """
    if mode not in FEATURE_MODES:
        raise ParameterError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    if not model.spec.variational and mode != "mu":
        raise ModelKindError(f"an AE only supports feature mode 'mu', not {mode!r}")
    lp = model.encode(x, c)
    if mode == "mu":
        return lp.mu
    if mode == "mu-logvar":
        return np.concatenate([lp.mu, lp.log_var], axis=-1)
    return reparameterize(lp, rng, delta)


def extract_features_marginal(model, x, mode="mu-logvar", rng=None):
    """CVAE features averaged over every candidate label, so no label is needed."""
    if model.kind != CVAE:
        return extract_features(model, x, None, mode, rng)
    x = np.atleast_2d(x)
    k = model.spec.condition_dim
    total = 0.0
    for label in range(k):
        c = np.zeros((x.shape[0], k))
        c[:, label] = 1.0
        total = total + extract_features(model, x, c, mode, rng)
    return total / k
