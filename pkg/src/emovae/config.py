"""Declarative run configuration.

A run is described by one JSON document. Missing keys take the defaults
below, unknown keys are rejected. The autoencoder defaults are the published
settings: 512/256 encoder units, a 128-dimensional latent space and Adam
with beta1=0.999, beta2=0.99, eps=1e-8, lr=1e-3. Note that this beta pair is
the reverse of the usual (0.9, 0.999) ordering; it is kept as published and
both values are configurable. The LSTM uses Adam's usual defaults.
"""

import dataclasses
import json
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .numeric import AdamConfig

TASKS = ("categorical", "dimensional")


@dataclass
class AdamSettings:
    beta1: float = 0.999
    beta2: float = 0.99
    epsilon: float = 1e-8
    learning_rate: float = 1e-3

    def build(self):
        return AdamConfig(self.beta1, self.beta2, self.epsilon, self.learning_rate)


def _classifier_adam():
    return AdamSettings(beta1=0.9, beta2=0.999)


@dataclass
class DspSettings:
    sample_rate: int = 16000
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 80
    fmin: float = 0.0
    fmax: typing.Optional[float] = None
    floor: float = 1e-10
    frames_per_segment: int = 10


@dataclass
class RepresentationSettings:
    hidden_dims: typing.List[int] = field(default_factory=lambda: [512, 256])
    latent_dim: int = 128
    activation: str = "tanh"
    logvar_clamp: float = 10.0
    kl_weight: float = 1.0
    epochs: int = 8
    batch_size: int = 128
    recon_threshold: typing.Optional[float] = None
    adam: AdamSettings = field(default_factory=AdamSettings)


@dataclass
class ClassifierSettings:
    lstm_hidden: typing.List[int] = field(default_factory=lambda: [128, 128])
    readout: str = "final"
    max_epochs: int = 20
    patience: int = 3
    batch_size: int = 8
    validation_fraction: float = 0.1
    standardize_features: bool = True
    adam: AdamSettings = field(default_factory=_classifier_adam)


@dataclass
class CvSettings:
    categorical: str = "loso"
    dimensional: str = "kfold"
    dimensional_folds: int = 10
    holdout_fraction: float = 0.9


@dataclass
class RunConfig:
    manifest: typing.Optional[str] = None
    task: str = "categorical"
    model_kind: str = "cvae"
    feature_mode: str = "mu-logvar"
    seeds: typing.List[int] = field(default_factory=lambda: [0, 1, 2])
    jobs: int = 1
    save_checkpoints: bool = True
    dsp: DspSettings = field(default_factory=DspSettings)
    representation: RepresentationSettings = field(default_factory=RepresentationSettings)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    cv: CvSettings = field(default_factory=CvSettings)

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.model_kind not in ("ae", "vae", "cvae"):
            raise ConfigError(f"model_kind must be ae, vae or cvae, got {self.model_kind!r}")
        if self.feature_mode not in ("mu", "mu-logvar", "sample"):
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.cv.categorical not in ("loso", "kfold", "holdout"):
            raise ConfigError(f"unknown categorical CV scheme {self.cv.categorical!r}")
        if self.cv.dimensional not in ("loso", "kfold", "holdout"):
            raise ConfigError(f"unknown dimensional CV scheme {self.cv.dimensional!r}")
        if not 0.0 < self.classifier.validation_fraction < 1.0:
            raise ConfigError("classifier.validation_fraction must lie in (0, 1)")
        return self

    @property
    def effective_feature_mode(self):
        # an AE only has its bottleneck code
        return "mu" if self.model_kind == "ae" else self.feature_mode

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if origin in (list, typing.List):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        (inner,) = typing.get_args(tp)
        return [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {tp}")


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(hints[name], value, f"{path}.{name}" if path else name)
    return cls(**kwargs)


def config_from_dict(data):
    return _from_dict(RunConfig, data, "").validate()


def load_config(path=None, overrides=None):
    """Read a JSON config file (or defaults when ``path`` is None) and apply overrides."""
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    for dotted, value in (overrides or {}).items():
        node = data
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    return config_from_dict(data)
