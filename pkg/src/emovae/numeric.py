"""Deterministic numerical kernel.

Matrices are plain ``float64`` numpy arrays. Everything random goes through
:class:`RngStream`, a counter-based splitmix64 generator, so a seed gives the
same bits on every platform numpy supports.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, EmptyRequestError, NumericError, ParameterError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TWO_NEG53 = 2.0 ** -53


def _mix(z):
    # splitmix64 finalizer; uint64 array arithmetic wraps silently
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix_int(x):
    return int(_mix(np.array([x & _MASK64], dtype=np.uint64))[0])


class RngStream:
    """Counter-based splitmix64 stream.

    Draw ``i`` (0-based, counted over the lifetime of the stream) is
    ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15)`` with the standard splitmix64
    finalizer. Uniforms take the top 53 bits. Normals use the Box-Muller
    transform on consecutive pairs of uniforms, emitting the cosine branch then
    the sine branch; an odd request discards the final sine value.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"

    def child(self, *keys):
        """Independent stream keyed by ``keys``; does not advance this one."""
        s = self.seed
        for k in keys:
            s = _mix_int(s ^ _mix_int(int(k) + 0x632BE59BD9B4E019))
        return RngStream(s)

    def next_uint64(self, n):
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix(np.uint64(self.seed) + idx * _GAMMA)

    def uniform(self, n, low=0.0, high=1.0):
        """``n`` draws from [low, high)."""
        u = (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        return low + (high - low) * u

    def integers(self, n, high):
        """``n`` integers uniformly drawn from ``range(high)``."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def standard_normal(self, n):
        return sample_standard_normal(self, n)


def sample_standard_normal(rng, n):
    """Draw ``n`` N(0, 1) samples from ``rng`` by Box-Muller."""
    n = int(n)
    if n < 1:
        raise EmptyRequestError(f"requested {n} normal samples; need at least 1")
    pairs = (n + 1) // 2
    bits = rng.next_uint64(2 * pairs) >> np.uint64(11)
    u1 = (bits[0::2].astype(np.float64) + 1.0) * _TWO_NEG53  # (0, 1]
    u2 = bits[1::2].astype(np.float64) * _TWO_NEG53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite entries in product of {a.shape} and {b.shape}")
    return out


def glorot_uniform(rng, fan_out, fan_in):
    """(fan_out, fan_in) matrix uniform in +/- sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(fan_out * fan_in, -limit, limit).reshape(fan_out, fan_in)


class Parameter:
    """A trainable tensor with its gradient accumulator and Adam moments."""

    __slots__ = ("name", "value", "grad", "m", "v")

    def __init__(self, name, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.999
    beta2: float = 0.99
    epsilon: float = 1e-8
    learning_rate: float = 1e-3
    step_count: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0:
            raise ParameterError(f"beta1 must lie in (0, 1), got {self.beta1}")
        if not 0.0 < self.beta2 < 1.0:
            raise ParameterError(f"beta2 must lie in (0, 1), got {self.beta2}")
        if self.epsilon <= 0.0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.learning_rate <= 0.0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.step_count < 0:
            raise ParameterError(f"step_count must be non-negative, got {self.step_count}")


def adam_step(param, cfg):
    """One bias-corrected Adam update of ``param`` in place.

    The update uses step ``t = cfg.step_count + 1``; the returned config has its
    step count advanced. The gradient is zeroed afterwards.
    """
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient in parameter {param.name!r}")
    t = cfg.step_count + 1
    b1, b2 = cfg.beta1, cfg.beta2
    param.m *= b1
    param.m += (1.0 - b1) * g
    param.v *= b2
    param.v += (1.0 - b2) * (g * g)
    m_hat = param.m / (1.0 - b1 ** t)
    v_hat = param.v / (1.0 - b2 ** t)
    param.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    param.grad[...] = 0.0
    return param, replace(cfg, step_count=t)


def adam_update(params, cfg):
    """Apply one Adam step to every parameter at the same step index."""
    new_cfg = cfg
    for p in params:
        _, new_cfg = adam_step(p, cfg)
    return new_cfg


def finite_difference_gradient(loss_fn, x, eps=1e-5, order=2):
    """Central-difference gradient of the scalar ``loss_fn`` at ``x``.

    ``order=2`` is the three-point stencil, ``order=4`` the five-point one,
    whose truncation error is O(eps**4) and so tolerates a much larger step
    before roundoff dominates.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if order not in (2, 4):
        raise ParameterError(f"order must be 2 or 4, got {order}")
    steps = (1,) if order == 2 else (1, 2)
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        diffs = []
        for k in steps:
            pair = []
            for sign in (1, -1):
                x[i] = orig + sign * k * eps
                f = float(loss_fn(x))
                if not np.isfinite(f):
                    x[i] = orig
                    raise NumericError(f"non-finite loss while probing coordinate {i}")
                pair.append(f)
            # differences first, so a flat direction gives exactly zero
            diffs.append(pair[0] - pair[1])
        x[i] = orig
        if order == 2:
            grad[i] = diffs[0] / (2.0 * eps)
        else:
            grad[i] = (8.0 * diffs[0] - diffs[1]) / (12.0 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
