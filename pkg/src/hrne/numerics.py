"""Dense kernels, parameter storage and the finite-difference gradient oracle.

Everything operates on float64 numpy arrays. Vectors may carry arbitrary
leading batch axes; matrices follow the ``y = W @ x + b`` convention, so a
weight of shape ``(m, k)`` maps length-``k`` inputs to length-``m`` outputs.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

DTYPE = np.float64
DEFAULT_INIT_SCALE = 0.08
REL_ERROR_FLOOR = 1e-8


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; equal seeds give equal streams."""
    return np.random.default_rng(np.uint64(seed))


def _check_finite(v: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite values in {what}")


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Return ``W @ x + b`` for ``x`` of shape ``(..., k)``."""
    W = np.asarray(W, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    if W.ndim != 2 or x.ndim < 1 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"affine: W has shape {W.shape}, x has shape {x.shape}")
    y = x @ W.T
    if b is not None:
        b = np.asarray(b, dtype=DTYPE)
        if b.shape != (W.shape[0],):
            raise ShapeError(f"affine: W has shape {W.shape}, b has shape {b.shape}")
        y = y + b
    return y


def affine_backward(dy: np.ndarray, W: np.ndarray, x: np.ndarray):
    """Gradients of ``affine`` given upstream ``dy``: returns (dW, dx, db)."""
    k = W.shape[1]
    m = W.shape[0]
    dy2 = dy.reshape(-1, m)
    x2 = x.reshape(-1, k)
    return dy2.T @ x2, dy @ W, dy2.sum(axis=0)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise ShapeError(f"softmax of empty input with shape {v.shape}")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise ShapeError(f"log_softmax of empty input with shape {v.shape}")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sigmoid(v: np.ndarray) -> np.ndarray:
    # Branch-free stable form: never exponentiates a positive number.
    v = np.asarray(v, dtype=DTYPE)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation(kind: str, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    _check_finite(v, f"{kind} input")
    if kind == "sigmoid":
        return sigmoid(v)
    if kind == "tanh":
        return np.tanh(v)
    raise ConfigError(f"unknown activation {kind!r}")


def activation_grad(kind: str, v: np.ndarray) -> np.ndarray:
    """Elementwise derivative of ``activation(kind, .)`` evaluated at ``v``."""
    y = activation(kind, v)
    if kind == "sigmoid":
        return y * (1.0 - y)
    return 1.0 - y * y


def param_init(rng: np.random.Generator, shape, scale: float = DEFAULT_INIT_SCALE) -> np.ndarray:
    if not scale > 0:
        raise ConfigError(f"init scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, size=shape).astype(DTYPE)


@dataclass
class ParamTensor:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=DTYPE)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ShapeError(
                f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}"
            )


class ParamSet(Mapping):
    """Ordered, uniquely named collection of ParamTensors.

    ``params["enc1.W_ix"]`` gives the value array; ``params.tensor(name)`` the
    ParamTensor itself. ``group("enc1.")`` returns a plain dict of values with
    the prefix stripped, which is what the layer functions consume.
    """

    def __init__(self, tensors: Mapping[str, np.ndarray] | None = None):
        self._tensors: dict[str, ParamTensor] = {}
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> ParamTensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = ParamTensor(name, np.array(value, dtype=DTYPE))
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name].value

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        t = self._tensors[name]
        value = np.asarray(value, dtype=DTYPE)
        if value.shape != t.value.shape:
            raise ShapeError(f"{name}: expected shape {t.value.shape}, got {value.shape}")
        t.value = value.copy()

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def tensor(self, name: str) -> ParamTensor:
        return self._tensors[name]

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        n = len(prefix)
        return {k[n:]: t.value for k, t in self._tensors.items() if k.startswith(prefix)}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self._tensors.items()}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = np.zeros_like(t.value)

    def accumulate(self, grads: Mapping[str, np.ndarray], prefix: str = "") -> None:
        for k, g in grads.items():
            t = self._tensors[prefix + k]
            if g.shape != t.value.shape:
                raise ShapeError(f"{t.name}: grad shape {g.shape} != {t.value.shape}")
            t.grad += g

    def copy(self) -> "ParamSet":
        return ParamSet({k: t.value.copy() for k, t in self._tensors.items()})

    def num_scalars(self) -> int:
        return sum(t.value.size for t in self._tensors.values())


def finite_diff_grad(
    f: Callable[[], float],
    params: Mapping[str, np.ndarray] | ParamSet,
    eps: float = 1e-4,
    names=None,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``f`` with respect to every entry of ``params``.

    ``f`` takes no arguments and must read the arrays in ``params`` by
    reference; entries are perturbed in place and restored afterwards.
    """
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    est = {}
    for name in names if names is not None else list(params):
        arr = params[name]
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            fp = f()
            flat[j] = old - eps
            fm = f()
            flat[j] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite objective while perturbing {name}[{j}]")
            gflat[j] = (fp - fm) / (2.0 * eps)
        est[name] = g
    return est


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_ERROR_FLOOR) -> float:
    """max |a-b| / max(|a|, |b|, floor) over all entries."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
