"""Dense matrix/vector arithmetic and activations.

Matrices are 2-D float64 ndarrays in row-major (C) order, vectors are 1-D
float64 ndarrays.  Verification paths rely on double precision throughout;
nothing here allocates sparse or quantized forms.
"""

import numpy as np

from .errors import ConfigError

ACTIVATION_KINDS = ("sigmoid", "tanh", "relu")


def as_matrix(data):
    """Coerce to a 2-D float64 array, validating the shape."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"expected a matrix, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def as_vector(data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 1:
        raise ConfigError(f"expected a vector, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def matmul(a, b):
    """Matrix product with explicit dimension checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError("matmul operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    """Numerically safe logistic function, exact in both saturation tails."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    # exp underflowing to 0 is what makes the tails exact; keep that silent
    # even when the caller runs with a strict floating-point error state
    with np.errstate(under="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activation(x, kind):
    """Elementwise activation by name: sigmoid, tanh or relu."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation kind: {kind!r}") from None
    return fn(x)


def stable_softmax(logits):
    """Softmax with max subtraction; safe for logits up to +-1e3 and beyond."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    with np.errstate(under="ignore"):  # distant classes underflow to exact 0
        e = np.exp(shifted)
        return e / np.sum(e, axis=-1, keepdims=True)
