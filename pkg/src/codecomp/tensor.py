"""Dense 2-D float kernel and seeded random sampling.

Everything above this module works with plain numpy arrays; the helpers
here pin down the numeric conventions the rest of the package relies on:

* parameters and data are stored as 32-bit floats,
* matrix products accumulate in 64-bit and round to the storage dtype once,
* random numbers come from numpy's PCG64 generator, so a seed fixes the
  entire sample stream bit-exactly on a given build.

Functions are dtype-generic: feeding float64 arrays through keeps the whole
computation in float64, which the gradient tests use as a high-precision
shadow of the float32 path.
"""

import numpy as np

from .errors import ConfigError, NumericError

# Clamp for uniform draws before the double-log Gumbel transform.
GUMBEL_EPS = 1e-20


def new_rng(seed):
    """Seeded random generator (numpy PCG64).

    The generator algorithm is part of the determinism contract: identical
    seeds yield identical sample streams across runs of the same build.
    """
    return np.random.default_rng(seed)


def _check_finite(out, op):
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{op} produced non-finite values")
    return out


def matmul(a, b, check=True):
    """Matrix product with 64-bit accumulation, rounded to the input dtype.

    Both operands must be 2-D with matching inner dimension. check=False
    skips the output finiteness scan; callers that do their own staged
    checking (the model's forward/backward) use it to keep error messages
    anchored to the stage that blew up.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.astype(np.float64), b.astype(np.float64))
    out = out.astype(np.result_type(a, b))
    if check:
        _check_finite(out, "matmul")
    return out


def _binary(a, b, fn, name):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ConfigError(f"{name} shape mismatch: {a.shape} vs {b.shape}")
    return _check_finite(fn(a, b), name)


def add(a, b):
    return _binary(a, b, np.add, "add")


def sub(a, b):
    return _binary(a, b, np.subtract, "sub")


def mul(a, b):
    return _binary(a, b, np.multiply, "mul")


def scale(a, c):
    return _check_finite(np.asarray(a) * c, "scale")


def tanh(x):
    return np.tanh(np.asarray(x))


def softplus(x):
    """log(1 + e^x) with an overflow guard: for x > 30 return x directly."""
    x = np.asarray(x)
    return np.where(x > 30, x, np.log1p(np.exp(np.minimum(x, 30)))).astype(x.dtype)


def exp(x):
    return _check_finite(np.exp(np.asarray(x)), "exp")


def log(x):
    return _check_finite(np.log(np.asarray(x)), "log")


def gumbel_from_uniform(u):
    """Map uniform draws to Gumbel(0, 1) samples: g = -log(-log(u)).

    u is clamped to [1e-20, 1 - 1e-20] first; the inner -log(u) is floored
    at 1e-20 as well so u values indistinguishable from 1.0 in float64
    (where the upper clamp is a no-op) still map to a finite sample. The
    floor is unreachable for generator output, whose largest draw is
    1 - 2^-53, so the sample stream is unaffected.
    """
    u = np.clip(np.asarray(u, dtype=np.float64), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return -np.log(np.maximum(-np.log(u), GUMBEL_EPS))


def sample_gumbel(rng, rows, cols):
    """rows x cols matrix of Gumbel(0, 1) noise as float32."""
    return gumbel_from_uniform(rng.random((rows, cols))).astype(np.float32)
