"""Small deterministic numeric kernels used throughout the model.

Everything works on float64 numpy arrays. Randomness goes through
:class:`SeededRng`, a Philox (counter-based) generator, so a seed gives the
same stream on every platform numpy supports.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError

DTYPE = np.float64


def sigmoid(x):
    # exp(-|x|) never overflows; pick the algebraically matching branch by sign.
    x = np.asarray(x, dtype=DTYPE)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def stable_softmax(v):
    """Softmax with max-subtraction; ``v`` must be a non-empty finite vector."""
    v = np.asarray(v, dtype=DTYPE)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"softmax needs a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("softmax input contains non-finite entries")
    e = np.exp(v - v.max())
    return e / e.sum()


def finite_difference_gradient(f, x, step=1e-5):
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``.

    ``x`` is not modified. Floating inputs keep their dtype, so passing a
    ``np.longdouble`` array runs the probes in extended precision. Raises
    :class:`NonFiniteError` if ``f`` is non-finite at any probe point.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x)
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else DTYPE
    x = np.array(x, dtype=dtype, copy=True)
    step = dtype.type(step)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = dtype.type(f(x))
        flat[i] = orig - step
        fm = dtype.type(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"objective not finite around coordinate {i}")
        grad[i] = (fp - fm) / (2 * step)
    return grad.reshape(x.shape)


class SeededRng:
    """Deterministic generator built on numpy's counter-based Philox bit generator.

    Single owner: do not share one instance between threads.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def poisson(self, lam, size=None):
        return self._gen.poisson(lam, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def spawn(self, salt):
        """Independent child generator derived from this seed and an integer salt."""
        return SeededRng((self.seed * 1_000_003 + int(salt)) % (1 << 64))


def seeded_uniform_init(rows, cols, bound, rng):
    if rows <= 0 or cols <= 0:
        raise DimensionError(f"matrix dimensions must be positive, got ({rows}, {cols})")
    if not bound > 0:
        raise ValueError("bound must be positive")
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(DTYPE, copy=False)
