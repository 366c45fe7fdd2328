"""Numerically stable log-space primitives shared by every model module.

All densities in this package are computed and accumulated in log space;
nothing downstream multiplies raw probabilities.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError, UsageError

# Floor applied to categorical probabilities before taking logs, so that a
# zero-count class learned during EM cannot produce -inf on held-out data.
PROB_FLOOR = 1e-10

# Minimum variance wherever variances are produced; prevents degenerate
# single-point components.
VAR_FLOOR = 1e-6

SIMPLEX_ATOL = 1e-12


def philox_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator backed by the Philox counter-based PRNG.

    Streams are fully determined by (seed, stream); stream 1 is reserved
    for empty-component rescue draws so they never perturb init draws.
    """
    if seed < 0 or stream < 0:
        raise UsageError("seed and stream must be nonnegative")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def log_sum_exp(v, axis=None):
    """log(sum(exp(v))) computed with a max shift.

    Returns -inf exactly when every entry along the reduction is -inf.

    Args:
        v: array of log values; must be nonempty.
        axis: reduction axis, or None to reduce over everything.

    Raises:
        UsageError: if ``v`` is empty.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise UsageError("log_sum_exp requires a nonempty vector")
    hi = np.max(v, axis=axis, keepdims=True)
    # An all -inf slice would give -inf - -inf = nan inside exp; shift by 0
    # there instead, the log of the zero sum restores -inf.
    shift = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        out = shift + np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def sigmoid(x):
    """Logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def simplex(weights, atol=SIMPLEX_ATOL):
    """Validate a probability vector and return it as a float array.

    Raises:
        DomainError: if any entry is negative or the sum is not 1
            within ``atol``.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise DomainError(f"simplex expects a vector, got shape {w.shape}")
    if np.any(w < 0):
        raise DomainError("simplex entries must be nonnegative")
    total = float(w.sum())
    if abs(total - 1.0) > atol:
        raise DomainError(f"simplex entries must sum to 1, got {total!r}")
    return w


def diag_gaussian_log_pdf(x, mean, var):
    """Log density of a diagonal Gaussian evaluated at one point.

    Sums -0.5*log(2*pi*var_d) - (x_d - mean_d)^2 / (2*var_d) over dimensions.

    Raises:
        DomainError: if any variance is not strictly positive.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if np.any(var <= 0):
        raise DomainError("variances must be strictly positive")
    return float(
        np.sum(-0.5 * np.log(2.0 * np.pi * var) - (x - mean) ** 2 / (2.0 * var))
    )


def categorical_log_pmf(y, probs):
    """Log pmf of a categorical distribution with the probability floor applied.

    Raises:
        UsageError: if ``y`` is out of range.
    """
    probs = np.asarray(probs, dtype=float)
    y = int(y)
    if y < 0 or y >= probs.shape[-1]:
        raise UsageError(f"class index {y} out of range for {probs.shape[-1]} classes")
    return float(np.log(max(probs[y], PROB_FLOOR)))


def gaussian_log_pdf_parts(X, means, variances):
    """Per-dimension Gaussian log densities for a batch of points.

    Args:
        X: (N, D) data.
        means: (..., D) means broadcastable against X rows.
        variances: same shape as means, strictly positive.

    Returns:
        Array of shape (N,) + means.shape with per-dimension log densities.
        Used by callers that need dimension-resolved terms (enumeration
        oracles, blended held-out likelihoods).
    """
    X = np.asarray(X, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.ndim == 1:
        # shared row parameters: broadcast over data -> (N, D)
        return -0.5 * np.log(2.0 * np.pi * variances) - (X - means) ** 2 / (
            2.0 * variances
        )
    # component-resolved parameters (K, D) -> (N, K, D)
    diff = X[:, None, :] - means[None, :, :]
    return -0.5 * np.log(2.0 * np.pi * variances)[None, :, :] - diff**2 / (
        2.0 * variances[None, :, :]
    )
