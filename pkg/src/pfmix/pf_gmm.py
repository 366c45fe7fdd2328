"""Prediction-focused Gaussian mixture model trained by variational EM.

The model couples a K-component diagonal Gaussian mixture over the inputs
with a categorical target head per component. A Bernoulli switch per input
dimension decides whether that dimension is generated by the
component-dependent signal Gaussians (``b_mean``/``b_var``) or by a single
component-independent noise Gaussian (``pi_mean``/``pi_var``). The switch
prior ``p`` is the one trade-off hyperparameter.

Inference uses a variational posterior that factorizes over per-datum
component assignments and per-datum switches, with the switch parameters
tied across data so each dimension gets a single relevance value ``phi_d``.
All coordinate updates are closed-form, so the ELBO is non-decreasing over
iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core_stats import (
    PROB_FLOOR,
    VAR_FLOOR,
    gaussian_log_pdf_parts,
    log_sum_exp,
    philox_rng,
    sigmoid,
)
from .dataset import Dataset
from .exceptions import DataError, NumericError, UsageError

# Switch priors strictly inside (0, 1) are clamped to this range so the
# prior log-odds stay finite; exact 0 and 1 are handled as special cases.
P_CLAMP = 1e-6

# Mixture weights and transition rows are floored here (then renormalized)
# so dead components keep finite log probabilities and can be rescued.
WEIGHT_FLOOR = 1e-10

# Responsibility mass below which a component is considered empty and is
# reseeded from a random data point.
EMPTY_COMPONENT_MASS = 1e-8


@dataclass
class GmmParams:
    """Full parameter set of a prediction-focused mixture.

    Attributes:
        theta: (K,) mixture weights.
        b_mean, b_var: (K, D) signal Gaussian parameters per component.
        pi_mean, pi_var: (D,) noise Gaussian parameters, component-independent.
        eta: (K, C) categorical target distribution per component.
    """

    theta: np.ndarray
    b_mean: np.ndarray
    b_var: np.ndarray
    pi_mean: np.ndarray
    pi_var: np.ndarray
    eta: np.ndarray

    @property
    def n_components(self) -> int:
        return self.theta.shape[0]

    @property
    def dims(self) -> int:
        return self.b_mean.shape[1]

    @property
    def n_classes(self) -> int:
        return self.eta.shape[1]

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a))
            for a in (self.theta, self.b_mean, self.b_var, self.pi_mean, self.pi_var, self.eta)
        )


@dataclass
class EmConfig:
    """EM settings; every fit is fully determined by (config, data)."""

    p: float
    n_components: int
    max_iters: int = 500
    rel_tol: float = 1e-6
    n_restarts: int = 5
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise UsageError(f"switch prior must be in [0, 1], got {self.p}")
        if self.n_components < 1:
            raise UsageError("n_components must be >= 1")
        if self.alpha < 1.0:
            raise UsageError("alpha must be >= 1 for a well-defined theta update")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")


@dataclass
class FitResult:
    """Winning restart of an EM run."""

    params: object
    phi: np.ndarray
    elbo_trace: np.ndarray
    converged: bool
    iterations: int
    seed: int

    @property
    def final_elbo(self) -> float:
        return float(self.elbo_trace[-1])


def clamp_switch_prior(p: float) -> float:
    """Clamp p into [P_CLAMP, 1 - P_CLAMP] unless it is exactly 0 or 1."""
    if p == 0.0 or p == 1.0:
        return p
    return float(min(max(p, P_CLAMP), 1.0 - P_CLAMP))


def _log_eta(eta: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(eta, PROB_FLOOR))


def _check_data(X: np.ndarray) -> None:
    if np.isnan(X).any():
        raise DataError("input matrix contains NaN")


def _signal_scores(b_mean, b_var, X, weights) -> np.ndarray:
    """sum_d weights_d * log N(x_nd; b_mean_kd, b_var_kd) as an (N, K) array.

    Decomposed into three matmuls so no (N, K, D) tensor is materialized.
    """
    inv = weights / b_var  # (K, D)
    lin = b_mean * inv
    const = np.sum(weights * np.log(2.0 * np.pi * b_var) + b_mean**2 * inv, axis=1)
    return -0.5 * (X**2 @ inv.T - 2.0 * (X @ lin.T) + const[None, :])


def _noise_scores(pi_mean, pi_var, X, weights) -> np.ndarray:
    """sum_d weights_d * log N(x_nd; pi_mean_d, pi_var_d) as an (N,) array."""
    inv = weights / pi_var
    return -0.5 * (
        (X - pi_mean) ** 2 @ inv + np.sum(weights * np.log(2.0 * np.pi * pi_var))
    )


def expected_emission_scores(params: GmmParams, phi, X) -> np.ndarray:
    """Per-datum, per-component expected data log-likelihood under the switch
    posterior: sum_d [phi_d log N_B + (1 - phi_d) log N_pi], shape (N, K).

    This is the training-time form: the exact coordinate maximizer of the
    ELBO uses the expectation of the log, not the log of the blended density.
    """
    phi = np.asarray(phi, dtype=float)
    return _signal_scores(params.b_mean, params.b_var, X, phi) + _noise_scores(
        params.pi_mean, params.pi_var, X, 1.0 - phi
    )[:, None]


def blended_emission_scores(params: GmmParams, phi, X) -> np.ndarray:
    """Per-datum, per-component log of the blended density
    sum_d log[phi_d N_B + (1 - phi_d) N_pi], shape (N, K).

    This is the held-out evaluation form, treating switches as independent
    per datum with probability phi_d. Exact for phi_d in {0, 1}.
    """
    phi = np.asarray(phi, dtype=float)
    ln_b = gaussian_log_pdf_parts(X, params.b_mean, params.b_var)  # (N, K, D)
    ln_pi = gaussian_log_pdf_parts(X, params.pi_mean, params.pi_var)  # (N, D)
    with np.errstate(divide="ignore"):
        log_phi = np.log(phi)
        log_1mphi = np.log1p(-phi)
    a = log_phi[None, None, :] + ln_b
    b = log_1mphi[None, None, :] + ln_pi[:, None, :]
    out = np.logaddexp(a, b)
    # logaddexp(-inf, -inf) is fine, but phi exactly 0/1 should not pull in a
    # -inf from the dead branch when the live branch is finite; it does not,
    # so only the all -inf case needs no special handling.
    return out.sum(axis=2)


def init_params(data: Dataset, cfg: EmConfig) -> GmmParams:
    """Seeded initialization: components at K distinct data points, empirical
    noise moments, class frequencies with a small symmetry-breaking
    perturbation on the target heads."""
    X = data.X
    n, dims = X.shape
    k = cfg.n_components
    if n < k:
        raise UsageError(f"need at least {k} points to place {k} components, got {n}")
    _check_data(X)
    rng = philox_rng(cfg.seed)
    idx = rng.choice(n, size=k, replace=False)
    col_var = np.maximum(X.var(axis=0), VAR_FLOOR)
    theta = np.full(k, 1.0 / k)
    b_mean = X[idx].copy()
    b_var = np.tile(col_var, (k, 1))
    pi_mean = X.mean(axis=0)
    pi_var = col_var.copy()
    if data.y is not None:
        n_classes = data.n_classes
        freq = np.bincount(data.y, minlength=n_classes) / n
        eta = freq[None, :] + 0.01 * rng.random((k, n_classes))
    else:
        eta = np.ones((k, 1))
    eta = eta / eta.sum(axis=1, keepdims=True)
    return GmmParams(theta, b_mean, b_var, pi_mean, pi_var, eta)


def e_step_z(params: GmmParams, phi, X, y=None) -> np.ndarray:
    """Responsibilities q(Z | X, Y, phi): softmax over components of
    log theta_k + expected emission score + [y given] log eta_{k, y}."""
    X = np.asarray(X, dtype=float)
    _check_data(X)
    scores = np.log(params.theta)[None, :] + expected_emission_scores(params, phi, X)
    if y is not None:
        y = np.asarray(y)
        if y.max() >= params.n_classes:
            raise UsageError(
                f"label {int(y.max())} out of range for {params.n_classes} classes"
            )
        scores = scores + _log_eta(params.eta)[:, y].T
    scores -= log_sum_exp(scores, axis=1)[:, None]
    return np.exp(scores)


def update_phi(params: GmmParams, resp, X, p: float) -> np.ndarray:
    """Tied switch posterior update.

    phi_d = sigmoid( log(p / (1-p))
                     + mean_n [ E_q[log N_B(x_nd | Z_n)] - log N_pi(x_nd) ] ).

    p exactly 0 or 1 short-circuits to the constant posterior, avoiding
    infinite logits.
    """
    dims = X.shape[1]
    p = clamp_switch_prior(p)
    if p == 0.0:
        return np.zeros(dims)
    if p == 1.0:
        return np.ones(dims)
    sig, noi = _per_dim_signal_and_noise(params, resp, X)
    gap = (sig - noi) / X.shape[0]
    return sigmoid(np.log(p / (1.0 - p)) + gap)


def _per_dim_signal_and_noise(params: GmmParams, resp, X):
    """Per-dimension totals sum_{n,k} r_nk log N_B and sum_n log N_pi."""
    r_mass = resp.sum(axis=0)  # (K,)
    s1 = resp.T @ X  # (K, D)
    s2 = resp.T @ X**2
    quad = s2 - 2.0 * params.b_mean * s1 + params.b_mean**2 * r_mass[:, None]
    sig = -0.5 * np.sum(
        r_mass[:, None] * np.log(2.0 * np.pi * params.b_var) + quad / params.b_var,
        axis=0,
    )
    noi = -0.5 * (
        X.shape[0] * np.log(2.0 * np.pi * params.pi_var)
        + ((X - params.pi_mean) ** 2).sum(axis=0) / params.pi_var
    )
    return sig, noi


def _floored_distribution(weights: np.ndarray) -> np.ndarray:
    w = np.maximum(weights, WEIGHT_FLOOR)
    return w / w.sum()


def update_emissions(resp, phi, X, y, prev: GmmParams, rng=None):
    """Closed-form signal/noise/target updates shared by the GMM and HMM
    M-steps (the HMM pools all timesteps into the rows here).

    Dimensions with phi_d = 0 keep their previous signal parameters and
    dimensions with phi_d = 1 keep their previous noise parameters, matching
    the guarded coordinate updates. Components with vanishing responsibility
    mass are reseeded at a random data point with global variance.
    """
    n, dims = X.shape
    k = resp.shape[1]
    phi = np.asarray(phi, dtype=float)
    r_mass = resp.sum(axis=0)
    dead = r_mass < EMPTY_COMPONENT_MASS
    safe_mass = np.where(dead, 1.0, r_mass)

    b_mean = (resp.T @ X) / safe_mass[:, None]
    b_var = np.empty_like(b_mean)
    for j in range(k):  # two-pass per component: avoids cancellation
        b_var[j] = resp[:, j] @ (X - b_mean[j]) ** 2 / safe_mass[j]
    b_var = np.maximum(b_var, VAR_FLOOR)

    if dead.any():
        rng = rng if rng is not None else philox_rng(0, stream=1)
        col_var = np.maximum(X.var(axis=0), VAR_FLOOR)
        for j in np.flatnonzero(dead):
            b_mean[j] = X[rng.integers(n)]
            b_var[j] = col_var

    off = phi == 0.0  # switched-off dims: signal params are not identified
    if off.any():
        b_mean[:, off] = prev.b_mean[:, off]
        b_var[:, off] = prev.b_var[:, off]

    pi_mean = X.mean(axis=0)
    pi_var = np.maximum(X.var(axis=0), VAR_FLOOR)
    on = phi == 1.0  # fully-on dims: noise params are not identified
    if on.any():
        pi_mean = pi_mean.copy()
        pi_var = pi_var.copy()
        pi_mean[on] = prev.pi_mean[on]
        pi_var[on] = prev.pi_var[on]

    if y is not None:
        counts = resp.T @ _one_hot(y, prev.n_classes)
        totals = counts.sum(axis=1, keepdims=True)
        eta = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / prev.n_classes)
        eta = np.maximum(eta, PROB_FLOOR)
        eta = eta / eta.sum(axis=1, keepdims=True)
    else:
        eta = prev.eta
    return b_mean, b_var, pi_mean, pi_var, eta


def _one_hot(y, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def m_step(resp, phi, X, y, cfg: EmConfig, prev: GmmParams, rng=None) -> GmmParams:
    """Closed-form parameter maximization given responsibilities and phi.

    theta_k = (alpha - 1 + sum_n r_nk) / (K*alpha - K + N); signal means and
    variances are responsibility-weighted moments; noise parameters are the
    plain column moments; eta rows are responsibility-weighted class
    frequencies.
    """
    n, k = resp.shape
    b_mean, b_var, pi_mean, pi_var, eta = update_emissions(resp, phi, X, y, prev, rng)
    theta = (cfg.alpha - 1.0 + resp.sum(axis=0)) / (k * cfg.alpha - k + n)
    theta = _floored_distribution(theta)
    return GmmParams(theta, b_mean, b_var, pi_mean, pi_var, eta)


def _switch_prior_penalty(phi, p: float) -> float:
    """Per-datum switch prior/entropy term
    sum_d [phi log(p/phi) + (1-phi) log((1-p)/(1-phi))], with 0*log(0) = 0."""
    phi = np.asarray(phi, dtype=float)
    p = clamp_switch_prior(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        on = np.where(phi > 0.0, phi * (np.log(p) - np.log(phi)), 0.0)
        off = np.where(
            phi < 1.0, (1.0 - phi) * (np.log(1.0 - p) - np.log1p(-phi)), 0.0
        )
    return float(np.sum(on + off))


def elbo(params: GmmParams, phi, X, y, p: float) -> float:
    """Evidence lower bound at the E-step-optimal component posterior.

    With q(Z) set to the exact per-datum posterior the Z terms collapse to
    the per-datum log normalizer, leaving the tied-switch prior penalty,
    which is counted once per datum because the variational family gives
    every datum its own switch copy.
    """
    X = np.asarray(X, dtype=float)
    scores = np.log(params.theta)[None, :] + expected_emission_scores(params, phi, X)
    if y is not None:
        scores = scores + _log_eta(params.eta)[:, np.asarray(y)].T
    data_term = float(np.sum(log_sum_exp(scores, axis=1)))
    return data_term + X.shape[0] * _switch_prior_penalty(phi, p)


def predict_proba(params: GmmParams, phi, X) -> np.ndarray:
    """Class probabilities sum_k q(Z=k | x, phi) eta_k, with the posterior
    computed from the inputs alone (no target term)."""
    resp = e_step_z(params, phi, X, None)
    return resp @ params.eta


def fit(data: Dataset, cfg: EmConfig, use_y: bool = True) -> FitResult:
    """Run ``cfg.n_restarts`` seeded EM runs and keep the best final ELBO.

    Each restart alternates the component posterior, the tied switch update
    and the closed-form M-step until the relative ELBO change drops below
    ``cfg.rel_tol`` or ``cfg.max_iters`` is reached.
    """
    if use_y and data.y is None:
        raise UsageError("fit requires labeled data; pass use_y=False to ignore labels")
    best: FitResult | None = None
    for restart in range(cfg.n_restarts):
        run_cfg = replace(cfg, seed=cfg.seed + restart)
        result = _fit_single(data, run_cfg, use_y)
        if best is None or result.final_elbo > best.final_elbo:
            best = result
    return best


def _fit_single(data: Dataset, cfg: EmConfig, use_y: bool) -> FitResult:
    X = data.X
    y = data.y if use_y else None
    params = init_params(data, cfg)
    rescue_rng = philox_rng(cfg.seed, stream=1)
    phi = np.full(X.shape[1], clamp_switch_prior(cfg.p))
    trace = []
    prev = -np.inf
    converged = False
    for _ in range(cfg.max_iters):
        resp = e_step_z(params, phi, X, y)
        phi = update_phi(params, resp, X, cfg.p)
        params = m_step(resp, phi, X, y, cfg, params, rescue_rng)
        current = elbo(params, phi, X, y, cfg.p)
        trace.append(current)
        if np.isfinite(prev) and abs(current - prev) <= cfg.rel_tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = current
    if not params.is_finite():
        raise NumericError("EM produced non-finite parameters")
    return FitResult(params, phi, np.asarray(trace), converged, len(trace), cfg.seed)


MAX_ENUMERATION_DIMS = 20


def _enumeration_terms(params: GmmParams, X, y):
    ln_b = gaussian_log_pdf_parts(X, params.b_mean, params.b_var)  # (N, K, D)
    ln_pi = gaussian_log_pdf_parts(X, params.pi_mean, params.pi_var)  # (N, D)
    base = np.log(params.theta)[None, :]
    if y is not None:
        base = base + _log_eta(params.eta)[:, np.asarray(y)].T
    return ln_b, ln_pi, base


def exact_log_joint(params: GmmParams, p: float, X, y=None) -> float:
    """Exact log joint of the data under the generative model, enumerating
    all 2^D switch configurations shared across the whole dataset.

    Tractable for small D only; the ELBO is the scalable surrogate.
    """
    X = np.asarray(X, dtype=float)
    dims = X.shape[1]
    if dims > MAX_ENUMERATION_DIMS:
        raise UsageError(
            f"exact enumeration supports D <= {MAX_ENUMERATION_DIMS}; use elbo() instead"
        )
    p = clamp_switch_prior(p)
    with np.errstate(divide="ignore"):
        ln_p, ln_1mp = np.log(p), np.log1p(-p)
    ln_b, ln_pi, base = _enumeration_terms(params, X, y)
    noise_all = ln_pi.sum(axis=1)  # (N,)
    per_config = []
    for config in range(2**dims):
        bits = (config >> np.arange(dims)) & 1
        on = bits.astype(bool)
        n_on = int(on.sum())
        prior = n_on * ln_p + (dims - n_on) * ln_1mp
        if prior == -np.inf:
            continue
        x_term = noise_all - ln_pi[:, on].sum(axis=1)  # noise part over off dims
        scores = base + ln_b[:, :, on].sum(axis=2) + x_term[:, None]
        per_config.append(prior + float(np.sum(log_sum_exp(scores, axis=1))))
    return log_sum_exp(np.asarray(per_config))


def alt_bound_objective(params: GmmParams, p: float, X, y) -> float:
    """Three-term diagnostic lower bound on the exact log joint:

    E_{p(xi)}[log p(Y | X, xi)] + p E_{p(Z)}[log p_B(X | Z)]
    + (1 - p) log p_pi(X).

    The first term enumerates switch configurations, so small D only. It
    trades generative against discriminative value explicitly and peaks over
    a wider range of the switch prior than the likelihood itself.
    """
    X = np.asarray(X, dtype=float)
    dims = X.shape[1]
    if dims > MAX_ENUMERATION_DIMS:
        raise UsageError(f"alt bound supports D <= {MAX_ENUMERATION_DIMS}")
    if y is None:
        raise UsageError("alt bound requires labels")
    p = clamp_switch_prior(p)
    ln_b, ln_pi, base_y = _enumeration_terms(params, X, y)
    base = np.log(params.theta)[None, :]
    noise_all = ln_pi.sum(axis=1)
    term_y = 0.0
    for config in range(2**dims):
        bits = (config >> np.arange(dims)) & 1
        on = bits.astype(bool)
        n_on = int(on.sum())
        weight = p**n_on * (1.0 - p) ** (dims - n_on)
        if weight == 0.0:
            continue
        x_term = (ln_b[:, :, on].sum(axis=2) + (noise_all - ln_pi[:, on].sum(axis=1))[:, None])
        log_p_y = np.sum(
            log_sum_exp(base_y + x_term, axis=1) - log_sum_exp(base + x_term, axis=1)
        )
        term_y += weight * float(log_p_y)
    signal_term = float(np.sum(params.theta[None, :] * ln_b.sum(axis=2)))
    noise_term = float(noise_all.sum())
    return term_y + p * signal_term + (1.0 - p) * noise_term
