"""Prediction-focused hidden Markov model: Markov dynamics over the
component assignments of the prediction-focused mixture.

Emissions, noise model, target heads and the switch machinery are shared
with the mixture module; this module adds the row-stochastic transition
matrix, a log-space forward-backward E-step, and sequence-pooled M-steps.
The tied switch posterior is shared across time steps and sequences, so a
dimension is relevant or not for the whole corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core_stats import log_sum_exp, philox_rng
from .dataset import SequenceDataset
from .exceptions import DataError, NumericError, UsageError
from .pf_gmm import (
    EmConfig,
    FitResult,
    GmmParams,
    WEIGHT_FLOOR,
    _log_eta,
    clamp_switch_prior,
    elbo as gmm_elbo,
    expected_emission_scores,
    init_params,
    update_emissions,
    update_phi,
)

__all__ = [
    "HmmParams",
    "StatePosteriors",
    "forward_backward",
    "infer_posteriors",
    "hmm_m_step",
    "hmm_elbo",
    "hmm_fit",
    "hmm_predict_proba",
]


@dataclass
class HmmParams:
    """Mixture parameters plus Markov dynamics.

    ``gmm.theta`` doubles as the initial state distribution; ``a[j, k]`` is
    the probability of moving from state j to state k.
    """

    gmm: GmmParams
    a: np.ndarray

    @property
    def n_components(self) -> int:
        return self.gmm.n_components

    def is_finite(self) -> bool:
        return self.gmm.is_finite() and bool(np.all(np.isfinite(self.a)))


@dataclass
class StatePosteriors:
    """Smoothed per-sequence state posteriors from forward-backward.

    Attributes:
        gammas: list of (T_n, K) smoothed marginals.
        edges: list of (T_n - 1, K, K) pairwise marginals.
        logliks: (N,) per-sequence log normalizers.
    """

    gammas: list
    edges: list
    logliks: np.ndarray


def _emission_scores(params: HmmParams, phi, X, y, use_y: bool) -> np.ndarray:
    scores = expected_emission_scores(params.gmm, phi, X)
    if use_y:
        if y is None:
            raise UsageError("use_y=True requires labels")
        scores = scores + _log_eta(params.gmm.eta)[:, np.asarray(y)].T
    if np.isnan(scores).any():
        raise DataError("emission scores contain NaN")
    return scores


def forward_backward(params: HmmParams, phi, X, y=None, use_y: bool = True):
    """Log-space forward-backward over one sequence.

    Returns:
        gamma: (T, K) smoothed state marginals.
        edge: (T - 1, K, K) pairwise marginals.
        loglik: the sequence log normalizer.
    """
    scores = _emission_scores(params, phi, X, y, use_y)
    t_len, k = scores.shape
    ln_a = np.log(np.maximum(params.a, WEIGHT_FLOOR))
    ln_init = np.log(np.maximum(params.gmm.theta, WEIGHT_FLOOR))

    la = np.empty((t_len, k))
    la[0] = ln_init + scores[0]
    for t in range(1, t_len):
        la[t] = scores[t] + log_sum_exp(la[t - 1][:, None] + ln_a, axis=0)
    lb = np.zeros((t_len, k))
    for t in range(t_len - 2, -1, -1):
        lb[t] = log_sum_exp(ln_a + (scores[t + 1] + lb[t + 1])[None, :], axis=1)
    loglik = log_sum_exp(la[-1])

    gamma = np.exp(la + lb - loglik)
    gamma /= gamma.sum(axis=1, keepdims=True)
    edge = np.empty((t_len - 1, k, k))
    for t in range(1, t_len):
        edge[t - 1] = np.exp(
            la[t - 1][:, None] + ln_a + (scores[t] + lb[t])[None, :] - loglik
        )
        edge[t - 1] /= edge[t - 1].sum()
    return gamma, edge, float(loglik)


def _forward_backward_batch(params: HmmParams, phi, Xs, ys, use_y: bool):
    """Vectorized forward-backward over equal-length sequences.

    Xs is (N, T, D); returns gamma (N, T, K), edge (N, T-1, K, K),
    loglik (N,). Matches the per-sequence routine to float precision.
    """
    n, t_len, dims = Xs.shape
    flat_y = None
    if use_y:
        flat_y = ys.reshape(n * t_len)
    scores = _emission_scores(
        params, phi, Xs.reshape(n * t_len, dims), flat_y, use_y
    ).reshape(n, t_len, -1)
    k = scores.shape[2]
    ln_a = np.log(np.maximum(params.a, WEIGHT_FLOOR))
    ln_init = np.log(np.maximum(params.gmm.theta, WEIGHT_FLOOR))

    la = np.empty((n, t_len, k))
    la[:, 0] = ln_init[None, :] + scores[:, 0]
    for t in range(1, t_len):
        la[:, t] = scores[:, t] + log_sum_exp(
            la[:, t - 1][:, :, None] + ln_a[None, :, :], axis=1
        )
    lb = np.zeros((n, t_len, k))
    for t in range(t_len - 2, -1, -1):
        lb[:, t] = log_sum_exp(
            ln_a[None, :, :] + (scores[:, t + 1] + lb[:, t + 1])[:, None, :], axis=2
        )
    loglik = log_sum_exp(la[:, -1], axis=1)

    gamma = np.exp(la + lb - loglik[:, None, None])
    gamma /= gamma.sum(axis=2, keepdims=True)
    if t_len > 1:
        edge = np.exp(
            la[:, :-1, :, None]
            + ln_a[None, None, :, :]
            + (scores[:, 1:] + lb[:, 1:])[:, :, None, :]
            - loglik[:, None, None, None]
        )
        edge /= edge.sum(axis=(2, 3), keepdims=True)
    else:
        edge = np.empty((n, 0, k, k))
    return gamma, edge, loglik


def _equal_length_stack(data: SequenceDataset):
    lengths = {len(s) for s in data.sequences}
    if len(lengths) != 1:
        return None
    Xs = np.stack([s.X for s in data.sequences])
    if all(s.y is not None for s in data.sequences):
        ys = np.stack([s.y for s in data.sequences])
    else:
        ys = None
    return Xs, ys


def infer_posteriors(
    params: HmmParams, phi, data: SequenceDataset, use_y: bool = True
) -> StatePosteriors:
    """Forward-backward over every sequence (batched when lengths agree)."""
    stacked = _equal_length_stack(data)
    if stacked is not None:
        Xs, ys = stacked
        gamma, edge, loglik = _forward_backward_batch(params, phi, Xs, ys, use_y)
        return StatePosteriors(list(gamma), list(edge), loglik)
    gammas, edges, logliks = [], [], []
    for seq in data.sequences:
        gamma, edge, loglik = forward_backward(params, phi, seq.X, seq.y, use_y)
        gammas.append(gamma)
        edges.append(edge)
        logliks.append(loglik)
    return StatePosteriors(gammas, edges, np.asarray(logliks))


def hmm_m_step(
    posteriors: StatePosteriors,
    phi,
    data: SequenceDataset,
    cfg: EmConfig,
    prev: HmmParams,
    rng=None,
) -> HmmParams:
    """Closed-form updates pooling all timesteps.

    A[j, k] is the expected transition count ratio; theta comes from the
    first-step marginals with the same Dirichlet-regularized form as the
    mixture; emission updates reuse the shared guarded closed forms.
    """
    n_seqs = data.n
    k = prev.n_components
    pooled_resp = np.vstack(posteriors.gammas)
    pooled_x = np.vstack([s.X for s in data.sequences])
    has_labels = all(s.y is not None for s in data.sequences)
    pooled_y = (
        np.concatenate([s.y for s in data.sequences]) if has_labels else None
    )
    b_mean, b_var, pi_mean, pi_var, eta = update_emissions(
        pooled_resp, phi, pooled_x, pooled_y, prev.gmm, rng
    )

    first = np.sum([g[0] for g in posteriors.gammas], axis=0)
    theta = (cfg.alpha - 1.0 + first) / (k * cfg.alpha - k + n_seqs)
    theta = np.maximum(theta, WEIGHT_FLOOR)
    theta /= theta.sum()

    trans_counts = np.zeros((k, k))
    for edge in posteriors.edges:
        if edge.shape[0]:
            trans_counts += edge.sum(axis=0)
    row_mass = trans_counts.sum(axis=1, keepdims=True)
    a = np.where(row_mass > 0, trans_counts / np.where(row_mass > 0, row_mass, 1.0), prev.a)
    a = np.maximum(a, WEIGHT_FLOOR)
    a /= a.sum(axis=1, keepdims=True)

    gmm = GmmParams(theta, b_mean, b_var, pi_mean, pi_var, eta)
    return HmmParams(gmm, a)


def hmm_elbo(params: HmmParams, phi, data: SequenceDataset, p: float, use_y: bool = True) -> float:
    """ELBO with the chain posterior at its exact coordinate optimum: the sum
    of per-sequence log normalizers plus the per-timestep switch penalty."""
    posteriors = infer_posteriors(params, phi, data, use_y)
    from .pf_gmm import _switch_prior_penalty

    return float(np.sum(posteriors.logliks)) + data.total_steps * _switch_prior_penalty(
        phi, p
    )


def hmm_fit(data: SequenceDataset, cfg: EmConfig, use_y: bool = True) -> FitResult:
    """Variational EM for the sequence model; other than the forward-backward
    E-step the loop matches the mixture fit, including restart selection."""
    if use_y and any(s.y is None for s in data.sequences):
        raise UsageError("hmm_fit requires labeled sequences; pass use_y=False to ignore labels")
    best: FitResult | None = None
    for restart in range(cfg.n_restarts):
        run_cfg = replace(cfg, seed=cfg.seed + restart)
        result = _hmm_fit_single(data, run_cfg, use_y)
        if best is None or result.final_elbo > best.final_elbo:
            best = result
    return best


def _hmm_fit_single(data: SequenceDataset, cfg: EmConfig, use_y: bool) -> FitResult:
    flat = data.flatten()
    if flat.n < cfg.n_components:
        raise UsageError("fewer pooled timesteps than components")
    k = cfg.n_components
    params = HmmParams(init_params(flat, cfg), np.full((k, k), 1.0 / k))
    rescue_rng = philox_rng(cfg.seed, stream=1)
    phi = np.full(data.dims, clamp_switch_prior(cfg.p))
    pooled_x = flat.X
    trace = []
    prev_elbo = -np.inf
    converged = False
    for _ in range(cfg.max_iters):
        posteriors = infer_posteriors(params, phi, data, use_y)
        pooled_resp = np.vstack(posteriors.gammas)
        phi = update_phi(params.gmm, pooled_resp, pooled_x, cfg.p)
        params = hmm_m_step(posteriors, phi, data, cfg, params, rescue_rng)
        current = hmm_elbo(params, phi, data, cfg.p, use_y)
        trace.append(current)
        if np.isfinite(prev_elbo) and abs(current - prev_elbo) <= cfg.rel_tol * max(
            1.0, abs(prev_elbo)
        ):
            converged = True
            break
        prev_elbo = current
    if not params.is_finite():
        raise NumericError("EM produced non-finite parameters")
    return FitResult(params, phi, np.asarray(trace), converged, len(trace), cfg.seed)


def hmm_predict_proba(params: HmmParams, phi, X) -> np.ndarray:
    """Per-timestep class probabilities from smoothed state marginals
    computed without the target term."""
    gamma, _, _ = forward_backward(params, phi, X, None, use_y=False)
    return gamma @ params.gmm.eta
