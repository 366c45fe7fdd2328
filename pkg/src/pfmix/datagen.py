"""Seeded synthetic data generators.

Three families: the five-dimensional analysis example (one predictive
dimension, four structured-noise dimensions), flat mixture sweeps with a
configurable number of relevant dimensions, and two-chain HMM sweeps.

All generators draw from numpy's Philox bit generator, a published
counter-based PRNG, so streams are reproducible from the integer seed alone.
Each dataset carries its ground-truth relevance mask and latent component
indices in ``meta`` so switch-recovery scores can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_stats import philox_rng
from .dataset import Dataset, Sequence, SequenceDataset
from .exceptions import UsageError

ANALYSIS_SIGNAL_GAP = 6.0


def gen_analysis_dataset(n: int, mu: float = 6.0, seed: int = 0) -> Dataset:
    """Five-dimensional example: dimension 0 predicts the label, 1-4 are noise.

    Dimension 0 is an equal mixture of N(0,1) and N(6,1) whose component
    determines the binary label. Dimensions 1-4 share an independent
    two-component mixture with means 0 and ``mu`` and unit variances;
    ``mu`` is the knob for the structured-noise limitation study
    (defaults to 6, swept to large values to break switch selection).
    """
    if n < 1:
        raise UsageError("n must be >= 1")
    rng = philox_rng(seed)
    rel = rng.integers(0, 2, size=n)
    irrel = rng.integers(0, 2, size=n)
    X = np.empty((n, 5))
    X[:, 0] = ANALYSIS_SIGNAL_GAP * rel + rng.standard_normal(n)
    X[:, 1:] = mu * irrel[:, None] + rng.standard_normal((n, 4))
    y = rel.astype(np.int64)  # Bern(0) / Bern(1): label equals the component
    mask = np.array([True, False, False, False, False])
    meta = {
        "generator": "analysis",
        "mu": float(mu),
        "seed": int(seed),
        "relevant_components": rel.tolist(),
        "irrelevant_components": irrel.tolist(),
    }
    return Dataset(X, y, mask, meta)


@dataclass
class GmmSweepSpec:
    """Configuration for the flat two-block mixture sweep family.

    The first ``d_rel`` dimensions and the label are emitted jointly by a
    ``k_true``-component mixture; the remaining dimensions come from an
    independent mixture with its own component index. Component k has mean
    ``gap * k`` in every dimension of its block, unit variances.
    """

    d_rel: int
    k_true: int = 10
    dims: int = 100
    gap: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.d_rel <= self.dims:
            raise UsageError(f"d_rel must be in [1, {self.dims}], got {self.d_rel}")
        if self.gap <= 0:
            raise UsageError("gap must be positive")


def relevant_mixture_weights(k: int) -> np.ndarray:
    """normalize(0.5 + [0..k-1]); for k=10 this is [0.01, 0.03, ..., 0.19]."""
    w = 0.5 + np.arange(k, dtype=float)
    return w / w.sum()


def irrelevant_mixture_weights(k: int) -> np.ndarray:
    """normalize(1 + [0..k-1]); for k=10 this is [1..10]/55."""
    w = 1.0 + np.arange(k, dtype=float)
    return w / w.sum()


def gen_gmm_sweep(spec: GmmSweepSpec, n: int) -> Dataset:
    """Draw a flat sweep dataset; label rates per component come from
    Unif({0.05, 0.95}).

    Label-rate vectors whose marginal label frequency would fall outside
    [0.1, 0.9] are rejected and redrawn from the same stream, so no seed
    yields a degenerate, nearly single-class dataset.
    """
    if n < 1:
        raise UsageError("n must be >= 1")
    rng = philox_rng(spec.seed)
    k = spec.k_true
    theta_rel = relevant_mixture_weights(k)
    theta_irrel = irrelevant_mixture_weights(k)
    while True:
        p_k = rng.choice([0.05, 0.95], size=k)
        marginal = float(theta_rel @ p_k)
        if 0.1 <= marginal <= 0.9:
            break
    rel = rng.choice(k, size=n, p=theta_rel)
    irrel = rng.choice(k, size=n, p=theta_irrel)
    d_irr = spec.dims - spec.d_rel
    X = np.empty((n, spec.dims))
    X[:, : spec.d_rel] = spec.gap * rel[:, None] + rng.standard_normal((n, spec.d_rel))
    X[:, spec.d_rel :] = spec.gap * irrel[:, None] + rng.standard_normal((n, d_irr))
    y = (rng.random(n) < p_k[rel]).astype(np.int64)
    mask = np.arange(spec.dims) < spec.d_rel
    meta = {
        "generator": "gmm_sweep",
        "k_true": k,
        "dims": spec.dims,
        "d_rel": spec.d_rel,
        "gap": spec.gap,
        "seed": int(spec.seed),
        "label_rates": p_k.tolist(),
        "theta_rel": theta_rel.tolist(),
        "theta_irrel": theta_irrel.tolist(),
        "relevant_components": rel.tolist(),
        "irrelevant_components": irrel.tolist(),
    }
    return Dataset(X, y, mask, meta)


@dataclass
class HmmSweepSpec:
    """Configuration for the two-chain HMM sweep family.

    Both hidden chains start from [.1, .2, .3, .4]. The relevant chain's
    transition matrix is row-normalize(0.1 + one-hot rows + I), the
    irrelevant chain's uses 0.01 in place of 0.1; the one-hot rows are
    sampled uniformly per row. Labels follow Bern(p_vec[state]) on the
    relevant chain.
    """

    d_rel: int
    k_true: int = 4
    dims: int = 20
    gap: float = 6.0
    seed: int = 0
    p_vec: tuple = (0.05, 0.95, 0.05, 0.95)

    def __post_init__(self):
        if not 1 <= self.d_rel <= self.dims:
            raise UsageError(f"d_rel must be in [1, {self.dims}], got {self.d_rel}")
        if len(self.p_vec) != self.k_true:
            raise UsageError("p_vec length must equal k_true")


def _random_transition_matrix(rng, k: int, smoothing: float) -> np.ndarray:
    one_hot = np.zeros((k, k))
    one_hot[np.arange(k), rng.integers(0, k, size=k)] = 1.0
    m = smoothing + one_hot + np.eye(k)
    return m / m.sum(axis=1, keepdims=True)


def _sample_chain(rng, init, trans, t: int) -> np.ndarray:
    states = np.empty(t, dtype=np.int64)
    states[0] = rng.choice(len(init), p=init)
    for i in range(1, t):
        states[i] = rng.choice(len(init), p=trans[states[i - 1]])
    return states


def gen_hmm_sweep(spec: HmmSweepSpec, n_seqs: int, t: int) -> SequenceDataset:
    """Draw sequences from two independent hidden chains.

    The relevant chain emits the first ``d_rel`` dimensions and the labels;
    the irrelevant chain emits the rest. State k has mean ``gap * k`` in
    each dimension of its block.
    """
    if n_seqs < 1 or t < 1:
        raise UsageError("n_seqs and t must be >= 1")
    rng = philox_rng(spec.seed)
    k = spec.k_true
    init = np.array([0.1, 0.2, 0.3, 0.4]) if k == 4 else np.full(k, 1.0 / k)
    a_rel = _random_transition_matrix(rng, k, 0.1)
    a_irrel = _random_transition_matrix(rng, k, 0.01)
    p_vec = np.asarray(spec.p_vec, dtype=float)
    d_irr = spec.dims - spec.d_rel
    sequences = []
    rel_states, irrel_states = [], []
    for _ in range(n_seqs):
        s = _sample_chain(rng, init, a_rel, t)
        u = _sample_chain(rng, init, a_irrel, t)
        X = np.empty((t, spec.dims))
        X[:, : spec.d_rel] = spec.gap * s[:, None] + rng.standard_normal(
            (t, spec.d_rel)
        )
        X[:, spec.d_rel :] = spec.gap * u[:, None] + rng.standard_normal((t, d_irr))
        y = (rng.random(t) < p_vec[s]).astype(np.int64)
        sequences.append(Sequence(X, y))
        rel_states.append(s.tolist())
        irrel_states.append(u.tolist())
    mask = np.arange(spec.dims) < spec.d_rel
    meta = {
        "generator": "hmm_sweep",
        "k_true": k,
        "dims": spec.dims,
        "d_rel": spec.d_rel,
        "gap": spec.gap,
        "seed": int(spec.seed),
        "p_vec": p_vec.tolist(),
        "a_rel": a_rel.tolist(),
        "a_irrel": a_irrel.tolist(),
        "init": init.tolist(),
        "relevant_states": rel_states,
        "irrelevant_states": irrel_states,
    }
    return SequenceDataset(sequences, mask, meta)
