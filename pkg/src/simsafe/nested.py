"""Nested logit outcome probabilities, cell aggregation and the WESML objective.

The three accident types share a nest with scale ``mu >= 1``; the
no-accident alternative sits alone at the top, which is normalised to scale
one.  For available accident types ``A``::

    I      = (1/mu) * log sum_{k in A} exp(mu V_k)
    P(nest)= exp(I) / (exp(V_NA) + exp(I))
    P(k)   = P(nest) * exp(mu V_k) / sum_{j in A} exp(mu V_j)

Cell probabilities are plain means of member probabilities, and the weighted
log-likelihood sums ``w_y * log P_cell(y)`` over cells.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .domain import (
    MU_INDEX,
    N_PARAMS,
    CellKey,
    ModelParameters,
    Outcome,
    Scaling,
    ValidationError,
)
from .scores import ScoreVector, score_matrix


class ZeroProbabilityError(ArithmeticError):
    """An observed outcome has zero model probability in its cell."""


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not mu >= 1.0:
        raise ValueError(f"nest scale mu must be >= 1, got {mu}")
    return mu


def nl_probabilities_batch(scores, avail, mu: float) -> np.ndarray:
    """Vectorised nested logit probabilities.

    Parameters
    ----------
    scores : array (..., 4)
        Systematic scores in (NA, RE, LC, ROR) order.
    avail : bool array (..., 4)
        Availability; the NA column is ignored (always available).
    mu : float
        Accident-nest scale, ``>= 1``.

    Returns
    -------
    array (..., 4)
        Probabilities; unavailable alternatives are exactly zero.
    """
    mu = _check_mu(mu)
    v = np.asarray(scores, dtype=float)
    a = np.asarray(avail, dtype=bool)[..., 1:]
    vk = v[..., 1:]
    any_acc = a.any(axis=-1)
    mv = np.where(a, mu * vk, -np.inf)
    m = np.where(any_acc, mv.max(axis=-1), 0.0)
    e = np.where(a, np.exp(mv - m[..., None]), 0.0)
    s = e.sum(axis=-1)
    log_s = m + np.log(np.where(any_acc, s, 1.0))
    inc = log_s / mu - v[..., 0]
    p_nest = np.where(any_acc, expit(inc), 0.0)
    out = np.empty(v.shape)
    out[..., 0] = np.where(any_acc, expit(-inc), 1.0)
    out[..., 1:] = p_nest[..., None] * e / np.where(any_acc, s, 1.0)[..., None]
    return out


def nl_probabilities(scores: ScoreVector, mu: float) -> np.ndarray:
    """(P_NA, P_RE, P_LC, P_ROR) for one score vector."""
    return nl_probabilities_batch(scores.values(), np.array(scores.avail), mu)


def aggregate_cell(member_probs: Sequence[Sequence[float]]) -> np.ndarray:
    """Mean of member probability vectors."""
    arr = np.asarray(member_probs, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty cell")
    arr = arr.reshape(-1, 4)
    return arr.sum(axis=0) / arr.shape[0]


@dataclasses.dataclass(frozen=True)
class SamplingWeights:
    """Outcome-specific WESML weights in (NA, RE, LC, ROR) order."""

    w: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        if len(self.w) != 4 or any(not x > 0 for x in self.w):
            raise ValueError(f"need four positive weights, got {self.w}")

    def __getitem__(self, outcome) -> float:
        return self.w[Outcome.parse(outcome)]

    def array(self) -> np.ndarray:
        return np.array(self.w)

    def scaled(self, factor: float) -> "SamplingWeights":
        return SamplingWeights(tuple(factor * x for x in self.w))


UNIT_WEIGHTS = SamplingWeights()


def _counts(counts) -> np.ndarray:
    if isinstance(counts, Mapping):
        out = np.zeros(4)
        for k, v in counts.items():
            out[Outcome.parse(k)] = v
        return out
    out = np.asarray(counts, dtype=float)
    if out.shape != (4,):
        raise ValueError("counts need one entry per outcome (NA, RE, LC, ROR)")
    return out


def sampling_weights(population_counts, sample_counts) -> SamplingWeights:
    """Population share over sample share for each outcome.

    Counts are length-4 sequences in (NA, RE, LC, ROR) order or mappings
    keyed by outcome.  Outcomes absent from both get weight 1.
    """
    pop = _counts(population_counts)
    smp = _counts(sample_counts)
    if np.any(pop < 0) or np.any(smp < 0):
        raise ValueError("counts must be nonnegative")
    w = np.ones(4)
    for k in Outcome:
        if pop[k] == 0 and smp[k] == 0:
            continue
        if smp[k] == 0:
            raise ValueError(f"no sampled observations of outcome {k.name}")
        if pop[k] == 0:
            raise ValueError(f"outcome {k.name} is sampled but absent from the population")
        w[k] = (pop[k] / pop.sum()) / (smp[k] / smp.sum())
    return SamplingWeights(tuple(w))


class CellDataset:
    """Member features grouped by space-time cell, ready for likelihood work.

    Members are stored in a canonical order (by cell, then by feature
    content) so that the likelihood does not depend on input row order.

    Parameters
    ----------
    features : array (M, 9)
        Raw SI features in ``FEATURE_NAMES`` order.
    avail : bool array (M, 3)
        (RE, LC, ROR) availability per member.
    cell : int array (M,)
        Cell index of each member, ``0 <= cell < len(keys)``.
    labels : int array (C,)
        Observed outcome per cell.
    keys : sequence of CellKey, optional
    scaling : Scaling
        Applied to ``features`` on construction.
    """

    def __init__(self, features, avail, cell, labels, keys: Optional[Sequence[CellKey]] = None,
                 scaling: Scaling = Scaling()):
        raw = np.asarray(features, dtype=float).reshape(-1, 9)
        avail = np.asarray(avail, dtype=bool).reshape(-1, 3)
        cell = np.asarray(cell, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        n_cells = labels.shape[0]
        if keys is None:
            keys = [CellKey("", 0, i, 0) for i in range(n_cells)]
        if len(keys) != n_cells:
            raise ValidationError("one key per cell required")
        if raw.shape[0] != avail.shape[0] or raw.shape[0] != cell.shape[0]:
            raise ValidationError("features, avail and cell must have the same length")
        if cell.size and (cell.min() < 0 or cell.max() >= n_cells):
            raise ValidationError("cell index out of range")
        if np.any((labels < 0) | (labels > 3)):
            raise ValidationError("labels must be outcome codes 0..3")
        counts = np.bincount(cell, minlength=n_cells)
        if np.any(counts == 0):
            empty = keys[int(np.flatnonzero(counts == 0)[0])]
            raise ValidationError(f"cell {tuple(empty)} has no observations")
        x = raw * scaling.factors()
        x = np.where(np.repeat(avail, [3, 4, 2], axis=1), x, 0.0)
        # lexsort: last key is primary -> cell, availability, then feature values
        sort_keys = tuple(x[:, j] for j in range(8, -1, -1)) + (avail[:, 2], avail[:, 1], avail[:, 0], cell)
        order = np.lexsort(sort_keys)
        self.x = x[order]
        self.raw = np.where(np.repeat(avail, [3, 4, 2], axis=1), raw, 0.0)[order]
        self.avail = avail[order]
        self.cell = cell[order]
        self.labels = labels
        self.keys = [CellKey(*k) for k in keys]
        self.scaling = scaling
        self.counts = counts
        self.starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.member_label = labels[self.cell]

    @property
    def n_cells(self) -> int:
        return self.labels.shape[0]

    @property
    def n_members(self) -> int:
        return self.x.shape[0]

    def outcome_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=4).astype(float)

    def subset(self, cell_ids) -> "CellDataset":
        """New dataset restricted to the given cells (in the given order)."""
        cell_ids = np.asarray(cell_ids, dtype=np.int64)
        remap = np.full(self.n_cells, -1, dtype=np.int64)
        remap[cell_ids] = np.arange(cell_ids.size)
        keep = remap[self.cell] >= 0
        return CellDataset(self.raw[keep], self.avail[keep], remap[self.cell[keep]], self.labels[cell_ids],
                           [self.keys[i] for i in cell_ids], self.scaling)

    def with_labels(self, labels) -> "CellDataset":
        out = object.__new__(CellDataset)
        out.__dict__.update(self.__dict__)
        out.labels = np.asarray(labels, dtype=np.int64)
        out.member_label = out.labels[out.cell]
        return out

    def rescaled(self, scaling: Scaling) -> "CellDataset":
        return CellDataset(self.raw, self.avail, self.cell, self.labels, self.keys, scaling)

    def raw_features(self) -> np.ndarray:
        return self.raw


@dataclasses.dataclass
class LikelihoodReport:
    loglik: float
    gradient: Optional[np.ndarray]
    n_cells: int
    cell_gradients: Optional[np.ndarray] = None


def member_probabilities(theta, data: CellDataset, free_mask=None) -> np.ndarray:
    """(M, 4) probabilities for every member at the full parameter vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    mask = np.ones(N_PARAMS, bool) if free_mask is None else np.asarray(free_mask, bool)
    betas = theta[:12] * mask[:12]
    v = np.zeros((data.n_members, 4))
    v[:, 1:] = score_matrix(data.x, betas)
    avail = np.concatenate([np.ones((data.n_members, 1), bool), data.avail], axis=1)
    return nl_probabilities_batch(v, avail, theta[MU_INDEX])


def cell_probabilities(theta, data: CellDataset, free_mask=None) -> np.ndarray:
    """(C, 4) cell-mean probabilities."""
    p = member_probabilities(theta, data, free_mask)
    return np.add.reduceat(p, data.starts, axis=0) / data.counts[:, None]


_BLOCKS = ((0, slice(0, 4), slice(0, 3)), (1, slice(4, 9), slice(3, 7)), (2, slice(9, 12), slice(7, 9)))


def _member_terms(theta, data: CellDataset, mask):
    """Probability of each member's cell label and its gradient w.r.t. all 13 parameters."""
    mu = _check_mu(theta[MU_INDEX])
    betas = theta[:12] * mask[:12]
    a = data.avail
    n = data.n_members
    vk = score_matrix(data.x, betas)
    any_acc = a.any(axis=1)
    mv = np.where(a, mu * vk, -np.inf)
    m = np.where(any_acc, mv.max(axis=1), 0.0)
    e = np.where(a, np.exp(mv - m[:, None]), 0.0)
    s = np.where(any_acc, e.sum(axis=1), 1.0)
    inc = (m + np.log(s)) / mu
    q = e / s[:, None]
    p_nest = np.where(any_acc, expit(inc), 0.0)
    p_na = np.where(any_acc, expit(-inc), 1.0)
    vz = np.where(a, vk, 0.0)
    vbar = (q * vz).sum(axis=1)
    dinc_dmu = np.where(any_acc, (vbar - inc) / mu, 0.0)

    y = data.member_label
    rows = np.arange(n)
    is_na = y == 0
    k = np.where(is_na, 0, y - 1)
    q_y = q[rows, k]
    p_y = np.where(is_na, p_na, p_nest * q_y)
    coef_a = np.where(is_na, -p_nest * p_na, p_y * p_na)
    coef_b = np.where(is_na, 0.0, p_y)

    grad = np.empty((n, N_PARAMS))
    for j, beta_slice, feat_slice in _BLOCKS:
        delta = (k == j) & ~is_na
        c = coef_a * q[:, j] + coef_b * mu * (delta - q[:, j])
        grad[:, beta_slice.start] = c
        grad[:, beta_slice.start + 1:beta_slice.stop] = c[:, None] * data.x[:, feat_slice]
    vk_y = vz[rows, k]
    grad[:, MU_INDEX] = coef_a * dinc_dmu + coef_b * (vk_y - vbar)
    grad[:, :12] *= mask[:12]
    return p_y, grad


def _fsum_columns(arr: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(arr[:, j]) for j in range(arr.shape[1])])


def wesml_loglik(params: ModelParameters, data: CellDataset,
                 weights: Optional[SamplingWeights] = None, gradient: bool = True,
                 per_cell: bool = False) -> LikelihoodReport:
    """Weighted exogenous sample log-likelihood over cells.

    The gradient is analytic, taken through score -> nested logit -> cell mean
    -> log, and is reported for the free parameters only (``params.free_mask``).
    ``weights=None`` gives the plain (unweighted) log-likelihood.
    """
    if params.scaling != data.scaling:
        raise ValidationError(f"model scaling {params.scaling} does not match data scaling {data.scaling}")
    mask = np.array(params.free_mask, bool)
    return _loglik(params.vector(), mask, data, weights, gradient, per_cell)


def _loglik(theta, mask, data: CellDataset, weights, gradient=True, per_cell=False) -> LikelihoodReport:
    p_y, grad = _member_terms(np.asarray(theta, float), data, mask)
    p_cell = np.add.reduceat(p_y, data.starts) / data.counts
    bad = np.flatnonzero(~(p_cell > 0))
    if bad.size:
        key = data.keys[int(bad[0])]
        label = Outcome(int(data.labels[bad[0]])).name
        raise ZeroProbabilityError(
            f"observed outcome {label} has zero probability in cell {tuple(key)} "
            f"(log floor {math.log(max(p_cell[bad[0]], 1e-300)):.1f})"
        )
    w = np.ones(data.n_cells) if weights is None else weights.array()[data.labels]
    ll_cells = np.log(p_cell)
    if weights is not None:
        ll_cells = w * ll_cells
    loglik = math.fsum(ll_cells)
    g = cell_g = None
    if gradient:
        g_cell = np.add.reduceat(grad, data.starts, axis=0) / data.counts[:, None]
        cell_g = g_cell / p_cell[:, None]
        if weights is not None:
            cell_g = cell_g * w[:, None]
        cell_g = cell_g[:, mask]
        g = _fsum_columns(cell_g)
    return LikelihoodReport(loglik, g, data.n_cells, cell_g if per_cell else None)


def mc_probability_oracle(scores: ScoreVector, mu: float, draws: int, seed: int) -> np.ndarray:
    """Empirical outcome frequencies from simulating the two-stage nested choice.

    Test oracle for :func:`nl_probabilities`: first the nest is drawn against
    NA using the inclusive value, then an accident type is drawn within the
    nest with scale ``mu``.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    v = scores.values()
    nest = [k for k in (1, 2, 3) if scores.avail[k]]
    if not nest:
        return np.array([1.0, 0.0, 0.0, 0.0])
    rng = np.random.default_rng(seed)
    shift = max(v[0], max(v[k] for k in nest))
    within = np.array([math.exp(mu * (v[k] - shift)) for k in nest])
    inclusive = shift + math.log(within.sum()) / mu
    p_nest = 1.0 / (1.0 + math.exp(v[0] - inclusive))
    cum = np.cumsum(within / within.sum())
    cum[-1] = 1.0
    in_nest = rng.random(draws) < p_nest
    pick = np.searchsorted(cum, rng.random(draws), side="right")
    counts = np.zeros(4)
    counts[0] = draws - in_nest.sum()
    picked = np.bincount(pick[in_nest], minlength=len(nest))
    for idx, k in enumerate(nest):
        counts[k] = picked[idx]
    return counts / draws
