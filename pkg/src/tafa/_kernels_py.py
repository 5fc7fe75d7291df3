"""Pure-numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable
(see backend.py). The scalar and batch entry points are written so that,
for the same inputs, they produce bit-identical floats: per-feature
log-density terms are accumulated one feature at a time with the same
ufunc, and the softmax/normalisation steps apply the same elementwise
operations in the same order.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def posterior_from_logdens(logdens: np.ndarray, log_priors: np.ndarray) -> np.ndarray:
    """Class posterior from per-feature log densities.

    logdens has shape (n_observed, C); rows are added to the log prior in
    order, then a max-stabilised softmax normalises the result.
    """
    logp = log_priors.copy()
    for row in logdens:
        logp += row
    m = logp.max()
    ex = np.exp(logp - m)
    return ex / ex.sum()


def label_prob_columns(
    logdens: np.ndarray,
    log_priors: np.ndarray,
    labels: np.ndarray,
    tpl_flat: np.ndarray,
    tpl_off: np.ndarray,
) -> np.ndarray:
    """Posterior probability of the true label, per (instance, template).

    logdens: (N, D, C) per-feature per-class log densities.
    tpl_flat/tpl_off: templates as a flattened index array plus offsets
    (template s covers tpl_flat[tpl_off[s]:tpl_off[s+1]]).
    """
    n, _, c = logdens.shape
    s = tpl_off.shape[0] - 1
    out = np.empty((n, s))
    rows = np.arange(n)
    for j in range(s):
        logp = np.tile(log_priors, (n, 1))
        for d in tpl_flat[tpl_off[j] : tpl_off[j + 1]]:
            logp += logdens[:, d, :]
        m = logp.max(axis=1)
        ex = np.exp(logp - m[:, None])
        out[:, j] = ex[rows, labels] / ex.sum(axis=1)
    return out


def knn_select(
    train: np.ndarray, obs_idx: np.ndarray, query: np.ndarray, k: int
) -> np.ndarray:
    """Indices of the k nearest training rows on the observed coordinates.

    Squared Euclidean distance; ties broken by training-row index. The
    returned indices are ordered by (distance, index).
    """
    diff = train[:, obs_idx] - query
    d2 = np.einsum("nm,nm->n", diff, diff)
    n = d2.shape[0]
    if k >= n:
        return np.lexsort((np.arange(n), d2))
    part = np.argpartition(d2, k - 1)[:k]
    kth = d2[part].max()
    cand = np.flatnonzero(d2 <= kth)
    order = np.lexsort((cand, d2[cand]))
    return cand[order[:k]]
