"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The compiled path is the default; set TELECLASS_PURE_NUMPY=1 (or run
without numba installed) to select the numpy fallback. Both variants of
every kernel are exported for the equivalence tests and the benchmark in
benchmarks/bench_kernels.py; the module-level names dispatch to the
active one.

All kernels take float64 C-contiguous arrays.
"""

from __future__ import annotations

import os

import numpy as np

_BCE_CLIP = 500.0  # exp-form logit clip; sigma(exp(500)) is 1.0 in float64 anyway


# -- pure-numpy variants ----------------------------------------------------


def pairwise_cosine_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine of every row pair: (n,d) x (m,d) -> (n,m). Zero rows score 0."""
    an = np.sqrt(np.einsum("ij,ij->i", a, a))
    bn = np.sqrt(np.einsum("ij,ij->i", b, b))
    an = np.where(an == 0.0, 1.0, an)
    bn = np.where(bn == 0.0, 1.0, bn)
    return (a @ b.T) / np.outer(an, bn)


def gap_cut_numpy(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest-gap cut per row of a descending-sorted score matrix.

    Exactly equal neighbours form one rank block; gaps are measured
    between blocks and the cut keeps whole blocks, so m is the number of
    kept entries and conf the winning gap. Rows with a single block get
    the sentinel m=0, conf=0. First-occurrence tie-break on equal gaps.
    """
    n, c = scores.shape
    ms = np.zeros(n, dtype=np.int64)
    confs = np.zeros(n, dtype=np.float64)
    for i in range(n):
        row = scores[i]
        best_gap = 0.0
        best_m = 0
        j = 0
        while j < c:
            k = j
            while k + 1 < c and row[k + 1] == row[j]:
                k += 1
            if k + 1 < c:
                gap = row[j] - row[k + 1]
                if gap > best_gap:
                    best_gap = gap
                    best_m = k + 1
            j = k + 1
        ms[i] = best_m
        confs[i] = best_gap
    return ms, confs


def bm25_matrix_numpy(tf: np.ndarray, dl: np.ndarray, k1: float, b: float) -> np.ndarray:
    """BM25 of each term (row) against each pseudo-document (column).

    tf holds raw term frequencies, dl the pseudo-document token lengths;
    the collection is exactly the given columns. Non-negative IDF:
    log1p((N - n + 0.5) / (n + 0.5)).
    """
    n_docs = tf.shape[1]
    df = (tf > 0).sum(axis=1).astype(np.float64)
    idf = np.log1p((n_docs - df + 0.5) / (df + 0.5))
    avgdl = dl.mean()
    norm = k1 * (1.0 - b + b * dl / avgdl)
    out = idf[:, None] * tf * (k1 + 1.0) / (tf + norm[None, :])
    out[tf == 0.0] = 0.0
    return out


def masked_bce_numpy(
    z: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray,
    w: np.ndarray,
    exp_form: bool,
) -> tuple[float, np.ndarray]:
    """Weighted masked binary cross entropy over logits z.

    Returns the summed loss and dL/dz. Under exp_form the bilinear logit
    is passed through exp() before the sigmoid (clipped at 500 so the
    exponential stays finite).
    """
    if exp_form:
        zz = np.minimum(z, _BCE_CLIP)
        u = np.exp(zz)
        du = u
    else:
        u = z
        du = np.ones_like(z)
    # log sigma(u) = -softplus(-u); log(1 - sigma(u)) = -softplus(u)
    softplus = lambda x: np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))  # noqa: E731
    per = np.where(y == 1.0, softplus(-u), softplus(u))
    wm = w[:, None] * mask
    loss = float((wm * per).sum())
    p = 1.0 / (1.0 + np.exp(-np.abs(u)))
    p = np.where(u >= 0.0, p, 1.0 - p)
    g = wm * (p - y) * du
    return loss, g


# -- numba variants ---------------------------------------------------------

_FORCE_NUMPY = os.environ.get("TELECLASS_PURE_NUMPY", "").lower() in ("1", "true", "yes")

pairwise_cosine_numba = None
gap_cut_numba = None
bm25_matrix_numba = None
masked_bce_numba = None

if not _FORCE_NUMPY:
    try:
        from numba import njit
    except ImportError:
        njit = None
else:
    njit = None

if njit is not None:

    @njit(cache=True)
    def _pairwise_cosine_nb(a, b):
        n, d = a.shape
        m = b.shape[0]
        out = np.empty((n, m))
        bn = np.empty(m)
        for j in range(m):
            s = 0.0
            for k in range(d):
                s += b[j, k] * b[j, k]
            bn[j] = np.sqrt(s)
        for i in range(n):
            s = 0.0
            for k in range(d):
                s += a[i, k] * a[i, k]
            an = np.sqrt(s)
            for j in range(m):
                if an == 0.0 or bn[j] == 0.0:
                    out[i, j] = 0.0
                else:
                    dot = 0.0
                    for k in range(d):
                        dot += a[i, k] * b[j, k]
                    out[i, j] = dot / (an * bn[j])
        return out

    @njit(cache=True)
    def _gap_cut_nb(scores):
        n, c = scores.shape
        ms = np.zeros(n, dtype=np.int64)
        confs = np.zeros(n, dtype=np.float64)
        for i in range(n):
            best_gap = 0.0
            best_m = 0
            j = 0
            while j < c:
                k = j
                while k + 1 < c and scores[i, k + 1] == scores[i, j]:
                    k += 1
                if k + 1 < c:
                    gap = scores[i, j] - scores[i, k + 1]
                    if gap > best_gap:
                        best_gap = gap
                        best_m = k + 1
                j = k + 1
            ms[i] = best_m
            confs[i] = best_gap
        return ms, confs

    @njit(cache=True)
    def _bm25_matrix_nb(tf, dl, k1, b):
        n_terms, n_docs = tf.shape
        out = np.zeros((n_terms, n_docs))
        avgdl = 0.0
        for j in range(n_docs):
            avgdl += dl[j]
        avgdl /= n_docs
        for t in range(n_terms):
            df = 0.0
            for j in range(n_docs):
                if tf[t, j] > 0.0:
                    df += 1.0
            idf = np.log1p((n_docs - df + 0.5) / (df + 0.5))
            for j in range(n_docs):
                f = tf[t, j]
                if f > 0.0:
                    norm = k1 * (1.0 - b + b * dl[j] / avgdl)
                    out[t, j] = idf * f * (k1 + 1.0) / (f + norm)
        return out

    @njit(cache=True)
    def _masked_bce_nb(z, y, mask, w, exp_form):
        n, c = z.shape
        g = np.zeros((n, c))
        loss = 0.0
        for i in range(n):
            for j in range(c):
                if mask[i, j] == 0.0:
                    continue
                u = z[i, j]
                du = 1.0
                if exp_form:
                    if u > _BCE_CLIP:
                        u = _BCE_CLIP
                    u = np.exp(u)
                    du = u
                au = abs(u)
                sp = np.log1p(np.exp(-au))
                p = 1.0 / (1.0 + np.exp(-au))
                if u < 0.0:
                    p = 1.0 - p
                if y[i, j] == 1.0:
                    li = sp if u >= 0.0 else sp + au  # softplus(-u)
                else:
                    li = sp + au if u >= 0.0 else sp  # softplus(u)
                loss += w[i] * li
                g[i, j] = w[i] * (p - y[i, j]) * du
        return loss, g

    pairwise_cosine_numba = _pairwise_cosine_nb
    gap_cut_numba = _gap_cut_nb
    bm25_matrix_numba = _bm25_matrix_nb
    masked_bce_numba = _masked_bce_nb

if njit is not None:
    KERNEL_BACKEND = "numba"
    # BLAS beats scalar loops on matmul-shaped work (see benchmarks/), so the
    # cosine kernel stays on numpy even when the compiled path is active
    pairwise_cosine = pairwise_cosine_numpy
    gap_cut = gap_cut_numba
    bm25_matrix = bm25_matrix_numba
    masked_bce = masked_bce_numba
else:
    KERNEL_BACKEND = "numpy"
    pairwise_cosine = pairwise_cosine_numpy
    gap_cut = gap_cut_numpy
    bm25_matrix = bm25_matrix_numpy
    masked_bce = masked_bce_numpy


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs so later calls run at speed."""
    a = np.ones((2, 3))
    pairwise_cosine(a, a)
    gap_cut(np.array([[0.9, 0.5, 0.1]]))
    bm25_matrix(np.array([[1.0, 0.0]]), np.array([2.0, 2.0]), 1.2, 0.75)
    masked_bce(a, a, a, np.ones(2), False)
    masked_bce(a, a, a, np.ones(2), True)
