"""Frechet distance between Gaussian fits of two window populations."""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, TooFewWindows
from .signals import WindowSet


def _as_points(x):
    arr = x.windows if isinstance(x, WindowSet) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch("expected a 2-D (count, dimension) array of windows")
    return arr


def psd_sqrt(mat):
    """Square root of a symmetric PSD matrix; negative eigenvalues are clipped at 0."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def trace_sqrt_product(cov_a, cov_b):
    """``Tr((C_a C_b)^{1/2})`` through the symmetric form ``C_a^{1/2} C_b C_a^{1/2}``."""
    root_a = psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    return float(np.sum(np.sqrt(np.clip(vals, 0.0, None))))


def fid(set_a, set_b):
    """``|mu_a - mu_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})`` with sample covariances.

    Each window is one point in ``window_length`` dimensions. When the
    dimension exceeds the number of windows the covariance route is replaced
    by the equivalent Gram-matrix route: with centred, ``1/sqrt(n-1)``-scaled
    data ``A`` and ``B`` (``C_a = A^T A``), the non-zero eigenvalues of
    ``C_a^{1/2} C_b C_a^{1/2}`` are the squared singular values of ``A B^T``,
    so the trace term is the nuclear norm of that small matrix.
    """
    a = _as_points(set_a)
    b = _as_points(set_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"window lengths differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewWindows("each set needs at least 2 windows")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    mean_term = float(np.sum((mu_a - mu_b) ** 2))
    dim = a.shape[1]
    if dim <= max(a.shape[0], b.shape[0]):
        cov_a = np.cov(a, rowvar=False).reshape(dim, dim)
        cov_b = np.cov(b, rowvar=False).reshape(dim, dim)
        cross = trace_sqrt_product(cov_a, cov_b)
        trace_term = float(np.trace(cov_a) + np.trace(cov_b)) - 2.0 * cross
    else:
        ca = (a - mu_a) / np.sqrt(a.shape[0] - 1)
        cb = (b - mu_b) / np.sqrt(b.shape[0] - 1)
        cross = float(np.sum(np.linalg.svd(ca @ cb.T, compute_uv=False)))
        trace_term = float(np.sum(ca * ca) + np.sum(cb * cb)) - 2.0 * cross
    return max(mean_term + trace_term, 0.0)
