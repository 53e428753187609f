"""Newmark time integration for linear multi-DOF systems.

The step recurrence runs in the compiled ``_newmark`` extension when it was
built and falls back to NumPy otherwise; ``BACKEND`` names the active one.
"""
from __future__ import annotations

import numpy as np

from . import _newmark_py
from .errors import UnstableIntegration, ValidationError

try:
    from . import _newmark as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends():
    return ("cython", "python") if _compiled is not None else ("python",)


def _kernel(backend):
    if backend == "auto":
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise ValidationError("the compiled Newmark kernel is not built")
        return _compiled.newmark_recurrence
    if backend == "python":
        return _newmark_py.newmark_recurrence
    raise ValidationError(f"unknown backend {backend!r}")


def newmark(mass, damping, stiffness, forces, dt, u0=None, v0=None,
            gamma=0.5, beta=0.25, backend="auto"):
    """Integrate ``M a + C v + K u = p(t)``.

    Parameters
    ----------
    mass, damping, stiffness : (n, n) arrays
    forces : (steps, n) array
        Load at every time step, sample ``k`` acting at ``t = k * dt``.
    dt : float
    u0, v0 : (n,) arrays, optional
        Initial displacement and velocity (zero by default).
    gamma, beta : float
        Newmark parameters; the default (1/2, 1/4) is the average-acceleration rule.

    Returns
    -------
    u, v, a : (steps, n) arrays
    """
    M = np.asarray(mass, dtype=np.float64)
    C = np.asarray(damping, dtype=np.float64)
    K = np.asarray(stiffness, dtype=np.float64)
    p = np.atleast_2d(np.asarray(forces, dtype=np.float64))
    n = M.shape[0]
    if p.shape[1] != n:
        raise ValidationError(f"forces have {p.shape[1]} columns for {n} DOFs")
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=np.float64)
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64)
    a0 = np.linalg.solve(M, p[0] - C @ v0 - K @ u0)

    c0 = 1.0 / (beta * dt * dt)
    c1 = gamma / (beta * dt)
    c2 = 1.0 / (beta * dt)
    c3 = 1.0 / (2.0 * beta) - 1.0
    c4 = gamma / beta - 1.0
    c5 = dt * (gamma / (2.0 * beta) - 1.0)
    k_eff_inv = np.linalg.inv(K + c0 * M + c1 * C)
    q = k_eff_inv @ np.hstack([c0 * M + c1 * C, c2 * M + c4 * C, c3 * M + c5 * C])
    pp = np.ascontiguousarray(p @ k_eff_inv.T)

    u, v, a = _kernel(backend)(pp, np.ascontiguousarray(q), c0, c2, c3, dt, gamma, u0, v0, a0)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(a))):
        raise UnstableIntegration("non-finite response encountered during time integration")
    return u, v, a
