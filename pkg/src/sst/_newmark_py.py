"""NumPy fallback for the Newmark recurrence (same contract as ``_newmark.pyx``)."""
import numpy as np


def newmark_recurrence(pp, q, c0, c2, c3, dt, gamma, u0, v0, a0):
    """Advance ``u_{k+1} = pp[k+1] + q @ [u_k, v_k, a_k]`` and the Newmark updates.

    ``pp`` holds ``K_eff^{-1} p_k`` for every step, ``q`` is the ``(n, 3n)``
    propagation matrix. Returns displacement, velocity and acceleration
    histories shaped like ``pp``.
    """
    steps, n = pp.shape
    u = np.empty((steps, n))
    v = np.empty((steps, n))
    a = np.empty((steps, n))
    u[0], v[0], a[0] = u0, v0, a0
    qu, qv, qa = q[:, :n], q[:, n : 2 * n], q[:, 2 * n :]
    g0 = dt * (1.0 - gamma)
    g1 = dt * gamma
    for k in range(steps - 1):
        uk, vk, ak = u[k], v[k], a[k]
        un = pp[k + 1] + qu @ uk + qv @ vk + qa @ ak
        an = c0 * (un - uk) - c2 * vk - c3 * ak
        u[k + 1] = un
        a[k + 1] = an
        v[k + 1] = vk + g0 * ak + g1 * an
    return u, v, a
