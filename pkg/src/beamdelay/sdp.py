"""Small dense log-det barrier solver for max-eigenvalue minimisation.

Solves::

    minimise  t   over (x, t)
    s.t.      sum_i x_i D_i  <=  t I     (Loewner order)
              ||x||_2 < 1

For a homogeneous family ``D(x)`` the optimal ``t`` is negative exactly when
some ``x`` makes ``D(x)`` negative definite, so the sign of the optimum
decides strict LMI feasibility.  The unit ball only fixes the scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


@dataclass
class BarrierResult:
    x: np.ndarray
    t: float
    lower_bound: float
    iterations: int
    status: str  # "accepted", "positive", "converged" or "max_iter"


def _chol(S: np.ndarray):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None


def minimize_max_eigenvalue(
    basis: np.ndarray,
    *,
    accept: Callable[[np.ndarray, float], bool] | None = None,
    gap_tol: float = 1e-10,
    max_iter: int = 400,
    tau_growth: float = 8.0,
) -> BarrierResult:
    """Barrier path-following on ``min t : D(x) <= tI, ||x|| < 1``.

    Parameters
    ----------
    basis : ndarray, shape (m, N, N)
        Symmetric matrices ``D_i``.
    accept : callable, optional
        Called with ``(x, t)`` whenever an iterate has ``t < 0``; returning
        True stops the solve with status ``"accepted"``.
    gap_tol : float
        Stop once the duality-gap bound ``nu / tau`` falls below this value.

    Returns
    -------
    BarrierResult
        ``lower_bound`` is a certified lower bound on the optimal ``t``
        (valid when the last centering converged); a positive value proves
        the optimum is positive and the solve stops early with status
        ``"positive"``.
    """
    m, N, _ = basis.shape
    eye = np.eye(N)
    nu = N + 1.0
    x = np.zeros(m)
    t = 1.0
    tau = 1.0
    flat = basis.reshape(m, N * N)
    it = 0

    def dmat(xv):
        return (xv @ flat).reshape(N, N)

    def phi(xv, tv):
        r = 1.0 - xv @ xv
        if r <= 0:
            return None
        L = _chol(tv * eye - dmat(xv))
        if L is None:
            return None
        return tau * tv - 2.0 * np.log(np.diag(L)).sum() - np.log(r), L, r

    cur = phi(x, t)
    while True:
        centered = False
        for _ in range(60):
            it += 1
            f0, L, r = cur
            Linv = scipy.linalg.solve_triangular(L, eye, lower=True)
            # E_a = dS/dz_a: -D_i for x_i, I for t;  G_a = L^{-1} E_a L^{-T}
            Gx = -(Linv @ basis @ Linv.T)
            Gt = Linv @ Linv.T
            G = np.concatenate([Gx, Gt[None]], axis=0).reshape(m + 1, N * N)
            g = -G.reshape(m + 1, N, N).trace(axis1=1, axis2=2)
            H = G @ G.T
            g[:m] += 2.0 * x / r
            g[m] += tau
            H[:m, :m] += (2.0 / r) * np.eye(m) + (4.0 / r**2) * np.outer(x, x)
            try:
                dz = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = -g @ dz
            if dec / 2.0 < 1e-11:
                centered = True
                break
            step = 1.0
            while step > 1e-12:
                trial = phi(x + step * dz[:m], t + step * dz[m])
                if trial is not None and trial[0] <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x = x + step * dz[:m]
            t = t + step * dz[m]
            cur = trial
            if t < 0 and accept is not None and accept(x, t):
                return BarrierResult(x, t, t - nu / tau, it, "accepted")
            if it >= max_iter:
                return BarrierResult(x, t, -np.inf, it, "max_iter")
        lower = t - nu / tau if centered else -np.inf
        if lower > 0:
            return BarrierResult(x, t, lower, it, "positive")
        if nu / tau < gap_tol:
            return BarrierResult(x, t, lower, it, "converged")
        tau *= tau_growth
        cur = phi(x, t)
        log.debug("tau=%.3g t=%.6g iter=%d", tau, t, it)
