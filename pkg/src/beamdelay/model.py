"""Finite-dimensional truncated model of the delayed beam.

State ordering is fixed project-wide: ``Y = (c_{1,-1}, c_{1,+1}, ...,
c_{N0,-1}, c_{N0,+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .spectral import PI4, BeamParams, discriminant, spectrum_arrays, unstable_count


@dataclass(frozen=True)
class TruncatedModel:
    N0: int
    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    params: BeamParams

    @property
    def dim(self) -> int:
        return 2 * self.N0


class ModeCountCheck(NamedTuple):
    satisfied: bool
    lhs: float
    reason: str


def delay_blocks(params: BeamParams, n_modes: int) -> np.ndarray:
    """Stack of the 2x2 delay-coupling blocks ``M_n``, shape ``(n_modes, 2, 2)``."""
    lam, k, _ = spectrum_arrays(params, n_modes)
    scale = params.gamma / (lam[:, 0] - lam[:, 1])
    ratio = k[:, 0] / k[:, 1]
    blocks = np.empty((n_modes, 2, 2))
    blocks[:, 0, 0] = 1.0
    blocks[:, 0, 1] = ratio
    blocks[:, 1, 0] = -1.0 / ratio
    blocks[:, 1, 1] = -1.0
    return blocks * scale[:, None, None]


def input_blocks(params: BeamParams, n_modes: int) -> np.ndarray:
    """Stack of the 2x2 boundary-input blocks ``B_n``, shape ``(n_modes, 2, 2)``.

    Row ``eps``, column ``m``: ``b_{n,eps,1} = -n pi C`` and
    ``b_{n,eps,2} = (-1)^n n pi C``.
    """
    _, _, C = spectrum_arrays(params, n_modes)
    n = np.arange(1, n_modes + 1)
    left = -n[:, None] * math.pi * C
    right = ((-1.0) ** n)[:, None] * n[:, None] * math.pi * C
    return np.stack([left, right], axis=-1)


def delay_block(params: BeamParams, n: int) -> np.ndarray:
    return delay_blocks(params, n)[n - 1]


def input_block(params: BeamParams, n: int) -> np.ndarray:
    return input_blocks(params, n)[n - 1]


def delay_block_bound(params: BeamParams, n) -> np.ndarray | float:
    """Upper bound ``m_n = sqrt(2) alpha gamma / sqrt(disc_n)`` on ``||M_n||``."""
    return math.sqrt(2.0) * params.alpha * params.gamma / np.sqrt(discriminant(params, n))


def assemble(params: BeamParams, N0: int) -> TruncatedModel:
    if N0 < 1:
        raise ValueError(f"N0 must be >= 1, got {N0}")
    lam, _, _ = spectrum_arrays(params, N0)
    A = np.diag(lam.ravel())
    B = input_blocks(params, N0).reshape(2 * N0, 2)
    M = scipy.linalg.block_diag(*delay_blocks(params, N0))
    return TruncatedModel(N0=N0, A=A, B=B, M=M, params=params)


def small_gain_mode_count(params: BeamParams, N0: int) -> ModeCountCheck:
    """Check that ``N0`` retained modes make the neglected tail robustly stable.

    Returns ``(satisfied, lhs, reason)`` where ``lhs`` is
    ``60 alpha^2 gamma^2 / (disc_{N0+1} lambda_{N0+1,+1}^2)`` and the
    condition is ``lhs < 1`` together with ``N0 >= floor(beta^(1/4)/pi)``.
    ``reason`` is empty on success.
    """
    if N0 < 0:
        raise ValueError(f"N0 must be non-negative, got {N0}")
    n_next = N0 + 1
    disc = float(discriminant(params, n_next))
    lam_next = (params.beta - n_next**4 * PI4) / (params.alpha * n_next**2 * math.pi**2 + math.sqrt(disc))
    if lam_next == 0.0:
        return ModeCountCheck(False, math.inf, "lambda_{N0+1,+1} vanishes: N0 below the unstable mode count")
    lhs = 60 * params.alpha**2 * params.gamma**2 / disc / lam_next**2
    if N0 < unstable_count(params):
        return ModeCountCheck(False, lhs, f"N0={N0} is below the unstable mode count {unstable_count(params)}")
    if not lhs < 1:
        return ModeCountCheck(False, lhs, f"small-gain quantity {lhs:.6g} is not < 1")
    return ModeCountCheck(True, lhs, "")


def leja_order(points) -> np.ndarray:
    """Reorder ``points`` so that each maximises its distance product to the previous ones."""
    remaining = list(np.asarray(points, dtype=complex))
    if not remaining:
        return np.empty(0, dtype=complex)
    order = [max(remaining, key=abs)]
    remaining.remove(order[0])
    while remaining:
        nxt = max(remaining, key=lambda z: np.prod([abs(z - w) for w in order]))
        order.append(nxt)
        remaining.remove(nxt)
    return np.asarray(order)


def krylov_newton_basis(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Kalman matrix of ``(A, b)`` written in a Newton polynomial basis.

    Column block ``j`` is ``prod_{i<j} (A/s - z_i I) b`` with ``z_i`` the
    Leja-ordered eigenvalues of ``A/s`` and ``s`` the spectral radius.  The
    column space equals that of ``[b, Ab, ..., A^{n-1} b]`` but, unlike the
    monomial form, stays well conditioned when eigenvalues cluster.  Returns
    the (complex, unnormalised) matrix and the scale ``s``.
    """
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    z = leja_order(np.linalg.eigvals(A))
    s = float(max(abs(z[0]), 1e-300))
    As = A / s
    v = b.astype(complex)
    cols = []
    for j in range(n):
        cols.append(v)
        v = As @ v - (z[j] / s) * v
    return np.hstack(cols), s


def is_controllable(A: np.ndarray, b: np.ndarray, rtol: float = 1e-8) -> bool:
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    # diagonal similarity: unit-norm input rows
    d = np.linalg.norm(b, axis=1)
    d[d == 0] = 1.0
    W, _ = krylov_newton_basis((A / d[:, None]) * d[None, :], b / d[:, None])
    norms = np.linalg.norm(W, axis=0)
    W = W[:, norms > 0] / norms[norms > 0]
    if W.shape[1] < n:
        return False
    sv = np.linalg.svd(W, compute_uv=False)
    return bool(sv[n - 1] > rtol * sv[0])


_SELECTIONS = {"full": slice(0, 2), "column1": slice(0, 1), "column2": slice(1, 2)}


def controllability_check(model: TruncatedModel, which: str = "full") -> bool:
    """Kalman rank test for ``(A, B)``, ``(A, B[:, 0])`` or ``(A, B[:, 1])``.

    The Krylov space is spanned in a Newton basis (see
    :func:`krylov_newton_basis`) with unit-norm columns; the numerical rank
    threshold is ``1e-8`` relative to the largest singular value.
    """
    try:
        cols = _SELECTIONS[which]
    except KeyError:
        raise ValueError(f"unknown input selection {which!r}") from None
    return is_controllable(model.A, model.B[:, cols])
