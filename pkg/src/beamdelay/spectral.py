"""Closed-form spectral data of the pinned, damped Euler-Bernoulli beam.

The disturbance-free operator has simple real eigenvalues indexed by a mode
number ``n >= 1`` and a branch ``eps in {-1, +1}``.  Everything here is a pure
function of :class:`BeamParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PI2 = math.pi**2
PI4 = math.pi**4
PI8 = math.pi**8

EPS_ORDER = (-1, 1)


@dataclass(frozen=True)
class BeamParams:
    """Physical parameters of the beam.

    ``alpha`` is the Kelvin-Voigt damping (must exceed 1 so that the spectrum
    is real), ``beta0`` the instantaneous reaction coefficient and ``gamma``
    the coefficient of the delayed reaction term.
    """

    alpha: float
    beta0: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta0", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.beta0 < 0:
            raise ValueError(f"beta0 must be >= 0, got {self.beta0}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    @property
    def beta(self) -> float:
        return self.beta0 + self.gamma


class ModeIndex(NamedTuple):
    n: int
    eps: int


@dataclass(frozen=True)
class SpectralMode:
    index: ModeIndex
    lam: float
    k: float
    C: float


@dataclass(frozen=True)
class RieszConstants:
    C_R: float
    m_R: float
    M_R: float


def _check_index(n: int, eps: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"mode number must be a positive integer, got {n}")
    if eps not in EPS_ORDER:
        raise ValueError(f"branch must be -1 or +1, got {eps}")


def discriminant(params: BeamParams, n) -> float:
    """``(alpha^2 - 1) n^4 pi^4 + beta``; strictly positive."""
    n4pi4 = np.asarray(n, dtype=float) ** 4 * PI4
    return (params.alpha**2 - 1.0) * n4pi4 + params.beta


def eigenvalue(params: BeamParams, n: int, eps: int) -> float:
    """Eigenvalue ``lambda_{n,eps}`` of the disturbance-free operator.

    The upper branch is evaluated in rationalised form
    ``(beta - n^4 pi^4) / (alpha n^2 pi^2 + sqrt(disc))`` which keeps full
    relative accuracy when the two terms of the direct formula nearly cancel.
    """
    _check_index(n, eps)
    return float(_eigenvalues(params, np.asarray([n]), eps)[0])


def _eigenvalues(params: BeamParams, n: np.ndarray, eps: int) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    a = params.alpha * n**2 * PI2
    root = np.sqrt(discriminant(params, n))
    if eps > 0:
        return (params.beta - n**4 * PI4) / (a + root)
    return -a - root


def mode_data(params: BeamParams, n: int, eps: int) -> SpectralMode:
    """Eigenvalue, eigenvector normalisation ``k`` and dual coefficient ``C``."""
    lam = eigenvalue(params, n, eps)
    k = math.sqrt((n**4 * PI4 + lam**2) / 2.0)
    C = eps * k / math.sqrt(discriminant(params, n))
    return SpectralMode(ModeIndex(int(n), int(eps)), lam, k, C)


def spectrum_arrays(params: BeamParams, n_modes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(lam, k, C)`` for ``n = 1..n_modes``.

    Each array has shape ``(n_modes, 2)``; column 0 is ``eps = -1`` and
    column 1 is ``eps = +1``.
    """
    n = np.arange(1, n_modes + 1, dtype=float)
    lam = np.column_stack([_eigenvalues(params, n, -1), _eigenvalues(params, n, 1)])
    k = np.sqrt((n[:, None] ** 4 * PI4 + lam**2) / 2.0)
    C = np.array(EPS_ORDER, dtype=float) * k / np.sqrt(discriminant(params, n))[:, None]
    return lam, k, C


def unstable_count(params: BeamParams) -> int:
    """Number of eigenvalues with non-negative real part, ``floor(beta^(1/4)/pi)``."""
    count = int(math.floor(params.beta**0.25 / math.pi))
    # guard the floor against rounding in the fourth root
    while (count + 1) ** 4 * PI4 <= params.beta:
        count += 1
    while count > 0 and count**4 * PI4 > params.beta:
        count -= 1
    return count


def riesz_constants(params: BeamParams) -> RieszConstants:
    beta = params.beta
    C_R = max(1.0 / params.alpha, beta / math.sqrt(4 * params.alpha**2 * PI8 + beta**2))
    return RieszConstants(C_R=C_R, m_R=1.0 - C_R, M_R=1.0 + C_R)


def gram_block(params: BeamParams, n: int) -> np.ndarray:
    """Gram matrix of the unit eigenvectors ``phi_{n,-1}, phi_{n,+1}``.

    Modes with different ``n`` are orthogonal, so the squared state norm is
    the sum over ``n`` of the quadratic forms of these 2x2 blocks.
    """
    km = mode_data(params, n, -1).k
    kp = mode_data(params, n, 1).k
    off = (2 * n**4 * PI4 - params.beta) / (2 * km * kp)
    return np.array([[1.0, off], [off, 1.0]])


def gram_offdiagonals(params: BeamParams, n_modes: int) -> np.ndarray:
    _, k, _ = spectrum_arrays(params, n_modes)
    n = np.arange(1, n_modes + 1, dtype=float)
    return (2 * n**4 * PI4 - params.beta) / (2 * k[:, 0] * k[:, 1])
