"""State-feedback synthesis ``u = K Y`` for the truncated model."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .model import TruncatedModel, is_controllable, krylov_newton_basis


class SynthesisError(RuntimeError):
    """Raised when no gain achieving the requested spectrum can be produced."""


class Actuation(enum.Enum):
    BOTH = "both"
    LEFT = "left"
    RIGHT = "right"

    @property
    def columns(self) -> tuple[int, ...]:
        return {Actuation.BOTH: (0, 1), Actuation.LEFT: (0,), Actuation.RIGHT: (1,)}[self]


@dataclass(frozen=True)
class FeedbackGain:
    K: np.ndarray
    actuation: Actuation
    target_poles: np.ndarray

    def __post_init__(self):
        if self.K.ndim != 2 or self.K.shape[0] != 2:
            raise ValueError(f"K must have shape (2, 2*N0), got {self.K.shape}")
        for row in (0, 1):
            if row not in self.actuation.columns and np.any(self.K[row] != 0):
                raise ValueError(f"{self.actuation.value} actuation requires K row {row + 1} to be zero")


def _check_poles(poles, dim: int) -> np.ndarray:
    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != dim:
        raise ValueError(f"expected {dim} target poles, got {poles.size}")
    if np.any(poles.real >= 0):
        raise ValueError("target poles must have negative real parts")
    conj = np.sort_complex(np.conj(poles))
    if not np.allclose(np.sort_complex(poles), conj, rtol=0, atol=1e-12 * max(1.0, np.abs(poles).max())):
        raise ValueError("target poles must be closed under complex conjugation")
    return poles


def _poly_of_matrix(A: np.ndarray, roots: np.ndarray) -> np.ndarray:
    out = np.eye(A.shape[0], dtype=complex)
    for r in roots:
        out = out @ (A - r * np.eye(A.shape[0]))
    return out


def ackermann(A: np.ndarray, b: np.ndarray, poles) -> np.ndarray:
    """Single-input gain ``k`` (row vector) such that ``A + b k`` has ``poles``.

    Ackermann's formula ``k = -e_n^T W^{-1} p(A)`` where ``W`` is the
    controllability matrix.  Any monic Newton polynomial basis may replace the
    monomial one in ``W`` without changing ``e_n^T W^{-1}``, which is what
    makes the evaluation well conditioned here.
    """
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n)
    poles = np.asarray(poles, dtype=complex)
    d = np.abs(b)
    d[d == 0] = 1.0
    Ad = (A / d[:, None]) * d[None, :]
    W, s = krylov_newton_basis(Ad, b / d)
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    row = np.linalg.solve(W.T, e_n)
    k = -(row @ _poly_of_matrix(Ad / s, poles / s))
    if np.max(np.abs(k.imag)) > 1e-8 * max(1.0, np.max(np.abs(k.real))):
        raise SynthesisError("placement produced a complex gain; are the poles conjugate-closed?")
    return s * k.real / d


def _eigenvalues_match(F: np.ndarray, poles: np.ndarray, atol: float) -> bool:
    remaining = list(np.linalg.eigvals(F))
    for p in poles:
        j = int(np.argmin([abs(p - e) for e in remaining]))
        if abs(p - remaining[j]) > atol:
            return False
        remaining.pop(j)
    return True


def _charpoly_matches(F: np.ndarray, poles: np.ndarray, rtol: float = 1e-7) -> bool:
    want, got = np.poly(poles).real, np.poly(F)
    return bool(np.all(np.abs(got - want) <= rtol * np.abs(want).max()))


def _spectrum_matches(F: np.ndarray, poles: np.ndarray, atol: float) -> bool:
    if _eigenvalues_match(F, poles, atol):
        return True
    # single-input placement of many poles (or repeated poles) leaves the
    # eigenvalues ill conditioned; fall back to the characteristic polynomial
    if _charpoly_matches(F, poles):
        warnings.warn(
            "closed-loop eigenvalues are ill conditioned; spectrum verified through "
            "the characteristic polynomial only",
            RuntimeWarning,
            stacklevel=3,
        )
        return True
    return False


def place_poles(model: TruncatedModel, actuation: Actuation | str, poles) -> FeedbackGain:
    """Place the eigenvalues of ``A + B K`` at ``poles``.

    Single-input configurations use Ackermann's formula on the selected
    column of ``B`` and leave the other row of ``K`` exactly zero.  The
    two-input configuration uses the robust Tits-Yang placement, which keeps
    the closed-loop eigenvectors well conditioned and therefore the delay
    margin large.
    """
    actuation = Actuation(actuation)
    poles = _check_poles(poles, model.dim)
    cols = list(actuation.columns)
    if not is_controllable(model.A, model.B[:, cols]):
        raise SynthesisError(f"(A, B) is not controllable for {actuation.value} actuation")
    K = np.zeros((2, model.dim))
    if len(cols) == 1:
        K[cols[0]] = ackermann(model.A, model.B[:, cols[0]], poles)
    else:
        try:
            with warnings.catch_warnings():
                # YT only polishes eigenvector conditioning; the spectrum is verified below
                warnings.filterwarnings("ignore", message="Convergence was not reached", category=UserWarning)
                res = scipy.signal.place_poles(model.A, model.B, poles, method="YT", maxiter=100, rtol=1e-10)
        except ValueError as exc:
            raise SynthesisError(str(exc)) from exc
        K = -np.asarray(res.gain_matrix)
    if not _spectrum_matches(model.A + model.B @ K, poles, atol=1e-6):
        raise SynthesisError("closed-loop spectrum misses the targets by more than 1e-6")
    return FeedbackGain(K=K, actuation=actuation, target_poles=poles)


def closed_loop(model: TruncatedModel, gain: FeedbackGain | np.ndarray) -> np.ndarray:
    K = gain.K if isinstance(gain, FeedbackGain) else np.asarray(gain, dtype=float)
    if K.shape != (2, model.dim):
        raise ValueError(f"K must have shape (2, {model.dim}), got {K.shape}")
    return model.A + model.B @ K


def spectral_abscissa_margin(F: np.ndarray) -> float:
    """``mu_M(F) = -max Re(spectrum(F))``; positive iff ``F`` is Hurwitz."""
    return float(-np.max(np.linalg.eigvals(F).real))


def is_hurwitz(F: np.ndarray) -> bool:
    return spectral_abscissa_margin(F) > 0
