"""Delay robustness of the closed-loop truncated model.

Two routes are provided:

* a Lyapunov-Krasovskii LMI ``Theta(h_M, kappa) < 0`` whose feasibility is
  searched with :mod:`beamdelay.sdp` and whose certificates are re-checked by
  a plain symmetric eigensolver, and
* the closed-form small-gain condition, with its explicit upper bound on the
  admissible delay.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .control import spectral_abscissa_margin
from .sdp import minimize_max_eigenvalue


class NoCertificateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThetaProblem:
    F: np.ndarray
    G: np.ndarray
    h_M: float
    kappa: float = 0.0

    def __post_init__(self):
        F, G = np.asarray(self.F, dtype=float), np.asarray(self.G, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1] or F.shape != G.shape:
            raise ValueError(f"F and G must be square of equal size, got {F.shape} and {G.shape}")
        if not self.h_M > 0:
            raise ValueError(f"h_M must be positive, got {self.h_M}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class LKCertificate:
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    Q: np.ndarray
    problem: ThetaProblem
    iterations: int = 0
    resolution: float | None = None
    meta: dict = field(default_factory=dict, compare=False)


def build_theta(problem: ThetaProblem, P1, P2, P3, Q) -> np.ndarray:
    """Assemble the symmetric ``3n x 3n`` matrix ``Theta(h_M, kappa)``.

    Only the upper block triangle is formed explicitly; the lower blocks are
    mirrored so that the result is exactly symmetric.
    """
    F, G, h, kap = problem.F, problem.G, problem.h_M, problem.kappa
    n = problem.n
    T11 = 2 * kap * P1 + F.T @ P2 + P2.T @ F
    T12 = P1 - P2.T + F.T @ P3
    T13 = h * P2.T @ G
    T22 = -P3 - P3.T + h * Q
    T23 = h * P3.T @ G
    T33 = -h * math.exp(-2 * kap * h) * Q
    theta = np.zeros((3 * n, 3 * n))
    blocks = {(0, 0): T11, (0, 1): T12, (0, 2): T13, (1, 1): T22, (1, 2): T23, (2, 2): T33}
    for (i, j), blk in blocks.items():
        theta[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
    upper = np.triu(theta)
    return upper + np.triu(theta, 1).T


def _sym_basis(n: int) -> list[np.ndarray]:
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _full_basis(n: int) -> list[np.ndarray]:
    out = []
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            out.append(E)
    return out


def _lmi_basis(problem: ThetaProblem):
    """Basis of ``x -> blockdiag(Theta, -P1, -Q)`` and the decision-variable map."""
    n = problem.n
    Z = np.zeros((n, n))
    sym, full = _sym_basis(n), _full_basis(n)
    decision = (
        [(E, Z, Z, Z) for E in sym]
        + [(Z, E, Z, Z) for E in full]
        + [(Z, Z, E, Z) for E in full]
        + [(Z, Z, Z, E) for E in sym]
    )
    mats, scales = [], []
    for P1, P2, P3, Q in decision:
        D = scipy.linalg.block_diag(build_theta(problem, P1, P2, P3, Q), -P1, -Q)
        s = np.linalg.norm(D)
        mats.append(D / s)
        scales.append(s)
    return np.array(mats), np.array(scales), decision


def _unpack(x: np.ndarray, scales: np.ndarray, decision) -> tuple[np.ndarray, ...]:
    coeffs = x / scales
    return tuple(sum(c * parts[k] for c, parts in zip(coeffs, decision)) for k in range(4))


def verify_certificate(cert: LKCertificate, tol: float = 1e-9) -> bool:
    """Independent eigenvalue check of an LMI certificate.

    True iff ``P1`` and ``Q`` are symmetric with ``lambda_min > tol*||.||`` and
    ``lambda_max(Theta) < -tol*||Theta||``.
    """
    P1, Q = np.asarray(cert.P1, dtype=float), np.asarray(cert.Q, dtype=float)
    if not (np.all(np.isfinite(P1)) and np.all(np.isfinite(Q))):
        return False
    for S in (P1, Q):
        if np.abs(S - S.T).max() > 1e-12 * max(np.abs(S).max(), 1e-300):
            return False
        if not np.linalg.eigvalsh(S).min() > tol * np.linalg.norm(S, 2):
            return False
    theta = build_theta(cert.problem, P1, np.asarray(cert.P2, float), np.asarray(cert.P3, float), Q)
    if not np.all(np.isfinite(theta)):
        return False
    return bool(np.linalg.eigvalsh(theta).max() < -tol * np.linalg.norm(theta, 2))


def find_certificate(problem: ThetaProblem, margin: float = 1e-7, max_iter: int = 400) -> LKCertificate | None:
    """Search for ``(P1, P2, P3, Q)`` making ``Theta(h_M, kappa)`` negative definite.

    One-sided: ``None`` means no certificate was found, not that none exists.
    A returned certificate passes :func:`verify_certificate` at tolerance
    ``margin``.
    """
    basis, scales, decision = _lmi_basis(problem)
    found: list[LKCertificate] = []

    def accept(x, t):
        P1, P2, P3, Q = _unpack(x, scales, decision)
        cert = LKCertificate(P1, P2, P3, Q, problem)
        if verify_certificate(cert, tol=margin):
            found.append(cert)
            return True
        return False

    try:
        res = minimize_max_eigenvalue(basis, accept=accept, max_iter=max_iter)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        return None
    if not found:
        return None
    return replace(found[0], iterations=res.iterations, meta={"t": res.t, "status": res.status})


class CertifiedDelay(NamedTuple):
    h_M: float
    certificate: LKCertificate


class CertifiedRate(NamedTuple):
    kappa: float
    certificate: LKCertificate


def _grid_bisect(feasible, i_lo: int, i_hi: int):
    """Largest grid index in ``[i_lo, i_hi]`` with a certificate, assuming ``i_lo`` works."""
    cert_hi = feasible(i_hi)
    if cert_hi is not None:
        return i_hi, cert_hi
    best = feasible(i_lo)
    if best is None:
        return None
    lo, hi = i_lo, i_hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        cert = feasible(mid)
        if cert is not None:
            lo, best = mid, cert
        else:
            hi = mid
    return lo, best


def max_certified_delay(F, G, kappa: float = 0.0, resolution: float = 1e-3, upper: float = 10.0) -> CertifiedDelay:
    """Largest ``h_M`` on the grid ``resolution * k`` with a verified certificate.

    Bisection over ``[resolution, upper]``.  The result is a lower bound on the
    true feasibility boundary of the LMI.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    n_hi = int(math.floor(upper / resolution + 1e-9))

    def feasible(i):
        cert = find_certificate(ThetaProblem(F, G, i * resolution, kappa))
        return None if cert is None else replace(cert, resolution=resolution)

    if feasible(1) is None:
        raise NoCertificateError(f"no certificate at the smallest grid delay h_M={resolution}")
    i, cert = _grid_bisect(feasible, 1, n_hi)
    return CertifiedDelay(round(i * resolution, 12), cert)


def max_decay_rate(F, G, h_M: float, resolution: float = 1e-2) -> CertifiedRate:
    """Largest ``kappa`` on the grid ``resolution * k`` in ``[0, 2 mu_M(F)]`` with a certificate."""
    if find_certificate(ThetaProblem(F, G, h_M, 0.0)) is None:
        raise NoCertificateError(f"Theta(h_M={h_M}, 0) has no certificate")
    mu = spectral_abscissa_margin(np.asarray(F, dtype=float))
    n_hi = max(1, int(math.floor(2 * max(mu, 0.0) / resolution)))

    def feasible(i):
        cert = find_certificate(ThetaProblem(F, G, h_M, i * resolution))
        return None if cert is None else replace(cert, resolution=resolution)

    result = _grid_bisect(feasible, 0, n_hi)
    i, cert = result
    return CertifiedRate(round(i * resolution, 12), cert)


def lemma_certificate(F, G, h_M: float) -> LKCertificate:
    """Explicit candidate for small ``h_M``: ``P1 = 2 P2``, ``P3 = -F^{-T} P2``, ``Q = I``,
    with ``P2`` solving ``F^T P2 + P2 F = -I``.  Valid for ``F`` Hurwitz and ``h_M`` small
    enough; check with :func:`verify_certificate`."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    P2 = scipy.linalg.solve_continuous_lyapunov(F.T, -np.eye(n))
    P2 = (P2 + P2.T) / 2
    P3 = -np.linalg.solve(F.T, P2)
    return LKCertificate(2 * P2, P2, P3, np.eye(n), ThetaProblem(F, G, h_M, 0.0))


def delay_upper_bound_small_gain(A_cl, M) -> float:
    """``log(1 + mu_M(A_cl)/||M||) / ||A_cl||``: every delay passing the small-gain test is below it."""
    A_cl = np.asarray(A_cl, dtype=float)
    mu = spectral_abscissa_margin(A_cl)
    if not mu > 0:
        raise ValueError("A_cl is not Hurwitz")
    norm_M = np.linalg.norm(M, 2)
    if norm_M == 0:
        return math.inf
    return math.log1p(mu / norm_M) / np.linalg.norm(A_cl, 2)


def small_gain_delay_check(A_cl, M, h_M: float, C_lambda: float, lam: float) -> bool:
    """Evaluate ``C_lambda ||M|| (exp(||A_cl|| h_M) - exp(-lam h_M)) < lam``."""
    if C_lambda < 1 or not lam > 0:
        raise ValueError("need C_lambda >= 1 and lam > 0")
    a = np.linalg.norm(A_cl, 2)
    lhs = C_lambda * np.linalg.norm(M, 2) * (math.exp(a * h_M) - math.exp(-lam * h_M))
    return bool(lhs < lam)


def exponential_envelope(A_cl, lam: float | None = None, horizon: float = 20.0, samples: int = 2000):
    """Constants ``(C, lam)`` with ``||exp(A_cl t)|| <= C exp(-lam t)``.

    ``lam`` defaults to ``0.9 mu_M(A_cl)``.  ``C`` starts from the Lyapunov
    bound ``sqrt(cond(P))`` with ``(A_cl + lam I)^T P + P (A_cl + lam I) = -I``
    and is then inflated by the worst violation seen on a sampled grid.
    """
    A_cl = np.asarray(A_cl, dtype=float)
    mu = spectral_abscissa_margin(A_cl)
    if not mu > 0:
        raise ValueError("A_cl is not Hurwitz")
    lam = 0.9 * mu if lam is None else lam
    if not 0 < lam < mu:
        raise ValueError(f"lam must lie in (0, {mu})")
    shifted = A_cl + lam * np.eye(A_cl.shape[0])
    P = scipy.linalg.solve_continuous_lyapunov(shifted.T, -np.eye(A_cl.shape[0]))
    ev = np.linalg.eigvalsh((P + P.T) / 2)
    C = max(1.0, math.sqrt(ev.max() / ev.min()))
    ts = np.linspace(0.0, horizon, samples)
    step = scipy.linalg.expm(A_cl * (ts[1] - ts[0]))
    E = np.eye(A_cl.shape[0])
    worst = 1.0
    for t in ts:
        worst = max(worst, np.linalg.norm(E, 2) / (C * math.exp(-lam * t)))
        E = step @ E
    return C * worst, lam


# -- certificate text format -------------------------------------------------

def _fmt_matrix(name: str, A: np.ndarray) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows = "\n".join(" ".join(f"{v:.17g}" for v in row) for row in A)
    return f"{name} {A.shape[0]} {A.shape[1]}\n{rows}\n"


def format_certificate(cert: LKCertificate) -> str:
    """Plain-text certificate: header scalars then row-major matrices at 17 significant digits."""
    p = cert.problem
    head = [
        "# Lyapunov-Krasovskii certificate",
        f"h_M {p.h_M:.17g}",
        f"kappa {p.kappa:.17g}",
        f"resolution {cert.resolution:.17g}" if cert.resolution is not None else "resolution none",
        f"iterations {cert.iterations}",
    ]
    body = [
        _fmt_matrix(name, M)
        for name, M in (("F", p.F), ("G", p.G), ("P1", cert.P1), ("P2", cert.P2), ("P3", cert.P3), ("Q", cert.Q))
    ]
    return "\n".join(head) + "\n" + "".join(body)


def parse_certificate(text: str) -> LKCertificate:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip() and not ln.startswith("#")]
    scalars, mats = {}, {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] in ("F", "G", "P1", "P2", "P3", "Q"):
            r, c = int(parts[1]), int(parts[2])
            mats[parts[0]] = np.array([[float(v) for v in lines[i + 1 + k].split()] for k in range(r)]).reshape(r, c)
            i += 1 + r
        else:
            scalars[parts[0]] = parts[1]
            i += 1
    problem = ThetaProblem(mats["F"], mats["G"], float(scalars["h_M"]), float(scalars["kappa"]))
    res = None if scalars.get("resolution", "none") == "none" else float(scalars["resolution"])
    return LKCertificate(
        mats["P1"], mats["P2"], mats["P3"], mats["Q"], problem,
        iterations=int(scalars.get("iterations", 0)), resolution=res,
    )
