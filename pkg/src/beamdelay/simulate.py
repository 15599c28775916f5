"""Modal simulation of the closed-loop delayed beam.

The PDE is replaced by its first ``n_modes`` modal pairs

    c_n' = Lambda_n c_n + M_n (c_n(t - h(t)) - c_n) + B_n (u + d_b) + p_{d,n}

with ``u = K Y`` and ``Y`` the first ``2 N0`` coefficients.  Time stepping is
classical fixed-step RK4; delayed states are read from a cubic Hermite
interpolant of the stored solution (or from the initial history itself when
the delayed time is negative).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.optimize

from .control import FeedbackGain
from .model import delay_blocks, input_blocks
from .spectral import BeamParams, gram_offdiagonals, riesz_constants, spectrum_arrays


class DelayBoundsError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"state blew up at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class DelaySignal:
    """Time-varying delay ``h(t)`` with declared bounds ``h_min <= h(t) <= h_max``.

    ``func`` must accept a numpy array of times.
    """

    h_min: float
    h_max: float
    func: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not 0 < self.h_min <= self.h_max:
            raise ValueError(f"need 0 < h_min <= h_max, got {self.h_min}, {self.h_max}")

    def __call__(self, t):
        return self.func(t)

    @classmethod
    def constant(cls, value: float) -> "DelaySignal":
        return cls(value, value, lambda t: np.full(np.shape(t), float(value)))

    @classmethod
    def sinusoidal(cls, offset: float, amplitude: float, frequency: float) -> "DelaySignal":
        """``offset + amplitude * sin(2 pi frequency t)``."""
        amp = abs(amplitude)
        return cls(
            offset - amp,
            offset + amp,
            lambda t: offset + amplitude * np.sin(2 * math.pi * frequency * np.asarray(t, dtype=float)),
        )


@dataclass(frozen=True)
class Disturbance:
    """Distributed ``d_d(t, x)`` and boundary ``d_b(t) -> (d_b1, d_b2)`` perturbations.

    Both callables must broadcast: ``distributed(t[:, None], x[None, :])`` and
    ``boundary(t)`` returning shape ``t.shape + (2,)``.  ``None`` means zero.
    """

    distributed: Callable | None = None
    boundary: Callable | None = None


NO_DISTURBANCE = Disturbance()


@dataclass(frozen=True)
class InitialHistory:
    """Initial displacement/velocity histories on ``[-h_M, 0] x [0, 1]``.

    Callables take broadcastable ``(tau, x)`` arrays.  The optional
    ``tau``-derivatives are used for the ``||Phi||_{1,h_M}`` norm.
    """

    y0: Callable
    yt0: Callable
    dy0_dtau: Callable | None = None
    dyt0_dtau: Callable | None = None


def gauss_legendre(panels: int = 32, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on ``[0, 1]``."""
    xi, wi = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    x = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    w = (half[:, None] * wi[None, :]).ravel()
    return x, w


class SineProjector:
    """Quadrature of ``int_0^1 f(x) sin(n pi x) dx`` for ``n = 1..n_modes``."""

    def __init__(self, n_modes: int, nodes: int = 512):
        if nodes < 64:
            raise ValueError("at least 64 quadrature nodes are required")
        order = 16
        self.x, w = gauss_legendre(max(1, nodes // order), order)
        n = np.arange(1, n_modes + 1)
        self.matrix = w[None, :] * np.sin(np.pi * n[:, None] * self.x[None, :])

    def __call__(self, values: np.ndarray) -> np.ndarray:
        # values: (..., nq) -> (..., n_modes)
        return values @ self.matrix.T


def _interleave(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([a, b], axis=-1).reshape(*a.shape[:-1], -1)


def modal_coefficients(params: BeamParams, n_modes: int, disp_sine: np.ndarray, vel_sine: np.ndarray) -> np.ndarray:
    """Coefficients ``<(y, y_t), psi_{n,eps}>`` from sine moments of ``y`` and ``y_t``.

    With pinned ends ``int y'' sin(n pi x) = -n^2 pi^2 int y sin(n pi x)``, so
    ``c_{n,eps} = C_{n,eps} (-lambda_{n,-eps} a_n + b_n)`` where ``a_n, b_n``
    are the sine moments of displacement and velocity.
    """
    lam, _, C = spectrum_arrays(params, n_modes)
    cm = C[:, 0] * (-lam[:, 1] * disp_sine + vel_sine)
    cp = C[:, 1] * (-lam[:, 0] * disp_sine + vel_sine)
    return _interleave(cm, cp)


def _check_pinned(ic: InitialHistory, taus: np.ndarray) -> None:
    ends = np.asarray(ic.y0(taus[:, None], np.array([[0.0, 1.0]])), dtype=float)
    scale = max(1.0, float(np.max(np.abs(ic.y0(taus[:, None], np.linspace(0, 1, 33)[None, :])))))
    if np.max(np.abs(ends)) > 1e-10 * scale:
        raise ValueError("initial displacement must vanish at x=0 and x=1")


def project_initial(
    ic: InitialHistory, params: BeamParams, n_modes: int, taus, nodes: int = 512, projector: SineProjector | None = None
) -> np.ndarray:
    """Modal coefficients of the initial history at times ``taus``, shape ``(len(taus), 2 n_modes)``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    _check_pinned(ic, taus)
    proj = projector or SineProjector(n_modes, nodes)
    x = proj.x[None, :]
    a = proj(np.broadcast_to(ic.y0(taus[:, None], x), (taus.size, x.size)))
    b = proj(np.broadcast_to(ic.yt0(taus[:, None], x), (taus.size, x.size)))
    return modal_coefficients(params, n_modes, a, b)


def project_disturbance(
    dist: Disturbance, t, params: BeamParams, n_modes: int, nodes: int = 512, projector: SineProjector | None = None
) -> np.ndarray:
    """``p_{d,n,eps}(t) = C_{n,eps} int d_d(t, x) sin(n pi x) dx`` in block order."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros((t.size, 2 * n_modes))
    if dist.distributed is not None:
        proj = projector or SineProjector(n_modes, nodes)
        vals = np.broadcast_to(dist.distributed(t[:, None], proj.x[None, :]), (t.size, proj.x.size))
        s = proj(vals)
        _, _, C = spectrum_arrays(params, n_modes)
        out = _interleave(C[:, 0] * s, C[:, 1] * s)
    return out[0] if scalar else out


def state_norm(coeffs: np.ndarray, params: BeamParams) -> np.ndarray:
    """Exact ``H``-norm of ``sum c_{n,eps} phi_{n,eps}`` through the 2x2 Gram blocks."""
    c = np.asarray(coeffs, dtype=float)
    n_modes = c.shape[-1] // 2
    pairs = c.reshape(*c.shape[:-1], n_modes, 2)
    off = gram_offdiagonals(params, n_modes)
    sq = (pairs**2).sum(-1) + 2 * off * pairs[..., 0] * pairs[..., 1]
    return np.sqrt(np.maximum(sq.sum(-1), 0.0))


def modal_field(coeffs: np.ndarray, params: BeamParams, x_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(coeffs, dtype=float)
    n_modes = c.shape[-1] // 2
    lam, k, _ = spectrum_arrays(params, n_modes)
    pairs = c.reshape(*c.shape[:-1], n_modes, 2)
    sines = np.sin(np.pi * np.arange(1, n_modes + 1)[:, None] * np.asarray(x_grid)[None, :])
    y = (pairs / k).sum(-1) @ sines
    yt = (pairs * lam / k).sum(-1) @ sines
    return y, yt


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray
    rates: np.ndarray
    controls: np.ndarray
    state_norms: np.ndarray
    sup_displacement: np.ndarray
    params: BeamParams
    K: np.ndarray | None
    dt: float

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[1] // 2


def reconstruct_field(traj: Trajectory, params: BeamParams, x_grid) -> tuple[np.ndarray, np.ndarray]:
    """Displacement and velocity ``y(t, x), y_t(t, x)`` on ``traj.times x x_grid``."""
    return modal_field(traj.coeffs, params, np.asarray(x_grid, dtype=float))


def _hermite_weights(theta: np.ndarray, dt: float) -> np.ndarray:
    t2 = theta * theta
    one = 1.0 - theta
    return np.stack(
        [
            (1 + 2 * theta) * one * one,
            dt * theta * one * one,
            t2 * (3 - 2 * theta),
            dt * t2 * (theta - 1),
        ],
        axis=-1,
    )


def _first_breakpoints(delay: DelaySignal, dt: float, t_end: float) -> dict[int, list[float]]:
    """Times where ``t - h(t)`` crosses zero, grouped by the step that contains them.

    The solution has a derivative jump at ``t = 0`` (the history slope differs
    from the right-hand side), so the delayed term has a kink wherever the
    delayed time crosses zero.  Stepping across such a kink costs RK4 two
    orders; splitting the step there restores third order globally.
    """
    if t_end <= 0:
        return {}
    grid = np.linspace(0.0, t_end, int(math.ceil(t_end / dt)) * 8 + 1)
    s = grid - np.asarray(delay(grid), dtype=float)
    out: dict[int, list[float]] = {}
    for i in np.nonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)[0]:
        root = scipy.optimize.brentq(lambda t: t - float(delay(np.array(t))), grid[i], grid[i + 1], xtol=1e-15)
        k = int(math.floor(root / dt))
        if min(root - k * dt, (k + 1) * dt - root) > 1e-12 * dt:
            out.setdefault(k, []).append(root)
    return out


def simulate(
    params: BeamParams,
    gain: FeedbackGain | np.ndarray | None,
    delay: DelaySignal,
    disturbance: Disturbance,
    initial: InitialHistory,
    n_modes: int,
    dt: float,
    T: float,
    *,
    save_every: int | None = None,
    x_points: int = 201,
    nodes: int = 512,
    chunk: int = 4096,
) -> Trajectory:
    """Integrate the ``2 n_modes``-dimensional modal delay system on ``[0, T]``.

    ``gain=None`` simulates the open loop.  Output is stored every
    ``save_every`` steps (default: every 0.01 s).

    Raises
    ------
    DelayBoundsError
        If ``h(t)`` leaves ``[h_min, h_max]`` at any stage time.
    DivergenceError
        If the state becomes non-finite; carries the blow-up time.
    """
    if not dt > 0 or not T > 0:
        raise ValueError("dt and T must be positive")
    if dt > delay.h_min / 4 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds h_min/4={delay.h_min / 4}")
    K = None
    if gain is not None:
        K = np.asarray(gain.K if isinstance(gain, FeedbackGain) else gain, dtype=float)
        if K.ndim != 2 or K.shape[0] != 2 or K.shape[1] % 2 or K.shape[1] > 2 * n_modes:
            raise ValueError(f"gain shape {K.shape} incompatible with {n_modes} simulated modes")

    dim = 2 * n_modes
    lam, _, C = spectrum_arrays(params, n_modes)
    if dt * np.abs(lam).max() > 2.5:
        warnings.warn(
            f"dt*max|lambda| = {dt * np.abs(lam).max():.3g} > 2.5: explicit RK4 may be unstable",
            RuntimeWarning,
            stacklevel=2,
        )
    Mfull = scipy.linalg.block_diag(*delay_blocks(params, n_modes))
    Bfull = input_blocks(params, n_modes).reshape(dim, 2)
    Kpad = np.zeros((2, dim))
    if K is not None:
        Kpad[:, : K.shape[1]] = K
    J = np.diag(lam.ravel()) - Mfull + Bfull @ Kpad

    proj = SineProjector(n_modes, nodes)
    n_steps = int(math.ceil(T / dt - 1e-9))
    save_every = save_every or max(1, int(round(0.01 / dt)))
    save_idx = list(range(0, n_steps + 1, save_every))
    if save_idx[-1] != n_steps:
        save_idx.append(n_steps)
    out_pos = {k: i for i, k in enumerate(save_idx)}
    n_out = len(save_idx)
    times = np.array(save_idx, dtype=float) * dt
    coeffs = np.empty((n_out, dim))
    rates = np.empty((n_out, dim))

    ring = int(math.ceil(delay.h_max / dt)) + 8
    Ybuf = np.empty((ring, dim))
    Dbuf = np.empty((ring, dim))
    half = dt / 2

    def stage_data(tau: np.ndarray):
        """Forcing and delayed-time lookup data at the stage times ``tau``."""
        h = np.asarray(delay(tau), dtype=float)
        bad = (h < delay.h_min - 1e-12) | (h > delay.h_max + 1e-12) | ~np.isfinite(h)
        if bad.any():
            t_bad = tau[np.argmax(bad)]
            raise DelayBoundsError(f"h(t)={h[np.argmax(bad)]:.6g} at t={t_bad:.6g} outside [{delay.h_min}, {delay.h_max}]")
        g = np.zeros((tau.size, dim))
        if disturbance.boundary is not None:
            g += np.asarray(disturbance.boundary(tau), dtype=float).reshape(tau.size, 2) @ Bfull.T
        if disturbance.distributed is not None:
            g += project_disturbance(disturbance, tau, params, n_modes, projector=proj)
        s = tau - h
        neg = s < 0
        hist = np.zeros((tau.size, dim))
        if neg.any():
            hist[neg] = project_initial(initial, params, n_modes, s[neg], projector=proj)
        pos = np.where(neg, 0.0, s) / dt
        idx = np.floor(pos).astype(int)
        w = _hermite_weights(pos - idx, dt)
        return g, neg, hist, idx, w

    def delayed(j_local, data):
        g, neg, hist, idx, w = data
        if neg[j_local]:
            return hist[j_local]
        i = idx[j_local]
        a, b = i % ring, (i + 1) % ring
        ww = w[j_local]
        return ww[0] * Ybuf[a] + ww[1] * Dbuf[a] + ww[2] * Ybuf[b] + ww[3] * Dbuf[b]

    def split_step(c, k1, t0, cuts):
        """RK4 over ``[t0, t0 + dt]`` in sub-steps ending at each breakpoint in ``cuts``."""
        edges = [t0, *cuts, t0 + dt]
        for a, b in zip(edges[:-1], edges[1:]):
            sub = stage_data(np.array([a, (a + b) / 2, b]))
            hh = b - a
            if a != t0:
                k1 = J @ c + Mfull @ delayed(0, sub) + sub[0][0]
            cdh = delayed(1, sub)
            k2 = J @ (c + hh / 2 * k1) + Mfull @ cdh + sub[0][1]
            k3 = J @ (c + hh / 2 * k2) + Mfull @ cdh + sub[0][1]
            k4 = J @ (c + hh * k3) + Mfull @ delayed(2, sub) + sub[0][2]
            c = c + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return c

    breaks = _first_breakpoints(delay, dt, min(T, delay.h_max + dt))
    c = project_initial(initial, params, n_modes, [0.0], projector=proj)[0]
    k = 0
    data = None
    j_base = 0
    cd_next = None
    # overflow on the way to a blow-up is detected below; keep numpy quiet about it
    with np.errstate(over="ignore", invalid="ignore"):
        while k <= n_steps:
            if data is None or 2 * k + 2 >= j_base + data[0].shape[0]:
                j_base = 2 * k
                data = stage_data(np.arange(j_base, min(2 * k + 2 * chunk + 3, 2 * n_steps + 3)) * half)
                cd_next = None
            g = data[0]
            j = 2 * k - j_base
            cd0 = delayed(j, data) if cd_next is None else cd_next
            k1 = J @ c + Mfull @ cd0 + g[j]
            slot = k % ring
            Ybuf[slot] = c
            Dbuf[slot] = k1
            if k in out_pos:
                pos = out_pos[k]
                coeffs[pos] = c
                rates[pos] = k1
            if k == n_steps:
                break
            if k in breaks:
                c = split_step(c, k1, k * dt, breaks[k])
                cd_next = None
                k += 1
                if not math.isfinite(c @ c):
                    raise DivergenceError(k * dt)
                continue
            cdh = delayed(j + 1, data)
            k2 = J @ (c + half * k1) + Mfull @ cdh + g[j + 1]
            k3 = J @ (c + half * k2) + Mfull @ cdh + g[j + 1]
            cd_next = delayed(j + 2, data)
            k4 = J @ (c + dt * k3) + Mfull @ cd_next + g[j + 2]
            c = c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            k += 1
            if not math.isfinite(c @ c):
                raise DivergenceError(k * dt)

    controls = coeffs[:, : Kpad.shape[1]] @ Kpad.T
    norms = state_norm(coeffs, params)
    y, _ = modal_field(coeffs, params, np.linspace(0.0, 1.0, x_points))
    return Trajectory(
        times=times,
        coeffs=coeffs,
        rates=rates,
        controls=controls,
        state_norms=norms,
        sup_displacement=np.abs(y).max(axis=1),
        params=params,
        K=K,
        dt=dt,
    )


def initial_history_norm(ic: InitialHistory, params: BeamParams, n_modes: int, h_max: float, nodes: int = 512) -> float:
    """``||Phi||_{1,h_M} = sqrt(||Phi(0)||^2 + int_{-h_M}^0 ||Phi'(tau)||^2 dtau)`` on the retained modes.

    Uses the analytic ``tau``-derivatives when supplied, otherwise central
    differences with step ``h_max/1000``.
    """
    proj = SineProjector(n_modes, nodes)
    c0 = project_initial(ic, params, n_modes, [0.0], projector=proj)[0]
    tq, wq = np.polynomial.legendre.leggauss(32)
    taus = -h_max / 2 * (1 - tq)
    wq = wq * h_max / 2
    if ic.dy0_dtau is not None and ic.dyt0_dtau is not None:
        x = proj.x[None, :]
        a = proj(np.broadcast_to(ic.dy0_dtau(taus[:, None], x), (taus.size, x.size)))
        b = proj(np.broadcast_to(ic.dyt0_dtau(taus[:, None], x), (taus.size, x.size)))
        dc = modal_coefficients(params, n_modes, a, b)
    else:
        step = h_max / 1000
        dc = (
            project_initial(ic, params, n_modes, taus + step, projector=proj)
            - project_initial(ic, params, n_modes, taus - step, projector=proj)
        ) / (2 * step)
    return float(math.sqrt(state_norm(c0, params) ** 2 + wq @ state_norm(dc, params) ** 2))


@dataclass(frozen=True)
class IssReport:
    decay_rate: float | None
    fit_constant: float | None
    fading_memory_ok: bool | None
    forecast_ratio: float | None
    control_margin: float
    control_bound_ok: bool
    riesz_ok: bool
    conclusive: bool
    note: str = ""


def iss_diagnostics(traj: Trajectory, params: BeamParams, t_star: float = 0.0, window_start: float = 0.0,
                    min_samples: int = 10) -> IssReport:
    """Empirical checks of the exponential ISS behaviour of a trajectory.

    * ``decay_rate``: least-squares slope of ``-log ||X(t)||`` for ``t >= t_star``
      (the disturbance-free tail).
    * fading memory: constants fitted on the first half of the tail must
      predict ``||X(T)||`` from the sup of ``||X||`` over
      ``[window_start, t_star]`` up to a factor 10; ``forecast_ratio`` is the
      observed/predicted ratio.
    * ``control_margin``: ``min_t (||K|| / sqrt(m_R)) ||X(t)|| - ||u(t)||``.
    """
    m_R = riesz_constants(params).m_R
    Knorm = 0.0 if traj.K is None else float(np.linalg.norm(traj.K, 2))
    unorm = np.linalg.norm(traj.controls, axis=1)
    margin = float(np.min(Knorm / math.sqrt(m_R) * traj.state_norms - unorm))
    csq = (traj.coeffs**2).sum(1)
    nsq = traj.state_norms**2
    riesz_ok = bool(np.all(nsq >= m_R * csq * (1 - 1e-12) - 1e-300)
                    and np.all(nsq <= (2 - m_R) * csq * (1 + 1e-12) + 1e-300))
    tail = traj.times >= t_star
    tn = traj.times[tail]
    xn = traj.state_norms[tail]
    if tn.size < min_samples or np.any(xn <= 0):
        return IssReport(None, None, None, None, margin, margin >= -1e-12, riesz_ok, False,
                         "insufficient tail samples")
    slope, intercept = np.polyfit(tn - t_star, np.log(xn), 1)
    kappa = float(-slope)
    first = tn <= (tn[0] + tn[-1]) / 2
    win = (traj.times >= window_start) & (traj.times <= t_star)
    sup_win = float(traj.state_norms[win].max()) if win.any() else float(xn[0])
    s1, _ = np.polyfit(tn[first] - t_star, np.log(xn[first]), 1)
    k1 = -s1
    C_hat = float(np.max(xn[first] * np.exp(k1 * (tn[first] - t_star))) / sup_win)
    predicted = C_hat * math.exp(-k1 * (tn[-1] - t_star)) * sup_win
    ratio = float(xn[-1] / predicted)
    return IssReport(
        decay_rate=kappa,
        fit_constant=float(math.exp(intercept)),
        fading_memory_ok=bool(k1 > 0 and ratio <= 10.0),
        forecast_ratio=ratio,
        control_margin=margin,
        control_bound_ok=margin >= -1e-12 * max(1.0, float(traj.state_norms.max())),
        riesz_ok=riesz_ok,
        conclusive=True,
    )


# -- CSV export ---------------------------------------------------------------

def _g(v: float) -> str:
    return format(float(v), ".12g")


def trajectory_header(n_modes: int) -> list[str]:
    cols = ["time"]
    for n in range(1, n_modes + 1):
        cols += [f"c_{n}_-1", f"c_{n}_+1"]
    return cols + ["u1", "u2", "state_norm", "sup_displacement"]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(traj.n_modes))
        for i, t in enumerate(traj.times):
            row = [t, *traj.coeffs[i], *traj.controls[i], traj.state_norms[i], traj.sup_displacement[i]]
            w.writerow([_g(v) for v in row])


def write_field_csv(times: np.ndarray, x_grid: np.ndarray, field: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [_g(x) for x in x_grid])
        for t, row in zip(times, field):
            w.writerow([_g(t)] + [_g(v) for v in row])
