"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 mode-count condition not met,
4 synthesis failure, 5 simulation divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import control, model, robustness, simulate, spectral
from .config import ConfigError, ScenarioConfig, config_from_dict, preset

log = logging.getLogger("beamdelay")

EXIT_OK, EXIT_CONFIG, EXIT_MODES, EXIT_SYNTH, EXIT_DIVERGED = 0, 2, 3, 4, 5


def _g(v) -> str:
    return format(float(v), ".12g")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scenario file (merged over --preset)")
    common.add_argument("--preset", help="named scenario preset, e.g. paper-sec6")
    common.add_argument("--out", type=Path, help="output directory (created if missing)")
    common.add_argument("--dt", type=float, help="integration step [s]")
    common.add_argument("--modes", type=int, help="number of simulated modes N_sim")
    common.add_argument("--actuation", choices=["left", "right", "both"])
    common.add_argument("--open-loop", action="store_true", help="simulate with u = 0")
    common.add_argument("--resolution", type=float, help="grid resolution of the certified delay search")
    common.add_argument("--gain", type=Path, help="gain JSON written by 'synthesize' (simulate only)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="beamdelay", description="Delayed beam boundary stabilisation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalues, normalisations and Riesz constants")
    sub.add_parser("synthesize", parents=[common], help="pole placement and delay certification")
    sub.add_parser("simulate", parents=[common], help="time-domain simulation and ISS diagnostics")
    return parser


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    data: dict = preset(args.preset) if args.preset else {}
    if args.config is not None:
        try:
            extra = yaml.safe_load(args.config.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        if not isinstance(extra, dict):
            raise ConfigError(f"{args.config}: top level must be a mapping")
        data.update(extra)
    if not args.preset and args.config is None:
        raise ConfigError("one of --config or --preset is required")
    overrides = {"dt": args.dt, "n_sim": args.modes, "actuation": args.actuation, "resolution": args.resolution}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.open_loop:
        data["open_loop"] = True
    if args.gain is not None:
        data["gain_file"] = str(args.gain)
    return config_from_dict(data)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_spectrum(cfg: ScenarioConfig, out: Path | None) -> int:
    p = cfg.params
    lam, k, C = spectral.spectrum_arrays(p, cfg.n_sim)
    riesz = spectral.riesz_constants(p)
    rows = [("n", "eps", "lambda", "k", "C")]
    for n in range(cfg.n_sim):
        for j, eps in enumerate(spectral.EPS_ORDER):
            rows.append((str(n + 1), str(eps), _g(lam[n, j]), _g(k[n, j]), _g(C[n, j])))
    text = "\n".join(",".join(r) for r in rows) + "\n"
    print(f"unstable_count {spectral.unstable_count(p)}")
    print(f"C_R {_g(riesz.C_R)} m_R {_g(riesz.m_R)} M_R {_g(riesz.M_R)}")
    print(text, end="")
    if out is not None:
        (out / "spectrum.csv").write_text(text)
    return EXIT_OK


def _synthesize(cfg: ScenarioConfig):
    check = model.small_gain_mode_count(cfg.params, cfg.N0)
    if not check.satisfied:
        print(f"mode-count condition failed: lhs={_g(check.lhs)} ({check.reason})", file=sys.stderr)
        return None, EXIT_MODES
    try:
        cfg.check_pole_count()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return None, EXIT_CONFIG
    m = model.assemble(cfg.params, cfg.N0)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            gain = control.place_poles(m, cfg.actuation, cfg.poles)
        for w in caught:
            log.warning("%s", w.message)
    except (control.SynthesisError, ValueError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return None, EXIT_SYNTH
    return (check, m, gain), EXIT_OK


def gain_to_json(gain: control.FeedbackGain, N0: int) -> str:
    return json.dumps(
        {
            "N0": N0,
            "actuation": gain.actuation.value,
            "poles": [float(p.real) for p in gain.target_poles],
            "K": [[float(v) for v in row] for row in gain.K],
        },
        indent=2,
    ) + "\n"


def cmd_synthesize(cfg: ScenarioConfig, out: Path | None) -> int:
    res, code = _synthesize(cfg)
    if res is None:
        return code
    check, m, gain = res
    F = control.closed_loop(m, gain)
    eig = np.sort_complex(np.linalg.eigvals(F))
    try:
        cert = robustness.max_certified_delay(F, m.M, resolution=cfg.resolution)
        h_cert, certificate = cert.h_M, cert.certificate
    except robustness.NoCertificateError as exc:
        log.warning("no LMI certificate: %s", exc)
        h_cert, certificate = 0.0, None
    h_sg = robustness.delay_upper_bound_small_gain(F, m.M)
    lines = [
        f"mode_count_lhs {_g(check.lhs)}",
        f"actuation {gain.actuation.value}",
        "K " + " ; ".join(" ".join(_g(v) for v in row) for row in gain.K),
        "eig " + " ".join(_g(e.real) if abs(e.imag) < 1e-12 else f"{_g(e.real)}{e.imag:+.12g}j" for e in eig),
        f"certified_h_M {_g(h_cert)}",
        f"small_gain_h_M_upper_bound {_g(h_sg)}",
    ]
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if out is not None:
        (out / "synthesis.txt").write_text(report)
        (out / "gain.json").write_text(gain_to_json(gain, cfg.N0))
        if certificate is not None:
            (out / "certificate.txt").write_text(robustness.format_certificate(certificate))
    return EXIT_OK


def load_gain(path: Path, cfg: ScenarioConfig) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text())
        K = np.asarray(data["K"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read gain file {path}: {exc}") from None
    if K.ndim != 2 or K.shape[0] != 2 or K.shape[1] % 2 or K.shape[1] > 2 * cfg.n_sim:
        raise ConfigError(f"gain in {path} has shape {K.shape}, incompatible with n_sim={cfg.n_sim}")
    return K


def cmd_simulate(cfg: ScenarioConfig, out: Path | None) -> int:
    if cfg.open_loop:
        K = None
    elif cfg.gain_file is not None:
        K = load_gain(Path(cfg.gain_file), cfg)
    else:
        res, code = _synthesize(cfg)
        if res is None:
            return code
        K = res[2].K
    p = cfg.params
    save_every = max(1, int(round(cfg.save_every / cfg.dt)))
    try:
        traj = simulate.simulate(
            p, K, cfg.delay.build(), cfg.disturbance.build(), cfg.initial.build(), cfg.n_sim, cfg.dt, cfg.T,
            save_every=save_every, x_points=cfg.x_points,
        )
    except simulate.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except simulate.DelayBoundsError as exc:
        print(f"delay out of bounds: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t_star = _disturbance_free_after(cfg)
    diag = simulate.iss_diagnostics(traj, p, t_star=t_star)
    report = "\n".join(f"{k} {v}" for k, v in dataclasses.asdict(diag).items())
    report += f"\nt_star {_g(t_star)}\nfinal_state_norm {_g(traj.state_norms[-1])}\ninitial_state_norm {_g(traj.state_norms[0])}\n"
    print(report, end="")
    if out is not None:
        simulate.write_trajectory_csv(traj, out / "trajectory.csv")
        idx = np.unique(np.linspace(0, traj.times.size - 1, cfg.field_snapshots).round().astype(int))
        x = np.linspace(0.0, 1.0, cfg.x_points)
        y, _ = simulate.modal_field(traj.coeffs[idx], p, x)
        simulate.write_field_csv(traj.times[idx], x, y, out / "field.csv")
        (out / "diagnostics.txt").write_text(report)
    return EXIT_OK


def _disturbance_free_after(cfg: ScenarioConfig) -> float:
    """Time after which all configured pulses are below 1e-12 of their peak."""
    terms = (*cfg.disturbance.distributed, *cfg.disturbance.boundary_left, *cfg.disturbance.boundary_right)
    t_star = 0.0
    for term in terms:
        if term.rate > 0:
            t_star = max(t_star, term.center + float(np.sqrt(np.log(1e12) / term.rate)))
        else:
            t_star = max(t_star, cfg.T)
    return min(t_star, cfg.T)


COMMANDS = {"spectrum": cmd_spectrum, "synthesize": cmd_synthesize, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.gain_file is not None and args.command == "simulate" and not cfg.open_loop:
            load_gain(Path(cfg.gain_file), cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, _out_dir(args))


if __name__ == "__main__":
    sys.exit(main())
