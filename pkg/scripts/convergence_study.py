"""Step-size and truncation studies for the modal delay integrator.

``order``: halves dt three times on the two-input closed loop and prints the
observed order of ||X(T)|| and of the whole norm history.

``truncation``: compares the norm history for increasing numbers of simulated
modes.  The boundary torque drives every mode, and the modes above N follow it
almost statically with coefficients of size ~u/n, so the gap closes slowly
(roughly like N^-1/2).  It peaks during the large control action around the
disturbance pulse.

    python3 scripts/convergence_study.py order --modes 8
    python3 scripts/convergence_study.py truncation --modes 12 20 40 60 --dt 2e-5
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from beamdelay.config import config_from_dict, preset
from beamdelay.control import place_poles
from beamdelay.model import assemble
from beamdelay.simulate import simulate


def _setup():
    cfg = config_from_dict(preset("paper-sec6"))
    gain = place_poles(assemble(cfg.params, cfg.N0), cfg.actuation, cfg.poles)
    return cfg, gain.K


def _run(cfg, K, n_modes, dt, T, save):
    return simulate(
        cfg.params, K, cfg.delay.build(), cfg.disturbance.build(), cfg.initial.build(), n_modes, dt, T,
        save_every=max(1, int(round(save / dt))),
    )


def order_study(args) -> None:
    cfg, K = _setup()
    dts = [args.dt / 2**i for i in range(4)]
    norms = []
    for dt in dts:
        t0 = time.perf_counter()
        norms.append(_run(cfg, K, args.modes, dt, args.T, 0.1).state_norms)
        print(f"dt={dt:.3e}  ||X(T)||={norms[-1][-1]:.15e}  [{time.perf_counter() - t0:.1f}s]")
    for i in range(len(dts) - 2):
        a, b, c = norms[i : i + 3]
        final = math.log2(abs(a[-1] - b[-1]) / abs(b[-1] - c[-1]))
        history = math.log2(np.abs(a - b).max() / np.abs(b - c).max())
        print(f"order from dt={dts[i]:.1e}: final value {final:.2f}, whole history {history:.2f}")


def truncation_study(args) -> None:
    cfg, K = _setup()
    runs = {}
    for n in args.modes_list:
        t0 = time.perf_counter()
        runs[n] = _run(cfg, K, n, args.dt, args.T, 0.05)
        print(f"N_sim={n:3d}  ||X(T)||={runs[n].state_norms[-1]:.6e}  [{time.perf_counter() - t0:.1f}s]")
    ns = list(runs)
    for lo, hi in zip(ns, ns[1:]):
        a, b = runs[lo], runs[hi]
        rel = np.abs(a.state_norms - b.state_norms) / b.state_norms
        i = int(np.argmax(rel))
        print(f"{lo:3d} -> {hi:3d}: max relative gap {rel.max():.3e} at t={b.times[i]:.2f}, median {np.median(rel):.3e}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="what", required=True)
    o = sub.add_parser("order")
    o.add_argument("--modes", type=int, default=8)
    o.add_argument("--dt", type=float, default=1e-3)
    o.add_argument("--T", type=float, default=10.0)
    t = sub.add_parser("truncation")
    t.add_argument("--modes", dest="modes_list", type=int, nargs="+", default=[12, 20, 40])
    t.add_argument("--dt", type=float, default=2e-5)
    t.add_argument("--T", type=float, default=20.0)
    args = ap.parse_args()
    {"order": order_study, "truncation": truncation_study}[args.what](args)


if __name__ == "__main__":
    main()
