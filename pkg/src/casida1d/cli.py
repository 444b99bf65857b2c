"""Command-line entry point: scf, check, spectrum, kick, resonance."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import Config, load
from .errors import Casida1DError, ConfigError, NotAMinimum

log = logging.getLogger("casida1d")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NOT_MINIMUM, EXIT_NUMERICAL = 0, 1, 2, 3, 4


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


class Emitter:
    """Writes outputs into ``out_dir`` stamped with the config hash and version."""

    def __init__(self, out_dir: Path, config_hash: str):
        self.out = out_dir
        self.hash = config_hash
        self.out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict):
        doc = {"version": __version__, "config_hash": self.hash, **payload}
        with open(self.out / name, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, default=_json_default)
            fh.write("\n")

    def csv(self, name: str, header, rows):
        with open(self.out / name, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow([*header, "config_hash", "version"])
            for row in rows:
                w.writerow([_fmt(v) for v in row] + [self.hash, __version__])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _ground_state(cfg: Config, seed: int):
    from .groundstate import solve

    model = cfg.build_model()
    occ = list(cfg.scf.occupation) or None
    gs = solve(model, seed=seed, tol=cfg.scf.tol, mixing=cfg.scf.mixing, max_iter=cfg.scf.max_iter,
               occupation=occ)
    return model, gs


def _drive(cfg: Config, x):
    from .dynamics import Drive, gaussian_pulse, sinusoid, step_function

    d = cfg.drive
    f = {"gaussian": lambda: gaussian_pulse(d.t0, d.sigma), "step": step_function,
         "sinusoid": lambda: sinusoid(d.omega0)}[d.shape]()
    return Drive(f, cfg.potential(x), d.eps, d.shape)


# -- commands ---------------------------------------------------------------------


def cmd_scf(cfg, args, em: Emitter) -> int:
    model, gs = _ground_state(cfg, args.seed)
    em.json("groundstate.json", {
        "n": gs.n, "L": model.grid.L, "N": gs.N, "energy": gs.energy,
        "eigenvalues": gs.eigenvalues, "gamma": gs.gamma, "residual": gs.residual,
        "iterations": gs.iterations, "seed": args.seed,
    })
    x = model.grid.x
    em.csv("orbitals.csv", ["x", *[f"psi_{i}" for i in range(gs.N)], "rho"],
           np.column_stack([x, gs.psi, gs.rho]))
    return EXIT_OK


def run_checks(model, gs, delta: float = 1.0, seed: int = 0) -> list:
    """Property suite used by ``check``; returns ``[{name, value, limit, passed}]``."""
    from .dynamics import LinearizedPropagator, propagate_orbitals
    from .groundstate import check_orthonormal
    from .linops import (PerpSpace, assemble, block_structure, casida_to_reim, forbidden_block_max,
                         split_basis)
    from .response import FrequencyGrid, dyson_residual

    rng = np.random.default_rng(seed)
    out = []

    def add(name, value, limit, passed):
        out.append({"name": name, "value": float(value), "limit": float(limit), "passed": bool(passed)})

    err = np.abs(gs.h * gs.psi.conj().T @ gs.psi - np.eye(gs.N)).max()
    add("orthonormality", err, 1e-8, err <= 1e-8)
    add("coercivity_gamma", gs.gamma, 0.0, gs.gamma > 0)

    space = PerpSpace(gs, model, delta)
    H = space.hessian_reim()
    viol = 0
    for _ in range(100):
        c = rng.standard_normal(H.shape[0])
        viol += c @ H @ c < gs.gamma * (c @ c) * (1 - 1e-12) if delta == 1.0 else 0
    add("coercivity_samples_violations", viol, 0, viol == 0)

    dense = gs.n * gs.N <= 1200
    if dense:
        ops = assemble(gs, model, delta, dense=True)
        Mc, Mr = ops.M_dyn.casida(), ops.M_dyn.reim()
        dev = 0.0
        for _ in range(20):
            v = rng.standard_normal(Mc.shape[0]) + 1j * rng.standard_normal(Mc.shape[0])
            d = Mr @ casida_to_reim(v) - casida_to_reim(Mc @ v)
            dev = max(dev, np.abs(d).max() / max(1.0, np.abs(Mc @ v).max()))
        add("representation_equivalence", dev, 1e-12, dev <= 1e-12)
        herm = np.abs(Mc - Mc.conj().T).max()
        add("M_dyn_hermitian", herm, 1e-10, herm <= 1e-10)
        blocks = forbidden_block_max(block_structure(gs, model, delta))
        add("forbidden_blocks", blocks, 1e-11, blocks <= 1e-11)
        _, A, _ = split_basis(gs, gs.h)
        from .linops import from_reim, k0_apply, s0_apply

        gauge = max(max(np.abs(s0_apply(gs, from_reim(a, gs.n))).max(),
                        np.abs(k0_apply(gs, model, from_reim(a, gs.n), delta)).max()) for a in A.T)
        add("gauge_inert", gauge, 1e-11, gauge <= 1e-11)

    prop = LinearizedPropagator(gs, model, delta)
    x = rng.standard_normal(prop.mu.size) + 1j * rng.standard_normal(prop.mu.size)
    unit = max(abs(np.linalg.norm(prop.unitary(t, x)) / np.linalg.norm(x) - 1) for t in (0.1, 1.0, 10.0))
    add("unitarity", unit, 1e-10, unit <= 1e-10)
    group = np.linalg.norm(prop.apply_casida(1.3, prop.apply_casida(0.7, x)) - prop.apply_casida(2.0, x))
    group /= np.linalg.norm(x)
    add("group_law", group, 1e-9, group <= 1e-9)
    e0 = prop.energy(x)
    econs = max(abs(prop.energy(prop.apply_casida(t, x)) / e0 - 1) for t in (0.1, 1.0, 10.0))
    add("energy_conservation", econs, 1e-9, econs <= 1e-9)
    amp = prop.h2_amplification(np.linspace(0, 100, 6)).max() if prop.mu.size <= 1600 else float("nan")
    add("h2_amplification_sup", amp, np.inf, np.isfinite(amp))

    freq = FrequencyGrid.linspace(0.1, 3.0, 5, 0.05)
    dy = dyson_residual(gs, model, freq=freq, delta=delta)
    add("dyson_residual", dy, 1e-8, dy <= 1e-8)

    times, orbs = propagate_orbitals(model, gs.psi, 1.0, 0.01)
    drift = max(np.abs(gs.h * np.sum(np.abs(p) ** 2, axis=0) - 1).max() for p in orbs)
    add("norm_conservation", drift, 1e-8, drift <= 1e-8)
    return out


def cmd_check(cfg, args, em: Emitter) -> int:
    model, gs = _ground_state(cfg, args.seed)
    delta = 0.0 if args.no_interaction else args.delta
    results = run_checks(model, gs, delta, args.seed)
    ok = all(r["passed"] for r in results)
    em.json("check.json", {"passed": ok, "delta": delta, "checks": results})
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['value']:.3e} (limit {r['limit']:.1e})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _freq_grid(cfg):
    from .response import FrequencyGrid

    f = cfg.freq
    return FrequencyGrid.linspace(f.omega_min, f.omega_max, f.n_omega, f.eta)


def cmd_spectrum(cfg, args, em: Emitter) -> int:
    from .response import chi_freq

    model, gs = _ground_state(cfg, args.seed)
    delta = 0.0 if args.no_interaction else args.delta
    V = cfg.potential(model.grid.x)
    sp = chi_freq(gs, model, V, freq=_freq_grid(cfg), delta=delta)
    em.csv("spectrum.csv", ["omega", "re", "im"], zip(sp.omega, sp.values.real, sp.values.imag))
    em.json("spectrum.json", {"meta": sp.meta, "peaks": sp.peaks(), "dissipative": sp.is_dissipative()})
    return EXIT_OK


def cmd_kick(cfg, args, em: Emitter) -> int:
    from .dynamics import propagate_nonlinear
    from .response import damped_transform

    model, gs = _ground_state(cfg, args.seed)
    d = cfg.drive
    drive = _drive(cfg, model.grid.x)
    save = max(1, int(round(d.dt_out / d.dt)))
    tr = propagate_nonlinear(model, gs, drive, d.T, d.dt, save_every=save, interacting=not args.no_interaction)
    obs = tr.observable(drive.V_P, gs.rho, gs.h)
    norms = [np.sqrt(gs.h) * np.linalg.norm(U) for U in tr.states]
    em.csv("trajectory.csv", ["t", "norm_U", "observable"], zip(tr.times, norms, obs))
    w = _freq_grid(cfg).omega
    scale = drive.eps if drive.eps > 0 else 1.0
    vals = damped_transform(tr.times, obs / scale, w, cfg.freq.eta)
    em.csv("spectrum.csv", ["omega", "re", "im"], zip(w, vals.real, vals.imag))
    return EXIT_OK


def cmd_resonance(cfg, args, em: Emitter) -> int:
    from .response import FrequencyGrid, chi_freq
    from .resonance import (TransitionChannel, golden_rule_width, lorentzian_fwhm, pole_estimate,
                            residue_check)

    model, gs = _ground_state(cfg, args.seed)
    r = cfg.resonance
    ch = TransitionChannel.build(gs, r.i0, r.a0)
    s = r.s if r.s > 0 else 4.0 * ch.spacing
    deltas = (args.delta,) if args.delta_given else r.delta
    eta_seq = r.eta_seq or None
    rows = []
    for delta in deltas:
        est = pole_estimate(gs, model, ch, delta, eta_seq)
        g, chans = golden_rule_width(gs, model, ch, delta, s)
        rows.append({"delta": delta, "dE": est.dE, "Gamma_schur": est.gamma, "Gamma_golden": g,
                     "first_order": est.first_order, "channels": chans, "eta_seq": list(est.eta_seq)})
    lor = None
    if r.lorentz_delta > 0:
        g, _ = golden_rule_width(gs, model, ch, r.lorentz_delta, s)
        eta = 0.5 * g
        V = cfg.potential(model.grid.x)
        freq = FrequencyGrid.linspace(max(ch.e0 - 3.0, 1e-3), ch.e0 + 1.0, 2001, eta)
        sp = chi_freq(gs, model, V, freq=freq, delta=r.lorentz_delta)
        peak = sp.omega[np.argmax(np.abs(sp.values.imag))]
        w0, fwhm = lorentzian_fwhm(sp.omega, sp.values, peak, max(4 * g, 0.2))
        lor = {"delta": r.lorentz_delta, "eta": eta, "center": w0, "fwhm": fwhm,
               "Gamma_lorentz": 0.5 * fwhm - eta, "Gamma_golden": g}
    last = rows[-1]
    em.json("resonance.json", {
        "e0": ch.e0, "dE": last["dE"], "Gamma_schur": last["Gamma_schur"], "Gamma_golden": last["Gamma_golden"],
        "Gamma_lorentz": None if lor is None else lor["Gamma_lorentz"], "channels": last["channels"],
        "delta": last["delta"], "s": s, "eta_seq": last["eta_seq"],
        "residue": residue_check(gs, ch), "sweep": rows, "lorentz": lor,
    })
    return EXIT_OK


COMMANDS = {"scf": cmd_scf, "check": cmd_check, "spectrum": cmd_spectrum, "kick": cmd_kick,
            "resonance": cmd_resonance}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casida1d", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="INI-style configuration file")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p.add_argument("--seed", metavar="N", type=int, default=0, help="SCF starting-guess seed")
    p.add_argument("--no-interaction", action="store_true", help="switch the coupling K0 off")
    p.add_argument("--delta", metavar="X", type=float, default=None, help="scale K0 by X")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command: str, config_path: Optional[str], out_dir: str, seed: int = 0, no_interaction: bool = False,
        delta: Optional[float] = None) -> int:
    args = argparse.Namespace(command=command, config=config_path, out=out_dir, seed=seed,
                              no_interaction=no_interaction, delta=1.0 if delta is None else delta,
                              delta_given=delta is not None)
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        if delta is not None and not delta >= 0:
            raise ConfigError("--delta must be nonnegative")
        cfg = load(config_path) if config_path else Config()
        digest = cfg.digest(command=command, seed=seed, no_interaction=no_interaction, delta=delta)
        return COMMANDS[command](cfg, args, Emitter(Path(out_dir), digest))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotAMinimum as exc:
        print(f"not a minimum: {exc}", file=sys.stderr)
        return EXIT_NOT_MINIMUM
    except (Casida1DError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.command, args.config, args.out, args.seed, args.no_interaction, args.delta)


if __name__ == "__main__":
    sys.exit(main())
