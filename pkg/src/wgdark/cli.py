"""Command-line interface: ``wgdark {evolve,sweep,spectrum,disorder}``.

Options may come from a JSON file (``--config``); explicit flags win.  Output
goes to ``--out``, or to ``$WGDARK_OUT``, or to the current directory.

Exit codes: 0 success, 2 configuration error, 3 solver abort, 4 failed
``--check`` invariant.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, darkstates, dicke, disorder, fullspace
from .couplings import EmitterChain, build_couplings, decay_spectrum
from .trajectory import Trajectory, write_csv, write_rows, write_sidecar, write_trajectory

EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 2, 3, 4
OUT_ENV = "WGDARK_OUT"


class ConfigError(ValueError):
    pass


class CheckError(RuntimeError):
    pass


COMMON = {"config": None, "out": None, "seed": 0, "threads": 1, "check": False}
CHAIN = {"n": 2, "n_p": 1, "spacing": 1.0, "gamma": 1.0, "gamma_nr": 0.0, "gamma_phi": 0.0}
DEFAULTS = {
    "evolve": {**CHAIN, "solver": "full", "t_final": 10.0, "dt": None, "stride": 10,
               "dark": True, "positivity": False},
    "sweep": {"n_min": 2, "n_max": 100},
    "spectrum": {"n": 10, "gamma": 1.0, "d": None, "d_min": 0.0, "d_max": 1.0, "d_steps": 101},
    "disorder": {**CHAIN, "n": 8, "n_p": 3, "kind": "positional", "epsilon": [0.001],
                 "samples": disorder.DEFAULT_SAMPLES, "t_final": 10.0, "dt": None, "stride": 10},
}
TYPES = {"n": int, "n_p": int, "seed": int, "threads": int, "stride": int, "samples": int,
         "n_min": int, "n_max": int, "d_steps": int, "spacing": float, "gamma": float,
         "gamma_nr": float, "gamma_phi": float, "t_final": float, "d_min": float,
         "d_max": float, "dt": float}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of options (flags override it)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed recorded in every sidecar")
    common.add_argument("--threads", type=int, help="worker processes for sweeps and campaigns")
    common.add_argument("--check", action="store_true", help="run invariant checks first")

    chain = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    chain.add_argument("--n", type=int, help="number of emitters N")
    chain.add_argument("--n-p", type=int, dest="n_p", help="pumped emitters N_p")
    chain.add_argument("--spacing", type=float, help="emitter spacing d in wavelengths")
    chain.add_argument("--gamma", type=float, help="single-emitter waveguide decay rate")
    chain.add_argument("--gamma-nr", type=float, dest="gamma_nr", help="nonradiative decay rate")
    chain.add_argument("--gamma-phi", type=float, dest="gamma_phi", help="pure dephasing rate")

    ap = argparse.ArgumentParser(prog="wgdark", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"wgdark {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evolve", parents=[common, chain], argument_default=argparse.SUPPRESS,
                        help="time evolution from the pumped-inverted state")
    ev.add_argument("--solver", choices=["full", "reduced", "analytic"])
    ev.add_argument("--t-final", type=float, dest="t_final")
    ev.add_argument("--dt", type=float)
    ev.add_argument("--stride", type=int, help="record every STRIDE steps")
    ev.add_argument("--no-dark", action="store_false", dest="dark",
                    help="skip dark-state projection columns")
    ev.add_argument("--positivity", action="store_true", help="check positivity at every sample")

    sw = sub.add_parser("sweep", parents=[common], argument_default=argparse.SUPPRESS,
                        help="analytic transfer-ratio heatmap and optimum trace")
    sw.add_argument("--n-min", type=int, dest="n_min")
    sw.add_argument("--n-max", type=int, dest="n_max")

    sp = sub.add_parser("spectrum", parents=[common], argument_default=argparse.SUPPRESS,
                        help="decay-rate spectrum over a spacing grid")
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--d", type=float, nargs="+", help="explicit spacings (overrides the grid)")
    sp.add_argument("--d-min", type=float, dest="d_min")
    sp.add_argument("--d-max", type=float, dest="d_max")
    sp.add_argument("--d-steps", type=int, dest="d_steps")

    di = sub.add_parser("disorder", parents=[common, chain], argument_default=argparse.SUPPRESS,
                        help="imperfection campaigns")
    di.add_argument("--kind", choices=["positional", "nonradiative", "dephasing"])
    di.add_argument("--epsilon", type=float, nargs="+")
    di.add_argument("--samples", type=int)
    di.add_argument("--t-final", type=float, dest="t_final")
    di.add_argument("--dt", type=float)
    di.add_argument("--stride", type=int)
    return ap


def load_config(command: str, flags: dict) -> dict:
    """Defaults, then the JSON file, then explicit flags."""
    cfg = {**COMMON, **DEFAULTS[command]}
    path = flags.get("config")
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        for key, val in data.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise ConfigError(f"{key}: unknown option for '{command}'")
            cfg[key] = val
    cfg.update(flags)
    for key, kind in TYPES.items():
        if key in cfg and cfg[key] is not None:
            try:
                if kind is int and float(cfg[key]) != int(cfg[key]):
                    raise ValueError
                cfg[key] = kind(cfg[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: expected {kind.__name__}, got {cfg[key]!r}") from None
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {cfg['seed']}")
    if cfg["threads"] < 1:
        raise ConfigError(f"threads: must be >= 1, got {cfg['threads']}")
    for key in ("t_final", "dt"):
        if cfg.get(key) is not None and not cfg[key] > 0:
            raise ConfigError(f"{key}: must be > 0, got {cfg[key]}")
    if cfg.get("stride") is not None and cfg["stride"] < 1:
        raise ConfigError(f"stride: must be >= 1, got {cfg['stride']}")
    out = cfg["out"] or os.environ.get(OUT_ENV) or "."
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"out: directory {out} is not writable")
    cfg["out"] = str(out)
    return cfg


def make_chain(cfg: dict) -> EmitterChain:
    try:
        return EmitterChain(cfg["n"], cfg["n_p"], spacing=cfg["spacing"], gamma=cfg["gamma"],
                            gamma_nr=cfg["gamma_nr"], gamma_phi=cfg["gamma_phi"])
    except ValueError as exc:
        raise ConfigError(f"chain: {exc}") from None


def _meta(command: str, cfg: dict, **extra) -> dict:
    return {"command": command, "config": {k: v for k, v in cfg.items() if k != "config"},
            "seed": cfg["seed"], **extra}


def _require(ok: bool, what: str, checks: list):
    checks.append({"check": what, "ok": bool(ok)})
    if not ok:
        raise CheckError(f"invariant failed: {what}")


def _dark_checks(n: int, n_p: int, checks: list):
    for m in range(min(n_p, n - n_p) + 1):
        spec = darkstates.dark_state(n, n_p, m)
        _require(darkstates.verify_recursion(spec), f"recursion ({n},{n_p},{m})", checks)
        _require(abs(sum(spec.weights) - 1) == 0, f"weights sum to 1 ({n},{n_p},{m})", checks)
        if n <= fullspace.MAX_EMITTERS:
            v = spec.full_vector()
            res = np.linalg.norm(fullspace.lower_vector(v, range(n)))
            _require(res <= 1e-10, f"S annihilates dark state ({n},{n_p},{m})", checks)


def run_checks(command: str, cfg: dict) -> list:
    checks: list = []
    if command in ("evolve", "disorder"):
        chain = make_chain(cfg)
        c = build_couplings(chain)
        _require(np.allclose(c.g, c.g.T, atol=0) and np.allclose(c.j, c.j.T, atol=0),
                 "coupling matrices symmetric", checks)
        spec = decay_spectrum(c)
        _require(abs(spec.sum() - chain.n_total * chain.gamma) <= 1e-9 * chain.n_total,
                 "decay spectrum sums to N gamma", checks)
        _dark_checks(chain.n_total, chain.n_pumped, checks)
        if chain.n_total <= 8:
            st = fullspace.inverted_state(chain)
            d = fullspace.Generator(chain, c).apply(st)
            _require(abs(d.trace()) <= 1e-12, "generator is trace preserving", checks)
    elif command == "sweep":
        for n in sorted({cfg["n_min"], cfg["n_max"]}):
            for n_p in range(n + 1):
                for m in range(min(n_p, n - n_p) + 1):
                    _require(darkstates.verify_recursion(darkstates.dark_state(n, n_p, m)),
                             f"recursion ({n},{n_p},{m})", checks)
                _require(darkstates.dark_projection_total(n, n_p) == 1,
                         f"steady dark weight is 1 ({n},{n_p})", checks)
    elif command == "spectrum":
        for d in _spacings(cfg)[:5]:
            c = build_couplings(EmitterChain(cfg["n"], 0, spacing=d, gamma=cfg["gamma"]))
            _require(abs(decay_spectrum(c).sum() - cfg["n"] * cfg["gamma"]) <= 1e-9 * cfg["n"],
                     f"spectrum sums to N gamma at d = {d}", checks)
    return checks


def _spacings(cfg: dict) -> list:
    if cfg.get("d"):
        ds = cfg["d"] if isinstance(cfg["d"], list) else [cfg["d"]]
        return [float(x) for x in ds]
    if cfg["d_steps"] < 1:
        raise ConfigError(f"d_steps: must be >= 1, got {cfg['d_steps']}")
    return [float(x) for x in np.linspace(cfg["d_min"], cfg["d_max"], cfg["d_steps"])]


def _analytic_trajectory(chain: EmitterChain, cfg: dict) -> Trajectory:
    if not chain.is_mirror() or chain.gamma_nr > 0 or chain.gamma_phi > 0:
        raise ConfigError("solver: analytic requires an ideal mirror chain "
                          "(integer spacing, gamma_nr = gamma_phi = 0)")
    n, n_p = chain.n_total, chain.n_pumped
    dt = cfg["dt"] or 0.01
    steps = max(1, int(round(cfg["t_final"] / dt)))
    times = np.linspace(0.0, cfg["t_final"], steps + 1)[::cfg["stride"]]
    obs, steady = {}, {}
    pumped = np.zeros_like(times)
    unpumped = np.zeros_like(times)
    for m in range(min(n_p, n - n_p) + 1):
        if 2 * n_p <= n:
            vals = darkstates.projection_trajectory(n, n_p, m, times, gamma=chain.gamma)
        else:
            t_all, v_all = darkstates.hierarchy_integrate(n, n_p, m, cfg["t_final"], dt,
                                                          gamma=chain.gamma)
            vals = np.interp(times, t_all, v_all)
        spec = darkstates.dark_state(n, n_p, m)
        obs[f"dark_M{m}"] = vals
        pumped += vals * spec.number_expectation_pumped
        unpumped += vals * spec.number_expectation_unpumped
        steady[f"dark_M{m}"] = darkstates.steady_projection(n, n_p, m)
    obs["dark_total"] = sum(obs[f"dark_M{m}"] for m in range(min(n_p, n - n_p) + 1))
    obs["dark_pumped"], obs["dark_unpumped"] = pumped, unpumped
    sp, su = darkstates.steady_mean_excitations(n, n_p)
    meta = {"solver": "analytic", "chain": chain.to_dict(), "dt": dt, "t_final": cfg["t_final"],
            "steady": {**steady, "pumped": sp, "unpumped": su,
                       "transfer_ratio": su / n_p if n_p else None}}
    return Trajectory(times=times, observables=obs, metadata=meta)


def cmd_evolve(cfg: dict) -> list:
    chain = make_chain(cfg)
    solver = cfg["solver"]
    if solver not in ("full", "reduced", "analytic"):
        raise ConfigError(f"solver: expected full, reduced or analytic, got {solver!r}")
    if solver == "analytic":
        traj = _analytic_trajectory(chain, cfg)
    elif solver == "reduced":
        try:
            dicke._check_reduced(chain)
        except ValueError as exc:
            raise ConfigError(f"solver: {exc}") from None
        obs = dicke.default_observers()
        if cfg["dark"]:
            obs.update(darkstates.dark_observers(chain.n_total, chain.n_pumped, "reduced"))
        traj = dicke.reduced_evolve(dicke.initial_state(chain), chain, t_final=cfg["t_final"],
                                    dt=cfg["dt"], observers=obs, stride=cfg["stride"],
                                    check_positivity=cfg["positivity"])
    else:
        if chain.n_total > fullspace.MAX_EMITTERS:
            raise ConfigError(f"n: the full-space solver supports N <= {fullspace.MAX_EMITTERS}")
        obs = fullspace.default_observers(chain)
        if cfg["dark"]:
            obs.update(darkstates.dark_observers(chain.n_total, chain.n_pumped, "full"))
        traj = fullspace.evolve(fullspace.inverted_state(chain), chain, t_final=cfg["t_final"],
                                dt=cfg["dt"], observers=obs, stride=cfg["stride"],
                                check_positivity=cfg["positivity"])
    path = Path(cfg["out"]) / f"evolve_{solver}_N{chain.n_total}_Np{chain.n_pumped}.csv"
    write_trajectory(path, traj, _meta("evolve", cfg))
    return [path]


def cmd_sweep(cfg: dict) -> list:
    lo, hi = cfg["n_min"], cfg["n_max"]
    if lo < 1 or hi < lo:
        raise ConfigError(f"n_min/n_max: need 1 <= n_min <= n_max, got {lo}..{hi}")
    heat, best = darkstates.sweep(range(lo, hi + 1), workers=cfg["threads"])
    out = Path(cfg["out"])
    p1 = write_rows(out / "sweep_heatmap.csv", ["n", "n_p", "T"], heat)
    p2 = write_rows(out / "sweep_optimum.csv", ["n", "t_max", "n_p_star", "ratio"], best)
    meta = _meta("sweep", cfg, tie_break="smallest n_p among equal maxima")
    write_sidecar(p1, meta)
    write_sidecar(p2, meta)
    return [p1, p2]


def cmd_spectrum(cfg: dict) -> list:
    if cfg["n"] < 1:
        raise ConfigError(f"n: must be >= 1, got {cfg['n']}")
    if not cfg["gamma"] > 0:
        raise ConfigError(f"gamma: must be > 0, got {cfg['gamma']}")
    rows = []
    for d in _spacings(cfg):
        if d < 0:
            raise ConfigError(f"d: spacings must be >= 0, got {d}")
        rates = decay_spectrum(build_couplings(EmitterChain(cfg["n"], 0, spacing=d, gamma=cfg["gamma"])))
        rows.extend((d, i, r) for i, r in enumerate(rates))
    path = write_rows(Path(cfg["out"]) / f"spectrum_N{cfg['n']}.csv", ["d", "index", "eigenvalue"], rows)
    write_sidecar(path, _meta("spectrum", cfg))
    return [path]


def cmd_disorder(cfg: dict) -> list:
    chain = make_chain(cfg)
    if chain.n_total > fullspace.MAX_EMITTERS:
        raise ConfigError(f"n: disorder campaigns need N <= {fullspace.MAX_EMITTERS}")
    eps = cfg["epsilon"] if isinstance(cfg["epsilon"], list) else [cfg["epsilon"]]
    eps = [float(e) for e in eps]
    if any(e < 0 for e in eps):
        raise ConfigError(f"epsilon: values must be >= 0, got {eps}")
    out, paths = Path(cfg["out"]), []
    if cfg["kind"] == "positional":
        for e in eps:
            try:
                camp = disorder.DisorderCampaign(chain, e, samples=cfg["samples"], seed=cfg["seed"],
                                                 t_final=cfg["t_final"], dt=cfg["dt"],
                                                 stride=cfg["stride"])
            except ValueError as exc:
                raise ConfigError(f"disorder: {exc}") from None
            stats = disorder.run_campaign(camp, workers=cfg["threads"])
            path = write_csv(out / f"disorder_positional_eps{e:g}.csv", stats.columns())
            write_sidecar(path, _meta("disorder", cfg, **stats.metadata))
            paths.append(path)
    elif cfg["kind"] in ("nonradiative", "dephasing"):
        runs = disorder.imperfection_scan(chain, cfg["kind"], eps, t_final=cfg["t_final"],
                                          dt=cfg["dt"], stride=cfg["stride"])
        for e, traj in runs.items():
            path = out / f"disorder_{cfg['kind']}_eps{e:g}.csv"
            write_trajectory(path, traj, _meta("disorder", cfg))
            paths.append(path)
    else:
        raise ConfigError(f"kind: expected positional, nonradiative or dephasing, got {cfg['kind']!r}")
    return paths


COMMANDS = {"evolve": cmd_evolve, "sweep": cmd_sweep, "spectrum": cmd_spectrum,
            "disorder": cmd_disorder}


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        cfg = load_config(ns.command, flags)
        if cfg["check"]:
            checks = run_checks(ns.command, cfg)
            print(f"checks: {len(checks)} passed")
        paths = COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"wgdark: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckError as exc:
        print(f"wgdark: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except fullspace.IntegrationError as exc:
        print(f"wgdark: solver aborted: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
