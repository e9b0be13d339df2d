"""Command-line entry point: ``lbconfine <subcommand> CONFIG [--out DIR] [--threads N]``.

Exit codes: 0 success / positive verdict, 2 negative verdict, 3 inconclusive,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from fractions import Fraction
from importlib import resources

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .admissibility import ADMISSIBLE, NOT_ADMISSIBLE, Thresholds, admissibility_report
from .collision import VelocityGrid, audit, build_collision_operator
from .config import ConfigError, RunConfig, parse_config
from .criterion import NON_UNIQUE, UNIQUE_ZERO, zero_solution_verdict
from .kinetic import (DriftBounds, PhaseField, PhaseGrid, SimulationError, Stepper, StepperOptions,
                      build_initial, bump, simulate)
from .potential import compute_S_phi
from .quadrature import gibbs_rule, spectral_constants, three_route_check

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_NEGATIVE, EXIT_INCONCLUSIVE, EXIT_FAILURE = 0, 2, 3, 4
COMMANDS = ("check", "constants", "criterion", "simulate", "operator-audit")


def _clean(obj):
    """Make ``obj`` strict-JSON serializable (non-finite floats become null)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Fraction):
        return str(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):      # enums
        return obj.value
    return obj


def load_schema(command: str) -> dict:
    text = resources.files("lbconfine").joinpath("schemas", f"{command}.json").read_text()
    return json.loads(text)


def write_report(command: str, payload: dict, out_dir: str, cfg: RunConfig) -> str:
    doc = _clean({"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.to_dict(), **payload})
    jsonschema.validate(doc, load_schema(command))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{command}.json")
    # json uses repr() for floats: the shortest string that round-trips
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def thresholds(cfg: RunConfig) -> Thresholds:
    t = cfg["tolerances"]
    return Thresholds(t["gram_dependent"], t["gram_independent"], t["constancy"], t["limit"])


def _constants(cfg, phi):
    rule = gibbs_rule(phi, cfg["grid"]["nodes_per_panel"])
    return rule, spectral_constants(phi, rule, cfg["grid"]["hermite_nodes"])


# -- subcommands ------------------------------------------------------------------------------

def cmd_check(cfg: RunConfig, out: str):
    phi = cfg.build_potential()
    _, consts = _constants(cfg, phi)
    rep = admissibility_report(phi, consts, cfg["seed"], thresholds(cfg))
    path = write_report("check", rep.to_dict(), out, cfg)
    code = {ADMISSIBLE: EXIT_OK, NOT_ADMISSIBLE: EXIT_NEGATIVE}.get(rep.verdict, EXIT_INCONCLUSIVE)
    return code, f"{rep.verdict}  ->  {path}"


def cmd_constants(cfg: RunConfig, out: str):
    phi = cfg.build_potential()
    rule, consts = _constants(cfg, phi)
    check = three_route_check(phi, rule, consts)
    payload = {"normalization_C": phi.C, "constants": consts.to_dict(), "three_route": check.to_dict(),
               "S_phi": compute_S_phi(phi, cfg["seed"]).to_dict()}
    path = write_report("constants", payload, out, cfg)
    code = EXIT_OK if check.agree and check.denominator_positive else EXIT_NEGATIVE
    return code, f"Lambda_phi = {consts.Lambda_phi!r}  ->  {path}"


def cmd_criterion(cfg: RunConfig, out: str):
    phi = cfg.build_potential()
    _, consts = _constants(cfg, phi)
    v = zero_solution_verdict(phi, consts, seed=cfg["seed"], thresholds=thresholds(cfg))
    path = write_report("criterion", v.to_dict(), out, cfg)
    code = {UNIQUE_ZERO: EXIT_OK, NON_UNIQUE: EXIT_NEGATIVE}.get(v.verdict, EXIT_INCONCLUSIVE)
    return code, f"{v.verdict} (nullity {v.system.nullity})  ->  {path}"


def _operator(cfg: RunConfig, n: int):
    g, c = cfg["grid"], cfg["collision"]
    vgrid = VelocityGrid(n, g["velocity"], g["R_xi"])
    cache = cfg["output"]["cache_dir"] or None
    return build_collision_operator(vgrid, c["gamma"], c["q0"], c["n_angle"], cache_dir=cache)


def cmd_operator_audit(cfg: RunConfig, out: str):
    op = _operator(cfg, cfg.n)
    a = audit(op)
    ok = (a["symmetry_residual"] < 1e-10 * a["norm"] and a["min_eigenvalue"] >= -1e-10 * a["spectral_radius"]
          and a["kernel_dimension"] == cfg.n + 2 and a["lambda0"] > 0)
    path = write_report("operator-audit", {"ok": ok, "audit": a}, out, cfg)
    return (EXIT_OK if ok else EXIT_NEGATIVE), f"lambda0 = {a['lambda0']!r}, ok = {ok}  ->  {path}"


def cmd_simulate(cfg: RunConfig, out: str):
    phi = cfg.build_potential()
    sim, g, t, tol = cfg["simulation"], cfg["grid"], cfg["time"], cfg["tolerances"]
    if not sim["allow_inadmissible"]:
        _, consts = _constants(cfg, phi)
        rep = admissibility_report(phi, consts, cfg["seed"], thresholds(cfg))
        if rep.verdict != ADMISSIBLE:
            return EXIT_NEGATIVE, f"potential is {rep.verdict}; set simulation.allow_inadmissible to force"
    collide = cfg["collision"]["enabled"]
    op = _operator(cfg, phi.n)
    grid = PhaseGrid.build(phi, g["spatial"], op.grid)
    S = compute_S_phi(phi, cfg["seed"])
    if sim["initial"] == "zero":
        f0 = PhaseField(grid, np.zeros(grid.shape))
    else:
        f0 = build_initial(bump(grid, sim["amplitude"], sim["center"], sim["width"]), S)
    stepper = Stepper(grid, op if collide else None,
                      StepperOptions(t["dt"], g["interp_order"], collide, sim["force"], sim["periodic"],
                                     sim["cfl_max"]))
    if not collide:
        stepper.op = op          # keep nu for the ledger's weighted norm
    bounds = DriftBounds(tol["mass_drift"], tol["energy_drift"], tol["angular_drift"], tol["boundary_loss"])
    res = simulate(f0, stepper, t["T"], t["output_interval"], S, bounds, tol["fit_discard"], tol["fit_residual"])
    os.makedirs(out, exist_ok=True)
    ledger_path = os.path.join(out, "ledger.csv")
    with open(ledger_path, "w") as fh:
        fh.write(res.ledger.to_csv())
    path = write_report("simulate", {**res.summary(), "ledger": os.path.basename(ledger_path)}, out, cfg)
    code = EXIT_OK if res.status == "OK" else EXIT_NEGATIVE
    return code, f"{res.status}: sigma = {res.decay.sigma!r}  ->  {path}, {ledger_path}"


HANDLERS = {"check": cmd_check, "constants": cmd_constants, "criterion": cmd_criterion,
            "simulate": cmd_simulate, "operator-audit": cmd_operator_audit}


def dispatch(command: str, cfg: RunConfig, out: str):
    """Run one pipeline; returns ``(exit_code, message)``."""
    if command not in HANDLERS:
        raise ValueError(f"unknown subcommand {command!r}")
    cfg.echo(out)
    threads = cfg["threads"] or None
    with threadpool_limits(limits=threads):
        return HANDLERS[command](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbconfine", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="TOML run configuration")
        s.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        s.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("--threads must be >= 0")
            cfg.data["threads"] = args.threads
        out = args.out or cfg["output"]["dir"]
        if args.out:
            cfg.data["output"]["dir"] = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    t0 = time.perf_counter()
    try:
        code, msg = dispatch(args.command, cfg, out)
    except (SimulationError, ArithmeticError, ValueError, RuntimeError, jsonschema.ValidationError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{msg}  [{time.perf_counter() - t0:.1f}s]")
    return code


if __name__ == "__main__":
    sys.exit(main())
