"""Command-line front end.

    gfm-stab <simulate|equilibria|boundary|cct|sweep|validate> --config PATH [--out DIR]

``--config`` also accepts the name of a shipped example (for instance
``prototype-hybrid``).  Exit codes: 0 success, 2 configuration error,
3 numeric failure, 4 inconclusive classification.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from . import scenario as sc
from .cct import CctSearchError, compute_cct
from .dynamics import InconclusiveError, NonFiniteStateError, integrate, write_events_jsonl, write_trajectory_csv
from .equilibria import (
    NoEquilibriumError,
    bounding_ueps,
    existence_condition,
    find_equilibria_first_order,
    find_equilibria_second_order,
    principal_sep,
)
from .models import FirstOrderModel, TwoSourceSystem, damping_gain
from .network import DegenerateNetworkError, TopologyMode

log = logging.getLogger("gfm_stab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4


def _header(cfg) -> list[str]:
    return [f"gfm-stab {__version__}", f"config {sc.config_hash(cfg)}"]


def _json_dump(obj, path: Path, cfg) -> None:
    doc = {"tool": f"gfm-stab {__version__}", "config_hash": sc.config_hash(cfg), **obj}
    path.write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")


def _two_source(system, what: str) -> TwoSourceSystem:
    if not isinstance(system, TwoSourceSystem):
        raise sc.ConfigError(f"{what} is only defined for two-source scenarios")
    return system


def cmd_simulate(cfg, out: Path) -> dict:
    system = sc.build_system(cfg)
    icfg = sc.integrator(cfg)
    ev = sc.events(cfg)
    if isinstance(system, TwoSourceSystem):
        mode = TopologyMode.PRE_FAULT
        sep = principal_sep(system.model(mode)).delta
        state0 = (sep, None if system.order == 1 else 0.0)
    else:
        state0 = system.initial_state()
    traj = integrate(system, state0, icfg, ev)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        write_trajectory_csv(traj, fh, _header(cfg))
    with open(out / "events.jsonl", "w") as fh:
        write_events_jsonl(traj.events, fh)
    return {"rows": len(traj), "stop": traj.stop, "events": len(traj.events)}


def _window_for(model) -> tuple[float, float]:
    try:
        sep = principal_sep(model).delta
    except NoEquilibriumError:
        return (-math.pi, 3 * math.pi)
    return (sep - math.pi, sep + 3 * math.pi)


def equilibria_report(system: TwoSourceSystem) -> dict:
    report = {}
    for mode in TopologyMode:
        model = system.model(mode)
        window = _window_for(model)
        entry = {"window": list(window)}
        if isinstance(model, FirstOrderModel):
            eqs = find_equilibria_first_order(model, window)
            holds, margin = existence_condition(model)
            entry["existence"] = {"holds": holds, "margin": margin}
            entry["coefficients"] = {"a": model.a, "b": model.b, "c": model.c}
        else:
            eqs = find_equilibria_second_order(model, window)
            entry["p_m"] = model.p_m
        entry["equilibria"] = [e.as_dict() for e in eqs]
        report[mode.value] = entry
    return report


def cmd_equilibria(cfg, out: Path) -> dict:
    system = _two_source(sc.build_system(cfg), "equilibria")
    report = equilibria_report(system)
    _json_dump({"kind": system.kind.value, "modes": report}, out / "equilibria.json", cfg)
    return {mode: len(v["equilibria"]) for mode, v in report.items()}


def cmd_boundary(cfg, out: Path) -> dict:
    from .region import (
        EnergyFunction,
        energy_level_boundary,
        membership,
        reference_window,
        stratified_samples,
        trace_stability_boundary,
        write_membership_csv,
    )

    system = _two_source(sc.build_system(cfg), "boundary tracing")
    b = cfg.get("boundary", {})
    mode = TopologyMode(b.get("mode", "post_fault"))
    model = system.model(mode)
    if isinstance(model, FirstOrderModel):
        raise sc.ConfigError("boundary tracing needs a second-order model; use 'equilibria' for the UEPs")
    sep = principal_sep(model).delta
    lo, hi = bounding_ueps(model, sep)
    window = reference_window(sep, b.get("omega_span", 0.1))
    eps = b.get("eps", 1e-4)
    summary = {"sep": sep, "uep": [lo.delta, hi.delta], "exits": {}}
    with open(out / "boundary.csv", "w", newline="") as fh:
        header = _header(cfg) + [f"mode {mode.value}", f"sep {sep!r}"]
        fh.write("".join(f"# {h}\n" for h in header))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "omega_e", "branch"])
        for tag, uep in (("upper", hi), ("lower", lo)):
            poly = trace_stability_boundary(model, uep, window, eps)
            for name, pts in poly.branches.items():
                summary["exits"][f"{tag}_{name}"] = poly.exits[name]
                for d, om in pts:
                    w.writerow([repr(float(d)), repr(float(om)), f"{tag}_{name}"])
    if b.get("energy_level", model.undamped) and model.undamped:
        ef = EnergyFunction(model, sep)
        level = energy_level_boundary(ef, hi if ef(hi.delta, 0.0) <= ef(lo.delta, 0.0) else lo, window)
        with open(out / "energy_level.csv", "w", newline="") as fh:
            level.write_csv(fh, _header(cfg))
    n = int(b.get("membership_samples", 0))
    if n:
        pts = stratified_samples(window, n, int(b.get("seed", 0)))
        mem = membership(model, pts, sep)
        with open(out / "membership.csv", "w", newline="") as fh:
            write_membership_csv(pts, mem.labels, fh, _header(cfg))
        summary["stable_fraction"] = float(mem.stable.mean())
        summary["undecided"] = mem.undecided
    return summary


def cmd_cct(cfg, out: Path) -> dict:
    scen = sc.fault_scenario(cfg)
    c = cfg.get("cct", {})
    report = compute_cct(scen, c.get("coarse", 0.01), c.get("refine_tol", 1e-3), c.get("mathematical", False))
    _json_dump({"kind": cfg["kind"], "report": report.as_dict()}, out / "cct.json", cfg)
    return {"cct": report.cct_refined, "first_unstable": report.first_unstable}


def sweep_cell(cfg, metrics) -> dict:
    system = sc.build_system(cfg)
    out = {}
    if not isinstance(system, TwoSourceSystem):
        for m in metrics:
            if m != "cct":
                raise sc.ConfigError(f"sweep metric {m!r} needs a two-source scenario")
    else:
        model = system.model(TopologyMode.PRE_FAULT)
        first = isinstance(model, FirstOrderModel)
        sep = None
        try:
            sep = principal_sep(model).delta
        except NoEquilibriumError:
            pass
        for m in metrics:
            if m == "sep":
                out[m] = sep if sep is not None else math.nan
            elif m == "uep":
                out[m] = bounding_ueps(model, sep)[1].delta if sep is not None else math.nan
            elif m == "p_m":
                out[m] = math.nan if first else model.p_m
            elif m == "d_delta":
                out[m] = math.nan if first or sep is None else damping_gain(model, sep)
            elif m == "d_eq":
                out[m] = math.nan if first or sep is None else float(model.d_eq(sep))
            elif m == "existence_margin":
                out[m] = existence_condition(model).margin if first else math.nan
            elif m == "stable_fraction":
                from .region import membership, reference_window, stratified_samples

                post = system.model(TopologyMode.POST_FAULT)
                if first:
                    out[m] = math.nan
                    continue
                s = principal_sep(post).delta
                n = int(cfg.get("boundary", {}).get("membership_samples", 0) or 10_000)
                pts = stratified_samples(reference_window(s, cfg.get("boundary", {}).get("omega_span", 0.1)), n,
                                         int(cfg.get("boundary", {}).get("seed", 0)))
                out[m] = float(membership(post, pts, s).stable.mean())
    if "cct" in metrics:
        c = cfg.get("cct", {})
        out["cct"] = compute_cct(sc.fault_scenario(cfg, system), c.get("coarse", 0.01), c.get("refine_tol", 1e-3)).cct_refined
    return out


def cmd_sweep(cfg, out: Path) -> dict:
    spec = cfg.get("sweep")
    if spec is None:
        raise sc.ConfigError("sweep: missing required field 'sweep'")
    values = sc.sweep_values(spec)
    rows = []
    for v in values:
        cell = sc.set_parameter(cfg, spec["parameter"], v)
        sc.validate(cell)
        res = sweep_cell(cell, spec["metrics"])
        rows.extend((spec["parameter"], v, m, res[m]) for m in spec["metrics"])
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write("".join(f"# {h}\n" for h in _header(cfg)))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value", "metric", "result"])
        for p, v, m, r in rows:
            w.writerow([p, repr(float(v)), m, repr(float(r))])
    return {"cells": len(values)}


def cmd_validate(cfg, out: Path) -> dict:
    from .validation import run_all

    system = sc.build_system(cfg)
    v = cfg.get("validate", {})
    results = run_all(system if isinstance(system, TwoSourceSystem) else None, int(v.get("samples", 1000)),
                      int(v.get("seed", 0)), float(v.get("t_end", 10.0)))
    _json_dump({"checks": [r.as_dict() for r in results], "passed": all(r.passed for r in results)},
               out / "validate.json", cfg)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise _ChecksFailed(f"oracle checks failed: {', '.join(failed)}")
    return {"checks": len(results), "passed": True}


class _ChecksFailed(RuntimeError):
    pass


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "boundary": cmd_boundary,
    "cct": cmd_cct,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def _load_config(ref: str) -> dict:
    p = Path(ref)
    if p.exists():
        return sc.load(p)
    if ref in sc.SHIPPED:
        return sc.shipped(ref)
    raise sc.ConfigError(f"config file {ref!r} not found")


def _fail(code: int, kind: str, msg: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": msg}) + "\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gfm-stab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="scenario JSON file or shipped example name")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"gfm-stab {__version__}")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo.json").write_text(sc.Echo(cfg).text() + "\n")
        summary = COMMANDS[args.command](cfg, out)
    except sc.ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except InconclusiveError as exc:
        return _fail(EXIT_INCONCLUSIVE, "inconclusive", str(exc))
    except (NonFiniteStateError, DegenerateNetworkError, NoEquilibriumError, CctSearchError, _ChecksFailed,
            FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, "numeric", str(exc))
    print(json.dumps({"command": args.command, "config_hash": sc.config_hash(cfg), **summary}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
