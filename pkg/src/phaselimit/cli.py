"""Command-line interface: ``phaselimit <command> ...``.

Exit codes: 0 success, 1 input error, 2 manifold rejection (validate),
3 bound violation (search).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from .bounds import CSV_COLUMNS, audit
from .dressed import DressedFamily
from .dynamics import NotAReturnTime, evolve
from .explorer import SWEEP_COLUMNS, Limits, SweepConfig, prepare_from_spec, resolve_tau, search_counterexample, sweep
from .manifold import Rejection, solve_offsets
from .phase import phase_shift
from .scheme import SchemeError, load_scheme

EXIT_OK, EXIT_INPUT, EXIT_REJECTED, EXIT_VIOLATION = 0, 1, 2, 3

log = logging.getLogger("phaselimit")


class InputError(Exception):
    pass


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _emit(args, doc, rows=None, columns=None):
    if args.format == "csv":
        if rows is None:
            raise InputError(f"command {args.command!r} has no CSV form; use --format json")
        buf = io.StringIO()
        w = csv.DictWriter(buf, columns or list(rows[0]) if rows else (columns or []),
                           extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(doc, indent=2, default=_json_default) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    elif not args.quiet:
        sys.stdout.write(text)


def _family(args):
    scheme = load_scheme(args.scheme)
    verdict = solve_offsets(scheme, getattr(args, "anchor", None))
    if isinstance(verdict, Rejection):
        raise InputError(f"scheme rejected: {verdict.reason} through transitions "
                         f"{[scheme.transitions[i].label for i in verdict.cycle]} from level {verdict.start!r}")
    return DressedFamily.from_scheme(scheme, getattr(args, "anchor", None))


def _photons(family, text):
    if not text:
        return None
    vals = [float(x) for x in text.split(",")]
    if len(vals) != len(family.scheme.lasers):
        raise InputError(f"--photons needs {len(family.scheme.lasers)} values, got {len(vals)}")
    return np.array(vals)


def _state_spec(args):
    if getattr(args, "dressed", None) is not None:
        return {"dressed": args.dressed}
    return {"level": getattr(args, "level", None)}


def cmd_validate(args):
    scheme = load_scheme(args.scheme)
    verdict = solve_offsets(scheme, args.anchor)
    if isinstance(verdict, Rejection):
        doc = {"accepted": False, "reason": verdict.reason, "start": verdict.start,
               "cycle": [scheme.transitions[i].label for i in verdict.cycle],
               "tally": dict(zip(scheme.laser_names, verdict.tally))}
        _emit(args, doc)
        return EXIT_REJECTED
    doc = {"accepted": True, "anchor": verdict.anchor, "offsets": verdict.as_dict(),
           "unreachable": [lv for lv in verdict.levels if lv not in verdict.reachable]}
    _emit(args, doc)
    return EXIT_OK


def cmd_dress(args):
    family = _family(args)
    n = _photons(family, args.photons)
    ds = family.at(n)
    states = []
    rows = []
    for m in range(ds.dim):
        amps = {lv: ds.amplitude(lv, m) for lv in ds.levels}
        states.append({"index": m, "energy": float(ds.energies[m]), "amplitudes": amps})
        rows.append(dict({"index": m, "energy": float(ds.energies[m])},
                         **{f"p_{lv}": abs(a) ** 2 for lv, a in amps.items()}))
    doc = {"levels": list(ds.levels), "photons": ds.photons, "rabi": family.rabi(n), "states": states}
    _emit(args, doc, rows)
    return EXIT_OK


def cmd_phase(args):
    family = _family(args)
    if args.laser not in family.scheme.laser_names:
        raise InputError(f"unknown laser {args.laser!r}; scheme has {family.scheme.laser_names}")
    methods = {"hf": ["hf_chain"], "fd": ["photon_fd"], "both": ["hf_chain", "photon_fd"]}[args.method]
    n = _photons(family, args.photons)
    ds = family.at(n)
    indices = [args.dressed] if args.dressed is not None else range(ds.dim)
    rows = []
    for m in indices:
        for meth in methods:
            r = phase_shift(family, m, args.laser, meth, n, with_dispersion=not args.no_dispersion)
            rows.append({"index": m, "method": meth, "energy": float(ds.energies[m]),
                         "derivative": r.derivative, "dphi_per_atom": r.per_atom, "dphi_total": r.total,
                         "dphi_per_atom_optical": r.per_atom_optical, "dispersion": r.dispersion})
    _emit(args, {"laser": args.laser, "states": rows}, rows)
    return EXIT_OK


def cmd_evolve(args):
    family = _family(args)
    prepared = prepare_from_spec(family, _state_spec(args))
    traj = evolve(prepared, family.at(), args.tau, args.samples, family.scheme.settings.hbar)
    rows = [dict({"time": float(t), "fidelity": float(f)},
                 **{f"p_{lv}": float(p) for lv, p in zip(traj.levels, pops)})
            for t, f, pops in zip(traj.times, traj.fidelity, traj.populations)]
    doc = {"levels": list(traj.levels), "times": traj.times, "fidelity": traj.fidelity,
           "populations": traj.populations}
    _emit(args, doc, rows)
    return EXIT_OK


def _tau_arg(text):
    if text in (None, "auto"):
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tau must be a number or 'auto', got {text!r}")
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("tau must be positive and finite")
    return v


def cmd_bound(args):
    family = _family(args)
    prepared = prepare_from_spec(family, _state_spec(args))
    tau = resolve_tau(family, prepared, args.tau)
    report = audit(family, prepared, tau, tolerance=args.tolerance, seed=args.seed)
    _emit(args, report.to_dict(), report.rows(), list(CSV_COLUMNS))
    return EXIT_OK


def cmd_sweep(args):
    with open(args.config, encoding="utf-8") as fh:
        cfg = SweepConfig.from_dict(json.load(fh), os.path.dirname(os.path.abspath(args.config)))
    if args.output:
        cfg.output = args.output
    fmt = "csv" if args.format == "csv" else "jsonl"
    rows = sweep(cfg, fmt=fmt, workers=args.workers or cfg.workers)
    if not cfg.output and not args.quiet:
        a = argparse.Namespace(**{**vars(args), "output": None})
        _emit(a, rows, rows, list(SWEEP_COLUMNS))
    if not args.quiet:
        bad = [r for r in rows if r["status"] != "ok"]
        print(f"{len(rows)} rows, {len(bad)} not ok", file=sys.stderr)
    return EXIT_OK


def cmd_search(args):
    limits = Limits(args.max_levels, args.max_lasers, args.max_per_laser)
    res = search_counterexample(args.seed, args.trials, limits, args.workers or 1, mode=args.mode,
                                keep_rows=args.format == "csv")
    doc = {"best_ratio": res.best_ratio, "best_seed": res.best_seed, "best_scheme": json.loads(res.best_scheme),
           "tried": res.tried, "accepted": res.accepted, "rejected": res.rejected,
           "violations": res.violations}
    _emit(args, doc, res.rows, list(CSV_COLUMNS))
    if res.violations:
        print(f"THEOREM VIOLATION: {len(res.violations)} trial(s), first seed {res.violations[0]['seed']}",
              file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress):
        # flags may appear before or after the command; the per-command copy
        # must not overwrite a value given before it
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--output", "-o", default=d(None), help="write results to this path instead of stdout")
        g.add_argument("--format", choices=("json", "csv"), default=d("json"))
        g.add_argument("--workers", type=int, default=d(None), help="worker processes (sweep, search)")
        g.add_argument("--quiet", "-q", action="store_true", default=d(False))
        return g

    top, common = global_flags(False), global_flags(True)

    p = argparse.ArgumentParser(prog="phaselimit", description=__doc__.splitlines()[0], parents=[top])
    sub = p.add_subparsers(dest="command", required=True)

    def scheme_cmd(name, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("scheme", help="scheme JSON file")
        sp.add_argument("--anchor", help="reference level for the photon offsets")
        return sp

    def state_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--level", help="prepare the atom in this bare level (default: anchor)")
        g.add_argument("--dressed", type=int, help="prepare dressed state with this index")

    scheme_cmd("validate", "manifold verdict and Bragg-cycle witness").set_defaults(func=cmd_validate)

    sp = scheme_cmd("dress", "dressed energies and eigenvectors")
    sp.add_argument("--photons", help="comma-separated photon numbers, one per laser")
    sp.set_defaults(func=cmd_dress)

    sp = scheme_cmd("phase", "per-atom and total phase shift of each dressed state")
    sp.add_argument("--laser", required=True)
    sp.add_argument("--method", choices=("hf", "fd", "both"), default="both")
    sp.add_argument("--photons")
    sp.add_argument("--dressed", type=int, help="only this dressed index")
    sp.add_argument("--no-dispersion", action="store_true", help="skip the photon-window spread")
    sp.set_defaults(func=cmd_phase)

    sp = scheme_cmd("evolve", "exact time evolution of a prepared state")
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--samples", type=int, default=101)
    state_args(sp)
    sp.set_defaults(func=cmd_evolve)

    sp = scheme_cmd("bound", "audit phase shift against the emission-budget bound")
    sp.add_argument("--tau", type=_tau_arg, default="auto", help="interaction time or 'auto' (first return)")
    sp.add_argument("--tolerance", type=float, default=1e-9, help="return-condition phase tolerance")
    sp.add_argument("--seed", type=int, default=None, help="recorded in the report")
    state_args(sp)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("sweep", help="full-factorial parameter sweep", parents=[common])
    sp.add_argument("config", help="sweep configuration JSON")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("search", help="randomized counterexample search", parents=[common])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--max-levels", type=int, default=8)
    sp.add_argument("--max-lasers", type=int, default=4)
    sp.add_argument("--max-per-laser", type=int, default=3)
    sp.add_argument("--mode", choices=("reduced", "microscopic"), default="reduced")
    sp.set_defaults(func=cmd_search)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SchemeError, NotAReturnTime, OSError, json.JSONDecodeError,
            ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
