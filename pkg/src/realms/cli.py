"""Command-line runner for configured experiments.

    realms run CONFIG.json [--out DIR] [--threads N] [--validate-only]
    realms validate CONFIG.json

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 size cap exceeded.  ``REALMS_THREADS`` sets the default thread count.
"""
import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from realms import config as cf
from realms.errors import CapExceeded, ConfigError, ContractViolation, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CAP = 0, 2, 3, 4


# -- output -------------------------------------------------------------------------

def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g17(x):
    return "%.17g" % x


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_g17(float(v)) for v in row])
    return buf.getvalue()


def json_text(doc):
    # Python floats print as the shortest string that round-trips exactly
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


# -- experiment runners -------------------------------------------------------------

def _run_decoherence(cfg, threads):
    from realms.decoherence import decoherence_functional

    hset = cf.build_history_set(cfg)
    psi = cf.build_state(cfg.params["state"], hset.dim, cfg.rng())
    report = decoherence_functional(hset, psi, cfg.tolerances.epsilon)
    return "json", report.to_json()


def _run_maxent(cfg, threads):
    from realms.maxent import ConstraintSet, solve_multipliers

    p = cfg.params
    ops = [cf.build_matrix(m, f"operators[{i}]") for i, m in enumerate(p["operators"])]
    dim = ops[0].shape[0]
    if any(o.shape[0] != dim for o in ops):
        raise ConfigError("operators: all operators must share one dimension", field="operators")
    if ("targets" in p) == ("state" in p):
        raise ConfigError("targets: give exactly one of targets or state", field="targets")
    try:
        if "targets" in p:
            if len(p["targets"]) != len(ops):
                raise ConfigError("targets: one target per operator is required", field="targets")
            cons = ConstraintSet(tuple(ops), p["targets"])
        else:
            psi = cf.build_state(p["state"], dim, cfg.rng())
            cons = ConstraintSet.from_state(ops, psi)
    except ContractViolation as exc:
        raise ConfigError(f"operators: {exc}", field="operators") from None
    sol = solve_multipliers(cons, tol=cfg.tolerances.solve, max_iter=p.get("max_iter", 200))
    doc = sol.to_json()
    doc["rho_tilde_real"] = np.real(sol.rho_tilde).tolist()
    doc["rho_tilde_imag"] = np.imag(sol.rho_tilde).tolist()
    return "json", doc


def _run_second_law(cfg, threads):
    from realms.models import CellPartition, SpinChainModel, domain_wall_state, second_law_experiment

    p = cfg.params
    model = SpinChainModel(p["sites"], p.get("coupling", 1.0), p.get("interaction", 0.0),
                           p.get("field", 0.0), 0.0, p.get("periodic", False))
    try:
        part = CellPartition(model, p["cell_size"])
    except ContractViolation as exc:
        raise ConfigError(f"cell_size: {exc}", field="cell_size") from None
    init = p.get("initial", {})
    psi = domain_wall_state(p["sites"], init.get("filled"), init.get("tilt", 0.05))
    run = second_law_experiment(model, part, psi, cf.build_times(p["times"]),
                                cfg.tolerances.epsilon, tol=cfg.tolerances.solve)
    return "csv", (("t", "S_local", "S_eq", "defect"), run.rows)


def _run_ehrenfest(cfg, threads):
    from realms.models import WavePacketModel, ehrenfest_experiment, harmonic, quartic

    p = cfg.params
    mass = p.get("mass", 1.0)
    pot = p["potential"]
    if pot["type"] == "harmonic":
        v, f = harmonic(pot.get("omega", 1.0), mass)
    elif pot["type"] == "quartic":
        v, f = quartic(pot.get("coefficient", 0.25))
    else:
        v, f = None, None
    model = WavePacketModel(p["grid_size"], p["length"], mass, v, f)
    pk = p["packet"]
    try:
        rows = ehrenfest_experiment(model, pk["x0"], pk.get("p0", 0.0), pk["width"], cf.build_times(p["times"]))
    except ContractViolation as exc:
        raise ConfigError(f"packet: {exc}", field="packet") from None
    return "csv", (("t", "mean_x", "x_classical", "spread"), rows)


def _run_theorem_search(cfg, threads):
    from realms.theorems import search_fine_grained

    p = cfg.params
    summary = search_fine_grained(p["dim"], p["n_times"], p["trials"], cfg.seed,
                                  p.get("inject_repeated", 0), threads, cfg.tolerances.exact)
    return "json", summary.to_json()


def _run_certainty(cfg, threads):
    from realms.theorems import certainty_check, certainty_corpus

    p = cfg.params
    items = []
    for kind, hset, psi in certainty_corpus(cfg.seed, p.get("count", 40), tuple(p.get("dims", (2, 3, 4, 6)))):
        rep = certainty_check(hset, psi, cfg.tolerances.certainty, cfg.tolerances.exact)
        items.append({"kind": kind, "dim": hset.dim, "n_times": hset.n_times, **rep.to_json()})
    checked = [it for it in items if not it["vacuous"]]
    doc = {
        "seed": cfg.seed,
        "count": len(items),
        "certain": len(checked),
        "max_violation": max((it["max_violation"] for it in checked), default=0.0),
        "all_passed": all(it["passed"] for it in items),
        "items": items,
    }
    return "json", doc


RUNNERS = {
    "decoherence": _run_decoherence,
    "maxent": _run_maxent,
    "second-law": _run_second_law,
    "ehrenfest": _run_ehrenfest,
    "theorem-search": _run_theorem_search,
    "certainty": _run_certainty,
}


# -- command handling ---------------------------------------------------------------

def _load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _origin(exc):
    """Name of the innermost package module the exception passed through."""
    tb, name = exc.__traceback__, None
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("realms."):
            name = mod
        tb = tb.tb_next
    return name or "realms"


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("REALMS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"REALMS_THREADS must be an integer, got {env!r}", field="REALMS_THREADS") from None
    return 1


def validate(path, out=None):
    """Print every violation; return the exit code."""
    out = out or sys.stdout
    try:
        doc = _load(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = cf.schema_violations(doc)
    for line in problems:
        print(line, file=out)
    return EXIT_CONFIG if problems else EXIT_OK


def run(path, out_dir=None, threads=None, validate_only=False):
    """Run one configured experiment; return the exit code."""
    try:
        doc = _load(path)
        problems = cf.schema_violations(doc)
        if problems:
            for line in problems:
                print(f"config error: {line}", file=sys.stderr)
            return EXIT_CONFIG
        if validate_only:
            return EXIT_OK
        cfg = cf.ExperimentConfig.from_dict(doc)
        kind, payload = RUNNERS[cfg.kind](cfg, _threads(threads))
        target = os.path.join(out_dir or os.getcwd(), cfg.default_output)
        text = csv_text(*payload) if kind == "csv" else json_text(payload)
        atomic_write(target, text)
    except (ConfigError, ContractViolation) as exc:
        where = getattr(exc, "field", None)
        print(f"config error{f' [{where}]' if where else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"{_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CapExceeded as exc:
        print(f"{_origin(exc)}: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    print(target)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="realms", description="Run decoherent-histories experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (default: current directory)")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--validate-only", action="store_true")
    p_val = sub.add_parser("validate", help="check a config against the schema")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "validate":
        return validate(args.config)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    return run(args.config, args.out, args.threads, args.validate_only)


if __name__ == "__main__":
    sys.exit(main())
