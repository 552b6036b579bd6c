"""Command-line pipeline: simulate, fit, select, test, evaluate, replicate.

Every output carries a provenance block with the full run configuration and
content hashes of the inputs. CSV outputs put it on a leading ``#`` line.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 non-convergence (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .design import DesignCache, build_design
from .errors import (HawkesNetError, InternalInconsistencyError, SimulationDivergedError)
from .experiments import ReplicationConfig, default_threads, fit_all, replicate
from .inference import TestConfig, test_all_nodes
from .metrics import FittedModel, evaluate
from .model import PAPER_SUPPORT, PRESETS, ModelSpec, preset, random_network
from .selection import DEFAULT_N_GRID, select_basis_dims
from .simulator import EventData, simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4


class ConfigError(HawkesNetError, ValueError):
    pass


# -- argument helpers -------------------------------------------------------------------

def int_list(text: str) -> List[int]:
    """``"4,5,6"``, ``"3..6"`` or a mix such as ``"2,4..6"``."""
    out: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _file_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _provenance(args: argparse.Namespace, inputs: Dict[str, str]) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"tool": "hawkesnet", "version": __version__, "command": args.command,
            "config": config, "inputs": inputs,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}


def _write_text(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _csv_text(rows: Sequence[dict], provenance: dict, columns: Optional[List[str]] = None) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(provenance, sort_keys=True, default=str) + "\n")
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in columns})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple, frozenset, set)):
        return " ".join(str(x) for x in v)
    return v


def _load_events(path: str) -> EventData:
    return EventData.load(path)


def _build(args, events: EventData, m0: int, m1: int) -> DesignCache:
    cache = getattr(args, "design_cache", None)
    if cache:
        try:
            d = DesignCache.load(cache)
            if (d.m0, d.m1, d.p) == (m0, m1, events.p) and d.horizon_T == events.horizon_T:
                return d
        except FileNotFoundError:
            pass
    method = "exact" if args.grid_dt is None else "midpoint"
    d = build_design(events, m0, m1, args.support_b, grid_resolution=args.grid_dt,
                     degree0=args.degree0, degree1=args.degree1, method=method)
    if cache:
        d.save(cache)
    return d


def _dims(args, events: EventData):
    if args.m0_candidates or args.m1_candidates:
        if not (args.m0_candidates and args.m1_candidates):
            raise ConfigError("give both --m0-candidates and --m1-candidates")
        sel = select_basis_dims(events, args.m0_candidates, args.m1_candidates, args.support_b,
                                args.degree0, args.degree1, args.eta_grid, args.alpha_t,
                                tol=args.tol)
        return sel.m0, sel.m1, sel
    if args.m0 is None or args.m1 is None:
        raise ConfigError("give --m0 and --m1, or candidate lists")
    return args.m0, args.m1, None


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    inputs = {}
    if args.model:
        model = ModelSpec.from_json(args.model)
        inputs[args.model] = _file_hash(args.model)
    else:
        edges = None
        if args.preset == "setting2" and args.network == "power_law":
            edges = random_network("power_law", args.p or 100, args.model_seed,
                                   alpha=args.power_alpha)
        model = preset(args.preset, p=args.p, T=args.T, seed=args.model_seed, edges=edges,
                       rho=args.rho, frequency=args.frequency, p_e=args.p_e)
    if args.model_out:
        model.to_json(args.model_out)
    ev = simulate(model, args.seed)
    prov = _provenance(args, inputs)
    ev = EventData(ev.p, ev.horizon_T, ev.times, {**ev.provenance, "run": prov})
    fmt = args.format or ("jsonl" if str(args.out).endswith(".jsonl") else "csv")
    _write_text(args.out, ev.to_jsonl() if fmt == "jsonl" else ev.to_csv())
    return EXIT_OK


def cmd_fit(args) -> int:
    events = _load_events(args.events)
    m0, m1, sel = _dims(args, events)
    design = _build(args, events, m0, m1)
    fits, paths = fit_all(design, args.eta_grid, args.alpha_t, args.tol, threads=args.threads)
    extra = {"provenance": _provenance(args, {args.events: _file_hash(args.events)}),
             "gic_paths": {str(j): [r.as_row() for r in recs] for j, recs in paths.items()}}
    if sel is not None:
        extra["bic_surface"] = sel.rows()
    fm = FittedModel.from_fits(design, fits, extra)
    _write_text(args.out, fm.to_json() + "\n")
    if args.gic_csv:
        rows = [{"node": j, **r.as_row()} for j, recs in sorted(paths.items()) for r in recs]
        _write_text(args.gic_csv, _csv_text(rows, extra["provenance"]))
    return EXIT_OK if all(fm.converged) else EXIT_NONCONVERGED


def cmd_select(args) -> int:
    events = _load_events(args.events)
    if not (args.m0_candidates and args.m1_candidates):
        raise ConfigError("select needs --m0-candidates and --m1-candidates")
    sel = select_basis_dims(events, args.m0_candidates, args.m1_candidates, args.support_b,
                            args.degree0, args.degree1, args.eta_grid, args.alpha_t, tol=args.tol)
    rows = [{**r, "selected": (r["m0"], r["m1"]) == (sel.m0, sel.m1)} for r in sel.rows()]
    if not rows:
        rows = [{"m0": sel.m0, "m1": sel.m1, "bic": float("nan"), "selected": True}]
    prov = _provenance(args, {args.events: _file_hash(args.events)})
    _write_text(args.out, _csv_text(rows, prov, ["m0", "m1", "bic", "selected"]))
    return EXIT_OK


def cmd_test(args) -> int:
    events = _load_events(args.events)
    m0, m1, _ = _dims(args, events)
    tc = TestConfig(degree0=args.degree0, degree1=args.degree1, n_grid=args.eta_grid,
                    alpha_T=args.alpha_t, alpha_level=args.alpha_level, tol=args.tol,
                    grid_resolution=args.grid_dt)
    nodes = args.nodes
    tests = test_all_nodes(events, m0, m1, args.support_b, tc, nodes=nodes)
    rows = [t.as_row() for t in tests]
    prov = _provenance(args, {args.events: _file_hash(args.events)})
    cols = ["node_j", "S_j", "lambda_bar", "dof", "statistic", "p_value", "reject",
            "m0_test", "m1_test", "support"]
    _write_text(args.out, _csv_text(rows, prov, cols))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = ModelSpec.from_json(args.model)
    fm = FittedModel.from_json(args.fit)
    if fm.p != model.p:
        raise ConfigError(f"model has p = {model.p} but the fit has p = {fm.p}")
    rep = evaluate(model, fm)
    prov = _provenance(args, {args.model: _file_hash(args.model), args.fit: _file_hash(args.fit)})
    _write_text(args.out, _csv_text([rep.as_row()], prov))
    return EXIT_OK


def cmd_replicate(args) -> int:
    cfg = ReplicationConfig(
        preset=args.preset, T=args.T, p=args.p, p_e=args.p_e, network=args.network,
        power_alpha=args.power_alpha, rho=args.rho, frequency=args.frequency,
        model_seed=args.model_seed, seed=args.seed, reps=args.reps, degree0=args.degree0,
        degree1=args.degree1, m0=args.m0, m1=args.m1,
        m0_candidates=tuple(args.m0_candidates or ()),
        m1_candidates=tuple(args.m1_candidates or ()), dims_protocol=args.dims_protocol,
        support_b=args.support_b, n_grid=args.eta_grid, alpha_T=args.alpha_t, tol=args.tol,
        fit=not args.no_fit, run_test=args.run_test, alpha_level=args.alpha_level,
        grid_resolution=args.grid_dt)
    if not (cfg.m0_candidates and cfg.m1_candidates) and (cfg.m0 is None or cfg.m1 is None):
        raise ConfigError("give --m0 and --m1, or candidate lists")
    res = replicate(cfg, threads=args.threads)
    prov = _provenance(args, {})
    prov["replication_hash"] = cfg.content_hash()
    rows = []
    for r in res.rows:
        row = {k: v for k, v in r.items() if k != "tests"}
        if "tests" in r:
            row["rejections"] = sum(bool(t["reject"]) for t in r["tests"])
            row["n_tests"] = len(r["tests"])
        rows.append(row)
    if args.rows_out:
        _write_text(args.rows_out, _csv_text(rows, prov))
    if args.tests_out and cfg.run_test:
        trows = [{"rep": r["rep"], "seed": r["seed"], **t} for r in res.rows
                 for t in r.get("tests", [])]
        _write_text(args.tests_out, _csv_text(trows, prov))
    summary = [{"metric": k, **v} for k, v in res.summary().items()]
    if cfg.run_test:
        pv = res.p_values()
        summary.append({"metric": "rejection_rate",
                        "mean": float(np.mean(pv < cfg.alpha_level)) if pv.size else float("nan"),
                        "se": float(np.std(pv < cfg.alpha_level, ddof=1) / np.sqrt(pv.size))
                        if pv.size > 1 else float("nan"), "n": int(pv.size)})
    if res.dims is not None:
        prov["dims"] = list(res.dims)
    _write_text(args.out, _csv_text(summary, prov, ["metric", "mean", "se", "n"]))
    converged = all(r.get("converged", True) for r in res.rows)
    return EXIT_OK if converged else EXIT_NONCONVERGED


# -- parser -------------------------------------------------------------------------

def _common(sp: argparse.ArgumentParser, dims: bool = True) -> None:
    g = sp.add_argument_group("estimation")
    if dims:
        g.add_argument("--m0", type=int, help="background basis dimension")
        g.add_argument("--m1", type=int, help="transfer basis dimension")
        g.add_argument("--m0-candidates", type=int_list, default=None,
                       help="candidate m0 values for BIC selection, e.g. 4..8 or 4,6,8")
        g.add_argument("--m1-candidates", type=int_list, default=None,
                       help="candidate m1 values for BIC selection")
    g.add_argument("--degree0", type=int, default=4, help="background spline order (default 4, cubic)")
    g.add_argument("--degree1", type=int, default=4, help="transfer spline order (default 4, cubic)")
    g.add_argument("--support-b", type=float, default=PAPER_SUPPORT,
                   help=f"transfer support b (default {PAPER_SUPPORT})")
    g.add_argument("--grid-dt", type=float, default=None,
                   help="midpoint-rule step for G; default: exact integration")
    g.add_argument("--eta-grid", type=int, default=DEFAULT_N_GRID,
                   help=f"number of penalty values on the path (default {DEFAULT_N_GRID})")
    g.add_argument("--alpha-t", type=float, default=None,
                   help="GIC weight alpha_T (default (log p)^2 log T / 2)")
    g.add_argument("--tol", type=float, default=1e-7, help="solver tolerance (default 1e-7)")
    g.add_argument("--threads", type=int, default=default_threads(),
                   help="worker count for replications and per-node fits (default: all cores)")


def _model_args(sp: argparse.ArgumentParser) -> None:
    g = sp.add_argument_group("model")
    g.add_argument("--preset", choices=PRESETS, default="setting1_1")
    g.add_argument("--T", type=float, default=10.0, help="horizon (default 10)")
    g.add_argument("--p", type=int, default=None, help="node count (preset default)")
    g.add_argument("--model-seed", type=int, default=0, help="seed of the model draw")
    g.add_argument("--rho", type=float, default=1.0, help="setting3_2 amplitude ratio")
    g.add_argument("--frequency", type=float, default=None, help="background frequency")
    g.add_argument("--p-e", type=float, default=0.025, help="Erdos-Renyi edge probability")
    g.add_argument("--network", choices=("erdos_renyi", "power_law"), default="erdos_renyi")
    g.add_argument("--power-alpha", type=float, default=1.0, help="power-law exponent")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hawkesnet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hawkesnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="simulate events from a preset or a model JSON")
    _model_args(sp)
    sp.add_argument("--model", help="ModelSpec JSON (overrides --preset)")
    sp.add_argument("--model-out", help="write the ModelSpec JSON here")
    sp.add_argument("--seed", type=int, default=0, help="simulation seed (default 0)")
    sp.add_argument("--format", choices=("csv", "jsonl"), default=None,
                    help="output format (default from the --out extension, else csv)")
    sp.add_argument("--out", default="-", help="events file (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit every node and write a FittedModel JSON")
    sp.add_argument("events", help="events CSV or JSONL")
    _common(sp)
    sp.add_argument("--seed", type=int, default=0, help="recorded for provenance only")
    sp.add_argument("--design-cache", help="binary design file to reuse or create")
    sp.add_argument("--gic-csv", help="write the GIC paths here")
    sp.add_argument("--out", default="-", help="fit JSON (default stdout)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("select", help="BIC surface over basis dimensions")
    sp.add_argument("events")
    _common(sp)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("test", help="test for constant backgrounds")
    sp.add_argument("events")
    _common(sp)
    sp.add_argument("--nodes", type=int_list, default=None, help="nodes to test (default all)")
    sp.add_argument("--alpha-level", type=float, default=0.05, help="test level (default 0.05)")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("evaluate", help="compare a fit with the true model")
    sp.add_argument("--model", required=True, help="ModelSpec JSON")
    sp.add_argument("--fit", required=True, help="FittedModel JSON")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("replicate", help="seeded simulate-fit-evaluate loop with a summary table")
    _model_args(sp)
    _common(sp)
    sp.add_argument("--seed", type=int, default=0, help="replication r uses seed + r")
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--dims-protocol", choices=("average", "per_rep"), default="average",
                    help="with candidate lists: fit all reps at the averaged selection, "
                         "or each rep at its own")
    sp.add_argument("--run-test", action="store_true", help="also run the background test")
    sp.add_argument("--no-fit", action="store_true", help="skip estimation and evaluation")
    sp.add_argument("--alpha-level", type=float, default=0.05)
    sp.add_argument("--rows-out", help="per-replication rows CSV")
    sp.add_argument("--tests-out", help="per-node test rows CSV")
    sp.add_argument("--out", default="-", help="summary CSV (default stdout)")
    sp.set_defaults(func=cmd_replicate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SimulationDivergedError, InternalInconsistencyError, ArithmeticError) as e:
        print(f"hawkesnet: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as e:
        print(f"hawkesnet: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
