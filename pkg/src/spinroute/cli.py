"""``spinroute`` command line.

Exit codes: 0 ok, 1 a physics check failed, 2 bad parameters or input,
3 no route exists.  Output goes to ``--out`` (stdout by default) and is only
written once the whole result exists; files are replaced atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Callable, Sequence

import numpy as np

from . import dualrail, hexchip, network, oracle, pst, sector

EXIT_OK, EXIT_CHECK, EXIT_PARAM, EXIT_UNROUTABLE = 0, 1, 2, 3


class ParameterError(ValueError):
    pass


# ------------------------------------------------------------------ output


def write_output(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".spinroute-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def _g17(x) -> str:
    if isinstance(x, (bool, str)) or x is None:
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_g17(x) for x in row])
    return buf.getvalue()


def _complex(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


# ------------------------------------------------------------- arguments


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _vertex(text: str) -> hexchip.Vertex:
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LAYER,Q,R, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected LAYER,Q,R, got {text!r}")
    return hexchip.Vertex(*parts)


def _seed_range(text: str) -> list[int]:
    """'7' or 'START:STOP' (stop exclusive)."""
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            return list(range(lo, hi))
        return [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}") from None


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _add_output(p: argparse.ArgumentParser, csv_ok: bool = True):
    p.add_argument("--out", "-o", default=None, help="output file (default: stdout)")
    choices = ("document", "csv") if csv_ok else ("document",)
    p.add_argument("--format", choices=choices, default="document")


def _add_builder(p: argparse.ArgumentParser, required: bool = False):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--net", help="network document")
    src.add_argument("--builder", choices=("uniform", "pst", "diamond"))
    p.add_argument("--n", type=int, help="chain length (uniform, pst)")
    p.add_argument("--cells", type=int, help="diamond cells")
    p.add_argument("--delta", type=float, default=0.0, help="anisotropy of the uniform chain")
    p.add_argument("--field", type=float, default=0.0, help="uniform field on the uniform chain")
    p.add_argument("--coupling", type=float, default=1.0, help="diamond bond strength")
    p.add_argument("--transfer-time", type=float, default=math.pi, help="pst chain transfer time")


def _network_from_args(args) -> network.SpinNetwork:
    if args.net:
        try:
            with open(args.net, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParameterError(f"cannot read {args.net}: {exc.strerror}") from None
        net = network.deserialize(text)
        problems = network.validate(net)
        if problems:
            raise ParameterError("; ".join(problems))
        return net
    if args.builder is None:
        raise ParameterError("give --net FILE or --builder")
    if args.builder == "diamond":
        if args.cells is None:
            raise ParameterError("--cells is required for the diamond builder")
        return network.build_diamond_chain(args.cells, args.coupling)
    if args.n is None:
        raise ParameterError(f"--n is required for the {args.builder} builder")
    if args.builder == "uniform":
        return network.build_uniform_chain(args.n, args.delta, args.field)
    return network.build_pst_chain(args.n, args.transfer_time)


def _chip_from_args(args) -> hexchip.HexChip:
    kwargs = {"defect_model": args.defect_model}
    if args.chip:
        return hexchip.chip_from_document(_read_json(args.chip), **kwargs)
    if None in (args.layers, args.rows, args.cols):
        raise ParameterError("give --chip FILE or all of --layers, --rows, --cols")
    junctions = [v.to_list() for v in args.interlayer]
    defects = [v.to_list() for v in args.defect]
    return hexchip.build_chip(args.layers, args.rows, args.cols, junctions, defects, **kwargs)


def _add_chip(p: argparse.ArgumentParser):
    p.add_argument("--chip", help="chip document")
    p.add_argument("--layers", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--interlayer", type=_vertex, action="append", default=[], metavar="L,Q,R")
    p.add_argument("--defect", type=_vertex, action="append", default=[], metavar="L,Q,R")
    p.add_argument("--defect-model", choices=("open", "flipped"), default="open")


# ---------------------------------------------------------------- commands


def cmd_net_build(args) -> tuple[str, int]:
    if args.net:
        raise ParameterError("net build takes --builder, not --net")
    net = _network_from_args(args)
    if args.format == "csv":
        return csv_text(("a", "b", "strength"), ((c.a, c.b, c.strength) for c in net.couplings)), EXIT_OK
    return network.serialize(net) + "\n", EXIT_OK


def cmd_net_validate(args) -> tuple[str, int]:
    try:
        with open(args.file, encoding="utf-8") as fh:
            net = network.deserialize(fh.read())
    except OSError as exc:
        raise ParameterError(f"cannot read {args.file}: {exc.strerror}") from None
    problems = network.validate(net)
    doc = {"file": args.file, "n_sites": net.n_sites, "valid": not problems, "problems": problems}
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
    return dump_document(doc), EXIT_CHECK if problems else EXIT_OK


def cmd_transfer(args) -> tuple[str, int]:
    if not args.t_max > 0 or not math.isfinite(args.t_max):
        raise ParameterError(f"--t-max must be positive, got {args.t_max}")
    net = _network_from_args(args)
    n = net.n_sites
    source = 0 if args.source is None else args.source
    target = n - 1 if args.target is None else args.target
    for name, k in (("source", source), ("target", target)):
        if not 0 <= k < n:
            raise ParameterError(f"--{name} {k} is outside 0..{n - 1}")
    grid = args.grid or max(2001, int(math.ceil(100 * args.t_max)) + 1)
    if grid < 2 or args.samples < 2:
        raise ParameterError("--grid and --samples must be at least 2")
    h = sector.sector_hamiltonian(net)
    times = np.linspace(0.0, args.t_max, args.samples)
    if args.format == "csv":
        return sector.time_series_csv(h, source, target, times), EXIT_OK

    t_peak, g_peak = sector.peak_search(h, source, target, (0.0, args.t_max), grid)
    fid = sector.average_fidelity(g_peak)
    gs = sector.transfer_amplitude(h, source, target, times)
    series = []
    for t, g in zip(times, gs):
        f = sector.average_fidelity(g)
        series.append([float(t), float(g.real), float(g.imag), f.plain, f.corrected])
    doc = {
        "command": "transfer",
        "n_sites": n,
        "source": source,
        "target": target,
        "window": [0.0, args.t_max],
        "grid": grid,
        "peak": {
            "t": t_peak,
            "g": _complex(g_peak),
            "magnitude": abs(g_peak),
            "fidelity": fid.plain,
            "fidelity_corrected": fid.corrected,
        },
        "series_columns": ["t", "re_g", "im_g", "fidelity", "fidelity_corrected"],
        "series": series,
    }
    return dump_document(doc), EXIT_OK


def cmd_pst_verify(args) -> tuple[str, int]:
    if args.net:
        chain = _network_from_args(args)
    else:
        if args.n is None or args.n < 2:
            raise ParameterError("--n (>= 2) or --net is required")
        chain = network.build_pst_chain(args.n, args.transfer_time)
    t = args.transfer_time if args.t is None else args.t
    report = pst.verify_pst(chain, t)
    ok = report.magnitude >= 1 - 1e-9 and report.mirror_ok and report.eigenphase_ok
    doc = {"command": "pst verify", "n_sites": chain.n_sites, "ok": ok, **report.to_document()}
    if args.format == "csv":
        d = report.to_document()
        text = csv_text(
            ("t0", "magnitude", "re_phase", "im_phase", "mirror_min", "eigenphase_spread", "ok"),
            [(d["t0"], d["magnitude"], d["phase"][0], d["phase"][1], d["mirror_min"], d["eigenphase_spread"], ok)],
        )
    else:
        text = dump_document(doc)
    return text, EXIT_OK if ok else EXIT_CHECK


def cmd_diamond_run(args) -> tuple[str, int]:
    if args.cells is None or args.cells < 1:
        raise ParameterError("--cells must be >= 1")
    if not args.coupling > 0:
        raise ParameterError("--coupling must be positive")
    chain = network.build_diamond_chain(args.cells, args.coupling)
    schedule = pst.diamond_schedule(args.cells, args.coupling)
    psi = sector.run_schedule(chain, sector.basis_state(chain.n_sites, 0), schedule)
    amp = complex(psi[-1])
    blocks = pst.diamond_decompose(chain)
    ok = abs(amp) >= 1 - 1e-9 and blocks.offblock_residual < 1e-10 and blocks.block_error < 1e-10
    if args.format == "csv":
        rows = [(t, "+".join(e.sites) if not isinstance(e.sites, str) else e.sites)
                for t, e in zip(schedule.pulse_times(), schedule.events)]
        return csv_text(("time", "planes"), rows), EXIT_OK if ok else EXIT_CHECK
    doc = {
        "command": "diamond run",
        "cells": args.cells,
        "coupling": args.coupling,
        "schedule": hexchip.schedule_document(schedule),
        "end_amplitude": _complex(amp),
        "magnitude": abs(amp),
        "blocks": blocks.to_document(),
        "ok": ok,
    }
    return dump_document(doc), EXIT_OK if ok else EXIT_CHECK


def cmd_hex_route(args) -> tuple[str, int]:
    chip = _chip_from_args(args)
    route = hexchip.plan_route(chip, args.source, args.target)
    schedule = hexchip.compile_route(route, chip.hadamard)
    result = hexchip.simulate_route(chip, route)
    ok = result.magnitude >= 1 - 1e-8
    if args.format == "csv":
        rows = [(t, "+".join(e.sites)) for t, e in zip(schedule.pulse_times(), schedule.events)]
        return csv_text(("time", "planes"), rows), EXIT_OK if ok else EXIT_CHECK
    doc = {
        "command": "hex route",
        "chip": chip.to_document(),
        "route": route.to_document(),
        "schedule": hexchip.schedule_document(schedule),
        "result": result.to_document(),
        "ok": ok,
    }
    return dump_document(doc), EXIT_OK if ok else EXIT_CHECK


def cmd_hex_check(args) -> tuple[str, int]:
    chip = _chip_from_args(args)
    checks = {
        "block-residual": hexchip.block_structure_check(chip),
    }
    failures = [] if checks["block-residual"] < 1e-10 else ["block-residual"]
    doc = {"command": "hex check", "chip": chip.to_document(), "checks": checks}
    if args.route:
        route = hexchip.route_from_document(_read_json(args.route))
        try:
            hexchip.check_route(chip, route)
            result = hexchip.simulate_route(chip, route)
            doc["route"] = {"valid": True, **result.to_document()}
            if result.magnitude < 1 - 1e-8:
                failures.append("route-magnitude")
        except hexchip.MalformedRouteError as exc:
            doc["route"] = {"valid": False, "reason": str(exc)}
            failures.append("route")
    doc["failures"] = failures
    for name in failures:
        print(f"FAIL {name}", file=sys.stderr)
    return dump_document(doc), EXIT_CHECK if failures else EXIT_OK


def _check_dualrail_args(args):
    if not 0 < args.target < 1:
        raise ParameterError(f"--target must be in (0, 1); 1 is never reached exactly, got {args.target}")
    if not 0 <= args.epsilon <= dualrail.MAX_EPSILON:
        raise ParameterError(f"--epsilon must be in [0, {dualrail.MAX_EPSILON}]")
    if args.n < 2:
        raise ParameterError("--n must be >= 2")


def cmd_dualrail_run(args) -> tuple[str, int]:
    _check_dualrail_args(args)
    chain = None
    if args.pst:
        if args.epsilon != 0:
            raise ParameterError("--pst uses noiseless engineered chains; set --epsilon 0")
        chain = network.build_pst_chain(args.n)
    sys_ = dualrail.build_dual_rail(args.n, args.epsilon, args.seed, chain)
    log = dualrail.run_protocol(sys_, args.max_attempts, args.target)
    ok = log.outcome == "success"
    if args.format == "csv":
        rows = [(k + 1, a.t, a.p_success, a.p_average, a.p_worst, a.cumulative, a.phase)
                for k, a in enumerate(log.attempts)]
        text = csv_text(("attempt", "t", "p", "p_average", "p_worst", "cumulative", "phase"), rows)
    else:
        text = dualrail.dumps(dualrail.run_document(sys_, log))
    return text, EXIT_OK if ok else EXIT_CHECK


def cmd_dualrail_sweep(args) -> tuple[str, int]:
    _check_dualrail_args(args)
    seeds = args.seeds if args.seeds is not None else list(range(args.seed_count))
    if not seeds:
        raise ParameterError("no seeds given")
    doc = dualrail.run_ensemble(args.n, args.epsilon, seeds, args.max_attempts, args.target, args.workers)
    ok = doc["all_reached_target"]
    if args.format == "csv":
        rows = [(r["seed"], r["attempt_count"], r["outcome"], r["success_time"]) for r in doc["runs"]]
        text = csv_text(("seed", "attempts", "outcome", "success_time"), rows)
    else:
        text = dualrail.dumps(doc)
    return text, EXIT_OK if ok else EXIT_CHECK


# ------------------------------------------------------------------ verify


def _pulse_table(signs: np.ndarray) -> tuple[bool, str]:
    """Every xi^a -> xi^b move must be one pair of plane Z flips with coefficient +1."""
    cell = hexchip.build_switch_cell(signs)
    xi = hexchip.xi_local(signs)
    for a in range(4):
        for b in range(a + 1, 4):
            try:
                planes = hexchip.pulse_planes(a, b, signs)
            except ValueError as exc:
                return False, str(exc)
            vec = np.zeros(8)
            vec[:4] = xi[:, a]
            moved = sector.apply_pulse(vec, planes, cell)
            target = np.zeros(8)
            target[:4] = xi[:, b]
            if np.max(np.abs(moved - target)) != 0.0:
                return False, f"{'+'.join(planes)} does not map xi^{a} to xi^{b}"
    return True, "6 plane pairs exact"


def _battery(signs: np.ndarray, oracle_sites: int | None) -> list[tuple[str, Callable[[], tuple[bool, str]]]]:
    def pulse_table():
        return _pulse_table(signs)

    def xi_gram():
        xi = hexchip.xi_local(signs)
        err = float(np.max(np.abs(xi.T @ xi - np.eye(4))))
        return err < 1e-12, f"max |G - I| = {err:.3g}"

    def block_residual():
        chip = hexchip.build_chip(2, 3, 3, [(0, 1, 1)], hadamard=signs)
        r = hexchip.block_structure_check(chip)
        return r < 1e-10, f"residual {r:.3g}"

    def oracle_equivalence():
        nets = [
            network.build_uniform_chain(5, anisotropy=0.7, field=0.3),
            network.build_pst_chain(6),
            network.build_diamond_chain(2),
            hexchip.build_switch_cell(signs),
        ]
        if oracle_sites is not None:
            nets.append(network.build_uniform_chain(oracle_sites, anisotropy=1.0))
        worst = 0.0
        for net in nets:
            worst = max(worst, oracle.sector_equivalence(net, 0, net.n_sites - 1, 1.3))
            worst = max(worst, oracle.check_symmetry(net))
        return worst < 1e-9, f"max deviation {worst:.3g} over {len(nets)} networks"

    def diamond_blocks():
        worst = 0.0
        for cells in (1, 2, 4):
            d = pst.diamond_decompose(network.build_diamond_chain(cells))
            worst = max(worst, d.offblock_residual, d.block_error, d.basis_error)
        return worst < 1e-10, f"worst residual {worst:.3g}"

    def eigenphase():
        bad = []
        for n in range(2, 16):
            rep = pst.verify_pst(network.build_pst_chain(n), math.pi)
            if not (rep.eigenphase_ok and rep.mirror_ok and rep.magnitude >= 1 - 1e-9):
                bad.append(n)
        return not bad, "n = 2..15 ok" if not bad else f"failing n: {bad}"

    return [
        ("pulse-table", pulse_table),
        ("xi-gram", xi_gram),
        ("block-residual", block_residual),
        ("oracle-equivalence", oracle_equivalence),
        ("diamond-blocks", diamond_blocks),
        ("eigenphase", eigenphase),
    ]


def cmd_verify(args) -> tuple[str, int]:
    if args.oracle_sites is not None and args.oracle_sites > oracle.MAX_SITES:
        raise oracle.SizeCapError(f"full-space oracle is capped at {oracle.MAX_SITES} sites, got {args.oracle_sites}")
    if args.oracle_sites is not None and args.oracle_sites < 2:
        raise ParameterError("--oracle-sites must be >= 2")
    signs = hexchip.HADAMARD.copy()
    if args.mutate_hadamard:
        signs[1, 2] = -signs[1, 2]
    results = []
    for name, check in _battery(signs, args.oracle_sites):
        try:
            ok, detail = check()
        except Exception as exc:  # a crash inside a check is a failure of that check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append({"check": name, "ok": bool(ok), "detail": detail})
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}", file=sys.stderr)
    failed = [r["check"] for r in results if not r["ok"]]
    if args.format == "csv":
        text = csv_text(("check", "ok", "detail"), ((r["check"], r["ok"], r["detail"]) for r in results))
    else:
        text = dump_document({"command": "verify", "checks": results, "failed": failed})
    return text, EXIT_CHECK if failed else EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinroute", description="Spin-network transfer and routing simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    net = sub.add_parser("net", help="build or validate network documents")
    net_sub = net.add_subparsers(dest="action", required=True)
    p = net_sub.add_parser("build", help="write a network document from a builder")
    _add_builder(p)
    _add_output(p)
    p.set_defaults(func=cmd_net_build)
    p = net_sub.add_parser("validate", help="check a network document")
    p.add_argument("file")
    _add_output(p, csv_ok=False)
    p.set_defaults(func=cmd_net_validate)

    p = sub.add_parser("transfer", help="end-to-end amplitude, fidelity series and peak")
    _add_builder(p)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--source", type=int)
    p.add_argument("--target", type=int)
    p.add_argument("--grid", type=int, default=None, help="peak-search grid (default: 100 points per unit time)")
    p.add_argument("--samples", type=int, default=201, help="points in the emitted series")
    _add_output(p)
    p.set_defaults(func=cmd_transfer)

    group = sub.add_parser("pst", help="perfect state transfer chains")
    p = group.add_subparsers(dest="action", required=True).add_parser("verify")
    _add_builder(p)
    p.add_argument("--t", type=float, default=None, help="candidate time (default: the chain's transfer time)")
    _add_output(p)
    p.set_defaults(func=cmd_pst_verify)

    group = sub.add_parser("diamond", help="pulsed diamond chain")
    p = group.add_subparsers(dest="action", required=True).add_parser("run")
    p.add_argument("--cells", type=int, required=True)
    p.add_argument("--coupling", type=float, default=1.0)
    _add_output(p)
    p.set_defaults(func=cmd_diamond_run)

    group = sub.add_parser("hex", help="honeycomb switch chips")
    hex_sub = group.add_subparsers(dest="action", required=True)
    p = hex_sub.add_parser("route", help="plan, compile and simulate a route")
    _add_chip(p)
    p.add_argument("--from", dest="source", type=_vertex, required=True, metavar="L,Q,R")
    p.add_argument("--to", dest="target", type=_vertex, required=True, metavar="L,Q,R")
    _add_output(p)
    p.set_defaults(func=cmd_hex_route)
    p = hex_sub.add_parser("check", help="check chip block structure and optionally a route document")
    _add_chip(p)
    p.add_argument("--route", help="route document to validate and simulate")
    _add_output(p, csv_ok=False)
    p.set_defaults(func=cmd_hex_check)

    group = sub.add_parser("dualrail", help="conclusive transfer over two chains")
    dr_sub = group.add_subparsers(dest="action", required=True)
    for name, func in (("run", cmd_dualrail_run), ("sweep", cmd_dualrail_sweep)):
        p = dr_sub.add_parser(name)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--epsilon", type=float, default=0.0)
        p.add_argument("--target", type=float, default=0.99)
        p.add_argument("--max-attempts", type=_positive_int, default=500)
        _add_output(p)
        p.set_defaults(func=func)
    run_p, sweep_p = dr_sub.choices["run"], dr_sub.choices["sweep"]
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--pst", action="store_true", help="use engineered chains instead of uniform ones")
    sweep_p.add_argument("--seeds", type=_seed_range, default=None, metavar="START:STOP")
    sweep_p.add_argument("--seed-count", type=_positive_int, default=200)
    sweep_p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("verify", help="run the invariant battery")
    p.add_argument("--mutate-hadamard", action="store_true", help="flip one switch sign (the battery must fail)")
    p.add_argument("--oracle-sites", type=int, default=None, help="add a uniform chain of this size to the oracle check")
    _add_output(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text, status = args.func(args)
    except hexchip.UnroutableError as exc:
        print(f"unroutable: {exc}", file=sys.stderr)
        return EXIT_UNROUTABLE
    except ValueError as exc:  # parse, size-cap, chip and topology errors all derive from it
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    write_output(text, args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
