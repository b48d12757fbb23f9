"""Command-line entry point: one subcommand per module surface plus the full pipeline."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import classical as cl
from . import dynamics as dyn
from . import io as tio
from . import protocol as pr
from . import runner
from . import theorems as th
from .errors import InputError, ThermalabError
from .fuzz import CLAIMS as FUZZ_CLAIMS
from .fuzz import run_claim
from .models import CNOT, ModelSpec, block_projectors, build_model, perturbed_charged_model, random_dual_unitary_circuit
from .spectral import diagonalize, microcanonical_value
from .weights import fejer_weight


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args) -> dict:
    if not args.config:
        raise InputError("--config is required for this subcommand")
    cfg = tio.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _reports_out(reports: list[th.VerificationReport], args, h: str | None = None) -> int:
    if args.format == "csv":
        rows = [(r.claim_id, r.instance.get("seed", ""), r.lhs, r.rhs, r.margin, r.holds) for r in reports]
        _emit(tio.csv_text(["claim_id", "seed", "lhs", "rhs", "margin", "holds"], rows, h), args.out)
    else:
        _emit(tio.json_text([r.to_json() for r in reports]), args.out)
    return runner.EXIT_OK if all(r.holds for r in reports) else runner.EXIT_VERIFY


def cmd_run(args) -> int:
    cfg = _config(args)
    return runner.run_config(cfg, args.out)


def cmd_build_model(args) -> int:
    cfg = _config(args)
    runner.validate_config(cfg)
    m = cfg["model"]
    model = build_model(ModelSpec(m["family"], dict(m["params"]), int(m.get("seed", cfg.get("seed", 0)))))
    out = args.out or "model.bin"
    tio.write_matrix(out, model["matrix"], model["kind"], meta=tio.stamp(tio.config_hash(cfg)))
    return runner.EXIT_OK


def cmd_diagonalize(args) -> int:
    if args.matrix:
        mat, kind = tio.read_matrix(args.matrix)
        if kind not in ("hamiltonian", "floquet"):
            raise InputError(f"cannot diagonalize a {kind!r} matrix")
        system = diagonalize(mat, kind)
        h = None
    else:
        ctx = runner.build_context(_config(args))
        system, h = ctx.sys, tio.config_hash(ctx.cfg)
    if args.format == "json":
        _emit(tio.json_text({"kind": system.kind, "energies": system.energies.tolist()}), args.out)
    else:
        _emit(tio.csv_text(["n", "E_n"], enumerate(system.energies.tolist()), h), args.out)
    return runner.EXIT_OK


def _metrics_cmd(types: tuple):
    def cmd(args) -> int:
        ctx = runner.build_context(_config(args))
        tol = args.tol if args.tol is not None else dyn.PATH_TOL
        res = runner.compute_metrics(ctx, types, tol=tol)
        if not res:
            raise InputError(f"config lists no metrics of type {', '.join(types)}")
        h = tio.config_hash(ctx.cfg)
        if args.format == "csv":
            rows = [(m["type"], m["observable"], m["value"]) for m in res]
            _emit(tio.csv_text(["type", "observable", "value"], rows, h), args.out)
        else:
            _emit(tio.json_text({"meta": tio.stamp(h), "metrics": res}), args.out)
        return runner.EXIT_OK
    return cmd


def cmd_echo(args) -> int:
    ctx = runner.build_context(_config(args))
    if args.kind:
        t1 = runner.parse_times(args.times or "0:0.1:1")
        t2 = runner.parse_times(args.times2) if args.times2 else t1
        a = None if args.kind == "L_H" else ctx.get("observables", args.observable)
        tol = args.tol if args.tol is not None else dyn.PATH_TOL
        rows = [(args.kind, x, y, v.real, v.imag)
                for x, y, v in dyn.echo_grid(ctx.sys, args.kind, a, t1, t2, path="both", tol=tol)]
    else:
        rows = runner.compute_echoes(ctx)
    _emit(tio.csv_text(["kind", "t1", "t2", "re", "im"], rows, tio.config_hash(ctx.cfg)), args.out)
    return runner.EXIT_OK


def cmd_shell_echo(args) -> int:
    ctx = runner.build_context(_config(args))
    a = ctx.get("observables", args.observable)
    w = ctx.get("weights", args.weight)
    v = ctx.get("weights", args.v_weight)
    shell = ctx.get("shells", args.shell) if args.shell else None
    thv = microcanonical_value(a, shell, ctx.sys) if shell is not None else float(np.trace(a).real) / ctx.sys.dim
    cfg = dyn.ShellEchoConfig(w, v, args.e_center, thv)
    val = dyn.shell_echo_expectation(ctx.sys, a, cfg, path="both")
    _emit(tio.json_text({"meta": tio.stamp(tio.config_hash(ctx.cfg)), "shell_echo": val,
                         "thermal_value": thv, "e_center": args.e_center}), args.out)
    return runner.EXIT_OK


def cmd_verify(args) -> int:
    claims = tuple(c.strip() for c in args.claims.split(",")) if args.claims else None
    if args.config:
        ctx = runner.build_context(_config(args))
        reports = runner.run_verifiers(ctx, claims)
        h = tio.config_hash(ctx.cfg)
    else:
        chosen = claims or FUZZ_CLAIMS
        bad = [c for c in chosen if c not in FUZZ_CLAIMS]
        if bad:
            raise InputError(f"unknown claims {bad}; choose from {', '.join(FUZZ_CLAIMS)}")
        seeds = runner.parse_times(args.seeds).astype(int) if args.seeds else [0 if args.seed is None else args.seed]
        reports = [r for c in chosen for s in seeds for r in run_claim(c, int(s))]
        h = None
    return _reports_out(reports, args, h)


def cmd_protocol(args) -> int:
    ctx = runner.build_context(_config(args))
    a = None if args.kind == "L_H" else ctx.get("observables", args.observable)
    t1 = runner.parse_times(args.times)
    pts = tuple(zip(t1, runner.parse_times(args.times2))) if args.times2 else tuple(t1)
    plan = pr.ProtocolPlan(pts, args.kind, a, args.shots, int(ctx.cfg.get("seed", 0)))
    est = pr.estimate_echo(ctx.sys, plan)
    rows = [(k[0], k[1], e.mean.real, e.mean.imag, e.stderr, e.shots) for k, e in est.items()]
    _emit(tio.csv_text(["t1", "t2", "re", "im", "stderr", "shots"], rows, tio.config_hash(ctx.cfg)), args.out)
    return runner.EXIT_OK


def cmd_mazur_suzuki(args) -> int:
    dims = [int(x) for x in args.block_dims.split(",")]
    h, q = perturbed_charged_model(len(dims), dims, args.seed or 0, args.eps)
    system = diagonalize(h)
    charges = block_projectors(len(dims), dims, args.seed or 0)
    s = 0.8 * np.pi / system.spread
    w_plus = fejer_weight(args.n_atoms, s)
    band = args.band_fraction * 2 * np.pi / (args.n_atoms * s)
    n2 = int(np.ceil(2 * np.pi / (s * band)))
    rep = th.mazur_suzuki(system, q, charges, w_plus, fejer_weight(n2, s), band)
    rep.instance.update({"seed": args.seed or 0, "eps": args.eps, "block_dims": dims})
    return _reports_out([rep], args)


def cmd_dual_unitary(args) -> int:
    circ = random_dual_unitary_circuit(args.n_qubits, args.seed or 0)
    if args.cnot:
        parity, k = args.cnot.split(":")
        circ = circ.replace_gate(parity, int(k), CNOT)
    rep = th.dual_unitary_check(circ, require_dual=False)
    rep.instance.update({"seed": args.seed or 0, "cnot": args.cnot})
    return _reports_out([rep], args)


def cmd_classical(args) -> int:
    if not args.config:
        raise InputError("--config with a partition is required")
    part = cl.ClassicalPartition.from_json(tio.load_config(args.config))
    out = {}
    for name in sorted(part.observables):
        var, et = cl.single_state_determination(part, name)
        out[name] = {"variance": var, "implies_eigenstate_thermalization": et,
                     "thermal_value": part.thermal_value(name),
                     "per_subset": cl.classical_eigenstate_check(part, name).tolist(),
                     "identity_residual": cl.variance_identity_residual(part, name),
                     "equivalence": cl.equivalence_check(part, name, seed=args.seed or 0)}
    _emit(tio.json_text(out), args.out)
    return runner.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermalab", description="Finite-dimensional thermalization lab.")
    ap.add_argument("--version", action="version", version=f"thermalab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--tol", type=float)
        p.set_defaults(func=fn)
        return p

    add("run", cmd_run, "full pipeline; writes the artifact directory given by --out")
    add("build-model", cmd_build_model, "construct the model operator into a matrix container")
    p = add("diagonalize", cmd_diagonalize, "spectrum of a config model or a matrix container")
    p.add_argument("--matrix")
    add("band-metric", _metrics_cmd(("band_metric", "cloned_band_metric", "eigenstate_deviation")),
        "band metrics listed in the config")
    add("autocorr", _metrics_cmd(("autocorrelator", "weighted_average")), "weighted autocorrelators and averages")
    p = add("echo", cmd_echo, "echo grid as CSV")
    p.add_argument("--kind", choices=list(dyn.ECHO_KINDS))
    p.add_argument("--times")
    p.add_argument("--times2")
    p.add_argument("--observable")
    p = add("shell-echo", cmd_shell_echo, "energy-shell echo expectation")
    p.add_argument("--observable")
    p.add_argument("--weight")
    p.add_argument("--v-weight", required=True)
    p.add_argument("--shell")
    p.add_argument("--e-center", type=float, default=0.0)
    p = add("verify", cmd_verify, "theorem verifiers from a config or on seeded random instances")
    p.add_argument("--claims")
    p.add_argument("--seeds", help="start:step:stop range of instance seeds")
    p = add("protocol-sim", cmd_protocol, "simulated auxiliary-qubit echo measurement")
    p.add_argument("--kind", choices=list(dyn.ECHO_KINDS), default="L_H")
    p.add_argument("--times", required=True)
    p.add_argument("--times2")
    p.add_argument("--observable")
    p.add_argument("--shots", type=int, default=10_000)
    p = add("mazur-suzuki", cmd_mazur_suzuki, "finite-time charge bound on a charged block model")
    p.add_argument("--block-dims", default="16,24,24")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--n-atoms", type=int, default=16)
    p.add_argument("--band-fraction", type=float, default=0.05)
    p = add("dual-unitary", cmd_dual_unitary, "single-site autocorrelators of a random dual-unitary circuit")
    p.add_argument("--n-qubits", type=int, default=6)
    p.add_argument("--cnot", help="replace one gate by CNOT, e.g. even:0")
    add("classical", cmd_classical, "ergodic-partition checks from a partition JSON")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        tio.thread_count()
        return int(args.func(args))
    except ThermalabError as exc:
        print(f"thermalab: {exc}", file=sys.stderr)
        return exc.exit_code
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"thermalab: bad input: {exc}", file=sys.stderr)
        return runner.EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
