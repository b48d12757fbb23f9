"""Experiment pipeline: validate config, build model, measure, verify, persist artifacts."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import dynamics as dyn
from . import io as tio
from . import metrics as met
from . import theorems as th
from .errors import InputError, PathDisagreement, ThermalabError
from .fuzz import CLAIMS as FUZZ_CLAIMS
from .fuzz import run_claim
from .models import ModelSpec, block_projectors, build_model, random_projector, site_projector
from .spectral import BandSpec, DensityOperator, EnergyShell, SpectralSystem, diagonalize, microcanonical_value
from .weights import WeightFunction, cp_from_pointset, fejer_weight, generic_weight

EXIT_OK, EXIT_INPUT, EXIT_PATH, EXIT_VERIFY = 0, 2, 3, 4

_NAMED = {"name": {"type": "string"}}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}
_TIMES = {"oneOf": [{"type": "string"}, {"type": "array", "items": _NUM}]}

SCHEMA = _obj({
    "seed": _INT,
    "model": _obj({"family": _STR, "params": {"type": "object"}, "seed": _INT}, ["family", "params"]),
    "observables": {"type": "array", "items": _obj({
        **_NAMED, "type": {"enum": ["random_projector", "site_projector", "block_projector", "charge"]},
        "rank": _INT, "seed": _INT, "site": _INT, "bit": _INT, "block": _INT}, ["name", "type"])},
    "shells": {"type": "array", "items": _obj({
        **_NAMED, "window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "indices": {"type": "array", "items": _INT}, "full": {"type": "boolean"},
        "central_fraction": _NUM}, ["name"])},
    "bands": {"type": "array", "items": _obj({**_NAMED, "delta_e": _NUM,
                                                "circle_metric": {"type": ["boolean", "null"]}},
                                               ["name", "delta_e"])},
    "weights": {"type": "array", "items": _obj({
        **_NAMED, "type": {"enum": ["fejer", "generic", "pointset"]}, "n_atoms": _INT, "spacing": _NUM,
        "atoms": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
        "points": {"type": "array", "items": _NUM}}, ["name", "type"])},
    "states": {"type": "array", "items": _obj({
        **_NAMED, "type": {"enum": ["maximally_mixed", "projector", "shell_pure"]},
        "observable": _STR, "shell": _STR, "seed": _INT}, ["name", "type"])},
    "metrics": {"type": "array", "items": _obj({
        "type": {"enum": ["band_metric", "cloned_band_metric", "autocorrelator", "weighted_average",
                          "eigenstate_deviation"]},
        "observable": _STR, "shell": _STR, "band": _STR, "weight": _STR, "state": _STR}, ["type", "observable"])},
    "echoes": {"type": "array", "items": _obj({
        "kind": {"enum": list(dyn.ECHO_KINDS)}, "observable": _STR, "times": _TIMES, "times2": _TIMES,
        "mixed": {"type": "boolean"}}, ["kind", "times"])},
    "verifiers": {"type": "array", "items": _obj({
        "claim": _STR, "observable": _STR, "shell": _STR, "band": _STR, "weight": _STR, "weight2": _STR,
        "state": _STR, "lambda": _NUM, "seeds": {"type": "array", "items": _INT},
        "target_band": _NUM}, ["claim"])},
    "output": _obj({"dir": _STR, "formats": {"type": "array", "items": {"enum": ["json", "csv"]}}}),
    "tolerances": _obj({"path": _NUM}),
}, ["model"])

CONFIG_CLAIMS = ("thm-5.2", "thm-5.3", "prop-5.4", "prop-6.1", "cor-6.2/6.3", "bulky-reverse",
                 "prop-4.1/4.2", "mazur-suzuki", "dual-unitary", "fuzz")


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"config invalid at {where}: {exc.message}") from None
    for sec in ("observables", "shells", "bands", "weights", "states"):
        names = [e["name"] for e in cfg.get(sec, [])]
        if len(set(names)) != len(names):
            raise InputError(f"duplicate names in {sec}")
    for v in cfg.get("verifiers", []):
        claim = v["claim"]
        if claim not in CONFIG_CLAIMS and claim not in FUZZ_CLAIMS:
            raise InputError(f"unknown claim {claim!r}")


def parse_times(spec) -> np.ndarray:
    """'start:step:stop' (inclusive of stop within rounding) or an explicit list."""
    if isinstance(spec, str):
        try:
            start, step, stop = (float(x) for x in spec.split(":"))
        except ValueError:
            raise InputError(f"time range must be start:step:stop, got {spec!r}") from None
        if step <= 0 or stop < start:
            raise InputError(f"bad time range {spec!r}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.asarray(spec, dtype=float)


@dataclass
class Context:
    """Named objects resolved from a validated config."""

    cfg: dict
    model: dict
    sys: SpectralSystem
    observables: dict = field(default_factory=dict)
    shells: dict = field(default_factory=dict)
    bands: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict)

    def get(self, section: str, name: str | None):
        table = getattr(self, section)
        if name is None:
            if len(table) == 1:
                return next(iter(table.values()))
            raise InputError(f"{section[:-1]} name required (have {sorted(table)})")
        if name not in table:
            raise InputError(f"unknown {section[:-1]} {name!r}")
        return table[name]


def build_context(cfg: dict) -> Context:
    validate_config(cfg)
    seed = int(cfg.get("seed", 0))
    m = cfg["model"]
    model = build_model(ModelSpec(m["family"], dict(m["params"]), int(m.get("seed", seed))))
    sys = diagonalize(model["matrix"], model["kind"])
    ctx = Context(cfg, model, sys)
    for o in cfg.get("observables", []):
        ctx.observables[o["name"]] = _observable(o, ctx, seed)
    for s in cfg.get("shells", []):
        ctx.shells[s["name"]] = _shell(s, sys)
    for b in cfg.get("bands", []):
        ctx.bands[b["name"]] = BandSpec(float(b["delta_e"]), b.get("circle_metric"))
    for w in cfg.get("weights", []):
        ctx.weights[w["name"]] = _weight(w)
    for st in cfg.get("states", []):
        ctx.states[st["name"]] = _state(st, ctx, seed)
    return ctx


def _observable(o: dict, ctx: Context, seed: int) -> np.ndarray:
    d = ctx.sys.dim
    t = o["type"]
    if t == "random_projector":
        return np.asarray(random_projector(d, int(o.get("rank", max(1, d // 4))), o.get("seed", seed)).matrix)
    if t == "site_projector":
        n = int(round(np.log2(d)))
        if 2**n != d:
            raise InputError("site projectors need a qubit model")
        return np.asarray(site_projector(n, int(o.get("site", 0)), int(o.get("bit", 0))).matrix)
    p = ctx.cfg["model"]["params"]
    if ctx.cfg["model"]["family"] != "charged":
        raise InputError(f"{t} observables need a charged model")
    if t == "charge":
        return np.asarray(ctx.model["charge"])
    mseed = int(ctx.cfg["model"].get("seed", seed))
    projs = block_projectors(int(p["n_blocks"]), p["block_dims"], mseed)
    k = int(o.get("block", 0))
    if not 0 <= k < len(projs):
        raise InputError("block index out of range")
    return projs[k]


def _shell(s: dict, sys: SpectralSystem) -> EnergyShell:
    keys = [k for k in ("window", "indices", "full", "central_fraction") if k in s]
    if len(keys) != 1:
        raise InputError(f"shell {s['name']!r} needs exactly one of window, indices, full, central_fraction")
    if "window" in s:
        lo, hi = s["window"]
        return EnergyShell.window(sys, lo, hi)
    if "indices" in s:
        sh = EnergyShell(tuple(s["indices"]))
        sh.check(sys.dim)
        return sh
    if "full" in s:
        return EnergyShell.full(sys.dim)
    f = float(s["central_fraction"])
    if not 0 < f <= 1:
        raise InputError("central_fraction must lie in (0, 1]")
    mid = float(np.median(sys.energies))
    half = f * sys.spread / 2
    return EnergyShell.window(sys, mid - half, mid + half)


def _weight(w: dict) -> WeightFunction:
    t = w["type"]
    if t == "fejer":
        return fejer_weight(int(w.get("n_atoms", 8)), float(w.get("spacing", 1.0)))
    if t == "pointset":
        if "points" not in w:
            raise InputError("pointset weight needs points")
        return cp_from_pointset(w["points"])
    if "atoms" not in w:
        raise InputError("generic weight needs atoms")
    a = np.asarray(w["atoms"], dtype=float)
    return generic_weight(a[:, 0], a[:, 1])


def _state(st: dict, ctx: Context, seed: int) -> DensityOperator:
    t = st["type"]
    if t == "maximally_mixed":
        return DensityOperator.maximally_mixed(ctx.sys.dim)
    if t == "projector":
        return DensityOperator.from_projector(ctx.get("observables", st.get("observable")))
    shell = ctx.get("shells", st.get("shell"))
    rng = np.random.default_rng([int(st.get("seed", seed)), 3])
    c = rng.normal(size=shell.d) + 1j * rng.normal(size=shell.d)
    return DensityOperator.pure(ctx.sys.eigenbasis[:, shell.index_array] @ c)


# ---------------------------------------------------------------- stages

def compute_metrics(ctx: Context, types: tuple | None = None, path: str = "both",
                    tol: float = dyn.PATH_TOL) -> list[dict]:
    out = []
    for i, m in enumerate(ctx.cfg.get("metrics", [])):
        if types is not None and m["type"] not in types:
            continue
        a = ctx.get("observables", m["observable"])
        t = m["type"]
        rec = {"index": i, "type": t, "observable": m["observable"]}
        if t in ("band_metric", "cloned_band_metric", "eigenstate_deviation"):
            shell = ctx.get("shells", m.get("shell"))
            thv = microcanonical_value(a, shell, ctx.sys)
            if t == "eigenstate_deviation":
                rec["value"] = float(np.max(met.eigenstate_deviations(ctx.sys, a, shell)))
                rec["context"] = {"shell": list(shell.indices), "thermal_value": thv}
            else:
                band = ctx.get("bands", m.get("band"))
                fn = met.band_metric if t == "band_metric" else met.cloned_band_metric
                rep = fn(ctx.sys, a, shell, band, thv)
                rec["value"] = rep.value
                rec["context"] = rep.to_json()
        elif t == "autocorrelator":
            w = ctx.get("weights", m.get("weight"))
            rec["value"] = dyn.weighted_autocorrelator(ctx.sys, a, w, path=path, tol=tol)
        else:
            w = ctx.get("weights", m.get("weight"))
            rho = ctx.get("states", m.get("state"))
            rec["value"] = dyn.weighted_average(ctx.sys, rho.matrix, a, w, path=path, tol=tol)
        out.append(rec)
    return out


def compute_echoes(ctx: Context, path: str = "both", tol: float = dyn.PATH_TOL) -> list[tuple]:
    rows = []
    for e in ctx.cfg.get("echoes", []):
        t1 = parse_times(e["times"])
        t2 = parse_times(e["times2"]) if "times2" in e else t1
        if t2.shape != t1.shape:
            raise InputError("times and times2 must have equal length")
        a = None if e["kind"] == "L_H" else ctx.get("observables", e.get("observable"))
        for x, y, v in dyn.echo_grid(ctx.sys, e["kind"], a, t1, t2, mixed=bool(e.get("mixed", False)),
                                     path=path, tol=tol):
            rows.append((e["kind"], x, y, v.real, v.imag))
    return rows


def run_verifiers(ctx: Context, claims: tuple | None = None) -> list[th.VerificationReport]:
    reports: list[th.VerificationReport] = []
    sys = ctx.sys
    for v in ctx.cfg.get("verifiers", []):
        claim = v["claim"]
        if claims is not None and claim not in claims and not (claim == "fuzz" and claims):
            continue
        lam = float(v.get("lambda", 0.1))
        if claim in FUZZ_CLAIMS and claim not in CONFIG_CLAIMS:
            for s in v.get("seeds", [0]):
                reports += run_claim(claim, int(s), lam)
            continue
        if claim == "fuzz":
            for c in FUZZ_CLAIMS:
                if claims is not None and c not in claims:
                    continue
                for s in v.get("seeds", [0]):
                    reports += run_claim(c, int(s), lam)
            continue
        if claim == "dual-unitary":
            circ = ctx.model.get("circuit")
            if circ is None:
                raise InputError("dual-unitary check needs a circuit model")
            reports.append(th.dual_unitary_check(circ, require_dual=False))
            continue
        a = ctx.get("observables", v.get("observable"))
        if claim == "thm-5.2":
            reports.append(th.verify_thermalization_bound(
                sys, a, ctx.get("states", v.get("state")).matrix, ctx.get("shells", v.get("shell")),
                ctx.get("bands", v.get("band")), ctx.get("weights", v.get("weight"))))
        elif claim == "thm-5.3":
            shell = ctx.get("shells", v.get("shell"))
            reports.append(th.verify_basis_fraction(sys, a, met.BasisFamily.eigenbasis(sys, shell), shell,
                                                    ctx.get("bands", v.get("band")),
                                                    ctx.get("weights", v.get("weight")), lam))
        elif claim == "prop-5.4":
            shell = ctx.get("shells", v.get("shell"))
            band = ctx.get("bands", v.get("band"))
            reports += th.verify_instantaneous_equilibrium(sys, a, shell, th.narrow_shell_within(sys, shell, band),
                                                           band, lam)
        elif claim == "prop-6.1":
            reports.append(th.verify_autocorr_to_band(sys, a, ctx.get("weights", v.get("weight")),
                                                      float(v["target_band"])))
        elif claim == "cor-6.2/6.3":
            reports += th.verify_bypass_chain(sys, a, met.BasisFamily.computational(sys.dim),
                                              ctx.get("weights", v.get("weight")),
                                              ctx.get("weights", v.get("weight2", v.get("weight"))),
                                              lam, float(v["target_band"]))
        elif claim == "bulky-reverse":
            reports.append(th.verify_bulky_reverse(sys, a, ctx.get("weights", v.get("weight")), lam))
        elif claim == "prop-4.1/4.2":
            reports += th.verify_eigenspace_propositions(sys, a, ctx.get("states", v.get("state")).matrix,
                                                         ctx.get("shells", v.get("shell")), lam=lam)
        elif claim == "mazur-suzuki":
            p = ctx.cfg["model"]["params"]
            if ctx.cfg["model"]["family"] != "charged":
                raise InputError("mazur-suzuki needs a charged model")
            mseed = int(ctx.cfg["model"].get("seed", ctx.cfg.get("seed", 0)))
            charges = block_projectors(int(p["n_blocks"]), p["block_dims"], mseed)
            reports.append(th.mazur_suzuki(sys, a, charges, ctx.get("weights", v.get("weight")),
                                           ctx.get("weights", v.get("weight2")), float(v["target_band"])))
    return reports


def summary_rows(metrics: list[dict], reports: list[th.VerificationReport]) -> list[tuple]:
    rows = []
    for m in metrics:
        rows.append(("metric", m["type"], m["observable"], m["value"], "", "", ""))
    for r in reports:
        rows.append(("report", r.claim_id, r.instance.get("seed", ""), r.lhs, r.rhs, r.margin, r.holds))
    return rows


SUMMARY_HEADER = ["item", "name", "ref", "value_or_lhs", "rhs", "margin", "holds"]


def run(config_path, out_dir=None) -> int:
    """Full pipeline; returns the exit status and writes the artifact tree."""
    cfg = tio.load_config(config_path)
    return run_config(cfg, out_dir)


def run_config(cfg: dict, out_dir=None) -> int:
    tio.thread_count()
    ctx = build_context(cfg)
    h = tio.config_hash(cfg)
    out = Path(out_dir or cfg.get("output", {}).get("dir", "thermalab_out"))
    out.mkdir(parents=True, exist_ok=True)
    tio.write_matrix(out / "model.bin", ctx.model["matrix"], ctx.model["kind"], meta=tio.stamp(h))
    tio.write_text(out / "spectrum.csv", tio.csv_text(["n", "E_n"], enumerate(ctx.sys.energies.tolist()), h))
    tol = float(cfg.get("tolerances", {}).get("path", dyn.PATH_TOL))
    status = EXIT_OK
    try:
        metrics = compute_metrics(ctx, tol=tol)
        echoes = compute_echoes(ctx, tol=tol)
    except PathDisagreement as exc:
        tio.write_text(out / "metrics.json", tio.json_text({"meta": tio.stamp(h), "error": str(exc)}))
        return EXIT_PATH
    reports = run_verifiers(ctx)
    tio.write_text(out / "metrics.json", tio.json_text({"meta": tio.stamp(h), "metrics": metrics}))
    tio.write_text(out / "echoes.csv", tio.csv_text(["kind", "t1", "t2", "re", "im"], echoes, h))
    tio.write_text(out / "reports.json", tio.json_text({"meta": tio.stamp(h),
                                                        "reports": [r.to_json() for r in reports]}))
    tio.write_text(out / "summary.csv", tio.csv_text(SUMMARY_HEADER, summary_rows(metrics, reports), h))
    if not all(r.holds for r in reports):
        status = EXIT_VERIFY
    return status


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ThermalabError):
        return exc.exit_code
    return 1
