"""Command-line orchestration.

Subcommands::

    mtriples triple   check|curvature   --config cfg.json [--out DIR]
    mtriples estimate verify            --config cfg.json [--out DIR]
    mtriples surface  synth|periods|singular
    mtriples probe    marty|zalcman|fujimoto|completeness
    mtriples example  optimal

The config is a JSON document mirroring the type schemas (see README).
Exit codes: 0 success / verdict pass, 2 mathematical verdict failed,
1 operational error.  stdout carries only the report path; a human
summary goes to stderr, and every failure is reported as a JSON error
object on stderr, never a bare stack trace.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .estimates import (
    Bounded,
    Omits,
    PropertyViolation,
    curvature_constant,
    fujimoto_ratio,
    marty_sup,
    optimal_example,
    property_check,
    verify_estimate,
    zalcman_rescale,
)
from .expr import ExtComplex, INFINITY, parse_mero, to_source
from .geodesy import (
    build_mesh,
    completeness_probe,
    write_edges_csv,
    write_nodes_csv,
)
from .mtriple import (
    Annulus,
    Disk,
    DomainSpec,
    MTriple,
    Rectangle,
    RegularityViolation,
    NonHolomorphic,
    TruncatedPlane,
    check_regularity,
    curvature,
    curvature_fd,
    make_triple,
)
from .reporting import ReportValueError, canonical_json, config_hash, emit_report
from .surfaces import (
    FlatFrontData,
    ImproperAffineData,
    MaxfaceData,
    MinimalData,
    export_mesh,
    gauss_normal_check,
    immersion_check,
    period_residuals,
    singular_locus,
    synth_flatfront,
    synth_improper_affine,
    synth_maxface,
    synth_minimal,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


class ConfigError(ValueError):
    """Schema violation; carries a JSON pointer to the offending field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer
        self.message = message


# ---------------------------------------------------------------------------
# Config decoding
# ---------------------------------------------------------------------------


def _need(cfg: dict, key: str, pointer: str):
    if key not in cfg:
        raise ConfigError(f"{pointer}/{key}", "missing required field")
    return cfg[key]


def _as_complex(value, pointer: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        try:
            return complex(float(value[0]), float(value[1]))
        except (TypeError, ValueError):
            pass
    raise ConfigError(pointer, "expected a number or an [re, im] pair")


def _as_ext(value, pointer: str) -> ExtComplex:
    if value in ("inf", "infinity"):
        return INFINITY
    return ExtComplex(_as_complex(value, pointer))


def _as_expr(value, pointer: str):
    if not isinstance(value, str):
        raise ConfigError(pointer, "expected an expression string")
    try:
        return parse_mero(value)
    except ValueError as exc:
        raise ConfigError(pointer, f"bad expression: {exc}") from exc


def domain_from_json(cfg, pointer: str) -> DomainSpec:
    if not isinstance(cfg, dict):
        raise ConfigError(pointer, "expected a domain object")
    kind = _need(cfg, "kind", pointer)
    punctures = tuple(
        _as_complex(p, f"{pointer}/punctures/{k}")
        for k, p in enumerate(cfg.get("punctures", []))
    )
    try:
        if kind == "disk":
            return Disk(
                _as_complex(cfg.get("center", 0), f"{pointer}/center"),
                float(_need(cfg, "radius", pointer)),
                punctures,
            )
        if kind == "annulus":
            return Annulus(
                _as_complex(cfg.get("center", 0), f"{pointer}/center"),
                float(_need(cfg, "r_inner", pointer)),
                float(_need(cfg, "r_outer", pointer)),
                punctures,
            )
        if kind == "rectangle":
            return Rectangle(
                _as_complex(_need(cfg, "corner_min", pointer), f"{pointer}/corner_min"),
                _as_complex(_need(cfg, "corner_max", pointer), f"{pointer}/corner_max"),
                punctures,
            )
        if kind == "truncated_plane":
            return TruncatedPlane(float(_need(cfg, "radius", pointer)), punctures)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(pointer, str(exc)) from exc
    raise ConfigError(f"{pointer}/kind", f"unknown domain kind {kind!r}")


def domain_to_json(domain: DomainSpec) -> dict:
    punct = [[p.real, p.imag] for p in domain.punctures]
    if isinstance(domain, Disk):
        return {
            "kind": "disk",
            "center": [domain.center.real, domain.center.imag],
            "radius": domain.radius,
            "punctures": punct,
        }
    if isinstance(domain, Annulus):
        return {
            "kind": "annulus",
            "center": [domain.center.real, domain.center.imag],
            "r_inner": domain.r_inner,
            "r_outer": domain.r_outer,
            "punctures": punct,
        }
    if isinstance(domain, Rectangle):
        return {
            "kind": "rectangle",
            "corner_min": [domain.corner_min.real, domain.corner_min.imag],
            "corner_max": [domain.corner_max.real, domain.corner_max.imag],
            "punctures": punct,
        }
    return {"kind": "truncated_plane", "radius": domain.radius, "punctures": punct}


def triple_from_json(cfg, pointer: str) -> MTriple:
    if not isinstance(cfg, dict):
        raise ConfigError(pointer, "expected a triple object")
    domain = domain_from_json(_need(cfg, "domain", pointer), f"{pointer}/domain")
    f = _as_expr(_need(cfg, "f", pointer), f"{pointer}/f")
    g = _as_expr(_need(cfg, "g", pointer), f"{pointer}/g")
    m = _need(cfg, "m", pointer)
    if not isinstance(m, int) or m < 1:
        raise ConfigError(f"{pointer}/m", "m must be a positive integer")
    return make_triple(domain, f, g, m)


def triple_to_json(t: MTriple) -> dict:
    return {
        "domain": domain_to_json(t.domain),
        "f": to_source(t.f),
        "g": to_source(t.g),
        "m": t.m,
    }


def property_from_json(cfg, pointer: str):
    if not isinstance(cfg, dict):
        raise ConfigError(pointer, "expected a property object")
    if "bounded" in cfg:
        try:
            return Bounded(float(cfg["bounded"]))
        except ValueError as exc:
            raise ConfigError(f"{pointer}/bounded", str(exc)) from exc
    if "omits" in cfg:
        vals = tuple(
            _as_ext(v, f"{pointer}/omits/{k}") for k, v in enumerate(cfg["omits"])
        )
        try:
            return Omits(vals)
        except ValueError as exc:
            raise ConfigError(f"{pointer}/omits", str(exc)) from exc
    raise ConfigError(pointer, "property must carry 'bounded' or 'omits'")


# ---------------------------------------------------------------------------
# Handlers: each returns (report_dict, verdict_ok, artifacts)
# ---------------------------------------------------------------------------


def _mesh_for(triple: MTriple, resolution: int, refine: bool = True):
    return build_mesh(triple.domain, triple.density, resolution, refine_punctures=refine)


def _handle_triple(action: str, cfg: dict, opts) -> tuple[dict, bool]:
    triple_cfg = _need(cfg, "triple", "")
    domain = domain_from_json(_need(triple_cfg, "domain", "/triple"), "/triple/domain")
    f = _as_expr(_need(triple_cfg, "f", "/triple"), "/triple/f")
    g = _as_expr(_need(triple_cfg, "g", "/triple"), "/triple/g")
    m = _need(triple_cfg, "m", "/triple")
    if not isinstance(m, int) or m < 1:
        raise ConfigError("/triple/m", "m must be a positive integer")
    report = check_regularity(domain, f, g, m)
    out = {"triple": triple_cfg, "regularity": report.to_json_dict()}
    ok = report.overall
    if action == "check":
        if ok:
            t = MTriple(domain, f, g, m, report)
            anchor = domain.anchor()
            out["curvature_at_anchor"] = curvature(t, anchor)
            out["anchor"] = [anchor.real, anchor.imag]
        return out, ok
    if action == "curvature":
        if not ok:
            return out, False
        t = MTriple(domain, f, g, m, report)
        pts = [_as_complex(p, f"/points/{k}") for k, p in enumerate(_need(cfg, "points", ""))]
        h = float(cfg.get("fd_step", 1e-3))
        rows = []
        for p in pts:
            rows.append(
                {
                    "point": [p.real, p.imag],
                    "curvature": curvature(t, p),
                    "curvature_fd": curvature_fd(t, p, h),
                }
            )
        out["points"] = rows
        out["fd_step"] = h
        return out, True
    raise ConfigError("/subcommand", f"unknown triple action {action!r}")


def _handle_estimate(action: str, cfg: dict, opts) -> tuple[dict, bool]:
    if action != "verify":
        raise ConfigError("/subcommand", f"unknown estimate action {action!r}")
    triple = triple_from_json(_need(cfg, "triple", ""), "/triple")
    prop = property_from_json(_need(cfg, "property", ""), "/property")
    resolution = int(opts.resolution or cfg.get("resolution", 200))
    # puncture rings act as ideal-boundary sources for the distance field;
    # the property check stands off from them on its own
    mesh = _mesh_for(triple, resolution, refine=True)
    prop_report = property_check(triple.g, prop, mesh, float(cfg.get("delta", 1e-3)))
    est = verify_estimate(triple, prop, mesh)
    c = curvature_constant(prop, triple.m)
    out = {
        "triple": triple_to_json(triple),
        "property": prop_report.to_json_dict(),
        "estimate": est.to_json_dict(),
        "constant": c,
    }
    return out, est.verdict != "fail"


_SURFACE_CLASSES = {
    "minimal": (MinimalData, ("f", "g"), synth_minimal),
    "maxface": (MaxfaceData, ("f", "g"), synth_maxface),
    "improper_affine": (ImproperAffineData, ("F", "G"), synth_improper_affine),
    "flat_front": (FlatFrontData, ("omega", "theta"), synth_flatfront),
}


def _surface_data(cfg: dict):
    cls_name = _need(cfg, "class", "")
    if cls_name not in _SURFACE_CLASSES:
        raise ConfigError("/class", f"unknown surface class {cls_name!r}")
    cls, fields, synth = _SURFACE_CLASSES[cls_name]
    domain = domain_from_json(_need(cfg, "domain", ""), "/domain")
    base = _as_complex(cfg.get("base_point", 0), "/base_point")
    exprs = [_as_expr(_need(cfg, name, ""), f"/{name}") for name in fields]
    try:
        data = cls(*exprs, domain, base)
    except (ValueError, RegularityViolation, NonHolomorphic) as exc:
        raise ConfigError("/" + fields[0], f"invalid surface data: {exc}") from exc
    return cls_name, data, synth


def _handle_surface(action: str, cfg: dict, opts) -> tuple[dict, bool]:
    cls_name, data, synth = _surface_data(cfg)
    out: dict = {"class": cls_name, "domain": domain_to_json(data.domain)}
    if action == "periods":
        cycles = _need(cfg, "cycles", "")
        rows = []
        for k, cyc in enumerate(cycles):
            pts = [_as_complex(p, f"/cycles/{k}/{j}") for j, p in enumerate(cyc)]
            rows.append(period_residuals(data, pts).to_json_dict())
        out["periods"] = rows
        return out, True
    resolution = int(opts.resolution or cfg.get("resolution", 120))
    ones = lambda zs: np.ones(np.shape(zs))
    mesh = build_mesh(data.domain, ones, resolution, refine_punctures=False)
    if action == "singular":
        if cls_name == "minimal":
            raise ConfigError("/class", "the minimal class has no singular locus")
        loci = singular_locus(data, mesh)
        out["singular_locus"] = [[[p.real, p.imag] for p in poly] for poly in loci]
        return out, True
    if action != "synth":
        raise ConfigError("/subcommand", f"unknown surface action {action!r}")
    if cls_name == "flat_front":
        step = float(cfg.get("step", 1e-3 * data.domain.diameter()))
        surface = synth(data, mesh, step)
    else:
        surface = synth(data, mesh)
    invariants = immersion_check(surface, data).to_json_dict()
    out["invariants"] = invariants
    if cls_name == "minimal":
        out["gauss_normal"] = gauss_normal_check(surface, data.g).to_json_dict()
    if cls_name != "minimal":
        loci = singular_locus(data, mesh)
        out["singular_locus"] = [[[p.real, p.imag] for p in poly] for poly in loci]
    else:
        out["singular_locus"] = []
    periods = []
    for k, cyc in enumerate(cfg.get("cycles", [])):
        pts = [_as_complex(p, f"/cycles/{k}/{j}") for j, p in enumerate(cyc)]
        periods.append(period_residuals(data, pts).to_json_dict())
    out["periods"] = periods
    outdir = Path(opts.out)
    formats = cfg.get("exports", ["obj", "ply", "csv"])
    for fmt in formats:
        target = {
            "obj": outdir / "mesh.obj",
            "ply": outdir / "mesh.ply",
            "csv": outdir / "vertices.csv",
            "json": outdir / "surface.json",
        }.get(fmt)
        if target is None:
            raise ConfigError("/exports", f"unknown export format {fmt!r}")
        export_mesh(surface, fmt, target)
    write_nodes_csv(mesh, outdir / "nodes.csv")
    write_edges_csv(mesh, outdir / "edges.csv")
    out["exports"] = sorted(str(f) for f in formats)
    return out, True


def _handle_probe(action: str, cfg: dict, opts) -> tuple[dict, bool]:
    if action == "marty":
        template = _need(cfg, "family", "")
        if not isinstance(template, str) or "{n}" not in template:
            raise ConfigError("/family", "expected an expression template with {n}")
        indices = [int(n) for n in _need(cfg, "indices", "")]
        region_cfg = _need(cfg, "region", "")
        center = _as_complex(region_cfg.get("center", 0), "/region/center")
        radius = float(_need(region_cfg, "radius", "/region"))
        grid = int(cfg.get("grid", 120))
        family = lambda n: parse_mero(template.replace("{n}", repr(n)))
        rep = marty_sup(family, indices, Disk(center, radius), grid, label=template)
        return {"marty": rep.to_json_dict()}, True
    if action == "zalcman":
        h = _as_expr(_need(cfg, "h", ""), "/h")
        grid = int(cfg.get("searchgrid", 300))
        res = zalcman_rescale(h, grid)
        return {"zalcman": res.to_json_dict()}, True
    if action == "fujimoto":
        f = _as_expr(_need(cfg, "f", ""), "/f")
        values = tuple(
            _as_ext(v, f"/omits/{k}") for k, v in enumerate(_need(cfg, "omits", ""))
        )
        eta = float(_need(cfg, "eta", ""))
        radius = float(_need(cfg, "radius", ""))
        resolution = int(opts.resolution or cfg.get("resolution", 150))
        ones = lambda zs: np.ones(np.shape(zs))
        mesh = build_mesh(Disk(0, radius), ones, resolution, refine_punctures=False)
        rep = fujimoto_ratio(f, values, eta, radius, mesh)
        return {"fujimoto": rep.to_json_dict()}, True
    if action == "completeness":
        triple = triple_from_json(_need(cfg, "triple", ""), "/triple")
        eps = [float(e) for e in _need(cfg, "eps_levels", "")]
        targets_cfg = cfg.get("targets")
        if targets_cfg is None:
            targets_cfg = [_need(cfg, "target", "")]
        targets = []
        for k, tg in enumerate(targets_cfg):
            if tg in ("inf", "infinity"):
                targets.append("infinity")
            else:
                targets.append(_as_complex(tg, f"/targets/{k}"))
        jobs = max(1, opts.jobs)
        if jobs > 1 and len(targets) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                reports = list(pool.map(lambda t: completeness_probe(triple, t, eps), targets))
        else:
            reports = [completeness_probe(triple, t, eps) for t in targets]
        return {
            "triple": triple_to_json(triple),
            "completeness": [r.to_json_dict() for r in reports],
        }, True
    raise ConfigError("/subcommand", f"unknown probe action {action!r}")


def _handle_example(action: str, cfg: dict, opts) -> tuple[dict, bool]:
    if action != "optimal":
        raise ConfigError("/subcommand", f"unknown example action {action!r}")
    m = _need(cfg, "m", "")
    if not isinstance(m, int) or m < 1:
        raise ConfigError("/m", "m must be a positive integer")
    alphas = [_as_complex(a, f"/alphas/{k}") for k, a in enumerate(_need(cfg, "alphas", ""))]
    radius = cfg.get("radius")
    try:
        triple = optimal_example(m, alphas, None if radius is None else float(radius))
    except ValueError as exc:
        raise ConfigError("/alphas", str(exc)) from exc
    omitted = [[a.real, a.imag] for a in alphas]
    out = {
        "triple": triple_to_json(triple),
        "regularity": triple.regularity.to_json_dict(),
        "omitted_values": omitted + ["infinity"],
        "omitted_count": len(alphas) + 1,
    }
    resolution = int(opts.resolution or cfg.get("resolution", 150))
    mesh = _mesh_for(triple, resolution, refine=False)
    prop = Omits(tuple([ExtComplex(a) for a in alphas] + [INFINITY]))
    out["omission_check"] = property_check(triple.g, prop, mesh).to_json_dict()
    return out, bool(out["omission_check"]["verdict"])


_HANDLERS = {
    "triple": _handle_triple,
    "estimate": _handle_estimate,
    "surface": _handle_surface,
    "probe": _handle_probe,
    "example": _handle_example,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtriples",
        description="Conformal-metric laboratory: curvature estimates, "
        "distance fields, omitted-value probes, surface synthesis.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="group", required=True)
    actions = {
        "triple": ["check", "curvature"],
        "estimate": ["verify"],
        "surface": ["synth", "periods", "singular"],
        "probe": ["marty", "zalcman", "fujimoto", "completeness"],
        "example": ["optimal"],
    }
    for group, acts in actions.items():
        p = sub.add_parser(group)
        p.add_argument("action", choices=acts)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="run directory (default from config)")
        p.add_argument("--resolution", type=int, default=None, help="mesh resolution override")
        p.add_argument("--seed", type=int, default=None, help="random seed override")
        p.add_argument("--jobs", type=int, default=1, help="max parallel workers for probes")
    return parser


def _error_object(kind: str, message: str, pointer: str | None = None) -> str:
    obj = {"error": {"kind": kind, "message": message}}
    if pointer is not None:
        obj["error"]["pointer"] = pointer
    return canonical_json(obj)


def main(argv=None) -> int:
    opts = _build_parser().parse_args(argv)
    try:
        raw = Path(opts.config).read_text()
    except OSError as exc:
        print(_error_object("io", f"cannot read config: {exc}"), file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(_error_object("config", f"config is not valid JSON: {exc}"), file=sys.stderr)
        return EXIT_ERROR
    if not isinstance(cfg, dict):
        print(_error_object("config", "config root must be an object", "/"), file=sys.stderr)
        return EXIT_ERROR

    if opts.out is None:
        opts.out = cfg.get("output_dir", "run")
    seed = opts.seed if opts.seed is not None else int(cfg.get("seed", 0))
    np.random.seed(seed)

    try:
        report, ok = _HANDLERS[opts.group](opts.action, cfg, opts)
    except ConfigError as exc:
        print(_error_object("schema", exc.message, exc.pointer), file=sys.stderr)
        return EXIT_ERROR
    except (PropertyViolation, RegularityViolation, NonHolomorphic) as exc:
        print(_error_object("verdict", str(exc)), file=sys.stderr)
        return EXIT_VERDICT
    except Exception as exc:  # noqa: BLE001 - the CLI contract forbids bare tracebacks
        detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
        print(_error_object(type(exc).__name__, detail), file=sys.stderr)
        return EXIT_ERROR

    report["tool"] = {"name": "mtriples", "version": __version__}
    report["config_sha256"] = config_hash(cfg)
    report["seed"] = seed
    report["subcommand"] = f"{opts.group} {opts.action}"
    try:
        path = emit_report(report, Path(opts.out) / "report.json")
    except ReportValueError as exc:
        print(_error_object("report", str(exc)), file=sys.stderr)
        return EXIT_ERROR
    print(path)
    verdict = "pass" if ok else "FAIL"
    print(f"mtriples {opts.group} {opts.action}: {verdict} -> {path}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
