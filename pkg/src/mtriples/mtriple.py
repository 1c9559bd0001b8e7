"""Weierstrass data triples on planar domains.

A triple holds a holomorphic 1-form coefficient ``f``, a meromorphic ``g``
and a positive integer exponent ``m``; it induces the conformal metric with
density (1 + |g|^2)^(m/2) |f| and the closed-form Gaussian curvature

    K = -2 m |g'|^2 / ((1 + |g|^2)^(m+2) |f|^2).

The regularity condition couples the divisors: at each pole of g of order k
inside the domain, f must vanish to order exactly m*k, and f may vanish
nowhere else.  For rational data this is checked numerically from the root
catalogues of the numerator/denominator polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .expr import (
    EvalError,
    MeroExpr,
    derivative,
    eval_array,
    eval_ext,
    invert_expr,
    is_rational,
    local_order,
    parse_mero,
    rational_form,
    _mul,
    _pow,
)

__all__ = [
    "Disk",
    "Annulus",
    "Rectangle",
    "TruncatedPlane",
    "DomainSpec",
    "MTriple",
    "RegularityEntry",
    "RegularityReport",
    "RegularityViolation",
    "NonHolomorphic",
    "make_triple",
    "check_regularity",
    "metric_density",
    "metric_density_array",
    "curvature",
    "curvature_array",
    "curvature_fd",
]

_BIG_G = 1e6  # switch to the reciprocal route beyond this magnitude of g
_PUNCTURE_EPS = 1e-12


def _as_expr(e) -> MeroExpr:
    return parse_mero(e) if isinstance(e, str) else e


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


class _DomainBase:
    """Open planar region with a finite list of interior punctures."""

    punctures: tuple

    def _validate_punctures(self):
        ps = tuple(complex(p) for p in self.punctures)
        object.__setattr__(self, "punctures", ps)
        for idx, p in enumerate(ps):
            if not self.contains(p, margin=1e-9):
                raise ValueError(f"puncture {p} is not strictly inside the domain")
            for q in ps[idx + 1 :]:
                if abs(p - q) <= 1e-12:
                    raise ValueError(f"punctures {p} and {q} coincide")

    # subclasses implement: contains, boundary_gap, bbox, anchor, scale

    def diameter(self) -> float:
        x0, x1, y0, y1 = self.bbox()
        return math.hypot(x1 - x0, y1 - y0)

    def puncture_gap(self, z: complex) -> float:
        if not self.punctures:
            return math.inf
        return min(abs(z - p) for p in self.punctures)


@dataclass(frozen=True)
class Disk(_DomainBase):
    center: complex
    radius: float
    punctures: tuple = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        object.__setattr__(self, "center", complex(self.center))
        self._validate_punctures()

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return abs(z - self.center) < self.radius - margin

    def boundary_gap(self, z: complex) -> float:
        return self.radius - abs(z - self.center)

    def bbox(self):
        c, r = self.center, self.radius
        return (c.real - r, c.real + r, c.imag - r, c.imag + r)

    def anchor(self) -> complex:
        return self.center

    def scale(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Annulus(_DomainBase):
    center: complex
    r_inner: float
    r_outer: float
    punctures: tuple = ()

    def __post_init__(self):
        if not (0 < self.r_inner < self.r_outer):
            raise ValueError("annulus requires 0 < r_inner < r_outer")
        object.__setattr__(self, "center", complex(self.center))
        self._validate_punctures()

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        r = abs(z - self.center)
        return self.r_inner + margin < r < self.r_outer - margin

    def boundary_gap(self, z: complex) -> float:
        r = abs(z - self.center)
        return min(r - self.r_inner, self.r_outer - r)

    def bbox(self):
        c, r = self.center, self.r_outer
        return (c.real - r, c.real + r, c.imag - r, c.imag + r)

    def anchor(self) -> complex:
        return self.center + 0.5 * (self.r_inner + self.r_outer)

    def scale(self) -> float:
        return self.r_outer


@dataclass(frozen=True)
class Rectangle(_DomainBase):
    corner_min: complex
    corner_max: complex
    punctures: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "corner_min", complex(self.corner_min))
        object.__setattr__(self, "corner_max", complex(self.corner_max))
        if not (
            self.corner_min.real < self.corner_max.real
            and self.corner_min.imag < self.corner_max.imag
        ):
            raise ValueError("rectangle corners must span a nonempty region")
        self._validate_punctures()

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (
            self.corner_min.real + margin < z.real < self.corner_max.real - margin
            and self.corner_min.imag + margin < z.imag < self.corner_max.imag - margin
        )

    def boundary_gap(self, z: complex) -> float:
        return min(
            z.real - self.corner_min.real,
            self.corner_max.real - z.real,
            z.imag - self.corner_min.imag,
            self.corner_max.imag - z.imag,
        )

    def bbox(self):
        return (
            self.corner_min.real,
            self.corner_max.real,
            self.corner_min.imag,
            self.corner_max.imag,
        )

    def anchor(self) -> complex:
        return 0.5 * (self.corner_min + self.corner_max)

    def scale(self) -> float:
        return 0.5 * min(
            self.corner_max.real - self.corner_min.real,
            self.corner_max.imag - self.corner_min.imag,
        )


@dataclass(frozen=True)
class TruncatedPlane(_DomainBase):
    """The plane, truncated for numerics at a finite radius.

    The rim stands in for the ideal boundary at infinity: it is meshed as a
    boundary source and completeness probes toward infinity integrate past it.
    """

    radius: float
    punctures: tuple = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("truncation radius must be positive")
        self._validate_punctures()

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return abs(z) < self.radius - margin

    def boundary_gap(self, z: complex) -> float:
        return self.radius - abs(z)

    def bbox(self):
        r = self.radius
        return (-r, r, -r, r)

    def anchor(self) -> complex:
        return 0j

    def scale(self) -> float:
        return self.radius


DomainSpec = Union[Disk, Annulus, Rectangle, TruncatedPlane]


# ---------------------------------------------------------------------------
# Regularity
# ---------------------------------------------------------------------------


class RegularityViolation(ValueError):
    def __init__(self, message: str, point: complex):
        super().__init__(message)
        self.point = point


class NonHolomorphic(ValueError):
    def __init__(self, message: str, point: complex):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class RegularityEntry:
    point: complex
    f_order: int
    g_order: int
    verdict: str  # "ok" | "f-pole" | "order-mismatch" | "stray-f-zero"


@dataclass(frozen=True)
class RegularityReport:
    entries: tuple
    overall: bool
    checked: bool

    def to_json_dict(self) -> dict:
        return {
            "entries": [
                {
                    "point": [e.point.real, e.point.imag],
                    "f_order": e.f_order,
                    "g_order": e.g_order,
                    "verdict": e.verdict,
                }
                for e in self.entries
            ],
            "overall": self.overall,
            "checked": self.checked,
        }


def _poly_roots(coeffs: np.ndarray) -> np.ndarray:
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if c.size <= 1:
        return np.zeros(0, dtype=complex)
    return np.roots(c)


def _cluster(points: np.ndarray, tol: float = 6e-4) -> list[complex]:
    """Centroids of root clusters.

    np.roots scatters a multiplicity-k root over a radius ~eps^(1/k), but
    symmetrically, so the cluster mean recovers the root to far better
    accuracy than any single member.  Roots closer than ``tol`` that are
    genuinely distinct are outside the supported resolution of the order
    estimator and get merged.
    """
    groups: list[list[complex]] = []
    for p in points:
        for grp in groups:
            if abs(p - grp[0]) <= tol:
                grp.append(complex(p))
                break
        else:
            groups.append([complex(p)])
    return [complex(np.mean(g)) for g in groups]


def check_regularity(domain: DomainSpec, f: MeroExpr, g: MeroExpr, m: int) -> RegularityReport:
    """Compare divisor orders of rational f and g at every candidate point.

    Candidates are the clustered roots of the numerator/denominator
    polynomials of both expressions that lie strictly inside the domain
    (punctures excluded).  Non-rational data yields an unchecked report.
    """
    if not (is_rational(f) and is_rational(g)):
        return RegularityReport(entries=(), overall=True, checked=False)
    num_f, den_f = rational_form(f)
    num_g, den_g = rational_form(g)
    raw = np.concatenate(
        [_poly_roots(num_f), _poly_roots(den_f), _poly_roots(num_g), _poly_roots(den_g)]
    )
    candidates = [
        p
        for p in _cluster(raw)
        if domain.contains(p, margin=1e-12) and domain.puncture_gap(p) > 1e-9
    ]
    entries = []
    overall = True
    for p in sorted(candidates, key=lambda w: (w.real, w.imag)):
        ord_f = local_order(f, p)
        ord_g = local_order(g, p)
        if ord_f < 0:
            verdict = "f-pole"
        elif ord_g < 0 and ord_f != -m * ord_g:
            verdict = "order-mismatch"
        elif ord_g >= 0 and ord_f > 0:
            verdict = "stray-f-zero"
        else:
            verdict = "ok"
        overall = overall and verdict == "ok"
        entries.append(RegularityEntry(point=p, f_order=ord_f, g_order=ord_g, verdict=verdict))
    return RegularityReport(entries=tuple(entries), overall=overall, checked=True)


# ---------------------------------------------------------------------------
# The triple
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MTriple:
    domain: DomainSpec
    f: MeroExpr
    g: MeroExpr
    m: int
    regularity: RegularityReport = field(
        default=RegularityReport(entries=(), overall=True, checked=False)
    )

    def density(self, zs) -> np.ndarray:
        """Metric density as a vectorized callable (mesh-builder contract)."""
        return metric_density_array(self, zs)


def make_triple(domain: DomainSpec, f, g, m: int) -> MTriple:
    """Build a triple, enforcing regularity when f and g are rational."""
    if not (isinstance(m, int) and m >= 1):
        raise ValueError("m must be a positive integer")
    f = _as_expr(f)
    g = _as_expr(g)
    report = check_regularity(domain, f, g, m)
    if report.checked and not report.overall:
        for e in report.entries:
            if e.verdict == "f-pole":
                raise NonHolomorphic(
                    f"f has a pole of order {-e.f_order} at {e.point}", e.point
                )
        bad = next(e for e in report.entries if e.verdict != "ok")
        raise RegularityViolation(
            f"divisor mismatch at {bad.point}: ord f = {bad.f_order}, "
            f"ord g = {bad.g_order}, m = {m}",
            bad.point,
        )
    return MTriple(domain=domain, f=f, g=g, m=m, regularity=report)


def _guard_point(t: MTriple, z: complex):
    if t.domain.puncture_gap(z) < _PUNCTURE_EPS:
        raise EvalError(f"evaluation at a puncture: z={z}")


def _reduced_pair(t: MTriple) -> tuple[MeroExpr, MeroExpr]:
    """(1/g, g^m * f): the substitution that stays finite across poles of g."""
    return invert_expr(t.g), _mul(_pow(t.g, t.m), t.f)


def metric_density(t: MTriple, z: complex) -> float:
    """Metric density (1 + |g|^2)^(m/2) |f| at a point, finite across g-poles."""
    _guard_point(t, z)
    gv = eval_ext(t.g, z)
    if not gv.is_inf and abs(gv.value) <= _BIG_G:
        fv = eval_ext(t.f, z)
        if fv.is_inf:
            raise EvalError(f"f has a pole at z={z}")
        return (1.0 + abs(gv.value) ** 2) ** (t.m / 2.0) * abs(fv.value)
    ginv, fred = _reduced_pair(t)
    gv2 = eval_ext(ginv, z)
    fv2 = eval_ext(fred, z)
    if gv2.is_inf or fv2.is_inf:
        raise EvalError(f"density indeterminate at z={z}")
    return (1.0 + abs(gv2.value) ** 2) ** (t.m / 2.0) * abs(fv2.value)


def curvature(t: MTriple, z: complex) -> float:
    """Closed-form Gaussian curvature; nonpositive, zero where g' vanishes."""
    _guard_point(t, z)
    gv = eval_ext(t.g, z)
    if not gv.is_inf and abs(gv.value) <= _BIG_G:
        fv = eval_ext(t.f, z)
        gd = eval_ext(derivative(t.g), z)
        if fv.is_inf or gd.is_inf:
            raise EvalError(f"curvature indeterminate at z={z}")
        if fv.value == 0:
            raise EvalError(f"f vanishes at z={z}; metric is degenerate there")
        den = (1.0 + abs(gv.value) ** 2) ** (t.m + 2) * abs(fv.value) ** 2
        return -2.0 * t.m * abs(gd.value) ** 2 / den
    ginv, fred = _reduced_pair(t)
    gv2 = eval_ext(ginv, z)
    gd2 = eval_ext(derivative(ginv), z)
    fv2 = eval_ext(fred, z)
    if gv2.is_inf or gd2.is_inf or fv2.is_inf or fv2.value == 0:
        raise EvalError(f"curvature indeterminate at z={z}")
    den = (1.0 + abs(gv2.value) ** 2) ** (t.m + 2) * abs(fv2.value) ** 2
    return -2.0 * t.m * abs(gd2.value) ** 2 / den


def metric_density_array(t: MTriple, zs) -> np.ndarray:
    """Vectorized density with scalar repair at pole/limit sites."""
    zs = np.asarray(zs, dtype=complex)
    gv = eval_array(t.g, zs)
    fv = eval_array(t.f, zs)
    with np.errstate(all="ignore"):
        out = (1.0 + np.abs(gv) ** 2) ** (t.m / 2.0) * np.abs(fv)
        bad = ~np.isfinite(out) | (np.abs(gv) > _BIG_G)
    flat = out.ravel()
    zf = zs.ravel()
    for k in np.nonzero(bad.ravel())[0]:
        flat[k] = metric_density(t, complex(zf[k]))
    return out


def curvature_array(t: MTriple, zs) -> np.ndarray:
    """Vectorized curvature with scalar repair at pole/limit sites."""
    zs = np.asarray(zs, dtype=complex)
    gv = eval_array(t.g, zs)
    fv = eval_array(t.f, zs)
    gd = eval_array(derivative(t.g), zs)
    with np.errstate(all="ignore"):
        den = (1.0 + np.abs(gv) ** 2) ** (t.m + 2) * np.abs(fv) ** 2
        out = -2.0 * t.m * np.abs(gd) ** 2 / den
        bad = ~np.isfinite(out) | (np.abs(gv) > _BIG_G)
    flat = out.ravel()
    zf = zs.ravel()
    for k in np.nonzero(bad.ravel())[0]:
        flat[k] = curvature(t, complex(zf[k]))
    return out


def curvature_fd(t: MTriple, z: complex, h: float = 1e-3, richardson: bool = False) -> float:
    """Finite-difference curvature -(Laplacian log density)/density^2.

    Independent of the closed form: only the density enters.  Five-point
    stencil, O(h^2); with ``richardson`` the (h, h/2) extrapolation is O(h^4).
    """

    def one(hh: float) -> float:
        pts = [z, z + hh, z - hh, z + 1j * hh, z - 1j * hh]
        for p in pts:
            if not t.domain.contains(p):
                raise EvalError(f"FD stencil leaves the domain at {p}")
        lam = [metric_density(t, p) for p in pts]
        if min(lam) <= 1e-300:
            raise EvalError("density vanishes on the FD stencil")
        logs = [math.log(v) for v in lam]
        lap = (logs[1] + logs[2] + logs[3] + logs[4] - 4.0 * logs[0]) / (hh * hh)
        return -lap / (lam[0] * lam[0])

    if not richardson:
        return one(h)
    k1 = one(h)
    k2 = one(h / 2.0)
    return (4.0 * k2 - k1) / 3.0
