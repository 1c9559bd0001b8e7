"""Surface synthesis from holomorphic representation data.

Four classes are synthesized over a meshed planar domain:

* minimal surfaces in Euclidean 3-space, vertices Re of the integral of
  ((1 - g^2), i(1 + g^2), 2g) f dz;
* maxfaces in Lorentz-Minkowski 3-space (first coordinate timelike),
  vertices Re of the integral of (-2g, 1 + g^2, i(1 - g^2)) f dz, singular
  exactly where |g| = 1;
* improper affine fronts in R^3 = C x R from a pair (F, G) of holomorphic
  functions, singular where |F'| = |G'|;
* flat fronts in hyperbolic 3-space via the matrix ODE L' = L @ [[0, th],
  [om, 0]] and the Hermitian projection psi = L L*, singular where the
  form ratio th/om has modulus 1.

Integration runs along a spanning tree of the mesh with adaptive Simpson
quadrature per edge, which keeps multivalued integrals single-valued by
construction; period defects then show up as seam mismatches on the
non-tree edges and as explicit cycle residuals.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .expr import (
    Const,
    EvalError,
    MeroExpr,
    Mul,
    Pow,
    Sub,
    derivative,
    eval_array,
    eval_array_checked,
    is_rational,
    parse_mero,
    rational_form,
)
from .geodesy import MeshedDomain, MeshError
from .mtriple import DomainSpec, MTriple, curvature_array, make_triple, metric_density_array
from .quadrature import QuadratureError, simpson_polyline, simpson_segments

__all__ = [
    "MinimalData",
    "MaxfaceData",
    "ImproperAffineData",
    "FlatFrontData",
    "WeierstrassData",
    "SurfaceMesh",
    "PeriodResidual",
    "ImmersionReport",
    "GaussNormalReport",
    "synth_minimal",
    "synth_maxface",
    "synth_improper_affine",
    "synth_flatfront",
    "period_residuals",
    "seam_mismatch",
    "immersion_check",
    "gauss_normal_check",
    "singular_locus",
    "export_mesh",
]

SINGULAR_FLAG_TOL = 1e-3


def _as_expr(e) -> MeroExpr:
    return parse_mero(e) if isinstance(e, str) else e


# ---------------------------------------------------------------------------
# Representation data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimalData:
    f: MeroExpr
    g: MeroExpr
    domain: DomainSpec
    base_point: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "f", _as_expr(self.f))
        object.__setattr__(self, "g", _as_expr(self.g))
        object.__setattr__(self, "base_point", complex(self.base_point))
        # raises on an irregular rational pair
        object.__setattr__(self, "_triple", make_triple(self.domain, self.f, self.g, 2))

    @property
    def triple(self) -> MTriple:
        return self._triple


@dataclass(frozen=True)
class MaxfaceData:
    f: MeroExpr
    g: MeroExpr
    domain: DomainSpec
    base_point: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "f", _as_expr(self.f))
        object.__setattr__(self, "g", _as_expr(self.g))
        object.__setattr__(self, "base_point", complex(self.base_point))
        object.__setattr__(self, "_triple", make_triple(self.domain, self.f, self.g, 2))
        if isinstance(self.g, Const) and abs(abs(self.g.value) - 1.0) < 1e-15:
            raise ValueError("|g| identically 1: the data is singular everywhere")

    @property
    def triple(self) -> MTriple:
        return self._triple


@dataclass(frozen=True)
class ImproperAffineData:
    F: MeroExpr
    G: MeroExpr
    domain: DomainSpec
    base_point: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "F", _as_expr(self.F))
        object.__setattr__(self, "G", _as_expr(self.G))
        object.__setattr__(self, "base_point", complex(self.base_point))
        for name, e in (("F", self.F), ("G", self.G)):
            _require_pole_free(e, self.domain, name)


@dataclass(frozen=True)
class FlatFrontData:
    omega: MeroExpr
    theta: MeroExpr
    domain: DomainSpec
    base_point: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "omega", _as_expr(self.omega))
        object.__setattr__(self, "theta", _as_expr(self.theta))
        object.__setattr__(self, "base_point", complex(self.base_point))
        for name, e in (("omega", self.omega), ("theta", self.theta)):
            _require_pole_free(e, self.domain, name)


WeierstrassData = MinimalData | MaxfaceData | ImproperAffineData | FlatFrontData


def _require_pole_free(e: MeroExpr, domain: DomainSpec, name: str) -> None:
    if not is_rational(e):
        return  # checked at runtime by quadrature failures
    _, den = rational_form(e)
    if den.size <= 1:
        return
    for r in np.roots(den):
        if domain.contains(complex(r), margin=1e-12) and domain.puncture_gap(complex(r)) > 1e-9:
            raise ValueError(f"{name} has a pole at {complex(r)} inside the domain")


# ---------------------------------------------------------------------------
# Surface container
# ---------------------------------------------------------------------------


@dataclass
class SurfaceMesh:
    vertices: np.ndarray  # (n, 3) real coordinates (ball model for H^3)
    faces: np.ndarray  # (m, 3) int
    mesh: MeshedDomain
    frame: str  # "euclidean" | "lorentzian" | "affine" | "hyperbolic"
    diagnostics: dict
    metadata: dict
    hermitian_psi: Optional[np.ndarray] = None  # (n, 2, 2) for H^3
    lift_matrices: Optional[np.ndarray] = None  # (n, 2, 2) holomorphic lift
    lagrangian_lift: Optional[np.ndarray] = None  # (n, 4) for improper affine

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class PeriodResidual:
    kind: str
    values: np.ndarray  # 3 reals / 1 real / 2x2 complex deviation
    norm: float

    def to_json_dict(self) -> dict:
        if self.kind == "flatfront":
            dev = self.values
            vals = [[dev[r, c].real, dev[r, c].imag] for r in range(2) for c in range(2)]
        else:
            vals = [float(v) for v in np.atleast_1d(self.values)]
        return {"kind": self.kind, "values": vals, "norm": self.norm}


# ---------------------------------------------------------------------------
# Spanning-tree integration
# ---------------------------------------------------------------------------


def _spanning_tree(mesh: MeshedDomain, root: int):
    """BFS tree over the mesh graph; returns parent array and visit order."""
    n = mesh.n_nodes
    parent = np.full(n, -1, dtype=int)
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    order = [root]
    queue = deque([root])
    adj = mesh.adjacency()
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                order.append(v)
                queue.append(v)
    if not np.all(seen):
        raise MeshError("mesh is not connected; cannot span it from the base point")
    return parent, np.asarray(order, dtype=int)


def _integrate_tree(mesh: MeshedDomain, root: int, integrands: Sequence, rel_tol: float = 1e-10):
    """Cumulative integrals of each integrand from the root to every node."""
    parent, order = _spanning_tree(mesh, root)
    child = order[1:]
    za = mesh.nodes[parent[child]]
    zb = mesh.nodes[child]
    out = np.zeros((len(integrands), mesh.n_nodes), dtype=complex)
    try:
        for k, fvec in enumerate(integrands):
            seg = simpson_segments(fvec, za, zb, rel_tol=rel_tol)
            acc = out[k]
            for c, v in zip(child, seg):
                acc[c] = acc[parent[c]] + v
    except QuadratureError as exc:
        raise EvalError(f"integrand pole on a tree edge: {exc}") from exc
    return out, parent


def _expr_vec(e: MeroExpr):
    return lambda zs: eval_array_checked(e, zs)


def _minimal_forms(f: MeroExpr, g: MeroExpr):
    one = Const(1 + 0j)
    i_const = Const(1j)
    g2 = Pow(g, 2)
    return (
        Mul(Sub(one, g2), f),
        Mul(Mul(i_const, _addexpr(one, g2)), f),
        Mul(Mul(Const(2 + 0j), g), f),
    )


def _maxface_forms(f: MeroExpr, g: MeroExpr):
    one = Const(1 + 0j)
    i_const = Const(1j)
    g2 = Pow(g, 2)
    return (
        Mul(Mul(Const(-2 + 0j), g), f),
        Mul(_addexpr(one, g2), f),
        Mul(Mul(i_const, Sub(one, g2)), f),
    )


def _addexpr(a: MeroExpr, b: MeroExpr) -> MeroExpr:
    from .expr import Add

    return Add(a, b)


def seam_mismatch(data: WeierstrassData, mesh: MeshedDomain, surface: "SurfaceMesh") -> float:
    """Largest defect across non-tree edges of the integrated vertex values.

    Zero (up to quadrature) exactly when all cycle periods vanish, so a
    multiply connected mesh closes iff the data satisfies the period
    condition; otherwise the defect equals the corresponding cycle residual.
    """
    root = mesh.node_nearest(data.base_point)
    parent, _ = _spanning_tree(mesh, root)
    tree_pairs = {(min(c, p), max(c, p)) for c, p in enumerate(parent) if p >= 0}
    non_tree = [
        (a, b)
        for a, b in zip(mesh.edges_i, mesh.edges_j)
        if (min(a, b), max(a, b)) not in tree_pairs
    ]
    if not non_tree:
        return 0.0
    ai = np.array([a for a, _ in non_tree])
    bi = np.array([b for _, b in non_tree])
    za, zb = mesh.nodes[ai], mesh.nodes[bi]

    if isinstance(data, MinimalData):
        forms = _minimal_forms(data.f, data.g)
        psi = surface.vertices
    elif isinstance(data, MaxfaceData):
        forms = _maxface_forms(data.f, data.g)
        psi = surface.vertices
    else:
        raise TypeError("seam mismatch is defined for the vector-valued classes")
    worst = 0.0
    for k, form in enumerate(forms):
        seg = simpson_segments(_expr_vec(form), za, zb, rel_tol=1e-10)
        defect = psi[ai, k] + seg.real - psi[bi, k]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def _base_vertex_diags(triple: MTriple, zs: np.ndarray) -> dict:
    return {
        "density": metric_density_array(triple, zs),
        "curvature": curvature_array(triple, zs),
    }


def synth_minimal(data: MinimalData, mesh: MeshedDomain) -> SurfaceMesh:
    """Integrate the Euclidean representation forms over the mesh."""
    root = mesh.node_nearest(data.base_point)
    forms = _minimal_forms(data.f, data.g)
    vals, _ = _integrate_tree(mesh, root, [_expr_vec(e) for e in forms])
    vertices = vals.real.T.copy()
    zs = mesh.nodes
    gv = eval_array(data.g, zs)
    diags = _base_vertex_diags(data.triple, zs)
    diags["gauss_map"] = gv
    diags["singular"] = np.zeros(len(zs), dtype=bool)
    return SurfaceMesh(
        vertices=vertices,
        faces=mesh.lattice_faces(),
        mesh=mesh,
        frame="euclidean",
        diagnostics=diags,
        metadata={"surface_class": "minimal", "base_point": [data.base_point.real, data.base_point.imag]},
    )


def synth_maxface(data: MaxfaceData, mesh: MeshedDomain) -> SurfaceMesh:
    """Integrate the Lorentzian representation forms; flag |g| = 1 vertices."""
    root = mesh.node_nearest(data.base_point)
    forms = _maxface_forms(data.f, data.g)
    vals, _ = _integrate_tree(mesh, root, [_expr_vec(e) for e in forms])
    vertices = vals.real.T.copy()
    zs = mesh.nodes
    gv = eval_array(data.g, zs)
    fv = eval_array_checked(data.f, zs)
    with np.errstate(all="ignore"):
        gm = np.abs(gv)
        dsigma = (1.0 + gm**2) * np.abs(fv)
        ds_induced = (1.0 - gm**2) ** 2 * np.abs(fv) ** 2
    singular = np.abs(gm - 1.0) < SINGULAR_FLAG_TOL
    diags = {
        "density": dsigma,
        "curvature": curvature_array(data.triple, zs),
        "gauss_map": gv,
        "singular": singular,
        "induced_metric_sq": ds_induced,
    }
    return SurfaceMesh(
        vertices=vertices,
        faces=mesh.lattice_faces(),
        mesh=mesh,
        frame="lorentzian",
        diagnostics=diags,
        metadata={
            "surface_class": "maxface",
            "lorentzian": True,
            "signature": "(-,+,+) with the first coordinate timelike",
            "riemannian_metric_note": "half of the stored density^2 equals the ambient-lift pullback",
            "base_point": [data.base_point.real, data.base_point.imag],
        },
    )


def synth_improper_affine(data: ImproperAffineData, mesh: MeshedDomain) -> SurfaceMesh:
    """Height-function synthesis from (F, G); vertices (Re x, Im x, height)."""
    zs = mesh.nodes
    Fp = derivative(data.F)
    Gp = derivative(data.G)
    Fv = eval_array_checked(data.F, zs)
    Gv = eval_array_checked(data.G, zs)
    Fpv = eval_array_checked(Fp, zs)
    Gpv = eval_array_checked(Gp, zs)
    tau_sq = 2.0 * (np.abs(Fpv) ** 2 + np.abs(Gpv) ** 2)
    if np.any(tau_sq <= 0.0):
        k = int(np.argmin(tau_sq))
        raise EvalError(f"degenerate node at {zs[k]}: both dF and dG vanish")
    root = mesh.node_nearest(data.base_point)
    fdg = Mul(data.F, Gp)
    ints, _ = _integrate_tree(mesh, root, [_expr_vec(fdg)])
    int_fdg = ints[0]
    x = Gv + np.conj(Fv)
    height = 0.5 * (np.abs(Gv) ** 2 - np.abs(Fv) ** 2) + (Gv * Fv - 2.0 * int_fdg).real
    vertices = np.column_stack([x.real, x.imag, height])
    with np.errstate(all="ignore"):
        nu = Fpv / Gpv
    affine_metric = np.abs(Gpv) ** 2 - np.abs(Fpv) ** 2
    singular = np.abs(np.abs(Fpv) - np.abs(Gpv)) < SINGULAR_FLAG_TOL * (
        np.abs(Fpv) + np.abs(Gpv)
    )
    # special Lagrangian lift in C^2 ~ R^4 whose induced metric is tau^2
    z1 = (Gv.real + Fv.real) + 1j * (Fv.real - Gv.real)
    z2 = (Gv.imag - Fv.imag) + 1j * (-Fv.imag - Gv.imag)
    lift = np.column_stack([z1.real, z1.imag, z2.real, z2.imag])
    diags = {
        "density": np.sqrt(tau_sq),
        "lagrangian_gauss_map": nu,
        "affine_metric": affine_metric,
        "tau_sq": tau_sq,
        "singular": singular,
    }
    return SurfaceMesh(
        vertices=vertices,
        faces=mesh.lattice_faces(),
        mesh=mesh,
        frame="affine",
        diagnostics=diags,
        metadata={
            "surface_class": "improper_affine",
            "base_point": [data.base_point.real, data.base_point.imag],
        },
        lagrangian_lift=lift,
    )


def _rk4_edge(L: np.ndarray, za: complex, zb: complex, omega, theta, step: float) -> np.ndarray:
    """March L' = L @ [[0, theta], [omega, 0]] along one straight segment."""
    length = abs(zb - za)
    n = max(1, int(math.ceil(length / step)))
    ts = np.linspace(0.0, 1.0, 2 * n + 1)
    pts = za + ts * (zb - za)
    om = eval_array_checked(omega, pts)
    th = eval_array_checked(theta, pts)
    if np.any(~np.isfinite(om)) or np.any(~np.isfinite(th)):
        raise EvalError("form coefficient has a pole on an integration edge")
    dz = (zb - za) / n

    def coeff(idx: int) -> np.ndarray:
        return np.array([[0.0, th[idx]], [om[idx], 0.0]], dtype=complex)

    out = L.copy()
    for k in range(n):
        a0 = coeff(2 * k)
        a1 = coeff(2 * k + 1)
        a2 = coeff(2 * k + 2)
        k1 = out @ a0
        k2 = (out + 0.5 * dz * k1) @ a1
        k3 = (out + 0.5 * dz * k2) @ a1
        k4 = (out + dz * k3) @ a2
        out = out + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out


def synth_flatfront(data: FlatFrontData, mesh: MeshedDomain, step: float) -> SurfaceMesh:
    """Integrate the Legendrian-lift ODE and project psi = L L* to the ball."""
    if step > 1e-2 * data.domain.diameter():
        raise ValueError("step must be at most 1% of the domain diameter")
    root = mesh.node_nearest(data.base_point)
    parent, order = _spanning_tree(mesh, root)
    n = mesh.n_nodes
    lifts = np.zeros((n, 2, 2), dtype=complex)
    lifts[root] = np.eye(2)
    for v in order[1:]:
        p = parent[v]
        lifts[v] = _rk4_edge(
            lifts[p], complex(mesh.nodes[p]), complex(mesh.nodes[v]), data.omega, data.theta, step
        )
    dets = lifts[:, 0, 0] * lifts[:, 1, 1] - lifts[:, 0, 1] * lifts[:, 1, 0]
    drift = float(np.max(np.abs(dets - 1.0)))
    if drift > 1e-6:
        raise EvalError(f"determinant drift {drift:.3e} exceeds 1e-6; reduce the step")
    psi = lifts @ np.conj(np.swapaxes(lifts, 1, 2))
    a = psi[:, 0, 0].real
    c = psi[:, 1, 1].real
    b = psi[:, 0, 1]
    x0 = 0.5 * (a + c)
    x1 = psi[:, 1, 0].real
    x2 = psi[:, 1, 0].imag
    x3 = 0.5 * (a - c)
    ball = np.column_stack([x1, x2, x3]) / (1.0 + x0)[:, None]
    zs = mesh.nodes
    om = eval_array_checked(data.omega, zs)
    th = eval_array_checked(data.theta, zs)
    with np.errstate(all="ignore"):
        rho = th / om
    density_sq = np.abs(om) ** 2 + np.abs(th) ** 2
    singular = np.abs(np.abs(rho) - 1.0) < SINGULAR_FLAG_TOL
    diags = {
        "density": np.sqrt(density_sq),
        "form_ratio": rho,
        "singular": singular,
        "det_drift": np.abs(dets - 1.0),
    }
    return SurfaceMesh(
        vertices=ball,
        faces=mesh.lattice_faces(),
        mesh=mesh,
        frame="hyperbolic",
        diagnostics=diags,
        metadata={
            "surface_class": "flat_front",
            "model": "Hermitian psi = L L*; Minkowski coords ((a+c)/2, Re b, Im b, (a-c)/2); ball projection x_i/(1+x0)",
            "lift_convention": "L^-1 dL off-diagonal with theta upper right and omega lower left",
            "max_det_drift": drift,
            "step": step,
            "base_point": [data.base_point.real, data.base_point.imag],
        },
        hermitian_psi=psi,
        lift_matrices=lifts,
    )


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------


def period_residuals(data: WeierstrassData, cycle: Sequence[complex], step: float = 1e-3) -> PeriodResidual:
    """Real parts of the cycle integrals (monodromy deviation for flat fronts)."""
    pts = np.asarray([complex(p) for p in cycle], dtype=complex)
    if abs(pts[0] - pts[-1]) > 1e-14:
        pts = np.append(pts, pts[0])
    if isinstance(data, MinimalData) or isinstance(data, MaxfaceData):
        forms = (
            _minimal_forms(data.f, data.g)
            if isinstance(data, MinimalData)
            else _maxface_forms(data.f, data.g)
        )
        try:
            vals = np.array(
                [simpson_polyline(_expr_vec(e), pts, rel_tol=1e-12).real for e in forms]
            )
        except QuadratureError as exc:
            raise EvalError(f"pole on the cycle: {exc}") from exc
        return PeriodResidual(
            kind="minimal" if isinstance(data, MinimalData) else "maxface",
            values=vals,
            norm=float(np.linalg.norm(vals)),
        )
    if isinstance(data, ImproperAffineData):
        fdg = Mul(data.F, derivative(data.G))
        try:
            val = simpson_polyline(_expr_vec(fdg), pts, rel_tol=1e-12).real
        except QuadratureError as exc:
            raise EvalError(f"pole on the cycle: {exc}") from exc
        return PeriodResidual(kind="improper_affine", values=np.array([val]), norm=abs(val))
    if isinstance(data, FlatFrontData):
        L = np.eye(2, dtype=complex)
        for a, b in zip(pts[:-1], pts[1:]):
            L = _rk4_edge(L, complex(a), complex(b), data.omega, data.theta, step)
        dev = L - np.eye(2)
        return PeriodResidual(kind="flatfront", values=dev, norm=float(np.max(np.abs(dev))))
    raise TypeError(f"unsupported data {data!r}")


# ---------------------------------------------------------------------------
# Finite-difference invariant checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImmersionReport:
    conformal_asymmetry: float  # | |psi_u|^2 - |psi_v|^2 | / lambda^2
    cross_term: float  # | <psi_u, psi_v> | / lambda^2
    metric_deviation: float  # | |psi_u|^2 - lambda^2 | / lambda^2
    laplacian: Optional[float]  # |FD Laplacian| / lambda^2 (minimal class)
    n_checked: int

    def to_json_dict(self) -> dict:
        return {
            "conformal_asymmetry": self.conformal_asymmetry,
            "cross_term": self.cross_term,
            "metric_deviation": self.metric_deviation,
            "laplacian": self.laplacian,
            "n_checked": self.n_checked,
        }


def _lattice_stencil(mesh: MeshedDomain, exclude: np.ndarray | None):
    """Vertex ids with axis neighbors at offsets 1 and 2 on the lattice.

    Order: center, e1, w1, n1, s1, e2, w2, n2, s2.
    """
    grid = mesh.lattice_id_grid()
    if grid.size == 0:
        raise MeshError("mesh carries no lattice for finite differences")
    c = grid[2:-2, 2:-2]
    ids = [
        c,
        grid[3:-1, 2:-2],
        grid[1:-3, 2:-2],
        grid[2:-2, 3:-1],
        grid[2:-2, 1:-3],
        grid[4:, 2:-2],
        grid[:-4, 2:-2],
        grid[2:-2, 4:],
        grid[2:-2, :-4],
    ]
    ok = np.ones(c.shape, dtype=bool)
    for a in ids:
        ok &= a >= 0
    ids = tuple(a[ok] for a in ids)
    if exclude is not None:
        keep = np.ones(len(ids[0]), dtype=bool)
        for a in ids:
            keep &= ~exclude[a]
        ids = tuple(a[keep] for a in ids)
    if len(ids[0]) == 0:
        raise MeshError("no interior vertices with a complete FD stencil")
    return ids


def _fd_first(coords: np.ndarray, p1, m1, p2, m2, h: float) -> np.ndarray:
    """Fourth-order central first derivative along one lattice axis."""
    return (-coords[p2] + 8.0 * coords[p1] - 8.0 * coords[m1] + coords[m2]) / (12.0 * h)


def _frame_product(frame: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if frame == "lorentzian":
        return -a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]
    return np.sum(a * b, axis=1)


def immersion_check(
    surface: SurfaceMesh,
    data: WeierstrassData,
    exclude: np.ndarray | None = None,
) -> ImmersionReport:
    """Conformality and metric identities via central differences on the lattice.

    The class-appropriate coordinates are used: ambient R^3 (Euclidean or
    Lorentzian), the R^4 Lagrangian lift for improper affine fronts, and the
    left-translated lift differential (Frobenius norm) for flat fronts.  The
    harmonicity residual is reported for the minimal class only.
    """
    mesh = surface.mesh
    if exclude is None:
        exclude = np.asarray(surface.diagnostics.get("singular", np.zeros(mesh.n_nodes, bool)))
    c, e1, w1, n1, s1, e2, w2, n2, s2 = _lattice_stencil(mesh, exclude)
    h = mesh.spacing

    if isinstance(data, ImproperAffineData):
        coords = surface.lagrangian_lift
        lam2 = surface.diagnostics["tau_sq"][c]
        frame = "euclidean"
    elif isinstance(data, FlatFrontData):
        lifts = surface.lift_matrices
        inv = np.linalg.inv(lifts[c])
        bu = inv @ _fd_first(lifts, e1, w1, e2, w2, h)
        bv = inv @ _fd_first(lifts, n1, s1, n2, s2, h)
        lam2 = surface.diagnostics["density"][c] ** 2
        uu = np.sum(np.abs(bu) ** 2, axis=(1, 2))
        vv = np.sum(np.abs(bv) ** 2, axis=(1, 2))
        uv = np.sum((bu * np.conj(bv)).real, axis=(1, 2))
        return ImmersionReport(
            conformal_asymmetry=float(np.max(np.abs(uu - vv) / lam2)),
            cross_term=float(np.max(np.abs(uv) / lam2)),
            metric_deviation=float(np.max(np.abs(uu - lam2) / lam2)),
            laplacian=None,
            n_checked=len(c),
        )
    else:
        coords = surface.vertices
        frame = surface.frame
        if isinstance(data, MinimalData):
            lam2 = surface.diagnostics["density"][c] ** 2
        else:
            lam2 = surface.diagnostics["induced_metric_sq"][c]

    pu = _fd_first(coords, e1, w1, e2, w2, h)
    pv = _fd_first(coords, n1, s1, n2, s2, h)
    uu = _frame_product(frame, pu, pu)
    vv = _frame_product(frame, pv, pv)
    uv = _frame_product(frame, pu, pv)
    lap = None
    if isinstance(data, MinimalData):
        lap_vec = (coords[e1] + coords[w1] + coords[n1] + coords[s1] - 4.0 * coords[c]) / (h * h)
        lap = float(np.max(np.linalg.norm(lap_vec, axis=1) / lam2))
    return ImmersionReport(
        conformal_asymmetry=float(np.max(np.abs(uu - vv) / lam2)),
        cross_term=float(np.max(np.abs(uv) / lam2)),
        metric_deviation=float(np.max(np.abs(uu - lam2) / lam2)),
        laplacian=lap,
        n_checked=len(c),
    )


@dataclass(frozen=True)
class GaussNormalReport:
    max_angle: float
    arg_max: complex
    n_checked: int

    def to_json_dict(self) -> dict:
        return {
            "max_angle": self.max_angle,
            "arg_max": [self.arg_max.real, self.arg_max.imag],
            "n_checked": self.n_checked,
        }


def gauss_normal_check(surface: SurfaceMesh, g: MeroExpr) -> GaussNormalReport:
    """Angle between the FD normal psi_u x psi_v and the projected Gauss map."""
    if surface.frame != "euclidean":
        raise ValueError("Gauss-normal comparison applies to the minimal class")
    mesh = surface.mesh
    c, e1, w1, n1, s1, e2, w2, n2, s2 = _lattice_stencil(mesh, None)
    h = mesh.spacing
    coords = surface.vertices
    pu = _fd_first(coords, e1, w1, e2, w2, h)
    pv = _fd_first(coords, n1, s1, n2, s2, h)
    normal = np.cross(pu, pv)
    norms = np.linalg.norm(normal, axis=1)
    if np.any(norms < 1e-12):
        raise EvalError("degenerate FD normal (metric density near zero)")
    normal /= norms[:, None]
    gv = eval_array(g, mesh.nodes[c])
    mag = np.abs(gv)
    finite = np.isfinite(mag)
    target = np.empty((len(c), 3))
    with np.errstate(all="ignore"):
        denom = mag**2 + 1.0
        target[finite, 0] = 2.0 * gv[finite].real / denom[finite]
        target[finite, 1] = 2.0 * gv[finite].imag / denom[finite]
        target[finite, 2] = (mag[finite] ** 2 - 1.0) / denom[finite]
    target[~finite] = (0.0, 0.0, 1.0)
    dots = np.clip(np.sum(normal * target, axis=1), -1.0, 1.0)
    angles = np.arccos(dots)
    k = int(np.argmax(angles))
    return GaussNormalReport(
        max_angle=float(angles[k]),
        arg_max=complex(mesh.nodes[c[k]]),
        n_checked=len(c),
    )


# ---------------------------------------------------------------------------
# Singular locus via marching squares
# ---------------------------------------------------------------------------


def _singular_indicator(data: WeierstrassData, zs: np.ndarray) -> np.ndarray:
    if isinstance(data, MaxfaceData):
        vals = np.abs(eval_array(data.g, zs))
        return vals - 1.0
    if isinstance(data, ImproperAffineData):
        fp = np.abs(eval_array(derivative(data.F), zs))
        gp = np.abs(eval_array(derivative(data.G), zs))
        return fp - gp
    if isinstance(data, FlatFrontData):
        om = eval_array(data.omega, zs)
        th = eval_array(data.theta, zs)
        with np.errstate(all="ignore"):
            return np.abs(th / om) - 1.0
    raise TypeError("singular locus applies to maxface, improper affine and flat front data")


def singular_locus(data: WeierstrassData, mesh: MeshedDomain) -> list:
    """Zero contour of the class indicator on the lattice, as polylines."""
    grid = mesh.lattice_id_grid()
    if grid.size == 0:
        raise MeshError("mesh carries no lattice")
    vals = np.full(grid.shape, np.nan)
    on = grid >= 0
    vals[on] = _singular_indicator(data, mesh.nodes[grid[on]])
    pos = np.full(grid.shape, np.nan + 1j * np.nan, dtype=complex)
    pos[on] = mesh.nodes[grid[on]]

    segments = []
    a = vals[:-1, :-1]
    b = vals[1:, :-1]
    c = vals[1:, 1:]
    d = vals[:-1, 1:]
    complete = np.isfinite(a) & np.isfinite(b) & np.isfinite(c) & np.isfinite(d)
    if np.any(on) and not np.all(np.isfinite(vals[on])):
        raise MeshError("singular indicator is not finite at a lattice corner")
    cells = np.argwhere(complete)
    for i, j in cells:
        corners = [pos[i, j], pos[i + 1, j], pos[i + 1, j + 1], pos[i, j + 1]]
        cv = [vals[i, j], vals[i + 1, j], vals[i + 1, j + 1], vals[i, j + 1]]
        code = sum(1 << k for k in range(4) if cv[k] > 0.0)
        if code in (0, 15):
            continue
        crossings = {}
        for k in range(4):
            k2 = (k + 1) % 4
            if (cv[k] > 0.0) != (cv[k2] > 0.0):
                t = cv[k] / (cv[k] - cv[k2])
                crossings[(k, k2)] = corners[k] + t * (corners[k2] - corners[k])
        pairs = _MS_EDGES[code]
        if code in (5, 10):
            center = np.mean(cv)
            pairs = _MS_EDGES[code if center > 0 else (15 - code)]
        for (e1, e2) in pairs:
            if e1 in crossings and e2 in crossings:
                segments.append((crossings[e1], crossings[e2]))
    return _chain_segments(segments)


# edge keys between corners k and k+1 (mod 4); lookup by sign code
_MS_EDGES = {
    1: [((0, 1), (3, 0))],
    2: [((0, 1), (1, 2))],
    3: [((1, 2), (3, 0))],
    4: [((1, 2), (2, 3))],
    5: [((0, 1), (1, 2)), ((2, 3), (3, 0))],
    6: [((0, 1), (2, 3))],
    7: [((2, 3), (3, 0))],
    8: [((2, 3), (3, 0))],
    9: [((0, 1), (2, 3))],
    10: [((0, 1), (3, 0)), ((1, 2), (2, 3))],
    11: [((1, 2), (2, 3))],
    12: [((1, 2), (3, 0))],
    13: [((0, 1), (1, 2))],
    14: [((0, 1), (3, 0))],
}


def _chain_segments(segments: list) -> list:
    """Greedy join of contour segments into polylines."""
    if not segments:
        return []

    def key(z: complex):
        return (round(z.real, 9), round(z.imag, 9))

    unused = list(range(len(segments)))
    by_end: dict = {}
    for idx, (p, q) in enumerate(segments):
        by_end.setdefault(key(p), []).append(idx)
        by_end.setdefault(key(q), []).append(idx)
    used = np.zeros(len(segments), dtype=bool)
    polylines = []
    for start in unused:
        if used[start]:
            continue
        used[start] = True
        p, q = segments[start]
        chain = deque([p, q])
        for tail, push in ((1, chain.append), (0, chain.appendleft)):
            while True:
                endpoint = chain[-1] if tail else chain[0]
                found = None
                for idx in by_end.get(key(endpoint), []):
                    if not used[idx]:
                        found = idx
                        break
                if found is None:
                    break
                used[found] = True
                a, b = segments[found]
                nxt = b if abs(a - endpoint) < abs(b - endpoint) else a
                push(nxt)
        polylines.append(np.asarray(chain, dtype=complex))
    return polylines


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _metadata_lines(surface: SurfaceMesh) -> list:
    out = []
    for k in sorted(surface.metadata):
        out.append(f"{k}: {json.dumps(surface.metadata[k], sort_keys=True)}")
    return out


def export_mesh(surface: SurfaceMesh, fmt: str, path) -> None:
    """Write OBJ/PLY geometry or CSV/JSON diagnostics; H^3 data gets a sidecar."""
    if surface.n_vertices == 0:
        raise ValueError("refusing to export an empty mesh")
    fmt = fmt.lower()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "obj":
        lines = [f"# {s}" for s in _metadata_lines(surface)]
        for v in surface.vertices:
            lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
        for f in surface.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "ply":
        header = ["ply", "format ascii 1.0"]
        header += [f"comment {s}" for s in _metadata_lines(surface)]
        header += [
            f"element vertex {surface.n_vertices}",
            "property float x",
            "property float y",
            "property float z",
            f"element face {len(surface.faces)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        body = [f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in surface.vertices]
        body += [f"3 {f[0]} {f[1]} {f[2]}" for f in surface.faces]
        path.write_text("\n".join(header + body) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["id", "u", "v", "x", "y", "z"]
            diag_cols = []
            for name in sorted(surface.diagnostics):
                arr = np.asarray(surface.diagnostics[name])
                if np.iscomplexobj(arr):
                    diag_cols.append((name + "_re", arr.real))
                    diag_cols.append((name + "_im", arr.imag))
                else:
                    diag_cols.append((name, arr))
            w.writerow(cols + [name for name, _ in diag_cols])
            zs = surface.mesh.nodes
            for k in range(surface.n_vertices):
                row = [
                    k,
                    repr(zs[k].real),
                    repr(zs[k].imag),
                    repr(float(surface.vertices[k, 0])),
                    repr(float(surface.vertices[k, 1])),
                    repr(float(surface.vertices[k, 2])),
                ]
                row += [repr(float(arr[k])) for _, arr in diag_cols]
                w.writerow(row)
    elif fmt == "json":
        payload = {
            "metadata": surface.metadata,
            "frame": surface.frame,
            "vertices": surface.vertices.tolist(),
            "faces": surface.faces.tolist(),
            "diagnostics": {
                name: (
                    [[v.real, v.imag] for v in np.asarray(arr)]
                    if np.iscomplexobj(np.asarray(arr))
                    else np.asarray(arr).astype(float).tolist()
                )
                for name, arr in surface.diagnostics.items()
            },
        }
        if surface.hermitian_psi is not None:
            payload["hermitian_psi"] = [
                [[x.real, x.imag] for x in m.ravel()] for m in surface.hermitian_psi
            ]
        path.write_text(json.dumps(payload, sort_keys=True))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if fmt in ("obj", "ply") and surface.hermitian_psi is not None:
        sidecar = path.with_suffix(path.suffix + ".hermitian.json")
        sidecar.write_text(
            json.dumps(
                {
                    "hermitian_psi": [
                        [[x.real, x.imag] for x in m.ravel()] for m in surface.hermitian_psi
                    ]
                },
                sort_keys=True,
            )
        )
