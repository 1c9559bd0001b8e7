"""Surface synthesis: representation oracles, periods, seams, invariants,
singular loci and exports."""

import json
import math

import numpy as np
import pytest

from mtriples.geodesy import build_mesh
from mtriples.mtriple import Annulus, Disk
from mtriples.quadrature import simpson_segments
from mtriples.surfaces import (
    FlatFrontData,
    ImproperAffineData,
    MaxfaceData,
    MinimalData,
    export_mesh,
    gauss_normal_check,
    immersion_check,
    period_residuals,
    seam_mismatch,
    singular_locus,
    synth_flatfront,
    synth_improper_affine,
    synth_maxface,
    synth_minimal,
)
from mtriples.expr import eval_array_checked, parse_mero

ONES = lambda zs: np.ones(np.shape(zs))


def enneper_exact(z: complex) -> np.ndarray:
    z = complex(z)
    return np.array([(z - z**3 / 3).real, (1j * (z + z**3 / 3)).real, (z * z).real])


@pytest.fixture(scope="module")
def enneper():
    dom = Disk(0, 1.2)
    mesh = build_mesh(dom, ONES, 48)
    data = MinimalData("1", "z", dom, 0j)
    return data, mesh, synth_minimal(data, mesh)


class TestMinimal:
    def test_base_point_is_origin(self, enneper):
        _, mesh, surf = enneper
        assert np.linalg.norm(surf.vertices[mesh.node_nearest(0)]) < 1e-12

    def test_antiderivative_oracle(self, enneper):
        _, mesh, surf = enneper
        for z in (1.0, 1j, 0.3 + 0.4j, -0.5 + 0.25j):
            k = mesh.node_nearest(z)
            assert np.max(np.abs(surf.vertices[k] - enneper_exact(mesh.nodes[k]))) < 1e-8

    def test_path_independence(self, enneper):
        # spanning-tree values match direct straight-segment integration
        data, mesh, surf = enneper
        rng = np.random.default_rng(1)
        ids = rng.choice(np.nonzero(mesh.interior)[0], 50, replace=False)
        from mtriples.surfaces import _minimal_forms

        forms = _minimal_forms(data.f, data.g)
        za = np.zeros(len(ids), dtype=complex)
        zb = mesh.nodes[ids]
        for k, form in enumerate(forms):
            direct = simpson_segments(
                lambda zs: eval_array_checked(form, zs), za, zb, rel_tol=1e-12
            ).real
            assert np.max(np.abs(direct - surf.vertices[ids, k])) < 1e-9

    def test_diagnostics_present(self, enneper):
        _, mesh, surf = enneper
        assert set(surf.diagnostics) >= {"density", "curvature", "gauss_map", "singular"}
        k = mesh.node_nearest(0)
        assert abs(surf.diagnostics["density"][k] - 1.0) < 1e-12
        assert abs(surf.diagnostics["curvature"][k] + 4.0) < 1e-10

    def test_immersion_invariants(self):
        dom = Disk(0, 1.2)
        mesh = build_mesh(dom, ONES, 240)  # spacing 1e-2
        data = MinimalData("1", "z", dom, 0j)
        surf = synth_minimal(data, mesh)
        rep = immersion_check(surf, data)
        assert rep.conformal_asymmetry <= 1e-3
        assert rep.cross_term <= 1e-3
        assert rep.metric_deviation <= 1e-3
        assert rep.laplacian <= 1e-3

    def test_constant_g_affine_image(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 60)
        data = MinimalData("1", "0.4", dom, 0j)
        surf = synth_minimal(data, mesh)
        rep = immersion_check(surf, data)
        assert rep.laplacian <= 1e-10
        centered = surf.vertices - surf.vertices.mean(axis=0)
        assert np.linalg.svd(centered, compute_uv=False)[2] < 1e-10

    def test_gauss_normal(self, enneper):
        data, mesh, surf = enneper
        rep = gauss_normal_check(surf, data.g)
        assert rep.max_angle <= 1e-2

    def test_gauss_normal_constant(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 60)
        data = MinimalData("1", "0.4", dom, 0j)
        surf = synth_minimal(data, mesh)
        rep = gauss_normal_check(surf, data.g)
        assert rep.max_angle < 1e-7

    def test_catenoid_normal_at_one(self):
        ann = Annulus(0, 0.5, 2.0)
        mesh = build_mesh(ann, ONES, 150)
        data = MinimalData("1/z^2", "z", ann, 1.0)
        surf = synth_minimal(data, mesh)
        rep = gauss_normal_check(surf, data.g)
        assert rep.max_angle <= 1e-2


class TestPeriods:
    CIRCLE = [complex(np.exp(2j * np.pi * k / 64)) for k in range(64)]

    def test_catenoid_closes(self):
        ann = Annulus(0, 0.5, 2.0)
        data = MinimalData("1/z^2", "z", ann, 1.0)
        res = period_residuals(data, self.CIRCLE)
        assert res.norm <= 1e-8

    def test_helicoid_period(self):
        ann = Annulus(0, 0.5, 2.0)
        data = MinimalData("i/z^2", "z", ann, 1.0)
        res = period_residuals(data, self.CIRCLE)
        # residue calculus: Re of (0, 0, 2i * 2 pi i) has third component -4 pi
        assert abs(abs(res.values[2]) - 4 * math.pi) < 1e-6
        assert abs(res.values[0]) < 1e-8 and abs(res.values[1]) < 1e-8

    def test_contractible_cycle_vanishes(self):
        dom = Disk(0, 2.0)
        data = MinimalData("1", "z", dom, 0j)
        square = [0.5 + 0.5j, -0.5 + 0.5j, -0.5 - 0.5j, 0.5 - 0.5j]
        res = period_residuals(data, square)
        assert res.norm < 1e-10

    def test_seam_mismatch_matches_periods(self):
        ann = Annulus(0, 0.5, 2.0)
        mesh = build_mesh(ann, ONES, 60)
        cat = MinimalData("1/z^2", "z", ann, 1.0)
        scat = synth_minimal(cat, mesh)
        assert seam_mismatch(cat, mesh, scat) <= 1e-8
        hel = MinimalData("i/z^2", "z", ann, 1.0)
        shel = synth_minimal(hel, mesh)
        assert abs(seam_mismatch(hel, mesh, shel) - 4 * math.pi) <= 1e-8

    def test_improper_affine_period(self):
        ann = Annulus(0, 0.5, 2.0)
        # F dG = (1/z) dz has residue 1: Re(2 pi i) = 0, single-valued
        data = ImproperAffineData("1/z", "z", ann, 1.0)
        res = period_residuals(data, self.CIRCLE)
        assert res.kind == "improper_affine"
        assert res.norm <= 1e-10

    def test_flatfront_monodromy_identity(self):
        dom = Disk(0, 2.0)
        data = FlatFrontData("1", "z", dom, 0j)
        res = period_residuals(data, [0.5, 0.5j, -0.5, -0.5j], step=1e-3)
        assert res.kind == "flatfront"
        assert res.norm < 1e-9


class TestMaxface:
    def test_singular_flags_on_unit_circle(self):
        dom = Disk(0, 2.0)
        mesh = build_mesh(dom, ONES, 120)
        data = MaxfaceData("1", "z", dom, 0j)
        surf = synth_maxface(data, mesh)
        flagged = mesh.nodes[surf.diagnostics["singular"]]
        assert len(flagged) > 0
        assert np.max(np.abs(np.abs(flagged) - 1.0)) < 1e-3

    def test_lorentz_isothermal_identity(self):
        dom = Disk(0, 2.0)
        mesh = build_mesh(dom, ONES, 400)
        data = MaxfaceData("1", "z", dom, 0j)
        surf = synth_maxface(data, mesh)
        band = np.abs(np.abs(mesh.nodes) - 1.0) <= 0.05
        rep = immersion_check(surf, data, exclude=band)
        assert rep.conformal_asymmetry <= 1e-3
        assert rep.cross_term <= 1e-3
        assert rep.metric_deviation <= 1e-3

    def test_constant_g_spacelike_plane(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 60)
        data = MaxfaceData("1", "0.3", dom, 0j)
        surf = synth_maxface(data, mesh)
        centered = surf.vertices - surf.vertices.mean(axis=0)
        assert np.linalg.svd(centered, compute_uv=False)[2] < 1e-10

    def test_unimodular_constant_rejected(self):
        with pytest.raises(ValueError):
            MaxfaceData("1", "i", Disk(0, 1.0), 0j)

    def test_locus_is_unit_circle(self):
        dom = Disk(0, 2.0)
        mesh = build_mesh(dom, ONES, 200)
        data = MaxfaceData("1", "z", dom, 0j)
        loci = singular_locus(data, mesh)
        pts = np.concatenate(loci)
        assert np.max(np.abs(np.abs(pts) - 1.0)) <= 4e-3  # coarser mesh here


class TestImproperAffine:
    def test_paraboloid(self):
        dom = Disk(0, 1.5)
        mesh = build_mesh(dom, ONES, 80)
        data = ImproperAffineData("0", "z", dom, 0j)
        surf = synth_improper_affine(data, mesh)
        zs = mesh.nodes
        assert np.max(np.abs(surf.vertices[:, 2] - np.abs(zs) ** 2 / 2)) < 1e-10
        assert np.max(np.abs(surf.vertices[:, 0] - zs.real)) < 1e-12
        assert np.max(np.abs(surf.diagnostics["lagrangian_gauss_map"])) == 0.0
        assert np.allclose(surf.diagnostics["tau_sq"], 2.0)
        assert np.allclose(surf.diagnostics["affine_metric"], 1.0)
        assert not np.any(surf.diagnostics["singular"])

    def test_lift_conformality(self):
        dom = Disk(0, 1.5)
        mesh = build_mesh(dom, ONES, 80)
        data = ImproperAffineData("z^2/4", "z", dom, 0j)
        surf = synth_improper_affine(data, mesh)
        rep = immersion_check(surf, data)
        assert rep.conformal_asymmetry <= 1e-6
        assert rep.metric_deviation <= 1e-6

    def test_everywhere_degenerate_flagged(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        surf = synth_improper_affine(ImproperAffineData("z", "z", dom, 0j), mesh)
        assert np.all(surf.diagnostics["singular"])

    def test_empty_locus_for_graph_case(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        assert singular_locus(ImproperAffineData("0", "z", dom, 0j), mesh) == []

    def test_pole_in_domain_rejected(self):
        with pytest.raises(ValueError):
            ImproperAffineData("1/z", "z", Disk(0, 1.0), 0.5)


class TestFlatFront:
    def test_horosphere_closed_form(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 60)
        data = FlatFrontData("1", "0", dom, 0j)
        surf = synth_flatfront(data, mesh, step=0.02)
        zs = mesh.nodes
        psi = surf.hermitian_psi
        assert np.max(np.abs(psi[:, 0, 0] - 1.0)) <= 1e-8
        assert np.max(np.abs(psi[:, 1, 0] - zs)) <= 1e-8
        assert np.max(np.abs(psi[:, 1, 1] - (1 + np.abs(zs) ** 2))) <= 1e-8
        assert surf.metadata["max_det_drift"] <= 1e-10

    def test_psi_in_hermitian_model(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        data = FlatFrontData("1", "z/2", dom, 0j)
        surf = synth_flatfront(data, mesh, step=0.02)
        psi = surf.hermitian_psi
        herm = np.max(np.abs(psi - np.conj(np.swapaxes(psi, 1, 2))))
        dets = psi[:, 0, 0] * psi[:, 1, 1] - psi[:, 0, 1] * psi[:, 1, 0]
        assert herm < 1e-10
        assert np.max(np.abs(dets - 1.0)) < 1e-6
        assert np.min(psi[:, 0, 0].real + psi[:, 1, 1].real) > 0
        assert np.max(np.linalg.norm(surf.vertices, axis=1)) < 1.0

    def test_det_drift_per_unit_arc(self):
        # traceless coefficient matrix keeps det constant; RK4 drift stays tiny
        from mtriples.surfaces import _rk4_edge

        L = np.eye(2, dtype=complex)
        L = _rk4_edge(L, 0j, 1 + 0j, parse_mero("1"), parse_mero("z"), 1e-3)
        det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
        assert abs(det - 1.0) <= 1e-10

    def test_everywhere_singular_when_forms_match(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        surf = synth_flatfront(FlatFrontData("1", "1", dom, 0j), mesh, step=0.02)
        assert np.all(surf.diagnostics["singular"])

    def test_no_singularities_when_theta_zero(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        surf = synth_flatfront(FlatFrontData("1", "0", dom, 0j), mesh, step=0.02)
        assert not np.any(surf.diagnostics["singular"])

    def test_locus_for_linear_ratio(self):
        dom = Disk(0, 2.0)
        mesh = build_mesh(dom, ONES, 200)
        loci = singular_locus(FlatFrontData("1", "z", dom, 0j), mesh)
        pts = np.concatenate(loci)
        assert np.max(np.abs(np.abs(pts) - 1.0)) <= 4e-3

    def test_lift_conformality(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 60)
        data = FlatFrontData("1", "z/2", dom, 0j)
        surf = synth_flatfront(data, mesh, step=0.01)
        rep = immersion_check(surf, data)
        assert rep.conformal_asymmetry <= 1e-5
        assert rep.metric_deviation <= 1e-5

    def test_step_cap_enforced(self):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 40)
        with pytest.raises(ValueError):
            synth_flatfront(FlatFrontData("1", "0", dom, 0j), mesh, step=0.5)


@pytest.fixture(scope="module")
def enneper_small():
    dom = Disk(0, 1.0)
    mesh = build_mesh(dom, ONES, 30)
    data = MinimalData("1", "z", dom, 0j)
    return synth_minimal(data, mesh)


class TestExport:
    def test_obj(self, enneper_small, tmp_path):
        p = tmp_path / "mesh.obj"
        export_mesh(enneper_small, "obj", p)
        lines = p.read_text().splitlines()
        nv = sum(1 for l in lines if l.startswith("v "))
        nf = sum(1 for l in lines if l.startswith("f "))
        assert nv == enneper_small.n_vertices
        assert nf == len(enneper_small.faces)
        # face indices are valid 1-based references
        for l in lines:
            if l.startswith("f "):
                assert all(1 <= int(tok) <= nv for tok in l.split()[1:])

    def test_ply(self, enneper_small, tmp_path):
        p = tmp_path / "mesh.ply"
        export_mesh(enneper_small, "ply", p)
        text = p.read_text().splitlines()
        assert text[0] == "ply"
        assert f"element vertex {enneper_small.n_vertices}" in text
        assert f"element face {len(enneper_small.faces)}" in text

    def test_csv_and_json(self, enneper_small, tmp_path):
        export_mesh(enneper_small, "csv", tmp_path / "verts.csv")
        header = (tmp_path / "verts.csv").read_text().splitlines()[0]
        assert header.startswith("id,u,v,x,y,z")
        assert "density" in header
        export_mesh(enneper_small, "json", tmp_path / "surf.json")
        payload = json.loads((tmp_path / "surf.json").read_text())
        assert len(payload["vertices"]) == enneper_small.n_vertices

    def test_maxface_metadata(self, tmp_path):
        dom = Disk(0, 1.5)
        mesh = build_mesh(dom, ONES, 30)
        surf = synth_maxface(MaxfaceData("1", "z", dom, 0j), mesh)
        p = tmp_path / "max.obj"
        export_mesh(surf, "obj", p)
        assert "# lorentzian: true" in p.read_text()

    def test_hyperbolic_sidecar_and_ball(self, tmp_path):
        dom = Disk(0, 1.0)
        mesh = build_mesh(dom, ONES, 30)
        surf = synth_flatfront(FlatFrontData("1", "0", dom, 0j), mesh, step=0.02)
        p = tmp_path / "front.obj"
        export_mesh(surf, "obj", p)
        sidecar = tmp_path / "front.obj.hermitian.json"
        assert sidecar.exists()
        payload = json.loads(sidecar.read_text())
        assert len(payload["hermitian_psi"]) == surf.n_vertices
        # ball-model vertices stay inside the unit ball
        assert np.max(np.linalg.norm(surf.vertices, axis=1)) < 1.0
