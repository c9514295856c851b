import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import unit_phase
from diffdomain.errors import ConfigurationError
from diffdomain.extension import constant_problem, get_problem
from diffdomain.fem import (CELL_EXTERIOR, CELL_INTERIOR, CellQuadrature, LoadAssembler, QuadratureRule,
                            StructuredGrid, assemble_load, assemble_weighted_mass, assemble_weighted_stiffness,
                            interpolate, write_coordinate_text)
from diffdomain.geometry import PhaseField, make_circle
from diffdomain.oracle import disk_monomial_integral
from diffdomain.solver import SolverOptions, SpdSolver

MASS_REF = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0
STIFF_REF = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]) / 6.0


class TestGrid:
    def test_layout(self):
        g = StructuredGrid(nx=4, ny=3)
        assert g.num_nodes == 20
        assert g.hx == 0.25 and g.hy == pytest.approx(1 / 3)
        xy = g.node_coordinates()
        np.testing.assert_allclose(xy[1] - xy[0], [0.25, 0.0])
        np.testing.assert_allclose(xy[5] - xy[0], [0.0, 1 / 3])
        np.testing.assert_array_equal(g.cells[0], [0, 1, 6, 5])

    @pytest.mark.parametrize("n", [0, 1])
    def test_minimum_size(self, n):
        with pytest.raises(ConfigurationError):
            StructuredGrid(nx=n, ny=4)

    def test_nearest_node(self):
        g = StructuredGrid(nx=8, ny=8)
        assert np.allclose(g.node_coordinates()[g.nearest_node((0.01, -0.02))], [0.0, 0.0])


class TestQuadrature:
    def test_weights_sum_to_one(self):
        for q in range(1, 7):
            assert QuadratureRule(q).weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_exactness_degree_seven(self):
        rule = QuadratureRule(4)
        x, y = rule.points[:, 0], rule.points[:, 1]
        got = np.sum(rule.weights * x**7 * y**7)
        assert abs(got - 1 / 64) / (1 / 64) <= 1e-13

    @pytest.mark.parametrize("q", [2, 3, 5, 6])
    def test_exactness_per_order(self, q):
        rule = QuadratureRule(q)
        k = 2 * q - 1
        x, y = rule.points[:, 0], rule.points[:, 1]
        assert np.sum(rule.weights * x**k * y**k) == pytest.approx(1 / (k + 1) ** 2, rel=1e-13)

    def test_partition_of_unity(self):
        rule = QuadratureRule(3)
        np.testing.assert_allclose(rule.basis.sum(axis=1), 1.0, atol=1e-15)
        np.testing.assert_allclose(rule.basis_gradient.sum(axis=1), 0.0, atol=1e-15)


def _element(M, grid, i=0):
    nodes = grid.cells[i]
    return M.toarray()[np.ix_(nodes, nodes)]


class TestElementMatrices:
    """omega == 1 reproduces the textbook Q1 matrices."""

    def test_mass_single_cell(self, circle):
        g = StructuredGrid(nx=2, ny=2)
        M = assemble_weighted_mass(g, unit_phase(circle))
        # corner cell 0: corner node 0 touches only this cell
        np.testing.assert_allclose(M[0, [0, 1, 4, 3]].toarray().ravel(), g.cell_area * MASS_REF[0], rtol=1e-14)

    def test_stiffness_single_cell(self, circle):
        g = StructuredGrid(nx=2, ny=2)
        K = assemble_weighted_stiffness(g, unit_phase(circle), constant_problem(A=1.0))
        np.testing.assert_allclose(K[0, [0, 1, 4, 3]].toarray().ravel(), STIFF_REF[0], rtol=1e-14)

    def test_rectangular_cell_mass(self, circle):
        g = StructuredGrid(nx=4, ny=2)
        M = assemble_weighted_mass(g, unit_phase(circle)).toarray()
        np.testing.assert_allclose(M[0, [0, 1, 6, 5]], g.cell_area * MASS_REF[0], rtol=1e-14)

    def test_full_assembly_matches_textbook(self, circle):
        g = StructuredGrid(nx=6, ny=5)
        M = assemble_weighted_mass(g, unit_phase(circle)).toarray()
        K = assemble_weighted_stiffness(g, unit_phase(circle), constant_problem(A=1.0)).toarray()
        Mref = np.zeros_like(M)
        Kref = np.zeros_like(K)
        # stiffness on a non-square cell
        a, b = g.hy / g.hx, g.hx / g.hy
        kx = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]]) / 6.0
        ky = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]]) / 6.0
        for nodes in g.cells:
            Mref[np.ix_(nodes, nodes)] += g.cell_area * MASS_REF
            Kref[np.ix_(nodes, nodes)] += a * kx + b * ky
        np.testing.assert_allclose(M, Mref, atol=1e-15)
        np.testing.assert_allclose(K, Kref, atol=1e-13)

    def test_interior_row_sum(self, circle):
        g = StructuredGrid(nx=8, ny=8)
        M = assemble_weighted_mass(g, unit_phase(circle))
        node = g.nearest_node((0.0, 0.0))
        assert M[node].sum() == pytest.approx(g.hx * g.hy, rel=1e-14)


@pytest.fixture(scope="module")
def system():
    g = StructuredGrid(nx=64, ny=64)
    pf = PhaseField(make_circle(), 1 / 16)
    cq = CellQuadrature(g, pf)
    spec = get_problem("example2")
    return g, pf, cq, assemble_weighted_mass(g, pf, cq=cq), assemble_weighted_stiffness(g, pf, spec, cq=cq)


class TestWeightedMatrices:
    def test_symmetry(self, system):
        _, _, _, M, K = system
        for A in (M, K):
            assert abs(A - A.T).max() <= 1e-12 * abs(A).max()

    def test_constants_in_kernel(self, system):
        _, _, _, _, K = system
        assert np.max(np.abs(K @ np.ones(K.shape[0]))) <= 1e-12 * abs(K).max()

    def test_mass_is_integral_of_floored_weight(self, system):
        g, pf, cq, M, _ = system
        load = LoadAssembler(cq, constant_problem(f=1.0))(0.0)
        assert M.sum() == pytest.approx(load.sum(), abs=2 * pf.floor * g.area)

    def test_linearity_in_diffusion(self, circle):
        g = StructuredGrid(nx=32, ny=32)
        pf = PhaseField(circle, 1 / 8)
        cq = CellQuadrature(g, pf)
        K1 = assemble_weighted_stiffness(g, pf, constant_problem(A=1.0), cq=cq)
        K3 = assemble_weighted_stiffness(g, pf, get_problem("example1"), cq=cq)
        np.testing.assert_allclose(K3.data, 3.0 * K1.data, rtol=1e-15)
        assert np.array_equal(K3.indices, K1.indices)

    def test_time_step_matrix_is_spd(self, system):
        g, _, _, M, K = system
        dt = 1 / 128
        A = 1.5 / dt * M + K
        b = np.sin(7 * g.node_coordinates()[:, 0]) + np.cos(3 * g.node_coordinates()[:, 1])
        res = SpdSolver(A, SolverOptions(tol=1e-12)).solve(b)
        ritz = res.ritz_values()
        assert ritz.min() > 0
        assert np.linalg.norm(A @ res.x - b) <= 1e-11 * np.linalg.norm(b)

    def test_cell_classes_are_consistent(self, system):
        g, pf, cq, _, _ = system
        centres = g.cell_origins() + 0.5 * np.array([g.hx, g.hy])
        d = pf.domain.signed_distance(centres)
        assert np.all(d[cq.cell_class == CELL_INTERIOR] < -pf.epsilon)
        assert np.all(d[cq.cell_class == CELL_EXTERIOR] > pf.epsilon)

    def test_fast_paths_match_direct_evaluation(self, circle):
        g = StructuredGrid(nx=48, ny=48)
        pf = PhaseField(circle, 1 / 16)
        cq = CellQuadrature(g, pf)
        for lo, hi in [(0, 500), (1000, 1300), (g.num_cells - 200, g.num_cells)]:
            X, Y = cq.coordinates(np.arange(lo, hi))
            direct = pf.floored_weight(np.stack([X, Y], axis=-1))
            np.testing.assert_allclose(cq.weights(lo, hi), direct, rtol=1e-12, atol=0)


class TestLoad:
    def test_total_mass_is_disk_area(self, circle):
        g = StructuredGrid(nx=256, ny=256)
        pf = PhaseField(circle, 1 / 32)
        M = assemble_weighted_mass(g, pf)
        assert abs(M.sum() - math.pi / 16) <= 5e-4

    def test_total_mass_closed_form(self, circle):
        # integral of omega over the plane is pi R^2 + pi^3 eps^2 / 108 for a disk
        g = StructuredGrid(nx=128, ny=128)
        eps = 1 / 16
        total = assemble_load(g, PhaseField(circle, eps), constant_problem(f=1.0)).sum()
        assert total == pytest.approx(math.pi / 16 + math.pi**3 * eps**2 / 108, abs=1e-8)

    def test_coarea_perimeter(self, circle):
        g = StructuredGrid(nx=256, ny=256)
        spec = constant_problem(g=1.0, modes={"g": "closest_point_constant"})
        total = assemble_load(g, PhaseField(circle, 1 / 32), spec).sum()
        assert abs(total - math.pi / 2) <= 2e-3

    def test_band_truncated_flux_misses_tanh_tail(self, circle):
        # cutting g at |d| = eps keeps the fraction tanh(3) of the perimeter
        g = StructuredGrid(nx=256, ny=256)
        spec = constant_problem(g=1.0, modes={"g": "zero_outside_band"})
        total = assemble_load(g, PhaseField(circle, 1 / 32), spec).sum()
        assert total == pytest.approx(math.pi / 2 * math.tanh(3), rel=2e-3)

    def test_boundary_measure_converges(self, circle):
        g = StructuredGrid(nx=512, ny=512)
        spec = constant_problem(g=1.0, modes={"g": "closest_point_constant"})
        errs = [abs(assemble_load(g, PhaseField(circle, e), spec).sum() - math.pi / 2)
                for e in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
        assert all(e <= 1e-3 for e in errs)
        assert errs[-1] <= errs[0]

    def test_zero_data_gives_zero_vector(self, circle):
        g = StructuredGrid(nx=16, ny=16)
        F = assemble_load(g, PhaseField(circle, 1 / 8), constant_problem())
        assert np.count_nonzero(F) == 0

    def test_separable_cache_matches_direct_path(self, flower):
        g = StructuredGrid(nx=48, ny=48)
        pf = PhaseField(flower, 1 / 16)
        cq = CellQuadrature(g, pf)
        spec = get_problem("example2")
        cached = LoadAssembler(cq, spec)
        direct = LoadAssembler(cq, spec.without_time_factor())
        for t in (0.0, 0.13, 0.5):
            np.testing.assert_allclose(cached(t), direct(t), rtol=1e-12, atol=1e-15)

    def test_polynomial_volume_integral(self, circle):
        g = StructuredGrid(nx=256, ny=256)
        pf = PhaseField(circle, 1 / 64)
        base = constant_problem()
        spec = base.__class__("r2", base.diffusion, lambda t, x, y: x * x + y * y, base.neumann, base.initial, 1.0)
        total = assemble_load(g, pf, spec).sum()
        exact = disk_monomial_integral(2, 0, 0.25) + disk_monomial_integral(0, 2, 0.25)
        assert abs(total - exact) <= 1e-4


@pytest.fixture(scope="module")
def setup():
    g = StructuredGrid(nx=200, ny=200)
    pf = PhaseField(make_circle(), 1 / 32)
    return g, pf, get_problem("example2")


class TestDeterminism:
    def _assemble(self, g, pf, spec, workers, bitwise):
        cq = CellQuadrature(g, pf, workers=workers, bitwise=bitwise)
        return (assemble_weighted_mass(g, pf, cq=cq, workers=workers, bitwise=bitwise),
                assemble_weighted_stiffness(g, pf, spec, cq=cq, workers=workers, bitwise=bitwise),
                LoadAssembler(cq, spec)(0.25))

    def test_bitwise_across_worker_counts(self, setup):
        ref = self._assemble(*setup, workers=1, bitwise=True)
        for w in (2, 3, 4):
            got = self._assemble(*setup, workers=w, bitwise=True)
            assert np.array_equal(ref[0].data, got[0].data)
            assert np.array_equal(ref[1].data, got[1].data)
            assert np.array_equal(ref[2], got[2])

    def test_close_without_bitwise_flag(self, setup):
        ref = self._assemble(*setup, workers=1, bitwise=True)
        got = self._assemble(*setup, workers=3, bitwise=False)
        for a, b in zip(ref[:2], got[:2]):
            assert abs(a - b).max() <= 1e-14 * abs(a).max()


def test_interpolate_reproduces_bilinear():
    g = StructuredGrid(nx=7, ny=9)
    xy = g.node_coordinates()

    def f(x, y):
        return 1.5 - 2 * x + 0.5 * y + 3 * x * y

    u = f(xy[:, 0], xy[:, 1])
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, size=(300, 2))
    np.testing.assert_allclose(interpolate(g, u, pts), f(pts[:, 0], pts[:, 1]), atol=1e-14)


def test_coordinate_text_export(tmp_path):
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    path = tmp_path / "a.txt"
    write_coordinate_text(A, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "% 2 2 4"
    assert lines[1:] == ["0 0 2", "0 1 -1", "1 0 -1", "1 1 2"]
