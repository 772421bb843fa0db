import numpy as np
import pytest

from geopref.equilibrium import (EquilibriumResult, borel_bracket, compute_phi,
                                 dustbin_V, dustbin_field, lyapunov_V,
                                 solve_dustbin, solve_nu, solve_two_point,
                                 vector_field_G)
from geopref.errors import (BoundaryPoint, DegenerateMass, NonConvergence,
                            ParameterOutOfRange, ZeroKernelRow)
from geopref.space import (ContinuousSpaceSpec, Domain, build_finite_space,
                           discretize, make_kernel, two_point_space)

# bisection root for p=0.7, a=0.5, frozen from an independent run of the
# closed-form balance equation
TWO_POINT_ROOT = 0.7327516793219888
TWO_POINT_PHI0 = 1.0446968328374158
TWO_POINT_PHI1 = 0.8774485121594056


def random_space(rng, n=None):
    if n is None:
        n = int(rng.integers(2, 9))
    mu = rng.dirichlet(np.ones(n))
    a = np.exp(rng.uniform(np.log(0.2), np.log(5.0), size=(n, n)))
    a = 0.5 * (a + a.T)
    return build_finite_space(mu, a)


def circle_dspace(n_cells, rate=1.0):
    dom = Domain.circle(1.0)
    kern = make_kernel(dom, "exp_decay", rate=rate)
    spec = ContinuousSpaceSpec(dom, lambda x: np.ones_like(x), kern)
    return discretize(spec, n_cells)


class TestSolveNu:
    def test_identities_on_random_spaces(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            sp = random_space(rng)
            r = solve_nu(sp, tol=1e-13)
            assert r.residual <= 1e-13
            gaps = r.identity_gaps(sp)
            assert abs(gaps["sum_nu_phi"] - 1.0) <= 1e-10
            assert gaps["max_phi_identity_gap"] <= 1e-8
            assert gaps["max_fixed_point_gap"] <= 1e-10
            assert r.nu.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(r.nu > 0)

    def test_indifferent_kernel_returns_newcomer_weights(self):
        mu = np.array([0.15, 0.25, 0.6])
        sp = build_finite_space(mu, np.ones((3, 3)))
        r = solve_nu(sp, tol=1e-13)
        assert np.max(np.abs(r.nu - mu)) <= 1e-12
        assert np.max(np.abs(r.phi - 1.0)) <= 1e-12

    def test_drift_vanishes_at_solution(self):
        rng = np.random.default_rng(3)
        sp = random_space(rng, n=5)
        r = solve_nu(sp, tol=1e-13)
        assert np.max(np.abs(vector_field_G(r.nu, sp))) <= 1e-13

    def test_solution_minimizes_potential(self):
        rng = np.random.default_rng(4)
        sp = random_space(rng, n=4)
        r = solve_nu(sp, tol=1e-12)
        v_star = lyapunov_V(r.nu, sp)
        for _ in range(25):
            y = rng.dirichlet(np.ones(4))
            assert lyapunov_V(y, sp) >= v_star - 1e-12

    def test_zero_kernel_row_rejected(self):
        mu = np.array([0.5, 0.5])
        a = np.array([[0.0, 0.0], [1.0, 1.0]])
        sp = build_finite_space(mu, a)
        with pytest.raises(ZeroKernelRow):
            solve_nu(sp)

    def test_zero_mass_rejected(self):
        sp = build_finite_space(np.array([1.0, 0.0]), np.ones((2, 2)))
        with pytest.raises(DegenerateMass):
            solve_nu(sp)

    def test_iteration_budget_raises(self):
        rng = np.random.default_rng(9)
        sp = random_space(rng, n=6)
        with pytest.raises(NonConvergence):
            solve_nu(sp, tol=1e-13, max_iter=2)

    def test_report_shape(self):
        sp = two_point_space(0.7, 0.5)
        r = solve_nu(sp)
        rep = r.to_report(sp)
        assert set(rep) == {"nu", "phi", "residual", "identities", "bounds"}
        assert set(rep["identities"]) == {"sum_nu_phi", "max_phi_identity_gap",
                                          "max_fixed_point_gap"}


class TestPotentialAndField:
    def test_boundary_rejected(self):
        sp = two_point_space(0.5, 1.0)
        with pytest.raises(BoundaryPoint):
            lyapunov_V(np.array([1.0, 0.0]), sp)
        with pytest.raises(BoundaryPoint):
            vector_field_G(np.array([0.0, 1.0]), sp)
        with pytest.raises(BoundaryPoint):
            compute_phi(sp, np.array([1.0, 0.0]))

    def test_directional_gradient_matches(self):
        # -G_i / y_i is the i-th partial of V; checked along random
        # directions with central differences
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 8))
            sp = random_space(rng, n=n)
            y = rng.dirichlet(np.ones(n)) * rng.uniform(0.5, 1.5)
            g = -vector_field_G(y, sp) / y
            for _ in range(50):
                u = rng.standard_normal(n)
                u /= np.linalg.norm(u)
                ana = float(g @ u)
                if abs(ana) >= 0.05:
                    break
            h = 1e-6 * (1.0 + float(np.linalg.norm(y)))
            num = (lyapunov_V(y + h * u, sp) - lyapunov_V(y - h * u, sp)) / (2 * h)
            worst = max(worst, abs(num - ana) / abs(ana))
        assert worst <= 1e-6

    def test_convex_along_segments(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            sp = random_space(rng, n=n)
            y1 = rng.dirichlet(np.ones(n))
            y2 = rng.dirichlet(np.ones(n))
            t = float(rng.uniform(0.2, 0.8))
            lhs = lyapunov_V(t * y1 + (1 - t) * y2, sp)
            rhs = t * lyapunov_V(y1, sp) + (1 - t) * lyapunov_V(y2, sp)
            assert lhs <= rhs + 1e-12


class TestTwoPoint:
    def test_frozen_root(self):
        assert solve_two_point(0.7, 0.5) == pytest.approx(TWO_POINT_ROOT,
                                                          abs=1e-12)

    def test_matches_general_solver_on_grid(self):
        for p in (0.1, 0.3, 0.5, 0.7, 0.9):
            for a in (0.25, 0.5, 2.0, 4.0):
                y0 = solve_two_point(p, a)
                r = solve_nu(two_point_space(p, a), tol=1e-13)
                assert abs(y0 - r.nu[0]) <= 1e-9

    def test_closed_form_fitness_matches(self):
        p, a = 0.7, 0.5
        y0 = solve_two_point(p, a)
        phi0 = p / (y0 + (1 - y0) * a) + (1 - p) * a / (1 - y0 + y0 * a)
        phi1 = p * a / (y0 + (1 - y0) * a) + (1 - p) / (1 - y0 + y0 * a)
        assert phi0 == pytest.approx(TWO_POINT_PHI0, abs=1e-12)
        assert phi1 == pytest.approx(TWO_POINT_PHI1, abs=1e-12)
        r = solve_nu(two_point_space(p, a), tol=1e-13)
        assert r.phi[0] == pytest.approx(phi0, abs=1e-9)
        assert r.phi[1] == pytest.approx(phi1, abs=1e-9)

    def test_symmetric_case_splits_evenly(self):
        assert solve_two_point(0.5, 0.3) == pytest.approx(0.5, abs=1e-12)

    def test_indifferent_kernel_returns_p(self):
        assert solve_two_point(0.7, 1.0) == pytest.approx(0.7, abs=1e-12)

    @pytest.mark.parametrize("p,a", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0),
                                     (0.5, -1.0)])
    def test_parameter_range(self, p, a):
        with pytest.raises(ParameterOutOfRange):
            solve_two_point(p, a)


class TestDustbin:
    def test_single_cell_closed_form(self):
        d = circle_dspace(1)
        eq = solve_dustbin(d, tol=1e-13)
        g = d.gamma
        assert eq.nu[0] == pytest.approx((1 - g) / (2 - g), abs=1e-9)
        assert eq.nu[1] == pytest.approx(1 / (2 - g), abs=1e-9)
        assert np.max(np.abs(eq.phi - g)) <= 1e-9

    @pytest.mark.parametrize("n_cells", [4, 8, 16])
    def test_bounds_hold(self, n_cells):
        d = circle_dspace(n_cells)
        eq = solve_dustbin(d, tol=1e-12)
        for name, (value, limit, ok) in eq.check_bounds().items():
            assert ok, f"{name}: {value} vs {limit}"

    def test_mass_conservation_identities(self):
        d = circle_dspace(8)
        eq = solve_dustbin(d, tol=1e-12)
        assert eq.nu.sum() == pytest.approx(1.0, abs=1e-12)
        # bin aside, accepted mass scales with the acceptance ratio
        assert float(eq.nu @ eq.phi) == pytest.approx(d.gamma, abs=1e-10)
        assert eq.nu[0] == pytest.approx((1 - d.gamma) / (2 - eq.phi[0]),
                                         abs=1e-10)

    def test_unit_acceptance_reduces_to_plain_solver(self):
        dom = Domain.circle(1.0)
        kern = make_kernel(dom, "constant", value=0.7)
        spec = ContinuousSpaceSpec(dom, lambda x: np.ones_like(x), kern)
        d = discretize(spec, 5)
        assert d.gamma == pytest.approx(1.0)
        eq = solve_dustbin(d, tol=1e-12)
        plain = solve_nu(d.finite_space("sup"), tol=1e-13)
        assert eq.nu[0] <= 1e-10
        assert np.max(np.abs(eq.nu[1:] - plain.nu)) <= 1e-9

    def test_drift_and_potential_consistent(self):
        # directional finite differences of the bin-extended potential
        d = circle_dspace(4)
        mu_ext, a_ext = d.dustbin_matrices()
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(100):
            y = rng.dirichlet(np.ones(5)) * rng.uniform(0.5, 1.5)
            g = -dustbin_field(y, mu_ext, a_ext, d.gamma) / y
            for _ in range(50):
                u = rng.standard_normal(5)
                u /= np.linalg.norm(u)
                ana = float(g @ u)
                if abs(ana) >= 0.05:
                    break
            h = 1e-6 * (1.0 + float(np.linalg.norm(y)))
            num = (dustbin_V(y + h * u, mu_ext, a_ext, d.gamma)
                   - dustbin_V(y - h * u, mu_ext, a_ext, d.gamma)) / (2 * h)
            worst = max(worst, abs(num - ana) / abs(ana))
        assert worst <= 1e-6

    def test_report_shape(self):
        d = circle_dspace(4)
        eq = solve_dustbin(d)
        rep = eq.to_report()
        assert "nu" in rep and "phi" in rep and "bounds" in rep


class TestBorelBracket:
    def test_semicircle_brackets_contain_truth(self):
        # uniform density: the true edge-end mass of any semicircle is 1/2
        d = circle_dspace(8)
        eq = solve_dustbin(d, tol=1e-12)
        for start in range(8):
            cells = [(start + k) % 8 for k in range(4)]
            lo, hi = borel_bracket(d, cells, eq)
            assert lo <= 0.5 <= hi
            assert hi - lo == pytest.approx(
                (1 - d.gamma) * (1 + d.t) / (2 * d.t))

    def test_bracket_width_shrinks_with_refinement(self):
        widths = []
        for n in (8, 16, 32):
            d = circle_dspace(n)
            lo, hi = borel_bracket(d, [0], solve_dustbin(d))
            widths.append(hi - lo)
        assert widths[0] > widths[1] > widths[2]

    def test_unit_acceptance_gives_zero_slack(self):
        dom = Domain.circle(1.0)
        kern = make_kernel(dom, "constant", value=1.0)
        spec = ContinuousSpaceSpec(dom, lambda x: np.ones_like(x), kern)
        d = discretize(spec, 4)
        lo, hi = borel_bracket(d, [0, 1])
        assert hi - lo == pytest.approx(0.0, abs=1e-15)
        assert lo == pytest.approx(0.5, abs=1e-9)

    def test_bad_subset_rejected(self):
        d = circle_dspace(4)
        with pytest.raises(ParameterOutOfRange):
            borel_bracket(d, [0, 4])
        with pytest.raises(ParameterOutOfRange):
            borel_bracket(d, [-1])
