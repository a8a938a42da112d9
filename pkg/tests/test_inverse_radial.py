import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from memkernel.errors import ConfigurationError, ConvergenceError, DegeneracyError, ShapeError, SolvabilityError
from memkernel.forward import SpaceTimeField, manufacture
from memkernel.grid import (
    RadialGrid,
    TimeGrid,
    cumulative_from_left,
    cumulative_from_right,
    cumulative_matrix,
    integrate,
    quadrature_weights,
)
from memkernel.inverse_radial import (
    AssembledCoefficients,
    RadialInverseInput,
    apply_l1,
    assemble,
    auxiliary_solve,
    contraction_bound,
    g1_kernel,
    green_constant,
    green_function,
    identify,
    integration_by_parts_identity,
    l_bound,
    phi_profile,
    reconstruct_k,
    select_sigma,
    volterra_solve,
    weighted_norm,
)

t_, r_ = sp.symbols("t r", real=True)


def manufactured_input(n, k_expr="exp(-t)*(1 + r)", u_expr="r**2 + t*r", lam=1.0, dim=3, nt=None):
    grid, tgrid = RadialGrid.with_intervals(1.0, 2.0, n), TimeGrid(1.0, nt or n)
    k = SpaceTimeField.sample(sp.lambdify((t_, r_), sp.sympify(k_expr, locals={"t": t_, "r": r_}), "numpy"), grid, tgrid)
    u = SpaceTimeField.sample(sp.lambdify((t_, r_), sp.sympify(u_expr, locals={"t": t_, "r": r_}), "numpy"), grid, tgrid)
    f, g = manufacture(k, u, dim, lam)
    return RadialInverseInput(u=u, f_tilde=f, g=g, lam=lam, dimension=dim), k


def random_profile(rng, grid, offset=0.0):
    c = rng.uniform(-1, 1, 4)
    r = grid.nodes
    return offset + c[0] + c[1] * np.sin(2 * r + c[2]) + 0.5 * c[3] * r**2


def random_assembled(rng, n=33, nt=16):
    """Smooth random coefficients on fixed grids, bypassing data assembly."""
    grid, tgrid = RadialGrid.with_intervals(1.0, 2.0, n - 1), TimeGrid(1.0, nt)
    t = tgrid.nodes[:, None]
    alpha = random_profile(rng, grid)
    lam = random_profile(rng, grid, offset=3.0)
    beta = np.cos(t * rng.uniform(0, 3)) * random_profile(rng, grid)[None]
    gamma = np.exp(-t * rng.uniform(0, 2)) * random_profile(rng, grid)[None]
    w = quadrature_weights(grid, "trapezoid")
    exponent = cumulative_from_left(alpha, grid)
    return AssembledCoefficients(
        grid=grid,
        tgrid=tgrid,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        f1=np.zeros((nt + 1, n)),
        lam=lam,
        lam1=cumulative_from_right(lam, grid),
        kappa=1.0 / float(w @ lam),
        kappa1=float(w @ (lam * np.exp(-exponent))),
        du0=np.ones(n),
        exponent=exponent,
    )


class TestInput:
    def test_g_length(self):
        inp, _ = manufactured_input(8)
        with pytest.raises(ShapeError):
            RadialInverseInput(u=inp.u, f_tilde=inp.f_tilde, g=inp.g[:-1])

    def test_dimension(self):
        inp, _ = manufactured_input(8)
        with pytest.raises(ConfigurationError):
            RadialInverseInput(u=inp.u, f_tilde=inp.f_tilde, g=inp.g, dimension=1)

    def test_non_finite_lambda(self):
        inp, _ = manufactured_input(8)
        bad = RadialInverseInput(u=inp.u, f_tilde=inp.f_tilde, g=inp.g, lam=lambda r: np.where(r > 1.5, np.nan, 1.0))
        with pytest.raises(ShapeError):
            bad.lam_samples()


class TestAssemble:
    def test_unit_weight(self):
        asm = assemble(manufactured_input(16)[0])
        assert asm.kappa == pytest.approx(1.0)
        assert np.allclose(asm.lam1, 2.0 - asm.grid.nodes, atol=1e-14)

    def test_linear_state(self):
        asm = assemble(manufactured_input(16, u_expr="r + t*r**2")[0])
        assert np.allclose(asm.alpha, 2.0 / asm.grid.nodes, atol=1e-12)

    def test_degenerate_gradient_names_node(self):
        inp, _ = manufactured_input(16, u_expr="(r - 3/2)**2 + t*r")
        with pytest.raises(DegeneracyError, match=r"node 8 \(r = 1.5\)"):
            assemble(inp)

    def test_sign_change_between_nodes(self):
        inp, _ = manufactured_input(15, u_expr="(r - 3/2)**2 + t*r")
        with pytest.raises(DegeneracyError, match="changes sign"):
            assemble(inp)

    def test_zero_mean_weight(self):
        inp, _ = manufactured_input(16)
        bad = RadialInverseInput(u=inp.u, f_tilde=inp.f_tilde, g=inp.g, lam=lambda r: r - 1.5)
        with pytest.raises(SolvabilityError):
            assemble(bad)


class TestIdentity:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_integration_by_parts(self, seed):
        rng = np.random.default_rng(seed)
        grid = RadialGrid(1.0, 2.0, 201)
        alpha, lam = random_profile(rng, grid), random_profile(rng, grid, offset=3.0)
        lhs, rhs = integration_by_parts_identity(alpha, lam, grid, rule="simpson")
        kappa = 1.0 / integrate(lam, grid, rule="simpson")
        kappa1 = rhs / kappa
        assert abs(lhs - rhs) <= 1e-6 * abs(kappa * kappa1)

    def test_second_order_with_trapezoid(self):
        rng = np.random.default_rng(7)
        coeffs = rng.uniform(-1, 1, 8)
        errs = []
        for n in (16, 32, 64):
            grid = RadialGrid.with_intervals(1.0, 2.0, n)
            r = grid.nodes
            alpha = coeffs[0] + coeffs[1] * np.sin(2 * r)
            lam = 3 + coeffs[2] * np.cos(r)
            lhs, rhs = integration_by_parts_identity(alpha, lam, grid, rule="trapezoid")
            errs.append(abs(lhs - rhs))
        assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


class TestGreen:
    grid = RadialGrid(1.0, 2.0, 41)

    @pytest.mark.parametrize("method", ["closed_form", "discrete"])
    def test_zero_alpha(self, method):
        green = green_function(np.zeros(41), np.ones(41), self.grid, method=method)
        assert np.all(np.abs(green.matrix) <= 1e-14)
        f = np.sin(self.grid.nodes)
        assert np.allclose(auxiliary_solve(f, green), f)

    def test_zero_source(self):
        green = green_function(np.ones(41), np.ones(41), self.grid)
        assert np.all(auxiliary_solve(np.zeros((3, 41)), green) == 0.0)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bound(self, seed):
        rng = np.random.default_rng(seed)
        alpha, lam = random_profile(rng, self.grid), random_profile(rng, self.grid, offset=3.0)
        kappa1 = float(integrate(lam * np.exp(-cumulative_from_left(alpha, self.grid)), self.grid, rule="trapezoid"))
        c1 = green_constant(alpha, lam, kappa1, self.grid)
        for method in ("closed_form", "discrete"):
            g = green_function(alpha, lam, self.grid, kappa1=kappa1, method=method).matrix
            assert np.all(np.abs(g) <= c1 * np.abs(alpha)[:, None] * (1 + 1e-9) + 1e-14)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_discrete_solution_residual(self, seed):
        rng = np.random.default_rng(seed)
        grid = self.grid
        alpha, lam, f = (random_profile(rng, grid, offset=o) for o in (0.0, 3.0, 0.0))
        q = auxiliary_solve(f, green_function(alpha, lam, grid, method="discrete"))
        w = quadrature_weights(grid, "trapezoid")
        kappa = 1.0 / float(w @ lam)
        residual = q + alpha * (cumulative_matrix(grid) @ q) - kappa * alpha * float(w @ (cumulative_from_right(lam, grid) * q)) - f
        assert np.max(np.abs(residual)) <= 1e-10 * np.max(np.abs(f))

    def test_closed_form_matches_discrete(self):
        errs = []
        for n in (16, 32, 64):
            grid = RadialGrid.with_intervals(1.0, 2.0, n)
            r = grid.nodes
            alpha, lam, f = 1 + np.sin(3 * r), 2 + r, np.cos(2 * r)
            q = [auxiliary_solve(f, green_function(alpha, lam, grid, method=m)) for m in ("closed_form", "discrete")]
            errs.append(np.max(np.abs(q[0] - q[1])))
        assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            green_function(np.ones(41), np.ones(41), self.grid, method="spectral")

    def test_vanishing_kappa1(self):
        with pytest.raises(SolvabilityError):
            green_function(np.zeros(41), self.grid.nodes - 1.5, self.grid)


class TestG1:
    def test_no_time_dependence_gives_zero(self):
        asm = random_assembled(np.random.default_rng(0))
        asm = AssembledCoefficients(**{**asm.__dict__, "beta": np.zeros_like(asm.beta), "gamma": np.zeros_like(asm.gamma)})
        green = green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)
        assert np.all(g1_kernel(asm, green) == 0.0)

    def test_beta_only(self):
        asm = random_assembled(np.random.default_rng(1))
        asm = AssembledCoefficients(**{**asm.__dict__, "gamma": np.zeros_like(asm.gamma)})
        green = green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)
        expected = -green.matrix[None] * asm.beta[:, None, :]
        assert np.allclose(g1_kernel(asm, green), expected, atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_norm_below_l(self, seed):
        asm = random_assembled(np.random.default_rng(seed))
        green = green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)
        g1 = g1_kernel(asm, green)
        norms = np.max(np.abs(g1) @ quadrature_weights(asm.grid, "trapezoid"), axis=1)
        c1 = green_constant(asm.alpha, asm.lam, asm.kappa1, asm.grid)
        assert np.all(norms <= l_bound(asm, c1) * (1 + 1e-12))


class TestVolterra:
    def test_trivial_kernel(self):
        asm = random_assembled(np.random.default_rng(2))
        asm = AssembledCoefficients(**{**asm.__dict__, "beta": np.zeros_like(asm.beta)})
        g1 = np.zeros((asm.tgrid.n_nodes, asm.grid.n_nodes, asm.grid.n_nodes))
        w = np.random.default_rng(3).standard_normal(g1.shape[:2])
        for method in ("time_march", "picard"):
            sol = volterra_solve(w, asm, g1, method=method, sigma=1.0)
            assert np.allclose(sol.q, w)
        assert volterra_solve(w, asm, g1, method="picard", sigma=1.0).iterations == 1

    @pytest.mark.parametrize("seed", range(10))
    def test_measured_norm_below_bound(self, seed):
        rng = np.random.default_rng(seed)
        asm = random_assembled(rng)
        green = green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)
        g1 = g1_kernel(asm, green)
        phi = phi_profile(asm, g1)
        for sigma in (1.0, 4.0, 16.0):
            bound = contraction_bound(phi, asm.tgrid, sigma)
            for _ in range(3):
                q = rng.standard_normal((asm.tgrid.n_nodes, asm.grid.n_nodes))
                ratio = weighted_norm(apply_l1(q, asm, g1), asm.tgrid, sigma) / weighted_norm(q, asm.tgrid, sigma)
                assert ratio <= bound + 1e-10

    def test_bound_decreases_with_sigma(self):
        asm = random_assembled(np.random.default_rng(11))
        phi = phi_profile(asm, g1_kernel(asm, green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)))
        bounds = [contraction_bound(phi, asm.tgrid, s) for s in (0.0, 1.0, 2.0, 8.0, 64.0, 512.0)]
        assert all(a > b for a, b in zip(bounds, bounds[1:]))

    def test_selected_sigma_reaches_half(self):
        asm = random_assembled(np.random.default_rng(12))
        phi = phi_profile(asm, g1_kernel(asm, green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1)))
        sigma = select_sigma(phi, asm.tgrid)
        assert contraction_bound(phi, asm.tgrid, sigma) <= 0.5
        assert sigma == 1.0 or contraction_bound(phi, asm.tgrid, sigma / 2) > 0.5

    def test_sigma_floor(self):
        tg = TimeGrid(1.0, 4)
        with pytest.raises(ConvergenceError, match="refine"):
            select_sigma(np.full(5, 10.0), tg)

    def test_methods_agree(self):
        rng = np.random.default_rng(5)
        asm = random_assembled(rng)
        g1 = g1_kernel(asm, green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1))
        w = np.sin(asm.tgrid.nodes)[:, None] * random_profile(rng, asm.grid)[None]
        a = volterra_solve(w, asm, g1, method="time_march").q
        b = volterra_solve(w, asm, g1, method="picard").q
        assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))

    def test_picard_reports_contraction_on_failure(self):
        asm = random_assembled(np.random.default_rng(6))
        g1 = g1_kernel(asm, green_function(asm.alpha, asm.lam, asm.grid, kappa1=asm.kappa1))
        w = np.ones((asm.tgrid.n_nodes, asm.grid.n_nodes))
        with pytest.raises(ConvergenceError) as info:
            volterra_solve(w, asm, g1, method="picard", max_iter=2)
        assert info.value.contraction_factor is not None

    def test_unknown_method(self):
        asm = random_assembled(np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            volterra_solve(np.zeros((17, 33)), asm, np.zeros((17, 33, 33)), method="newton")


class TestReconstruct:
    def test_zero_derivative(self):
        grid = RadialGrid(1.0, 2.0, 11)
        g = np.array([1.0, 2.0, 3.0])
        k, h = reconstruct_k(np.zeros((3, 11)), g, 0.5, 2.0 - grid.nodes, grid)
        assert np.allclose(h, 0.5 * g) and np.allclose(k, 0.5 * g[:, None])

    def test_zero_data(self):
        inp, _ = manufactured_input(16)
        zero = RadialInverseInput(u=inp.u, f_tilde=SpaceTimeField.zeros(inp.grid, inp.tgrid), g=np.zeros(17))
        assert np.all(np.abs(identify(zero).k.values) <= 1e-14)


class TestIdentify:
    def test_errors_and_diagnostics(self):
        errs, first_kind = [], []
        for n in (16, 32, 64):
            inp, k = manufactured_input(n)
            res = identify(inp, cross_check=True)
            errs.append(np.max(np.abs(res.k.values - k.values)) / np.max(np.abs(k.values)))
            first_kind.append(res.diagnostics["first_kind_residual"])
            d = res.diagnostics
            assert d["constraint_ok"] and d["cross_method_difference"] <= 1e-8
            assert d["measured_contraction"] <= d["contraction_bound"] + 1e-10 and d["contraction_bound"] <= 0.5
            assert d["green_bound_ratio"] <= 1.0 and d["g1_over_l_max"] <= 1.0
        assert errs[-1] <= 0.02
        assert all(3 <= a / b <= 5 for a, b in zip(errs, errs[1:])), errs
        assert first_kind[0] / first_kind[1] > 3 and first_kind[1] / first_kind[2] > 3, first_kind

    def test_picard_route(self):
        inp, k = manufactured_input(32)
        res = identify(inp, method="picard", green_method="discrete")
        assert res.diagnostics["iterations"] <= 40
        assert np.max(np.abs(res.k.values - k.values)) / np.max(np.abs(k.values)) <= 0.02

    def test_two_dimensional_weighted(self):
        errs = []
        for n in (16, 32):
            inp, k = manufactured_input(n, k_expr="exp(-t)*(1 + r**2/2)", lam=lambda r: 1 + r / 2, dim=2)
            errs.append(np.max(np.abs(identify(inp).k.values - k.values)))
        assert errs[0] / errs[1] > 3

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            identify(manufactured_input(8)[0], method="newton")
