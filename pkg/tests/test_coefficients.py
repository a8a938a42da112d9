import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from memkernel.coefficients import (
    CoefficientSpec,
    build_coefficients,
    conormal_vector,
    ellipticity_bounds,
    ellipticity_margin,
    polynomial_term,
    radial_trace,
    spherical_rep,
    trace_profile,
)
from memkernel.errors import AdmissibilityError, ConfigurationError, UnsupportedFamilyError
from memkernel.grid import AngularGrid, RadialGrid, ShellGrid

from symbolic import X, abcd_tensor, lambdify_radial, random_case

R = sp.Symbol("R", positive=True)


def shell_points(rng, dim, n, r1=1.0, r2=2.0):
    d = rng.standard_normal((n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return rng.uniform(r1, r2, n)[:, None] * d


def spec_from_case(case):
    c_fn = sp.lambdify(X[: case.dim], case.c, "numpy")
    return CoefficientSpec(
        dimension=case.dim,
        a=lambdify_radial(case.a),
        b=lambdify_radial(case.b),
        d=lambdify_radial(case.d),
        c=lambda x: c_fn(*np.moveaxis(x, -1, 0)),
    )


class TestBuild:
    def test_isotropic(self):
        x = shell_points(np.random.default_rng(0), 3, 50)
        A = build_coefficients(CoefficientSpec(3, a=2.0), x)
        assert np.allclose(A, 2 * np.eye(3))

    def test_a_plus_projection(self):
        x = shell_points(np.random.default_rng(1), 3, 50)
        A = build_coefficients(CoefficientSpec(3, a=1.0, d=1.0), x)
        proj = x[:, :, None] * x[:, None, :] / np.sum(x * x, axis=1)[:, None, None]
        assert np.allclose(A, np.eye(3) + proj)

    def test_polynomial_series_first_term(self):
        # off-diagonal -x_j x_k x_m^2: -1 at (1,1,1)
        A = polynomial_term(np.array([1.0, 1.0, 1.0]), 1)
        assert A[0, 0] == 2.0 and A[0, 1] == -1.0

    def test_polynomial_series_matches_symbolic(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1.5, 1.5, (20, 3))
        for n in (1, 2, 3):
            mat = abcd_tensor(3, 0, 0, 0, 0, series=[0] * (n - 1) + [1])
            fn = sp.lambdify(X, mat, "numpy")
            ref = np.stack([np.array(fn(*p), dtype=float) for p in x])
            assert np.allclose(polynomial_term(x, n), ref, rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_symbolic_random(self, dim):
        rng = np.random.default_rng(3 + dim)
        case = random_case(rng, dim)
        spec = spec_from_case(case)
        x = shell_points(rng, dim, 40)
        mat = abcd_tensor(dim, case.a, case.b, case.c, case.d)
        fn = sp.lambdify(X[:dim], mat, "numpy")
        ref = np.stack([np.array(fn(*p), dtype=float) for p in x])
        assert np.allclose(build_coefficients(spec, x), ref, rtol=1e-12, atol=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(5)
        spec = CoefficientSpec(
            3, family="sum", a=lambda r: 3 + r, b=0.2, d=-0.1, c=lambda x: 0.1 + x[..., 0] ** 2,
            series_weights=(1.0, lambda x: 0.5 + x[..., 2] ** 2),
        )
        A = build_coefficients(spec, shell_points(rng, 3, 200))
        assert np.array_equal(A, np.swapaxes(A, -1, -2))

    def test_positivity_violation_names_radius(self):
        with pytest.raises(AdmissibilityError, match="r ="):
            build_coefficients(CoefficientSpec(3, a=1.0, b=2.0), shell_points(np.random.default_rng(0), 3, 5))

    def test_negative_c(self):
        with pytest.raises(AdmissibilityError):
            build_coefficients(CoefficientSpec(3, a=2.0, c=-0.1), shell_points(np.random.default_rng(0), 3, 5))

    def test_negative_series_weight(self):
        spec = CoefficientSpec(3, family="polynomial_series", series_weights=(-1.0,))
        with pytest.raises(AdmissibilityError):
            build_coefficients(spec, shell_points(np.random.default_rng(0), 3, 5))

    def test_series_needs_3d(self):
        with pytest.raises(UnsupportedFamilyError):
            CoefficientSpec(2, family="polynomial_series")

    def test_custom_requires_flag(self):
        with pytest.raises(AdmissibilityError):
            CoefficientSpec(3, family="custom", tensor=lambda x: np.eye(3))
        CoefficientSpec(3, family="custom", tensor=lambda x: np.eye(3), unchecked=True)

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            CoefficientSpec(3, family="other")

    def test_sampled_profiles(self):
        grid = RadialGrid(1.0, 2.0, 41)
        spec = CoefficientSpec(3, a=2 + np.sin(grid.nodes), profile_grid=grid)
        r = np.array([1.013, 1.5, 1.977])
        assert np.allclose(spec.profile("a")(r), 2 + np.sin(r), atol=1e-6)

    def test_sampled_profile_needs_grid(self):
        with pytest.raises(ConfigurationError):
            CoefficientSpec(3, a=np.ones(5)).profile("a")


class TestTrace:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_abcd_trace_is_a_plus_d(self, dim):
        rng = np.random.default_rng(10 + dim)
        for _ in range(5):
            spec = spec_from_case(random_case(rng, dim))
            x = shell_points(rng, dim, 500)
            r = np.linalg.norm(x, axis=1)
            assert np.max(np.abs(radial_trace(spec, x) - (spec.profile("a")(r) + spec.profile("d")(r)))) <= 1e-12
            assert np.allclose(trace_profile(spec, r), spec.profile("a")(r) + spec.profile("d")(r))

    def test_series_trace_vanishes(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(-2, 2, (1000, 3))
        for n in (1, 2, 3):
            t = np.einsum("...j,...jk,...k->...", x, polynomial_term(x, n), x)
            scale = np.max(np.abs(polynomial_term(x, n)), axis=(-1, -2)) * np.sum(x * x, axis=1)
            assert np.max(np.abs(t) / np.maximum(scale, 1e-300)) <= 1e-12

    def test_isotropic_trace(self):
        x = shell_points(np.random.default_rng(13), 3, 20)
        assert np.allclose(radial_trace(CoefficientSpec(3, a=2.0), x), 2.0)

    def test_sum_trace(self):
        spec = CoefficientSpec(3, family="sum", a=lambda r: 2 + r, d=0.5, series_weights=(1.0, 2.0))
        x = shell_points(np.random.default_rng(14), 3, 300)
        r = np.linalg.norm(x, axis=1)
        assert np.max(np.abs(radial_trace(spec, x) - (2.5 + r))) <= 1e-12


class TestEllipticity:
    def test_isotropic(self):
        rng = np.random.default_rng(20)
        x = shell_points(rng, 3, 100)
        assert ellipticity_bounds(CoefficientSpec(3, a=2.0), x, rng.standard_normal((100, 3))) == pytest.approx((2.0, 2.0))

    def test_abcd_lower_bound(self):
        rng = np.random.default_rng(21)
        spec = CoefficientSpec(3, a=3.0, b=1.0, d=-1.0, c=0.0)
        lower, _ = ellipticity_bounds(spec, shell_points(rng, 3, 10_000), rng.standard_normal((10_000, 3)))
        assert lower >= 1.0 - 1e-12
        assert np.all(ellipticity_margin(spec, np.linspace(1, 2, 5)) == 1.0)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_random_abcd_lower_bound(self, dim):
        rng = np.random.default_rng(22 + dim)
        for _ in range(5):
            spec = spec_from_case(random_case(rng, dim))
            lower, _ = ellipticity_bounds(spec, shell_points(rng, dim, 10_000), rng.standard_normal((10_000, dim)))
            margin = np.min(ellipticity_margin(spec, np.linspace(1, 2, 2001)))
            assert lower >= margin - 1e-12

    def test_series_at_diagonal_point(self):
        xi = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
        A = polynomial_term(np.array([1.0, 1.0, 1.0]), 1)
        assert xi @ A @ xi == pytest.approx(3.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        st.lists(st.floats(-1, 1), min_size=3, max_size=3),
        st.integers(1, 3),
    )
    def test_series_positive_semidefinite(self, x, xi, n):
        A = polynomial_term(np.array(x), n)
        scale = max(1.0, float(np.max(np.abs(A))))
        assert np.array(xi) @ A @ np.array(xi) >= -1e-12 * scale

    def test_series_psd_bulk(self):
        rng = np.random.default_rng(24)
        x = rng.uniform(-2, 2, (10_000, 3))
        xi = rng.standard_normal((10_000, 3))
        for n in (1, 2):
            q = np.einsum("...j,...jk,...k->...", xi, polynomial_term(x, n), xi)
            assert np.min(q) >= -1e-12

    def test_nonpositive_lower_estimate_raises(self):
        spec = CoefficientSpec(3, family="custom", tensor=lambda x: -np.eye(3), unchecked=True)
        with pytest.raises(AdmissibilityError):
            ellipticity_bounds(spec, np.ones((1, 3)), np.ones((1, 3)))


class TestSphericalRep:
    def test_isotropic_3d(self):
        phi, theta = np.meshgrid(np.linspace(0, 6, 7), np.linspace(0.2, 3, 5), indexing="ij")
        rep = spherical_rep(CoefficientSpec(3, a=2.0), 1.5, phi, theta)
        assert np.allclose(rep.f[0], 2 * np.cos(phi) * np.sin(theta))
        assert np.allclose(rep.k[0], 2.0)
        assert np.allclose(rep.k[1], 0.0) and np.allclose(rep.k[2], 0.0)

    def test_identity_2d(self):
        rep = spherical_rep(CoefficientSpec(2, a=1.0), 1.2, np.linspace(0, 6, 9))
        assert np.allclose(rep.k[0], 1.0) and np.allclose(rep.k[1], 0.0)
        assert rep.h is None and rep.l is None

    @pytest.mark.parametrize("dim", [2, 3])
    def test_k1_angle_independent(self, dim):
        rng = np.random.default_rng(30 + dim)
        spec = spec_from_case(random_case(rng, dim))
        shell = ShellGrid(RadialGrid(1.0, 2.0, 9), AngularGrid(dim, 12, 7 if dim == 3 else 1))
        theta = shell.theta if dim == 3 else None
        rep = spherical_rep(spec, shell.r, shell.phi, theta)
        k1 = rep.k[0]
        expected = (spec.profile("a")(shell.radial.nodes) + spec.profile("d")(shell.radial.nodes))
        expected = expected[(slice(None),) + (None,) * (k1.ndim - 1)]
        assert np.max(np.abs(k1 - expected)) <= 1e-12
        assert np.allclose(rep.k[1:], 0.0, atol=1e-12)

    def test_accepts_tensor_samples(self):
        rep = spherical_rep(np.eye(3) * 3.0, 1.0, 0.3, 1.1)
        assert rep.k[0] == pytest.approx(3.0)


class TestConormal:
    def test_outer(self):
        assert conormal_vector(CoefficientSpec(3, a=2.0), "outer", 2.0) == 2.0

    def test_factor_is_trace_profile(self):
        assert conormal_vector(CoefficientSpec(3, a=1.0, d=1.0), "outer", 2.0) == 2.0
        assert conormal_vector(CoefficientSpec(3, a=2.0, d=-1.0, b=0.0), "outer", 2.0) == 1.0

    def test_inner_orientation(self):
        assert conormal_vector(CoefficientSpec(3, a=1.0), "inner", 1.0) == -1.0

    def test_matches_tensor_times_normal(self):
        rng = np.random.default_rng(40)
        spec = spec_from_case(random_case(rng, 3))
        for shell, r0, sign in (("inner", 1.0, -1.0), ("outer", 2.0, 1.0)):
            x = shell_points(rng, 3, 20, r0, r0)
            n = sign * x / r0
            conormal = np.einsum("...jk,...k->...j", build_coefficients(spec, x), n)
            assert np.allclose(conormal, conormal_vector(spec, shell, r0) * x / r0, atol=1e-12)

    def test_other_family(self):
        with pytest.raises(UnsupportedFamilyError):
            conormal_vector(CoefficientSpec(3, family="polynomial_series"), "outer", 2.0)

    def test_bad_shell(self):
        with pytest.raises(ConfigurationError):
            conormal_vector(CoefficientSpec(3), "middle", 2.0)
