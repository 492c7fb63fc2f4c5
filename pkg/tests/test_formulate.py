import numpy as np
import pytest

from nnpspline.bspline import KnotVector, SplineModel, design_matrix, make_uniform_knots
from nnpspline.conic import Cone, membership, solve
from nnpspline.exceptions import DegenerateIntervalError, DomainError, RankDeficiencyError, SolverError
from nnpspline.formulate import (
    FitProblem,
    build_model_I,
    build_model_II,
    extract_model,
    fit_nonneg,
    penalized_loss,
    polish_fit,
    second_diff_matrix,
    unconstrained_fit,
)
from nnpspline.generators import GeneratorSpec, generate
from nnpspline.nonneg import min_on_grid


def direct_loss(problem, alpha):
    """Residual sum of squares plus lam times the second differences, summed term by term."""
    X = design_matrix(problem.knots, problem.x)
    total = 0.0
    for i in range(problem.m):
        total += (problem.y[i] - X[i] @ alpha) ** 2
    for j in range(2, alpha.size):
        total += problem.lam * (alpha[j] - 2 * alpha[j - 1] + alpha[j - 2]) ** 2
    return total


def random_instance(rng, m=None, n_interior=None, lam=None):
    m = m or int(rng.integers(10, 41))
    n_interior = int(rng.integers(0, 7)) if n_interior is None else n_interior
    lam = lam if lam is not None else float(rng.choice([0.01, 1.0, 100.0]))
    x = np.sort(rng.uniform(0, 1, m))
    # a bump that sits near zero so the constraint tends to be active
    y = np.exp(-((x - 0.5) ** 2) / 0.02) - 0.1 + 0.2 * rng.standard_normal(m)
    return FitProblem(x, y, make_uniform_knots(0, 1, n_interior), lam)


class TestSecondDiff:
    def test_n3(self):
        np.testing.assert_array_equal(second_diff_matrix(3), [[1], [-2], [1]])

    def test_annihilates_affine(self):
        D = second_diff_matrix(7)
        np.testing.assert_allclose(D.T @ (3.0 + 0.5 * np.arange(7)), 0, atol=1e-14)

    def test_penalty_sum(self, rng):
        a = rng.standard_normal(6)
        D = second_diff_matrix(6)
        ref = sum((a[j] - 2 * a[j - 1] + a[j - 2]) ** 2 for j in range(2, 6))
        assert a @ D @ D.T @ a == pytest.approx(ref, rel=1e-13)

    def test_too_small(self):
        with pytest.raises(ValueError):
            second_diff_matrix(2)


class TestFitProblem:
    def test_out_of_range(self):
        with pytest.raises(DomainError):
            FitProblem([0.0, 2.0], [1.0, 1.0], make_uniform_knots(0, 1, 0))

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            FitProblem([0.5], [1.0], make_uniform_knots(0, 1, 0), -1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            FitProblem([0.5, 0.6], [1.0], make_uniform_knots(0, 1, 0))

    def test_loss_matches_direct(self, rng):
        pb = random_instance(rng)
        a = rng.standard_normal(pb.knots.n_basis)
        assert penalized_loss(pb, a) == pytest.approx(direct_loss(pb, a), rel=1e-12)


class TestUnconstrainedFit:
    def test_recovers_spline(self, rng):
        kv = make_uniform_knots(0, 1, 4)
        alpha = rng.standard_normal(kv.n_basis)
        x = np.linspace(0, 1, 30)
        y = SplineModel(kv, alpha)(x)
        fit = unconstrained_fit(FitProblem(x, y, kv, 0.0))
        np.testing.assert_allclose(fit.alpha, alpha, atol=1e-8)

    def test_large_lambda_is_affine(self, rng):
        pb = random_instance(rng, lam=1e12)
        a = unconstrained_fit(pb).alpha
        D = second_diff_matrix(a.size)
        assert np.linalg.norm(D.T @ a) <= 1e-4 * np.linalg.norm(a)

    def test_tiny_fixed_instance(self):
        x = np.array([0.0, 0.2, 0.5, 0.7, 1.0])
        y = np.array([1.0, 0.4, 0.3, 0.9, 2.0])
        kv = make_uniform_knots(0, 1, 0)
        pb = FitProblem(x, y, kv, 0.5)
        X = design_matrix(kv, x)
        D = second_diff_matrix(4)
        ref = np.linalg.solve(X.T @ X + 0.5 * D @ D.T, X.T @ y)
        np.testing.assert_allclose(unconstrained_fit(pb).alpha, ref, atol=1e-10)

    def test_rank_deficient(self):
        kv = make_uniform_knots(0, 1, 3)
        pb = FitProblem([0.1, 0.2], [1.0, 2.0], kv, 0.0)
        with pytest.raises(RankDeficiencyError) as info:
            unconstrained_fit(pb)
        assert np.isfinite(info.value.pivot)


class TestBuilders:
    def test_model_I_inventory(self, rng):
        pb = random_instance(rng, m=12, n_interior=3)
        prog, layout = build_model_I(pb)
        n, m = pb.knots.n_basis, pb.m
        kinds = [c.kind for c in prog.cones]
        assert kinds.count("rotated_second_order") == 2 * (3 + 1)
        big = [c for c in prog.cones if c.kind == "second_order"]
        assert [c.dim for c in big] == [1 + m + n - 2]

    def test_model_II_inventory(self, rng):
        pb = random_instance(rng, m=12, n_interior=3)
        prog, layout = build_model_II(pb)
        n, m = pb.knots.n_basis, pb.m
        socs = [c for c in prog.cones if c.kind == "second_order"]
        assert len(socs) == m + n - 2 and all(c.dim == 3 for c in socs)

    def test_layout_is_partition(self, rng):
        pb = random_instance(rng)
        for build in (build_model_I, build_model_II):
            prog, layout = build(pb)
            idx = np.concatenate([np.asarray(v).ravel() for v in layout.groups.values()])
            assert np.array_equal(np.sort(idx), np.arange(prog.n_var))

    def test_degenerate_knots_refused(self):
        kv = KnotVector([0, 0, 0, 0, 0.5, 0.5, 1, 1, 1, 1])
        pb = FitProblem(np.linspace(0, 1, 10), np.ones(10), kv, 1.0)
        with pytest.raises(DegenerateIntervalError):
            build_model_II(pb)

    def test_constant_data(self):
        x = np.array([0.0, 0.3, 0.6, 1.0])
        pb = FitProblem(x, np.full(4, 2.0), make_uniform_knots(0, 1, 0), 1e-4)
        prog, layout = build_model_I(pb)
        sol = solve(prog, tol=1e-10)
        assert sol.status == "optimal"
        np.testing.assert_allclose(extract_model(sol, layout).alpha, 2.0, atol=1e-6)
        assert sol.objective == pytest.approx(0.0, abs=1e-6)

    def test_model_II_objective_is_loss(self, rng):
        for _ in range(5):
            pb = random_instance(rng)
            prog, layout = build_model_II(pb)
            sol = solve(prog, tol=1e-9)
            a = extract_model(sol, layout).alpha
            loss = direct_loss(pb, a)
            assert abs(sol.objective - loss) <= 1e-6 * max(1.0, loss)

    def test_scaled_penalty_same_optimum(self, rng):
        pb = random_instance(rng)
        fits = []
        for scaled in (False, True):
            prog, layout = build_model_II(pb, scaled_penalty=scaled)
            sol = solve(prog, tol=1e-9)
            fits.append((sol.objective, extract_model(sol, layout).alpha))
        assert fits[0][0] == pytest.approx(fits[1][0], rel=1e-6, abs=1e-9)
        # unpolished coefficients are only accurate to about sqrt(tol)
        np.testing.assert_allclose(fits[0][1], fits[1][1], atol=1e-4)

    @pytest.mark.parametrize("lam", [1e8, 1e10, 1e12])
    def test_large_lambda_matches_model_I(self, lam):
        x, y = generate(GeneratorSpec.on_range("gamma_pdf", 0, 20, 200, noise=0.01, seed=1))
        pb = FitProblem(x, y, make_uniform_knots(0, 20, 8), lam)
        sol2 = solve(build_model_II(pb)[0], tol=1e-9)
        prog1, layout1 = build_model_I(pb)
        sol1 = solve(prog1, tol=1e-9)
        assert sol2.status == "optimal"
        assert sol2.objective == pytest.approx(sol1.objective**2, rel=1e-6)

    def test_model_I_objective_is_norm(self, rng):
        pb = random_instance(rng)
        prog, layout = build_model_I(pb)
        sol = solve(prog, tol=1e-10)
        a = extract_model(sol, layout).alpha
        assert sol.objective**2 == pytest.approx(direct_loss(pb, a), rel=1e-6)

    def test_certificates_in_cone(self, rng):
        pb = random_instance(rng)
        prog, layout = build_model_II(pb)
        model = extract_model(solve(prog, tol=1e-9), layout)
        assert len(model.certificates) == len(pb.knots.intervals())
        cone = Cone("rotated_second_order", 3)
        for cert in model.certificates:
            for c11, c22, c12 in (cert.c, cert.d):
                v = np.array([c11, c22, np.sqrt(2) * c12])
                assert membership(cone, v) <= 1e-8 * max(1.0, np.abs(v).max())

    def test_extract_refuses_non_optimal(self, rng):
        pb = random_instance(rng)
        prog, layout = build_model_II(pb)
        sol = solve(prog, max_iter=1)
        with pytest.raises(SolverError) as info:
            extract_model(sol, layout)
        assert info.value.status == sol.status

    def test_lambda_zero(self, rng):
        kv = make_uniform_knots(0, 1, 3)
        alpha = rng.uniform(0.5, 2, kv.n_basis)
        x = np.linspace(0, 1, 25)
        pb = FitProblem(x, SplineModel(kv, alpha)(x), kv, 0.0)
        fit = fit_nonneg(pb)
        np.testing.assert_allclose(fit.model.alpha, alpha, atol=1e-6)


class TestFitNonneg:
    def test_models_agree(self, rng):
        for _ in range(6):
            pb = random_instance(rng)
            a1 = fit_nonneg(pb, model="I").model.alpha
            a2 = fit_nonneg(pb, model="II").model.alpha
            assert np.abs(a1 - a2).max() <= 1e-5

    def test_nonnegative(self, rng):
        for _ in range(6):
            pb = random_instance(rng)
            assert min_on_grid(fit_nonneg(pb).model) >= -1e-8

    def test_not_worse_than_unpolished(self, rng):
        pb = random_instance(rng)
        fit = fit_nonneg(pb)
        raw = extract_model(fit.solution, fit.layout)
        assert penalized_loss(pb, fit.model.alpha) <= penalized_loss(pb, raw.alpha) * (1 + 1e-7)

    def test_inactive_constraint(self, rng):
        x = np.linspace(0, 1, 40)
        y = 1.0 + 0.5 * np.sin(3 * x) + 0.05 * rng.standard_normal(40)
        pb = FitProblem(x, y, make_uniform_knots(0, 1, 5), 0.1)
        free = unconstrained_fit(pb)
        assert min_on_grid(free) >= 1e-6
        np.testing.assert_allclose(fit_nonneg(pb).model.alpha, free.alpha, atol=1e-6)

    def test_penalty_monotone_in_lambda(self):
        x, y = generate(GeneratorSpec.on_range("gamma_pdf", 0, 20, 120, noise=0.02, seed=4))
        kv = make_uniform_knots(0, 20, 8)
        D = second_diff_matrix(kv.n_basis)
        pens = []
        for lam in 10.0 ** np.arange(-4, 5):
            a = fit_nonneg(FitProblem(x, y, kv, lam)).model.alpha
            pens.append(float(np.sum((D.T @ a) ** 2)))
        assert all(p2 <= p1 * (1 + 1e-6) + 1e-12 for p1, p2 in zip(pens, pens[1:]))

    def test_unknown_model(self, rng):
        with pytest.raises(ValueError):
            fit_nonneg(random_instance(rng), model="III")

    def test_polish_keeps_feasible_solution(self, rng):
        pb = random_instance(rng)
        fit = fit_nonneg(pb, polish=False)
        assert not fit.polished
        alpha, pts = polish_fit(pb, fit.model.alpha)
        if alpha is not None:
            assert min_on_grid(SplineModel(pb.knots, alpha)) >= -1e-10
