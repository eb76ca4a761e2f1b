import numpy as np
import numpy.testing as npt
import pytest

from oracles import (oracle_ball_projection, oracle_nuclear, oracle_row_group,
                     prox_nuclear_objective, prox_row_group_objective,
                     random_complex)
from subdoa.array_model import build_grid_manifold, default_grid, make_ula
from subdoa.errors import ConfigurationError
from subdoa.solver import (LiftedProblem, SolverOptions, lifted_objective,
                           project_residual_ball, prox_nuclear, prox_row_group,
                           solve_l1, solve_lifted)


def random_blocks(rng, n_cols, sizes):
    return [random_complex(rng, (m, n_cols)) / np.sqrt(2) for m in sizes]


def make_problem(rng, n=12, sizes=(3, 4), mu=1.0, budget_frac=0.3):
    """Random feasible instance whose zero matrix is infeasible."""
    blocks = random_blocks(rng, n, sizes)
    xs = [random_complex(rng, m) for m in sizes]
    budget = budget_frac * sum(np.linalg.norm(x) ** 2 for x in xs)
    return blocks, xs, mu, budget


def manifold_from_blocks(blocks):
    """Wrap raw dictionary blocks in the container the solver API expects."""
    from subdoa.array_model import GridManifold
    n = blocks[0].shape[1]
    return GridManifold(grid_degrees=np.arange(n, dtype=float),
                        per_subarray=tuple(blocks),
                        stacked=np.vstack(blocks))


# ---------------------------------------------------------------------------
# proximal operator contracts


class TestProxRowGroup:
    def test_zero_threshold_is_identity(self):
        rng = np.random.default_rng(0)
        Z = random_complex(rng, (6, 3))
        npt.assert_array_equal(prox_row_group(Z, 0.0), Z)

    def test_small_row_zeroed(self):
        Z = np.array([[0.3 + 0.4j, 0.0]])  # row norm 0.5
        npt.assert_array_equal(prox_row_group(Z, 1.0), np.zeros((1, 2)))

    def test_closed_form_on_real_row(self):
        Z = np.array([[3.0 + 0j, 4.0 + 0j]])  # norm 5, tau 1 -> scale 0.8
        npt.assert_allclose(prox_row_group(Z, 1.0), [[2.4, 3.2]])

    def test_matches_scalar_search_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(60):
            Z = random_complex(rng, (rng.integers(2, 9), rng.integers(1, 5)))
            tau = float(rng.uniform(0.05, 2.0))
            mine = prox_row_group(Z, tau)
            oracle = oracle_row_group(Z, tau)
            gap = (prox_row_group_objective(mine, Z, tau)
                   - prox_row_group_objective(oracle, Z, tau))
            assert gap <= 1e-6

    def test_negative_threshold_rejected(self):
        with pytest.raises(ConfigurationError):
            prox_row_group(np.ones((2, 2)), -1.0)


class TestProxNuclear:
    def test_zero_threshold_is_identity(self):
        rng = np.random.default_rng(2)
        Z = random_complex(rng, (5, 3))
        npt.assert_allclose(prox_nuclear(Z, 0.0), Z, rtol=1e-10, atol=1e-12)

    def test_rank_one_shrinks_singular_value(self):
        rng = np.random.default_rng(3)
        u = random_complex(rng, 5)
        u /= np.linalg.norm(u)
        v = random_complex(rng, 3)
        v /= np.linalg.norm(v)
        Z = 2.0 * np.outer(u, v.conj())
        out = prox_nuclear(Z, 0.5)
        npt.assert_allclose(out, 1.5 * np.outer(u, v.conj()), atol=1e-12)

    def test_matches_lbfgs_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(60):
            Z = random_complex(rng, (rng.integers(2, 9), rng.integers(2, 5)))
            tau = float(rng.uniform(0.05, 1.5))
            mine = prox_nuclear(Z, tau)
            oracle = oracle_nuclear(Z, tau)
            gap = (prox_nuclear_objective(mine, Z, tau)
                   - prox_nuclear_objective(oracle, Z, tau))
            assert gap <= 1e-6


class TestProjectResidualBall:
    def test_feasible_point_unchanged(self):
        rng = np.random.default_rng(5)
        blocks, xs, _, _ = make_problem(rng)
        problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                observations=tuple(xs), mu=1.0,
                                noise_budget=1e9)
        Z = random_complex(rng, (12, 2))
        npt.assert_array_equal(project_residual_ball(Z, problem), Z)

    def test_scalar_geometry(self):
        # A = [[1]], x = [2], budget 1: z = 0 projects to z = 1
        from subdoa.array_model import GridManifold
        man = GridManifold(grid_degrees=np.array([0.0]),
                           per_subarray=(np.array([[1.0 + 0j]]),),
                           stacked=np.array([[1.0 + 0j]]))
        problem = LiftedProblem(manifold=man, observations=(np.array([2.0 + 0j]),),
                                mu=0.0, noise_budget=1.0)
        W = project_residual_ball(np.zeros((1, 1), complex), problem)
        npt.assert_allclose(W, [[1.0]], rtol=1e-10)

    def test_matches_slsqp_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(50):
            n = int(rng.integers(3, 9))
            # fat blocks keep the residual ball reachable from any point
            sizes = list(rng.integers(2, min(5, n), size=rng.integers(1, 5)))
            blocks, xs, _, budget = make_problem(rng, n=n, sizes=sizes)
            Z = random_complex(rng, (n, len(sizes)), scale=0.3)
            mine = _project(Z, blocks, xs, budget)
            resid = sum(np.linalg.norm(x - A @ mine[:, l]) ** 2
                        for l, (A, x) in enumerate(zip(blocks, xs)))
            assert resid <= budget * (1 + 1e-9)
            oracle = oracle_ball_projection(Z, blocks, xs, budget)
            gap = np.linalg.norm(mine - Z) ** 2 - np.linalg.norm(oracle - Z) ** 2
            assert gap <= 1e-6

    def test_exactly_on_boundary_when_outside(self):
        rng = np.random.default_rng(7)
        blocks, xs, _, budget = make_problem(rng)
        Z = np.zeros((12, 2), complex)
        W = _project(Z, blocks, xs, budget)
        resid = sum(np.linalg.norm(x - A @ W[:, l]) ** 2
                    for l, (A, x) in enumerate(zip(blocks, xs)))
        npt.assert_allclose(resid, budget, rtol=1e-10)


def _project(Z, blocks, xs, budget):
    problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                            observations=tuple(xs), mu=0.0, noise_budget=budget)
    return project_residual_ball(Z, problem)


# ---------------------------------------------------------------------------
# full solves


def perturbation_improvements(Z_hat, blocks, xs, mu, budget, n_perturb, rng,
                              scales=(1e-3, 1e-2, 1e-1)):
    """Objective decreases found by random feasible perturbations of Z_hat."""
    base = lifted_objective(Z_hat, mu)
    zn = np.linalg.norm(Z_hat)
    gains = []
    for k in range(n_perturb):
        step = scales[k % len(scales)] * max(zn, 1.0)
        cand = Z_hat + step * random_complex(rng, Z_hat.shape) / np.sqrt(2)
        cand = _project(cand, blocks, xs, budget)
        gains.append(base - lifted_objective(cand, mu))
    return np.array(gains)


class TestSolveLifted:
    def test_zero_data_returns_zero(self):
        rng = np.random.default_rng(8)
        blocks, _, _, _ = make_problem(rng)
        xs = [np.zeros(A.shape[0], complex) for A in blocks]
        problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                observations=tuple(xs), mu=1.0, noise_budget=0.5)
        sol = solve_lifted(problem)
        npt.assert_array_equal(sol.Z_hat, 0)
        assert sol.diagnostics.status == "converged"
        assert sol.diagnostics.iterations == 0

    def test_zero_feasible_shortcut(self):
        rng = np.random.default_rng(9)
        blocks, xs, _, _ = make_problem(rng)
        budget = 2.0 * sum(np.linalg.norm(x) ** 2 for x in xs)
        problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                observations=tuple(xs), mu=1.0, noise_budget=budget)
        sol = solve_lifted(problem)
        npt.assert_array_equal(sol.Z_hat, 0)

    def test_feasibility_invariant(self):
        rng = np.random.default_rng(10)
        for trial in range(10):
            blocks, xs, mu, budget = make_problem(rng, n=20, sizes=(3, 3, 4))
            problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                    observations=tuple(xs), mu=mu,
                                    noise_budget=budget)
            sol = solve_lifted(problem)
            assert sol.diagnostics.constraint_residual <= budget * (1 + 1e-4)

    def test_perturbations_never_improve(self):
        rng = np.random.default_rng(11)
        opts = SolverOptions(primal_tol=1e-7, dual_tol=1e-7, max_iterations=20000)
        for trial in range(5):
            blocks, xs, mu, budget = make_problem(rng, n=25, sizes=(4, 4))
            problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                    observations=tuple(xs), mu=mu,
                                    noise_budget=budget)
            sol = solve_lifted(problem, opts)
            gains = perturbation_improvements(sol.Z_hat, blocks, xs, mu, budget,
                                              100, rng)
            assert gains.max() <= 10 * opts.primal_tol * max(
                1.0, sol.diagnostics.objective)

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        blocks, xs, mu, budget = make_problem(rng)
        problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                observations=tuple(xs), mu=mu, noise_budget=budget)
        a = solve_lifted(problem)
        b = solve_lifted(problem)
        assert np.array_equal(a.Z_hat, b.Z_hat)
        assert a.diagnostics == b.diagnostics

    def test_mu_zero_matches_l1_on_single_block(self):
        # the vector program is literally the one-block mu=0 lifted program
        rng = np.random.default_rng(13)
        A = random_complex(rng, (6, 30)) / np.sqrt(2)
        x = random_complex(rng, 6)
        budget = 0.25 * np.linalg.norm(x) ** 2
        from subdoa.array_model import GridManifold
        man = GridManifold(grid_degrees=np.arange(30.0), per_subarray=(A,),
                           stacked=A)
        lifted = solve_lifted(LiftedProblem(manifold=man, observations=(x,),
                                            mu=0.0, noise_budget=budget))
        direct = solve_l1(A, x, budget)
        npt.assert_array_equal(lifted.Z_hat[:, 0], direct.s_hat)


class TestSolveL1:
    def test_zero_observation(self):
        rng = np.random.default_rng(14)
        A = random_complex(rng, (5, 20))
        sol = solve_l1(A, np.zeros(5, complex), 1.0)
        npt.assert_array_equal(sol.s_hat, 0)

    def test_noiseless_single_atom_recovery(self):
        geom = make_ula(24, 0.5, [6, 6, 6, 6])
        man = build_grid_manifold(geom, default_grid(step_deg=2.5))
        k = 20
        amp = 0.8 - 0.6j
        x = man.stacked[:, k] * amp
        sol = solve_l1(man.stacked, x, 1e-10,
                       SolverOptions(primal_tol=1e-8, dual_tol=1e-8,
                                     max_iterations=20000))
        idx = np.argmax(np.abs(sol.s_hat))
        assert idx == k
        npt.assert_allclose(sol.s_hat[k], amp, rtol=1e-3)
        others = np.abs(sol.s_hat)
        others = np.delete(others, k)
        assert others.max() < 1e-3 * abs(amp)

    def test_homogeneity(self):
        # scaling (x, sqrt(budget)) by c scales the minimizer by c
        rng = np.random.default_rng(15)
        A = random_complex(rng, (6, 24)) / np.sqrt(2)
        x = random_complex(rng, 6)
        budget = 0.2 * np.linalg.norm(x) ** 2
        opts = SolverOptions(primal_tol=1e-8, dual_tol=1e-8, max_iterations=30000)
        base = solve_l1(A, x, budget, opts)
        c = 3.7
        scaled = solve_l1(A, c * x, c ** 2 * budget, opts)
        npt.assert_allclose(scaled.s_hat, c * base.s_hat, rtol=1e-4, atol=1e-6)

    def test_shape_validation(self):
        with pytest.raises(ConfigurationError):
            solve_l1(np.ones((3, 5), complex), np.ones(4, complex), 1.0)


class TestObjective:
    def test_lifted_objective_values(self):
        Z = np.array([[3.0 + 4.0j, 0.0], [0.0, 0.0]])
        npt.assert_allclose(lifted_objective(Z, 0.0), 5.0)
        npt.assert_allclose(lifted_objective(Z, 2.0), 15.0)


class TestMillionCandidates:
    """No cloud of random candidates may beat a prox output's objective."""

    def _sweep(self, objective, center, spread, rng, chunk=100_000, total=1_000_000):
        best = np.inf
        shape = center.shape
        for _ in range(total // chunk):
            cand = center[None] + spread * (
                rng.standard_normal((chunk,) + shape)
                + 1j * rng.standard_normal((chunk,) + shape))
            vals = objective(cand)
            best = min(best, float(vals.min()))
        return best

    def test_prox_row_group(self):
        from oracles import prox_row_group_objective
        rng = np.random.default_rng(100)
        Z = random_complex(rng, (8, 4))
        tau = 0.7
        out = prox_row_group(Z, tau)
        mine = prox_row_group_objective(out, Z, tau)

        def batch_obj(cand):
            norms = np.linalg.norm(cand, axis=2)
            fit = np.sum(np.abs(cand - Z[None]) ** 2, axis=(1, 2))
            return tau * norms.sum(axis=1) + 0.5 * fit

        best = self._sweep(batch_obj, out, 0.05, rng)
        assert mine <= best + 1e-6

    def test_prox_nuclear(self):
        from oracles import prox_nuclear_objective
        rng = np.random.default_rng(101)
        Z = random_complex(rng, (8, 4))
        tau = 0.5
        out = prox_nuclear(Z, tau)
        mine = prox_nuclear_objective(out, Z, tau)

        def batch_obj(cand):
            sv = np.linalg.svd(cand, compute_uv=False)
            fit = np.sum(np.abs(cand - Z[None]) ** 2, axis=(1, 2))
            return tau * sv.sum(axis=1) + 0.5 * fit

        best = self._sweep(batch_obj, out, 0.05, rng)
        assert mine <= best + 1e-6

    def test_project_residual_ball(self):
        rng = np.random.default_rng(102)
        blocks, xs, _, budget = make_problem(rng, n=8, sizes=(3, 4))
        problem = LiftedProblem(manifold=manifold_from_blocks(blocks),
                                observations=tuple(xs), mu=0.0,
                                noise_budget=budget)
        Z = random_complex(rng, (8, 2), scale=0.3)
        out = project_residual_ball(Z, problem)
        mine = float(np.linalg.norm(out - Z) ** 2)

        A3 = blocks
        def batch_obj(cand):
            # candidates violating the ball get +inf
            resid = np.zeros(cand.shape[0])
            for l, (A, x) in enumerate(zip(A3, xs)):
                r = x[None] - cand[:, :, l] @ A.T  # (chunk, m): A z per cand
                resid += np.sum(np.abs(r) ** 2, axis=1)
            vals = np.sum(np.abs(cand - Z[None]) ** 2, axis=(1, 2))
            return np.where(resid <= budget, vals, np.inf)

        best = self._sweep(batch_obj, out, 0.02, rng)
        assert mine <= best + 1e-6
