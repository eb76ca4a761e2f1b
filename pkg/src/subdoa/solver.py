"""First-order solver for the two convex recovery programs.

Both programs constrain the stacked data-fit residual to a ball:

* lifted:   minimize  ||Z||_{1,2} + mu*||Z||_*   over Z in C^{N x L}
            subject to  sum_l ||x_l - A_l Z[:,l]||^2 <= budget
* vector:   minimize  ||s||_1                    over s in C^N
            subject to  ||x - A s||^2 <= budget

The vector program is the lifted program with a single block and mu = 0,
and both are handled by one ADMM engine with consensus splitting: a central
variable Z, a row-sparse copy (group soft-threshold), an optional low-rank
copy (singular-value thresholding), and a residual copy (Euclidean-ball
projection).  Each per-block normal-equation solve uses the Woodbury
identity against the small M_l x M_l Gram matrix, factored once, so
iterations cost O(sum_l M_l N); equal-size blocks run through one batched
einsum per operation.

The returned matrix is polished with an exact projection onto the feasible
set, so the constraint always holds up to root-finder precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .array_model import GridManifold
from .errors import ConfigurationError

__all__ = [
    "LiftedProblem",
    "SolverOptions",
    "SolverDiagnostics",
    "LiftedSolution",
    "L1Solution",
    "prox_row_group",
    "prox_nuclear",
    "project_residual_ball",
    "solve_lifted",
    "solve_l1",
    "lifted_objective",
]


# ---------------------------------------------------------------------------
# problem / option / result containers


@dataclass(frozen=True)
class LiftedProblem:
    """Data for the lifted program: dictionary blocks, observations, weights."""

    manifold: GridManifold
    observations: tuple
    mu: float
    noise_budget: float

    def __post_init__(self):
        obs = tuple(np.asarray(x, dtype=complex) for x in self.observations)
        per = self.manifold.per_subarray
        if len(obs) != len(per):
            raise ConfigurationError(
                f"{len(obs)} observation vectors for {len(per)} sub-arrays")
        for x, A in zip(obs, per):
            if x.shape != (A.shape[0],):
                raise ConfigurationError(
                    f"observation length {x.shape} does not match manifold rows {A.shape[0]}")
        if self.mu < 0:
            raise ConfigurationError("mu must be >= 0")
        if self.noise_budget < 0:
            raise ConfigurationError("noise_budget must be >= 0")
        object.__setattr__(self, "observations", obs)


@dataclass(frozen=True)
class SolverOptions:
    """ADMM controls; defaults follow standard residual-balancing practice."""

    max_iterations: int = 5000
    penalty: float = 1.0
    primal_tol: float = 1e-6
    dual_tol: float = 1e-6
    feasibility_tol: float = 1e-4
    relaxation: float = 1.7
    adapt_penalty: bool = True
    stagnation_window: int = 50
    stagnation_tol: float = 1e-12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        for name in ("penalty", "primal_tol", "dual_tol", "feasibility_tol",
                     "stagnation_tol"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        if not 0.5 <= self.relaxation < 2.0:
            raise ConfigurationError("relaxation must lie in [0.5, 2)")


@dataclass(frozen=True)
class SolverDiagnostics:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    constraint_residual: float  # squared data-fit residual of the returned iterate
    status: str                 # 'converged' | 'max_iterations' | 'stagnated'
    penalty: float

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True)
class LiftedSolution:
    Z_hat: np.ndarray
    diagnostics: SolverDiagnostics


@dataclass(frozen=True)
class L1Solution:
    s_hat: np.ndarray
    diagnostics: SolverDiagnostics


# ---------------------------------------------------------------------------
# proximal operators


def prox_row_group(Z: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise group soft-threshold: row -> row * max(0, 1 - tau/||row||)."""
    if tau < 0:
        raise ConfigurationError("tau must be >= 0")
    Z = np.atleast_2d(np.asarray(Z))
    norms = np.linalg.norm(Z, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - tau / norms[nz])
    return Z * scale[:, None]


def prox_nuclear(Z: np.ndarray, tau: float) -> np.ndarray:
    """Singular-value thresholding; SVD failures propagate to the caller."""
    if tau < 0:
        raise ConfigurationError("tau must be >= 0")
    U, s, Vh = np.linalg.svd(np.asarray(Z), full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vh


def lifted_objective(Z: np.ndarray, mu: float) -> float:
    """||Z||_{1,2} + mu*||Z||_* (the nuclear term is skipped when mu == 0)."""
    Z = np.atleast_2d(np.asarray(Z))
    val = float(np.linalg.norm(Z, axis=1).sum())
    if mu > 0:
        val += mu * float(np.linalg.svd(Z, compute_uv=False).sum())
    return val


def _project_blocks(Z, blocks_A, xs, budget, grams=None):
    """Exact projection of Z onto {W : sum_l ||x_l - A_l w_l||^2 <= budget}.

    The optimality system reduces to a scalar secular equation in the
    multiplier nu: with G_l = A_l A_l^H = E diag(lam) E^H, the residual of
    the projected point is (I + nu G_l)^{-1} (x_l - A_l z_l), and nu solves
    g(nu) = budget with g monotone decreasing on nu >= 0.
    """
    vs = [x - A @ Z[:, l] for l, (A, x) in enumerate(zip(blocks_A, xs))]
    g0 = sum(float(np.vdot(v, v).real) for v in vs)
    if g0 <= budget:
        return Z.copy()
    if grams is None:
        grams = [np.linalg.eigh(A @ A.conj().T) for A in blocks_A]
    lams = [np.maximum(lam, 0.0) for lam, _ in grams]
    cs = [E.conj().T @ v for (_, E), v in zip(grams, vs)]

    if budget == 0.0:
        # nu -> inf limit: least-squares projection onto the affine set A w = x
        W = Z.copy()
        for l, (A, x) in enumerate(zip(blocks_A, xs)):
            lam, E = grams[l]
            if np.min(lam) <= 1e-12 * max(np.max(lam), 1.0):
                raise ConfigurationError(
                    "budget 0 requires full-row-rank dictionary blocks")
            W[:, l] += A.conj().T @ (E @ ((E.conj().T @ vs[l]) / lam))
        return W

    def g(nu):
        total = 0.0
        for lam, c in zip(lams, cs):
            total += float(np.sum(np.abs(c) ** 2 / (1.0 + nu * lam) ** 2))
        return total

    floor = sum(float(np.sum(np.abs(c[lam <= 0]) ** 2)) for lam, c in zip(lams, cs))
    if floor > budget:
        raise ConfigurationError(
            "constraint set is unreachable: rank-deficient blocks leave "
            f"irreducible residual {floor:.3e} > budget {budget:.3e}")
    hi = 1.0
    while g(hi) > budget:
        hi *= 4.0
        if hi > 1e30:
            raise ConfigurationError("projection multiplier search failed to bracket")
    nu = brentq(lambda t: g(t) - budget, 0.0, hi, xtol=1e-300, rtol=1e-15)
    W = Z.copy()
    for l, (A, (lam, E)) in enumerate(zip(blocks_A, grams)):
        r = E @ (cs[l] / (1.0 + nu * np.maximum(lam, 0.0)))
        W[:, l] += nu * (A.conj().T @ r)
    return W


def project_residual_ball(Z: np.ndarray, problem: LiftedProblem) -> np.ndarray:
    """Nearest (Frobenius) matrix to Z whose stacked data-fit residual is in budget."""
    Z = np.asarray(Z, dtype=complex)
    blocks_A = list(problem.manifold.per_subarray)
    if Z.shape != (problem.manifold.size, len(blocks_A)):
        raise ConfigurationError(
            f"Z shape {Z.shape} does not match ({problem.manifold.size}, {len(blocks_A)})")
    return _project_blocks(Z, blocks_A, list(problem.observations), problem.noise_budget)


# ---------------------------------------------------------------------------
# block linear algebra: batched when all blocks share a shape, loop otherwise


class _BlockOps:
    """A^H b, A z, and (k*I + A A^H)^{-1} solves for a list of blocks."""

    def __init__(self, blocks_A, ncopies):
        self.blocks = blocks_A
        self.L = len(blocks_A)
        self.N = blocks_A[0].shape[1]
        self.sizes = [A.shape[0] for A in blocks_A]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.M = int(self.offsets[-1])
        self.batched = len(set(self.sizes)) == 1
        if self.batched:
            self.A3 = np.stack(blocks_A)                    # (L, m, N)
            self.A3H = self.A3.conj().transpose(0, 2, 1)    # (L, N, m)
            gram = self.A3 @ self.A3H                       # (L, m, m)
            m = self.sizes[0]
            self.solve_mat = np.linalg.inv(
                ncopies * np.eye(m)[None, :, :] + gram)     # (L, m, m)
        else:
            self.chols = [sla.cho_factor(ncopies * np.eye(A.shape[0]) + A @ A.conj().T)
                          for A in blocks_A]

    def split(self, stacked):
        return [stacked[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def AH_dot(self, stacked):
        """A_l^H applied per block to a stacked (M,) vector -> (N, L)."""
        if self.batched:
            B = stacked.reshape(self.L, -1, 1)
            return np.matmul(self.A3H, B)[:, :, 0].T
        cols = [A.conj().T @ v for A, v in zip(self.blocks, self.split(stacked))]
        return np.stack(cols, axis=1)

    def A_dot(self, Z):
        """A_l applied to column l of Z -> stacked (M,) vector."""
        if self.batched:
            return np.matmul(self.A3, Z.T[:, :, None])[:, :, 0].ravel()
        return np.concatenate([A @ Z[:, l] for l, A in enumerate(self.blocks)])

    def gram_solve(self, stacked):
        """(ncopies*I + A_l A_l^H)^{-1} applied per block -> stacked (M,)."""
        if self.batched:
            B = stacked.reshape(self.L, -1, 1)
            return np.matmul(self.solve_mat, B)[:, :, 0].ravel()
        return np.concatenate(
            [sla.cho_solve(c, v) for c, v in zip(self.chols, self.split(stacked))])


# ---------------------------------------------------------------------------
# ADMM engine


def _admm(blocks_A, xs, mu, budget, opts: SolverOptions):
    """Run the splitting on validated blocks; returns (Z, diagnostics).

    The data is normalized to unit stacked norm first (the programs are
    positively homogeneous, so the minimizer simply rescales); this keeps
    the penalty and tolerances scale-free.
    """
    L = len(blocks_A)
    N = blocks_A[0].shape[1]
    x = np.concatenate(xs)
    xnorm = float(np.linalg.norm(x))
    eps = np.sqrt(budget)

    if xnorm <= eps:
        # zero is feasible, and it minimizes both norms outright
        diag = SolverDiagnostics(0, 0.0, 0.0, 0.0, xnorm ** 2, "converged",
                                 opts.penalty)
        return np.zeros((N, L), dtype=complex), diag

    x = x / xnorm
    eps_n = eps / xnorm
    budget_n = eps_n ** 2

    ncopies = 2 if mu > 0 else 1
    ops = _BlockOps(blocks_A, ncopies)
    alpha = opts.relaxation
    rho = opts.penalty

    Z = np.zeros((N, L), dtype=complex)
    S = np.zeros_like(Z)
    W = np.zeros_like(Z)
    U_S = np.zeros_like(Z)
    U_W = np.zeros_like(Z)
    r = x * min(1.0, eps_n)          # stacked residual copy, ||x|| = 1
    u_r = np.zeros_like(x)

    status = "max_iterations"
    p = d = np.inf
    obj_prev = {}
    it = 0
    for it in range(1, opts.max_iterations + 1):
        # central block: per-column regularized least squares via Woodbury
        T = S + U_S + ops.AH_dot(x - r - u_r)
        if mu > 0:
            T += W + U_W
        Z = (T - ops.AH_dot(ops.gram_solve(ops.A_dot(T)))) / ncopies
        AZ = ops.A_dot(Z)

        # over-relaxation mixes the new constraint image with the old copies
        S_prev, W_prev, r_prev = S, W, r
        ZS = alpha * Z + (1.0 - alpha) * S_prev
        S = prox_row_group(ZS - U_S, 1.0 / rho)
        U_S = U_S + (S - ZS)
        if mu > 0:
            ZW = alpha * Z + (1.0 - alpha) * W_prev
            W = prox_nuclear(ZW - U_W, mu / rho)
            U_W = U_W + (W - ZW)
        e = alpha * AZ + (1.0 - alpha) * (x - r_prev)
        v = x - e - u_r
        nv = float(np.linalg.norm(v))
        r = v * (min(1.0, eps_n / nv) if nv > 0 else 1.0)
        u_r = u_r + (r - x + e)

        # residual bookkeeping (scaled-dual ADMM, unrelaxed constraint gaps)
        rgap = r - (x - AZ)
        p2 = np.linalg.norm(S - Z) ** 2 + np.linalg.norm(rgap) ** 2
        if mu > 0:
            p2 += np.linalg.norm(W - Z) ** 2
        p = float(np.sqrt(p2))
        dmat = -(S - S_prev) + ops.AH_dot(r - r_prev)
        if mu > 0:
            dmat = dmat - (W - W_prev)
        d = rho * float(np.linalg.norm(dmat))

        scale_p = max(float(np.linalg.norm(Z)) * np.sqrt(ncopies),
                      float(np.linalg.norm(AZ)), 1.0)
        dual_img = max(float(np.linalg.norm(U_S)),
                       float(np.linalg.norm(U_W)) if mu > 0 else 0.0,
                       float(np.linalg.norm(ops.AH_dot(u_r))))
        scale_d = rho * dual_img + 1e-12

        if p <= opts.primal_tol * scale_p and d <= opts.dual_tol * scale_d:
            status = "converged"
            break

        # stagnation guard, sampled every 10 iterations to keep it cheap
        if it % 10 == 0:
            obj_prev[it] = lifted_objective(Z, mu)
            past = it - 10 * ((opts.stagnation_window + 9) // 10)
            if past in obj_prev:
                if abs(obj_prev[it] - obj_prev[past]) < opts.stagnation_tol:
                    status = "stagnated"
                    break
                del obj_prev[past]

        if opts.adapt_penalty:
            if p > 10.0 * d:
                rho *= 2.0
                U_S /= 2.0
                U_W /= 2.0
                u_r /= 2.0
            elif d > 10.0 * p:
                rho /= 2.0
                U_S *= 2.0
                U_W *= 2.0
                u_r *= 2.0

    # exact feasibility polish, then rescale back to the data units
    xs_n = ops.split(x)
    grams = [np.linalg.eigh(A @ A.conj().T) for A in blocks_A]
    Z = _project_blocks(Z, blocks_A, xs_n, budget_n, grams=grams)
    Z *= xnorm
    cres = float(sum(
        np.linalg.norm(xv * xnorm - A @ Z[:, l]) ** 2
        for l, (A, xv) in enumerate(zip(blocks_A, xs_n))))
    diag = SolverDiagnostics(
        iterations=it,
        primal_residual=float(p * xnorm),
        dual_residual=float(d * xnorm),
        objective=lifted_objective(Z, mu),
        constraint_residual=cres,
        status=status,
        penalty=float(rho),
    )
    return Z, diag


def solve_lifted(problem: LiftedProblem,
                 opts: Optional[SolverOptions] = None) -> LiftedSolution:
    """Minimize ||Z||_{1,2} + mu*||Z||_* subject to the stacked residual ball.

    Deterministic given identical inputs and options.  If the iteration
    budget runs out, the current iterate is returned with the status flag
    set; the feasibility invariant holds regardless thanks to the final
    exact projection.
    """
    opts = opts or SolverOptions()
    Z, diag = _admm(list(problem.manifold.per_subarray),
                    [x.copy() for x in problem.observations],
                    problem.mu, problem.noise_budget, opts)
    return LiftedSolution(Z_hat=Z, diagnostics=diag)


def solve_l1(A: np.ndarray, x: np.ndarray, noise_budget: float,
             opts: Optional[SolverOptions] = None) -> L1Solution:
    """Minimize ||s||_1 subject to ||x - A s||^2 <= noise_budget.

    This is the single-block, mu=0 case of the lifted program (the mixed
    row norm of a one-column matrix is the plain l1 norm).
    """
    A = np.asarray(A, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if A.ndim != 2 or x.shape != (A.shape[0],):
        raise ConfigurationError(f"incompatible shapes: A {A.shape}, x {x.shape}")
    if noise_budget < 0:
        raise ConfigurationError("noise_budget must be >= 0")
    opts = opts or SolverOptions()
    Z, diag = _admm([A], [x.copy()], 0.0, noise_budget, opts)
    return L1Solution(s_hat=Z[:, 0], diagnostics=diag)
