"""First-eigenpair solvers for the boundary-weighted Rayleigh quotient.

The object minimized is R(u) = energy(u, phi, params) / boundary_p_norm(u)^p.
For p = 2 the minimizer solves the generalized problem A u = lambda Mb u
(Mb is the boundary mass, singular on interior nodes) and is computed by
inverse power iteration with a reused factorization.  For general p > 1 a
projected descent with Barzilai-Borwein steps and an Armijo backtracking
safeguard is used; every accepted step decreases R, so warm-started solves
never increase the eigenvalue estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .assembly import (
    BoundaryDensity,
    Field,
    ProblemParams,
    boundary_p_norm,
    boundary_p_power,
    boundary_power_gradient,
    energy,
    energy_gradient,
)
from .errors import InfeasibleConstraintError

# Above this many unknowns the inner solves switch from a reused direct
# factorization to diagonally preconditioned CG.
_DIRECT_SOLVE_LIMIT = 200_000


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls shared by the linear and descent solvers.

    ``tol = None`` resolves to 1e-9 for p = 2 and 1e-7 otherwise.  ``seed``
    only matters for randomized starts.
    """

    tol: float | None = None
    max_iters: int = 10000
    seed: int = 0
    armijo_slope: float = 1e-4
    armijo_backtrack: float = 0.5

    def resolved_tol(self, p):
        if self.tol is not None:
            return self.tol
        return 1e-9 if p == 2.0 else 1e-7


@dataclass(frozen=True)
class EigenPair:
    """Converged (or best-effort) eigenvalue and normalized eigenfunction."""

    lam: float
    u: Field
    iterations: int
    residual: float
    converged: bool
    positivity_violation: bool = False
    diagnostics: dict = dc_field(default_factory=dict)


def eigenpair_to_json(eig):
    return {
        "lambda": eig.lam,
        "iterations": eig.iterations,
        "residual": eig.residual,
        "converged": eig.converged,
        "u": [float(v) for v in eig.u.values],
    }


def eigenpair_from_json(mesh, data):
    return EigenPair(
        lam=float(data["lambda"]),
        u=Field.of(mesh, np.asarray(data["u"], dtype=np.float64)),
        iterations=int(data["iterations"]),
        residual=float(data["residual"]),
        converged=bool(data["converged"]),
    )


def save_eigenpair(eig, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(eigenpair_to_json(eig), fh, sort_keys=True)


def rayleigh(mesh, u, phi, params):
    """energy / boundary_p_norm^p; rejects fields with zero boundary trace."""
    denom = boundary_p_power(mesh, u, params.p)
    if denom == 0.0:
        raise ValueError("Rayleigh quotient undefined: zero boundary trace")
    return energy(mesh, u, phi, params) / denom


def _make_solver(A):
    """Return a callable solving A x = b, direct or CG depending on size."""
    n = A.shape[0]
    if n <= _DIRECT_SOLVE_LIMIT:
        lu = spla.splu(A.tocsc())
        return lambda b, x0=None: lu.solve(b)
    dinv = 1.0 / A.diagonal()
    precond = spla.LinearOperator(A.shape, matvec=lambda x: dinv * x)

    def solve(b, x0=None):
        x, info = spla.cg(A, b, x0=x0, M=precond, rtol=1e-12, atol=0.0, maxiter=20 * n)
        if info != 0:
            raise np.linalg.LinAlgError(f"CG failed to converge (info={info})")
        return x

    return solve


def _inverse_iteration(A, Mb, tol, max_iters, u0):
    """Smallest finite eigenpair of ``A u = lam Mb u`` by inverse power steps."""
    solve = _make_solver(A)
    u = u0 / np.sqrt(u0 @ (Mb @ u0))
    lam = float(u @ (A @ u))
    iters = 0
    converged = False
    x_prev = None
    for iters in range(1, max_iters + 1):
        w = solve(Mb @ u, x0=x_prev)
        x_prev = w
        norm = np.sqrt(w @ (Mb @ w))
        if norm == 0.0 or not np.isfinite(norm):
            break
        w = w / norm
        lam_new = float(w @ (A @ w))
        u = w
        delta = abs(lam_new - lam)
        lam = lam_new
        if delta <= tol * abs(lam_new):
            converged = True
            break
    r = A @ u - lam * (Mb @ u)
    residual = float(np.linalg.norm(r) / max(np.linalg.norm(A @ u), 1e-300))
    return lam, u, iters, residual, converged


def _finish_sign(mesh, u):
    """Flip so the Mb-weighted boundary mean is nonnegative."""
    g = assembly.geometry(mesh)
    if float(g.boundary_weights @ u) < 0.0:
        return -u
    return u


def solve_linear(mesh, phi, sigma, opts=None, start=None):
    """First eigenpair of the p = 2 problem for boundary density phi.

    Returns a converged flag rather than raising on iteration-limit hits;
    the returned eigenfunction is normalized to unit boundary 2-norm and
    sign-fixed to nonnegative boundary mean.
    """
    opts = opts or SolverOptions()
    tol = opts.resolved_tol(2.0)
    A, Mb = assembly.assemble_linear(mesh, phi, sigma)
    if start is None:
        u0 = np.ones(mesh.n_vertices)
    else:
        u0 = np.array(assembly._as_values(start, mesh), dtype=np.float64)
    lam, u, iters, residual, converged = _inverse_iteration(
        A, Mb, tol, opts.max_iters, u0
    )
    u = _finish_sign(mesh, u)
    return EigenPair(
        lam=lam,
        u=Field.of(mesh, u),
        iterations=iters,
        residual=residual,
        converged=converged,
        positivity_violation=bool(u.min() < -1e-8),
        diagnostics={"method": "inverse_iteration"},
    )


def _constant_start(mesh, p):
    return np.full(mesh.n_vertices, mesh.perimeter ** (-1.0 / p))


def random_positive_start(mesh, seed):
    """Strictly positive random field, for multistart experiments."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 1.0, mesh.n_vertices)


def _descent(mesh, phi, params, opts, u0, frozen=None):
    """Projected BB descent on R; ``frozen`` pins a vertex set to zero."""
    tol = opts.resolved_tol(params.p)
    p = params.p

    def project(vals):
        if frozen is not None:
            vals = vals.copy()
            vals[frozen] = 0.0
        return vals

    u = project(np.asarray(u0, dtype=np.float64))
    norm = boundary_p_norm(mesh, u, p)
    if norm == 0.0:
        raise ValueError("start has zero boundary trace")
    u = u / norm

    def quotient(vals):
        return energy(mesh, vals, phi, params) / boundary_p_power(mesh, vals, p)

    def gradient(vals, r):
        g = energy_gradient(mesh, vals, phi, params)
        g -= r * boundary_power_gradient(mesh, vals, p)
        if frozen is not None:
            g[frozen] = 0.0
        return g

    R = quotient(u)
    g = gradient(u, R)
    gnorm = float(np.linalg.norm(g))
    alpha = 1.0 / max(gnorm, 1.0)
    rel_change = np.inf
    converged = False
    iters = 0
    line_search_failed = False

    for iters in range(1, opts.max_iters + 1):
        if rel_change <= tol and gnorm <= tol * max(1.0, abs(R)):
            converged = True
            iters -= 1
            break
        a = alpha
        gg = gnorm * gnorm
        accepted = False
        while a > 1e-18:
            v = u - a * g
            nv = boundary_p_norm(mesh, v, p)
            if nv > 0.0:
                v = v / nv
                Rv = quotient(v)
                if Rv <= R - opts.armijo_slope * a * gg:
                    accepted = True
                    break
            a *= opts.armijo_backtrack
        if not accepted:
            # Step underflow: the quotient cannot be decreased along -g.
            line_search_failed = gnorm > tol * max(1.0, abs(R))
            converged = not line_search_failed
            break
        s = v - u
        g_new = gradient(v, Rv)
        y = g_new - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0.0 else min(2.0 * a, 1e3)
        alpha = min(max(alpha, 1e-12), 1e3)
        rel_change = abs(R - Rv) / max(abs(Rv), 1e-300)
        u, R, g = v, Rv, g_new
        gnorm = float(np.linalg.norm(g))

    u = _finish_sign(mesh, u)
    diagnostics = {"method": "bb_descent", "grad_norm": gnorm}
    if line_search_failed:
        diagnostics["line_search_failure"] = True
    return EigenPair(
        lam=R,
        u=Field.of(mesh, u),
        iterations=iters,
        residual=gnorm,
        converged=converged,
        positivity_violation=bool(u.min() < -1e-8),
        diagnostics=diagnostics,
    )


def solve_nonlinear(mesh, phi, params, opts=None, start=None):
    """First eigenpair for general p > 1 by projected descent.

    The default start is the positive constant with unit boundary p-norm;
    pass ``start`` (a Field or array) to warm-start, which by monotonicity
    of the accepted steps can only lower the computed eigenvalue.
    """
    opts = opts or SolverOptions()
    if start is None:
        u0 = _constant_start(mesh, params.p)
    else:
        u0 = np.array(assembly._as_values(start, mesh), dtype=np.float64)
    return _descent(mesh, phi, params, opts, u0)


def solve_dirichlet(mesh, region, params, opts=None, start=None):
    """Mixed problem: trace pinned to zero on the closure of the arcs in ``region``.

    Minimizes the sigma-free quotient over fields vanishing at every
    boundary vertex whose arc coordinate lies in a closed arc of ``region``;
    for p = 2 this is a reduced generalized eigenproblem.
    """
    opts = opts or SolverOptions()
    params = ProblemParams(p=params.p, sigma=0.0, eps_reg=params.eps_reg)

    svals = mesh.boundary_vertex_arclength
    constrained_b = np.array(
        [region.contains(s, closed=True) for s in svals], dtype=bool
    )
    if constrained_b.all():
        raise InfeasibleConstraintError(
            "region covers every boundary vertex; no admissible trace remains"
        )
    frozen = np.zeros(mesh.n_vertices, dtype=bool)
    frozen[mesh.boundary_vertices[constrained_b]] = True

    if params.p == 2.0:
        phi0 = BoundaryDensity.constant(mesh, 0.0)
        A, Mb = assembly.assemble_linear(mesh, phi0, 0.0)
        free = ~frozen
        idx = np.flatnonzero(free)
        Aff = A[np.ix_(idx, idx)].tocsr()
        Mff = sp.diags(Mb.diagonal()[idx]).tocsr()
        if start is None:
            u0 = np.ones(len(idx))
        else:
            u0 = np.array(assembly._as_values(start, mesh))[idx]
        lam, uf, iters, residual, converged = _inverse_iteration(
            Aff, Mff, opts.resolved_tol(2.0), opts.max_iters, u0
        )
        u = np.zeros(mesh.n_vertices)
        u[idx] = uf
        u = _finish_sign(mesh, u)
        return EigenPair(
            lam=lam,
            u=Field.of(mesh, u),
            iterations=iters,
            residual=residual,
            converged=converged,
            positivity_violation=bool(u.min() < -1e-8),
            diagnostics={
                "method": "inverse_iteration_reduced",
                "constrained_vertices": int(frozen.sum()),
            },
        )

    phi0 = BoundaryDensity.constant(mesh, 0.0)
    if start is None:
        u0 = _constant_start(mesh, params.p)
    else:
        u0 = np.array(assembly._as_values(start, mesh))
    eig = _descent(mesh, phi0, params, opts, u0, frozen=frozen)
    eig.diagnostics["constrained_vertices"] = int(frozen.sum())
    return eig
