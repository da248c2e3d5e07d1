"""Optimal boundary-potential rearrangement by alternating minimization.

For a fixed trace u, the best mass-a density minimizing the boundary term
is the solution of a one-dimensional transportation LP whose optimum is a
sub-level set ("bathtub") fill: sort edges by trace weight, fill the
cheapest ones, split at most one edge fractionally.  Alternating eigensolve
and bathtub steps monotonically drives the eigenvalue down; on the disk the
iteration settles on a single boundary cap.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import assembly
from .assembly import BoundaryDensity, ProblemParams
from .errors import NonConvergenceError
from .eigensolver import SolverOptions, solve_linear, solve_nonlinear
from .mesh import RegionSpec


def _circular_overlaps(mesh, start, length):
    """Overlap length of window ``[start, start + length)`` with every edge."""
    P = mesh.perimeter
    x = (mesh.cum_arclength - start) % P  # edge start in window coordinates
    le = mesh.edge_lengths
    main = np.maximum(0.0, np.minimum(x + le, length) - x)
    wrapped = np.maximum(0.0, np.minimum(x + le - P, length))
    return main + wrapped


def rasterize_region(mesh, region):
    """Edge-value indicator of a region: per-edge covered fraction in [0, 1]."""
    vals = np.zeros(mesh.n_boundary_edges)
    for start, length in region.arcs:
        vals += _circular_overlaps(mesh, start, length) / mesh.edge_lengths
    return BoundaryDensity.of(mesh, np.minimum(vals, 1.0))


def cap_indicator(mesh, center_angle, mass):
    """Single boundary arc of the given mass centered at polar angle ``center_angle``.

    Only meaningful on generator-tagged disk meshes, where arc length and
    polar angle are proportional.  Returns ``(RegionSpec, BoundaryDensity)``
    with fractional end edges so the density mass is matched exactly.
    """
    if mesh.kind != "disk":
        raise ValueError(f"cap_indicator requires a disk mesh, got kind={mesh.kind!r}")
    P = mesh.perimeter
    if not (0.0 < mass <= P):
        raise ValueError(f"cap mass must lie in (0, perimeter], got {mass}")
    center_s = (center_angle % (2.0 * math.pi)) / (2.0 * math.pi) * P
    start = (center_s - 0.5 * mass) % P
    if mass == P:
        region = RegionSpec(arcs=((start, P),), perimeter=P)
    else:
        region = RegionSpec.from_intervals([(start, start + mass)], P)
    return region, rasterize_region(mesh, region)


def bathtub(mesh, u, mass, p=2.0):
    """Exact minimizer of ``sum_e phi_e w_e len_e`` at the given mass.

    ``w_e = (|u_i|^p + |u_j|^p)/2`` is the trapezoid trace weight.  Edges are
    filled in ascending-weight order (ties by lower edge index) with at most
    one fractional edge; this greedy fill is the exact optimum of the
    underlying LP.  Returns ``(BoundaryDensity, level)`` where ``level`` is
    the weight of the last edge touched.
    """
    vals = assembly._as_values(u, mesh)
    P = mesh.perimeter
    if not (0.0 <= mass <= P + 1e-12 * P):
        raise ValueError(f"mass {mass} outside [0, perimeter={P}]")
    loop = mesh.boundary_loop
    w = 0.5 * (np.abs(vals[loop[:, 0]]) ** p + np.abs(vals[loop[:, 1]]) ** p)
    phi = np.zeros(mesh.n_boundary_edges)
    order = np.lexsort((np.arange(len(w)), w))
    remaining = float(mass)
    level = 0.0
    for e in order:
        if remaining <= 0.0:
            break
        le = mesh.edge_lengths[e]
        if remaining >= le:
            phi[e] = 1.0
            remaining -= le
        else:
            phi[e] = remaining / le
            remaining = 0.0
        level = float(w[e])
    return BoundaryDensity.of(mesh, phi), level


def bathtub_objective(mesh, u, phi, p=2.0):
    """The boundary LP objective ``sum_e phi_e w_e len_e`` for density phi."""
    vals = assembly._as_values(u, mesh)
    loop = mesh.boundary_loop
    w = 0.5 * (np.abs(vals[loop[:, 0]]) ** p + np.abs(vals[loop[:, 1]]) ** p)
    pv = phi.edge_values if isinstance(phi, BoundaryDensity) else np.asarray(phi)
    return float(np.dot(pv * mesh.edge_lengths, w))


def random_admissible(mesh, mass, seed):
    """Deterministic random density with exactly the requested mass.

    Uniform values are rescaled to the target mass; values clipped at 1 are
    frozen and the remainder rescaled again until feasible.
    """
    P = mesh.perimeter
    if not (0.0 <= mass <= P + 1e-12 * P):
        raise ValueError(f"mass {mass} outside [0, perimeter={P}]")
    B = mesh.n_boundary_edges
    lens = mesh.edge_lengths
    if mass == 0.0:
        return BoundaryDensity.of(mesh, np.zeros(B))
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.0, 1.0, B)
    saturated = np.zeros(B, dtype=bool)
    for _ in range(B + 1):
        free_mass = float(np.dot(vals[~saturated], lens[~saturated]))
        target = mass - float(np.dot(vals[saturated], lens[saturated]))
        if free_mass <= 0.0 or target <= 0.0:
            break
        vals[~saturated] *= target / free_mass
        over = (vals > 1.0) & ~saturated
        if not over.any():
            break
        vals[over] = 1.0
        saturated |= over
    return BoundaryDensity.of(mesh, np.clip(vals, 0.0, 1.0))


def binarize(mesh, phi):
    """Round fractional edges to {0, 1} at threshold 1/2 (mass is not preserved)."""
    return BoundaryDensity.of(mesh, (phi.edge_values >= 0.5).astype(np.float64))


def support_region(mesh, phi, threshold=0.5):
    """Arcs spanned by maximal runs of edges with ``phi_e > threshold``.

    ``threshold=0.0`` yields the support of the density, fractional edges
    included.
    """
    mask = phi.edge_values > threshold
    P = mesh.perimeter
    if not mask.any():
        return RegionSpec(arcs=(), perimeter=P)
    if mask.all():
        return RegionSpec(arcs=((0.0, P),), perimeter=P)
    B = len(mask)
    cum = mesh._cum_ext
    # Find cyclic runs of True.
    starts = [k for k in range(B) if mask[k] and not mask[(k - 1) % B]]
    intervals = []
    for k in starts:
        end = k
        while mask[(end + 1) % B]:
            end = (end + 1) % B
        s0 = cum[k]
        s1 = cum[end + 1]
        intervals.append((s0, s1))
    return RegionSpec.from_intervals(intervals, P)


def arc_defect(mesh, phi):
    """Mass not captured by the best single window of length ``mass(phi)``.

    Slides a window ``[alpha, alpha + mass)`` around the boundary and sums
    the full mass ``phi_e len_e`` of every edge the window meets; the defect
    is ``mass - max(captured)``.  Zero (up to rasterization) exactly when the
    density is a single-arc indicator.
    """
    m = phi.mass
    if m <= 0.0:
        return 0.0
    P = mesh.perimeter
    if m >= P:
        return 0.0
    edge_masses = phi.edge_values * mesh.edge_lengths
    starts = mesh.cum_arclength
    events = np.unique(np.concatenate([starts, (starts - m) % P]))
    # Evaluate between consecutive events (cyclically) where the met-edge
    # set is constant; midpoints keep window ends off edge boundaries.
    gaps = np.diff(np.concatenate([events, [events[0] + P]]))
    mids = (events + 0.5 * gaps) % P
    best = 0.0
    for alpha in mids:
        overlaps = _circular_overlaps(mesh, alpha, m)
        best = max(best, float(edge_masses[overlaps > 0.0].sum()))
    # full-capture windows can overshoot the mass by rounding
    return max(0.0, m - best)


@dataclass
class OptimizationTrace:
    """History of one alternating optimize run."""

    lambdas: list
    potentials: list
    levels: list
    converged: bool
    outer_iterations: int
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def final_potential(self):
        return self.potentials[-1]

    @property
    def final_lambda(self):
        return self.lambdas[-1]


def trace_to_json(trace):
    return [
        {
            "iter": k,
            "lambda": trace.lambdas[k],
            "level": trace.levels[k],
            "mass": trace.potentials[k].mass,
        }
        for k in range(len(trace.lambdas))
    ]


def save_trace(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_json(trace), fh, sort_keys=True)


def save_trace_csv(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "lambda"])
        for k, lam in enumerate(trace.lambdas):
            writer.writerow([k, repr(lam)])


def _initial_density(mesh, mass, phi0, seed):
    P = mesh.perimeter
    if isinstance(phi0, BoundaryDensity):
        return phi0
    if phi0 == "random":
        return random_admissible(mesh, mass, seed)
    if phi0 is None:
        if mass == 0.0:
            return BoundaryDensity.of(mesh, np.zeros(mesh.n_boundary_edges))
        if mass >= P:
            return BoundaryDensity.constant(mesh, 1.0)
        region = RegionSpec.from_intervals([(0.0, mass)], P)
        return rasterize_region(mesh, region)
    raise ValueError(f"unsupported initial density {phi0!r}")


def optimize_potential(
    mesh,
    params,
    mass,
    opts=None,
    phi0=None,
    max_outer=100,
    outer_tol=None,
):
    """Minimize the first eigenvalue over densities of the given mass.

    Alternates an eigensolve for the current density with a bathtub refill
    for the current trace.  Inner solves are warm-started with the previous
    eigenfunction, which makes the recorded eigenvalues non-increasing.
    Stops on an edgewise-identical refill (a bathtub fixed point), on a
    relative eigenvalue change below ``outer_tol``, on a detected cycle
    (flagged in diagnostics), or after ``max_outer`` iterations.
    """
    opts = opts or SolverOptions()
    if outer_tol is None:
        outer_tol = opts.tol if opts.tol is not None else 1e-9
    P = mesh.perimeter
    if not (0.0 <= mass <= P + 1e-12 * P):
        raise ValueError(f"mass {mass} outside [0, perimeter={P}]")

    phi = _initial_density(mesh, mass, phi0, opts.seed)
    lambdas, potentials, levels = [], [], []
    history = []
    converged = False
    diagnostics = {}
    u_prev = None

    for k in range(max_outer):
        if params.p == 2.0:
            eig = solve_linear(mesh, phi, params.sigma, opts, start=u_prev)
        else:
            eig = solve_nonlinear(mesh, phi, params, opts, start=u_prev)
        if not eig.converged:
            raise NonConvergenceError(
                f"inner eigensolve failed at outer iteration {k}",
                diagnostics={"outer_iteration": k, "eigen": eig.diagnostics},
            )
        u_prev = eig.u
        lambdas.append(eig.lam)
        potentials.append(phi)
        new_phi, level = bathtub(mesh, eig.u, mass, params.p)
        levels.append(level)

        delta = np.abs(new_phi.edge_values - phi.edge_values)
        if float(delta.max(initial=0.0)) <= 1e-12:
            converged = True
            break
        cycle = any(
            float(np.abs(new_phi.edge_values - old).max(initial=0.0)) <= 1e-12
            for old in history
        )
        if cycle:
            diagnostics["cycle_detected"] = True
            break
        if len(lambdas) >= 2 and abs(lambdas[-1] - lambdas[-2]) <= outer_tol * abs(
            lambdas[-1]
        ):
            converged = True
            break
        history.append(phi.edge_values)
        history = history[-4:]
        phi = new_phi

    return OptimizationTrace(
        lambdas=lambdas,
        potentials=potentials,
        levels=levels,
        converged=converged,
        outer_iterations=len(lambdas),
        diagnostics=diagnostics,
    )
