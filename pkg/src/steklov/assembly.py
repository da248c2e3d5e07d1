"""Discrete energy, gradients, and linear operators on P1 meshes.

The discrete energy of a nodal field u with boundary density phi is

    E(u) = sum_T |grad u|_T|^p area(T)                  (exact, gradient constant)
         + sum_T area(T)/3 * sum_{v in T} |u_v|^p       (vertex-lumped volume term)
         + sigma * sum_e phi_e len_e (|u_i|^p + |u_j|^p)/2   (trapezoid boundary term)

and the boundary p-norm is the trapezoid rule raised to 1/p.  These
quadratures are normative: every solver, eigenvalue and optimality check in
the package reduces to them.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class ProblemParams:
    """Exponent p > 1, boundary coupling sigma >= 0, gradient regularization.

    ``eps_reg`` smooths the degenerate gradient factor |grad u|^(p-2) near
    zero gradients; ``None`` resolves to 1e-8 for p < 2 (where the factor
    blows up) and to 0 for p >= 2 (where it is continuous).
    """

    p: float = 2.0
    sigma: float = 0.0
    eps_reg: float | None = None

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.eps_reg is not None and self.eps_reg < 0.0:
            raise ValueError(f"eps_reg must be nonnegative, got {self.eps_reg}")

    @property
    def eps(self):
        if self.eps_reg is not None:
            return self.eps_reg
        return 1e-8 if self.p < 2.0 else 0.0


@dataclass(frozen=True)
class Field:
    """Nodal P1 field: one finite float per mesh vertex."""

    values: np.ndarray

    @staticmethod
    def of(mesh, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(
                f"field has {values.shape} values, mesh has {mesh.n_vertices} vertices"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        return Field(values)


@dataclass(frozen=True)
class BoundaryDensity:
    """Piecewise-constant boundary density, one value in [0, 1] per loop edge."""

    edge_values: np.ndarray
    mass: float

    @staticmethod
    def of(mesh, edge_values):
        vals = np.ascontiguousarray(edge_values, dtype=np.float64)
        if vals.shape != (mesh.n_boundary_edges,):
            raise ValueError(
                f"density has {vals.shape} values, boundary has "
                f"{mesh.n_boundary_edges} edges"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("density contains non-finite values")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("density values must lie in [0, 1]")
        vals.flags.writeable = False
        mass = float(np.dot(vals, mesh.edge_lengths))
        return BoundaryDensity(edge_values=vals, mass=mass)

    @staticmethod
    def constant(mesh, value):
        return BoundaryDensity.of(mesh, np.full(mesh.n_boundary_edges, float(value)))


def load_density(mesh, path):
    """Read a ``{"edge_values": [...]}`` JSON file, validating range and length."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "edge_values" not in data:
        raise ValueError(f"{path}: expected a JSON object with an 'edge_values' key")
    return BoundaryDensity.of(mesh, np.asarray(data["edge_values"], dtype=np.float64))


def density_to_json(phi):
    return {"edge_values": [float(v) for v in phi.edge_values]}


def _as_values(u, mesh):
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
    if vals.shape != (mesh.n_vertices,):
        raise ValueError(
            f"field has shape {vals.shape}, mesh has {mesh.n_vertices} vertices"
        )
    return vals


def _phi_values(phi, mesh):
    if isinstance(phi, BoundaryDensity):
        return phi.edge_values
    vals = np.asarray(phi, dtype=np.float64)
    if vals.shape != (mesh.n_boundary_edges,):
        raise ValueError("density length does not match the boundary loop")
    return vals


class _Geometry:
    """Per-mesh precomputed P1 quantities (areas, basis gradients, lumped masses)."""

    def __init__(self, mesh):
        v = mesh.vertices
        t = mesh.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        d1 = p1 - p0
        d2 = p2 - p0
        area2 = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
        self.areas = 0.5 * area2
        # grad of the barycentric basis: rotate opposite edges by 90 degrees.
        e0 = p2 - p1
        e1 = p0 - p2
        e2 = p1 - p0
        grads = np.empty((len(t), 3, 2))
        grads[:, 0, 0] = -e0[:, 1]
        grads[:, 0, 1] = e0[:, 0]
        grads[:, 1, 0] = -e1[:, 1]
        grads[:, 1, 1] = e1[:, 0]
        grads[:, 2, 0] = -e2[:, 1]
        grads[:, 2, 1] = e2[:, 0]
        grads /= area2[:, None, None]
        self.basis_grads = grads

        n = mesh.n_vertices
        lumped = np.zeros(n)
        np.add.at(lumped, t.ravel(), np.repeat(self.areas / 3.0, 3))
        self.lumped_mass = lumped

        loop = mesh.boundary_loop
        half = 0.5 * mesh.edge_lengths
        bweights = np.zeros(n)
        np.add.at(bweights, loop[:, 0], half)
        np.add.at(bweights, loop[:, 1], half)
        self.boundary_weights = bweights  # unweighted trapezoid, zero off-boundary


_geometry_cache = weakref.WeakKeyDictionary()


def geometry(mesh):
    geom = _geometry_cache.get(mesh)
    if geom is None:
        geom = _Geometry(mesh)
        _geometry_cache[mesh] = geom
    return geom


def element_gradients(mesh, u):
    """Constant gradient of a P1 field on each triangle, shape (m, 2)."""
    vals = _as_values(u, mesh)
    g = geometry(mesh)
    ut = vals[mesh.triangles]  # (m, 3)
    return np.einsum("ti,tid->td", ut, g.basis_grads)


def energy(mesh, u, phi, params):
    """Normative discrete energy; see the module docstring for the quadrature."""
    vals = _as_values(u, mesh)
    p = params.p
    g = geometry(mesh)

    grads = element_gradients(mesh, vals)
    gnorm = np.hypot(grads[:, 0], grads[:, 1])
    total = float(np.dot(gnorm**p, g.areas))
    total += float(np.dot(g.lumped_mass, np.abs(vals) ** p))
    if params.sigma != 0.0:
        total += params.sigma * _boundary_term(mesh, vals, phi, p)
    return total


def _boundary_term(mesh, vals, phi, p):
    loop = mesh.boundary_loop
    pv = _phi_values(phi, mesh)
    ui = np.abs(vals[loop[:, 0]]) ** p
    uj = np.abs(vals[loop[:, 1]]) ** p
    return float(np.dot(pv * mesh.edge_lengths, 0.5 * (ui + uj)))


def boundary_p_norm(mesh, u, p):
    """Trapezoid-rule L^p norm of the boundary trace of u."""
    vals = _as_values(u, mesh)
    loop = mesh.boundary_loop
    ui = np.abs(vals[loop[:, 0]]) ** p
    uj = np.abs(vals[loop[:, 1]]) ** p
    return float(np.dot(mesh.edge_lengths, 0.5 * (ui + uj))) ** (1.0 / p)


def boundary_p_power(mesh, u, p):
    """The p-th power of :func:`boundary_p_norm` (the constraint functional)."""
    vals = _as_values(u, mesh)
    loop = mesh.boundary_loop
    ui = np.abs(vals[loop[:, 0]]) ** p
    uj = np.abs(vals[loop[:, 1]]) ** p
    return float(np.dot(mesh.edge_lengths, 0.5 * (ui + uj)))


def _signed_power(vals, q):
    """sign(u) * |u|^q, with the continuous extension 0 at u = 0 (q > 0)."""
    return np.sign(vals) * np.abs(vals) ** q


def energy_gradient(mesh, u, phi, params):
    """Nodal gradient of the discrete energy.

    The gradient-term factor |grad u|^(p-2) is replaced by
    (|grad u|^2 + eps^2)^((p-2)/2); with eps = 0 and p >= 2 this is the
    exact derivative of :func:`energy`.
    """
    vals = _as_values(u, mesh)
    p = params.p
    eps = params.eps
    g = geometry(mesh)

    grads = element_gradients(mesh, vals)
    gsq = grads[:, 0] ** 2 + grads[:, 1] ** 2
    coef = p * g.areas * (gsq + eps * eps) ** ((p - 2.0) / 2.0)

    out = np.zeros(mesh.n_vertices)
    tris = mesh.triangles
    for v in range(3):
        contrib = coef * np.einsum("td,td->t", grads, g.basis_grads[:, v, :])
        np.add.at(out, tris[:, v], contrib)

    out += p * g.lumped_mass * _signed_power(vals, p - 1.0)

    if params.sigma != 0.0:
        loop = mesh.boundary_loop
        pv = _phi_values(phi, mesh)
        half = 0.5 * pv * mesh.edge_lengths
        bw = np.zeros(mesh.n_vertices)
        np.add.at(bw, loop[:, 0], half)
        np.add.at(bw, loop[:, 1], half)
        out += params.sigma * p * bw * _signed_power(vals, p - 1.0)
    return out


def boundary_power_gradient(mesh, u, p):
    """Nodal gradient of :func:`boundary_p_power`."""
    vals = _as_values(u, mesh)
    g = geometry(mesh)
    return p * g.boundary_weights * _signed_power(vals, p - 1.0)


def assemble_linear(mesh, phi, sigma):
    """Sparse operators of the p = 2 problem.

    Returns ``(A, Mb)`` in CSR format with
    ``A = stiffness + lumped volume mass + sigma * phi-weighted boundary mass``
    and ``Mb`` the unweighted trapezoid boundary mass.  Both matrices are
    assembled symmetrically (A is SPD; Mb is diagonal PSD with rank equal to
    the number of boundary vertices), and ``u @ A @ u`` reproduces
    ``energy(u, phi, p=2, sigma)`` up to roundoff.
    """
    g = geometry(mesh)
    tris = mesh.triangles
    m = len(tris)
    n = mesh.n_vertices

    local = np.einsum("tid,tjd->tij", g.basis_grads, g.basis_grads)
    local *= g.areas[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()  # t-major, then i, then j
    cols = np.tile(tris, (1, 3)).ravel()
    # Deduplicate with a stable sort and sequential per-key sums.  The local
    # matrices are bitwise symmetric and their (i,j)/(j,i) contributions
    # arrive in the same triangle order, so the assembled matrix is exactly
    # symmetric -- scipy's own duplicate folding does not guarantee that.
    vals = local.ravel()
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    first = np.ones(len(rows), dtype=bool)
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(first)
    summed = np.add.reduceat(vals, starts)
    stiff = sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=(n, n))

    pv = _phi_values(phi, mesh)
    loop = mesh.boundary_loop
    half = 0.5 * pv * mesh.edge_lengths
    bphi = np.zeros(n)
    np.add.at(bphi, loop[:, 0], half)
    np.add.at(bphi, loop[:, 1], half)

    A = (stiff + sp.diags(g.lumped_mass + sigma * bphi)).tocsr()
    Mb = sp.diags(g.boundary_weights).tocsr()
    return A, Mb
