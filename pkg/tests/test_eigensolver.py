import json
import math

import numpy as np
import pytest

from steklov import (
    BoundaryDensity,
    Field,
    InfeasibleConstraintError,
    ProblemParams,
    RegionSpec,
    SolverOptions,
    eigenpair_from_json,
    eigenpair_to_json,
    generate_disk,
    random_positive_start,
    rayleigh,
    solve_dirichlet,
    solve_linear,
    solve_nonlinear,
)

# ---------------------------------------------------------------- oracles
#
# Independent reference values, computed by the routines below and frozen.
# The series oracle needs only integer arithmetic and exp/factorials; the
# descent oracle uses nothing from the package but the mesh coordinates.

# I1(1)/I0(1): first eigenvalue of the linear problem on the unit disk with
# zero potential (radial mode of the associated Bessel quotient).
BESSEL_QUOTIENT = 0.44638996589653457

# Rayleigh-quotient minimum on generate_rectangle(1, 1, 0.34) computed by
# brute_force_minimum below (plain-Python energy + coordinate descent).
SQUARE_TINY_LAMBDA = {1.5: 0.2490020400336109, 3.0: 0.2157918102123785}


def bessel_i_ratio(x, terms=40):
    """I1(x)/I0(x) by the power series sum (x/2)^(nu+2k) / (k! (k+nu)!)."""
    i0 = sum((x / 2.0) ** (2 * k) / (math.factorial(k) ** 2) for k in range(terms))
    i1 = sum(
        (x / 2.0) ** (1 + 2 * k) / (math.factorial(k) * math.factorial(k + 1))
        for k in range(terms)
    )
    return i1 / i0


def plain_energy(mesh, values, phi_edges, p, sigma):
    # element p-Dirichlet term with constant gradients
    total = 0.0
    for tri in mesh.triangles:
        (x1, y1), (x2, y2), (x3, y3) = mesh.vertices[tri]
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        area = 0.5 * abs(det)
        u1, u2, u3 = values[tri]
        gx = ((y2 - y3) * u1 + (y3 - y1) * u2 + (y1 - y2) * u3) / det
        gy = ((x3 - x2) * u1 + (x1 - x3) * u2 + (x2 - x1) * u3) / det
        total += area * (gx * gx + gy * gy) ** (p / 2.0)
        total += (area / 3.0) * sum(abs(values[v]) ** p for v in tri)
    loop = mesh.boundary_vertices
    for k in range(mesh.n_boundary_edges):
        i, j = loop[k], loop[(k + 1) % len(loop)]
        w = mesh.edge_lengths[k] * (abs(values[i]) ** p + abs(values[j]) ** p) / 2.0
        total += sigma * phi_edges[k] * w
    return total


def plain_boundary_power(mesh, values, p):
    loop = mesh.boundary_vertices
    total = 0.0
    for k in range(mesh.n_boundary_edges):
        i, j = loop[k], loop[(k + 1) % len(loop)]
        total += mesh.edge_lengths[k] * (abs(values[i]) ** p + abs(values[j]) ** p) / 2.0
    return total


def brute_force_minimum(mesh, p, sigma=0.0, iters=4000):
    """Coordinate finite-difference descent on the plain-Python quotient."""
    phi = np.zeros(mesh.n_boundary_edges)

    def quotient(vals):
        return plain_energy(mesh, vals, phi, p, sigma) / plain_boundary_power(
            mesh, vals, p
        )

    vals = np.ones(mesh.n_vertices)
    step = 0.25
    best = quotient(vals)
    for _ in range(iters):
        grad = np.zeros_like(vals)
        for i in range(len(vals)):
            vals[i] += 1e-6
            up = quotient(vals)
            vals[i] -= 2e-6
            dn = quotient(vals)
            vals[i] += 1e-6
            grad[i] = (up - dn) / 2e-6
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-12:
            break
        while step > 1e-14:
            trial = vals - step * grad / gnorm
            q = quotient(trial)
            if q < best:
                vals, best = trial, q
                step *= 1.2
                break
            step *= 0.5
        else:
            break
    return best


def test_bessel_series_matches_frozen_constant():
    assert bessel_i_ratio(1.0) == pytest.approx(BESSEL_QUOTIENT, abs=1e-15)


def test_descent_oracle_reproduces_frozen_value(square_tiny):
    # cheap case re-run in full; the p=3 twin is covered by the slow marker
    assert brute_force_minimum(square_tiny, 1.5) == pytest.approx(
        SQUARE_TINY_LAMBDA[1.5], abs=1e-10
    )


@pytest.mark.slow
def test_descent_oracle_reproduces_frozen_value_p3(square_tiny):
    assert brute_force_minimum(square_tiny, 3.0) == pytest.approx(
        SQUARE_TINY_LAMBDA[3.0], abs=1e-10
    )


# ------------------------------------------------------------ linear solve


def test_disk_eigenvalue_near_bessel_quotient():
    mesh = generate_disk(0.1)
    pair = solve_linear(mesh, BoundaryDensity.constant(mesh, 0.0), 0.0)
    assert pair.converged
    assert pair.lam == pytest.approx(BESSEL_QUOTIENT, abs=1e-2)
    assert pair.lam == pytest.approx(BESSEL_QUOTIENT, rel=2e-3)


def test_linear_solution_is_rayleigh_minimizer_proxy(square_tiny, rng):
    phi = BoundaryDensity.of(square_tiny, rng.uniform(0, 1, square_tiny.n_boundary_edges))
    params = ProblemParams(p=2.0, sigma=2.0)
    pair = solve_linear(square_tiny, phi, params.sigma)
    for _ in range(100):
        v = Field.of(square_tiny, rng.uniform(-1, 1, square_tiny.n_vertices))
        if plain_boundary_power(square_tiny, v.values, 2.0) < 1e-12:
            continue
        assert rayleigh(square_tiny, v, phi, params) >= pair.lam - 1e-12


def test_eigenvalue_monotone_in_sigma(square_tiny):
    phi = BoundaryDensity.constant(square_tiny, 0.7)
    lams = [solve_linear(square_tiny, phi, s).lam for s in (0.0, 1.0, 5.0, 25.0)]
    assert all(b > a for a, b in zip(lams, lams[1:]))


def test_eigenfunction_positive_on_disk(disk_fine):
    pair = solve_linear(disk_fine, BoundaryDensity.constant(disk_fine, 0.0), 0.0)
    assert not pair.positivity_violation
    assert np.all(pair.u.values > 0)


def test_random_starts_agree_on_lowest_eigenvalue(square_tiny):
    phi = BoundaryDensity.constant(square_tiny, 0.4)
    opts = SolverOptions(tol=1e-11)
    lams = []
    for seed in range(20):
        start = random_positive_start(square_tiny, seed)
        lams.append(solve_linear(square_tiny, phi, 3.0, opts=opts, start=start).lam)
    spread = max(lams) - min(lams)
    assert spread <= 5 * 1e-11 * abs(lams[0])


def test_non_convergence_is_reported(square_tiny):
    phi = BoundaryDensity.constant(square_tiny, 0.3)
    pair = solve_linear(square_tiny, phi, 1.0, opts=SolverOptions(max_iters=1))
    assert not pair.converged


def test_eigenpair_json_round_trip(square_tiny):
    phi = BoundaryDensity.constant(square_tiny, 0.0)
    pair = solve_linear(square_tiny, phi, 0.0)
    data = json.loads(json.dumps(eigenpair_to_json(pair)))
    again = eigenpair_from_json(square_tiny, data)
    assert again.lam == pair.lam
    assert np.array_equal(again.u.values, pair.u.values)
    assert set(eigenpair_to_json(pair)) == {
        "lambda",
        "iterations",
        "residual",
        "converged",
        "u",
    }


# --------------------------------------------------------- nonlinear solve


def test_descent_matches_frozen_oracle_values(square_tiny):
    for p, expected in SQUARE_TINY_LAMBDA.items():
        pair = solve_nonlinear(
            square_tiny,
            BoundaryDensity.constant(square_tiny, 0.0),
            ProblemParams(p=p, sigma=0.0),
        )
        assert pair.converged
        assert pair.lam == pytest.approx(expected, abs=5e-10)


def test_descent_agrees_with_inverse_iteration_at_p2(square_tiny, disk_coarse, rng):
    for mesh in (square_tiny, disk_coarse):
        phi = BoundaryDensity.of(mesh, rng.uniform(0, 1, mesh.n_boundary_edges))
        linear = solve_linear(mesh, phi, 4.0)
        descent = solve_nonlinear(mesh, phi, ProblemParams(p=2.0, sigma=4.0))
        assert descent.lam == pytest.approx(linear.lam, rel=1e-6)


def test_constant_shift_identity(square_tiny):
    # with the filled potential the energy gains exactly sigma*c per unit of
    # normalized boundary mass, so warm-starting from the unshifted
    # eigenfunction reproduces the shift to machine precision
    for p in (1.5, 2.0, 3.0):
        params0 = ProblemParams(p=p, sigma=2.0)
        phi0 = BoundaryDensity.constant(square_tiny, 0.0)
        base = (
            solve_linear(square_tiny, phi0, 2.0)
            if p == 2.0
            else solve_nonlinear(square_tiny, phi0, params0)
        )
        c = 0.625
        phic = BoundaryDensity.constant(square_tiny, c)
        shifted = (
            solve_linear(square_tiny, phic, 2.0, start=base.u)
            if p == 2.0
            else solve_nonlinear(square_tiny, phic, params0, start=base.u)
        )
        assert shifted.lam - base.lam == pytest.approx(2.0 * c, rel=1e-12)


# --------------------------------------------------------- pinned boundary


def test_dirichlet_monotone_in_region(disk_fine):
    params = ProblemParams(p=2.0, sigma=0.0)
    base = solve_linear(disk_fine, BoundaryDensity.constant(disk_fine, 0.0), 0.0)
    lams = []
    for frac in (0.1, 0.25, 0.5, 0.9):
        region = RegionSpec.from_intervals(
            [(0.0, frac * disk_fine.perimeter)], disk_fine.perimeter
        )
        pair = solve_dirichlet(disk_fine, region, params)
        lams.append(pair.lam)
    assert all(lam > base.lam for lam in lams)
    assert all(b > a for a, b in zip(lams, lams[1:]))


def test_dirichlet_rejects_fully_pinned_boundary(square_tiny):
    half = square_tiny.perimeter / 2.0
    region = RegionSpec.from_intervals(
        [(0.0, half), (half, square_tiny.perimeter)], square_tiny.perimeter
    )
    with pytest.raises(InfeasibleConstraintError):
        solve_dirichlet(square_tiny, region, ProblemParams(p=2.0))


def test_dirichlet_hairline_region_pins_one_vertex(disk_fine):
    params = ProblemParams(p=2.0, sigma=0.0)
    base = solve_linear(disk_fine, BoundaryDensity.constant(disk_fine, 0.0), 0.0)
    tiny = RegionSpec.from_intervals([(0.0, 1e-6)], disk_fine.perimeter)
    pair = solve_dirichlet(disk_fine, tiny, params)
    # closed-arc membership captures exactly the vertex at s = 0; a single
    # pinned point still raises the discrete eigenvalue by a visible amount
    # (point constraints relax only logarithmically under refinement), but
    # stays below any genuinely extended pinned arc
    assert pair.diagnostics["constrained_vertices"] == 1
    assert pair.lam > base.lam
    quarter = RegionSpec.from_intervals(
        [(0.0, disk_fine.perimeter / 4.0)], disk_fine.perimeter
    )
    assert pair.lam < solve_dirichlet(disk_fine, quarter, params).lam


def test_dirichlet_solution_vanishes_on_region(square_tiny):
    region = RegionSpec.from_intervals([(0.0, 1.0)], square_tiny.perimeter)
    pair = solve_dirichlet(square_tiny, region, ProblemParams(p=2.0))
    s = square_tiny.boundary_vertex_arclength
    pinned = [
        square_tiny.boundary_vertices[k]
        for k in range(square_tiny.n_boundary_edges)
        if region.contains(float(s[k]), closed=True)
    ]
    assert pinned
    assert np.all(pair.u.values[pinned] == 0.0)


def test_dirichlet_descent_path_matches_linear_path(square_tiny):
    region = RegionSpec.from_intervals([(0.0, 1.0)], square_tiny.perimeter)
    linear = solve_dirichlet(square_tiny, region, ProblemParams(p=2.0))
    # p slightly off 2 exercises the projected-descent branch
    descent = solve_dirichlet(square_tiny, region, ProblemParams(p=2.000001))
    assert descent.lam == pytest.approx(linear.lam, rel=1e-5)
