"""Tangential shape derivatives of the lowest boundary-weighted eigenvalue.

The region ``D`` enters the eigenvalue problem through the indicator
potential ``chi_D``.  Sliding the endpoints of ``D`` along the boundary at
prescribed tangential speeds changes the eigenvalue; the envelope theorem
gives a closed-form first derivative in terms of the eigenfunction's trace
at the endpoints.  This module evaluates that formula and arbitrates it
against a finite-difference oracle that re-rasterizes the perturbed region
on the *same* mesh (the domain never moves, only the indicator does).

Sign convention: ``sign_convention=+1`` is the envelope-theorem sign, under
which enlarging the region increases the eigenvalue for positive coupling.
``-1`` is exposed for callers who prefer the opposite orientation of the
endpoint normal; the finite-difference oracle is convention-free and tests
should be anchored to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assembly import Field, ProblemParams, boundary_p_power
from .eigensolver import (
    EigenPair,
    SolverOptions,
    rayleigh,
    solve_linear,
    solve_nonlinear,
)
from .errors import RegionCollisionError
from .mesh import Mesh, RegionSpec, locate_arc_point
from .rearrange import rasterize_region

__all__ = [
    "TangentField",
    "DerivativeReport",
    "shape_derivative_formula",
    "perturb_region",
    "shape_derivative_fd",
    "report_to_json",
]

#: Default finite-difference steps; geometric with ratio 2 so the two
#: smallest entries support Richardson extrapolation of the O(t^2) error.
DEFAULT_FD_STEPS = (1e-2, 5e-3, 2.5e-3)

# Relative slack for the eigenpair/region consistency guard.  The Rayleigh
# quotient of the supplied eigenfunction under the region's rasterized
# potential must reproduce the stored eigenvalue to this accuracy.
_CONSISTENCY_RTOL = 1e-6


@dataclass(frozen=True)
class TangentField:
    """Tangential speeds at the endpoints of a region's arcs.

    ``speeds[i]`` is the pair ``(v_begin, v_end)`` for the i-th arc of the
    region, in the same order as ``region.arcs``.  Positive speed moves an
    endpoint in the direction of increasing arc length.
    """

    region: RegionSpec
    speeds: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        speeds = tuple(
            (float(vb), float(ve)) for vb, ve in self.speeds
        )
        if len(speeds) != len(self.region.arcs):
            raise ValueError(
                f"need one (begin, end) speed pair per arc: got {len(speeds)} "
                f"pairs for {len(self.region.arcs)} arcs"
            )
        for vb, ve in speeds:
            if not (math.isfinite(vb) and math.isfinite(ve)):
                raise ValueError("endpoint speeds must be finite")
        object.__setattr__(self, "speeds", speeds)

    @classmethod
    def zero(cls, region: RegionSpec) -> "TangentField":
        return cls(region, tuple((0.0, 0.0) for _ in region.arcs))

    @classmethod
    def single_endpoint(
        cls,
        region: RegionSpec,
        arc: int = 0,
        end: bool = True,
        speed: float = 1.0,
    ) -> "TangentField":
        """Unit-speed motion of one endpoint, all others held fixed.

        With ``end=True`` and positive speed the arc grows (its terminal
        endpoint advances); with ``end=False`` positive speed shrinks it.
        """
        if not 0 <= arc < len(region.arcs):
            raise ValueError(f"arc index {arc} out of range")
        pairs = [[0.0, 0.0] for _ in region.arcs]
        pairs[arc][1 if end else 0] = float(speed)
        return cls(region, tuple((vb, ve) for vb, ve in pairs))

    @classmethod
    def translation(cls, region: RegionSpec, speed: float = 1.0) -> "TangentField":
        """Rigid translation: every endpoint moves at the same speed."""
        return cls(region, tuple((float(speed), float(speed)) for _ in region.arcs))

    def scaled(self, factor: float) -> "TangentField":
        return TangentField(
            self.region,
            tuple((factor * vb, factor * ve) for vb, ve in self.speeds),
        )

    def plus(self, other: "TangentField") -> "TangentField":
        if other.region is not self.region and other.region != self.region:
            raise ValueError("tangent fields live on different regions")
        return TangentField(
            self.region,
            tuple(
                (vb + wb, ve + we)
                for (vb, ve), (wb, we) in zip(self.speeds, other.speeds)
            ),
        )

    @property
    def max_speed(self) -> float:
        return max(
            (max(abs(vb), abs(ve)) for vb, ve in self.speeds), default=0.0
        )


@dataclass(frozen=True)
class DerivativeReport:
    """Closed-form endpoint derivative next to its finite-difference oracle.

    ``fd_table`` holds ``(step, central_difference)`` rows, largest step
    first; at least three steps in decreasing geometric progression are
    required so Richardson extrapolation of the two smallest is meaningful.
    ``sign_consistent`` is the literal predicate
    ``formula_value * fd_value > 0``.

    ``vertex_crossings`` is set when some finite-difference evaluation moved
    an endpoint across a mesh boundary vertex.  The discrete eigenvalue is
    only piecewise smooth in the endpoint positions (kinks at vertices), so
    crossed steps degrade the central differences; prefer steps smaller than
    the distance from each moving endpoint to its nearest vertex.
    """

    formula_value: float
    fd_value: float
    fd_table: tuple[tuple[float, float], ...]
    sign_consistent: bool
    relative_error: float
    vertex_crossings: bool = False

    def __post_init__(self) -> None:
        table = tuple((float(t), float(d)) for t, d in self.fd_table)
        object.__setattr__(self, "fd_table", table)
        object.__setattr__(self, "formula_value", float(self.formula_value))
        object.__setattr__(self, "fd_value", float(self.fd_value))
        object.__setattr__(self, "relative_error", float(self.relative_error))
        _validate_steps([t for t, _ in table])


def _validate_steps(steps: Sequence[float]) -> None:
    if len(steps) < 3:
        raise ValueError("need at least 3 finite-difference steps")
    for t in steps:
        if not (math.isfinite(t) and t > 0):
            raise ValueError("finite-difference steps must be positive")
    ratios = [steps[i] / steps[i + 1] for i in range(len(steps) - 1)]
    for r in ratios:
        if r <= 1.0 + 1e-12:
            raise ValueError("finite-difference steps must strictly decrease")
        if abs(r - ratios[0]) > 1e-9 * ratios[0]:
            raise ValueError(
                "finite-difference steps must form a geometric progression"
            )


def _trace_p_power_at(mesh: Mesh, values: np.ndarray, s: float, p: float) -> float:
    """|u(s)|^p with u linearly interpolated along the boundary polygon."""
    edge, frac = locate_arc_point(mesh, s)
    loop = mesh.boundary_vertices
    v0 = loop[edge]
    v1 = loop[(edge + 1) % len(loop)]
    u_s = (1.0 - frac) * values[v0] + frac * values[v1]
    return abs(u_s) ** p


def shape_derivative_formula(
    mesh: Mesh,
    pair: EigenPair,
    region: RegionSpec,
    tangent: TangentField,
    params: ProblemParams,
    sign_convention: float = 1.0,
) -> float:
    """Endpoint-sum formula for d(lambda)/dt under tangential endpoint flow.

    Each arc contributes ``|u(s_end)|^p * v_end - |u(s_begin)|^p * v_begin``:
    at a terminal endpoint the out-of-region tangent direction is increasing
    arc length, at an initial endpoint it is decreasing.  The eigenfunction
    is normalized internally to unit boundary p-power, so any scaling of the
    supplied eigenpair is accepted.

    Raises ``ValueError`` if the eigenpair was not solved with this region's
    indicator potential (checked through the Rayleigh quotient).
    """
    if sign_convention not in (1.0, -1.0, 1, -1):
        raise ValueError("sign_convention must be +1 or -1")
    if tangent.region != region:
        raise ValueError("tangent field was built for a different region")
    if region.perimeter != mesh.perimeter:
        raise ValueError("region and mesh disagree on the boundary perimeter")

    values = pair.u.values
    phi = rasterize_region(mesh, region)
    check = rayleigh(mesh, pair.u, phi, params)
    if abs(check - pair.lam) > _CONSISTENCY_RTOL * max(1.0, abs(pair.lam)):
        raise ValueError(
            "eigenpair/region mismatch: the supplied eigenpair was not "
            f"solved with this region's indicator (Rayleigh quotient {check!r} "
            f"vs stored eigenvalue {pair.lam!r})"
        )

    norm = boundary_p_power(mesh, pair.u, params.p)
    total = 0.0
    for (start, length), (v_begin, v_end) in zip(region.arcs, tangent.speeds):
        s_end = (start + length) % region.perimeter
        total += _trace_p_power_at(mesh, values, s_end, params.p) * v_end
        total -= _trace_p_power_at(mesh, values, start, params.p) * v_begin
    return float(sign_convention) * params.sigma * total / norm


def perturb_region(
    region: RegionSpec, tangent: TangentField, t: float
) -> RegionSpec:
    """Transport every arc endpoint by ``t`` times its tangential speed.

    Raises ``RegionCollisionError`` when the motion would make an arc vanish,
    merge two arcs, or swap the cyclic order of endpoints.
    """
    if tangent.region != region:
        raise ValueError("tangent field was built for a different region")
    if not math.isfinite(t):
        raise ValueError("perturbation parameter must be finite")
    if t == 0.0:
        return region

    period = region.perimeter
    # Unwrap all endpoints into one increasing sequence starting at the
    # first arc's begin, so cyclic order is an ordinary monotonicity check.
    positions: list[float] = []
    base = region.arcs[0][0]
    offset = 0.0
    prev = -math.inf
    for start, length in region.arcs:
        begin = base + ((start - base) % period) + offset
        if begin < prev:
            offset += period
            begin += period
        end = begin + length
        positions.extend((begin, end))
        prev = end
    speeds = [v for pair_ in tangent.speeds for v in pair_]

    moved = [q + t * v for q, v in zip(positions, speeds)]
    for i in range(1, len(moved)):
        if moved[i] <= moved[i - 1]:
            raise RegionCollisionError(
                "endpoint transport collapses or reorders arcs "
                f"(endpoints {i - 1} and {i} at t={t!r})"
            )
    if moved[-1] - moved[0] >= period:
        raise RegionCollisionError(
            f"endpoint transport wraps arcs onto each other at t={t!r}"
        )

    intervals = [
        (moved[2 * i] % period, (moved[2 * i] + (moved[2 * i + 1] - moved[2 * i])) % period)
        for i in range(len(region.arcs))
    ]
    try:
        return RegionSpec.from_intervals(intervals, period)
    except ValueError as exc:  # pragma: no cover - guarded above
        raise RegionCollisionError(str(exc)) from exc


def _solve_indicator(
    mesh: Mesh,
    region: RegionSpec,
    params: ProblemParams,
    opts: SolverOptions,
    start: Field | None,
) -> EigenPair:
    phi = rasterize_region(mesh, region)
    if params.p == 2.0:
        return solve_linear(mesh, phi, params.sigma, opts=opts, start=start)
    return solve_nonlinear(mesh, phi, params, opts=opts, start=start)


def shape_derivative_fd(
    mesh: Mesh,
    region: RegionSpec,
    tangent: TangentField,
    params: ProblemParams,
    steps: Sequence[float] = DEFAULT_FD_STEPS,
    opts: SolverOptions | None = None,
    sign_convention: float = 1.0,
) -> DerivativeReport:
    """Central-difference oracle for the endpoint derivative.

    For each step ``t`` the region is transported to ``+t`` and ``-t``, the
    indicator is re-rasterized on the unchanged mesh (end edges become
    fractional), the eigenvalue recomputed, and the central difference
    formed.  ``fd_value`` is the Richardson extrapolation of the two
    smallest steps; the closed-form value comes from
    ``shape_derivative_formula`` on the unperturbed region.
    """
    steps = [float(t) for t in steps]
    _validate_steps(steps)
    opts = opts or SolverOptions()

    period = region.perimeter
    t_max = max(steps)
    crossings = False
    for (start, length), (v_begin, v_end) in zip(region.arcs, tangent.speeds):
        for s, v in ((start, v_begin), ((start + length) % period, v_end)):
            if v == 0.0:
                continue
            gaps = np.abs(
                (mesh.cum_arclength - s + 0.5 * period) % period - 0.5 * period
            )
            if bool((gaps < abs(v) * t_max).any()):
                crossings = True

    base = _solve_indicator(mesh, region, params, opts, start=None)
    formula = shape_derivative_formula(
        mesh, base, region, tangent, params, sign_convention=sign_convention
    )

    table: list[tuple[float, float]] = []
    for t in steps:
        lam_plus = _solve_indicator(
            mesh, perturb_region(region, tangent, t), params, opts, start=base.u
        ).lam
        lam_minus = _solve_indicator(
            mesh, perturb_region(region, tangent, -t), params, opts, start=base.u
        ).lam
        table.append((t, (lam_plus - lam_minus) / (2.0 * t)))

    # Richardson extrapolation of the two smallest steps kills the O(t^2)
    # truncation term: for step ratio r, fd = (r^2 d_small - d_large)/(r^2-1).
    r = table[-2][0] / table[-1][0]
    d_large, d_small = table[-2][1], table[-1][1]
    fd_value = (r * r * d_small - d_large) / (r * r - 1.0)

    return DerivativeReport(
        formula_value=formula,
        fd_value=fd_value,
        fd_table=tuple(table),
        sign_consistent=bool(formula * fd_value > 0.0),
        relative_error=abs(formula - fd_value) / max(abs(fd_value), 1e-14),
        vertex_crossings=crossings,
    )


def report_to_json(report: DerivativeReport) -> dict:
    return {
        "formula_value": report.formula_value,
        "fd_value": report.fd_value,
        "fd_table": [{"t": t, "diff": d} for t, d in report.fd_table],
        "sign_consistent": report.sign_consistent,
        "relative_error": report.relative_error,
        "vertex_crossings": report.vertex_crossings,
    }
