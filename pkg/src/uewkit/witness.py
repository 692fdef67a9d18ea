"""Separable bounds, separability curves, detection, and witness tightening.

The central object is the separability curve g(c): the supremum of the test
operator expectation over pure product states whose constraint expectation
equals c.  Points strictly above the curve certify entanglement; the curve is
concave, peaks at the unconstrained optimum, and never exceeds the
unconstrained separable bound g_s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ._optimize import (
    OptimizerSettings,
    PairObjective,
    ProductManifold,
    RawBound,
    fingerprint_operators,
    optimize_product_bound,
    penalized_value_and_grad,
)
from .qcore import HermitianOperator, ProductState, PureState

__all__ = [
    "OptimizerSettings",
    "TestOperator",
    "ConstraintSpec",
    "BoundResult",
    "CurvePoint",
    "SeparabilityCurve",
    "WitnessOperator",
    "Verdict",
    "TightenResult",
    "sew_bound",
    "attainable_constraint_range",
    "constrained_bound",
    "constrained_pure_state_sup",
    "separability_curve",
    "branch_bounds",
    "detect",
    "tighten",
    "entangled_max",
    "optimal_entangled_state",
    "witness_from_bound",
    "semianalytic_pair_bound",
    "make_penalized_objective",
    "curve_to_csv",
    "curve_from_csv",
]

CHORD_TOL = 1e-6
TANGENCY_TOL = 1e-8
RANGE_TOL = 1e-9
X_CLOSED_FORM = 2.0 / 3.0


@dataclass(frozen=True)
class TestOperator:
    """Hermitian test operator whose separable supremum defines a witness."""

    op: HermitianOperator


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraint operator together with the measured/required value c."""

    op: HermitianOperator
    value: float


@dataclass(frozen=True)
class BoundResult:
    value: float
    maximizer: ProductState
    feasibility_residual: float
    restarts_used: int
    converged: bool


@dataclass(frozen=True)
class CurvePoint:
    c: float
    g: float
    converged: bool
    restarts: int


@dataclass(frozen=True)
class SeparabilityCurve:
    """Sampled concave bound g(c) with optimizer metadata."""

    points: tuple[CurvePoint, ...]
    operator_fingerprint: str
    optimizer_settings: Optional[OptimizerSettings]
    reliable: bool

    def __post_init__(self):
        cs = self.c_values
        if len(cs) < 3:
            raise ValueError("a separability curve needs at least 3 grid points")
        if np.any(np.diff(cs) <= 0):
            raise ValueError("curve grid must be strictly increasing in c")

    @property
    def c_values(self) -> np.ndarray:
        return np.array([p.c for p in self.points])

    @property
    def g_values(self) -> np.ndarray:
        return np.array([p.g for p in self.points])

    @property
    def c_range(self) -> tuple[float, float]:
        return self.points[0].c, self.points[-1].c

    @property
    def peak(self) -> CurvePoint:
        """Grid point with the largest bound (the unconstrained optimum)."""
        return max(self.points, key=lambda p: (p.g, -p.c))

    def value_upper(self, c: float) -> float:
        """Conservative upper estimate of g(c) between grid nodes.

        Uses the one-sided secant extensions of the neighboring chords, which
        majorize any concave function; chord interpolation would instead
        under-estimate between nodes and could make verdicts unsound.
        """
        cs, gs = self.c_values, self.g_values
        if c < cs[0] - 1e-12 or c > cs[-1] + 1e-12:
            raise ValueError(f"c={c} outside curve range {self.c_range}")
        c = min(max(c, cs[0]), cs[-1])
        exact = np.searchsorted(cs, c)
        if exact < len(cs) and cs[exact] == c:
            return float(gs[exact])
        i = int(np.searchsorted(cs, c, side="right") - 1)
        i = min(max(i, 0), len(cs) - 2)
        cands = []
        if i >= 1:
            slope = (gs[i] - gs[i - 1]) / (cs[i] - cs[i - 1])
            cands.append(gs[i] + slope * (c - cs[i]))
        if i + 2 <= len(cs) - 1:
            slope = (gs[i + 2] - gs[i + 1]) / (cs[i + 2] - cs[i + 1])
            cands.append(gs[i + 1] + slope * (c - cs[i + 1]))
        return float(min(cands))

    def max_upper_on(self, lo: float, hi: float) -> float:
        """Upper bound of max g over [lo, hi] (clipped to the curve range)."""
        cs, gs = self.c_values, self.g_values
        lo = max(lo, cs[0])
        hi = min(hi, cs[-1])
        if lo > hi:
            raise ValueError("empty interval after clipping")
        if lo == hi:
            return self.value_upper(lo)
        best = max(self.value_upper(lo), self.value_upper(hi))
        inside = (cs >= lo) & (cs <= hi)
        if np.any(inside):
            best = max(best, float(np.max(gs[inside])))
        # peaks of the secant envelope at chord-extension crossings
        for j in range(len(cs) - 1):
            a, b = cs[j], cs[j + 1]
            if b < lo or a > hi or j < 1 or j + 2 > len(cs) - 1:
                continue
            s1 = (gs[j] - gs[j - 1]) / (cs[j] - cs[j - 1])
            s2 = (gs[j + 2] - gs[j + 1]) / (cs[j + 2] - cs[j + 1])
            if abs(s1 - s2) < 1e-15:
                continue
            cx = (gs[j + 1] - gs[j] + s1 * cs[j] - s2 * cs[j + 1]) / (s1 - s2)
            if max(a, lo) <= cx <= min(b, hi):
                best = max(best, float(gs[j] + s1 * (cx - cs[j])))
        return float(best)


@dataclass(frozen=True)
class WitnessOperator:
    """Shifted test operator g*I - L, tangent to the separable set."""

    op: HermitianOperator
    bound_used: float


@dataclass(frozen=True)
class Verdict:
    entangled: bool
    margin: Optional[float]
    sigma_level: float
    branch: str
    note: str = ""


@dataclass(frozen=True)
class TightenResult:
    c: float
    g_of_c: float
    old_bound: float
    improvement: float


def _bound_from_raw(raw: RawBound, block_dims: Sequence[int]) -> BoundResult:
    factors = tuple(
        PureState((d,) if d == 2 else (2,) * int(round(math.log2(d))), vec)
        if _is_power_of_two(d)
        else PureState((d,), vec)
        for d, vec in zip(block_dims, raw.factors)
    )
    return BoundResult(
        value=raw.value,
        maximizer=ProductState(factors),
        feasibility_residual=raw.residual,
        restarts_used=raw.restarts_used,
        converged=raw.converged,
    )


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def sew_bound(
    l_op: TestOperator,
    direction: str = "sup",
    settings: Optional[OptimizerSettings] = None,
) -> BoundResult:
    """Unconstrained separable bound: extremum of <L> over pure product states.

    Multistart local optimization; for a product test operator the result can
    be cross-checked against the per-party eigenvalue product.
    """
    dims = l_op.op.dims
    if len(dims) < 2:
        raise ValueError("standard witnessing needs at least 2 parties")
    raw = optimize_product_bound(
        l_op.op.mat, dims, direction=direction, settings=settings
    )
    return _bound_from_raw(raw, dims)


def attainable_constraint_range(
    c_op: HermitianOperator, settings: Optional[OptimizerSettings] = None
) -> tuple[float, float]:
    """Range of <C> over pure product states (pre-scan for constraint values)."""
    settings = settings or OptimizerSettings()
    scan = replace(settings, restarts=max(16, settings.restarts // 2))
    lo = optimize_product_bound(c_op.mat, c_op.dims, direction="inf", settings=scan).value
    hi = optimize_product_bound(c_op.mat, c_op.dims, direction="sup", settings=scan).value
    return lo, hi


def constrained_bound(
    l_op: TestOperator,
    constraint: ConstraintSpec,
    settings: Optional[OptimizerSettings] = None,
    warm_params: Sequence[np.ndarray] = (),
    attainable: Optional[tuple[float, float]] = None,
    n_restarts: Optional[int] = None,
) -> BoundResult:
    """Supremum of <L> over pure product states with <C> = c.

    Optimizing over pure product states only is sufficient: the constrained
    separable optimum is always attained by a pure product state on the
    constraint surface.  Quadratic-penalty multistart with a projection
    polish; `feasibility_residual` reports |<C> - c| at the returned point.
    """
    dims = l_op.op.dims
    if dims != constraint.op.dims:
        raise ValueError("test and constraint operators must share dims")
    lo, hi = attainable if attainable is not None else attainable_constraint_range(constraint.op, settings)
    c = float(constraint.value)
    slack = 1e-9
    if c < lo - slack or c > hi + slack:
        raise ValueError(f"constraint value {c} not attainable by product states (range [{lo}, {hi}])")
    c = min(max(c, lo), hi)
    raw = optimize_product_bound(
        l_op.op.mat,
        dims,
        c_mat=constraint.op.mat,
        c_value=c,
        settings=settings,
        warm_params=warm_params,
        n_restarts=n_restarts,
    )
    return _bound_from_raw(raw, dims)


def constrained_pure_state_sup(
    l_op: HermitianOperator,
    c_op: HermitianOperator,
    c: float,
    settings: Optional[OptimizerSettings] = None,
) -> BoundResult:
    """Supremum of <L> over ALL pure states (entanglement allowed) with <C> = c.

    The whole system is treated as a single block, so the optimization runs
    over the full Hilbert sphere.  Used to quantify the gap between entangled
    states and the separable curve, and to verify that commuting pairs give
    no gap at all.
    """
    if l_op.dims != c_op.dims:
        raise ValueError("operators must share dims")
    lo = float(np.linalg.eigvalsh(c_op.mat)[0])
    hi = float(np.linalg.eigvalsh(c_op.mat)[-1])
    if c < lo - RANGE_TOL or c > hi + RANGE_TOL:
        raise ValueError(f"c={c} outside the spectrum range [{lo}, {hi}] of C")
    raw = optimize_product_bound(
        l_op.mat,
        [l_op.total_dim],
        c_mat=c_op.mat,
        c_value=min(max(float(c), lo), hi),
        settings=settings,
    )
    factor = PureState(l_op.dims, raw.factors[0])
    return BoundResult(
        value=raw.value,
        maximizer=ProductState((factor,)),
        feasibility_residual=raw.residual,
        restarts_used=raw.restarts_used,
        converged=raw.converged,
    )


def separability_curve(
    l_op: TestOperator,
    c_op: HermitianOperator,
    c_grid: Sequence[float],
    settings: Optional[OptimizerSettings] = None,
) -> SeparabilityCurve:
    """Constrained bound at every grid value, warm-starting along the grid.

    Concavity is enforced post hoc with a chord test; offending points are
    re-run with escalated restarts.  If any point stays unconverged or
    non-concave, the curve is marked unreliable.
    """
    settings = settings or OptimizerSettings()
    grid = np.asarray(list(c_grid), dtype=np.float64)
    if grid.size < 3:
        raise ValueError("need at least 3 grid points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("c grid must be sorted strictly increasing")
    attainable = attainable_constraint_range(c_op, settings)
    if grid[0] < attainable[0] - 1e-9 or grid[-1] > attainable[1] + 1e-9:
        raise ValueError(f"grid outside attainable constraint range {attainable}")

    fingerprint = fingerprint_operators(l_op.op.mat, c_op.mat)
    results: list[BoundResult] = []
    prev_params: Optional[np.ndarray] = None
    for j, c in enumerate(grid):
        warm = [] if prev_params is None else [prev_params]
        n_restarts = settings.restarts if j == 0 else settings.warm_restarts
        res = constrained_bound(
            l_op,
            ConstraintSpec(c_op, float(c)),
            settings=settings,
            warm_params=warm,
            attainable=attainable,
            n_restarts=n_restarts,
        )
        results.append(res)
        prev_params = _params_of(res.maximizer)

    # chord test: a concave curve sits on or above every neighbor chord
    for _ in range(3):
        bad = _concavity_violations(grid, [r.value for r in results])
        if not bad:
            break
        for j in bad:
            warm = [_params_of(results[k].maximizer) for k in (j - 1, j + 1)]
            rerun = constrained_bound(
                l_op,
                ConstraintSpec(c_op, float(grid[j])),
                settings=settings,
                warm_params=warm,
                attainable=attainable,
                n_restarts=max(settings.restarts, 2 * settings.warm_restarts),
            )
            if rerun.value > results[j].value:
                results[j] = rerun

    still_bad = _concavity_violations(grid, [r.value for r in results])
    reliable = not still_bad and all(r.converged for r in results)
    points = tuple(
        CurvePoint(float(c), r.value, r.converged, r.restarts_used)
        for c, r in zip(grid, results)
    )
    return SeparabilityCurve(points, fingerprint, settings, reliable)


def _params_of(state: ProductState) -> np.ndarray:
    """Recover optimizer parameters of a product state of qubit factors."""
    parts = []
    for f in state.factors:
        if f.total_dim == 2:
            a0, a1 = f.amplitudes
            theta = 2.0 * math.atan2(abs(a1), abs(a0))
            phi = math.atan2(a1.imag, a1.real) - math.atan2(a0.imag, a0.real)
            parts.extend([theta, phi % (2.0 * math.pi)])
        else:
            v = f.amplitudes
            ph = v[0] / abs(v[0]) if abs(v[0]) > 1e-12 else 1.0
            v = v / ph
            parts.append(v[0].real)
            for z in v[1:]:
                parts.extend([z.real, z.imag])
    return np.array(parts, dtype=np.float64)


def _concavity_violations(grid: np.ndarray, values: Sequence[float]) -> list[int]:
    bad = []
    for j in range(1, len(grid) - 1):
        t = (grid[j] - grid[j - 1]) / (grid[j + 1] - grid[j - 1])
        chord = (1.0 - t) * values[j - 1] + t * values[j + 1]
        if values[j] < chord - CHORD_TOL:
            bad.append(j)
    return bad


def branch_bounds(curve: SeparabilityCurve, c: float) -> tuple[float, float]:
    """Branch suprema (g_c, g_c~) for the <=c and >=c constrained sets.

    g_c is the running maximum of the curve on [c_min, c] and g_c~ on
    [c, c_max]: each inequality-set supremum sits on the constraint boundary
    or at the unconstrained optimum, and the side containing the optimum
    returns g_s while the other side equals the curve value at c.
    """
    lo, hi = curve.c_range
    if c < lo - RANGE_TOL or c > hi + RANGE_TOL:
        raise ValueError(f"c={c} outside curve range {curve.c_range}")
    c = min(max(c, lo), hi)
    g_le = curve.max_upper_on(lo, c)
    g_ge = curve.max_upper_on(c, hi)
    return g_le, g_ge


def detect(
    curve: SeparabilityCurve,
    c_hat: float,
    l_hat: float,
    sigma_c: float = 0.0,
    sigma_l: float = 0.0,
    k: float = 0.0,
) -> Verdict:
    """Entanglement verdict from measured (c, l) with k-sigma error bars.

    Entangled iff l_hat - k*sigma_l strictly exceeds the largest curve value
    over [c_hat - k*sigma_c, c_hat + k*sigma_c]; being conservative over the
    whole interval is required because the curve is non-monotone.  Boundary
    points are "not entangled": witnessing certifies strict violation only.
    A measured c outside the curve range (after clipping) yields an
    inconclusive verdict rather than an exception.
    """
    if not curve.reliable:
        raise ValueError("curve is marked unreliable; recompute before certifying")
    if k < 0:
        raise ValueError("sigma level k must be >= 0")
    lo, hi = curve.c_range
    a, b = c_hat - k * sigma_c, c_hat + k * sigma_c
    if b < lo - RANGE_TOL or a > hi + RANGE_TOL:
        return Verdict(
            entangled=False,
            margin=None,
            sigma_level=k,
            branch="inconclusive",
            note=f"measured c interval [{a:.6g}, {b:.6g}] lies outside the curve range [{lo:.6g}, {hi:.6g}]",
        )
    a = min(max(a, lo), hi)
    b = min(max(b, lo), hi)
    threshold = curve.max_upper_on(a, b)
    margin = (l_hat - k * sigma_l) - threshold
    peak_c = curve.peak.c
    if c_hat == peak_c:
        branch = "equality-curve"
    elif c_hat < peak_c:
        branch = "below-c"
    else:
        branch = "above-c"
    return Verdict(entangled=margin > 0.0, margin=float(margin), sigma_level=k, branch=branch)


def tighten(
    povms: Sequence,
    decomposition: Sequence[tuple[float, Sequence[int]]],
    data: Union["CountsLike", Mapping[tuple[int, ...], float]],
    constraint_pair: Sequence[int],
    settings: Optional[OptimizerSettings] = None,
) -> TightenResult:
    """Tighten an existing witnessing bound using already-measured statistics.

    The test operator is reassembled from its local decomposition
    L = sum_i beta_i (tensor of outcome-i effects); the constraint value c is
    read from the measured data for `constraint_pair`, and the bound is
    re-optimized over product states with <C> = c.  The result is never worse
    than the unconstrained bound: improvement >= 0 up to solver tolerance.

    Finite-shot frequencies can fall slightly outside the attainable range of
    <C> over product states (where the constrained set would be empty); the
    measured value is clipped to the attainable range.
    """
    from .povm import product_operator

    betas = [float(b) for b, _ in decomposition]
    pairs = [tuple(int(i) for i in p) for _, p in decomposition]
    if not betas:
        raise ValueError("decomposition must be nonempty")
    l_mat = sum(
        b * product_operator(povms, pair).mat for b, pair in zip(betas, pairs)
    )
    dims = tuple(d for p in povms for d in p.dims)
    l_op = TestOperator(HermitianOperator(dims, l_mat))
    c_op = product_operator(povms, constraint_pair)

    key = tuple(int(i) for i in constraint_pair)
    if hasattr(data, "frequency"):
        c_meas = data.frequency(key)
    else:
        if key not in data:
            raise ValueError(f"no measured value for constraint pair {key}")
        c_meas = float(data[key])

    attainable = attainable_constraint_range(c_op, settings)
    c_used = min(max(c_meas, attainable[0]), attainable[1])
    old = sew_bound(l_op, settings=settings)
    new = constrained_bound(
        l_op, ConstraintSpec(c_op, c_used), settings=settings, attainable=attainable
    )
    return TightenResult(
        c=c_used,
        g_of_c=new.value,
        old_bound=old.value,
        improvement=old.value - new.value,
    )


def entangled_max(c: float) -> float:
    """Largest <L> over all two-qubit states with <C> = c, for x = 2/3.

    Closed form for the default operator pair L = Pi_2 x Pi_2, C = Pi_1 x Pi_1:
    the optimal amplitudes maximize the chi+ overlap subject to the constraint,
    giving ( sqrt(5(4-9c)/48) + sqrt(c)/4 )^2.  Equals the separable bound
    exactly at the unconstrained optimum c* = 1/36 and at the endpoint c = x^2,
    where the feasible state is unique.
    """
    x = X_CLOSED_FORM
    if c < -1e-12 or c > x * x + 1e-12:
        raise ValueError(f"c={c} outside [0, {x * x}]")
    c = min(max(c, 0.0), x * x)
    return (math.sqrt(5.0 * (4.0 - 9.0 * c) / 48.0) + math.sqrt(c) / 4.0) ** 2


def optimal_entangled_state(theta: float, c: float) -> PureState:
    """Two-qubit pure state attaining entangled_max(c) under L(theta), x = 2/3.

    Real amplitudes (alpha, beta, beta, delta) on |HH>, |HV>, |VH>, |VV> with
    phases e^{i theta} on the single-V terms and e^{2 i theta} on |VV>, which
    aligns every term of the chi+ overlap for any theta; the attained value is
    theta-independent.
    """
    x = X_CLOSED_FORM
    if c < -1e-12 or c > x * x + 1e-12:
        raise ValueError(f"c={c} outside [0, {x * x}]")
    c = min(max(c, 0.0), x * x)
    alpha = math.sqrt(3.0 * (4.0 - 9.0 * c) / 20.0)
    beta = math.sqrt((4.0 - 9.0 * c) / 20.0)
    delta = math.sqrt(c) / x
    ph = np.exp(1j * theta)
    vec = np.array([alpha, beta * ph, beta * ph, delta * ph * ph])
    return PureState((2, 2), vec / np.linalg.norm(vec))


def witness_from_bound(l_op: TestOperator, bound: BoundResult) -> WitnessOperator:
    """Witness operator g*I - L for a converged bound.

    The bound's maximizer is the optimal point: its witness expectation
    vanishes (tangency), which is validated here.
    """
    if not bound.converged:
        raise ValueError("refusing to build a witness from an unconverged bound")
    dims = l_op.op.dims
    w = HermitianOperator(dims, bound.value * np.eye(l_op.op.total_dim) - l_op.op.mat)
    vec = bound.maximizer.amplitudes
    tangency = float((vec.conj() @ (w.mat @ vec)).real)
    if abs(tangency) > TANGENCY_TOL:
        raise ValueError(f"optimal point not tangent: <W> = {tangency:.3e}")
    return WitnessOperator(op=w, bound_used=bound.value)


def semianalytic_pair_bound(x: float, c: float, refine: int = 200001) -> float:
    """Fast cross-check of g(c) for the default two-qubit operator pair.

    Per-qubit reduction: a qubit with <Pi_1> = c_a can reach at most
    m(c_a) = ( sqrt((1-c_a/x)/2) + sqrt(c_a(1-x)/(2x)) )^2 on <Pi_2>, so
    g(c) = max over the split c = c_a * c_b of m(c_a) m(c_b).  Used as an
    oracle only; the optimizer path must work for generic operators.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    if c < -1e-15 or c > x * x + 1e-12:
        raise ValueError(f"c={c} outside [0, {x * x}]")
    c = min(max(c, 0.0), x * x)

    def m(ca):
        ca = np.clip(ca, 0.0, x)
        return (np.sqrt((1.0 - ca / x) / 2.0) + np.sqrt(ca * (1.0 - x) / (2.0 * x))) ** 2

    if c == 0.0:
        grid = np.linspace(0.0, x, refine)
        return float(m(0.0) * np.max(m(grid)))
    grid = np.linspace(c / x, x, refine)
    return float(np.max(m(grid) * m(c / grid)))


def make_penalized_objective(
    l_op: TestOperator,
    c_op: HermitianOperator,
    c_value: float,
    mu: float,
):
    """Penalized objective  <L> - mu (<C> - c)^2  with its analytic gradient.

    Returns (fun, manifold) where fun(params) -> (value, grad).  Used by the
    gradient-consistency audit, which compares grad against central finite
    differences of the value alone.
    """
    manifold = ProductManifold(l_op.op.dims)
    objective = PairObjective(manifold, l_op.op.mat, c_op.mat)

    def fun(params: np.ndarray) -> tuple[float, np.ndarray]:
        return penalized_value_and_grad(objective, params, c_value, mu)

    return fun, manifold


# ---------------------------------------------------------------------------
# Curve CSV format: header "c,g,converged,restarts", one row per grid point,
# 12 significant digits, deterministic row order.
# ---------------------------------------------------------------------------


def curve_to_csv(curve: SeparabilityCurve, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", "g", "converged", "restarts"])
        for p in curve.points:
            writer.writerow([f"{p.c:.12g}", f"{p.g:.12g}", str(p.converged).lower(), p.restarts])


def curve_from_csv(
    path: Union[str, Path],
    fingerprint: str = "",
    reliable: Optional[bool] = None,
) -> SeparabilityCurve:
    """Load a curve written by curve_to_csv.

    Without an explicit `reliable` flag the curve is trusted iff every row
    converged and the grid passes the concavity chord test.
    """
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["c", "g", "converged", "restarts"]:
            raise ValueError(f"unexpected curve CSV header {reader.fieldnames}")
        for row in reader:
            points.append(
                CurvePoint(
                    c=float(row["c"]),
                    g=float(row["g"]),
                    converged=row["converged"] == "true",
                    restarts=int(row["restarts"]),
                )
            )
    grid = np.array([p.c for p in points])
    if reliable is None:
        reliable = all(p.converged for p in points) and not _concavity_violations(
            grid, [p.g for p in points]
        )
    return SeparabilityCurve(tuple(points), fingerprint, None, reliable)
