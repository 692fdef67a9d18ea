"""Penalty multistart optimizer over product-state manifolds (internal).

Parametrization: qubit factors as Bloch angles (theta, phi) with the global
phase fixed; higher-dimensional factors as unit vectors whose first component
is real (2d - 1 real parameters), which removes the gauge freedom that stalls
quasi-Newton steps.  Equality constraints are handled by a quadratic penalty
with a geometric schedule followed by a Gauss-Newton projection onto the
constraint set.

Everything here is deterministic: restart i draws its start from a Philox
stream keyed by (base_key, i), and the best candidate is selected by value
with ties broken by lowest restart index, so results do not depend on
execution order or thread count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "OptimizerSettings",
    "ProductManifold",
    "PairObjective",
    "RawBound",
    "fingerprint_operators",
    "derive_key",
    "optimize_product_bound",
]

PENALTY_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7)
REFINE_CYCLES = 3
REFINE_VALUE_TOL = 1e-12
PROJECTION_TOL = 1e-12
PROJECTION_OK = 1e-8
FLAT_GRADIENT_TOL = 1e-18
RESIDUAL_OK = 1e-6
GRAD_OK = 1e-6

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class OptimizerSettings:
    """Multistart / penalty configuration shared by all bound computations."""

    restarts: int = 64
    warm_restarts: int = 8
    penalty_schedule: tuple[float, ...] = PENALTY_SCHEDULE
    maxiter: int = 250
    seed: Optional[int] = None
    threads: int = 1

    def as_dict(self) -> dict:
        return {
            "restarts": self.restarts,
            "warm_restarts": self.warm_restarts,
            "penalty_schedule": list(self.penalty_schedule),
            "maxiter": self.maxiter,
            "seed": self.seed,
            "threads": self.threads,
        }


def fingerprint_operators(*mats_and_scalars) -> str:
    """Content hash of operators (and scalars) for deterministic seeding."""
    h = hashlib.sha256()
    for item in mats_and_scalars:
        if isinstance(item, np.ndarray):
            h.update(np.ascontiguousarray(np.round(item, 12)).tobytes())
        else:
            h.update(repr(item).encode())
    return h.hexdigest()


def derive_key(fingerprint: str, extra: float | int = 0) -> tuple[int, int]:
    h = hashlib.sha256((fingerprint + f"|{extra!r}").encode()).digest()
    return (
        int.from_bytes(h[:8], "little") & _MASK64,
        int.from_bytes(h[8:16], "little") & _MASK64,
    )


def _restart_rng(base_key: tuple[int, int], index: int) -> np.random.Generator:
    key = np.array(
        [base_key[0] & _MASK64, (base_key[1] + index) & _MASK64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


class ProductManifold:
    """Product of pure-state factors with fixed block dimensions."""

    def __init__(self, block_dims: Sequence[int]):
        self.block_dims = tuple(int(d) for d in block_dims)
        if not self.block_dims or any(d < 2 for d in self.block_dims):
            raise ValueError(f"invalid block dims {block_dims}")
        self.param_counts = tuple(2 if d == 2 else 2 * d - 1 for d in self.block_dims)
        offsets = np.concatenate([[0], np.cumsum(self.param_counts)])
        self.offsets = tuple(int(o) for o in offsets)
        self.n_params = self.offsets[-1]
        self.total_dim = int(np.prod(self.block_dims))

    def random_params(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for d in self.block_dims:
            if d == 2:
                theta = np.arccos(rng.uniform(-1.0, 1.0))
                phi = rng.uniform(0.0, 2.0 * np.pi)
                parts.append([theta, phi])
            else:
                parts.append(rng.standard_normal(2 * d - 1))
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def _factor(self, dim: int, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Factor vector and its Jacobian (dim x n_params) for one block."""
        if dim == 2:
            theta, phi = p
            ct, st = np.cos(theta / 2.0), np.sin(theta / 2.0)
            e = np.exp(1j * phi)
            vec = np.array([ct, st * e])
            jac = np.array([[-st / 2.0, 0.0], [ct * e / 2.0, 1j * st * e]])
            return vec, jac
        v = np.empty(dim, dtype=np.complex128)
        v[0] = p[0]
        v[1:] = p[1::2] + 1j * p[2::2]
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            # ray undefined at the origin; pick a fixed unit vector with zero jacobian
            vec = np.zeros(dim, dtype=np.complex128)
            vec[0] = 1.0
            return vec, np.zeros((dim, 2 * dim - 1), dtype=np.complex128)
        vec = v / nrm
        basis = np.zeros((dim, 2 * dim - 1), dtype=np.complex128)
        basis[0, 0] = 1.0
        rows = np.arange(1, dim)
        basis[rows, 2 * rows - 1] = 1.0
        basis[rows, 2 * rows] = 1j
        # d(v/|v|)/dp = b/|v| - v Re<v,b>/|v|^3
        re_vb = (v.conj()[:, None] * basis).real.sum(axis=0)
        jac = basis / nrm - np.outer(v, re_vb) / nrm**3
        return vec, jac

    def factors_and_jacobians(self, params: np.ndarray):
        vecs, jacs = [], []
        for dim, lo, hi in zip(self.block_dims, self.offsets[:-1], self.offsets[1:]):
            vec, jac = self._factor(dim, params[lo:hi])
            vecs.append(vec)
            jacs.append(jac)
        return vecs, jacs

    def factors(self, params: np.ndarray) -> list[np.ndarray]:
        return self.factors_and_jacobians(params)[0]

    def state_vector(self, factors: Sequence[np.ndarray]) -> np.ndarray:
        psi = factors[0]
        for f in factors[1:]:
            psi = np.kron(psi, f)
        return psi


def _contract_leaving(y_t: np.ndarray, conj_factors: Sequence[np.ndarray], keep: int) -> np.ndarray:
    """Contract all tensor axes of y against conj factors except axis `keep`."""
    t = y_t
    positions = list(range(len(conj_factors)))
    for m, cf in enumerate(conj_factors):
        if m == keep:
            continue
        ax = positions[m]
        t = np.tensordot(cf, t, axes=([0], [ax]))
        # tensordot puts the surviving axes after the contracted factor's none;
        # contracting a vector removes axis `ax` and keeps order of the rest
        for j in range(len(positions)):
            if positions[j] is not None and positions[j] > ax:
                positions[j] -= 1
        positions[m] = None
    return t


class PairObjective:
    """Expectation values and analytic gradients of one or two operators."""

    def __init__(self, manifold: ProductManifold, l_mat: np.ndarray, c_mat: Optional[np.ndarray] = None):
        self.manifold = manifold
        n = manifold.total_dim
        if l_mat.shape != (n, n):
            raise ValueError("operator does not match manifold dimension")
        self.l_mat = l_mat
        self.c_mat = c_mat
        if c_mat is not None and c_mat.shape != (n, n):
            raise ValueError("constraint operator does not match manifold dimension")

    def _value_grad(self, mat, psi, factors, jacs):
        m = self.manifold
        y = mat @ psi
        val = float((psi.conj() @ y).real)
        grad = np.empty(m.n_params)
        if len(factors) == 1:
            grad[:] = 2.0 * (jacs[0].conj().T @ y).real
        elif len(factors) == 2:
            y2 = y.reshape(m.block_dims)
            z0 = y2 @ factors[1].conj()
            z1 = factors[0].conj() @ y2
            o = m.offsets
            grad[o[0] : o[1]] = 2.0 * (jacs[0].conj().T @ z0).real
            grad[o[1] : o[2]] = 2.0 * (jacs[1].conj().T @ z1).real
        else:
            conj_factors = [f.conj() for f in factors]
            y_t = y.reshape(m.block_dims)
            for k in range(len(factors)):
                z = _contract_leaving(y_t, conj_factors, k)
                lo, hi = m.offsets[k], m.offsets[k + 1]
                grad[lo:hi] = 2.0 * (jacs[k].conj().T @ z).real
        return val, grad

    def eval(self, params: np.ndarray):
        """Returns (vL, gL, vC, gC); the C pair is (None, None) without C."""
        factors, jacs = self.manifold.factors_and_jacobians(params)
        psi = self.manifold.state_vector(factors)
        v_l, g_l = self._value_grad(self.l_mat, psi, factors, jacs)
        if self.c_mat is None:
            return v_l, g_l, None, None
        v_c, g_c = self._value_grad(self.c_mat, psi, factors, jacs)
        return v_l, g_l, v_c, g_c

    def values(self, params: np.ndarray) -> tuple[float, Optional[float]]:
        factors = self.manifold.factors(params)
        psi = self.manifold.state_vector(factors)
        v_l = float((psi.conj() @ (self.l_mat @ psi)).real)
        v_c = None
        if self.c_mat is not None:
            v_c = float((psi.conj() @ (self.c_mat @ psi)).real)
        return v_l, v_c

    def c_value_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        """Constraint expectation and gradient only (projection inner loop)."""
        factors, jacs = self.manifold.factors_and_jacobians(params)
        psi = self.manifold.state_vector(factors)
        return self._value_grad(self.c_mat, psi, factors, jacs)


def penalized_value_and_grad(
    objective: PairObjective, params: np.ndarray, c_value: float, mu: float, sign: float = 1.0
) -> tuple[float, np.ndarray]:
    """Value and gradient of  sign*<L> - mu (<C> - c)^2  (the quantity maximized)."""
    v_l, g_l, v_c, g_c = objective.eval(params)
    if v_c is None:
        return sign * v_l, sign * g_l
    r = v_c - c_value
    return sign * v_l - mu * r * r, sign * g_l - 2.0 * mu * r * g_c


def _project_onto_constraint(objective: PairObjective, params: np.ndarray, c_value: float, max_iter: int = 120) -> np.ndarray:
    """Gauss-Newton projection of a point onto {<C> = c}.

    Quadratic convergence at regular points; linear (ratio 1/2) at the
    one-sided boundary values of <C>, where the constraint gradient vanishes
    on the solution set.
    """
    p = np.array(params, dtype=np.float64)
    for _ in range(max_iter):
        v_c, g_c = objective.c_value_grad(p)
        r = v_c - c_value
        if abs(r) <= PROJECTION_TOL:
            break
        g2 = float(g_c @ g_c)
        if g2 < FLAT_GRADIENT_TOL:
            break
        p -= (r / g2) * g_c
    return p


@dataclass(frozen=True)
class RawBound:
    params: np.ndarray
    factors: tuple[np.ndarray, ...]
    value: float
    residual: float
    converged: bool
    restarts_used: int


@dataclass(frozen=True)
class _Candidate:
    index: int
    params: np.ndarray
    value: float
    residual: float
    local_ok: bool


def _solve_from(
    objective: PairObjective,
    x0: np.ndarray,
    c_value: Optional[float],
    sign: float,
    settings: OptimizerSettings,
    index: int,
) -> _Candidate:
    options = {"maxiter": settings.maxiter, "ftol": 1e-14, "gtol": 1e-10}
    x = np.asarray(x0, dtype=np.float64)

    def negated(p, mu):
        f, g = penalized_value_and_grad(objective, p, c_value or 0.0, mu, sign)
        return -f, -g

    def stationary(p, mu) -> bool:
        # L-BFGS line searches can fail on flat plateaus after converging;
        # accept the point when the penalized gradient is already tiny
        _, g = negated(p, mu)
        return float(np.max(np.abs(g))) <= GRAD_OK

    if c_value is None:
        res = minimize(negated, x, args=(0.0,), jac=True, method="L-BFGS-B", options=options)
        x = res.x
        ok = bool(res.success) or stationary(x, 0.0)
        v_l, _ = objective.values(x)
        return _Candidate(index, x, sign * v_l, 0.0, ok)

    # project the start onto the constraint set first, then refine at the top
    # penalty weight: low-mu stages would funnel every start into the basin of
    # the unconstrained optimum and destroy multistart diversity
    x = _project_onto_constraint(objective, x, c_value)
    _, v_c0 = objective.values(x)
    if abs(v_c0 - c_value) > PROJECTION_OK:
        # projection could not reach the constraint set from this start;
        # fall back to the geometric penalty schedule to pull it in
        for mu in settings.penalty_schedule:
            res = minimize(negated, x, args=(mu,), jac=True, method="L-BFGS-B", options=options)
            x = res.x
    # the penalized optimum is biased off the constraint set; alternate exact
    # projection with re-optimization at the top penalty weight
    mu_top = settings.penalty_schedule[-1]
    res = None
    v_prev = None
    for _ in range(REFINE_CYCLES):
        res = minimize(negated, x, args=(mu_top,), jac=True, method="L-BFGS-B", options=options)
        x = _project_onto_constraint(objective, res.x, c_value)
        v_l, _ = objective.values(x)
        if v_prev is not None and abs(v_l - v_prev) <= REFINE_VALUE_TOL:
            break
        v_prev = v_l
    # stationarity must be judged before projection: at the projected point the
    # penalty term no longer balances the plain objective gradient
    ok = bool(res.success) or stationary(res.x, mu_top)
    v_l, v_c = objective.values(x)
    return _Candidate(index, x, sign * v_l, abs(v_c - c_value), ok)


def optimize_product_bound(
    l_mat: np.ndarray,
    block_dims: Sequence[int],
    *,
    c_mat: Optional[np.ndarray] = None,
    c_value: Optional[float] = None,
    direction: str = "sup",
    settings: Optional[OptimizerSettings] = None,
    warm_params: Sequence[np.ndarray] = (),
    base_key: Optional[tuple[int, int]] = None,
    n_restarts: Optional[int] = None,
) -> RawBound:
    """Multistart supremum (or infimum) of <L> over the product manifold.

    With `c_mat`/`c_value` given, maximizes subject to <C> = c via the
    penalty schedule plus projection polish.  `warm_params` are extra start
    points tried before the random restarts.
    """
    if direction not in ("sup", "inf"):
        raise ValueError(f"direction must be 'sup' or 'inf', got {direction!r}")
    if (c_mat is None) != (c_value is None):
        raise ValueError("c_mat and c_value must be given together")
    settings = settings or OptimizerSettings()
    manifold = ProductManifold(block_dims)
    objective = PairObjective(manifold, l_mat, c_mat)
    sign = 1.0 if direction == "sup" else -1.0
    if base_key is None:
        fp = fingerprint_operators(l_mat, c_mat if c_mat is not None else 0)
        base_key = derive_key(fp, c_value if c_value is not None else "unconstrained")
    if settings.seed is not None:
        base_key = ((base_key[0] ^ settings.seed) & _MASK64, base_key[1])

    restarts = settings.restarts if n_restarts is None else n_restarts
    starts: list[np.ndarray] = [np.asarray(w, dtype=np.float64) for w in warm_params]
    for i in range(restarts):
        starts.append(manifold.random_params(_restart_rng(base_key, i)))

    def run(pair):
        idx, x0 = pair
        return _solve_from(objective, x0, c_value, sign, settings, idx)

    jobs = list(enumerate(starts))
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            candidates = list(pool.map(run, jobs))
    else:
        candidates = [run(j) for j in jobs]

    feasible = [c for c in candidates if c.residual <= RESIDUAL_OK]
    pool_ = feasible if feasible else candidates
    best = max(pool_, key=lambda c: (c.value, -c.index))
    factors = manifold.factors(best.params)
    v_l, v_c = objective.values(best.params)
    residual = 0.0 if c_value is None else abs(v_c - c_value)
    converged = best.local_ok and residual <= RESIDUAL_OK
    return RawBound(
        params=best.params,
        factors=tuple(factors),
        value=v_l,
        residual=residual,
        converged=converged,
        restarts_used=len(starts),
    )
