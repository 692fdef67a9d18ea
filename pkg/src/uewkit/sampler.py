"""Random states, measurement simulation, estimation, and independent oracles.

RNG contract: all randomness flows through Philox, a counter-based generator,
keyed as (seed, task).  Distinct task indices give provably independent
streams, so parallel sampling is deterministic: identical seeds reproduce
identical outputs regardless of execution order or thread count.  The key
test vectors are pinned in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product as iter_product
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import NonlinearConstraint, minimize

from .povm import Povm
from .qcore import DensityMatrix, HermitianOperator, ProductState, PureState, is_ppt, tensor

__all__ = [
    "stream",
    "CountsTable",
    "EstimateResult",
    "sample_product_state",
    "sample_bloch_angles",
    "scatter",
    "random_density_matrix",
    "simulate_counts",
    "estimate",
    "weighted_estimate",
    "brute_force_constrained_sup",
    "ppt_oracle",
    "counts_to_dict",
    "counts_from_dict",
    "save_counts",
    "load_counts",
]

_MASK64 = (1 << 64) - 1
PROB_SUM_TOL = 1e-9


def stream(seed: int, task: int = 0) -> np.random.Generator:
    """Philox stream for (seed, task); independent across task indices."""
    key = np.array([seed & _MASK64, task & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class CountsTable:
    """Joint-outcome counts from a fixed-device experiment.

    `outcome_counts` maps 1-based joint outcome tuples to counts; absent
    tuples are zero.  `povm_params` echoes the per-party (x, theta) pairs
    when the counts came from the built-in three-outcome devices.
    """

    outcomes_per_party: tuple[int, ...]
    outcome_counts: Mapping[tuple[int, ...], int]
    total_shots: int
    povm_params: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        outcomes = tuple(int(k) for k in self.outcomes_per_party)
        if not outcomes or any(k < 1 for k in outcomes):
            raise ValueError("outcomes_per_party must be positive")
        counts = {}
        for key, val in dict(self.outcome_counts).items():
            key = tuple(int(i) for i in key)
            val = int(val)
            if len(key) != len(outcomes):
                raise ValueError(f"outcome tuple {key} arity != {len(outcomes)} parties")
            if any(not 1 <= i <= k for i, k in zip(key, outcomes)):
                raise ValueError(f"outcome tuple {key} outside 1-based ranges {outcomes}")
            if val < 0:
                raise ValueError("counts must be non-negative")
            if val:
                counts[key] = val
        total = int(self.total_shots)
        if sum(counts.values()) != total:
            raise ValueError(
                f"counts sum {sum(counts.values())} != total shots {total}"
            )
        object.__setattr__(self, "outcomes_per_party", outcomes)
        object.__setattr__(self, "outcome_counts", counts)
        object.__setattr__(self, "total_shots", total)

    @property
    def n_parties(self) -> int:
        return len(self.outcomes_per_party)

    def count(self, key: Sequence[int]) -> int:
        return self.outcome_counts.get(tuple(int(i) for i in key), 0)

    def frequency(self, key: Sequence[int]) -> float:
        if self.total_shots == 0:
            raise ValueError("no shots recorded")
        key = tuple(int(i) for i in key)
        if any(not 1 <= i <= k for i, k in zip(key, self.outcomes_per_party)) or len(
            key
        ) != self.n_parties:
            raise ValueError(f"outcome tuple {key} invalid for {self.outcomes_per_party}")
        return self.count(key) / self.total_shots


@dataclass(frozen=True)
class EstimateResult:
    c_hat: float
    l_hat: float
    sigma_c: float
    sigma_l: float
    shots: int


def _bloch_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    """n qubit states uniform on the Bloch sphere: cos(theta) ~ U(-1,1)."""
    cos_t = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    half = np.arccos(cos_t) / 2.0
    out = np.empty((n, 2), dtype=np.complex128)
    out[:, 0] = np.cos(half)
    out[:, 1] = np.sin(half) * np.exp(1j * phi)
    return out


def _haar_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    z = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_product_state(dims: Sequence[int], seed: int, task: int = 0) -> ProductState:
    """One uniformly random pure product state (Bloch for qubits, Haar above)."""
    rng = stream(seed, task)
    factors = []
    for d in dims:
        vec = _bloch_vectors(rng, 1)[0] if d == 2 else _haar_vectors(rng, 1, d)[0]
        factors.append(PureState((d,), vec))
    return ProductState(tuple(factors))


def sample_bloch_angles(n: int, n_parties: int, rng: np.random.Generator) -> np.ndarray:
    """(n, n_parties, 2) array of (theta, phi) Bloch angles."""
    cos_t = rng.uniform(-1.0, 1.0, size=(n, n_parties))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(n, n_parties))
    return np.stack([np.arccos(cos_t), phi], axis=-1)


def _batched_product_states(rng: np.random.Generator, n: int, dims: Sequence[int]) -> np.ndarray:
    psi = None
    for d in dims:
        f = _bloch_vectors(rng, n) if d == 2 else _haar_vectors(rng, n, d)
        psi = f if psi is None else np.einsum("ni,nj->nij", psi, f).reshape(n, -1)
    return psi


def scatter(
    l_op: HermitianOperator,
    c_op: HermitianOperator,
    n: int,
    seed: int,
    task: int = 0,
) -> np.ndarray:
    """(n, 2) array of (<C>, <L>) over random pure product states."""
    if l_op.dims != c_op.dims:
        raise ValueError("operators must share dims")
    rng = stream(seed, task)
    psi = _batched_product_states(rng, n, l_op.dims)
    c_vals = np.einsum("ni,ij,nj->n", psi.conj(), c_op.mat, psi).real
    l_vals = np.einsum("ni,ij,nj->n", psi.conj(), l_op.mat, psi).real
    return np.stack([c_vals, l_vals], axis=1)


def random_density_matrix(dims: Sequence[int], rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre-induced random mixed state of the given rank (full by default)."""
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    k = n if rank is None else int(rank)
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    m = g @ g.conj().T
    m = m / m.trace().real
    m = (m + m.conj().T) / 2.0
    return DensityMatrix(dims, m)


def joint_probabilities(rho: DensityMatrix, povms: Sequence[Povm]) -> dict[tuple[int, ...], float]:
    """Joint outcome probabilities p(i1..iN) = Tr[rho (x)_k Pi_{i_k}]."""
    dims = tuple(d for p in povms for d in p.dims)
    if dims != rho.dims and int(np.prod(dims)) != rho.total_dim:
        raise ValueError("POVM dims do not match the state")
    ranges = [range(1, p.n_outcomes + 1) for p in povms]
    probs = {}
    for key in iter_product(*ranges):
        op = tensor([p.effect(i).op for p, i in zip(povms, key)])
        val = np.einsum("ij,ji->", op.mat, rho.mat)
        probs[key] = float(val.real)
    total = sum(probs.values())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"outcome probabilities sum to {total}, not 1 (invalid POVM or state)")
    return probs


def simulate_counts(
    rho: DensityMatrix, povms: Sequence[Povm], shots: int, seed: int, task: int = 0
) -> CountsTable:
    """Multinomial draw from the joint outcome distribution."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = joint_probabilities(rho, povms)
    keys = sorted(probs)
    p = np.clip(np.array([probs[k] for k in keys]), 0.0, None)
    p = p / p.sum()
    draw = stream(seed, task).multinomial(shots, p)
    counts = {k: int(v) for k, v in zip(keys, draw) if v}
    params = None
    if all(hasattr(p_, "params") and p_.params is not None for p_ in povms):
        params = tuple((p_.params.x, p_.params.theta) for p_ in povms)
    return CountsTable(
        outcomes_per_party=tuple(p_.n_outcomes for p_ in povms),
        outcome_counts=counts,
        total_shots=shots,
        povm_params=params,
    )


def estimate(
    counts: CountsTable,
    c_indices: Sequence[int],
    l_indices: Sequence[int],
) -> EstimateResult:
    """Single-cell estimates of <C> and <L> with binomial standard errors.

    Valid when the constraint and test operators are single products of
    effects, so each expectation is one joint-outcome probability; use
    weighted_estimate for decomposed operators.
    """
    c_hat = counts.frequency(c_indices)
    l_hat = counts.frequency(l_indices)
    n = counts.total_shots
    return EstimateResult(
        c_hat=c_hat,
        l_hat=l_hat,
        sigma_c=math.sqrt(c_hat * (1.0 - c_hat) / n),
        sigma_l=math.sqrt(l_hat * (1.0 - l_hat) / n),
        shots=n,
    )


def weighted_estimate(
    counts: CountsTable, terms: Sequence[tuple[float, Sequence[int]]]
) -> tuple[float, float]:
    """Estimate of sum_i beta_i p_i with full multinomial covariance.

    Var = [sum_i b_i^2 p_i (1 - p_i) - sum_{i != j} b_i b_j p_i p_j] / shots.
    """
    n = counts.total_shots
    betas = np.array([float(b) for b, _ in terms])
    freqs = np.array([counts.frequency(key) for _, key in terms])
    value = float(betas @ freqs)
    var = float(betas**2 @ (freqs * (1.0 - freqs)))
    cross = np.outer(betas * freqs, betas * freqs)
    var -= float(cross.sum() - np.trace(cross))
    return value, math.sqrt(max(var, 0.0) / n)


def _bloch_form(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose 2x2 Hermitians M = m0 I + m.sigma into (m0, m) arrays."""
    m0 = np.trace(mats, axis1=-2, axis2=-1).real / 2.0
    mx = mats[..., 1, 0].real
    my = mats[..., 1, 0].imag
    mz = (mats[..., 0, 0] - mats[..., 1, 1]).real / 2.0
    return m0, np.stack([mx, my, mz], axis=-1)


def _bloch_state(r: np.ndarray) -> np.ndarray:
    """Unit Bloch vector -> qubit amplitudes (theta from z, phase from x+iy)."""
    theta = np.arccos(np.clip(r[2], -1.0, 1.0))
    phi = math.atan2(r[1], r[0]) if abs(r[0]) + abs(r[1]) > 1e-15 else 0.0
    return np.array([np.cos(theta / 2.0), np.sin(theta / 2.0) * np.exp(1j * phi)])


def brute_force_constrained_sup(
    l_op: HermitianOperator,
    c_op: HermitianOperator,
    c: float,
    resolution: int = 200,
) -> float:
    """Independent oracle for the two-qubit constrained separable bound.

    Grid over party B's two Bloch angles at the given resolution; for every
    grid state the band {|<C> - c| < eps} (eps = 2/resolution, tied to the
    grid so the error model stays honest) is resolved exactly over the whole
    of party A's Bloch sphere: both partial expectations are linear in A's
    Bloch vector, so the band-constrained maximum is a closed-form spherical
    problem.  The best candidate is refined by one SLSQP polish with
    finite-difference gradients, sharing no code with the production
    optimizer.  Accuracy O(1/resolution), dominated by the B grid.
    """
    if l_op.dims != (2, 2) or c_op.dims != (2, 2):
        raise ValueError("the brute-force oracle handles two qubit parties only")
    if not 2 <= resolution <= 400:
        raise ValueError("resolution must lie in [2, 400]")
    eps = 2.0 / resolution

    thetas = np.linspace(0.0, np.pi, resolution)
    phis = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    half = tt.reshape(-1) / 2.0
    single = np.stack([np.cos(half), np.sin(half) * np.exp(1j * pp.reshape(-1))], axis=1)

    l4 = l_op.mat.reshape(2, 2, 2, 2)
    c4 = c_op.mat.reshape(2, 2, 2, 2)
    # partial expectation over party B for every grid state: 2x2 forms on A
    mb_l = np.einsum("bj,ijkl,bl->bik", single.conj(), l4, single)
    mb_c = np.einsum("bj,ijkl,bl->bik", single.conj(), c4, single)
    l0, lv = _bloch_form(mb_l)
    c0, cv = _bloch_form(mb_c)

    c_norm = np.linalg.norm(cv, axis=1)
    degenerate = c_norm < 1e-14
    safe_norm = np.where(degenerate, 1.0, c_norm)
    c_hat = cv / safe_norm[:, None]
    alpha = np.einsum("bi,bi->b", lv, c_hat)
    l_perp = lv - alpha[:, None] * c_hat
    beta = np.linalg.norm(l_perp, axis=1)

    # allowed range of u = r.c_hat from the band, intersected with the sphere
    u_lo = np.clip((c - eps - c0) / safe_norm, -1.0, 1.0)
    u_hi = np.clip((c + eps - c0) / safe_norm, -1.0, 1.0)
    feasible = (c - eps - c0) / safe_norm <= 1.0
    feasible &= (c + eps - c0) / safe_norm >= -1.0
    feasible &= ~degenerate
    # objective alpha*u + beta*sqrt(1-u^2) is concave on [-1, 1]
    u_star = np.where(
        np.hypot(alpha, beta) > 1e-300, alpha / np.maximum(np.hypot(alpha, beta), 1e-300), 0.0
    )
    u_best = np.clip(u_star, u_lo, u_hi)
    vals = l0 + alpha * u_best + beta * np.sqrt(np.clip(1.0 - u_best**2, 0.0, None))
    # degenerate constraint direction: <C> is flat over A's sphere
    deg_ok = degenerate & (np.abs(c0 - c) < eps)
    vals_deg = l0 + np.linalg.norm(lv, axis=1)
    vals = np.where(deg_ok, vals_deg, np.where(feasible, vals, -np.inf))
    if not np.any(np.isfinite(vals)):
        raise ValueError(f"no grid point satisfies |<C> - c| < {eps}; c may be unattainable")

    b_idx = int(np.argmax(vals))
    if deg_ok[b_idx]:
        ln = np.linalg.norm(lv[b_idx])
        r_best = lv[b_idx] / ln if ln > 1e-14 else np.array([0.0, 0.0, 1.0])
    else:
        u = u_best[b_idx]
        perp = l_perp[b_idx]
        pn = np.linalg.norm(perp)
        r_best = u * c_hat[b_idx]
        if pn > 1e-14:
            r_best = r_best + math.sqrt(max(1.0 - u * u, 0.0)) * perp / pn
    a_amp = _bloch_state(r_best)
    best_val = float(vals[b_idx])

    theta_a = 2.0 * math.atan2(abs(a_amp[1]), abs(a_amp[0]))
    phi_a = math.atan2(a_amp[1].imag, a_amp[1].real)
    x0 = np.array(
        [theta_a, phi_a % (2.0 * np.pi), thetas[b_idx // resolution], phis[b_idx % resolution]]
    )

    def state_of(angles):
        a = np.array([np.cos(angles[0] / 2.0), np.sin(angles[0] / 2.0) * np.exp(1j * angles[1])])
        b = np.array([np.cos(angles[2] / 2.0), np.sin(angles[2] / 2.0) * np.exp(1j * angles[3])])
        return np.kron(a, b)

    def l_fun(angles):
        s = state_of(angles)
        return -float((s.conj() @ (l_op.mat @ s)).real)

    def c_fun(angles):
        s = state_of(angles)
        return float((s.conj() @ (c_op.mat @ s)).real)

    res = minimize(
        l_fun,
        x0,
        method="SLSQP",
        constraints=[NonlinearConstraint(c_fun, c, c)],
        options={"maxiter": 200, "ftol": 1e-12},
    )
    # the polished value is the oracle output: the in-band grid maximum sits
    # up to eps away from the constraint, which inflates the value wherever
    # the curve is steep
    if res.success and abs(c_fun(res.x) - c) <= 1e-8:
        return -float(res.fun)
    return best_val


def ppt_oracle(rho: DensityMatrix, cut: int = 0) -> bool:
    """Positivity of the partial transpose (certification audit hook)."""
    return is_ppt(rho, cut)


# ---------------------------------------------------------------------------
# Counts JSON format:
#   {"shots": N, "parties": P, "outcomes_per_party": [..], "counts": {"1,1": n, ..}}
# Cells omitted from "counts" are zero.
# ---------------------------------------------------------------------------


def counts_to_dict(counts: CountsTable) -> dict:
    return {
        "shots": counts.total_shots,
        "parties": counts.n_parties,
        "outcomes_per_party": list(counts.outcomes_per_party),
        "counts": {
            ",".join(str(i) for i in key): val
            for key, val in sorted(counts.outcome_counts.items())
        },
    }


def counts_from_dict(d: dict) -> CountsTable:
    for field in ("shots", "parties", "outcomes_per_party", "counts"):
        if field not in d:
            raise ValueError(f"counts file missing field {field!r}")
    outcomes = tuple(int(k) for k in d["outcomes_per_party"])
    if len(outcomes) != int(d["parties"]):
        raise ValueError("outcomes_per_party length does not match parties")
    counts = {}
    for key, val in d["counts"].items():
        idx = tuple(int(s) for s in str(key).split(","))
        counts[idx] = int(val)
    return CountsTable(
        outcomes_per_party=outcomes,
        outcome_counts=counts,
        total_shots=int(d["shots"]),
    )


def save_counts(path: Union[str, Path], counts: CountsTable) -> None:
    Path(path).write_text(json.dumps(counts_to_dict(counts), indent=2, sort_keys=True) + "\n")


def load_counts(path: Union[str, Path]) -> CountsTable:
    return counts_from_dict(json.loads(Path(path).read_text()))
