"""Three-outcome qubit measurement family and product test/constraint operators.

The device measures {Pi_1, Pi_2, Pi_3} with

    Pi_1 = x |V><V|,   Pi_2 = |chi+><chi+|,   Pi_3 = |chi-><chi-|,
    |chi+-> = |H>/sqrt(2) +- e^{i theta} sqrt((1-x)/2) |V>,

where |H>, |V> is the computational basis (index 0, 1).  The chi vectors are
kept unnormalized exactly as defined; normalizing them would change the
spectra of Pi_2, Pi_3 and every bound built on them.  Outcome indices are
1-based, matching the device labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import HermitianOperator, identity, min_eigenvalue, tensor

__all__ = [
    "ThreeOutcomeParams",
    "Effect",
    "Povm",
    "ThreeOutcomePovm",
    "chi_vectors",
    "build_three_outcome",
    "product_operator",
    "AdmissibilityReport",
    "uew_admissibility_check",
    "povm_to_dict",
    "povm_from_dict",
]

COMPLETENESS_TOL = 1e-10
EFFECT_PSD_TOL = 1e-10
COMMUTE_TOL = 1e-10


@dataclass(frozen=True)
class ThreeOutcomeParams:
    """Device parameters: reflectivity x in (0,1), free phase theta.

    x = 0 and x = 1 are rejected: at the endpoints the chi vectors lose the
    |V> asymmetry that makes Pi_1 and Pi_2 noncommuting, and the device
    degenerates to a two-outcome measurement.
    """

    x: float
    theta: float = 0.0

    def __post_init__(self):
        x = float(self.x)
        if not 0.0 < x < 1.0 or not math.isfinite(x):
            raise ValueError(f"x must lie strictly inside (0, 1), got {x}")
        theta = float(self.theta) % (2.0 * math.pi)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class Effect:
    """Single POVM element: PSD with PSD complement I - op."""

    op: HermitianOperator

    def __post_init__(self):
        if min_eigenvalue(self.op) < -EFFECT_PSD_TOL:
            raise ValueError("effect is not PSD")
        comp = HermitianOperator(self.op.dims, np.eye(self.op.total_dim) - self.op.mat)
        if min_eigenvalue(comp) < -EFFECT_PSD_TOL:
            raise ValueError("effect exceeds identity (I - op not PSD)")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims


@dataclass(frozen=True)
class Povm:
    """Ordered list of effects on one party, summing to the identity."""

    effects: tuple[Effect, ...]

    def __post_init__(self):
        effects = tuple(self.effects)
        if not effects:
            raise ValueError("a POVM needs at least one effect")
        dims = effects[0].dims
        if any(e.dims != dims for e in effects):
            raise ValueError("all effects must share the same dims")
        total = sum(e.op.mat for e in effects)
        dev = np.max(np.abs(total - np.eye(effects[0].op.total_dim)))
        if dev > COMPLETENESS_TOL:
            raise ValueError(f"effects do not sum to identity (max deviation {dev:.3e})")
        object.__setattr__(self, "effects", effects)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.effects[0].dims

    @property
    def n_outcomes(self) -> int:
        return len(self.effects)

    def effect(self, outcome: int) -> Effect:
        """Effect for a 1-based outcome index."""
        if not 1 <= outcome <= len(self.effects):
            raise ValueError(f"outcome {outcome} out of range 1..{len(self.effects)}")
        return self.effects[outcome - 1]


@dataclass(frozen=True)
class ThreeOutcomePovm(Povm):
    """Three-outcome device with its parameters and chi vectors attached."""

    params: ThreeOutcomeParams = None  # type: ignore[assignment]
    chi_plus: np.ndarray = None  # type: ignore[assignment]
    chi_minus: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.params is None:
            raise ValueError("ThreeOutcomePovm requires params")
        object.__setattr__(self, "chi_plus", _frozen(self.chi_plus))
        object.__setattr__(self, "chi_minus", _frozen(self.chi_minus))


def _frozen(v: np.ndarray) -> np.ndarray:
    v = np.array(v, dtype=np.complex128)
    v.setflags(write=False)
    return v


def chi_vectors(params: ThreeOutcomeParams) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized |chi+>, |chi-> for the given device parameters."""
    amp = math.sqrt((1.0 - params.x) / 2.0) * np.exp(1j * params.theta)
    chi_p = np.array([1.0 / math.sqrt(2.0), amp])
    chi_m = np.array([1.0 / math.sqrt(2.0), -amp])
    return chi_p, chi_m


def build_three_outcome(params: ThreeOutcomeParams) -> ThreeOutcomePovm:
    """Build the three-outcome qubit POVM for the given parameters.

    Completeness holds by construction: the chi+/chi- cross terms cancel and
    the |V><V| weights add up to 1 - x + x.
    """
    chi_p, chi_m = chi_vectors(params)
    pi1 = np.zeros((2, 2), dtype=np.complex128)
    pi1[1, 1] = params.x
    pi2 = np.outer(chi_p, chi_p.conj())
    pi3 = np.outer(chi_m, chi_m.conj())
    effects = tuple(Effect(HermitianOperator((2,), m)) for m in (pi1, pi2, pi3))
    return ThreeOutcomePovm(effects=effects, params=params, chi_plus=chi_p, chi_minus=chi_m)


def product_operator(povms: Sequence[Povm], outcome_indices: Sequence[int]) -> HermitianOperator:
    """Tensor product of selected effects, one per party (1-based outcomes).

    With the three-outcome device this builds the constraint operator
    C = (x)Pi_1 x Pi_1 x ... for indices (1,...,1) and the test operator
    L = Pi_2 x Pi_2 x ... for indices (2,...,2); arbitrary index tuples are
    allowed.
    """
    povms = list(povms)
    outcome_indices = list(outcome_indices)
    if len(povms) != len(outcome_indices):
        raise ValueError(
            f"{len(povms)} parties but {len(outcome_indices)} outcome indices"
        )
    if not povms:
        raise ValueError("at least one party is required")
    ops = [p.effect(i).op for p, i in zip(povms, outcome_indices)]
    out = tensor(ops)
    assert isinstance(out, HermitianOperator)
    return out


@dataclass(frozen=True)
class AdmissibilityReport:
    commutes: bool
    commutator_norm: float


def uew_admissibility_check(c_op: HermitianOperator, l_op: HermitianOperator) -> AdmissibilityReport:
    """Necessary-condition check on a constraint/test operator pair.

    If separable C and L commute, the constrained separable supremum equals
    the constrained supremum over all quantum states, so the pair cannot
    detect entanglement: commutes=True means "this pair cannot beat the
    unconstrained bound".  Non-commutation is necessary, not sufficient.
    """
    from .qcore import commutator_norm

    nrm = commutator_norm(c_op, l_op)
    return AdmissibilityReport(commutes=nrm <= COMMUTE_TOL, commutator_norm=nrm)


# ---------------------------------------------------------------------------
# JSON format: {"parties": [{"x": 0.6667, "theta": 0.0}, ...]} for built-in
# three-outcome devices, or {"parties": [{"effects": [<operator dict>, ...]}]}
# with explicit matrices in the qcore operator format.
# ---------------------------------------------------------------------------


def povm_to_dict(povms: Sequence[Povm]) -> dict:
    parties = []
    for p in povms:
        if isinstance(p, ThreeOutcomePovm):
            parties.append({"x": p.params.x, "theta": p.params.theta})
        else:
            from .qcore import operator_to_dict

            parties.append({"effects": [operator_to_dict(e.op) for e in p.effects]})
    return {"parties": parties}


def povm_from_dict(d: dict) -> list[Povm]:
    from .qcore import operator_from_dict

    if "parties" not in d or not isinstance(d["parties"], list) or not d["parties"]:
        raise ValueError("POVM file needs a nonempty 'parties' list")
    povms: list[Povm] = []
    for party in d["parties"]:
        if "effects" in party:
            effects = tuple(Effect(operator_from_dict(e)) for e in party["effects"])
            povms.append(Povm(effects))
        elif "x" in party:
            params = ThreeOutcomeParams(x=party["x"], theta=party.get("theta", 0.0))
            povms.append(build_three_outcome(params))
        else:
            raise ValueError("each party needs either 'x' (+optional 'theta') or 'effects'")
    return povms
