"""Dense complex linear algebra for multi-qubit states and operators.

Every wrapper type validates its defining invariant once at construction and
then freezes the underlying array, so values are immutable and safe to share.
Inputs that fail an invariant are rejected, never repaired. All operations
are pure functions.

Party (subsystem) indices are 0-based throughout this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Sequence, Union

import numpy as np

__all__ = [
    "MAX_TOTAL_DIM",
    "CapacityError",
    "Operator",
    "HermitianOperator",
    "DensityMatrix",
    "PureState",
    "ProductState",
    "identity",
    "tensor",
    "expectation",
    "commutator_norm",
    "partial_transpose",
    "min_eigenvalue",
    "is_ppt",
    "pure_density",
    "operator_to_dict",
    "operator_from_dict",
    "state_to_dict",
    "state_from_dict",
    "save_json",
    "load_json",
]

MAX_TOTAL_DIM = 2**14

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
NORM_TOL = 1e-12
PPT_TOL = 1e-9
IMAG_TOL = 1e-10


class CapacityError(ValueError):
    """Total Hilbert-space dimension exceeds the dense-storage cap."""


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise ValueError("dims must be nonempty")
    if any(d < 2 for d in dims):
        raise ValueError(f"every subsystem dimension must be >= 2, got {dims}")
    total = int(np.prod(dims))
    if total > MAX_TOTAL_DIM:
        raise CapacityError(f"total dimension {total} exceeds cap {MAX_TOTAL_DIM}")
    return dims


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Operator:
    """Square complex matrix acting on a tensor product of subsystems."""

    dims: tuple[int, ...]
    mat: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        mat = np.asarray(self.mat, dtype=np.complex128)
        n = int(np.prod(dims))
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} does not match dims {dims}")
        if not np.all(np.isfinite(mat.view(np.float64))):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "mat", _freeze(mat))

    @property
    def total_dim(self) -> int:
        return self.mat.shape[0]


@dataclass(frozen=True)
class HermitianOperator(Operator):
    """Operator with A = A† up to 1e-12 in max-entry norm."""

    def __post_init__(self):
        super().__post_init__()
        dev = np.max(np.abs(self.mat - self.mat.conj().T))
        if dev > HERMITICITY_TOL:
            raise ValueError(f"not Hermitian: max |A - A†| = {dev:.3e}")


@dataclass(frozen=True)
class DensityMatrix(HermitianOperator):
    """Unit-trace positive-semidefinite Hermitian operator."""

    def __post_init__(self):
        super().__post_init__()
        tr = self.mat.trace().real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        lam = np.linalg.eigvalsh(self.mat)[0]
        if lam < -PSD_TOL:
            raise ValueError(f"not PSD: min eigenvalue {lam:.3e}")


@dataclass(frozen=True)
class PureState:
    """Normalized state vector with declared subsystem dimensions."""

    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        vec = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if vec.shape[0] != int(np.prod(dims)):
            raise ValueError(f"amplitude length {vec.shape[0]} does not match dims {dims}")
        if not np.all(np.isfinite(vec.view(np.float64))):
            raise ValueError("amplitudes must be finite")
        nrm = np.linalg.norm(vec)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"norm {nrm} deviates from 1 beyond {NORM_TOL}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", _freeze(vec))

    @property
    def total_dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class ProductState:
    """Tensor product of per-party pure states.

    A factor may span several qubits (a multi-qubit block), in which case it
    can be internally entangled while the overall state stays a product
    across factors.
    """

    factors: tuple[PureState, ...]

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("factors must be nonempty")
        if any(not isinstance(f, PureState) for f in factors):
            raise ValueError("every factor must be a PureState")
        _check_dims([d for f in factors for d in f.dims])
        object.__setattr__(self, "factors", factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for f in self.factors for d in f.dims)

    @property
    def amplitudes(self) -> np.ndarray:
        return reduce(np.kron, (f.amplitudes for f in self.factors))

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def to_pure_state(self) -> PureState:
        return PureState(self.dims, self.amplitudes)


State = Union[DensityMatrix, PureState, ProductState]


def identity(dims: Sequence[int]) -> HermitianOperator:
    dims = _check_dims(dims)
    return HermitianOperator(dims, np.eye(int(np.prod(dims))))


def tensor(ops: Sequence[Operator]) -> Operator:
    """Kronecker product of operators, in list order; dims concatenate.

    Returns a HermitianOperator when every input is Hermitian (the Kronecker
    product of Hermitian matrices is Hermitian).
    """
    if not ops:
        raise ValueError("tensor requires at least one operator")
    dims = tuple(d for op in ops for d in op.dims)
    total = int(np.prod(dims))
    if total > MAX_TOTAL_DIM:
        raise CapacityError(f"total dimension {total} exceeds cap {MAX_TOTAL_DIM}")
    mat = reduce(np.kron, (op.mat for op in ops))
    cls = HermitianOperator if all(isinstance(op, HermitianOperator) for op in ops) else Operator
    return cls(dims, mat)


def _state_vector(state: Union[PureState, ProductState]) -> np.ndarray:
    return state.amplitudes


def expectation(op: HermitianOperator, state: State) -> float:
    """Real expectation value Tr(O rho) or <psi|O|psi>.

    Raises if the imaginary residual exceeds 1e-10 (signals a non-Hermitian
    operator slipping through) or on dimension mismatch.
    """
    if not isinstance(op, HermitianOperator):
        raise ValueError("expectation requires a HermitianOperator")
    if isinstance(state, DensityMatrix):
        if state.total_dim != op.total_dim:
            raise ValueError(f"dimension mismatch: {op.total_dim} vs {state.total_dim}")
        val = np.einsum("ij,ji->", op.mat, state.mat)
    elif isinstance(state, (PureState, ProductState)):
        vec = _state_vector(state)
        if vec.shape[0] != op.total_dim:
            raise ValueError(f"dimension mismatch: {op.total_dim} vs {vec.shape[0]}")
        val = vec.conj() @ (op.mat @ vec)
    else:
        raise ValueError(f"unsupported state type {type(state).__name__}")
    if abs(val.imag) > IMAG_TOL:
        raise ValueError(f"imaginary residual {val.imag:.3e} exceeds {IMAG_TOL}")
    return float(val.real)


def commutator_norm(a: HermitianOperator, b: HermitianOperator) -> float:
    """Max-entry norm of AB - BA."""
    if a.total_dim != b.total_dim:
        raise ValueError("dimension mismatch")
    return float(np.max(np.abs(a.mat @ b.mat - b.mat @ a.mat)))


def partial_transpose(rho: HermitianOperator, party_index: int) -> HermitianOperator:
    """Transpose applied to one tensor factor (0-based party index)."""
    dims = rho.dims
    k = len(dims)
    if not 0 <= party_index < k:
        raise ValueError(f"party_index {party_index} invalid for {k} parties")
    t = rho.mat.reshape(dims + dims)
    t = np.swapaxes(t, party_index, k + party_index)
    n = rho.total_dim
    return HermitianOperator(dims, t.reshape(n, n))


def min_eigenvalue(h: HermitianOperator) -> float:
    """Smallest eigenvalue of a Hermitian operator."""
    if not isinstance(h, HermitianOperator):
        raise ValueError("min_eigenvalue requires a HermitianOperator")
    return float(np.linalg.eigvalsh(h.mat)[0])


def is_ppt(rho: DensityMatrix, cut: int = 0) -> bool:
    """Peres-Horodecki test: positivity of the partial transpose.

    Exact separability test for two qubits. `cut` is the 0-based party whose
    factor is transposed; for a bipartite state either choice gives the same
    spectrum.
    """
    return min_eigenvalue(partial_transpose(rho, cut)) >= -PPT_TOL


def pure_density(state: Union[PureState, ProductState]) -> DensityMatrix:
    """Rank-1 density matrix |psi><psi| of a pure state."""
    vec = _state_vector(state)
    return DensityMatrix(state.dims, np.outer(vec, vec.conj()))


# ---------------------------------------------------------------------------
# JSON serialization.  Complex entries are stored as explicit [re, im] pairs
# to keep the files language-neutral.  Operators are row-major with
# len(entries) == n**2; pure states use len(entries) == n.
# ---------------------------------------------------------------------------


def _entries_to_array(entries, dims: tuple[int, ...]) -> np.ndarray:
    n = int(np.prod(dims))
    arr = np.asarray(entries, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("entries must be a list of [re, im] pairs")
    flat = arr[:, 0] + 1j * arr[:, 1]
    if flat.shape[0] == n * n:
        return flat.reshape(n, n)
    if flat.shape[0] == n:
        return flat
    raise ValueError(f"entry count {flat.shape[0]} matches neither {n} (state) nor {n * n} (operator)")


def _array_to_entries(a: np.ndarray) -> list[list[float]]:
    flat = a.reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def operator_to_dict(op: Operator) -> dict:
    return {"dims": list(op.dims), "entries": _array_to_entries(op.mat)}


def operator_from_dict(d: dict, hermitian: bool = True) -> Operator:
    dims = _check_dims(d["dims"])
    arr = _entries_to_array(d["entries"], dims)
    if arr.ndim != 2:
        raise ValueError("entry count matches a state vector, not an operator")
    return HermitianOperator(dims, arr) if hermitian else Operator(dims, arr)


def state_to_dict(state: Union[PureState, ProductState]) -> dict:
    return {"dims": list(state.dims), "entries": _array_to_entries(_state_vector(state))}


def state_from_dict(d: dict) -> PureState:
    dims = _check_dims(d["dims"])
    arr = _entries_to_array(d["entries"], dims)
    if arr.ndim != 1:
        raise ValueError("entry count matches an operator, not a state vector")
    return PureState(dims, arr)


def save_json(path: Union[str, Path], payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())
