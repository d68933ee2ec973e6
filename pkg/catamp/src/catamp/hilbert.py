"""
Truncated Fock-space linear algebra.

Basis ordering is qubit-major throughout the package: a joint index is
`q * cavity_dim + n` with qubit index 0 = |g>, 1 = |e>. The sigma-z convention is
sigma_z|e> = +|e>, sigma_z|g> = -|g>. Every value here is immutable after
construction; arrays are flagged read-only. States carry subsystem tags so a
qubit-only state and a two-level cavity are never confused.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidDimensionError, ShapeError

QUBIT_DIM = 2
G, E = 0, 1

Subsystem = Literal["qubit", "cavity"]
QUBIT_ONLY: Tuple[Subsystem, ...] = ("qubit",)
CAVITY_ONLY: Tuple[Subsystem, ...] = ("cavity",)
JOINT: Tuple[Subsystem, ...] = ("qubit", "cavity")


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=complex)
    out.setflags(write=False)
    return out


def subsystem_tags(dims: Tuple[int, ...], tags: Tuple[str, ...]) -> Tuple[Subsystem, ...]:
    """Factor labels for basis_dims; untagged single factors are cavities, pairs are qubit (x) cavity."""
    if not tags:
        if len(dims) == 1:
            return CAVITY_ONLY
        if len(dims) == 2:
            return JOINT
        raise ShapeError(f"basis_dims {dims} need explicit subsystem tags")
    tags = tuple(tags)
    if len(tags) != len(dims):
        raise ShapeError(f"{len(tags)} subsystem tags {tags} for basis_dims {dims}")
    for tag, d in zip(tags, dims):
        if tag not in ("qubit", "cavity"):
            raise ShapeError(f"unknown subsystem tag {tag!r}")
        if tag == "qubit" and d != QUBIT_DIM:
            raise ShapeError(f"a qubit factor has dimension {QUBIT_DIM}, got {d}")
    return tags  # type: ignore[return-value]


@dataclass(frozen=True)
class FockKet:
    amplitudes: np.ndarray
    basis_dims: Tuple[int, ...]
    subsystems: Tuple[Subsystem, ...] = ()

    def __post_init__(self):
        amps = np.asarray(self.amplitudes).reshape(-1)
        dims = tuple(int(d) for d in self.basis_dims)
        if amps.size != int(np.prod(dims)):
            raise ShapeError(f"FockKet: {amps.size} amplitudes do not match basis_dims {dims}")
        object.__setattr__(self, "amplitudes", _frozen(amps))
        object.__setattr__(self, "basis_dims", dims)
        object.__setattr__(self, "subsystems", subsystem_tags(dims, self.subsystems))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockKet":
        norm = self.norm()
        if norm == 0.0:
            raise ValueError("FockKet: cannot normalize the zero vector")
        return FockKet(self.amplitudes / norm, self.basis_dims, self.subsystems)

    def projector(self) -> "DensityOp":
        return DensityOp(np.outer(self.amplitudes, self.amplitudes.conj()), self.basis_dims, self.subsystems)


@dataclass(frozen=True)
class DensityOp:
    matrix: np.ndarray
    basis_dims: Tuple[int, ...]
    subsystems: Tuple[Subsystem, ...] = ()

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        dims = tuple(int(d) for d in self.basis_dims)
        d = int(np.prod(dims))
        if mat.shape != (d, d):
            raise ShapeError(f"DensityOp: matrix shape {mat.shape} does not match basis_dims {dims}")
        object.__setattr__(self, "matrix", _frozen(mat))
        object.__setattr__(self, "basis_dims", dims)
        object.__setattr__(self, "subsystems", subsystem_tags(dims, self.subsystems))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def violations(
        self,
        hermitian_tol: float = 1e-10,
        trace_tol: float = 1e-8,
        eigenvalue_floor: float = -1e-8,
    ) -> list[str]:
        """Invariant breaches as human-readable strings; empty when the state is valid."""
        problems = []
        herm = float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.dim else 0.0
        if herm > hermitian_tol:
            problems.append(f"hermiticity residual {herm:.3e} > {hermitian_tol:.1e}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            problems.append(f"trace {tr.real:.12f}{tr.imag:+.2e}j deviates from 1 by more than {trace_tol:.1e}")
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))))
        if min_eig < eigenvalue_floor:
            problems.append(f"minimum eigenvalue {min_eig:.3e} < {eigenvalue_floor:.1e}")
        return problems


@dataclass(frozen=True)
class OpMatrix:
    matrix: np.ndarray
    hermitian_flag: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ShapeError(f"OpMatrix: expected a square matrix, got shape {mat.shape}")
        object.__setattr__(self, "matrix", _frozen(mat))
        if self.hermitian_flag:
            residual = float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if mat.size else 0.0
            if residual > 1e-10:
                raise ValueError(f"OpMatrix: flagged Hermitian but residual is {residual:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        """CSR copy for the integrator hot loop."""
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "OpMatrix":
        return OpMatrix(self.matrix.conj().T, self.hermitian_flag)

    def __matmul__(self, other: "OpMatrix") -> "OpMatrix":
        if not isinstance(other, OpMatrix):
            return NotImplemented
        if other.dim != self.dim:
            raise ShapeError(f"OpMatrix: cannot multiply {self.dim}x{self.dim} by {other.dim}x{other.dim}")
        return OpMatrix(self.matrix @ other.matrix)

    def apply(self, state: Union[FockKet, DensityOp]) -> Union[FockKet, DensityOp]:
        """O|psi> for kets, O rho O^dagger for density operators."""
        if state.dim != self.dim:
            raise ShapeError(f"OpMatrix: operator dim {self.dim} does not match state dim {state.dim}")
        if isinstance(state, FockKet):
            return FockKet(self.matrix @ state.amplitudes, state.basis_dims, state.subsystems)
        return DensityOp(self.matrix @ state.matrix @ self.matrix.conj().T, state.basis_dims, state.subsystems)


State = Union[FockKet, DensityOp]


def _check_cavity_dim(cavity_dim: int, minimum: int) -> int:
    cavity_dim = int(cavity_dim)
    if cavity_dim < minimum:
        raise InvalidDimensionError(f"cavity_dim must be >= {minimum}, got {cavity_dim}")
    return cavity_dim


def identity(dim: int) -> OpMatrix:
    return OpMatrix(np.eye(dim), True)


def annihilation_op(cavity_dim: int) -> OpMatrix:
    cavity_dim = _check_cavity_dim(cavity_dim, 2)
    return OpMatrix(np.diag(np.sqrt(np.arange(1, cavity_dim)), k=1))


def creation_op(cavity_dim: int) -> OpMatrix:
    return annihilation_op(cavity_dim).dag()


def number_op(cavity_dim: int) -> OpMatrix:
    cavity_dim = _check_cavity_dim(cavity_dim, 1)
    return OpMatrix(np.diag(np.arange(cavity_dim, dtype=float)), True)


def parity_op(cavity_dim: int) -> OpMatrix:
    cavity_dim = _check_cavity_dim(cavity_dim, 1)
    return OpMatrix(np.diag((-1.0) ** np.arange(cavity_dim)), True)


def sigma_z() -> OpMatrix:
    return OpMatrix(np.diag([-1.0, 1.0]), True)


def sigma_minus() -> OpMatrix:
    """|g><e| in the (g, e) ordering."""
    return OpMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]))


def sigma_plus() -> OpMatrix:
    return sigma_minus().dag()


def sigma_x() -> OpMatrix:
    return OpMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), True)


def basis_ket(dim: int, index: int) -> FockKet:
    if not 0 <= index < dim:
        raise InvalidDimensionError(f"basis index {index} outside dimension {dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[index] = 1.0
    return FockKet(amps, (dim,))


def qubit_ket(label: str) -> FockKet:
    if label not in ("g", "e"):
        raise ValueError(f"qubit label must be 'g' or 'e', got {label!r}")
    return FockKet(basis_ket(QUBIT_DIM, G if label == "g" else E).amplitudes, (QUBIT_DIM,), QUBIT_ONLY)


def joint_ket(qubit: str, n: int, cavity_dim: int) -> FockKet:
    """|q, n> on the qubit-major tensor basis."""
    return tensor_product(qubit_ket(qubit), basis_ket(cavity_dim, n))


def tensor_product(a, b):
    """Kronecker product with the qubit-major ordering; both factors must be of the same kind."""
    if type(a) is not type(b):
        raise TypeError(f"tensor_product: mismatched kinds {type(a).__name__} and {type(b).__name__}")
    if isinstance(a, OpMatrix):
        return OpMatrix(np.kron(a.matrix, b.matrix), a.hermitian_flag and b.hermitian_flag)
    if isinstance(a, FockKet):
        return FockKet(np.kron(a.amplitudes, b.amplitudes), a.basis_dims + b.basis_dims, a.subsystems + b.subsystems)
    if isinstance(a, DensityOp):
        return DensityOp(np.kron(a.matrix, b.matrix), a.basis_dims + b.basis_dims, a.subsystems + b.subsystems)
    raise TypeError(f"tensor_product: unsupported kind {type(a).__name__}")


def on_qubit(op: OpMatrix, cavity_dim: int) -> OpMatrix:
    return tensor_product(op, identity(cavity_dim))


def on_cavity(op: OpMatrix) -> OpMatrix:
    return tensor_product(identity(QUBIT_DIM), op)


def _joint_split(rho: DensityOp) -> Tuple[int, np.ndarray]:
    if rho.subsystems != JOINT:
        raise ShapeError(
            f"expected a qubit (x) cavity state, got subsystems {rho.subsystems} with basis_dims {rho.basis_dims}"
        )
    n_c = rho.basis_dims[1]
    return n_c, rho.matrix.reshape(QUBIT_DIM, n_c, QUBIT_DIM, n_c)


def as_density(state: State) -> DensityOp:
    return state.projector() if isinstance(state, FockKet) else state


def partial_trace_qubit(rho: State) -> DensityOp:
    """Cavity reduced state."""
    n_c, blocks = _joint_split(as_density(rho))
    return DensityOp(np.einsum("ijik->jk", blocks), (n_c,), CAVITY_ONLY)


def partial_trace_cavity(rho: State) -> DensityOp:
    """Qubit reduced state in the (g, e) ordering."""
    _, blocks = _joint_split(as_density(rho))
    return DensityOp(np.einsum("ijkj->ik", blocks), (QUBIT_DIM,), QUBIT_ONLY)


def embed_cavity_state(qubit: FockKet, cavity: State) -> State:
    """qubit (x) cavity, keeping kets as kets."""
    if isinstance(cavity, FockKet):
        return tensor_product(qubit, cavity)
    return tensor_product(qubit.projector(), cavity)


def expectation(state: State, op: OpMatrix) -> complex:
    """Tr[rho O] or <psi|O|psi>."""
    if state.dim != op.dim:
        raise ShapeError(f"expectation: state dim {state.dim} does not match operator dim {op.dim}")
    if isinstance(state, FockKet):
        value = np.vdot(state.amplitudes, op.matrix @ state.amplitudes)
    else:
        value = np.trace(state.matrix @ op.matrix)
    value = complex(value)
    if op.hermitian_flag:
        value = complex(value.real, 0.0) if abs(value.imag) < 1e-10 else value
    return value


@dataclass(frozen=True)
class JCOperators:
    """Sparse joint-space operators for one cavity truncation."""

    cavity_dim: int
    a: sp.csr_matrix
    adag: sp.csr_matrix
    num: sp.csr_matrix
    sz: sp.csr_matrix
    sm: sp.csr_matrix
    sp_: sp.csr_matrix
    coupling: sp.csr_matrix
    identity: sp.csr_matrix

    @property
    def dim(self) -> int:
        return QUBIT_DIM * self.cavity_dim


@lru_cache(maxsize=32)
def jc_operators(cavity_dim: int) -> JCOperators:
    """Cached sparse ladder and sigma operators on the joint space."""
    a = on_cavity(annihilation_op(cavity_dim)).sparse
    sm = on_qubit(sigma_minus(), cavity_dim).sparse
    adag = a.conj().T.tocsr()
    smd = sm.conj().T.tocsr()
    return JCOperators(
        cavity_dim=cavity_dim,
        a=a,
        adag=adag,
        num=(adag @ a).tocsr(),
        sz=on_qubit(sigma_z(), cavity_dim).sparse,
        sm=sm,
        sp_=smd,
        coupling=(adag @ sm + a @ smd).tocsr(),
        identity=sp.identity(QUBIT_DIM * cavity_dim, dtype=complex, format="csr"),
    )
