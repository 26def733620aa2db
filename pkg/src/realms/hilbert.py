"""Dense operator algebra on a finite-dimensional Hilbert space.

States, Hermitian operators, projectors and density matrices are plain
complex ``numpy`` arrays.  The ``as_*`` helpers validate an array against
the relevant invariant and return a read-only copy, so anything that has
passed through them can be shared freely.

Units: hbar = 1, Boltzmann constant = 1, entropies in nats.
"""
from dataclasses import dataclass, field, InitVar
from typing import Hashable, Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from realms.errors import ContractViolation, NumericalFailure, OverflowFailure

TOL_NORM = 1e-12
TOL_HERMITIAN = 1e-12
TOL_PROJECTOR = 1e-10
TOL_TRACE = 1e-10
TOL_SPECTRAL = 1e-10
NEGATIVE_CLIP = 1e-10
EXP_LIMIT = 700.0

# pairwise orthogonality checks above this many flops fall back to a trace test
_PAIRWISE_BUDGET = 2e9


def _frozen(a):
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def _square(a, what="operator"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ContractViolation(f"{what} must be a non-empty square matrix, got shape {a.shape}")
    return a


def _check_dims(*arrays):
    dims = {a.shape[0] for a in arrays}
    if len(dims) != 1:
        raise ContractViolation(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def as_state(amplitudes, tol=TOL_NORM):
    """Validate a unit-norm state vector."""
    v = np.asarray(amplitudes, dtype=complex)
    if v.ndim != 1 or v.size == 0:
        raise ContractViolation(f"state vector must be 1-D and non-empty, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > tol:
        raise ContractViolation(f"state vector norm {norm!r} differs from 1 by more than {tol}")
    return _frozen(v)


def normalized(v):
    v = np.asarray(v, dtype=complex)
    n = np.linalg.norm(v)
    if n == 0:
        raise ContractViolation("cannot normalize the zero vector")
    return _frozen(v / n)


def as_hermitian(a, tol=TOL_HERMITIAN):
    """Symmetrize ``a`` as (a + a^H)/2, rejecting deviations larger than ``tol``."""
    a = _square(np.asarray(a, dtype=complex))
    dev = np.max(np.abs(a - a.conj().T))
    if dev > tol:
        raise ContractViolation(f"operator is not Hermitian: max |A - A^H| = {dev:.3e} > {tol}")
    return _frozen((a + a.conj().T) / 2)


def as_projector(p, tol=TOL_PROJECTOR):
    p = as_hermitian(p)
    dev = np.max(np.abs(p @ p - p))
    if dev > tol:
        raise ContractViolation(f"operator is not idempotent: max |P P - P| = {dev:.3e}")
    return p


def projector_rank(p):
    return int(round(np.trace(p).real))


def as_density_matrix(rho, tol=TOL_TRACE):
    rho = as_hermitian(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ContractViolation(f"density matrix trace {tr!r} is not 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -NEGATIVE_CLIP:
        raise ContractViolation(f"density matrix has eigenvalue {lo:.3e} < -{NEGATIVE_CLIP}")
    return rho


def pure_density(psi):
    psi = as_state(psi)
    return _frozen(np.outer(psi, psi.conj()))


def spectral_decompose(a, check=True):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns.
    """
    a = as_hermitian(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver did not converge: {exc}") from exc
    w, v = w[::-1], v[:, ::-1]
    if check:
        scale = max(1.0, float(np.max(np.abs(a))))
        recon = np.max(np.abs((v * w) @ v.conj().T - a)) / scale
        gram = np.max(np.abs(v.conj().T @ v - np.eye(len(w))))
        if recon > TOL_SPECTRAL or gram > TOL_SPECTRAL:
            raise NumericalFailure(
                f"spectral decomposition inaccurate (reconstruction {recon:.2e}, gram {gram:.2e})",
                residual=max(recon, gram),
            )
    return w, v


def herm_exp(a, scale=1.0):
    """exp(scale * A) for Hermitian A, via the spectral decomposition."""
    w, v = spectral_decompose(a, check=False)
    x = scale * w
    if x.max() > EXP_LIMIT:
        raise OverflowFailure(
            f"exp overflow: scale*lambda_max = {x.max():.1f} > {EXP_LIMIT}; rescale the multipliers",
            residual=float(x.max()),
        )
    e = (v * np.exp(x)) @ v.conj().T
    return _frozen((e + e.conj().T) / 2)


def normalized_exp(k):
    """Return ``(exp(-K)/Z, log Z)`` without overflow, for Hermitian K."""
    w, v = np.linalg.eigh(as_hermitian(k))
    log_z = float(logsumexp(-w))
    p = np.exp(-w - log_z)
    rho = (v * p) @ v.conj().T
    return _frozen((rho + rho.conj().T) / 2), log_z


def evolution_operator(h, t, hbar=1.0):
    """U = exp(-i H t / hbar)."""
    w, v = np.linalg.eigh(as_hermitian(h))
    return (v * np.exp(-1j * w * t / hbar)) @ v.conj().T


def check_unitary(u, tol=TOL_PROJECTOR):
    dev = np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0])))
    if dev > tol:
        raise NumericalFailure(f"evolution operator not unitary: deviation {dev:.3e}", residual=dev)
    return dev


def heisenberg_evolve(p, h, t, hbar=1.0):
    """Heisenberg-picture projector exp(+iHt) P exp(-iHt)."""
    p = as_projector(p)
    h = as_hermitian(h)
    _check_dims(p, h)
    u = evolution_operator(h, t, hbar)
    check_unitary(u)
    out = u.conj().T @ p @ u
    return _frozen((out + out.conj().T) / 2)


def von_neumann_entropy(rho):
    """S = -Tr(rho log rho) in nats, with 0 log 0 = 0."""
    rho = as_hermitian(rho)
    p = np.linalg.eigvalsh(rho)
    if p[0] < -NEGATIVE_CLIP:
        raise ContractViolation(f"density matrix has eigenvalue {p[0]:.3e} < -{NEGATIVE_CLIP}")
    p = np.clip(p, 0.0, 1.0)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p))) + 0.0


def expectation(a, rho):
    """Tr(A rho), checked to be real."""
    a = _square(a)
    rho = _square(rho, "density matrix")
    _check_dims(a, rho)
    val = np.einsum("ij,ji->", a, rho)
    if abs(val.imag) > 1e-10:
        raise NumericalFailure(f"expectation value has imaginary part {val.imag:.3e}", residual=abs(val.imag))
    return float(val.real)


# -- sampling ---------------------------------------------------------------

def haar_unitary(dim, rng):
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_state(dim, rng):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return normalized(v)


def random_hermitian(dim, rng, scale=1.0):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return as_hermitian(scale * (z + z.conj().T) / 2)


def random_density(dim, rng, rank=None):
    rank = dim if rank is None else rank
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = z @ z.conj().T
    rho /= np.trace(rho).real
    return as_density_matrix((rho + rho.conj().T) / 2)


# -- projector sets -----------------------------------------------------------

def _check_orthogonality(members, dim):
    m = len(members)
    if m * (m - 1) / 2 * dim ** 3 <= _PAIRWISE_BUDGET:
        worst = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                worst = max(worst, float(np.max(np.abs(members[i] @ members[j]))))
        return worst
    # Hermitian idempotents summing to I are mutually orthogonal; Tr(P_i P_j) = |P_i P_j|_F^2
    flat = np.stack(members).reshape(m, -1)
    gram = np.abs(flat.conj() @ flat.T)
    np.fill_diagonal(gram, 0.0)
    return float(np.sqrt(gram.max())) if m > 1 else 0.0


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Exhaustive set of mutually orthogonal projectors at one time.

    ``validate=False`` skips the O(m^2 d^3) checks; it is meant for sets
    obtained from an already validated set by a unitary conjugation.
    """

    members: tuple
    labels: tuple = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        members = tuple(as_projector(p) if validate else _frozen(p) for p in self.members)
        if not members:
            raise ContractViolation("projector set is empty")
        labels = tuple(range(len(members))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(members):
            raise ContractViolation("projector set needs one label per member")
        if len(set(labels)) != len(labels):
            raise ContractViolation("projector set labels must be distinct")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "labels", labels)
        dim = _check_dims(*members)
        if validate:
            total = np.max(np.abs(sum(members) - np.eye(dim)))
            if total > TOL_PROJECTOR:
                raise ContractViolation(f"projectors do not sum to identity (max deviation {total:.3e})")
            overlap = _check_orthogonality(members, dim)
            if overlap > TOL_PROJECTOR:
                raise ContractViolation(f"projectors are not mutually orthogonal (max |P_a P_b| = {overlap:.3e})")

    @property
    def dim(self):
        return self.members[0].shape[0]

    def __len__(self):
        return len(self.members)

    def __iter__(self) -> Iterator:
        return iter(zip(self.labels, self.members))

    def __getitem__(self, label):
        return self.members[self.labels.index(label)]

    def ranks(self):
        return [projector_rank(p) for p in self.members]

    def conjugate(self, u):
        """Return {U^H P U}; U must be unitary."""
        check_unitary(u)
        out = []
        for p in self.members:
            q = u.conj().T @ p @ u
            out.append((q + q.conj().T) / 2)
        return ProjectorSet(tuple(out), self.labels, validate=False)

    def evolve(self, h, t, hbar=1.0):
        h = as_hermitian(h)
        _check_dims(h, self.members[0])
        return self.conjugate(evolution_operator(h, t, hbar))

    @classmethod
    def from_basis(cls, basis, labels=None, tol=TOL_PROJECTOR):
        """Rank-1 projectors onto the columns of an orthonormal basis."""
        b = _square(np.asarray(basis, dtype=complex), "basis")
        dev = np.max(np.abs(b.conj().T @ b - np.eye(b.shape[0])))
        if dev > tol:
            raise ContractViolation(f"basis is not orthonormal (deviation {dev:.3e})")
        members = tuple(np.outer(b[:, i], b[:, i].conj()) for i in range(b.shape[1]))
        return cls(members, labels, validate=False)

    @classmethod
    def from_spectrum(cls, a, decimals=8):
        """Spectral projectors of a Hermitian operator, grouped by rounded eigenvalue.

        Labels are the rounded eigenvalues, ascending.
        """
        w, v = np.linalg.eigh(as_hermitian(a))
        keys = np.round(w, decimals) + 0.0
        labels, members = [], []
        for key in np.unique(keys):
            cols = v[:, keys == key]
            labels.append(float(key))
            members.append(cols @ cols.conj().T)
        return cls(tuple(members), tuple(labels), validate=False)

    @classmethod
    def yes_no(cls, psi, labels=("yes", "no")):
        """{|psi><psi|, I - |psi><psi|}: "is the system in state psi?"."""
        p = pure_density(psi)
        return cls((p, np.eye(len(psi)) - p), labels, validate=False)


def named_basis(name, dim):
    """Columns of a named orthonormal basis ('computational' or 'fourier')."""
    if name == "computational":
        return np.eye(dim, dtype=complex)
    if name == "fourier":
        k = np.arange(dim)
        return np.exp(2j * np.pi * np.outer(k, k) / dim) / np.sqrt(dim)
    raise ContractViolation(f"unknown basis name {name!r}; expected 'computational' or 'fourier'")


def basis_with_state(psi, rng=None):
    """Orthonormal basis whose first column is ``psi`` (completed by QR)."""
    psi = as_state(psi)
    dim = len(psi)
    if rng is None:
        fill = np.eye(dim, dtype=complex)
    else:
        fill = haar_unitary(dim, rng)
    q, _ = np.linalg.qr(np.column_stack([psi, fill]))
    q = q[:, :dim]
    q[:, 0] = q[:, 0] * (np.vdot(q[:, 0], psi) / abs(np.vdot(q[:, 0], psi)))
    return q
