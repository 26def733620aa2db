"""Toy closed systems: spin chains with cell variables, a qubit environment,
and a particle on a grid.

Spin-chain convention: site 0 is the most significant tensor factor, and
``n_i = |1><1|`` counts an excitation on site i.  The Hamiltonian is

    H = sum_bonds [ J (s+_i s-_j + s-_i s+_j) + delta n_i n_j ] + sum_i h_i n_i
        + g sum_i X_i

which conserves N = sum_i n_i unless the transverse term g is non-zero.
"""
from dataclasses import dataclass
from functools import reduce
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from realms.decoherence import DEFAULT_EPSILON, decoherence_functional
from realms.errors import CapExceeded, ContractViolation, NumericalFailure, TruncationError
from realms.histories import HistorySet, narrative_set
from realms.hilbert import (
    ProjectorSet,
    _frozen,
    as_hermitian,
    as_state,
    expectation,
    named_basis,
    normalized,
    pure_density,
)
from realms.maxent import Cell, maxent_state, missing_information

MAX_CHAIN_SITES = 12
MAX_ENV_DIM = 2 ** 12

_SP = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|: raises the occupation
_SM = _SP.T.copy()
_N = np.diag([0.0, 1.0]).astype(complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


def site_operator(op, site, sites):
    """Embed a 2x2 operator at ``site`` of an L-site chain."""
    return np.kron(np.kron(np.eye(2 ** site), op), np.eye(2 ** (sites - site - 1)))


def two_site_operator(a, i, b, j, sites):
    return site_operator(a, i, sites) @ site_operator(b, j, sites)


@dataclass(frozen=True, eq=False)
class SpinChainModel:
    sites: int
    coupling: float = 1.0            # J, hopping amplitude
    interaction: float = 0.0         # delta, n_i n_j
    field: object = 0.0              # h, scalar or one value per site
    transverse: float = 0.0          # g, breaks number conservation
    periodic: bool = False

    def __post_init__(self):
        if not 2 <= self.sites <= MAX_CHAIN_SITES:
            raise CapExceeded(f"spin chain needs 2..{MAX_CHAIN_SITES} sites, got {self.sites}")
        L = self.sites
        h = np.broadcast_to(np.asarray(self.field, dtype=float), (L,))
        bonds = [(i, i + 1) for i in range(L - 1)]
        if self.periodic and L > 2:
            bonds.append((L - 1, 0))
        bond_terms = {}
        for i, j in bonds:
            t = self.coupling * (two_site_operator(_SP, i, _SM, j, L) + two_site_operator(_SM, i, _SP, j, L))
            if self.interaction:
                t = t + self.interaction * two_site_operator(_N, i, _N, j, L)
            bond_terms[(i, j)] = _frozen(t)
        site_terms = {}
        for i in range(L):
            t = h[i] * site_operator(_N, i, L)
            if self.transverse:
                t = t + self.transverse * site_operator(_X, i, L)
            site_terms[i] = _frozen(t)
        number_ops = tuple(_frozen(site_operator(_N, i, L)) for i in range(L))
        object.__setattr__(self, "bond_terms", bond_terms)
        object.__setattr__(self, "site_terms", site_terms)
        object.__setattr__(self, "number_ops", number_ops)
        object.__setattr__(self, "hamiltonian", as_hermitian(sum(bond_terms.values()) + sum(site_terms.values())))
        object.__setattr__(self, "number", as_hermitian(sum(number_ops)))
        comm = np.max(np.abs(self.hamiltonian @ self.number - self.number @ self.hamiltonian))
        object.__setattr__(self, "number_conserving", bool(comm <= 1e-12))

    @property
    def dim(self):
        return 2 ** self.sites


@dataclass(frozen=True, eq=False)
class CellPartition:
    """Contiguous cells of ``cell_size`` sites with their energy and number operators.

    A bond inside a cell belongs to it; a bond between two cells is split
    evenly between them, so the cell energies add up to H exactly.
    """

    model: SpinChainModel
    cell_size: int

    def __post_init__(self):
        L, V = self.model.sites, self.cell_size
        if V < 1 or L % V:
            raise ContractViolation(f"cell size {V} must divide the chain length {L}")
        cells = tuple(tuple(range(y * V, (y + 1) * V)) for y in range(L // V))
        owner = {i: y for y, c in enumerate(cells) for i in c}
        energy = [np.zeros((self.model.dim,) * 2, dtype=complex) for _ in cells]
        for i, t in self.model.site_terms.items():
            energy[owner[i]] += t
        boundary = {y: [] for y in range(len(cells))}
        for (i, j), t in self.model.bond_terms.items():
            yi, yj = owner[i], owner[j]
            if yi == yj:
                energy[yi] += t
            else:
                energy[yi] += t / 2
                energy[yj] += t / 2
                boundary[yi].append((i, j))
                boundary[yj].append((i, j))
        number = [sum(self.model.number_ops[i] for i in c) for c in cells]
        object.__setattr__(self, "sites_of", cells)
        object.__setattr__(self, "energy", tuple(as_hermitian(e) for e in energy))
        object.__setattr__(self, "number", tuple(as_hermitian(n) for n in number))
        object.__setattr__(self, "boundary_bonds", boundary)

    @property
    def n_cells(self):
        return len(self.sites_of)

    def support(self, y):
        """Sites acted on by the energy operator of cell y."""
        out = set(self.sites_of[y])
        for b in self.boundary_bonds[y]:
            out.update(b)
        return out

    def neighbours(self, y):
        """Cells whose energy operators overlap cell y's (and so can exchange energy with it).

        With one-site cells this reaches two cells away: the half bonds on
        either side of a site share it.
        """
        own = self.support(y)
        return [z for z in range(self.n_cells) if z != y and own & self.support(z)]

    def cells(self, with_number=True):
        """Cells as ``maxent.Cell`` objects (no momentum variables on a chain)."""
        return [
            Cell(self.energy[y], (), self.number[y] if with_number else None, 2 ** self.cell_size)
            for y in range(self.n_cells)
        ]

    def constraint_operators(self, with_number=True):
        ops = []
        for c in self.cells(with_number):
            ops.extend(c.operators())
        return ops


class Propagator:
    """Exact time evolution by one eigendecomposition of H."""

    def __init__(self, h):
        self.energies, self.vectors = np.linalg.eigh(as_hermitian(h))

    def unitary(self, t):
        return (self.vectors * np.exp(-1j * self.energies * t)) @ self.vectors.conj().T

    def state(self, psi, t):
        c = self.vectors.conj().T @ psi
        return self.vectors @ (np.exp(-1j * self.energies * t) * c)


def product_state(site_states):
    out = np.ones(1, dtype=complex)
    for s in site_states:
        out = np.kron(out, np.asarray(s, dtype=complex))
    return normalized(out)


def domain_wall_state(sites, filled=None, tilt=0.0):
    """Left ``filled`` sites occupied, the rest empty, each rotated by ``tilt``.

    A small tilt keeps every cell expectation strictly inside its spectrum.
    """
    filled = sites // 2 if filled is None else filled
    c, s = np.cos(tilt), np.sin(tilt)
    return product_state([(s, c) if i < filled else (c, s) for i in range(sites)])


# -- conservation and continuity -------------------------------------------------

class ContinuityResult(NamedTuple):
    rate: float        # i <[H, A_y]>
    flux_sum: float    # sum of expected boundary fluxes into cell y
    gap: float
    fluxes: dict       # neighbour cell (energy) or boundary bond (number) -> flux into y


def _as_rho(rho):
    rho = np.asarray(rho)
    return pure_density(rho) if rho.ndim == 1 else rho


def _ev_commutator(a, b, rho):
    """<i [a, b]> for Hermitian a, b (a real number)."""
    c = 1j * (a @ b - b @ a)
    return expectation((c + c.conj().T) / 2, rho)


def continuity_check(model, partition, rho, cell, quantity="energy"):
    """Discrete continuity equation d<A_y>/dt = sum of boundary fluxes into y.

    Energy fluxes are cell-to-cell currents i<[eps_z, eps_y]> from the
    adjacent cells z; number fluxes are bond currents i<[h_b, nu_y]> over the
    bonds crossing the cell boundary.
    """
    rho = _as_rho(rho)
    h = model.hamiltonian
    if quantity == "energy":
        a = partition.energy[cell]
        fluxes = {z: _ev_commutator(partition.energy[z], a, rho) for z in partition.neighbours(cell)}
    elif quantity == "number":
        a = partition.number[cell]
        fluxes = {b: _ev_commutator(model.bond_terms[b], a, rho) for b in partition.boundary_bonds[cell]}
        if model.transverse:
            for i in partition.sites_of[cell]:
                fluxes[("site", i)] = _ev_commutator(model.site_terms[i], a, rho)
    else:
        raise ContractViolation(f"quantity must be 'energy' or 'number', got {quantity!r}")
    rate = _ev_commutator(h, a, rho)
    total = float(sum(fluxes.values()))
    return ContinuityResult(rate, total, abs(rate - total), fluxes)


def fluctuation_ratio(partition, rho, quantity, cell):
    """(<A^2> - <A>^2) / <A>^2 for a cell's energy or number."""
    rho = _as_rho(rho)
    if quantity == "energy":
        a = partition.energy[cell]
    elif quantity == "number":
        a = partition.number[cell]
    else:
        raise ContractViolation(f"quantity must be 'energy' or 'number', got {quantity!r}")
    mean = expectation(a, rho)
    if abs(mean) < 1e-14:
        raise ContractViolation(f"<{quantity}> of cell {cell} vanishes; the ratio is undefined")
    return (expectation(a @ a, rho) - mean ** 2) / mean ** 2


# -- second law -------------------------------------------------------------------

class TrajectoryRow(NamedTuple):
    t: float
    S_local: float
    S_eq: float
    defect: float


class SecondLawRun(NamedTuple):
    rows: list
    s_eq: float
    multipliers: list  # local-equilibrium multipliers per row


def left_half_occupation(model, partition):
    """Projector set on the total occupation of the left half of the cells."""
    half = partition.n_cells // 2 or 1
    n_left = sum(partition.number[y] for y in range(half))
    return ProjectorSet.from_spectrum(n_left)


def second_law_experiment(model, partition, psi0, times, epsilon=DEFAULT_EPSILON,
                          tol=1e-10, history_set=None, warm_start=True):
    """Entropy of the local-equilibrium (cell) description along exact evolution.

    Each row holds S_local(t) = S({eps_y, nu_y}, rho(t)), the time-independent
    S_eq = S({H, N}, rho) and the medium-decoherence defect of the two-time
    narrative history set (``history_set``, by default the left-half
    occupation) at the previous and current sample times.  The first row's
    defect is that of the single-time set, which is 0.
    """
    psi0 = as_state(psi0)
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ContractViolation("times must be strictly increasing")
    prop = Propagator(model.hamiltonian)
    global_ops = [model.hamiltonian]
    if model.number_conserving:
        global_ops.append(model.number)
    s_eq = missing_information(global_ops, psi0, tol=tol)
    local_ops = partition.constraint_operators(with_number=model.number_conserving)
    alternatives = history_set if history_set is not None else left_half_occupation(model, partition)

    rows, multipliers, lam = [], [], None
    for k, t in enumerate(times):
        psi = prop.state(psi0, t)
        try:
            sol = maxent_state(local_ops, psi, tol=tol, lambda0=lam if warm_start else None)
        except NumericalFailure as exc:
            raise type(exc)(f"at t={t!r}: {exc}", getattr(exc, "residual", None)) from exc
        lam = sol.multipliers
        if sol.entropy > s_eq + 1e-8:
            raise NumericalFailure(
                f"S_local({t!r}) = {sol.entropy!r} exceeds S_eq = {s_eq!r}", residual=sol.entropy - s_eq
            )
        if k == 0:
            defect = 0.0
        else:
            hset = narrative_set(alternatives, model.hamiltonian, (times[k - 1], t))
            defect = decoherence_functional(hset, psi0, epsilon).defect
        rows.append(TrajectoryRow(t, sol.entropy, s_eq, defect))
        multipliers.append(lam)
    return SecondLawRun(rows, s_eq, multipliers)


# -- environment-induced decoherence ------------------------------------------------

def _ry(angle):
    """exp(-i angle Y): |0> -> cos(angle)|0> + sin(angle)|1>."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _env_rotation(angle, n_env):
    return reduce(np.kron, [_ry(angle)] * n_env, np.ones((1, 1)))


def controlled_rotation(system_dim, n_env, theta):
    """Dense U = sum_a |a><a| (x) R(a theta)^{(x) n_env}."""
    env_dim = 2 ** n_env
    u = np.zeros((system_dim * env_dim,) * 2, dtype=complex)
    for a in range(system_dim):
        sl = slice(a * env_dim, (a + 1) * env_dim)
        u[sl, sl] = _env_rotation(a * theta, n_env)
    return u


def environment_defect_closed_form(system_dim, n_env, theta):
    """max over level pairs of |cos((a - b) theta)|^n_env."""
    return max(abs(np.cos(k * theta)) ** n_env for k in range(1, system_dim))


def environment_defect_factorized(system_dim, n_env, theta):
    """Same quantity from explicit single-qubit pointer-state overlaps multiplied together."""
    worst = 0.0
    zero = np.array([1.0, 0.0])
    for a in range(system_dim):
        for b in range(a + 1, system_dim):
            ea, eb = _ry(a * theta) @ zero, _ry(b * theta) @ zero
            ov = 1.0
            for _ in range(n_env):
                ov *= np.vdot(ea, eb)
            worst = max(worst, abs(ov))
    return worst


class EnvironmentModel(NamedTuple):
    history_set: HistorySet
    report: object
    psi: np.ndarray
    records: Optional[ProjectorSet]  # only when requested


def _from_blocks(system_dim, env_dim, block):
    out = np.empty((system_dim * env_dim,) * 2, dtype=complex)
    for c in range(system_dim):
        for d in range(system_dim):
            out[c * env_dim:(c + 1) * env_dim, d * env_dim:(d + 1) * env_dim] = block(c, d)
    return out


def environment_decoherence_model(system_dim=2, n_env=1, theta=0.3, epsilon=DEFAULT_EPSILON,
                                  with_records=False):
    """A system that imprints its level on ``n_env`` environment qubits.

    Level a rotates each environment qubit by a*theta (see
    ``controlled_rotation``).  The two-time history set follows only the
    system: its computational basis before the interaction, its Fourier
    basis after it.  With ``with_records`` the environment pointer
    projectors are returned too, labelled like the histories.

    U is block diagonal, so every conjugation is assembled block by block:
    U^H (A (x) B) U has blocks A_cd R_c^T B R_d.
    """
    total = system_dim * 2 ** n_env
    if system_dim < 2 or total > MAX_ENV_DIM:
        raise CapExceeded(f"system_dim * 2**n_env = {total} exceeds {MAX_ENV_DIM}")
    env_dim = 2 ** n_env
    first = ProjectorSet.from_basis(named_basis("computational", system_dim))
    final = ProjectorSet.from_basis(named_basis("fourier", system_dim))
    # R_c^T R_d = R((d - c) theta)
    rot = {k: _env_rotation(k * theta, n_env) for k in range(1 - system_dim, system_dim)}
    eye_env = np.eye(env_dim)
    p1 = ProjectorSet(tuple(np.kron(p, eye_env) for p in first.members), first.labels, validate=False)
    late = tuple(_from_blocks(system_dim, env_dim, lambda c, d, p=p: p[c, d] * rot[d - c]) for p in final.members)
    hset = HistorySet.chain((0.0, 1.0), [p1, ProjectorSet(late, final.labels, validate=False)])
    psi = np.zeros(total, dtype=complex)
    psi[::env_dim] = 1 / np.sqrt(system_dim)
    report = decoherence_functional(hset, psi, epsilon)
    records = _pointer_records(first, final, rot, env_dim) if with_records else None
    return EnvironmentModel(hset, report, psi, records)


def _pointer_records(first, final, rot, env_dim):
    """R_(a,b) = U^H (Pi_b (x) Q_a) U with Q_a orthogonal pointer projectors.

    Q_a projects on the part of level a's pointer state R_a|0...0> orthogonal
    to the earlier ones; the last level takes the rest of the space.
    """
    system_dim = len(first)
    vecs = []
    for a in range(system_dim - 1):
        e = rot[a][:, 0].astype(complex)
        for q in vecs:
            e = e - np.vdot(q, e) * q
        n = np.linalg.norm(e)
        vecs.append(e / n if n > 1e-12 else np.zeros(env_dim, dtype=complex))
    pulled = {c: [rot[-c] @ q for q in vecs] for c in range(system_dim)}  # R_c^T q

    def env_block(a, c, d):
        if a < system_dim - 1:
            return np.outer(pulled[c][a], pulled[d][a].conj())
        rest = rot[d - c].astype(complex)
        for x, y in zip(pulled[c], pulled[d]):
            rest = rest - np.outer(x, y.conj())
        return rest

    members, labels = [], []
    for a in range(system_dim):
        for b, pb in zip(final.labels, final.members):
            members.append(_from_blocks(system_dim, env_dim, lambda c, d: pb[c, d] * env_block(a, c, d)))
            labels.append((first.labels[a], b))
    return ProjectorSet(tuple(members), tuple(labels), validate=False)


def two_slit_model():
    """Dimension-3 two-slit analog.

    Time 1 asks which slit (|1>, |2>) or neither (|0>); time 2 asks whether
    the particle is at the screen point (|1> + |2>)/sqrt 2.  The initial
    state passes both slits with equal amplitude, so the two slit histories
    interfere at the screen.
    """
    first = ProjectorSet.from_basis(np.eye(3)[:, [1, 2, 0]], ("slit1", "slit2", "blocked"))
    d = np.array([0, 1, 1]) / np.sqrt(2)
    screen = ProjectorSet.yes_no(d, ("screen", "elsewhere"))
    hset = HistorySet.chain((0.0, 1.0), [first, screen])
    psi = normalized([0, 1, 1])
    return hset, psi


# -- Ehrenfest ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WavePacketModel:
    """Particle on ``grid_size`` points inside hard walls at +-length/2.

    Kinetic energy uses the second difference; ``potential`` is a callable
    V(x) and ``force`` an optional callable -V'(x) used by the classical
    integrator (a central difference of V otherwise).
    """

    grid_size: int
    length: float
    mass: float = 1.0
    potential: Callable = None
    force: Callable = None

    def __post_init__(self):
        g = self.grid_size
        a = self.length / (g + 1)
        x = -self.length / 2 + a * np.arange(1, g + 1)
        v = np.zeros(g) if self.potential is None else np.asarray(self.potential(x), dtype=float)
        kin = 1.0 / (2 * self.mass * a * a)
        h = np.diag(2 * kin + v) - kin * (np.eye(g, k=1) + np.eye(g, k=-1))
        w, vec = np.linalg.eigh(h)
        object.__setattr__(self, "spacing", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "_eig", (w, vec))

    def packet(self, x0, p0, width):
        if width < 3 * self.spacing:
            raise ContractViolation(f"packet width {width} is below three grid spacings ({3 * self.spacing:.3g})")
        psi = np.exp(-((self.x - x0) ** 2) / (4 * width ** 2) + 1j * p0 * self.x)
        return normalized(psi)

    def evolve(self, psi, t):
        w, v = self._eig
        return v @ (np.exp(-1j * w * t) * (v.T @ psi))

    def classical_force(self, x):
        if self.force is not None:
            return float(self.force(x))
        if self.potential is None:
            return 0.0
        h = 1e-5
        return -float((self.potential(np.array([x + h])) - self.potential(np.array([x - h])))[0] / (2 * h))


class EhrenfestRow(NamedTuple):
    t: float
    mean_x: float
    x_classical: float
    spread: float


def ehrenfest_experiment(model, x0, p0, width, times, edge_cells=8, edge_tol=1e-6):
    """<x>(t) of a Gaussian packet against the classical trajectory from (x0, p0).

    The classical orbit solves m x'' = -V'(x) with an adaptive high-order
    integrator.  Raises ``TruncationError`` when more than ``edge_tol`` of
    the probability sits in the outermost ``edge_cells`` grid points.
    """
    psi0 = model.packet(x0, p0, width)
    times = np.asarray(times, dtype=float)
    m = model.mass

    def rhs(_, y):
        return [y[1], model.classical_force(y[0]) / m]

    sol = solve_ivp(rhs, (0.0, float(times.max()) if len(times) else 0.0), [x0, p0 / m],
                    method="DOP853", rtol=1e-12, atol=1e-12, dense_output=True)
    rows = []
    for t in times:
        psi = model.evolve(psi0, t)
        prob = np.abs(psi) ** 2
        edge = prob[:edge_cells].sum() + prob[-edge_cells:].sum()
        if edge > edge_tol:
            raise TruncationError(f"packet reached the grid edge at t={t!r} (edge probability {edge:.2e})",
                                  residual=float(edge))
        mean = float(prob @ model.x)
        spread = float(np.sqrt(max(prob @ model.x ** 2 - mean ** 2, 0.0)))
        rows.append(EhrenfestRow(float(t), mean, float(sol.sol(t)[0]), spread))
    return rows


def harmonic(omega=1.0, mass=1.0):
    return (lambda x: 0.5 * mass * omega ** 2 * x ** 2), (lambda x: -mass * omega ** 2 * x)


def quartic(coefficient=0.25):
    return (lambda x: coefficient * x ** 4), (lambda x: -4 * coefficient * x ** 3)
