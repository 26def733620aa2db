"""Maximum-missing-information (Jaynes) effective density matrices.

Given expected values <A_m> of Hermitian operators that need not commute,
the entropy-maximizing state is rho~ = exp(-sum_m lam_m A_m) / Z.  The
multipliers minimize the convex dual

    f(lam) = log Z(lam) + lam . targets,

whose gradient is targets - <A>_lam and whose Hessian is the Kubo-Mori
covariance matrix of the constraint operators.  ``solve_multipliers`` runs
damped Newton on f from lam = 0.
"""
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from realms.errors import (
    BoundaryTargetError,
    ContractViolation,
    DegenerateConstraints,
    NonConvergence,
    NumericalFailure,
)
from realms.hilbert import (
    _frozen,
    as_hermitian,
    expectation,
    normalized_exp,
    von_neumann_entropy,
)

FEASIBILITY_MARGIN = 1e-6
RANK_TOL = 1e-10
DUAL_CHECK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    operators: tuple
    targets: np.ndarray

    def __post_init__(self):
        ops = tuple(as_hermitian(a) for a in self.operators)
        if not ops:
            raise ContractViolation("a constraint set needs at least one operator")
        if len({a.shape for a in ops}) != 1:
            raise ContractViolation("constraint operators must share one dimension")
        targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if targets.shape != (len(ops),):
            raise ContractViolation(f"need {len(ops)} targets, got {targets.shape[0]}")
        if not np.all(np.isfinite(targets)):
            raise ContractViolation("constraint targets must be finite")
        targets.flags.writeable = False
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def from_state(cls, operators, rho):
        """Targets read off a density matrix (or a pure state vector)."""
        rho = np.asarray(rho)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
        return cls(tuple(operators), [expectation(a, rho) for a in operators])

    @property
    def dim(self):
        return self.operators[0].shape[0]

    def __len__(self):
        return len(self.operators)


@dataclass(frozen=True, eq=False)
class MaxEntSolution:
    multipliers: np.ndarray
    targets: np.ndarray
    rho_tilde: np.ndarray
    entropy: float
    log_z: float
    residual: float
    iterations: int
    dual_gap: float = 0.0  # |S - (log Z + lam . targets)|

    def to_json(self):
        return {
            "multipliers": [float(x) for x in self.multipliers],
            "targets": [float(x) for x in self.targets],
            "residual": self.residual,
            "entropy": self.entropy,
            "log_z": self.log_z,
            "iterations": self.iterations,
        }


def _traceless(ops):
    d = ops.shape[1]
    tr = np.real(np.trace(ops, axis1=1, axis2=2)) / d
    return ops - tr[:, None, None] * np.eye(d), tr


def reduce_constraints(operators, tol=RANK_TOL):
    """Indices of a linearly independent subset (modulo the identity).

    Operators proportional to the identity are dropped; the rest are kept
    greedily in order.  Use this to deduplicate a constraint family before
    solving, e.g. a complete set of projectors whose sum is the identity.
    """
    ops = np.stack([as_hermitian(a) for a in operators])
    tl, _ = _traceless(ops)
    keep, basis = [], []
    for i, a in enumerate(tl):
        v = a.reshape(-1)
        scale = np.linalg.norm(v)
        if scale <= tol:
            continue
        r = v / scale
        for q in basis:
            r = r - np.vdot(q, r) * q
        n = np.linalg.norm(r)
        if n > np.sqrt(tol):
            basis.append(r / n)
            keep.append(i)
    return keep


def _screen(constraints, margin):
    """Split off identity-like operators and reject degenerate or boundary targets."""
    ops = np.stack(constraints.operators)
    t = constraints.targets
    tl, tr = _traceless(ops)
    norms = np.linalg.norm(tl.reshape(len(t), -1), axis=1)
    scales = np.maximum(1.0, np.linalg.norm(ops.reshape(len(t), -1), axis=1))
    trivial = norms <= RANK_TOL * scales
    for m in np.flatnonzero(trivial):
        if abs(t[m] - tr[m]) > margin:
            raise BoundaryTargetError(
                f"constraint {m} is proportional to the identity; its target must be {tr[m]!r}, got {t[m]!r}"
            )
    active = np.flatnonzero(~trivial)
    if len(active):
        v = tl[active].reshape(len(active), -1) / norms[active, None]
        gram = np.real(v.conj() @ v.T)
        lo = np.linalg.eigvalsh(gram)[0]
        if lo <= RANK_TOL:
            raise DegenerateConstraints(
                f"constraint operators are linearly dependent modulo the identity "
                f"(smallest Gram eigenvalue {lo:.2e}); remove redundant constraints"
            )
        for m in active:
            w = np.linalg.eigvalsh(ops[m])
            if t[m] <= w[0] + margin or t[m] >= w[-1] - margin:
                raise BoundaryTargetError(
                    f"target {t[m]!r} of constraint {m} is within {margin} of the spectrum "
                    f"edge [{w[0]!r}, {w[-1]!r}]; the maximizer would need infinite multipliers",
                    residual=float(min(t[m] - w[0], w[-1] - t[m])),
                )
    return active


def _divided_exp(w):
    """L_ij = (e^{w_i} - e^{w_j}) / (w_i - w_j), with e^{w_i} on the diagonal."""
    d = w[:, None] - w[None, :]
    ej = np.exp(w)[None, :]
    small = np.abs(d) < 1e-300
    safe = np.where(small, 1.0, d)
    ratio = np.where(small, 1.0, np.expm1(safe) / safe)
    return ej * ratio


class _Dual:
    """Dual function pieces for a fixed stack of operators."""

    def __init__(self, ops, targets):
        # real symmetric constraints keep the whole solve in real arithmetic
        self.ops = ops.real.copy() if not np.any(ops.imag) else ops
        self.t = targets

    def value(self, lam):
        k = -np.tensordot(lam, self.ops, axes=1)
        w = np.linalg.eigvalsh((k + k.conj().T) / 2)
        return float(logsumexp(w)) + float(lam @ self.t)

    def full(self, lam):
        k = -np.tensordot(lam, self.ops, axes=1)
        w, v = np.linalg.eigh((k + k.conj().T) / 2)
        log_z = float(logsumexp(w))
        shift = w - w.max()
        p = np.exp(w - log_z)
        a = v.conj().T @ self.ops @ v
        means = np.real(np.einsum("mii,i->m", a, p))
        return w, v, log_z, p, a, means, shift


def solve_multipliers(constraints, tol=1e-10, max_iter=200, lambda0=None,
                      margin=FEASIBILITY_MARGIN):
    """Multipliers lam with Tr(A_m rho~) = target_m, rho~ = exp(-sum lam A)/Z.

    Raises ``BoundaryTargetError`` for targets on the spectrum edge of a
    single constraint, ``DegenerateConstraints`` for dependent operators and
    ``NonConvergence`` when Newton stalls (typically diverging multipliers
    for targets outside the jointly achievable set).
    """
    active = _screen(constraints, margin)
    n_all = len(constraints)
    ops = np.stack(constraints.operators)[active]
    t = constraints.targets[active]
    dual = _Dual(ops, t)
    lam = np.zeros(len(active)) if lambda0 is None else np.asarray(lambda0, float)[active].copy()

    iterations = 0
    while True:
        if len(active) == 0:
            w = np.zeros(constraints.dim)
            v = np.eye(constraints.dim)
            log_z = float(np.log(constraints.dim))
            p = np.full(constraints.dim, 1.0 / constraints.dim)
            residual = 0.0
            break
        w, v, log_z, p, a, means, shift = dual.full(lam)
        g = t - means
        residual = float(np.max(np.abs(g)))
        if residual <= tol:
            break
        if iterations >= max_iter:
            raise NonConvergence(
                f"Newton did not reach tol={tol} in {max_iter} iterations "
                f"(residual {residual:.3e}, |lambda| = {np.linalg.norm(lam):.3e})",
                residual=residual, iterations=iterations, multiplier_norm=float(np.linalg.norm(lam)),
            )
        iterations += 1
        # Kubo-Mori covariance via divided differences of exp in the eigenbasis
        lmat = _divided_exp(shift) * np.exp(w.max() - log_z)
        x = np.transpose(a, (0, 2, 1)).reshape(len(active), -1)
        y = (a * lmat).reshape(len(active), -1)
        hess = np.real(x @ y.T)
        hess = (hess + hess.T) / 2 - np.outer(means, means)
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular Kubo-Mori Hessian", residual=residual, iterations=iterations,
                                 multiplier_norm=float(np.linalg.norm(lam))) from None
        if not np.all(np.isfinite(step)):
            raise NonConvergence("non-finite Newton step", residual=residual, iterations=iterations,
                                 multiplier_norm=float(np.linalg.norm(lam)))
        f0 = log_z + lam @ t
        slope = g @ step
        s = 1.0
        # near the optimum the predicted decrease drops below the rounding
        # noise of the dual value; the full Newton step is then safe
        for _ in range(0 if -slope <= 1e-12 * max(1.0, abs(f0)) else 60):
            if dual.value(lam + s * step) <= f0 + 1e-4 * s * slope + 1e-15 * abs(f0):
                break
            s *= 0.5
        lam = lam + s * step

    rho = (v * p) @ v.conj().T
    rho = _frozen((rho + rho.conj().T) / 2)
    pp = p[p > 0]
    entropy = float(-np.sum(pp * np.log(pp)))
    multipliers = np.zeros(n_all)
    multipliers[active] = lam
    dual_entropy = log_z + float(multipliers @ constraints.targets)
    # identity-like constraints contribute lam * tr/d; their multipliers are 0 here
    gap = abs(entropy - dual_entropy)
    if gap > DUAL_CHECK_TOL * max(1.0, abs(entropy)):
        raise NumericalFailure(f"dual identity violated: S - (log Z + lam.t) = {gap:.3e}", residual=gap)
    multipliers.flags.writeable = False
    return MaxEntSolution(multipliers, constraints.targets, rho, entropy, log_z, residual, iterations, gap)


def maxent_state(operators, rho, **kwargs):
    """MaxEntSolution for the constraints <A_m> = Tr(A_m rho)."""
    return solve_multipliers(ConstraintSet.from_state(tuple(operators), rho), **kwargs)


def missing_information(operators, rho, dedupe=False, **kwargs):
    """S({A_m}, rho): the largest entropy compatible with the <A_m> of ``rho``.

    With ``dedupe=True`` the operator list is first reduced to an
    independent subset (the dropped constraints are implied by the rest).
    """
    operators = list(operators)
    if dedupe:
        operators = [operators[i] for i in reduce_constraints(operators)]
    if not operators:
        return float(np.log(np.asarray(rho).shape[0]))
    return maxent_state(operators, rho, **kwargs).entropy


# -- equilibrium and local equilibrium -----------------------------------------

def _exponent(h, beta, momenta=(), velocity=(), number=None, mu=0.0):
    k = np.array(h, dtype=complex)
    velocity = np.atleast_1d(np.asarray(velocity, dtype=float)) if len(momenta) else ()
    if len(momenta) != len(velocity):
        raise ContractViolation("need one velocity component per momentum operator")
    for u, p in zip(velocity, momenta):
        k = k - u * np.asarray(p)
    if number is not None:
        k = k - mu * np.asarray(number)
    return beta * k


def equilibrium_density(h, beta, momenta=(), velocity=(), number=None, mu=0.0):
    """Z^-1 exp[-beta (H - U.P - mu N)]."""
    ops = [as_hermitian(h)] + [as_hermitian(p) for p in momenta]
    if number is not None:
        ops.append(as_hermitian(number))
    if len({a.shape for a in ops}) != 1:
        raise ContractViolation("equilibrium operators must share one dimension")
    rho, _ = normalized_exp(_exponent(h, beta, momenta, velocity, number, mu))
    return rho


@dataclass(frozen=True, eq=False)
class Cell:
    """Quasiclassical operators of one cell: energy, momentum components, number.

    ``dim`` is the cell's own Hilbert-space dimension when the full space
    factorizes over cells; it only matters for entropy decompositions.
    """

    energy: np.ndarray
    momenta: tuple = ()
    number: np.ndarray = None
    dim: int = None

    def operators(self):
        out = [self.energy, *self.momenta]
        if self.number is not None:
            out.append(self.number)
        return out


@dataclass(frozen=True, eq=False)
class Fields:
    """Local inverse temperature, velocity and chemical potential per cell."""

    beta: np.ndarray
    velocity: np.ndarray
    mu: np.ndarray
    multipliers: np.ndarray = None

    @classmethod
    def uniform(cls, n_cells, beta, mu=0.0, n_momenta=0):
        return cls(np.full(n_cells, float(beta)), np.zeros((n_cells, n_momenta)), np.full(n_cells, float(mu)))


def _cell_exponent(cell, beta, velocity, mu):
    mu = 0.0 if cell.number is None else mu
    return _exponent(cell.energy, beta, cell.momenta, velocity, cell.number, mu)


def local_equilibrium_density(cells, fields):
    """Z^-1 exp[-sum_y beta(y) (eps_y - u(y).pi_y - mu(y) nu_y)]."""
    cells = list(cells)
    dims = {np.asarray(c.energy).shape for c in cells}
    if len(dims) != 1:
        raise ContractViolation("cell operators must share one dimension")
    k = sum(_cell_exponent(c, fields.beta[y], fields.velocity[y], fields.mu[y]) for y, c in enumerate(cells))
    rho, _ = normalized_exp(k)
    return rho


class LocalEquilibriumFit(NamedTuple):
    fields: Fields
    rho: np.ndarray
    solution: MaxEntSolution


def fit_local_equilibrium(cells, rho, tol=1e-10, max_iter=200, lambda0=None):
    """Fields beta(y), u(y), mu(y) whose local-equilibrium state reproduces every cell expectation.

    Multipliers are ordered cell by cell as (energy, momenta..., number) and
    map to fields by lam_eps = beta, lam_pi = -beta u, lam_nu = -beta mu.
    Where beta(y) vanishes u and mu are left as NaN.
    """
    cells = list(cells)
    ops, slices = [], []
    for c in cells:
        start = len(ops)
        ops.extend(c.operators())
        slices.append((start, len(ops)))
    sol = solve_multipliers(ConstraintSet.from_state(ops, rho), tol=tol, max_iter=max_iter, lambda0=lambda0)
    n_mom = max((len(c.momenta) for c in cells), default=0)
    beta = np.zeros(len(cells))
    velocity = np.full((len(cells), n_mom), np.nan)
    mu = np.full(len(cells), np.nan)
    for y, (c, (start, stop)) in enumerate(zip(cells, slices)):
        lam = sol.multipliers[start:stop]
        beta[y] = lam[0]
        if abs(beta[y]) > 1e-12:
            velocity[y, : len(c.momenta)] = -lam[1 : 1 + len(c.momenta)] / beta[y]
            if c.number is not None:
                mu[y] = -lam[-1] / beta[y]
    return LocalEquilibriumFit(Fields(beta, velocity, mu, sol.multipliers), sol.rho_tilde, sol)


class ThermoCheck(NamedTuple):
    entropy: float
    free_energy: float
    gap: float


def thermo_relation_check(h, beta, velocity=(), mu=0.0, momenta=(), number=None):
    """Compare S(rho_eq) with beta(<H> - F), F defined through the partition function.

    F solves Tr exp[-beta(H - U.P - mu N)] = exp[-beta(F - U.<P> - mu <N>)].
    At beta = 0 the relation degenerates: F and the gap are NaN.
    """
    h = as_hermitian(h)
    k = _exponent(h, beta, momenta, velocity, number, mu)
    rho, log_z = normalized_exp(k)
    s = von_neumann_entropy(rho)
    if beta == 0:
        return ThermoCheck(s, float("nan"), float("nan"))
    f = -log_z / beta
    velocity = np.atleast_1d(np.asarray(velocity, dtype=float)) if len(momenta) else ()
    for u, p in zip(velocity, momenta):
        f += u * expectation(p, rho)
    if number is not None:
        f += mu * expectation(number, rho)
    gap = abs(s - beta * (expectation(h, rho) - f))
    return ThermoCheck(s, f, gap)


class EntropyDecomposition(NamedTuple):
    contributions: np.ndarray
    total: float
    residual: float  # S(rho_leq) - sum(contributions)


def entropy_density_decomposition(cells, fields, rho_leq):
    """Per-cell terms beta(y) [<eps_y> - <phi_y>] of the local-equilibrium entropy.

    The cell free energy phi_y is defined like F but from the cell's own
    exponent K_y: log Z_y = log Tr exp(-K_y) - log d + log d_y, so that the
    log Z_y add up to log Z whenever the K_y act on separate tensor factors.
    Without cell dimensions, log d is split evenly.  The terms are exact
    when the cell exponents commute and act on disjoint factors; otherwise
    the mismatch is returned as ``residual``.
    """
    cells = list(cells)
    d = np.asarray(rho_leq).shape[0]
    if all(c.dim is not None for c in cells):
        log_cell = [np.log(c.dim) for c in cells]
    else:
        log_cell = [np.log(d) / len(cells)] * len(cells)
    out = np.zeros(len(cells))
    for y, c in enumerate(cells):
        b, u, m = fields.beta[y], fields.velocity[y], fields.mu[y]
        k = _cell_exponent(c, b, u, m)
        w = np.linalg.eigvalsh(as_hermitian(k))
        log_zy = float(logsumexp(-w)) - np.log(d) + log_cell[y]
        # log Z_y + beta (<eps> - u.<pi> - mu <nu>) = beta (<eps> - <phi>)
        out[y] = log_zy + expectation(k, rho_leq)
    total = von_neumann_entropy(rho_leq)
    return EntropyDecomposition(out, total, total - float(out.sum()))
