"""Independent reference computations used to pin expected values."""
import numpy as np
from scipy.linalg import expm

from realms.hilbert import random_density, random_hermitian


def gibbs(h, beta):
    """exp(-beta H)/Z by direct matrix exponentiation."""
    e = expm(-beta * np.asarray(h))
    return e / np.trace(e).real


def qubit_expectations(l1, l2, a, b):
    rho = expm(-(l1 * a + l2 * b))
    rho = rho / np.trace(rho).real
    return np.trace(a @ rho).real, np.trace(b @ rho).real, rho


def _bisect(f, lo, hi, iters=200):
    """Root of a decreasing function on [lo, hi]."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def two_constraint_grid_oracle(a, b, t1, t2, span=3.0, resolution=1e-3):
    """Max-ent state for two 2x2 constraints without any Newton machinery.

    A coarse grid locates the dual minimum, a 1e-3 grid around it refines
    it, and nested bisection (each expectation is monotone decreasing in
    its own multiplier) solves the moment equations to full precision.
    """
    def dual(l1, l2):
        w = np.linalg.eigvalsh(-(l1 * a + l2 * b))
        return np.log(np.exp(w).sum()) + l1 * t1 + l2 * t2

    coarse = np.arange(-span, span + 1e-12, 0.05)
    vals = np.array([[dual(x, y) for y in coarse] for x in coarse])
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    fine = np.arange(-0.06, 0.06 + 1e-12, resolution)
    best, l1, l2 = np.inf, 0.0, 0.0
    for dx in fine:
        for dy in fine[:: 10]:
            v = dual(coarse[i] + dx, coarse[j] + dy)
            if v < best:
                best, l1, l2 = v, coarse[i] + dx, coarse[j] + dy

    def solve_l1(l2_):
        return _bisect(lambda x: qubit_expectations(x, l2_, a, b)[0] - t1, l1 - 2, l1 + 2)

    l2 = _bisect(lambda y: qubit_expectations(solve_l1(y), y, a, b)[1] - t2, l2 - 2, l2 + 2, iters=80)
    l1 = solve_l1(l2)
    return np.array([l1, l2]), qubit_expectations(l1, l2, a, b)[2]


def nested_constraints(rng, dim, n_fine=None, n_coarse=None):
    """Fine operators, coarse operators that are linear combinations of them, and a state."""
    n_fine = n_fine or int(rng.integers(2, min(6, dim * dim - 1) + 1))
    n_coarse = n_coarse or int(rng.integers(1, n_fine))
    fine = [random_hermitian(dim, rng) for _ in range(n_fine)]
    mix = rng.standard_normal((n_coarse, n_fine))
    coarse = [sum(m * f for m, f in zip(row, fine)) for row in mix]
    return fine, coarse, random_density(dim, rng)


def environment_defect_dense(system_dim, n_env, theta):
    """Normalized branch-overlap defect of the environment model from a dense U.

    Branches are U^H (Pi_b (x) I) U (P_a (x) I) psi, built by matrix-vector
    products with the full controlled-rotation unitary.
    """
    from realms.hilbert import named_basis
    from realms.models import controlled_rotation

    env = 2 ** n_env
    u = controlled_rotation(system_dim, n_env, theta)
    comp = named_basis("computational", system_dim)
    four = named_basis("fourier", system_dim)
    psi = np.kron(np.ones(system_dim) / np.sqrt(system_dim), np.eye(env)[0])
    branches = []
    for a in range(system_dim):
        v = np.kron(np.outer(comp[:, a], comp[:, a].conj()), np.eye(env)) @ psi
        v = u @ v
        for b in range(system_dim):
            pb = np.kron(np.outer(four[:, b], four[:, b].conj()), np.eye(env))
            branches.append(u.conj().T @ (pb @ v))
    norms = [np.linalg.norm(x) for x in branches]
    worst = 0.0
    for i, x in enumerate(branches):
        for j, y in enumerate(branches):
            if i != j and norms[i] > 1e-12 and norms[j] > 1e-12:
                worst = max(worst, abs(np.vdot(y, x)) / (norms[i] * norms[j]))
    return worst
