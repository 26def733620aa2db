import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from oracles import gibbs, nested_constraints, two_constraint_grid_oracle
from realms.errors import BoundaryTargetError, ContractViolation, DegenerateConstraints, NonConvergence
from realms.hilbert import ProjectorSet, expectation, haar_unitary, random_density, random_hermitian, von_neumann_entropy
from realms.maxent import (
    Cell,
    ConstraintSet,
    Fields,
    entropy_density_decomposition,
    equilibrium_density,
    fit_local_equilibrium,
    local_equilibrium_density,
    maxent_state,
    missing_information,
    reduce_constraints,
    solve_multipliers,
    thermo_relation_check,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
seeds = st.integers(0, 2 ** 32 - 1)


def check_solution(sol, cons, tol=1e-10):
    rho = sol.rho_tilde
    assert abs(np.trace(rho).real - 1) <= 1e-10
    for a, t in zip(cons.operators, cons.targets):
        assert abs(expectation(a, rho) - t) <= tol
    assert abs(sol.entropy - (sol.log_z + sol.multipliers @ cons.targets)) <= 1e-8


def test_symmetric_target():
    cons = ConstraintSet((SZ,), [0.0])
    sol = solve_multipliers(cons)
    assert sol.multipliers[0] == pytest.approx(0, abs=1e-12)
    assert np.allclose(sol.rho_tilde, np.eye(2) / 2)
    assert sol.entropy == pytest.approx(np.log(2))


def test_scalar_tanh_inversion():
    # <sigma_z> = -tanh(lambda) for rho ~ exp(-lambda sigma_z)
    target = -np.tanh(1.0)
    cons = ConstraintSet((SZ,), [target])
    sol = solve_multipliers(cons)
    assert sol.multipliers[0] == pytest.approx(np.arctanh(-target), abs=1e-10)
    check_solution(sol, cons)


@given(seeds)
def test_gibbs_round_trip(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(4, rng)
    rho = gibbs(h, 1.0)
    sol = solve_multipliers(ConstraintSet((h,), [np.trace(h @ rho).real]))
    assert abs(sol.multipliers[0] - 1) <= 1e-8
    assert np.max(np.abs(sol.rho_tilde - rho)) <= 1e-9


def test_noncommuting_pair_matches_grid_oracle():
    lam, rho = two_constraint_grid_oracle(SZ, SX, 0.3, 0.2)
    sol = solve_multipliers(ConstraintSet((SZ, SX), [0.3, 0.2]))
    assert sol.residual <= 1e-8
    assert np.max(np.abs(sol.rho_tilde - rho)) <= 1e-6
    assert np.allclose(sol.multipliers, lam, atol=1e-6)
    # for a qubit the answer is also known in closed form
    assert np.allclose(sol.rho_tilde, (np.eye(2) + 0.3 * SZ + 0.2 * SX) / 2, atol=1e-10)


@given(seeds, st.integers(2, 8), st.integers(1, 4))
def test_dual_identity_and_residual(seed, dim, m):
    rng = np.random.default_rng(seed)
    ops = [random_hermitian(dim, rng) for _ in range(min(m, dim * dim - 1))]
    cons = ConstraintSet.from_state(ops, random_density(dim, rng))
    sol = solve_multipliers(cons)
    check_solution(sol, cons)


def test_boundary_target_is_rejected():
    with pytest.raises(BoundaryTargetError):
        solve_multipliers(ConstraintSet((SZ,), [1.0]))
    with pytest.raises(BoundaryTargetError):
        solve_multipliers(ConstraintSet((SZ,), [-1.0 + 1e-8]))


def test_jointly_infeasible_targets_do_not_converge():
    with pytest.raises(NonConvergence) as info:
        solve_multipliers(ConstraintSet((SZ, SX), [0.9, 0.9]), max_iter=50)
    assert info.value.multiplier_norm > 5


def test_degenerate_constraints(rng):
    h = random_hermitian(3, rng)
    with pytest.raises(DegenerateConstraints):
        solve_multipliers(ConstraintSet((h, 2 * h + np.eye(3)), [0.1, 0.2 + 1]))
    with pytest.raises(ContractViolation):
        ConstraintSet((h,), [np.nan])


def test_identity_constraint_only_fixes_normalization():
    cons = ConstraintSet((np.eye(3),), [1.0])
    sol = solve_multipliers(cons)
    assert sol.entropy == pytest.approx(np.log(3))
    with pytest.raises(BoundaryTargetError):
        solve_multipliers(ConstraintSet((np.eye(3),), [0.5]))


def test_missing_information_examples(rng):
    rho = random_density(4, rng)
    w, v = np.linalg.eigh(rho)
    projectors = [np.outer(v[:, k], v[:, k].conj()) for k in range(4)]
    assert missing_information(projectors, rho, dedupe=True) == pytest.approx(von_neumann_entropy(rho), abs=1e-9)
    assert missing_information([np.eye(4)], rho) == pytest.approx(np.log(4))
    assert missing_information([], rho) == pytest.approx(np.log(4))


def test_reduce_constraints_drops_dependent_operators(rng):
    s = ProjectorSet.from_basis(haar_unitary(3, rng))
    keep = reduce_constraints(list(s.members))
    assert len(keep) == 2


def test_nested_sets_on_six_dims(rng):
    fine, coarse, rho = nested_constraints(rng, 6, 4, 2)
    s_fine = missing_information(fine, rho)
    s_coarse = missing_information(coarse, rho)
    assert s_coarse >= s_fine - 1e-9
    assert s_fine >= von_neumann_entropy(rho) - 1e-9


@given(seeds, st.integers(2, 8), st.floats(0.05, 5))
def test_gibbs_fixed_point(seed, dim, beta):
    rng = np.random.default_rng(seed)
    h = random_hermitian(dim, rng)
    rho = equilibrium_density(h, beta)
    w = np.linalg.eigvalsh(h)
    # energies within the feasibility margin of the ground state count as a boundary
    assume(expectation(h, rho) - w[0] > 1e-5)
    assert missing_information([h], rho) == pytest.approx(von_neumann_entropy(rho), abs=1e-8)


def test_warm_start_reaches_same_answer(rng):
    h = random_hermitian(5, rng)
    rho = gibbs(h, 0.7)
    cons = ConstraintSet((h,), [np.trace(h @ rho).real])
    cold = solve_multipliers(cons)
    warm = solve_multipliers(cons, lambda0=[0.69])
    assert warm.iterations <= cold.iterations
    assert warm.multipliers[0] == pytest.approx(0.7, abs=1e-9)


def test_solution_json():
    sol = solve_multipliers(ConstraintSet((SZ,), [0.0]))
    doc = json.loads(json.dumps(sol.to_json()))
    assert set(doc) >= {"multipliers", "targets", "residual", "entropy", "log_z", "iterations"}


# -- equilibrium -------------------------------------------------------------------

def test_equilibrium_examples():
    assert np.allclose(equilibrium_density(np.diag([0.0, 3.0]), 0.0), np.eye(2) / 2)
    expected = np.diag([1, np.exp(-1)]) / (1 + np.exp(-1))
    assert np.allclose(equilibrium_density(np.diag([0.0, 1.0]), 1.0), expected)


def test_chemical_potential_block_weights():
    # H and N diagonal in the same basis
    e = np.array([0.0, 1.0, 1.5, 2.0])
    n = np.array([0, 1, 1, 2])
    rho = equilibrium_density(np.diag(e), 2.0, number=np.diag(n), mu=0.8)
    w = np.exp(-2.0 * (e - 0.8 * n))
    assert np.allclose(np.diag(rho).real, w / w.sum())


def test_local_equilibrium_reduces_to_global(rng):
    from realms.models import CellPartition, SpinChainModel

    model = SpinChainModel(4, interaction=0.4)
    part = CellPartition(model, 2)
    cells = part.cells()
    rho_l = local_equilibrium_density(cells, Fields.uniform(2, 0.6, mu=0.3))
    rho_g = equilibrium_density(model.hamiltonian, 0.6, number=model.number, mu=0.3)
    assert np.allclose(rho_l, rho_g, atol=1e-12)
    one = [Cell(model.hamiltonian, (), model.number)]
    assert np.allclose(local_equilibrium_density(one, Fields.uniform(1, 0.6, mu=0.3)), rho_g, atol=1e-12)


def _two_cells(rng):
    """Non-interacting cells on separate qubit pairs: commuting cell energies."""
    h1 = random_hermitian(4, rng)
    h2 = random_hermitian(4, rng)
    e1 = np.kron(h1, np.eye(4))
    e2 = np.kron(np.eye(4), h2)
    return h1, h2, [Cell(e1, dim=4), Cell(e2, dim=4)]


def test_colder_cell_has_lower_energy(rng):
    h = np.diag([0.0, 1.0, 1.0, 2.0])
    cells = [Cell(np.kron(h, np.eye(4)), dim=4), Cell(np.kron(np.eye(4), h), dim=4)]
    rho = local_equilibrium_density(cells, Fields(np.array([0.5, 2.0]), np.zeros((2, 0)), np.zeros(2)))
    assert expectation(cells[0].energy, rho) > expectation(cells[1].energy, rho)


def test_fit_round_trip(rng):
    from realms.models import CellPartition, SpinChainModel

    part = CellPartition(SpinChainModel(6, interaction=0.3), 2)
    cells = part.cells()
    fields = Fields(np.array([0.4, 0.9, 1.3]), np.zeros((3, 0)), np.array([0.2, -0.1, 0.5]))
    rho = local_equilibrium_density(cells, fields)
    fit = fit_local_equilibrium(cells, rho)
    assert np.allclose(fit.fields.beta, fields.beta, atol=1e-6)
    assert np.allclose(fit.fields.mu, fields.mu, atol=1e-6)
    assert np.max(np.abs(fit.rho - rho)) <= 1e-8


def test_fit_infinite_temperature(rng):
    h1, h2, cells = _two_cells(rng)
    fit = fit_local_equilibrium(cells, np.eye(16) / 16)
    assert np.allclose(fit.fields.beta, 0, atol=1e-12)
    assert np.allclose(fit.fields.multipliers, 0, atol=1e-12)


def test_fit_eigenstate_is_a_boundary():
    h = np.diag([0.0, 1.0, 1.0, 2.0])
    cells = [Cell(np.kron(h, np.eye(4)), dim=4), Cell(np.kron(np.eye(4), h), dim=4)]
    rho = np.zeros((16, 16))
    rho[0, 0] = 1
    with pytest.raises(BoundaryTargetError):
        fit_local_equilibrium(cells, rho)


# -- thermodynamics -----------------------------------------------------------------

def test_two_level_free_energy():
    delta, beta = 1.3, 0.7
    t = thermo_relation_check(np.diag([0.0, delta]), beta)
    assert t.free_energy == pytest.approx(-np.log1p(np.exp(-beta * delta)) / beta, abs=1e-12)
    assert t.gap <= 1e-10


def test_low_temperature_limit(rng):
    u = haar_unitary(6, rng)
    e = np.array([0.0, 1.0, 1.5, 2.0, 2.5, 3.0]) - 0.4
    h = u @ np.diag(e) @ u.conj().T
    t = thermo_relation_check(h, 50.0)
    assert t.entropy < 1e-12
    assert abs(t.free_energy - e[0]) <= 1e-12
    assert t.gap <= 1e-8


def test_moving_frame_with_conserved_momentum():
    h = np.diag([0.0, 1.0, 1.0, 2.0])
    p = np.diag([0.0, 1.0, -1.0, 0.0])
    t = thermo_relation_check(h, 1.2, velocity=[0.4], momenta=[p])
    rho = equilibrium_density(h, 1.2, momenta=[p], velocity=[0.4])
    assert abs(expectation(p, rho)) > 0.05
    assert t.gap <= 1e-10


def test_zero_beta_is_degenerate():
    t = thermo_relation_check(np.diag([0.0, 1.0]), 0.0)
    assert np.isnan(t.free_energy) and np.isnan(t.gap)
    assert t.entropy == pytest.approx(np.log(2))


# -- entropy decomposition -----------------------------------------------------------

def test_decomposition_single_cell(rng):
    h = random_hermitian(4, rng)
    cells = [Cell(h, dim=4)]
    fields = Fields.uniform(1, 0.8)
    rho = local_equilibrium_density(cells, fields)
    dec = entropy_density_decomposition(cells, fields, rho)
    assert dec.contributions[0] == pytest.approx(thermo_relation_check(h, 0.8).entropy, abs=1e-10)


def test_decomposition_separate_cells(rng):
    h1, h2, cells = _two_cells(rng)
    fields = Fields(np.array([0.5, 1.5]), np.zeros((2, 0)), np.zeros(2))
    rho = local_equilibrium_density(cells, fields)
    dec = entropy_density_decomposition(cells, fields, rho)
    expected = [von_neumann_entropy(gibbs(h1, 0.5)), von_neumann_entropy(gibbs(h2, 1.5))]
    assert np.allclose(dec.contributions, expected, atol=1e-10)
    assert abs(dec.residual) <= 1e-6


def test_decomposition_infinite_temperature(rng):
    h1, h2, cells = _two_cells(rng)
    fields = Fields.uniform(2, 0.0)
    rho = local_equilibrium_density(cells, fields)
    dec = entropy_density_decomposition(cells, fields, rho)
    assert np.allclose(dec.contributions, [np.log(4)] * 2)


def test_decomposition_reports_noncommuting_residual():
    from realms.models import CellPartition, SpinChainModel

    part = CellPartition(SpinChainModel(4), 2)
    fields = Fields.uniform(2, 1.0)
    rho = local_equilibrium_density(part.cells(with_number=False), fields)
    dec = entropy_density_decomposition(part.cells(with_number=False), fields, rho)
    assert dec.total == pytest.approx(von_neumann_entropy(rho))
    assert dec.residual == pytest.approx(dec.total - dec.contributions.sum())
