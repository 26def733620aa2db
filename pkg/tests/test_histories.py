import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from realms.errors import ContractViolation, UnsupportedGraining
from realms.histories import (
    BranchNode,
    CoarseGrainingMap,
    HistorySet,
    branch_state,
    branch_states,
    class_operator,
    coarse_class_operators,
    coarse_grain,
    coarse_path_of,
    fine_grained_set,
    narrative_set,
)
from realms.hilbert import ProjectorSet, basis_with_state, haar_unitary, random_hermitian, random_state

seeds = st.integers(0, 2 ** 32 - 1)


def random_set(rng, dim, n_times, max_alts=3):
    """Chain of random projector sets with 2..max_alts members each."""
    sets = []
    for _ in range(n_times):
        u = haar_unitary(dim, rng)
        k = int(rng.integers(2, min(max_alts, dim) + 1))
        cuts = np.sort(rng.choice(np.arange(1, dim), size=k - 1, replace=False))
        edges = np.concatenate([[0], cuts, [dim]])
        members = tuple(u[:, a:b] @ u[:, a:b].conj().T for a, b in zip(edges, edges[1:]))
        sets.append(ProjectorSet(members))
    return HistorySet.chain(tuple(float(t) for t in range(n_times)), sets)


def branching_set(rng, dim):
    """Two times where the second-time set depends on the first alternative."""
    first = ProjectorSet.from_basis(haar_unitary(dim, rng)[:, :dim], labels=tuple(range(dim)))
    first = ProjectorSet((first.members[0], sum(first.members[1:])), ("a", "b"))
    kids = {
        "a": BranchNode(ProjectorSet.from_basis(haar_unitary(dim, rng))),
        "b": BranchNode(ProjectorSet.yes_no(random_state(dim, rng))),
    }
    return HistorySet((0.0, 1.0), BranchNode(first, kids))


def test_times_must_increase():
    s = ProjectorSet.from_basis(np.eye(2))
    with pytest.raises(ContractViolation):
        HistorySet.chain((1.0, 1.0), [s, s])


def test_single_time_class_operators_are_projectors(rng):
    s = ProjectorSet.from_basis(haar_unitary(3, rng))
    hset = HistorySet.chain((0.0,), [s])
    for label, p in s:
        assert np.allclose(class_operator(hset, (label,)), p)


def test_repeated_projections_vanish_off_diagonal(rng):
    q = ProjectorSet.from_basis(haar_unitary(3, rng))
    hset = HistorySet.chain((0.0, 1.0, 2.0), [q, q, q])
    for path, c in hset.class_operators().items():
        if len(set(path)) == 1:
            assert np.allclose(c, q[path[0]])
        else:
            assert np.max(np.abs(c)) <= 1e-12


def test_two_time_qubit_norms():
    hset = fine_grained_set([("computational", 2), ("fourier", 2)], (0.0, 1.0))
    for c in hset.class_operators().values():
        assert np.isclose(np.linalg.norm(c, 2), 1 / np.sqrt(2))


def test_unknown_path():
    hset = fine_grained_set([("computational", 2)], (0.0,))
    with pytest.raises(ContractViolation):
        class_operator(hset, (5,))
    with pytest.raises(ContractViolation):
        class_operator(hset, (0, 0))


@given(seeds, st.integers(2, 32), st.integers(1, 3))
def test_class_operators_sum_to_identity(seed, dim, n_times):
    rng = np.random.default_rng(seed)
    hset = random_set(rng, dim, n_times)
    total = sum(hset.class_operators().values())
    assert np.max(np.abs(total - np.eye(dim))) <= 1e-9


@given(seeds, st.integers(2, 6))
def test_branch_dependent_set_is_exhaustive(seed, dim):
    rng = np.random.default_rng(seed)
    hset = branching_set(rng, dim)
    assert len(hset.paths()) == dim + 2
    psi = random_state(dim, rng)
    total = sum(branch_state(hset, p, psi) for p in hset.paths())
    assert np.allclose(total, psi, atol=1e-9)


def test_branch_examples(rng):
    psi = random_state(3, rng)
    hset = fine_grained_set([np.eye(3)], (0.0,))
    for i in range(3):
        expected = np.zeros(3, dtype=complex)
        expected[i] = psi[i]
        assert np.allclose(branch_state(hset, (i,), psi), expected)
    # first projector orthogonal to psi
    e0 = np.array([1.0, 0, 0])
    zero_hist = fine_grained_set([np.eye(3), haar_unitary(3, rng)], (0.0, 1.0))
    assert np.allclose(branch_state(zero_hist, (1, 0), e0), 0)


def test_state_question_branches(rng):
    psi = random_state(3, rng)
    b = basis_with_state(psi, rng)
    final = haar_unitary(3, rng)
    hset = fine_grained_set([b, b, final], (0.0, 1.0, 2.0))
    branches, pruned = branch_states(hset, psi)
    assert set(branches) == {(0, 0, i) for i in range(3)}
    for i in range(3):
        v = final[:, i]
        assert np.allclose(branches[(0, 0, i)], v * np.vdot(v, psi))
    assert len(pruned) == 27 - 3


@given(seeds, st.integers(2, 5))
def test_pruning_is_sound(seed, dim):
    rng = np.random.default_rng(seed)
    b = haar_unitary(dim, rng)
    hset = fine_grained_set([b, b, haar_unitary(dim, rng)], (0.0, 1.0, 2.0))
    psi = random_state(dim, rng)
    kept, pruned = branch_states(hset, psi)
    for p in pruned:
        assert np.linalg.norm(branch_state(hset, p, psi)) <= 1e-12
    for p, v in kept.items():
        assert np.array_equal(v, branch_state(hset, p, psi)) or np.allclose(v, branch_state(hset, p, psi), atol=1e-15)


def test_fine_grained_counts_and_probabilities(rng):
    psi = random_state(2, rng)
    hset = fine_grained_set([("computational", 2)], (0.0,))
    assert len(hset.paths()) == 2
    kept, _ = branch_states(hset, psi)
    assert np.allclose([np.linalg.norm(kept[(i,)]) ** 2 for i in range(2)], np.abs(psi) ** 2)
    mub = fine_grained_set([("computational", 2), ("fourier", 2)], (0.0, 1.0))
    kept, pruned = branch_states(mub, psi)
    assert not pruned and len(kept) == 4
    for (i, _), v in kept.items():
        assert np.isclose(np.linalg.norm(v) ** 2, abs(psi[i]) ** 2 / 2)


def test_fine_grained_rejects_non_orthonormal_basis():
    with pytest.raises(ContractViolation):
        fine_grained_set([np.array([[1, 1], [0, 1]])], (0.0,))


def test_narrative_examples(rng):
    q = ProjectorSet.from_basis(haar_unitary(3, rng))
    hset = narrative_set(q, np.zeros((3, 3)), (0.0, 1.0, 2.0))
    for node in hset.nodes_along((0, 0, 0)):
        assert all(np.allclose(a, b) for a, b in zip(node.projectors.members, q.members))
    # qubit flip
    omega = 0.8
    sx = np.array([[0, 1], [1, 0]])
    z = ProjectorSet.from_basis(np.eye(2))
    flip = narrative_set(z, omega / 2 * sx, (0.0, np.pi / omega))
    late = flip.root.children[0].projectors
    assert np.allclose(late[0], np.diag([0, 1])) and np.allclose(late[1], np.diag([1, 0]))


def test_narrative_commuting_hamiltonian_is_static(rng):
    u = haar_unitary(4, rng)
    q = ProjectorSet((u[:, :2] @ u[:, :2].conj().T, u[:, 2:] @ u[:, 2:].conj().T))
    h = u @ np.diag([1.0, 1.0, -2.0, -2.0]) @ u.conj().T
    hset = narrative_set(q, h, (0.0, 0.7, 3.1))
    for node in hset.nodes_along((0, 0, 0)):
        assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(node.projectors.members, q.members))


# -- coarse graining ------------------------------------------------------------------

def test_trivial_partition_reproduces_set(rng):
    hset = random_set(rng, 4, 2)
    cmap = CoarseGrainingMap({p: {p} for p in hset.paths()})
    coarse = coarse_grain(hset, cmap)
    fine_ops = hset.class_operators()
    ops = coarse.class_operators()
    for key, path in coarse_path_of(coarse).items():
        assert np.allclose(ops[path], fine_ops[key])


def test_total_partition_gives_identity(rng):
    hset = random_set(rng, 4, 3)
    coarse = coarse_grain(hset, CoarseGrainingMap({"all": set(hset.paths())}))
    (c,) = coarse.class_operators().values()
    assert np.allclose(c, np.eye(4))


def test_merge_adjacent_cells():
    hset = HistorySet.chain((0.0,), [ProjectorSet.from_basis(np.eye(4))])
    cmap = CoarseGrainingMap({"left": {(0,), (1,)}, "right": {(2,), (3,)}})
    coarse = coarse_grain(hset, cmap)
    p_left = coarse.root.projectors["left"]
    assert np.allclose(p_left, np.diag([1, 1, 0, 0]))
    assert np.allclose(p_left @ p_left, p_left)


def test_partition_by_final_alternative(rng):
    hset = random_set(rng, 4, 3)
    coarse = coarse_grain(hset, CoarseGrainingMap.from_function(hset, lambda p: p[-1]))
    expected = coarse_class_operators(hset, CoarseGrainingMap.from_function(hset, lambda p: p[-1]))
    ops = coarse.class_operators()
    for key, path in coarse_path_of(coarse).items():
        assert np.allclose(ops[path], expected[key], atol=1e-10)


def test_non_chain_partition_is_rejected_with_sums(rng):
    hset = fine_grained_set([np.eye(2), haar_unitary(2, rng)], (0.0, 1.0))
    cmap = CoarseGrainingMap({"x": {(0, 0), (1, 1)}, "y": {(0, 1), (1, 0)}})
    with pytest.raises(UnsupportedGraining) as info:
        coarse_grain(hset, cmap)
    ops = hset.class_operators()
    assert np.allclose(info.value.class_operators["x"], ops[(0, 0)] + ops[(1, 1)])


def test_partition_must_be_exhaustive_and_exclusive(rng):
    hset = random_set(rng, 3, 2)
    paths = hset.paths()
    with pytest.raises(ContractViolation):
        CoarseGrainingMap({"a": {paths[0]}, "b": {paths[0], paths[1]}})
    with pytest.raises(ContractViolation):
        coarse_grain(hset, CoarseGrainingMap({"a": {paths[0]}}))


@st.composite
def product_partitions(draw):
    """Seed, dim, times, and per-time groupings of alternatives."""
    seed = draw(seeds)
    dim = draw(st.integers(3, 5))
    n_times = draw(st.integers(1, 3))
    groupings = [draw(st.lists(st.integers(0, 1), min_size=dim, max_size=dim)) for _ in range(n_times)]
    return seed, dim, n_times, groupings


@given(product_partitions())
def test_product_partitions_realize_sums(args):
    seed, dim, n_times, groupings = args
    rng = np.random.default_rng(seed)
    hset = fine_grained_set([haar_unitary(dim, rng) for _ in range(n_times)], tuple(map(float, range(n_times))))
    cmap = CoarseGrainingMap.from_function(hset, lambda p: tuple(g[a] for g, a in zip(groupings, p)))
    coarse = coarse_grain(hset, cmap)
    sums = coarse_class_operators(hset, cmap)
    ops = coarse.class_operators()
    for key, path in coarse_path_of(coarse).items():
        assert np.max(np.abs(ops[path] - sums[key])) <= 1e-10
    for path in coarse.paths():
        for node in coarse.nodes_along(path):
            ProjectorSet(node.projectors.members)  # validates exhaustive and exclusive


@given(seeds, st.integers(2, 3), st.integers(2, 3), st.integers(2, 4))
def test_random_partitions_sum_or_reject(seed, dim, n_times, n_classes):
    rng = np.random.default_rng(seed)
    hset = fine_grained_set([haar_unitary(dim, rng) for _ in range(n_times)], tuple(map(float, range(n_times))))
    paths = hset.paths()
    assign = rng.integers(0, n_classes, len(paths))
    cmap = CoarseGrainingMap.from_function(hset, lambda p: int(assign[paths.index(p)]))
    sums = coarse_class_operators(hset, cmap)
    try:
        coarse = coarse_grain(hset, cmap)
    except UnsupportedGraining as exc:
        for key in sums:
            assert np.allclose(exc.class_operators[key], sums[key])
        return
    ops = coarse.class_operators()
    for key, path in coarse_path_of(coarse).items():
        assert np.max(np.abs(ops[path] - sums[key])) <= 1e-10
