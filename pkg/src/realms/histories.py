"""Sets of alternative histories and their class operators.

A history set is a tree.  Each node carries the (Heisenberg-picture)
projector set used at its time and one child per alternative; the leaf
paths are the histories.  Branch-independent sets simply point every
alternative at the same child node, so a chain of n sets costs O(n)
memory no matter how many histories it describes.
"""
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from realms.errors import ContractViolation, UnsupportedGraining
from realms.hilbert import (
    ProjectorSet,
    _frozen,
    as_hermitian,
    as_state,
    evolution_operator,
    named_basis,
)

PRUNE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BranchNode:
    projectors: ProjectorSet
    children: Mapping = None  # label -> BranchNode; None at the final time

    def child(self, label):
        if self.children is None:
            raise ContractViolation("final-time node has no children")
        return self.children[label]


def chain_node(sets):
    """Branch-independent tree from one ProjectorSet per time."""
    node = None
    for pset in reversed(list(sets)):
        children = None if node is None else {label: node for label in pset.labels}
        node = BranchNode(pset, children)
    return node


@dataclass(frozen=True, eq=False)
class HistorySet:
    times: tuple
    root: BranchNode

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ContractViolation("a history set needs at least one time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ContractViolation(f"times must be strictly increasing, got {times}")
        object.__setattr__(self, "times", times)
        dim = self.root.projectors.dim
        seen = {}
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            if id(node) in seen:
                if seen[id(node)] != depth:
                    raise ContractViolation("a shared node appears at two different times")
                continue
            seen[id(node)] = depth
            if node.projectors.dim != dim:
                raise ContractViolation("all projector sets must act on the same space")
            last = depth == len(times) - 1
            if last:
                if node.children is not None:
                    raise ContractViolation("history tree is deeper than the number of times")
                continue
            if node.children is None:
                raise ContractViolation("history tree ends before the final time")
            if set(node.children) != set(node.projectors.labels):
                raise ContractViolation("each alternative needs exactly one child node")
            for label in node.projectors.labels:
                stack.append((node.children[label], depth + 1))

    @classmethod
    def chain(cls, times, sets):
        sets = list(sets)
        if len(sets) != len(times):
            raise ContractViolation("need one projector set per time")
        return cls(tuple(times), chain_node(sets))

    @property
    def dim(self):
        return self.root.projectors.dim

    @property
    def n_times(self):
        return len(self.times)

    def node(self, prefix):
        node = self.root
        for label in prefix:
            node = node.child(label)
        return node

    def nodes_along(self, path):
        """The node visited at each time along ``path``."""
        out, node = [], self.root
        for k, label in enumerate(path):
            out.append(node)
            if k < len(path) - 1:
                node = node.child(label)
        return out

    def paths(self):
        """All leaf paths in depth-first order."""
        out = []

        def walk(node, prefix):
            for label in node.projectors.labels:
                path = prefix + (label,)
                if node.children is None:
                    out.append(path)
                else:
                    walk(node.children[label], path)

        walk(self.root, ())
        return out

    def is_leaf_path(self, path):
        path = tuple(path)
        if len(path) != self.n_times:
            return False
        node = self.root
        for k, label in enumerate(path):
            if label not in node.projectors.labels:
                return False
            if k < len(path) - 1:
                node = node.children[label]
        return True

    def class_operators(self):
        """Dict path -> C_alpha, built with cached prefix products."""
        out = {}

        def walk(node, prefix, acc):
            for label, p in node.projectors:
                c = p if acc is None else p @ acc
                path = prefix + (label,)
                if node.children is None:
                    out[path] = c
                else:
                    walk(node.children[label], path, c)

        walk(self.root, (), None)
        return out

    def propagate(self, w, prune_tol=PRUNE_TOL):
        """Apply every class operator to the columns of ``w``.

        Returns ``(retained, pruned)``: ``retained`` maps each path to
        C_alpha @ w, ``pruned`` lists paths whose Frobenius norm fell to
        ``prune_tol`` or below.  Projections never increase the norm, so a
        pruned prefix prunes its whole subtree.
        """
        w = np.asarray(w, dtype=complex)
        retained, pruned = {}, []

        def walk(node, prefix, acc):
            for label, p in node.projectors:
                b = p @ acc
                path = prefix + (label,)
                if np.linalg.norm(b) <= prune_tol:
                    pruned.extend(_leaves_below(node, label, path))
                    continue
                if node.children is None:
                    retained[path] = b
                else:
                    walk(node.children[label], path, b)

        walk(self.root, (), w)
        return retained, pruned


def _leaves_below(node, label, path):
    if node.children is None:
        return [path]
    child = node.children[label]
    return [path + rest for rest in _suffixes(child)]


def _suffixes(node):
    out = []
    for label in node.projectors.labels:
        if node.children is None:
            out.append((label,))
        else:
            out.extend((label,) + s for s in _suffixes(node.children[label]))
    return out


def class_operator(hset, path):
    """C_alpha = P^n_{alpha_n} ... P^1_{alpha_1}, earliest time rightmost."""
    path = tuple(path)
    if not hset.is_leaf_path(path):
        raise ContractViolation(f"{path!r} is not a history of this set")
    c = None
    for node, label in zip(hset.nodes_along(path), path):
        p = node.projectors[label]
        c = p if c is None else p @ c
    return _frozen(c)


def branch_state(hset, path, psi):
    """Unnormalized branch state vector C_alpha |psi>."""
    psi = as_state(psi)
    c = class_operator(hset, path)
    if c.shape[0] != psi.shape[0]:
        raise ContractViolation("state and history set dimensions differ")
    return c @ psi


def branch_states(hset, psi, prune_tol=PRUNE_TOL):
    """All branch states, with zero branches pruned (see HistorySet.propagate)."""
    psi = as_state(psi)
    if psi.shape[0] != hset.dim:
        raise ContractViolation("state and history set dimensions differ")
    retained, pruned = hset.propagate(psi[:, None], prune_tol)
    return {k: v[:, 0] for k, v in retained.items()}, pruned


# -- constructions ------------------------------------------------------------

def fine_grained_set(bases, times):
    """Completely fine-grained set: rank-1 projectors onto one basis per time.

    ``bases`` holds d x d matrices whose columns are the basis vectors, or
    basis names understood by ``named_basis`` together with a leading
    dimension, e.g. ``[("fourier", 4), ...]``.
    """
    sets = []
    for b in bases:
        if isinstance(b, tuple) and isinstance(b[0], str):
            b = named_basis(*b)
        sets.append(ProjectorSet.from_basis(b))
    return HistorySet.chain(times, sets)


def narrative_set(schroedinger_set, h, times, hbar=1.0):
    """The same Schroedinger-picture alternatives at every time, in Heisenberg form."""
    h = as_hermitian(h)
    if h.shape[0] != schroedinger_set.dim:
        raise ContractViolation("Hamiltonian and projector set dimensions differ")
    sets = [schroedinger_set.conjugate(evolution_operator(h, t, hbar)) for t in times]
    return HistorySet.chain(times, sets)


# -- coarse graining ------------------------------------------------------------

@dataclass(frozen=True)
class CoarseGrainingMap:
    """Partition of fine history paths into named coarse classes."""

    classes: Mapping  # class key -> frozenset of fine paths

    def __post_init__(self):
        classes = {k: frozenset(tuple(p) for p in v) for k, v in dict(self.classes).items()}
        owner = {}
        for key, members in classes.items():
            if not members:
                raise ContractViolation(f"coarse class {key!r} is empty")
            for p in members:
                if p in owner:
                    raise ContractViolation(f"path {p!r} is in classes {owner[p]!r} and {key!r}")
                owner[p] = key
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "_owner", owner)

    @classmethod
    def from_function(cls, hset, key):
        classes = {}
        for path in hset.paths():
            classes.setdefault(key(path), set()).add(path)
        return cls(classes)

    def class_of(self, path):
        return self._owner[tuple(path)]

    def check_against(self, paths):
        paths = set(paths)
        covered = set(self._owner)
        if covered != paths:
            missing = paths - covered
            extra = covered - paths
            raise ContractViolation(
                f"partition does not match the history set ({len(missing)} paths uncovered, "
                f"{len(extra)} unknown paths)"
            )


def coarse_class_operators(hset, cmap):
    """{C_bar} = sums of fine class operators over each class (always defined)."""
    cmap.check_against(hset.paths())
    ops = hset.class_operators()
    return {key: _frozen(sum(ops[p] for p in members)) for key, members in cmap.classes.items()}


def _same_subtree(a, b, memo):
    if a is b:
        return True
    key = (id(a), id(b))
    if key in memo:
        return memo[key]
    ok = (
        a.projectors.labels == b.projectors.labels
        and all(np.allclose(p, q, atol=1e-12, rtol=0) for p, q in zip(a.projectors.members, b.projectors.members))
        and (a.children is None) == (b.children is None)
    )
    if ok and a.children is not None:
        ok = all(_same_subtree(a.children[l], b.children[l], memo) for l in a.projectors.labels)
    memo[key] = ok
    return ok


class _NotAChain(Exception):
    pass


def _identity_tail(dim, depth, key):
    """Chain of single-member identity sets; the last label is the class key."""
    node = None
    for k in range(depth):
        label = key if k == 0 else ("*",)
        pset = ProjectorSet((np.eye(dim),), (label,), validate=False)
        node = BranchNode(pset, None if node is None else {label: node})
    return node


def _realize(node, fragments, remaining, memo):
    """Coarse node for fine ``node`` given class fragments (key -> set of suffixes)."""
    labels = node.projectors.labels
    last = node.children is None
    # alternatives joined by a common fragment form one coarse alternative
    parent = {a: a for a in labels}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    heads = {}
    for key, suffixes in fragments.items():
        firsts = {s[0] for s in suffixes}
        heads[key] = firsts
        it = iter(firsts)
        root = find(next(it))
        for a in it:
            parent[find(a)] = root
    groups = {}
    for a in labels:
        groups.setdefault(find(a), []).append(a)

    members, glabels, children = [], [], {}
    for group in groups.values():
        keys = [k for k, firsts in heads.items() if firsts & set(group)]
        p = sum(node.projectors[a] for a in group)
        if last:
            if len(keys) != 1:
                raise _NotAChain("final-time alternatives shared by several classes")
            label = keys[0]
            members.append(p)
            glabels.append(label)
            continue
        per_key = {}
        for key in keys:
            per_alt = {}
            for s in fragments[key]:
                per_alt.setdefault(s[0], set()).add(s[1:])
            if set(per_alt) != set(group):
                raise _NotAChain(f"class {key!r} is not a product over the merged alternatives")
            per_key[key] = per_alt
        label = tuple(group)
        members.append(p)
        glabels.append(label)
        if len(keys) == 1 and all(
            len(per_key[keys[0]][a]) == _count_suffixes(node.children[a]) for a in group
        ):
            # the class follows every continuation: the rest of the chain is identity
            children[label] = _identity_tail(node.projectors.dim, remaining - 1, keys[0])
            continue
        tails = {}
        for key, per_alt in per_key.items():
            first = per_alt[group[0]]
            if any(per_alt[a] != first for a in group[1:]):
                raise _NotAChain(f"class {key!r} has different continuations on merged alternatives")
            tails[key] = first
        first_child = node.children[group[0]]
        if not all(_same_subtree(first_child, node.children[a], memo) for a in group[1:]):
            raise _NotAChain("merged alternatives lead to different later alternatives")
        children[label] = _realize(first_child, tails, remaining - 1, memo)
    pset = ProjectorSet(tuple(members), tuple(glabels), validate=False)
    return BranchNode(pset, None if last else children)


def _count_suffixes(node):
    if node.children is None:
        return len(node.projectors)
    return sum(_count_suffixes(node.children[l]) for l in node.projectors.labels)


def coarse_grain(hset, cmap):
    """Coarse-grained history set whose class operators are sums over each class.

    Each coarse history's final label is its class key.  Raises
    ``UnsupportedGraining`` (carrying the summed class operators) when the
    partition cannot be written as a chain of summed projectors.
    """
    cmap.check_against(hset.paths())
    fragments = {key: set(members) for key, members in cmap.classes.items()}
    try:
        root = _realize(hset.root, fragments, hset.n_times, {})
    except _NotAChain as exc:
        raise UnsupportedGraining(str(exc), coarse_class_operators(hset, cmap)) from None
    return HistorySet(hset.times, root)


def coarse_path_of(coarse_set):
    """Map class key -> coarse path for a set produced by ``coarse_grain``."""
    return {path[-1]: path for path in coarse_set.paths()}
