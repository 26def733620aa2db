"""Numerical checks of the structural theorems about decoherent histories.

* exactly decoherent, completely fine-grained sets are trivial;
* a history of probability one in an exactly decoherent set only asks
  whether the state is still the initial state;
* narratives of conserved alternatives never change;
* records correlate one-to-one with branches.

"Exact" means a normalized defect of at most ``EXACT_TOL`` in double precision.
"""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from realms.decoherence import _jsonable, decoherence_functional
from realms.errors import CapExceeded, ContractViolation
from realms.histories import PRUNE_TOL, HistorySet, branch_state, branch_states, fine_grained_set, narrative_set
from realms.hilbert import ProjectorSet, as_state, evolution_operator, haar_unitary, random_state

EXACT_TOL = 1e-10
GENERICITY_FLOOR = 1e-6
MAX_FINE_HISTORIES = 2 ** 16
MAX_WITNESSES = 10


class Triviality(str, Enum):
    NON_DECOHERENT = "non-decoherent"
    UNIQUE_PRIOR = "trivial-unique-prior"
    STATE_QUESTION = "trivial-state-question"
    ZERO_PADDED = "zero-padded-trivial"

    @property
    def trivial(self):
        return self is not Triviality.NON_DECOHERENT


@dataclass(frozen=True)
class TrivialityVerdict:
    """Classification plus a witness that can be re-checked from scratch.

    For ``non-decoherent`` the witness is ``(alpha, beta, |<a|b>|, normalized)``
    for the worst-overlapping pair of non-zero branches.  Otherwise it maps
    each reached final alternative to the unique earlier path leading to it.
    """

    classification: Triviality
    witness: object
    defect: float

    def to_json(self):
        if self.classification is Triviality.NON_DECOHERENT:
            a, b, overlap, norm = self.witness
            witness = {"pair": [_jsonable(a), _jsonable(b)], "overlap": overlap, "normalized": norm}
        else:
            witness = [[_jsonable(k), _jsonable(v)] for k, v in self.witness.items()]
        return {"classification": self.classification.value, "witness": witness, "defect": self.defect}


def _require_fine_grained(hset):
    stack = [hset.root]
    while stack:
        node = stack.pop()
        if any(r != 1 for r in node.projectors.ranks()):
            raise ContractViolation("classification needs a completely fine-grained set (rank-1 projectors only)")
        if node.children is not None:
            stack.extend({id(c): c for c in node.children.values()}.values())


def classify_fine_grained(hset, psi, exact_tol=EXACT_TOL):
    _require_fine_grained(hset)
    psi = as_state(psi)
    branches, _ = branch_states(hset, psi, PRUNE_TOL)
    paths = list(branches)
    if len(paths) > 1:
        m = np.stack([branches[p] for p in paths])
        g = m.conj() @ m.T
        norms = np.sqrt(np.real(np.diag(g)))
        ratio = np.abs(g) / np.outer(norms, norms)
        np.fill_diagonal(ratio, 0.0)
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        defect = float(ratio[i, j])
        if defect > exact_tol:
            witness = (paths[i], paths[j], float(abs(g[i, j])), defect)
            return TrivialityVerdict(Triviality.NON_DECOHERENT, witness, defect)
    else:
        defect = 0.0

    prior = {}
    for p in paths:
        # two non-zero branches ending on the same rank-1 projector are parallel,
        # so exact decoherence already forces at most one per final alternative
        if p[-1] in prior:
            raise AssertionError(f"decoherent fine-grained set with two priors for {p[-1]!r}")
        prior[p[-1]] = p[:-1]

    finals = hset.root.projectors.labels if hset.n_times == 1 else _final_labels(hset)
    if _asks_for_state(hset, psi, paths, exact_tol):
        kind = Triviality.STATE_QUESTION
    elif set(prior) != set(finals):
        kind = Triviality.ZERO_PADDED
    else:
        kind = Triviality.UNIQUE_PRIOR
    return TrivialityVerdict(kind, prior, defect)


def _final_labels(hset):
    return {p[-1] for p in hset.paths()}


def _asks_for_state(hset, psi, paths, tol):
    """All non-zero branches share their earlier alternatives, and each of
    those projectors leaves psi unchanged."""
    if hset.n_times < 2 or not paths:
        return False
    prefixes = {p[:-1] for p in paths}
    if len(prefixes) != 1:
        return False
    prefix = prefixes.pop()
    for node, label in zip(hset.nodes_along(prefix + (None,)), prefix):
        if np.linalg.norm(node.projectors[label] @ psi - psi) > np.sqrt(tol):
            return False
    return True


def verify_witness(hset, psi, verdict, exact_tol=EXACT_TOL):
    """Recompute a verdict's witness from the class operators alone."""
    psi = as_state(psi)
    if verdict.classification is Triviality.NON_DECOHERENT:
        a, b, overlap, _ = verdict.witness
        va, vb = branch_state(hset, a, psi), branch_state(hset, b, psi)
        o = abs(np.vdot(va, vb))
        return o / (np.linalg.norm(va) * np.linalg.norm(vb)) > exact_tol and np.isclose(o, overlap, rtol=1e-8)
    for path in hset.paths():
        nonzero = np.linalg.norm(branch_state(hset, path, psi)) > PRUNE_TOL
        expected = verdict.witness.get(path[-1]) == path[:-1]
        if nonzero != expected:
            return False
    return True


# -- search over random fine-grained sets -------------------------------------------

def _generic_bases(dim, n_times, rng, floor=GENERICITY_FLOOR):
    """Haar bases and state whose consecutive overlaps are all at least ``floor``."""
    while True:
        bases = [haar_unitary(dim, rng) for _ in range(n_times)]
        psi = random_state(dim, rng)
        ok = np.min(np.abs(bases[0].conj().T @ psi)) >= floor
        for b0, b1 in zip(bases, bases[1:]):
            ok = ok and np.min(np.abs(b1.conj().T @ b0)) >= floor
        if ok:
            return bases, psi


def _repeated_bases(dim, n_times, rng):
    b = haar_unitary(dim, rng)
    return [b] * n_times, random_state(dim, rng)


@dataclass
class SearchSummary:
    seed: int
    dim: int
    n_times: int
    trials: int
    classifications: dict
    non_decoherent: int
    trivial: int
    decoherent_nontrivial: int
    min_defect: float              # over the generic (non-injected) trials
    witnesses: list = field(default_factory=list)

    def to_json(self):
        return {
            "seed": self.seed,
            "dim": self.dim,
            "n_times": self.n_times,
            "trials": self.trials,
            "classifications": dict(sorted(self.classifications.items())),
            "non_decoherent": self.non_decoherent,
            "trivial": self.trivial,
            "decoherent_nontrivial": self.decoherent_nontrivial,
            "min_defect": self.min_defect,
            "witnesses": self.witnesses,
        }


def search_fine_grained(dim, n_times, trials, seed, inject_repeated=0, threads=1, exact_tol=EXACT_TOL):
    """Classify ``trials`` random completely fine-grained sets.

    Trial k uses the k-th child of ``SeedSequence(seed)``; the first
    ``inject_repeated`` trials repeat one basis at every time as a control.
    Generic trials resample bases until every overlap between consecutive
    bases (and between psi and the first basis) is at least 1e-6.
    """
    if dim < 2 or n_times < 1:
        raise ContractViolation("need dim >= 2 and n_times >= 1")
    if dim ** n_times > MAX_FINE_HISTORIES:
        raise CapExceeded(f"dim**n_times = {dim ** n_times} exceeds {MAX_FINE_HISTORIES}")
    if not 0 <= inject_repeated <= trials:
        raise ContractViolation("inject_repeated must lie in [0, trials]")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    times = tuple(float(k) for k in range(n_times))

    def one(k):
        rng = np.random.default_rng(seeds[k])
        injected = k < inject_repeated
        bases, psi = (_repeated_bases if injected else _generic_bases)(dim, n_times, rng)
        hset = fine_grained_set(bases, times)
        verdict = classify_fine_grained(hset, psi, exact_tol)
        return k, injected, verdict, hset, psi

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(k) for k in range(trials)]

    counts = Counter()
    min_defect, witnesses, nontrivial = np.inf, [], 0
    for k, injected, verdict, hset, psi in results:
        counts[verdict.classification.value] += 1
        if verdict.classification.trivial and not verify_witness(hset, psi, verdict, exact_tol):
            nontrivial += 1
        if not injected:
            min_defect = min(min_defect, verdict.defect)
        if verdict.classification is Triviality.NON_DECOHERENT and len(witnesses) < MAX_WITNESSES:
            witnesses.append({"trial": k, **verdict.to_json()["witness"]})
    n_bad = counts[Triviality.NON_DECOHERENT.value]
    return SearchSummary(
        seed, dim, n_times, trials, dict(counts), n_bad, trials - n_bad, nontrivial,
        float(min_defect) if np.isfinite(min_defect) else float("nan"), witnesses,
    )


# -- certainty -------------------------------------------------------------------

@dataclass(frozen=True)
class CertaintyReport:
    vacuous: bool
    notice: str
    defect: float
    certain_history: tuple = None
    max_violation: float = 0.0
    threshold: float = 0.0

    @property
    def passed(self):
        return self.vacuous or self.max_violation <= self.threshold

    def to_json(self):
        return {
            "vacuous": self.vacuous,
            "notice": self.notice,
            "defect": self.defect,
            "certain_history": None if self.certain_history is None else _jsonable(self.certain_history),
            "max_violation": self.max_violation,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def certainty_check(hset, psi, tol=1e-9, exact_tol=EXACT_TOL):
    """If a history is certain, every alternative along it must answer
    "is the state still psi?": P psi = psi on the path, P psi = 0 off it,
    each within sqrt(tol)."""
    psi = as_state(psi)
    report = decoherence_functional(hset, psi, exact_tol)
    if report.defect > exact_tol:
        return CertaintyReport(True, f"set is not exactly decoherent (defect {report.defect:.3e})", report.defect)
    best = int(np.argmax(report.probabilities)) if len(report.labels) else None
    if best is None or report.probabilities[best] < 1 - tol:
        top = 0.0 if best is None else float(report.probabilities[best])
        return CertaintyReport(True, f"no certain history (largest probability {top:.6g})", report.defect)
    path = report.labels[best]
    worst = 0.0
    for node, label in zip(hset.nodes_along(path), path):
        for alt, p in node.projectors:
            target = psi if alt == label else 0.0
            worst = max(worst, float(np.linalg.norm(p @ psi - target)))
    return CertaintyReport(False, "certain history found", report.defect, path, worst, float(np.sqrt(tol)))


def certainty_corpus(seed, count=60, dims=(2, 3, 4, 6)):
    """Seeded mix of decoherent sets, some containing a certain history.

    Kinds: "state-question" (is it psi? asked at several Heisenberg times),
    "conserved" (eigenspaces of H repeated, psi inside one of them),
    "repeated-basis" (trivial, no certain history) and "generic" (usually
    not decoherent at all).  Yields ``(kind, history_set, psi)``.
    """
    seeds = np.random.SeedSequence(seed).spawn(count)
    kinds = ("state-question", "conserved", "repeated-basis", "generic")
    for k, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        dim = int(dims[k % len(dims)])
        kind = kinds[k % len(kinds)]
        n_times = int(rng.integers(2, 4))
        times = tuple(np.sort(rng.uniform(0, 3, n_times)) + np.arange(n_times))
        if kind == "state-question":
            psi = random_state(dim, rng)
            u = haar_unitary(dim, rng)
            h = u @ np.diag(rng.normal(size=dim)) @ u.conj().T
            sets = []
            for t in times:
                # ask about the evolved psi, which is psi again in the Heisenberg picture
                q = ProjectorSet.yes_no(evolution_operator(h, t) @ psi)
                sets.append(q.conjugate(evolution_operator(h, t)))
            yield kind, HistorySet.chain(times, sets), psi
        elif kind == "conserved":
            n_levels = max(2, dim // 2)
            sizes = np.full(n_levels, dim // n_levels)
            sizes[: dim % n_levels] += 1
            u = haar_unitary(dim, rng)
            energies = np.repeat(rng.normal(size=n_levels), sizes)
            h = u @ np.diag(energies) @ u.conj().T
            edges = np.concatenate([[0], np.cumsum(sizes)])
            members = tuple(u[:, a:b] @ u[:, a:b].conj().T for a, b in zip(edges, edges[1:]))
            q = ProjectorSet(members)
            pick = int(rng.integers(n_levels))
            block = u[:, edges[pick]:edges[pick + 1]]
            psi = block @ random_state(sizes[pick], rng)
            yield kind, narrative_set(q, h, times), psi
        elif kind == "repeated-basis":
            bases, psi = _repeated_bases(dim, n_times, rng)
            yield kind, fine_grained_set(bases, times), psi
        else:
            bases, psi = _generic_bases(dim, n_times, rng)
            yield kind, fine_grained_set(bases, times), psi


# -- narratives and records ----------------------------------------------------------

class NarrativeCheck(dict):
    """``confirmed``, ``leakage`` (largest non-constant C), ``deviation``
    (largest |C_(a..a) - Q_a|) and ``drift`` of the projectors across times."""

    @property
    def confirmed(self):
        return self["confirmed"]


def trivial_narrative_check(hset, tol=EXACT_TOL, drift_tol=1e-12):
    """Check that only constant histories survive and that C_(a,...,a) = Q_a.

    Holds exactly when the Heisenberg projectors do not change between the
    sample times.  A non-zero ``drift`` is reported together with the
    resulting leakage rather than rejected, so near-conserved alternatives
    can be examined.
    """
    root = hset.root.projectors
    labels = root.labels
    node, level = hset.root, [hset.root]
    while node.children is not None:
        kids = {id(c): c for c in node.children.values()}
        if len(kids) != 1:
            raise ContractViolation("narrative check needs the same alternatives at every time (a chain)")
        node = next(iter(kids.values()))
        if node.projectors.labels != labels:
            raise ContractViolation("narrative check needs identical labels at every time")
        level.append(node)
    drift = max(
        (float(np.max(np.abs(n.projectors[a] - root[a]))) for n in level[1:] for a in labels), default=0.0
    )
    leakage, deviation = 0.0, 0.0
    for path, c in hset.class_operators().items():
        if len(set(path)) == 1:
            deviation = max(deviation, float(np.linalg.norm(c - root[path[0]], 2)))
        else:
            leakage = max(leakage, float(np.linalg.norm(c, 2)))
    return NarrativeCheck(
        confirmed=leakage <= tol and deviation <= tol,
        leakage=leakage,
        deviation=deviation,
        drift=drift,
        drift_within=drift <= drift_tol,
    )


def generalized_records_check(hset, psi, records):
    """max over record labels alpha and histories beta of
    |R_alpha C_beta psi - delta(alpha, beta) C_alpha psi|.

    Records are labelled by history paths and must cover every history with
    a non-zero branch; labels of zero branches may be left out.
    """
    psi = as_state(psi)
    if not isinstance(records, ProjectorSet):
        raise ContractViolation("records must be a ProjectorSet")
    if records.dim != hset.dim:
        raise ContractViolation("records and history set dimensions differ")
    branches = {p: c @ psi for p, c in hset.class_operators().items()}
    labels = [tuple(l) if isinstance(l, (tuple, list)) else l for l in records.labels]
    unknown = [l for l in labels if l not in branches]
    if unknown:
        raise ContractViolation(f"record labels {unknown[:3]!r} are not histories of this set")
    missing = [p for p, v in branches.items() if p not in labels and np.linalg.norm(v) > PRUNE_TOL]
    if missing:
        raise ContractViolation(f"histories {missing[:3]!r} have non-zero branches but no record")
    worst = 0.0
    for label, r in zip(labels, records.members):
        for path, v in branches.items():
            target = v if path == label else 0.0
            worst = max(worst, float(np.linalg.norm(r @ v - target)))
    return worst
