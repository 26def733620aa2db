"""Decoherence functionals, medium-decoherence verdicts and sum-rule audits."""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from realms.errors import ContractViolation
from realms.histories import PRUNE_TOL
from realms.hilbert import as_density_matrix, as_state

DEFAULT_EPSILON = 1e-8
DEFECT_FLOOR = 1e-300


class Verdict(str, Enum):
    DECOHERENT = "decoherent"
    NOT_DECOHERENT = "not-decoherent"


def _state_factor(rho):
    """W with rho = W W^H; a 1-D input is treated as a pure state."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        return as_state(rho)[:, None]
    rho = as_density_matrix(rho)
    w, v = np.linalg.eigh(rho)
    keep = w > 1e-15
    return v[:, keep] * np.sqrt(w[keep])


def _gram(blocks):
    """D(a, b) = Tr(B_a B_b^H) for a list of d x r branch blocks."""
    if not blocks:
        return np.zeros((0, 0), dtype=complex)
    m = np.stack([b.reshape(-1) for b in blocks])
    g = m @ m.conj().T
    return (g + g.conj().T) / 2


def defect_of(gram, floor=DEFECT_FLOOR):
    """max_{a != b} |D(a,b)| / max(sqrt(D(a,a) D(b,b)), floor)."""
    n = gram.shape[0]
    if n < 2:
        return 0.0
    p = np.clip(np.real(np.diag(gram)), 0.0, None)
    norm = np.maximum(np.sqrt(np.outer(p, p)), floor)
    ratio = np.abs(gram) / norm
    np.fill_diagonal(ratio, 0.0)
    return float(ratio.max())


@dataclass(frozen=True, eq=False)
class DecoherenceReport:
    labels: tuple          # retained history paths, in gram order
    gram: np.ndarray       # D(alpha, beta) over retained histories
    probabilities: np.ndarray
    defect: float
    epsilon: float = DEFAULT_EPSILON
    pruned: tuple = ()     # zero-branch histories; probability exactly 0

    def __post_init__(self):
        object.__setattr__(self, "_index", {l: i for i, l in enumerate(self.labels)})
        object.__setattr__(self, "_pruned_set", frozenset(self.pruned))

    @property
    def verdict(self):
        return check_medium_decoherence(self, self.epsilon)

    def probability(self, path):
        path = tuple(path)
        if path in self._index:
            return float(self.probabilities[self._index[path]])
        if path in self._pruned_set:
            return 0.0
        raise ContractViolation(f"{path!r} is not a history of this report")

    def to_json(self):
        return {
            "labels": [list(map(_jsonable, l)) for l in self.labels],
            "gram_real": np.real(self.gram).tolist(),
            "gram_imag": np.imag(self.gram).tolist(),
            "probabilities": [float(p) for p in self.probabilities],
            "pruned": [list(map(_jsonable, l)) for l in self.pruned],
            "defect": self.defect,
            "epsilon": self.epsilon,
            "verdict": self.verdict.value,
        }


def _jsonable(label):
    if isinstance(label, (str, int, float, bool)) or label is None:
        return label
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    if isinstance(label, np.generic):
        return label.item()
    return str(label)


def decoherence_functional(hset, rho, epsilon=DEFAULT_EPSILON, prune_tol=PRUNE_TOL):
    """D(alpha, beta) = Tr(C_alpha rho C_beta^H) over the non-zero histories.

    ``rho`` is a density matrix or, for a pure state, a state vector.
    """
    w = _state_factor(rho)
    if w.shape[0] != hset.dim:
        raise ContractViolation(f"state dimension {w.shape[0]} does not match history set dimension {hset.dim}")
    retained, pruned = hset.propagate(w, prune_tol)
    labels = tuple(retained)
    gram = _gram([retained[l] for l in labels])
    probs = np.clip(np.real(np.diag(gram)), 0.0, None)
    return DecoherenceReport(labels, gram, probs, defect_of(gram), epsilon, tuple(pruned))


def check_medium_decoherence(report, epsilon):
    return Verdict.DECOHERENT if report.defect <= epsilon else Verdict.NOT_DECOHERENT


def sum_rule_audit(fine_report, cmap, coarse_report):
    """max over coarse classes of |p(class) - sum of fine p inside it|.

    ``coarse_report`` must come from a set built by ``coarse_grain(fine, cmap)``,
    whose final labels are the class keys.
    """
    coarse_paths = {path[-1]: path for path in coarse_report.labels + coarse_report.pruned}
    if set(coarse_paths) != set(cmap.classes):
        raise ContractViolation("coarse report classes do not match the coarse-graining map")
    cmap.check_against(fine_report.labels + fine_report.pruned)
    worst = 0.0
    for key, members in cmap.classes.items():
        fine_sum = sum(fine_report.probability(p) for p in members)
        worst = max(worst, abs(coarse_report.probability(coarse_paths[key]) - fine_sum))
    return worst


def effective_density_check(hset, rho, rho_tilde):
    """max_{a,b} |Tr(C_a rho C_b^H) - Tr(C_a rho~ C_b^H)| over all histories."""
    w, wt = _state_factor(rho), _state_factor(rho_tilde)
    if w.shape[0] != hset.dim or wt.shape[0] != hset.dim:
        raise ContractViolation("density matrix and history set dimensions differ")
    ops = hset.class_operators()
    paths = list(ops)
    g = _gram([ops[p] @ w for p in paths])
    gt = _gram([ops[p] @ wt for p in paths])
    return float(np.max(np.abs(g - gt)))
