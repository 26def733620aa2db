"""Experiment configuration: JSON schema, dataclass configs and builders.

Matrices in a config are nested lists of reals, or ``{"real": ..., "imag": ...}``.
Two-level operators can also be named: ``"sigma_x"``, ``"sigma_y"``, ``"sigma_z"``.
"""
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from realms.errors import CapExceeded, ConfigError, ContractViolation
from realms.histories import HistorySet
from realms.hilbert import ProjectorSet, evolution_operator, named_basis, normalized, random_state

KINDS = ("decoherence", "maxent", "second-law", "ehrenfest", "theorem-search", "certainty")
MAX_OPERATOR_DIM = 2 ** 14
MAX_HISTORY_DIM = 2 ** 10

PAULI = {
    "sigma_x": np.array([[0, 1], [1, 0]], dtype=complex),
    "sigma_y": np.array([[0, -1j], [1j, 0]]),
    "sigma_z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_positive = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_real_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_matrix = {
    "oneOf": [
        _real_matrix,
        {
            "type": "object",
            "required": ["real"],
            "properties": {"real": _real_matrix, "imag": _real_matrix},
            "additionalProperties": False,
        },
        {"enum": sorted(PAULI)},
    ]
}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_state = {
    "type": "object",
    "properties": {
        "vector": _vector,
        "imag": _vector,
        "basis_state": {"type": "integer", "minimum": 0},
        "uniform": {"const": True},
        "random": {"const": True},
    },
    "minProperties": 1,
    "additionalProperties": False,
}
_times = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "required": ["stop", "count"],
            "properties": {"start": {"type": "number"}, "stop": {"type": "number"}, "count": _count},
            "additionalProperties": False,
        },
    ]
}
_projector_set = {
    "type": "object",
    "properties": {
        "basis": {"enum": ["computational", "fourier"]},
        "matrix_basis": _matrix,
        "projectors": {"type": "array", "items": _matrix, "minItems": 1},
        "labels": {"type": "array"},
    },
    "minProperties": 1,
    "additionalProperties": False,
}
_tolerances = {
    "type": "object",
    "properties": {"epsilon": _positive, "solve": _positive, "certainty": _positive, "exact": _positive},
    "additionalProperties": False,
}

_KIND_SCHEMAS = {
    "decoherence": {
        "required": ["dim", "history", "state"],
        "properties": {
            "dim": {"type": "integer", "minimum": 1},
            "state": _state,
            "hamiltonian": _matrix,
            "history": {
                "type": "object",
                "required": ["times", "sets"],
                "properties": {
                    "times": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    "sets": {"type": "array", "items": _projector_set, "minItems": 1},
                },
                "additionalProperties": False,
            },
        },
    },
    "maxent": {
        "required": ["operators"],
        "properties": {
            "operators": {"type": "array", "items": _matrix, "minItems": 1},
            "targets": _vector,
            "state": _state,
            "max_iter": _count,
        },
    },
    "second-law": {
        "required": ["sites", "cell_size", "times"],
        "properties": {
            "sites": {"type": "integer", "minimum": 2},
            "cell_size": _count,
            "coupling": {"type": "number"},
            "interaction": {"type": "number"},
            "field": {"type": "number"},
            "periodic": {"type": "boolean"},
            "times": _times,
            "initial": {
                "type": "object",
                "properties": {
                    "filled": {"type": "integer", "minimum": 0},
                    "tilt": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
    },
    "ehrenfest": {
        "required": ["grid_size", "length", "potential", "packet", "times"],
        "properties": {
            "grid_size": {"type": "integer", "minimum": 8},
            "length": _positive,
            "mass": _positive,
            "potential": {
                "type": "object",
                "required": ["type"],
                "properties": {
                    "type": {"enum": ["free", "harmonic", "quartic"]},
                    "omega": _positive,
                    "coefficient": _positive,
                },
                "additionalProperties": False,
            },
            "packet": {
                "type": "object",
                "required": ["x0", "width"],
                "properties": {"x0": {"type": "number"}, "p0": {"type": "number"}, "width": _positive},
                "additionalProperties": False,
            },
            "times": _times,
        },
    },
    "theorem-search": {
        "required": ["dim", "n_times", "trials"],
        "properties": {
            "dim": {"type": "integer", "minimum": 2},
            "n_times": _count,
            "trials": _count,
            "inject_repeated": {"type": "integer", "minimum": 0},
        },
    },
    "certainty": {
        "properties": {
            "count": _count,
            "dims": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        },
    },
}

_COMMON = {
    "kind": {"enum": list(KINDS)},
    "seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string", "minLength": 1, "pattern": "^[^/\\\\]+$"},
    "tolerances": _tolerances,
}


def _kind_branch(kind, spec):
    props = dict(_COMMON)
    props.update(spec.get("properties", {}))
    return {
        "if": {"properties": {"kind": {"const": kind}}, "required": ["kind"]},
        "then": {"required": spec.get("required", []), "properties": props, "additionalProperties": False},
    }


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind"],
    "properties": _COMMON,
    "allOf": [_kind_branch(k, s) for k, s in _KIND_SCHEMAS.items()],
}


def schema_violations(doc):
    """Every schema violation as ``"field.path: message"``, in document order."""
    from jsonschema import Draft202012Validator

    out = []
    for err in sorted(Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    # common fields are checked by both the top level and the kind branch
    return list(dict.fromkeys(out))


# -- value builders -----------------------------------------------------------

def build_matrix(spec, where):
    if isinstance(spec, str):
        return PAULI[spec]
    try:
        if isinstance(spec, dict):
            m = np.asarray(spec["real"], dtype=float).astype(complex)
            if "imag" in spec:
                m = m + 1j * np.asarray(spec["imag"], dtype=float)
        else:
            m = np.asarray(spec, dtype=float).astype(complex)
    except ValueError as exc:
        raise ConfigError(f"{where}: not a rectangular numeric matrix ({exc})", field=where) from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{where}: expected a square matrix, got shape {m.shape}", field=where)
    if m.shape[0] > MAX_OPERATOR_DIM:
        raise CapExceeded(f"{where}: dimension {m.shape[0]} exceeds {MAX_OPERATOR_DIM}")
    return m


def build_state(spec, dim, rng, where="state"):
    if "vector" in spec:
        v = np.asarray(spec["vector"], dtype=float).astype(complex)
        if "imag" in spec:
            if len(spec["imag"]) != len(v):
                raise ConfigError(f"{where}.imag: length differs from {where}.vector", field=f"{where}.imag")
            v = v + 1j * np.asarray(spec["imag"], dtype=float)
        if len(v) != dim:
            raise ConfigError(f"{where}.vector: length {len(v)} does not match dim {dim}", field=f"{where}.vector")
        if np.linalg.norm(v) == 0:
            raise ConfigError(f"{where}.vector: zero vector", field=f"{where}.vector")
        return normalized(v)
    if "basis_state" in spec:
        k = spec["basis_state"]
        if k >= dim:
            raise ConfigError(f"{where}.basis_state: {k} is out of range for dim {dim}", field=f"{where}.basis_state")
        v = np.zeros(dim, dtype=complex)
        v[k] = 1
        return v
    if "uniform" in spec:
        return normalized(np.ones(dim))
    return random_state(dim, rng)


def build_projector_set(spec, dim, where):
    labels = tuple(spec["labels"]) if "labels" in spec else None
    labels = tuple(tuple(l) if isinstance(l, list) else l for l in labels) if labels else None
    keys = [k for k in ("basis", "matrix_basis", "projectors") if k in spec]
    if len(keys) != 1:
        raise ConfigError(f"{where}: give exactly one of basis, matrix_basis, projectors", field=where)
    try:
        if "basis" in spec:
            return ProjectorSet.from_basis(named_basis(spec["basis"], dim), labels)
        if "matrix_basis" in spec:
            b = build_matrix(spec["matrix_basis"], f"{where}.matrix_basis")
            return ProjectorSet.from_basis(b, labels)
        members = tuple(build_matrix(m, f"{where}.projectors[{i}]") for i, m in enumerate(spec["projectors"]))
        return ProjectorSet(members, labels)
    except ContractViolation as exc:
        raise ConfigError(f"{where}: {exc}", field=where) from None


def build_times(spec):
    if isinstance(spec, list):
        return [float(t) for t in spec]
    return [float(t) for t in np.linspace(spec.get("start", 0.0), spec["stop"], spec["count"])]


# -- dataclass configs ----------------------------------------------------------

@dataclass
class Tolerances:
    epsilon: float = 1e-8
    solve: float = 1e-10
    certainty: float = 1e-9
    exact: float = 1e-10


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    output: Optional[str] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc):
        common = {f.name for f in fields(cls)} - {"params"}
        tol = Tolerances(**doc.get("tolerances", {}))
        params = {k: v for k, v in doc.items() if k not in common}
        return cls(doc["kind"], doc.get("seed", 0), doc.get("output"), tol, params)

    @property
    def default_output(self):
        ext = "csv" if self.kind in ("second-law", "ehrenfest") else "json"
        return self.output or f"{self.kind}.{ext}"

    def rng(self):
        return np.random.default_rng(np.random.SeedSequence(self.seed))


def build_history_set(cfg):
    p = cfg.params
    dim = p["dim"]
    if dim > MAX_HISTORY_DIM:
        raise CapExceeded(f"dim: {dim} exceeds the history-enumeration cap {MAX_HISTORY_DIM}")
    hist = p["history"]
    times = [float(t) for t in hist["times"]]
    if len(times) != len(hist["sets"]):
        raise ConfigError("history.times: one time per projector set is required", field="history.times")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("history.times: times must be strictly increasing", field="history.times")
    sets = [build_projector_set(s, dim, f"history.sets[{i}]") for i, s in enumerate(hist["sets"])]
    if "hamiltonian" in p:
        h = build_matrix(p["hamiltonian"], "hamiltonian")
        if h.shape[0] != dim or np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ConfigError("hamiltonian: must be Hermitian with the configured dim", field="hamiltonian")
        sets = [s.conjugate(evolution_operator(h, t)) for s, t in zip(sets, times)]
    try:
        return HistorySet.chain(times, sets)
    except ContractViolation as exc:
        raise ConfigError(f"history: {exc}", field="history") from None
