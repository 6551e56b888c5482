"""JSON artifacts for matrices and policies, CSV for time series.

Every JSON document carries ``schema_version`` and ``kind``; loaders reject
anything they do not recognize.  JSON is written with sorted keys so that a
load/dump round trip is byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .model import DesirabilityTable, StateSpace, check_policy, check_simplex, check_transition_matrix

SCHEMA_VERSION = 1


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path, kind: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {version!r}")
    if doc.get("kind") != kind:
        raise ValueError(f"{path}: expected kind {kind!r}, got {doc.get('kind')!r}")
    return doc


def matrix_document(space: StateSpace, matrix) -> dict:
    P = check_transition_matrix(matrix, space.n_states)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "transition_matrix",
        "state_space": space.to_dict(),
        "matrix": P.tolist(),
    }


def load_matrix(path):
    """Return ``(StateSpace, matrix)`` from a matrix document."""
    doc = read_json(path, "transition_matrix")
    space = StateSpace.from_dict(doc["state_space"])
    return space, check_transition_matrix(doc["matrix"], space.n_states)


def policy_document(policy, gamma: float, source: str,
                    space: Optional[StateSpace] = None) -> dict:
    P = check_policy(policy)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "policy",
        "source": source,
        "gamma": gamma,
        "n_states": P.shape[1],
        "horizon_length": P.shape[0] + 1,
        "policy": P.tolist(),
    }
    if space is not None:
        doc["state_space"] = space.to_dict()
    return doc


def load_policy(path) -> np.ndarray:
    doc = read_json(path, "policy")
    P = check_policy(doc["policy"], int(doc["n_states"]))
    if P.shape[0] + 1 != int(doc["horizon_length"]):
        raise ValueError(f"{path}: horizon_length does not match the policy slices")
    return P


def _state_header(n: int) -> list:
    return [f"state_{i}" for i in range(n)]


def write_utility_csv(utility, path) -> None:
    U = np.asarray(utility, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + _state_header(U.shape[1]))
        for t, row in enumerate(U, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    return [h.strip() for h in rows[0]], rows[1:]


def read_utility_csv(path, n_states: Optional[int] = None) -> np.ndarray:
    """Utility schedule from ``t,state_0,...`` rows, one row per period in order."""
    header, rows = _read_rows(path)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    n = len(header) - 1
    if n_states is not None and n != n_states:
        raise ValueError(f"{path}: {n} state columns, expected {n_states}")
    try:
        ts = [int(r[0]) for r in rows]
        U = np.array([[float(v) for v in r[1:]] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: {exc}") from None
    if ts != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: periods must be numbered 1..T in order")
    if U.ndim != 2 or U.shape[1] != n:
        raise ValueError(f"{path}: ragged rows")
    return U


def write_values_csv(table: DesirabilityTable, path) -> None:
    z, log_z, phi = table.z, table.log_z, table.phi
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "state", "z", "log_z", "phi"])
        for t in range(table.horizon):
            for s in range(table.n_states):
                w.writerow([t + 1, s, repr(float(z[t, s])), repr(float(log_z[t, s])),
                            repr(float(phi[t, s]))])


def read_values_csv(path, gamma: float) -> DesirabilityTable:
    header, rows = _read_rows(path)
    if header[:2] != ["t", "state"] or ("log_z" not in header and "z" not in header):
        raise ValueError(f"{path}: expected columns t,state,z[,log_z,phi]")
    col = header.index("log_z") if "log_z" in header else header.index("z")
    try:
        t = np.array([int(r[0]) for r in rows]) - 1
        s = np.array([int(r[1]) for r in rows])
        v = np.array([float(r[col]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: {exc}") from None
    if t.size == 0 or t.min() < 0 or s.min() < 0:
        raise ValueError(f"{path}: bad indices")
    table = np.full((t.max() + 1, s.max() + 1), np.nan)
    table[t, s] = v
    if np.isnan(table).any():
        raise ValueError(f"{path}: missing (t, state) entries")
    if header[col] == "z":
        return DesirabilityTable.from_z(table, gamma)
    return DesirabilityTable(table, gamma)


def write_rho_csv(rho, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "rho"])
        for i, v in enumerate(rho):
            w.writerow([i, repr(float(v))])


def read_rho_csv(path, n_states: Optional[int] = None) -> np.ndarray:
    header, rows = _read_rows(path)
    if header[:2] != ["state", "rho"]:
        raise ValueError(f"{path}: expected columns state,rho")
    try:
        idx = [int(r[0]) for r in rows]
        rho = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: {exc}") from None
    if idx != list(range(len(rows))):
        raise ValueError(f"{path}: states must be listed 0..n-1 in order")
    return check_simplex(rho, n_states)


def write_error_curve_csv(error_history, path) -> None:
    hist = np.asarray(error_history, dtype=float)
    n_slices = hist.shape[1] if hist.ndim == 2 else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + [f"T{i}" for i in range(1, n_slices + 1)])
        for k, row in enumerate(hist, start=1):
            w.writerow([k] + [repr(float(v)) for v in row])
