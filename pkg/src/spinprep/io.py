"""JSON state files.

Format::

    {"kind": "single" | "bipartite",
     "twice_j": int | [int, int],
     "re": [[...]], "im": [[...]]}

Matrices are row-major in the descending-``m`` basis, A-major for two spins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STATE_TOL = 1e-8


class StateFormatError(ValueError):
    """Malformed state file: bad JSON, missing keys, non-Hermitian, trace != 1."""


class DimensionMismatchError(ValueError):
    """Matrix size disagrees with the declared spins, or inputs disagree with each other."""


@dataclass(frozen=True)
class StateFile:
    kind: str
    twice_j: tuple[int, ...]
    matrix: np.ndarray

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t + 1 for t in self.twice_j)

    @property
    def spins(self) -> tuple[float, ...]:
        return tuple(t / 2 for t in self.twice_j)

    @property
    def bipartite(self) -> bool:
        return self.kind == "bipartite"

    def to_dict(self) -> dict:
        tj = list(self.twice_j) if self.bipartite else self.twice_j[0]
        return {
            "kind": self.kind,
            "twice_j": tj,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }


def parse_state(obj, raw: bool = False, tol: float = STATE_TOL) -> StateFile:
    """Validate a decoded state object.

    Without ``raw`` the matrix must be Hermitian with unit trace to ``tol``;
    with ``raw`` only Hermiticity is checked (direction matrices are traceless).
    """
    if not isinstance(obj, dict):
        raise StateFormatError("state file must hold a JSON object")
    missing = {"kind", "twice_j", "re", "im"} - set(obj)
    if missing:
        raise StateFormatError(f"state file lacks keys: {sorted(missing)}")
    kind = obj["kind"]
    if kind not in ("single", "bipartite"):
        raise StateFormatError(f"kind must be 'single' or 'bipartite', got {kind!r}")
    tj = obj["twice_j"]
    tj = tuple(tj) if isinstance(tj, list) else (tj,)
    if not all(isinstance(t, int) and not isinstance(t, bool) and t >= 1 for t in tj):
        raise StateFormatError(f"twice_j entries must be positive integers, got {obj['twice_j']!r}")
    if len(tj) != (2 if kind == "bipartite" else 1):
        raise StateFormatError(f"kind {kind!r} needs {2 if kind == 'bipartite' else 1} twice_j value(s)")
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise StateFormatError(f"matrix entries must be numbers: {exc}") from None
    if re.ndim != 2 or re.shape[0] != re.shape[1] or re.shape != im.shape:
        raise StateFormatError(f"'re' and 'im' must be equal square matrices, got {re.shape}, {im.shape}")
    if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
        raise StateFormatError("matrix entries must be finite")
    d = int(np.prod([t + 1 for t in tj]))
    if re.shape[0] != d:
        raise DimensionMismatchError(
            f"matrix is {re.shape[0]}x{re.shape[0]} but twice_j={obj['twice_j']} needs {d}x{d}")
    rho = re + 1j * im
    if np.abs(rho - rho.conj().T).max() > tol:
        raise StateFormatError("matrix is not Hermitian")
    if not raw and abs(np.trace(rho).real - 1) > tol:
        raise StateFormatError(f"trace is {np.trace(rho).real:.10g}, expected 1 (pass --raw for directions)")
    return StateFile(kind, tj, (rho + rho.conj().T) / 2)


def load_state(path, raw: bool = False) -> StateFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise StateFormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateFormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_state(obj, raw)


def state_file(matrix, twice_j) -> StateFile:
    """Wrap a matrix; ``twice_j`` is an int for one spin or a pair for two."""
    tj = tuple(twice_j) if np.ndim(twice_j) else (int(twice_j),)
    kind = "bipartite" if len(tj) == 2 else "single"
    return StateFile(kind, tuple(int(t) for t in tj), np.asarray(matrix, dtype=complex))


def dumps_state(sf: StateFile) -> str:
    return json.dumps(sf.to_dict(), indent=1) + "\n"
