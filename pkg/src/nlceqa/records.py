"""Measurement data containers and their file formats.

Record files are JSON lines, one estimate per line. Matrix files carry the
complex values split into re/im blocks with matching per-component
uncertainties. These files are the contract between data acquisition and
post-processing; a run can be re-analyzed from them without re-simulating.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simulator import MeasurementRecord


def save_records(path: Path, records: list[MeasurementRecord]) -> None:
    lines = [json.dumps({"label": r.label, "value": r.value, "sigma": r.sigma,
                         "shots": r.shots, "seed": r.seed}) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_records(path: Path) -> list[MeasurementRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(MeasurementRecord(d["value"], d["shots"], d["sigma"],
                                         d["label"], d["seed"]))
    return records


@dataclass
class MatrixEstimate:
    """An N x N measured matrix with per-component uncertainties.

    ``role`` is "hamiltonian" (Hermitian by construction, assembled from half
    of the off-diagonal elements) or "overlap" (general complex).
    """

    role: str
    values: np.ndarray
    sigma_re: np.ndarray
    sigma_im: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ValueError("matrix must be square")
        self.sigma_re = np.asarray(self.sigma_re, dtype=float)
        self.sigma_im = np.asarray(self.sigma_im, dtype=float)
        if self.sigma_re.shape != (n, n) or self.sigma_im.shape != (n, n):
            raise ValueError("sigma blocks must match the matrix shape")
        if np.any(self.sigma_re < 0) or np.any(self.sigma_im < 0):
            raise ValueError("uncertainties must be nonnegative")
        if self.role not in ("hamiltonian", "overlap"):
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def exact(role: str, values: np.ndarray, meta: dict | None = None) -> "MatrixEstimate":
        values = np.asarray(values, dtype=complex)
        zero = np.zeros(values.shape, dtype=float)
        return MatrixEstimate(role, values, zero, zero.copy(), meta or {})

    def to_json(self) -> str:
        return json.dumps({
            "role": self.role, "n": self.n,
            "re": np.real(self.values).tolist(),
            "im": np.imag(self.values).tolist(),
            "sigma_re": self.sigma_re.tolist(),
            "sigma_im": self.sigma_im.tolist(),
            "meta": _jsonable(self.meta),
        })

    @staticmethod
    def from_json(text: str) -> "MatrixEstimate":
        d = json.loads(text)
        values = np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)
        return MatrixEstimate(d["role"], values, np.array(d["sigma_re"]),
                              np.array(d["sigma_im"]), d.get("meta", {}))

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def load(path: Path) -> "MatrixEstimate":
        return MatrixEstimate.from_json(Path(path).read_text())


@dataclass(frozen=True)
class SqdResult:
    """Ground-state energy from diagonalizing within sampled basis states."""

    energy: float
    n_basis: int
    shots: int
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.energy):
            raise ValueError("energy must be finite")


@dataclass
class CorrectionTerms:
    """Overlaps assembling the 0QP-admixture correction.

    ``num[j]`` estimates <0|U|phi_j>, ``wvec[i]`` estimates <phi_i|U|0>, and
    ``den`` estimates <0|U|0> (all carrying the common test prefactor, which
    cancels in the quotient-times-product assembly).
    """

    num: np.ndarray
    wvec: np.ndarray
    den: complex
    sigma_num: np.ndarray
    sigma_wvec: np.ndarray
    sigma_den: np.ndarray

    def __post_init__(self):
        self.num = np.asarray(self.num, dtype=complex)
        self.wvec = np.asarray(self.wvec, dtype=complex)
        self.sigma_num = np.asarray(self.sigma_num, dtype=float)
        self.sigma_wvec = np.asarray(self.sigma_wvec, dtype=float)
        self.sigma_den = np.asarray(self.sigma_den, dtype=float)
        if self.sigma_num.shape != self.num.shape + (2,):
            raise ValueError("sigma_num must hold (re, im) pairs per element")
        if self.sigma_wvec.shape != self.wvec.shape + (2,):
            raise ValueError("sigma_wvec must hold (re, im) pairs per element")
        if self.sigma_den.shape != (2,):
            raise ValueError("sigma_den must hold (re, im)")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
