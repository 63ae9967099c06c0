"""Pauli-string algebra, TFIM Hamiltonians, exact diagonalization, analytic dispersion.

Qubit convention: qubit 0 is the most significant bit of a computational basis
index, so basis index b on n qubits reads as the bitstring b_0 b_1 ... b_{n-1}.
Site index equals qubit index; ladder sites are enumerated rung-major,
(cell 0, leg 0), (cell 0, leg 1), (cell 1, leg 0), ...
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PAULI_LETTERS = "IXYZ"

# single-qubit products: (a, b) -> (phase, c) with sigma_a sigma_b = phase * sigma_c
_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """A phase-free tensor product of single-qubit Pauli operators."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in PAULI_LETTERS for c in self.letters):
            raise ValueError(f"invalid Pauli string {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, c in enumerate(self.letters) if c != "I")

    def x_mask(self) -> int:
        """Bits flipped by this string (X and Y letters)."""
        m = 0
        for q, c in enumerate(self.letters):
            if c in "XY":
                m |= 1 << (self.n - 1 - q)
        return m

    def z_mask(self) -> int:
        """Bits contributing a sign (Z and Y letters)."""
        m = 0
        for q, c in enumerate(self.letters):
            if c in "ZY":
                m |= 1 << (self.n - 1 - q)
        return m

    @staticmethod
    def single(n: int, qubit: int, letter: str) -> "PauliString":
        if not 0 <= qubit < n:
            raise ValueError("qubit out of range")
        return PauliString("I" * qubit + letter + "I" * (n - qubit - 1))

    @staticmethod
    def from_support(n: int, qubits: tuple[int, ...], letters: str) -> "PauliString":
        chars = ["I"] * n
        for q, c in zip(qubits, letters, strict=True):
            chars[q] = c
        return PauliString("".join(chars))

    def __mul__(self, other: "PauliString") -> tuple[complex, "PauliString"]:
        if self.n != other.n:
            raise ValueError("length mismatch")
        phase = 1 + 0j
        out = []
        for a, b in zip(self.letters, other.letters):
            ph, c = _PRODUCT[(a, b)]
            phase *= ph
            out.append(c)
        return phase, PauliString("".join(out))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to a state vector, P|psi>, in O(2^n)."""
        xm, zm = self.x_mask(), self.z_mask()
        n_y = sum(c == "Y" for c in self.letters)
        idx = np.arange(psi.shape[0], dtype=np.uint64)
        ph = np.where(np.bitwise_count(idx & np.uint64(zm)) % 2 == 0, 1.0, -1.0)
        out = np.empty_like(psi, dtype=complex)
        out[idx ^ np.uint64(xm)] = (1j ** n_y) * ph * psi
        return out

    def dense(self) -> np.ndarray:
        dim = 1 << self.n
        xm, zm = self.x_mask(), self.z_mask()
        n_y = sum(c == "Y" for c in self.letters)
        idx = np.arange(dim, dtype=np.uint64)
        ph = np.where(np.bitwise_count(idx & np.uint64(zm)) % 2 == 0, 1.0, -1.0)
        mat = np.zeros((dim, dim), dtype=complex)
        mat[idx ^ np.uint64(xm), idx] = (1j ** n_y) * ph
        return mat

    def __str__(self) -> str:
        return self.letters


@dataclass(frozen=True)
class Observable:
    """Weighted sum of Pauli strings with real coefficients (Hermitian)."""

    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("empty observable")
        n = self.terms[0][1].n
        merged: dict[str, float] = {}
        order: list[str] = []
        for coeff, string in self.terms:
            c = float(coeff)
            if not math.isfinite(c):
                raise ValueError("non-finite coefficient")
            if string.n != n:
                raise ValueError("inconsistent string lengths")
            if string.letters not in merged:
                order.append(string.letters)
                merged[string.letters] = 0.0
            merged[string.letters] += c
        clean = tuple(
            (merged[s], PauliString(s)) for s in order if merged[s] != 0.0
        )
        if not clean:
            # fully cancelled sum, keep an explicit zero on the identity
            clean = ((0.0, PauliString("I" * n)),)
        object.__setattr__(self, "terms", clean)

    @property
    def n(self) -> int:
        return self.terms[0][1].n

    def coeff_norm(self) -> float:
        """Sum of absolute Pauli coefficients, an upper bound on the spectral norm."""
        return float(sum(abs(c) for c, _ in self.terms))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi, dtype=complex)
        for coeff, string in self.terms:
            out += coeff * string.apply(psi)
        return out

    def dense(self) -> np.ndarray:
        dim = 1 << self.n
        mat = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim, dtype=np.uint64)
        for coeff, string in self.terms:
            xm = np.uint64(string.x_mask())
            zm = np.uint64(string.z_mask())
            n_y = sum(c == "Y" for c in string.letters)
            ph = np.where(np.bitwise_count(idx & zm) % 2 == 0, 1.0, -1.0)
            mat[idx ^ xm, idx] += coeff * (1j ** n_y) * ph
        return mat

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(self.terms + other.terms)

    def scaled(self, factor: float) -> "Observable":
        return Observable(tuple((factor * c, s) for c, s in self.terms))

    def to_json(self) -> str:
        return json.dumps([{"coeff": c, "string": s.letters} for c, s in self.terms])

    @staticmethod
    def from_json(text: str) -> "Observable":
        data = json.loads(text)
        return Observable(tuple((d["coeff"], PauliString(d["string"])) for d in data))


@dataclass(frozen=True)
class ClusterSpec:
    """Geometry and couplings of one finite cluster.

    ``edges`` lists nearest-neighbour site pairs. Chains of length N carry N-1
    edges; an L x 2 ladder carries 2(L-1) leg edges plus L rung edges.
    """

    geometry: str
    n_sites: int
    edges: tuple[tuple[int, int], ...]
    j: float
    h: float
    hl: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("cluster needs at least one site")
        if self.h <= 0:
            raise ValueError("transverse field must be positive")
        for a, b in self.edges:
            if not (0 <= a < self.n_sites and 0 <= b < self.n_sites) or a == b:
                raise ValueError(f"bad edge ({a},{b})")

    @property
    def cells(self) -> int:
        """Unit cells along the expansion direction (sites for chains, rungs for ladders)."""
        return self.n_sites // 2 if self.geometry == "ladder" else self.n_sites

    @property
    def band_count(self) -> int:
        return 2 if self.geometry == "ladder" else 1

    def site_reflections(self) -> list[tuple[int, ...]]:
        """Site permutations generating the spatial reflection symmetries."""
        n = self.n_sites
        if self.geometry == "ladder":
            cells = self.cells
            leg = tuple(2 * (cells - 1 - (s // 2)) + (s % 2) for s in range(n))
            centerline = tuple(s ^ 1 for s in range(n))
            return [leg, centerline]
        return [tuple(n - 1 - s for s in range(n))]


def chain_cluster(length: int, j: float, h: float = 1.0, hl: float = 0.0) -> ClusterSpec:
    edges = tuple((s, s + 1) for s in range(length - 1))
    return ClusterSpec("chain", length, edges, j, h, hl, label=f"chain{length}")


def ladder_cluster(rungs: int, j: float, h: float = 1.0, hl: float = 0.0) -> ClusterSpec:
    """Two-leg ladder with ``rungs`` unit cells, sites indexed rung-major."""
    legs = tuple((2 * c + a, 2 * (c + 1) + a) for c in range(rungs - 1) for a in (0, 1))
    rung_edges = tuple((2 * c, 2 * c + 1) for c in range(rungs))
    return ClusterSpec("ladder", 2 * rungs, legs + rung_edges, j, h, hl,
                       label=f"ladder{rungs}x2")


def disconnected_union(a: ClusterSpec, b: ClusterSpec) -> ClusterSpec:
    """Disjoint union of two clusters (no connecting edges), b's sites shifted."""
    if (a.j, a.h, a.hl) != (b.j, b.h, b.hl):
        raise ValueError("couplings must match")
    shifted = tuple((u + a.n_sites, v + a.n_sites) for u, v in b.edges)
    return ClusterSpec("union", a.n_sites + b.n_sites, a.edges + shifted,
                       a.j, a.h, a.hl, label=f"{a.label}+{b.label}")


def build_h0(spec: ClusterSpec) -> Observable:
    """Unperturbed part, -h sum_j Z_j."""
    n = spec.n_sites
    return Observable(tuple((-spec.h, PauliString.single(n, q, "Z")) for q in range(n)))


def build_perturbation(spec: ClusterSpec) -> Observable:
    """Perturbing part, -J sum_<vu> X_v X_u - h_l sum_v X_v (zero terms dropped)."""
    n = spec.n_sites
    terms: list[tuple[float, PauliString]] = []
    if spec.j != 0.0:
        for a, b in spec.edges:
            terms.append((-spec.j, PauliString.from_support(n, (a, b), "XX")))
    if spec.hl != 0.0:
        for q in range(n):
            terms.append((-spec.hl, PauliString.single(n, q, "X")))
    if not terms:
        terms.append((0.0, PauliString("I" * n)))
    return Observable(tuple(terms))


def build_tfim(spec: ClusterSpec) -> Observable:
    """Full transverse-field Ising Hamiltonian on the cluster.

    Term order is fixed: XX bond terms, then Z terms, then X terms. The
    variational ansatz inherits this ordering.
    """
    n = spec.n_sites
    terms: list[tuple[float, PauliString]] = []
    if spec.j != 0.0:
        for a, b in spec.edges:
            terms.append((-spec.j, PauliString.from_support(n, (a, b), "XX")))
    for q in range(n):
        terms.append((-spec.h, PauliString.single(n, q, "Z")))
    if spec.hl != 0.0:
        for q in range(n):
            terms.append((-spec.hl, PauliString.single(n, q, "X")))
    return Observable(tuple(terms))


def analytic_dispersion(j: float, k, h: float = 1.0):
    """Closed-form 1QP dispersion of the infinite TFIM chain, 2 sqrt(1 + J^2 - 2 J cos k).

    Evaluated in the cancellation-free half-angle form
    (1 - J)^2 + 4 J sin^2(k/2). Stated for h = 1; other transverse fields
    scale linearly, so the J/h ratio is used. Vectorized over ``k``.
    """
    r = j / h
    gap = (1.0 - r) ** 2 + 4.0 * r * np.sin(np.asarray(k) / 2.0) ** 2
    val = 2.0 * h * np.sqrt(np.maximum(gap, 0.0))
    return float(val) if np.isscalar(k) else val


def pauli_expectation(state, obs: Observable) -> float:
    """Exact expectation of ``obs`` in a pure state vector or a density matrix."""
    arr = np.asarray(getattr(state, "data", state))
    if any(abs(np.imag(c)) > 0 for c, _ in obs.terms):  # pragma: no cover
        raise ValueError("observable must be Hermitian")
    if arr.ndim == 1:
        return float(np.real(np.vdot(arr, obs.apply(arr))))
    if arr.ndim == 2:
        val = 0.0 + 0.0j
        for coeff, string in obs.terms:
            # tr(rho P) with P a phased permutation: sum_b rho[b, b^x] * phase(b)
            dim = arr.shape[0]
            idx = np.arange(dim, dtype=np.uint64)
            ph = np.where(
                np.bitwise_count(idx & np.uint64(string.z_mask())) % 2 == 0, 1.0, -1.0)
            n_y = sum(c == "Y" for c in string.letters)
            col = idx ^ np.uint64(string.x_mask())
            val += coeff * (1j ** n_y) * np.sum(arr[col, idx] * ph)
        return float(np.real(val))
    raise ValueError("state must be a vector or a square matrix")


def parity_operator(n: int) -> Observable:
    """Global spin-flip parity, the product of all Z."""
    return Observable(((1.0, PauliString("Z" * n)),))


class DegenerateGroundStateError(RuntimeError):
    """Ground state degenerate beyond tolerance; adiabatic labeling undefined."""


class SectorTrackingError(RuntimeError):
    """Adiabatic continuation could not isolate the 1QP sector."""


@dataclass
class EDResult:
    """Full spectrum plus the adiabatically identified 0QP/1QP eigenpairs."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    e0: float
    gs: np.ndarray
    qp1_energies: np.ndarray
    qp1_states: np.ndarray
    spec: ClusterSpec = field(repr=False, default=None)


def single_flip_indices(n: int) -> np.ndarray:
    """Basis indices of the Hamming-weight-one states, ordered by flipped site."""
    return np.array([1 << (n - 1 - q) for q in range(n)], dtype=np.int64)


def exact_solve(obs: Observable, spec: ClusterSpec, tracking_steps: int = 20) -> EDResult:
    """Diagonalize ``obs`` and identify the 0QP/1QP sectors by adiabatic continuation.

    The perturbation is ramped from the diagonal -h sum Z part to the full
    Hamiltonian in ``tracking_steps`` linear steps; at each step the tracked
    subspace is matched to the new eigenvectors by maximal overlap. This keeps
    the labeling well defined through the strong mixing of the degenerate
    unperturbed 1QP level.
    """
    n = spec.n_sites
    if n > 12:
        raise ValueError("exact diagonalization limited to 12 sites")
    if obs.n != n:
        raise ValueError("observable size does not match cluster")
    h0 = build_h0(spec)
    v = obs + h0.scaled(-1.0)
    h0_mat = h0.dense()
    v_mat = v.dense()
    dim = 1 << n

    gs_vec = np.zeros(dim, dtype=complex)
    gs_vec[0] = 1.0
    qp_basis = np.zeros((dim, n), dtype=complex)
    qp_basis[single_flip_indices(n), np.arange(n)] = 1.0

    evals = evecs = None
    for step in range(1, tracking_steps + 1):
        s = step / tracking_steps
        evals, evecs = np.linalg.eigh(h0_mat + s * v_mat)
        gs_w = np.abs(evecs.conj().T @ gs_vec) ** 2
        gs_idx = int(np.argmax(gs_w))
        qp_w = np.sum(np.abs(evecs.conj().T @ qp_basis) ** 2, axis=1)
        qp_w[gs_idx] = -1.0
        qp_idx = np.argsort(qp_w)[-n:]
        captured = float(np.sum(qp_w[qp_idx]))
        if captured < n - 0.25 or gs_w[gs_idx] < 0.75:
            raise SectorTrackingError(
                f"sector leakage at ramp s={s:.3f} (captured weight {captured:.3f})")
        gs_vec = evecs[:, gs_idx]
        keep = qp_idx[np.argsort(evals[qp_idx])]
        qp_basis = evecs[:, keep]
        qp_energies = evals[keep]

    if len(evals) > 1 and evals[1] - evals[0] < 1e-9 * spec.h:
        raise DegenerateGroundStateError(
            f"ground-state gap {evals[1] - evals[0]:.3e} below tolerance")
    e0 = float(evals[0])
    return EDResult(evals, evecs, e0, gs_vec, np.asarray(qp_energies, dtype=float),
                    qp_basis, spec)
