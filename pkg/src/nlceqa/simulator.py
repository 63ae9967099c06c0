"""Circuit representation and execution backends.

Two backends share one gate set: an exact statevector path for noiseless
runs and a density-matrix path that applies a local depolarizing channel on
every gate's support. Sampling draws from the exact Born distribution with a
counter-based (Philox) generator, so every result is reproducible from a
64-bit seed.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .pauli import Observable, PauliString

REFERENCE_P1 = 0.003
REFERENCE_P2 = 0.01

_H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_X_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)
_CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))


def derive_seed(master: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named circuit, independent of execution order."""
    digest = hashlib.blake2b(f"{master}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class Gate:
    """One gate: kind in {h, x, cnot, pauliexp}, plus optional extra controls.

    ``pauliexp`` implements exp(i * angle * P) with P the Pauli letters on
    ``qubits``. ``cnot`` reads qubits as (control, target). ``controls`` holds
    promotion controls added when a circuit is turned into its controlled
    version.
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    pauli: str | None = None
    controls: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("h", "x", "cnot", "pauliexp"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind in ("h", "x") and len(self.qubits) != 1:
            raise ValueError(f"{self.kind} acts on one qubit")
        if self.kind == "cnot" and len(self.qubits) != 2:
            raise ValueError("cnot takes (control, target)")
        if self.kind == "pauliexp":
            if self.pauli is None or self.angle is None:
                raise ValueError("pauliexp needs letters and an angle")
            if len(self.pauli) != len(self.qubits) or "I" in self.pauli:
                raise ValueError("pauliexp letters must cover exactly its qubits")
            if not math.isfinite(self.angle):
                raise ValueError("angle must be finite")
        if len(set(self.qubits + self.controls)) != len(self.qubits) + len(self.controls):
            raise ValueError("repeated qubit in gate")

    @property
    def support(self) -> tuple[int, ...]:
        return self.controls + self.qubits

    def shifted(self, offset: int) -> "Gate":
        return replace(self, qubits=tuple(q + offset for q in self.qubits),
                       controls=tuple(q + offset for q in self.controls))


def gate_h(q: int) -> Gate:
    return Gate("h", (q,))


def gate_x(q: int) -> Gate:
    return Gate("x", (q,))


def gate_cnot(control: int, target: int) -> Gate:
    return Gate("cnot", (control, target))


def gate_pauliexp(qubits: tuple[int, ...], letters: str, angle: float) -> Gate:
    return Gate("pauliexp", tuple(qubits), angle=float(angle), pauli=letters)


@dataclass
class Circuit:
    """Ordered gate list on ``n`` qubits with an optional terminal basis layer.

    ``label`` identifies the circuit for unique-circuit accounting and for
    seed derivation; circuits with equal labels are the same measurement.
    """

    n: int
    gates: list[Gate] = field(default_factory=list)
    basis_layer: list[Gate] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        for g in self.gates + self.basis_layer:
            if any(q >= self.n or q < 0 for q in g.support):
                raise ValueError(f"gate {g} outside {self.n} qubits")

    def all_gates(self) -> list[Gate]:
        return self.gates + self.basis_layer

    def gate_count(self) -> int:
        return len(self.gates) + len(self.basis_layer)

    def to_json(self) -> str:
        def enc(g: Gate) -> dict:
            d = {"kind": g.kind, "qubits": list(g.qubits)}
            if g.angle is not None:
                d["angle"] = g.angle
            if g.pauli is not None:
                d["pauli"] = g.pauli
            if g.controls:
                d["controls"] = list(g.controls)
            return d

        return json.dumps({"n": self.n, "gates": [enc(g) for g in self.gates],
                           "basis_layer": [enc(g) for g in self.basis_layer],
                           "label": self.label})

    @staticmethod
    def from_json(text: str) -> "Circuit":
        data = json.loads(text)

        def dec(d: dict) -> Gate:
            return Gate(d["kind"], tuple(d["qubits"]), d.get("angle"),
                        d.get("pauli"), tuple(d.get("controls", ())))

        return Circuit(data["n"], [dec(d) for d in data["gates"]],
                       [dec(d) for d in data.get("basis_layer", [])],
                       data.get("label", ""))


def controlled_circuit(circ: Circuit, control: int, n_total: int) -> Circuit:
    """Promote every gate to its controlled version on ``control``."""
    gates = [replace(g, controls=(control,) + g.controls) for g in circ.gates]
    return Circuit(n_total, gates, label=f"C[{circ.label}]")


@dataclass(frozen=True)
class NoiseModel:
    """Gate-level depolarization rates, per single- and two-qubit gate."""

    p1: float = REFERENCE_P1
    p2: float = REFERENCE_P2
    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ValueError("depolarization rates must lie in [0, 1]")
        if self.scale < 0.0:
            raise ValueError("noise scale must be nonnegative")

    def rate(self, support_size: int) -> float:
        p = self.p1 if support_size == 1 else self.p2
        r = p * self.scale
        if r > 1.0:
            raise ValueError(f"scaled depolarization rate {r} exceeds 1")
        return r

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0 or (self.p1 == 0.0 and self.p2 == 0.0)


class QuantumState:
    """Pure amplitude vector or density matrix on n qubits."""

    __slots__ = ("data", "n")

    def __init__(self, data: np.ndarray, n: int | None = None):
        data = np.asarray(data, dtype=complex)
        if data.ndim == 1:
            dim = data.shape[0]
        elif data.ndim == 2 and data.shape[0] == data.shape[1]:
            dim = data.shape[0]
        else:
            raise ValueError("state must be a vector or a square matrix")
        inferred = dim.bit_length() - 1
        if 1 << inferred != dim:
            raise ValueError("dimension is not a power of two")
        if n is not None and n != inferred:
            raise ValueError("qubit count does not match dimension")
        self.data = data
        self.n = inferred

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @classmethod
    def computational(cls, n: int, index: int = 0) -> "QuantumState":
        vec = np.zeros(1 << n, dtype=complex)
        vec[index] = 1.0
        return cls(vec)

    @classmethod
    def maximally_mixed(cls, n: int) -> "QuantumState":
        dim = 1 << n
        return cls(np.eye(dim, dtype=complex) / dim)

    def to_density(self) -> "QuantumState":
        if self.is_pure:
            return QuantumState(np.outer(self.data, self.data.conj()))
        return QuantumState(self.data.copy())

    def probabilities(self) -> np.ndarray:
        if self.is_pure:
            p = np.abs(self.data) ** 2
        else:
            p = np.real(np.diag(self.data)).copy()
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"probabilities sum to {total}")
        return p / total

    def validate(self, tol: float = 1e-10) -> None:
        if self.is_pure:
            if abs(np.linalg.norm(self.data) - 1.0) > tol:
                raise ValueError("pure state not normalized")
            return
        if abs(np.trace(self.data) - 1.0) > tol:
            raise ValueError("density matrix trace differs from 1")
        if np.max(np.abs(self.data - self.data.conj().T)) > tol:
            raise ValueError("density matrix not Hermitian")
        if np.min(np.linalg.eigvalsh(self.data)) < -tol:
            raise ValueError("density matrix not positive")


def _full_string(n: int, qubits: tuple[int, ...], letters: str) -> PauliString:
    return PauliString.from_support(n, qubits, letters)


@functools.lru_cache(maxsize=4096)
def _pauli_masks(n: int, qubits: tuple[int, ...], letters: str):
    """Permutation and phase arrays of a Pauli string; cached, treat as read-only."""
    ps = _full_string(n, qubits, letters)
    idx = np.arange(1 << n, dtype=np.uint64)
    sign = np.where(np.bitwise_count(idx & np.uint64(ps.z_mask())) % 2 == 0, 1.0, -1.0)
    n_y = letters.count("Y")
    return idx ^ np.uint64(ps.x_mask()), (1j ** n_y) * sign


def _gate_matrix(gate: Gate) -> np.ndarray:
    """Dense unitary on gate.controls + gate.qubits."""
    if gate.kind == "h":
        mat = _H_MATRIX
    elif gate.kind == "x":
        mat = _X_MATRIX
    elif gate.kind == "cnot":
        mat = _CNOT_MATRIX
    else:
        k = len(gate.qubits)
        p = np.array([[1.0]], dtype=complex)
        for c in gate.pauli:
            p = np.kron(p, {"X": _X_MATRIX,
                            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
                            "Z": np.array([[1, 0], [0, -1]], dtype=complex)}[c])
        mat = math.cos(gate.angle) * np.eye(1 << k) + 1j * math.sin(gate.angle) * p
    for _ in gate.controls:
        dim = mat.shape[0]
        full = np.eye(2 * dim, dtype=complex)
        full[dim:, dim:] = mat
        mat = full
    return mat


def _apply_matrix_vec(psi: np.ndarray, mat: np.ndarray, targets: tuple[int, ...],
                      n: int) -> np.ndarray:
    k = len(targets)
    t = psi.reshape((2,) * n)
    m = mat.reshape((2,) * (2 * k))
    out = np.tensordot(m, t, axes=(tuple(range(k, 2 * k)), targets))
    return np.moveaxis(out, tuple(range(k)), targets).reshape(-1)


def apply_gate_vec(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if gate.kind == "pauliexp" and not gate.controls:
        perm, phase = _pauli_masks(n, gate.qubits, gate.pauli)
        return math.cos(gate.angle) * psi + 1j * math.sin(gate.angle) * (phase * psi)[perm]
    if gate.kind == "x" and not gate.controls:
        perm, _ = _pauli_masks(n, gate.qubits, "X")
        return psi[perm]
    if gate.kind == "cnot" and not gate.controls:
        c, t = gate.qubits
        idx = np.arange(1 << n, dtype=np.uint64)
        cbit = (idx >> np.uint64(n - 1 - c)) & np.uint64(1)
        perm = idx ^ (cbit << np.uint64(n - 1 - t))
        return psi[perm]
    return _apply_matrix_vec(psi, _gate_matrix(gate), gate.support, n)


def apply_gates_columns(cols: np.ndarray, gates: list[Gate], n: int) -> np.ndarray:
    """Apply a gate sequence to every column of a (2^n, m) matrix at once."""
    for gate in gates:
        if gate.kind == "pauliexp" and not gate.controls:
            perm, phase = _pauli_masks(n, gate.qubits, gate.pauli)
            cols = (math.cos(gate.angle) * cols
                    + 1j * math.sin(gate.angle) * (phase[:, None] * cols)[perm])
        elif gate.kind == "x" and not gate.controls:
            perm, _ = _pauli_masks(n, gate.qubits, "X")
            cols = cols[perm]
        elif gate.kind == "cnot" and not gate.controls:
            c, t = gate.qubits
            idx = np.arange(1 << n, dtype=np.uint64)
            cbit = (idx >> np.uint64(n - 1 - c)) & np.uint64(1)
            cols = cols[idx ^ (cbit << np.uint64(n - 1 - t))]
        else:
            m = cols.shape[1]
            k = len(gate.support)
            t = cols.reshape((2,) * n + (m,))
            mat = _gate_matrix(gate).reshape((2,) * (2 * k))
            out = np.tensordot(mat, t, axes=(tuple(range(k, 2 * k)), gate.support))
            cols = np.moveaxis(out, tuple(range(k)), gate.support).reshape(1 << n, m)
    return cols


def _pauli_rows(mat: np.ndarray, perm: np.ndarray, phase: np.ndarray) -> np.ndarray:
    return (phase[:, None] * mat)[perm]


def _pauli_cols(mat: np.ndarray, perm: np.ndarray, phase: np.ndarray) -> np.ndarray:
    return mat[:, perm] * phase[None, :]


def apply_gate_dm(rho: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if gate.kind == "pauliexp" and not gate.controls:
        c, s = math.cos(gate.angle), math.sin(gate.angle)
        perm, phase = _pauli_masks(n, gate.qubits, gate.pauli)
        p_rho = _pauli_rows(rho, perm, phase)
        rho_p = _pauli_cols(rho, perm, phase)
        p_rho_p = _pauli_cols(p_rho, perm, phase)
        return c * c * rho + s * s * p_rho_p + 1j * c * s * (p_rho - rho_p)
    if gate.kind in ("x", "cnot") and not gate.controls:
        if gate.kind == "x":
            perm, _ = _pauli_masks(n, gate.qubits, "X")
        else:
            c, t = gate.qubits
            idx = np.arange(1 << n, dtype=np.uint64)
            cbit = (idx >> np.uint64(n - 1 - c)) & np.uint64(1)
            perm = idx ^ (cbit << np.uint64(n - 1 - t))
        return rho[perm][:, perm]
    mat = _gate_matrix(gate)
    targets = gate.support
    k = len(targets)
    t = rho.reshape((2,) * (2 * n))
    m = mat.reshape((2,) * (2 * k))
    out = np.tensordot(m, t, axes=(tuple(range(k, 2 * k)), targets))
    out = np.moveaxis(out, tuple(range(k)), targets)
    col_axes = tuple(n + q for q in targets)
    out = np.tensordot(m.conj(), out, axes=(tuple(range(k, 2 * k)), col_axes))
    out = np.moveaxis(out, tuple(range(k)), col_axes)
    return out.reshape(rho.shape)


def depolarize(rho: np.ndarray, qubits: tuple[int, ...], p: float, n: int) -> np.ndarray:
    """Local depolarizing channel on ``qubits``: keep with 1-p, else replace
    the marginal on the support by the maximally mixed state."""
    if p == 0.0:
        return rho
    k = len(qubits)
    rest = tuple(q for q in range(n) if q not in qubits)
    order = tuple(qubits) + rest
    t = rho.reshape((2,) * (2 * n))
    t = np.transpose(t, order + tuple(n + q for q in order))
    t = t.reshape(1 << k, 1 << (n - k), 1 << k, 1 << (n - k))
    reduced = np.einsum("aiaj->ij", t)
    mixed = np.einsum("ab,ij->aibj", np.eye(1 << k) / (1 << k), reduced)
    mixed = mixed.reshape((2,) * (2 * n))
    inv = np.argsort(order + tuple(n + q for q in order))
    mixed = np.transpose(mixed, inv).reshape(rho.shape)
    return (1.0 - p) * rho + p * mixed


def _noise_applications(gate: Gate) -> list[tuple[int, ...]]:
    """Support tuples receiving a depolarizing application after this gate.

    Gates on one or two qubits get one application on their support. Wider
    gates are charged per CNOT of the standard Pauli-exponential decomposition,
    one two-qubit application per ladder pair, down and up."""
    s = gate.support
    if len(s) <= 2:
        return [s]
    pairs = [(s[i], s[i + 1]) for i in range(len(s) - 1)]
    return pairs + pairs[::-1]


def run_pure(circ: Circuit, init: QuantumState | None = None) -> QuantumState:
    """Exact unitary evolution of a pure state."""
    if init is None:
        init = QuantumState.computational(circ.n)
    if not init.is_pure:
        raise ValueError("run_pure needs a pure state")
    if init.data.shape[0] != 1 << circ.n:
        raise ValueError("state dimension does not match circuit")
    psi = init.data.copy()
    for gate in circ.all_gates():
        psi = apply_gate_vec(psi, gate, circ.n)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise RuntimeError(f"unitarity violated, norm {norm}")
    return QuantumState(psi)


def run_noisy(circ: Circuit, init: QuantumState | None = None,
              noise: NoiseModel | None = None) -> QuantumState:
    """Density-matrix evolution with a depolarizing channel after every gate."""
    if init is None:
        init = QuantumState.computational(circ.n)
    if init.data.shape[0] != 1 << circ.n:
        raise ValueError("state dimension does not match circuit")
    noise = noise or NoiseModel(0.0, 0.0)
    rho = init.to_density().data
    for gate in circ.all_gates():
        rho = apply_gate_dm(rho, gate, circ.n)
        for support in _noise_applications(gate):
            rho = depolarize(rho, support, noise.rate(len(support)), circ.n)
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-8:
        raise RuntimeError(f"trace drifted to {tr}")
    return QuantumState(rho)


def run_circuit(circ: Circuit, init: QuantumState | None = None,
                noise: NoiseModel | None = None) -> QuantumState:
    """Dispatch to the pure backend unless noise is actually present."""
    if noise is None or noise.is_zero:
        if init is None or init.is_pure:
            return run_pure(circ, init)
    return run_noisy(circ, init, noise)


@dataclass(frozen=True)
class MeasurementRecord:
    """One estimated expectation value with its shot-noise uncertainty."""

    value: float
    shots: int
    sigma: float
    label: str = ""
    seed: int = 0


def eotm(mean: float, shots: int) -> float:
    """Error on the mean of a +-1 observable, sqrt((1 - <P>^2) / M)."""
    return math.sqrt(max(1.0 - mean * mean, 0.0) / shots)


def measurement_basis(obs: Observable) -> dict[int, str]:
    """Per-qubit measurement basis for a qubit-wise commuting group.

    Raises ValueError when two strings need different bases on one qubit;
    such groups must be split into separate circuits.
    """
    basis: dict[int, str] = {}
    for _, string in obs.terms:
        for q, c in enumerate(string.letters):
            if c == "I":
                continue
            if basis.setdefault(q, c) != c:
                raise ValueError(
                    f"strings not measurable in one basis (qubit {q}: "
                    f"{basis[q]} vs {c})")
    return basis


def basis_rotation_gates(basis: dict[int, str]) -> list[Gate]:
    """Gates rotating the given per-qubit bases onto Z before readout."""
    gates: list[Gate] = []
    for q in sorted(basis):
        letter = basis[q]
        if letter == "X":
            gates.append(gate_h(q))
        elif letter == "Y":
            gates.append(gate_pauliexp((q,), "Z", math.pi / 4))
            gates.append(gate_h(q))
    return gates


def _support_mask(n: int, string: PauliString) -> np.uint64:
    m = 0
    for q in string.support:
        m |= 1 << (n - 1 - q)
    return np.uint64(m)


def string_sign_vector(n: int, string: PauliString) -> np.ndarray:
    """Post-rotation +-1 outcome of one Pauli string for every basis index."""
    idx = np.arange(1 << n, dtype=np.uint64)
    return np.where(np.bitwise_count(idx & _support_mask(n, string)) % 2 == 0, 1.0, -1.0)


def sample_bitstrings(state: QuantumState, shots: int, seed: int = 0) -> np.ndarray:
    """Born-distributed computational-basis samples, as integer indices."""
    if shots < 1:
        raise ValueError("need at least one shot")
    probs = state.probabilities()
    rng = rng_from_seed(seed)
    return rng.choice(probs.shape[0], size=shots, p=probs)


def sample_expectation(state: QuantumState, obs: Observable, shots: int,
                       seed: int = 0, label: str = "") -> MeasurementRecord:
    """Sampled expectation of a one-basis group, with per-string error on the mean.

    The state is rotated into the group's measurement basis, ``shots``
    outcomes are drawn from the exact Born distribution, and each string's
    sample mean carries sigma = sqrt((1 - <P>^2)/M). The group value combines
    strings linearly with root-sum-square sigma. Deterministic given ``seed``.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    basis = measurement_basis(obs)
    rotated = _rotate_state(state, basis)
    counts = np.bincount(sample_bitstrings(rotated, shots, seed),
                         minlength=1 << state.n)
    value = 0.0
    var = 0.0
    for coeff, string in obs.terms:
        signs = string_sign_vector(state.n, string)
        mean = float(counts @ signs) / shots
        value += coeff * mean
        var += (coeff * eotm(mean, shots)) ** 2
    return MeasurementRecord(value, shots, math.sqrt(var), label, seed)


def exact_group_expectation(state: QuantumState, obs: Observable) -> float:
    """Infinite-shot limit of sample_expectation (basis rotation then diagonal sum)."""
    basis = measurement_basis(obs)
    rotated = _rotate_state(state, basis)
    probs = rotated.probabilities()
    value = 0.0
    for coeff, string in obs.terms:
        value += coeff * float(probs @ string_sign_vector(state.n, string))
    return value


def _rotate_state(state: QuantumState, basis: dict[int, str]) -> QuantumState:
    gates = basis_rotation_gates(basis)
    if not gates:
        return state
    if state.is_pure:
        psi = state.data.copy()
        for g in gates:
            psi = apply_gate_vec(psi, g, state.n)
        return QuantumState(psi)
    rho = state.data.copy()
    for g in gates:
        rho = apply_gate_dm(rho, g, state.n)
    return QuantumState(rho)
