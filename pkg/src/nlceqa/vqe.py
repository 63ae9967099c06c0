"""Classical training of the variational circuit.

Two cost functions: the 1QP block-decoupling variance cost and the plain
ground-state energy. Both are evaluated exactly on statevectors, so the
optimizer never sees sampling noise; measurements enter the pipeline only
after training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .ansatz import HvaAnsatz
from .pauli import ClusterSpec, Observable, build_tfim, single_flip_indices
from .simulator import Circuit, _pauli_masks, apply_gates_columns, rng_from_seed

_FD_STEP = 1e-5
_GRAD_TOL = 1e-7
_MAX_ITER = 5000


@dataclass(frozen=True)
class CostSpec:
    """What to minimize: cost kind, Hamiltonian, and cluster.

    ``gs_weight`` adds the ground-state energy to the variance cost so a
    single unitary prepares both sectors (needed when the longitudinal field
    couples them and the overlap-correction phases must cancel).
    """

    kind: str
    spec: ClusterSpec
    gs_weight: float = 0.0
    layers: int | None = None
    observable: Observable = field(default=None)

    def __post_init__(self):
        if self.kind not in ("variance_1qp", "energy_gs"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.gs_weight < 0:
            raise ValueError("ground-state weight must be nonnegative")
        if self.observable is None:
            object.__setattr__(self, "observable", build_tfim(self.spec))

    def ansatz(self) -> HvaAnsatz:
        return HvaAnsatz.for_cluster(self.spec, self.layers)


@dataclass
class TrainResult:
    params: np.ndarray
    cost: float
    iterations: int
    restart: int
    seed: int


def prepared_states(circ: Circuit, n: int, inputs: np.ndarray) -> np.ndarray:
    """Columns U|b> for the given computational basis indices."""
    dim = 1 << n
    cols = np.zeros((dim, len(inputs)), dtype=complex)
    cols[np.asarray(inputs, dtype=np.int64), np.arange(len(inputs))] = 1.0
    return apply_gates_columns(cols, circ.all_gates(), n)


def variance_cost_from_states(states: np.ndarray, obs: Observable) -> float:
    """sum_i <x_i|H^2|x_i> - sum_ij |<x_i|H|x_j>|^2 for the given columns.

    Vanishes exactly when the span of the columns is an invariant subspace
    of the observable, independent of the basis chosen within the span.
    """
    h_states = np.zeros_like(states)
    for i in range(states.shape[1]):
        h_states[:, i] = obs.apply(states[:, i])
    term1 = float(np.sum(np.abs(h_states) ** 2))
    gram = states.conj().T @ h_states
    term2 = float(np.sum(np.abs(gram) ** 2))
    return term1 - term2


class _CachedEvaluator:
    """Mask-precomputed cost evaluation; the optimizer's hot path.

    Holds the permutation/phase arrays of every ansatz gate and Hamiltonian
    term so one cost call is a plain numpy loop with no object construction.
    """

    def __init__(self, cost: CostSpec):
        self.cost = cost
        n = cost.spec.n_sites
        self.n = n
        ansatz = cost.ansatz()
        self.layers = ansatz.layers
        self.gate_masks = []
        for _, string in ansatz.observable.terms:
            letters = "".join(string.letters[q] for q in string.support)
            self.gate_masks.append(_pauli_masks(n, string.support, letters))
        self.h_terms = []
        for coeff, string in cost.observable.terms:
            letters = "".join(string.letters[q] for q in string.support)
            self.h_terms.append((coeff,) + _pauli_masks(n, string.support, letters))
        flips = single_flip_indices(n)
        self.inputs = np.concatenate([flips, [0]])
        self.n_qp = len(flips)

    def states(self, params: np.ndarray) -> np.ndarray:
        dim = 1 << self.n
        cols = np.zeros((dim, len(self.inputs)), dtype=complex)
        cols[self.inputs, np.arange(len(self.inputs))] = 1.0
        k = 0
        for _ in range(self.layers):
            for perm, phase in self.gate_masks:
                th = params[k]
                k += 1
                cols = math.cos(th) * cols + (1j * math.sin(th)) * (phase[:, None] * cols)[perm]
        return cols

    def apply_h(self, cols: np.ndarray) -> np.ndarray:
        out = np.zeros_like(cols)
        for coeff, perm, phase in self.h_terms:
            out += coeff * (phase[:, None] * cols)[perm]
        return out

    def __call__(self, params: np.ndarray) -> float:
        cols = self.states(params)
        h_cols = self.apply_h(cols)
        if self.cost.kind == "energy_gs":
            return float(np.real(np.vdot(cols[:, -1], h_cols[:, -1])))
        qp = cols[:, : self.n_qp]
        h_qp = h_cols[:, : self.n_qp]
        value = float(np.sum(np.abs(h_qp) ** 2) - np.sum(np.abs(qp.conj().T @ h_qp) ** 2))
        if self.cost.gs_weight > 0.0:
            value += self.cost.gs_weight * float(
                np.real(np.vdot(cols[:, -1], h_cols[:, -1])))
        return value

    def _cost_adjoint(self, cols: np.ndarray) -> np.ndarray:
        """Wirtinger derivative dC/d(conj S) of the cost at the final columns."""
        h_cols = self.apply_h(cols)
        lam = np.zeros_like(cols)
        if self.cost.kind == "energy_gs":
            lam[:, -1] = h_cols[:, -1]
            return lam
        qp = cols[:, : self.n_qp]
        h_qp = h_cols[:, : self.n_qp]
        gram = qp.conj().T @ h_qp
        # d/d(conj X) of ||H X||^2 - ||X^dag H X||^2 with Hermitian gram
        lam[:, : self.n_qp] = self.apply_h(h_qp) - 2.0 * (h_qp @ gram)
        if self.cost.gs_weight > 0.0:
            lam[:, -1] = self.cost.gs_weight * h_cols[:, -1]
        return lam

    def gradient(self, params: np.ndarray) -> np.ndarray:
        """Exact reverse-mode gradient, one backward sweep through the gates."""
        cols = self.states(params)
        mu = self._cost_adjoint(cols)
        grad = np.empty(params.size)
        masks = self.gate_masks * self.layers
        for k in range(params.size - 1, -1, -1):
            perm, phase = masks[k]
            th = params[k]
            p_cols = (phase[:, None] * cols)[perm]
            grad[k] = 2.0 * float(np.real(np.sum(mu.conj() * (1j * p_cols))))
            # undo gate k on both carried matrices: U^dag = exp(-i th P)
            cols = math.cos(th) * cols - (1j * math.sin(th)) * p_cols
            mu = math.cos(th) * mu - (1j * math.sin(th)) * (phase[:, None] * mu)[perm]
        return grad


def cost_variance_1qp(params: np.ndarray, cost: CostSpec) -> float:
    """Variance cost of the ansatz at ``params``; adds gs_weight * energy if set."""
    if cost.kind != "variance_1qp":
        cost = CostSpec("variance_1qp", cost.spec, cost.gs_weight, cost.layers,
                        cost.observable)
    return _CachedEvaluator(cost)(np.asarray(params, dtype=float))


def cost_energy(params: np.ndarray, cost: CostSpec) -> float:
    """<0...0| U^dag H U |0...0> at ``params``."""
    if cost.kind != "energy_gs":
        cost = CostSpec("energy_gs", cost.spec, 0.0, cost.layers, cost.observable)
    return _CachedEvaluator(cost)(np.asarray(params, dtype=float))


def _cost_function(cost: CostSpec):
    return _CachedEvaluator(cost)


def _central_gradient(fun, params: np.ndarray, step: float = _FD_STEP) -> np.ndarray:
    grad = np.empty_like(params)
    for i in range(params.size):
        forward = params.copy()
        backward = params.copy()
        forward[i] += step
        backward[i] -= step
        grad[i] = (fun(forward) - fun(backward)) / (2.0 * step)
    return grad


def train(cost: CostSpec, restarts: int = 1, seed: int = 0,
          gradient: str = "adjoint") -> TrainResult:
    """Best-of-restarts quasi-Newton minimization on the exact cost.

    Gradients default to the exact reverse-mode sweep; ``gradient="fd"``
    selects central finite differences instead. Each restart draws its
    initial parameters uniformly in [-0.1, 0.1]; restarts whose cost turns
    non-finite are dropped. Deterministic given ``seed``.
    """
    if restarts < 1:
        raise ValueError("need at least one restart")
    fun = _cost_function(cost)
    if gradient == "adjoint":
        jac = fun.gradient
    elif gradient == "fd":
        jac = lambda p: _central_gradient(fun, p)  # noqa: E731
    else:
        raise ValueError(f"unknown gradient mode {gradient!r}")
    n_params = cost.ansatz().n_params
    best: TrainResult | None = None
    for r in range(restarts):
        rng = rng_from_seed(seed + 0x9E3779B97F4A7C15 * r)
        theta0 = rng.uniform(-0.1, 0.1, size=n_params)
        try:
            res = minimize(fun, theta0, jac=jac, method="BFGS",
                           options={"gtol": _GRAD_TOL, "maxiter": _MAX_ITER})
        except FloatingPointError:  # pragma: no cover
            continue
        if not math.isfinite(res.fun):
            continue
        if best is None or res.fun < best.cost:
            best = TrainResult(np.asarray(res.x), float(res.fun), int(res.nit), r, seed)
    if best is None:
        raise RuntimeError("all restarts failed with non-finite cost")
    if cost.kind == "variance_1qp" and cost.gs_weight == 0.0 and best.cost < -1e-9:
        raise RuntimeError(f"variance cost came out negative: {best.cost}")
    return best


def params_key(model: str, cluster_label: str, kind: str, seed: int) -> str:
    return f"{model}|{cluster_label}|{kind}|{seed}"


def save_params(path: Path, key: str, result: TrainResult) -> None:
    """Append one trained parameter set to a JSON parameter file."""
    path = Path(path)
    store = json.loads(path.read_text()) if path.exists() else {}
    store[key] = {"params": list(map(float, result.params)), "cost": result.cost,
                  "iterations": result.iterations, "restart": result.restart,
                  "seed": result.seed}
    path.write_text(json.dumps(store, indent=1, sort_keys=True))


def load_params(path: Path, key: str) -> TrainResult | None:
    path = Path(path)
    if not path.exists():
        return None
    store = json.loads(path.read_text())
    if key not in store:
        return None
    d = store[key]
    return TrainResult(np.array(d["params"]), d["cost"], d["iterations"],
                       d["restart"], d["seed"])
