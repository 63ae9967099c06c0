"""State-preparation circuits: the layered variational ansatz and the
Trotterized adiabatic sweep.

Both prepare 1QP-sector states when applied to single-flip inputs and the
dressed ground state when applied to the all-zeros input. At zero
longitudinal field every gate commutes with global parity, so the excitation
sector is preserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pauli import ClusterSpec, Observable, build_h0, build_perturbation, build_tfim
from .simulator import Circuit, Gate, gate_pauliexp


def default_layers(n_sites: int) -> int:
    """ceil(N/2) layers, the depth found adequate for TFIM chains."""
    return (n_sites + 1) // 2


def build_hva(obs: Observable, params: np.ndarray) -> Circuit:
    """Layered circuit prod_l prod_j exp(i theta_{j,l} P_j).

    One layer applies a parametrized exponential of every Hamiltonian term in
    the observable's fixed order (for the TFIM builders: XX bonds, then Z,
    then X). The layer count is len(params) / term count.
    """
    terms = obs.terms
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.size == 0 or params.size % len(terms) != 0:
        raise ValueError(
            f"parameter count {params.size} is not a multiple of {len(terms)} terms")
    layers = params.size // len(terms)
    gates: list[Gate] = []
    for l in range(layers):
        for j, (_, string) in enumerate(terms):
            letters = "".join(string.letters[q] for q in string.support)
            gates.append(gate_pauliexp(string.support, letters,
                                       params[l * len(terms) + j]))
    return Circuit(obs.n, gates, label=f"hva{layers}")


@dataclass(frozen=True)
class HvaAnsatz:
    """Variational ansatz bound to one Hamiltonian's term ordering."""

    observable: Observable
    layers: int

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one layer")

    @property
    def n_params(self) -> int:
        return self.layers * len(self.observable.terms)

    def circuit(self, params: np.ndarray) -> Circuit:
        params = np.asarray(params, dtype=float)
        if params.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {params.size}")
        return build_hva(self.observable, params)

    @staticmethod
    def for_cluster(spec: ClusterSpec, layers: int | None = None) -> "HvaAnsatz":
        return HvaAnsatz(build_tfim(spec),
                         default_layers(spec.n_sites) if layers is None else layers)


@dataclass(frozen=True)
class SweepSchedule:
    """Discretized adiabatic ramp: n_steps steps of duration dt each.

    The ramp is linear, evaluated at step midpoints, so s runs from 0 to 1
    over the total sweep time n_steps * dt.
    """

    n_steps: int
    dt: float
    trotter_order: int = 1

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("step duration must be positive")
        if self.trotter_order not in (1, 2):
            raise ValueError("trotter order must be 1 or 2")

    def ramp_values(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) / self.n_steps


def default_step_duration(spec: ClusterSpec) -> float:
    """dt = 1 / (|H0| + |H|) with |.| the sum of absolute Pauli coefficients."""
    return 1.0 / (build_h0(spec).coeff_norm() + build_tfim(spec).coeff_norm())


def _group_gates(obs: Observable, prefactor: float) -> list[Gate]:
    """exp(-i * prefactor * H_group) for mutually commuting terms: one
    exponential per term, exp(i * (-prefactor * coeff) * P)."""
    gates = []
    for coeff, string in obs.terms:
        if coeff == 0.0:
            continue
        letters = "".join(string.letters[q] for q in string.support)
        gates.append(gate_pauliexp(string.support, letters, -prefactor * coeff))
    return gates


def build_asp(spec: ClusterSpec, schedule: SweepSchedule) -> Circuit:
    """Trotterized sweep prod_m exp(-i H(s_m) dt) with H(s) = H0 + s V.

    Each time step is split over the commuting term groups {XX}, {Z}, {X}
    (first order) or their symmetric arrangement (second order).
    """
    h0 = build_h0(spec)
    v = build_perturbation(spec)
    xx_terms = [t for t in v.terms if set(t[1].letters) <= {"I", "X"} and t[1].weight == 2]
    x_terms = [t for t in v.terms if t[1].weight == 1]
    groups: list[Observable] = []
    if any(c != 0.0 for c, _ in xx_terms):
        groups.append(Observable(tuple(xx_terms)))
    groups.append(h0)
    if x_terms:
        groups.append(Observable(tuple(x_terms)))

    gates: list[Gate] = []
    dt = schedule.dt
    for s in schedule.ramp_values():
        scales = [s if g is not h0 else 1.0 for g in groups]
        if schedule.trotter_order == 1:
            for g, sc in zip(groups, scales):
                gates.extend(_group_gates(g, dt * sc))
        else:
            for g, sc in zip(groups[:-1], scales[:-1]):
                gates.extend(_group_gates(g, dt * sc / 2))
            gates.extend(_group_gates(groups[-1], dt * scales[-1]))
            for g, sc in zip(groups[-2::-1], scales[-2::-1]):
                gates.extend(_group_gates(g, dt * sc / 2))
    return Circuit(spec.n_sites, gates,
                   label=f"asp{schedule.n_steps}x{schedule.trotter_order}")


def default_schedule(spec: ClusterSpec, n_steps: int = 10,
                     trotter_order: int = 1) -> SweepSchedule:
    return SweepSchedule(n_steps, default_step_duration(spec), trotter_order)
