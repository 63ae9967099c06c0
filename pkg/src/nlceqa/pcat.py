"""Non-linear classical post-processing of measured matrices.

The overlap matrix is orthonormalized into the partial isometry closest to
it (symmetric orthonormalization), and the measured Hamiltonian matrix is
conjugated with it. Subtracting the ground energy leaves an intensive
effective 1QP Hamiltonian that is additive on disconnected clusters, which
the cluster embedding requires.

The isometry depends on the overlap matrix only through scale-free
combinations: any nonzero complex prefactor on the overlap matrix cancels,
which is why uniform depolarization of the overlap estimates drops out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import ClusterSpec
from .records import CorrectionTerms, MatrixEstimate

_RANK_FLOOR = 1e-8


class SingularOverlapError(RuntimeError):
    """Overlap matrix singular; sector leakage or insufficient shots."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


@dataclass
class EffectiveHamiltonian1QP:
    """Per-cluster N x N effective Hamiltonian with its provenance."""

    spec: ClusterSpec
    matrix: np.ndarray
    e0: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        n = self.spec.n_sites
        if self.matrix.shape != (n, n):
            raise ValueError("matrix size must match the cluster")

    def excitation_energies(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _values(mat) -> np.ndarray:
    return np.asarray(getattr(mat, "values", mat), dtype=complex)


def lowdin_isometry(overlap: np.ndarray) -> np.ndarray:
    """V = O^dag (O O^dag)^(-1/2) via eigendecomposition of the Hermitian O O^dag.

    Requires O O^dag to be invertible well above the relative floor; a
    rank-deficient overlap matrix raises SingularOverlapError instead of
    silently amplifying noise.
    """
    o = _values(overlap)
    gram = o @ o.conj().T
    evals, evecs = np.linalg.eigh(gram)
    top = float(evals[-1])
    if top <= 0.0 or evals[0] <= _RANK_FLOOR * top:
        cond = np.inf if evals[0] <= 0 else top / float(evals[0])
        raise SingularOverlapError(
            "overlap matrix singular; sector leakage or insufficient shots", cond)
    inv_sqrt = (evecs * (evals ** -0.5)) @ evecs.conj().T
    return o.conj().T @ inv_sqrt


def effective_hamiltonian(hmat, omat, e0: float, spec: ClusterSpec,
                          provenance: dict | None = None) -> EffectiveHamiltonian1QP:
    """H_eff = V^dag H V - E0 with V the orthonormalized overlap isometry.

    The measured Hamiltonian matrix is Hermitized before conjugation; the
    sampling asymmetry of independent estimates is pure noise on a Hermitian
    object.
    """
    h = _values(hmat)
    o = _values(omat)
    if h.shape != o.shape or h.shape[0] != spec.n_sites:
        raise ValueError("matrix dimensions incompatible with the cluster")
    h = 0.5 * (h + h.conj().T)
    v = lowdin_isometry(o)
    matrix = v.conj().T @ h @ v - e0 * np.eye(spec.n_sites)
    return EffectiveHamiltonian1QP(spec, matrix, float(e0), provenance or {})


def assemble_correction(terms: CorrectionTerms) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outer-product correction Delta_ij = w_i * num_j / den with first-order
    uncertainty on the real and imaginary parts of every element.

    For the holomorphic map f(a, b, c) = a b / c the component variances add
    as sigma_re^2 = sum_z Re(df/dz)^2 sig_re(z)^2 + Im(df/dz)^2 sig_im(z)^2
    and symmetrically for the imaginary part.
    """
    num, wvec, den = terms.num, terms.wvec, complex(terms.den)
    if den == 0:
        raise ZeroDivisionError("correction denominator is zero")
    delta = np.outer(wvec, num) / den
    n_j = num.shape[0]
    n_i = wvec.shape[0]
    sig_re = np.zeros((n_i, n_j))
    sig_im = np.zeros((n_i, n_j))
    for i in range(n_i):
        for j in range(n_j):
            derivs = (
                (wvec[i] / den, terms.sigma_num[j]),
                (num[j] / den, terms.sigma_wvec[i]),
                (-wvec[i] * num[j] / den ** 2, terms.sigma_den),
            )
            vr = vi = 0.0
            for df, (s_re, s_im) in derivs:
                vr += (df.real * s_re) ** 2 + (df.imag * s_im) ** 2
                vi += (df.imag * s_re) ** 2 + (df.real * s_im) ** 2
            sig_re[i, j] = np.sqrt(vr)
            sig_im[i, j] = np.sqrt(vi)
    return delta, sig_re, sig_im


def modified_overlap_assembly(raw: MatrixEstimate,
                              correction: CorrectionTerms) -> MatrixEstimate:
    """Subtract the 0QP-admixture correction from the raw overlap matrix.

    Element uncertainties combine in quadrature with the first-order
    uncertainty of the quotient; the Monte-Carlo propagation downstream
    supersedes this first-order figure for final error bars.
    """
    delta, d_sig_re, d_sig_im = assemble_correction(correction)
    if delta.shape != raw.values.shape:
        raise ValueError("correction shape does not match the overlap matrix")
    values = raw.values - delta
    sig_re = np.sqrt(raw.sigma_re ** 2 + d_sig_re ** 2)
    sig_im = np.sqrt(raw.sigma_im ** 2 + d_sig_im ** 2)
    meta = dict(raw.meta)
    meta["correction_max_modulus"] = float(np.abs(delta).max())
    return MatrixEstimate(raw.role, values, sig_re, sig_im, meta)


@dataclass
class ClusterData:
    """Everything the embedding needs from one solved cluster."""

    spec: ClusterSpec
    hmat: MatrixEstimate
    omat: MatrixEstimate
    e0: float
    e0_sigma: float
    weight: float
    provenance: dict = field(default_factory=dict)

    def effective(self) -> EffectiveHamiltonian1QP:
        return effective_hamiltonian(self.hmat, self.omat, self.e0, self.spec,
                                     dict(self.provenance))
