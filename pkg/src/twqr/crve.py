"""Cluster-robust variance assembly and t-tests.

The two-way "meat" sums score cross-products within rows, within columns,
and on the diagonal, eigenvalue-corrects the two off-diagonal blocks, and
adds the pieces. One-way and intersection-only comparators reuse the same
building blocks. The sandwich combines the meat with the kernel Jacobian
through a single Cholesky factorization.

Normalization divides by the squared realized cell count n^2, which equals
(GH)^2 on complete grids; pair sums range over pairs of present cells only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .errors import (
    NonFinite,
    SingularJacobian,
    TooFewClusters,
    ZeroStdError,
)
from .jacobian import JacobianEstimate
from .solver import QuantileFit, ScoreMatrix

__all__ = [
    "CrveKind",
    "OmegaComponents",
    "VarianceEstimate",
    "TestResult",
    "evc",
    "omega_ctw",
    "omega_variant",
    "sandwich",
    "t_test",
]


class CrveKind(enum.Enum):
    """Variance estimator family."""

    CTW = "ctw"        # two-way with eigenvalue correction
    CG = "cg"          # one-way, row clusters only
    CH = "ch"          # one-way, column clusters only
    CI = "ci"          # intersection only (i.i.d.-style)
    CTW_II = "ctw2"    # two-way, uncorrected double-counted diagonal


@dataclass(frozen=True)
class OmegaComponents:
    """Meat components; ``omega_total`` is the piece the sandwich consumes.

    ``omega_I_raw``/``omega_II_raw`` are the row/column cross-cell sums
    before eigenvalue correction; ``omega_I``/``omega_II`` after. The clip
    counts record how many eigenvalues the correction zeroed.
    """

    kind: CrveKind
    omega_I_raw: np.ndarray
    omega_II_raw: np.ndarray
    omega_I: np.ndarray
    omega_II: np.ndarray
    omega_diag: np.ndarray
    omega_total: np.ndarray
    clip_count_I: int = 0
    clip_count_II: int = 0


@dataclass(frozen=True)
class VarianceEstimate:
    kind: CrveKind
    d_hat: np.ndarray
    omega: OmegaComponents
    sigma_hat: np.ndarray
    std_errors: np.ndarray


@dataclass(frozen=True)
class TestResult:
    coefficient_index: int
    null_value: float
    t_stat: float
    p_value: float


def _evc_counted(m: np.ndarray) -> tuple[np.ndarray, int]:
    if not np.isfinite(m).all():
        raise NonFinite("matrix passed to eigenvalue correction has non-finite entries")
    sym = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = int(np.sum(vals < 0.0))
    if clipped == 0:
        return sym, 0
    out = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return 0.5 * (out + out.T), clipped


def evc(m: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping eigenvalues.

    The input is symmetrized as ``(M + M')/2`` first; negative eigenvalues
    are set to zero and the matrix reassembled. Idempotent.
    """
    out, _ = _evc_counted(np.asarray(m, dtype=np.float64))
    return out


def _cluster_sums(scores: ScoreMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Row and column sums of scores: shapes (G, d) and (H, d)."""
    d = scores.d
    sg = np.zeros((scores.G, d))
    sh = np.zeros((scores.H, d))
    for k in range(d):
        sg[:, k] = np.bincount(scores.g_idx, weights=scores.scores[:, k],
                               minlength=scores.G)
        sh[:, k] = np.bincount(scores.h_idx, weights=scores.scores[:, k],
                               minlength=scores.H)
    return sg, sh


def omega_ctw(scores: ScoreMatrix) -> OmegaComponents:
    """Two-way meat: corrected row and column sums plus the diagonal.

    Raw components use the identity ``sum_{h != h'} psi_gh psi_gh'^T =
    (sum_h psi_gh)(sum_h psi_gh)^T - sum_h psi_gh psi_gh^T`` per row (and
    symmetrically per column), so assembly is O(n d^2).
    """
    if scores.G < 2 or scores.H < 2:
        raise TooFewClusters("two-way CRVE requires G >= 2 and H >= 2")
    return _assemble(scores, CrveKind.CTW)


def _assemble(scores: ScoreMatrix, kind: CrveKind) -> OmegaComponents:
    n = scores.n
    norm2 = float(n) ** 2
    psi = scores.scores
    diag = psi.T @ psi / norm2
    sg, sh = _cluster_sums(scores)
    row_full = sg.T @ sg / norm2   # one-way g sum, diagonal included
    col_full = sh.T @ sh / norm2
    i_raw = row_full - diag
    ii_raw = col_full - diag
    i_evc, clip_i = _evc_counted(i_raw)
    ii_evc, clip_ii = _evc_counted(ii_raw)
    if kind is CrveKind.CTW:
        total = i_evc + ii_evc + diag
    elif kind is CrveKind.CG:
        total = row_full
    elif kind is CrveKind.CH:
        total = col_full
    elif kind is CrveKind.CI:
        total = diag
    elif kind is CrveKind.CTW_II:
        total = row_full + col_full
    else:  # pragma: no cover
        raise ValueError(f"unknown kind {kind}")
    return OmegaComponents(
        kind=kind,
        omega_I_raw=i_raw,
        omega_II_raw=ii_raw,
        omega_I=i_evc,
        omega_II=ii_evc,
        omega_diag=diag,
        omega_total=0.5 * (total + total.T),
        clip_count_I=clip_i,
        clip_count_II=clip_ii,
    )


def omega_variant(scores: ScoreMatrix, kind: CrveKind) -> OmegaComponents:
    """Meat for any estimator family.

    CG/CH are the full one-way cluster sums (PSD by construction), CI the
    diagonal alone, CTW_II the sum of both one-way matrices (PSD without
    eigenvalue correction, diagonal counted twice), CTW the corrected
    two-way assembly.
    """
    kind = CrveKind(kind)
    if kind is CrveKind.CTW:
        return omega_ctw(scores)
    if kind in (CrveKind.CG, CrveKind.CTW_II) and scores.G < 2:
        raise TooFewClusters("row clustering requires G >= 2")
    if kind in (CrveKind.CH, CrveKind.CTW_II) and scores.H < 2:
        raise TooFewClusters("column clustering requires H >= 2")
    return _assemble(scores, kind)


def sandwich(d_hat: JacobianEstimate, omega: OmegaComponents,
             kind: CrveKind | None = None) -> VarianceEstimate:
    """Sandwich ``D^{-1} Omega D^{-1}`` via one reused Cholesky factorization."""
    d_mat = d_hat.d_hat
    vals = np.linalg.eigvalsh(d_mat)
    if vals[0] <= 1e-10 * max(vals[-1], 0.0):
        raise SingularJacobian(
            f"Jacobian min/max eigenvalue ratio {vals[0]:.3e}/{vals[-1]:.3e}"
        )
    factor = cho_factor(d_mat, lower=True)
    half = cho_solve(factor, omega.omega_total)        # D^{-1} Omega
    sigma = cho_solve(factor, half.T).T                # D^{-1} Omega D^{-1}
    sigma = 0.5 * (sigma + sigma.T)
    diag = np.diag(sigma)
    std = np.sqrt(np.maximum(diag, 0.0))
    return VarianceEstimate(
        kind=kind if kind is not None else omega.kind,
        d_hat=d_mat,
        omega=omega,
        sigma_hat=sigma,
        std_errors=std,
    )


def t_test(fit: QuantileFit, var: VarianceEstimate, j: int,
           b0: float = 0.0) -> TestResult:
    """Two-sided t-test of coefficient ``j`` against ``b0``, normal reference."""
    se = float(var.std_errors[j])
    if not se > 0.0:
        raise ZeroStdError(f"standard error of coefficient {j} is not positive")
    t = (float(fit.beta_hat[j]) - b0) / se
    p = 2.0 * float(norm.sf(abs(t)))
    return TestResult(coefficient_index=j, null_value=float(b0), t_stat=t, p_value=p)
