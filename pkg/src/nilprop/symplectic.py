"""Symplectic linear algebra behind the propagator kernels.

Provides Pfaffians of skew matrices, the per-frequency symplectic frame
R(mu) that brings the central form to the standard block matrix
J = [[0, I], [-I, 0]], the generators built from a symmetric coefficient
matrix, and the small zoo of matrix functions (sinh, cosh, coth, exp, log)
the kernel formulas consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .algebra import CentralForm, LieAlgebra2Step, j_matrix
from .errors import (
    AlgebraSpecError,
    DegenerateFormError,
    LogBranchError,
    SingularSinhError,
)

EIGVEC_COND_LIMIT = 1e8


def standard_j(m: int) -> np.ndarray:
    """Standard symplectic matrix [[0, I], [-I, 0]] of even size m = 2n."""
    if m % 2:
        raise AlgebraSpecError(f"standard symplectic matrix needs even dimension, got {m}")
    n = m // 2
    J = np.zeros((m, m))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def pfaffian(M: np.ndarray, tol: float = 1e-12) -> float:
    """Pfaffian of a real skew-symmetric matrix of even dimension.

    Orthogonal (Schur) tridiagonalization reduces M to a skew tridiagonal
    T = Q^T M Q whose Pfaffian is the product of the odd superdiagonal
    entries; the congruence rule Pf(Q^T M Q) = det(Q) Pf(M) restores the
    sign.  Satisfies Pf(M)^2 = det(M).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise AlgebraSpecError("pfaffian needs a square matrix")
    m = M.shape[0]
    if m % 2:
        raise AlgebraSpecError("pfaffian needs even dimension")
    scale = max(np.max(np.abs(M)), 1.0)
    if np.max(np.abs(M + M.T)) > tol * scale:
        raise AlgebraSpecError("pfaffian needs a skew-symmetric matrix")
    if m == 0:
        return 1.0
    if m == 2:
        return float(M[0, 1])
    T, Q = sla.schur(M, output="real")
    T = 0.5 * (T - T.T)  # clean numerical symmetric residue
    pf = float(np.linalg.det(Q))
    for k in range(0, m, 2):
        pf *= T[k, k + 1]
    return pf


@dataclass(frozen=True)
class SymplecticFrame:
    """Per-frequency data: J_mu, its Pfaffian, and the transition R(mu).

    The columns of R form a symplectic basis, so R^T J_mu R = J.  R is
    homogeneous by construction: R(mu) = |mu|^(-1/2) R(mu/|mu|).
    """

    mu: CentralForm
    Jmu: np.ndarray
    pf: float
    R: np.ndarray
    Jstd: np.ndarray

    @property
    def m(self) -> int:
        return self.Jmu.shape[0]

    @property
    def n(self) -> int:
        return self.m // 2

    @property
    def measure_weight(self) -> float:
        """Density |Pf(omega_mu)| of the frequency-adapted measure."""
        return abs(self.pf)

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    def check(self, tol: float = 1e-9) -> None:
        RJR = self.R.T @ self.Jmu @ self.R
        if np.max(np.abs(RJR - self.Jstd)) > tol:
            raise DegenerateFormError("frame violates R^T J_mu R = J")
        det = np.linalg.det(self.Jmu)
        if abs(self.pf**2 - det) > tol * max(abs(det), 1.0):
            raise DegenerateFormError("frame violates Pf^2 = det")
        if abs(det * np.linalg.det(self.R) ** 2 - 1.0) > tol:
            raise DegenerateFormError("frame violates det(J_mu) det(R)^2 = 1")


def standard_frame(n: int) -> SymplecticFrame:
    """Frame of the already-standard form (R = I); used for z-coordinate work."""
    J = standard_j(2 * n)
    return SymplecticFrame(mu=CentralForm([1.0]), Jmu=J, pf=1.0, R=np.eye(2 * n), Jstd=J)


def _symplectic_gram_schmidt(J: np.ndarray, tol: float) -> np.ndarray:
    """Columns [p_1..p_n q_1..q_n] with omega(p_i, q_i) = 1, other pairings 0.

    Pivot pair maximizes |omega(w_a, w_b)| over the working set, ties
    broken lexicographically, which makes the construction deterministic.
    """
    m = J.shape[0]
    work = [np.eye(m)[:, k] for k in range(m)]
    ps, qs = [], []
    while work:
        nw = len(work)
        G = np.empty((nw, nw))
        for a in range(nw):
            for b in range(nw):
                G[a, b] = work[a] @ J @ work[b]
        best = None
        best_val = -1.0
        for a in range(nw):
            for b in range(a + 1, nw):
                v = abs(G[a, b])
                if v > best_val + 1e-15:
                    best_val = v
                    best = (a, b)
        if best is None or best_val < tol:
            raise DegenerateFormError("symplectic Gram-Schmidt ran out of nondegenerate pairs")
        a, b = best
        p = work[a]
        q = work[b] / G[a, b]
        ps.append(p)
        qs.append(q)
        rest = [work[i] for i in range(nw) if i not in (a, b)]
        work = [w - (w @ J @ q) * p + (w @ J @ p) * q for w in rest]
    return np.column_stack(ps + qs)


def build_frame(alg: LieAlgebra2Step, mu, tol: float = 1e-10) -> SymplecticFrame:
    """Deterministic symplectic frame at a generic central form.

    The basis is built at mu/|mu| and rescaled by |mu|^(-1/2) so that the
    transition matrix is homogeneous of degree -1/2 in mu.
    """
    mu = mu if isinstance(mu, CentralForm) else CentralForm(mu)
    r = mu.norm
    Jmu = j_matrix(alg, mu)
    m = alg.m
    if m % 2:
        raise DegenerateFormError("odd g1 dimension: every central form is degenerate")
    if r == 0.0 or abs(np.linalg.det(Jmu)) <= tol * r**m:
        raise DegenerateFormError(f"central form {mu.mu} is degenerate for this algebra")
    Jnu = Jmu / r
    Rnu = _symplectic_gram_schmidt(Jnu, tol)
    R = Rnu / np.sqrt(r)
    frame = SymplecticFrame(mu=mu, Jmu=Jmu, pf=pfaffian(Jmu), R=R, Jstd=standard_j(m))
    frame.check(tol=1e-6 * max(1.0, np.linalg.norm(Jmu)))
    return frame


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

GENERATOR_KINDS = ("S_mu", "S_of_mu", "D_mu", "D_eps_mu", "custom")


@dataclass(frozen=True)
class SpGenerator:
    """Element of the symplectic Lie algebra, S = -(coefficient) J.

    kind 'S_mu' lives in sp(g1, omega_mu); the other kinds are expressed
    in symplectic coordinates and satisfy S^T J + J S = 0 with the
    standard J.
    """

    S: np.ndarray
    kind: str
    A: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise AlgebraSpecError(f"unknown generator kind {self.kind!r}")

    @property
    def m(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.m // 2


def _require_symmetric(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(A - A.T)) > tol * max(1.0, np.max(np.abs(A))):
        raise AlgebraSpecError("coefficient matrix must be symmetric")
    return A


def generator(A, frame, kind: str = "S_mu") -> SpGenerator:
    """Build S_mu = -A J_mu, its symplectic-coordinate version, or the
    frame generator D(mu) = -B(mu) J with B(mu) = -R^{-1} R^{-T}.

    For kind 'S_mu', `frame` may also be a raw J_mu matrix.
    """
    if kind == "S_mu":
        A = _require_symmetric(A)
        Jmu = frame.Jmu if isinstance(frame, SymplecticFrame) else np.asarray(frame, dtype=float)
        return SpGenerator(S=-A @ Jmu, kind=kind, A=A)
    if not isinstance(frame, SymplecticFrame):
        raise AlgebraSpecError(f"kind {kind!r} needs a SymplecticFrame")
    Rinv = frame.R_inv
    if kind == "S_of_mu":
        A = _require_symmetric(A)
        Amu = Rinv @ A @ Rinv.T
        return SpGenerator(S=-Amu @ frame.Jstd, kind=kind, A=Amu)
    if kind == "D_mu":
        B = -Rinv @ Rinv.T
        return SpGenerator(S=-B @ frame.Jstd, kind=kind, A=B)
    raise AlgebraSpecError(f"generator() cannot build kind {kind!r} directly")


def coefficient_of(S: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Symmetric coefficient matrix A with S = -A J (so A = S J for J^2 = -I)."""
    return np.asarray(S) @ J


def in_sp(S: np.ndarray, J: np.ndarray, tol: float = 1e-8) -> bool:
    S = np.asarray(S)
    r = S.T @ J + J @ S
    return float(np.max(np.abs(r))) <= tol * max(1.0, float(np.max(np.abs(S))))


# ---------------------------------------------------------------------------
# matrix functions
# ---------------------------------------------------------------------------

def _eig_apply(f, M: np.ndarray):
    w, V = np.linalg.eig(M)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > EIGVEC_COND_LIMIT:
        return None
    Fw = f(w)
    return (V * Fw) @ np.linalg.inv(V)


def matrix_function(kind: str, M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Evaluate sinh, cosh, coth, exp or log of a square matrix.

    Diagonalizable inputs go through the eigendecomposition; defective
    ones fall back to scaling-and-squaring (exp) and the library logm.
    coth refuses inputs where sinh is singular, log refuses spectra that
    touch the closed negative real axis.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise AlgebraSpecError("matrix_function needs a square matrix")
    w = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(w))))
    if kind == "coth":
        if np.min(np.abs(np.sinh(w))) < 1e-12 * scale:
            raise SingularSinhError("coth at a singular point of sinh")
    if kind == "log":
        on_cut = (w.real <= 0) & (np.abs(w.imag) <= tol * scale)
        if np.any(on_cut):
            raise LogBranchError("logarithm branch cut: eigenvalue on the closed negative real axis")

    table = {
        "sinh": np.sinh,
        "cosh": np.cosh,
        "exp": np.exp,
        "log": np.log,
        "coth": lambda z: np.cosh(z) / np.sinh(z),
    }
    if kind not in table:
        raise AlgebraSpecError(f"unknown matrix function {kind!r}")
    out = _eig_apply(table[kind], M)
    if out is not None:
        return out
    # defective fallback: series-based library routines
    if kind == "exp":
        return sla.expm(M)
    if kind == "log":
        return np.asarray(sla.logm(M), dtype=complex)
    Ep = sla.expm(M)
    Em = sla.expm(-M)
    if kind == "sinh":
        return 0.5 * (Ep - Em)
    if kind == "cosh":
        return 0.5 * (Ep + Em)
    sinh = 0.5 * (Ep - Em)
    cosh = 0.5 * (Ep + Em)
    return np.linalg.solve(sinh.T, cosh.T).T  # cosh @ sinh^{-1}


def realified(M: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop a numerically negligible imaginary part; raise otherwise."""
    M = np.asarray(M)
    scale = max(1.0, float(np.max(np.abs(M))))
    if float(np.max(np.abs(M.imag))) > tol * scale:
        raise LogBranchError("matrix expected to be real has a significant imaginary part")
    return np.ascontiguousarray(M.real)


def signature_count(M: np.ndarray, tol: float = 1e-9, return_flag: bool = False):
    """Positive minus negative eigenvalue count of a symmetric matrix.

    Eigenvalues within tolerance of zero count as zero; their presence is
    reported through the optional flag.  The count is invariant under
    congruence (Sylvester).
    """
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M - M.T)) > 1e-9 * max(1.0, np.max(np.abs(M))):
        raise AlgebraSpecError("signature_count needs a symmetric matrix")
    w = np.linalg.eigvalsh(M)
    scale = max(1.0, float(np.max(np.abs(w))))
    cut = tol * scale
    k = int(np.sum(w > cut)) - int(np.sum(w < -cut))
    if return_flag:
        return k, bool(np.any(np.abs(w) <= cut))
    return k


# ---------------------------------------------------------------------------
# group-level combination of generators
# ---------------------------------------------------------------------------

def _as_matrix(S) -> np.ndarray:
    return S.S if isinstance(S, SpGenerator) else np.asarray(S, dtype=float)


def sp_combine(t: float, S1, S2) -> SpGenerator:
    """Z with exp(t Z) = exp(t S1) exp(t S2), by exact matrix logarithm.

    Agrees with the truncated Baker-Campbell-Hausdorff series
    S1 + S2 + (t/2)[S1, S2] to second order in t.
    """
    if t == 0:
        raise AlgebraSpecError("sp_combine needs t != 0")
    M1, M2 = _as_matrix(S1), _as_matrix(S2)
    E = sla.expm(t * M1) @ sla.expm(t * M2)
    w = np.linalg.eigvals(E)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.any((w.real <= 0) & (np.abs(w.imag) <= 1e-12 * scale)):
        raise LogBranchError("exp(tS1)exp(tS2) has spectrum on the negative real axis; no real log")
    Z = realified(matrix_function("log", E), tol=1e-8) / t
    return SpGenerator(S=Z, kind="custom", A=None)


def ad_conjugate(t: float, S, D) -> SpGenerator:
    """exp(-t S) D exp(t S): D transported along the flow of S."""
    Ms, Md = _as_matrix(S), _as_matrix(D)
    E = sla.expm(t * Ms)
    Einv = sla.expm(-t * Ms)
    out = Einv @ Md @ E
    kind = "D_eps_mu" if isinstance(D, SpGenerator) and D.kind in ("D_mu", "D_eps_mu") else "custom"
    return SpGenerator(S=out, kind=kind, A=None)
