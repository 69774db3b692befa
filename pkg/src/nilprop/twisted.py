"""Twisted calculus on grids: the partial central Fourier transform, its
inverse, twisted convolution by direct quadrature, twisted vector fields
and the dense discretisation of the second-order operator they generate.

The twisted convolution of two functions on g1 is

    (phi x_mu psi)(x) = int phi(x - y) psi(y) exp(-i pi x.J_mu y) |Pf| dy,

with the phase bilinear in (x, y) and the measure weighted by the
Pfaffian.  There is no translation invariance, so the reference
implementation is direct O(P^2) quadrature, blocked over output nodes
with per-axis phase tables; reductions are ordinary sums in a fixed
order, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .algebra import CentralForm, LieAlgebra2Step, j_matrix
from .errors import AlgebraSpecError, CapExceededError, DegenerateFormError, GridMismatchError
from .fields import Grid, SampledField
from .symplectic import SymplecticFrame

PF_EXCLUSION_TOL = 1e-6
OPERATOR_NODE_CAP = 4096


def _twist_data(form):
    """(J, measure weight) from a frame, a raw J matrix, or None (plain)."""
    if isinstance(form, SymplecticFrame):
        return form.Jmu, form.measure_weight
    if form is None:
        return None, 1.0
    return np.asarray(form, dtype=float), 1.0


# ---------------------------------------------------------------------------
# central Fourier transform and inversion
# ---------------------------------------------------------------------------

def _central_phase(grid: Grid, m: int, mu: np.ndarray, sign: float) -> np.ndarray:
    """exp(sign * 2 pi i mu.u) on the central axes of a group grid."""
    l = grid.dim - m
    phase = np.ones(grid.shape[m:], dtype=complex)
    for s in range(l):
        ax = grid.axis(m + s)
        shape = [1] * l
        shape[s] = ax.size
        phase = phase * np.exp(sign * 2j * np.pi * mu[s] * ax).reshape(shape)
    return phase


def partial_central_ft(f: SampledField, mu, frame: SymplecticFrame) -> SampledField:
    """f^mu(x) = (1/|Pf|) int f(x, u) exp(-2 pi i mu.u) du by trapezoidal sum."""
    if f.space != "group":
        raise AlgebraSpecError("partial_central_ft needs a field over the group")
    mu = mu.mu if isinstance(mu, CentralForm) else np.atleast_1d(np.asarray(mu, dtype=float))
    m = frame.m
    l = f.grid.dim - m
    if l != mu.size:
        raise AlgebraSpecError("central form length does not match the central axes of the grid")
    if frame.measure_weight <= PF_EXCLUSION_TOL:
        raise DegenerateFormError("central form too close to the degenerate set")
    du = float(np.prod(f.grid.h[m:]))
    phase = _central_phase(f.grid, m, mu, sign=-1.0)
    vals = np.tensordot(f.values, phase, axes=(tuple(range(m, f.grid.dim)), tuple(range(l))))
    vals = vals * (du / frame.measure_weight)
    return SampledField(grid=f.grid.subgrid(range(m)), values=vals, space="g1", mu=mu)


def central_inversion(slices, weights, grid: Grid) -> SampledField:
    """f(x, u) ~ sum_j f^{mu_j}(x) exp(2 pi i mu_j.u) |Pf_j| dmu.

    `slices` carry their mu tags; `weights` are the |Pf_j| dmu quadrature
    weights, one per slice.
    """
    slices = list(slices)
    weights = list(weights)
    if not slices:
        raise AlgebraSpecError("central inversion needs at least one slice")
    if len(slices) != len(weights):
        raise AlgebraSpecError("one quadrature weight per slice required")
    m = slices[0].grid.dim
    if grid.subgrid(range(m)) != slices[0].grid:
        raise GridMismatchError("group grid does not extend the slice grid")
    out = np.zeros(grid.shape, dtype=complex)
    xshape = slices[0].grid.shape + (1,) * (grid.dim - m)
    for f_mu, w in zip(slices, weights):
        if f_mu.mu is None:
            raise AlgebraSpecError("slices must carry their central frequency")
        phase = _central_phase(grid, m, f_mu.mu, sign=+1.0)
        out += w * f_mu.values.reshape(xshape) * phase
    return SampledField(grid=grid, values=out, space="group")


@dataclass(frozen=True)
class MuGrid:
    """Uniform central-frequency grid minus the near-degenerate nodes."""

    alg: LieAlgebra2Step
    forms: tuple
    pf: tuple
    dvol: float

    @classmethod
    def uniform(cls, alg: LieAlgebra2Step, lo: float, hi: float, nodes: int,
                exclusion_tol: float = PF_EXCLUSION_TOL) -> "MuGrid":
        axes = [np.linspace(lo, hi, nodes)] * alg.l
        dvol = float(np.prod([(hi - lo) / (nodes - 1)] * alg.l))
        forms, pfs = [], []
        for mu in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, alg.l):
            pf2 = np.linalg.det(j_matrix(alg, mu))
            pf = np.sqrt(max(pf2, 0.0))
            if pf > exclusion_tol:
                forms.append(CentralForm(mu))
                pfs.append(float(pf))
        if not forms:
            raise DegenerateFormError("every node of the mu-grid is degenerate")
        return cls(alg=alg, forms=tuple(forms), pf=tuple(pfs), dvol=dvol)

    def __len__(self):
        return len(self.forms)

    @property
    def weights(self):
        return tuple(p * self.dvol for p in self.pf)


# ---------------------------------------------------------------------------
# twisted convolution
# ---------------------------------------------------------------------------

def _block_size(P: int, budget_bytes: float = 4.5e7) -> int:
    return max(1, min(P, int(budget_bytes / (16 * P))))


def twisted_convolve(phi: SampledField, psi: SampledField, form) -> SampledField:
    """Direct-quadrature twisted convolution with zero extension off the box."""
    phi.check_same_grid(psi)
    grid = phi.grid
    m = grid.dim
    J, weight = _twist_data(form)
    if J is not None and J.shape != (m, m):
        raise AlgebraSpecError("twist matrix size does not match the grid dimension")
    P = grid.size
    shape = grid.shape
    pts = grid.points()  # (P, m)
    K = np.indices(shape).reshape(m, P).T  # integer multi-indices
    phi_flat = phi.values.reshape(P)
    psi_flat = psi.values.reshape(P)

    if J is None or not np.any(J):
        tables = None
    else:
        W = J @ pts.T  # (m, P)
        tables = [np.exp(-1j * np.pi * np.outer(grid.axis(a), W[a])) for a in range(m)]

    out = np.empty(P, dtype=complex)
    B = _block_size(P)
    strides = np.cumprod((1,) + shape[::-1][:-1])[::-1]  # C-order flat strides
    for start in range(0, P, B):
        blk = slice(start, min(start + B, P))
        Kb = K[blk]
        flat = np.zeros((Kb.shape[0], P), dtype=np.int64)
        valid = np.ones((Kb.shape[0], P), dtype=bool)
        for a in range(m):
            Ca = Kb[:, a, None] - K[None, :, a] + shape[a] // 2
            valid &= (Ca >= 0) & (Ca < shape[a])
            flat += np.clip(Ca, 0, shape[a] - 1) * strides[a]
        kernel_vals = np.where(valid, phi_flat[flat], 0.0)
        if tables is not None:
            phase = tables[0][Kb[:, 0]]
            for a in range(1, m):
                phase = phase * tables[a][Kb[:, a]]
            kernel_vals = kernel_vals * phase
        out[blk] = kernel_vals @ psi_flat
    out *= weight * grid.cell_volume
    return SampledField(grid=grid, values=out.reshape(shape), space=phi.space, mu=phi.mu)


def twisted_operator_matrix(kernel_field: SampledField, form) -> np.ndarray:
    """Dense matrix of phi -> phi x kernel on the grid (for operator-norm checks)."""
    grid = kernel_field.grid
    m, P, shape = grid.dim, grid.size, grid.shape
    if P > OPERATOR_NODE_CAP:
        raise CapExceededError(f"grid size {P} exceeds the dense-operator cap {OPERATOR_NODE_CAP}")
    J, weight = _twist_data(form)
    pts = grid.points()
    K = np.indices(shape).reshape(m, P).T
    gvals = kernel_field.values.reshape(P)
    strides = np.cumprod((1,) + shape[::-1][:-1])[::-1]
    flat = np.zeros((P, P), dtype=np.int64)
    valid = np.ones((P, P), dtype=bool)
    for a in range(m):
        Ca = K[:, a, None] - K[None, :, a] + shape[a] // 2
        valid &= (Ca >= 0) & (Ca < shape[a])
        flat += np.clip(Ca, 0, shape[a] - 1) * strides[a]
    Mat = np.where(valid, gvals[flat], 0.0)
    if J is not None and np.any(J):
        Mat = Mat * np.exp(-1j * np.pi * (pts @ (J @ pts.T)))
    return Mat * (weight * grid.cell_volume)


# ---------------------------------------------------------------------------
# twisted vector fields and the dense operator
# ---------------------------------------------------------------------------

def _diff4(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order central difference with zero extension outside the box."""
    v = np.moveaxis(values, axis, 0)
    pad = np.zeros((2,) + v.shape[1:], dtype=values.dtype)
    vp = np.concatenate([pad, v, pad], axis=0)
    n = v.shape[0]
    out = (vp[0:n] - 8 * vp[1:n + 1] + 8 * vp[3:n + 3] - vp[4:n + 4]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def twisted_vf_apply(X, f: SampledField, form) -> SampledField:
    """Apply the twisted field of the g1 direction X: d_X + i pi x.(J_mu X)."""
    X = np.asarray(X, dtype=float)
    grid = f.grid
    if X.shape != (grid.dim,):
        raise AlgebraSpecError("direction vector length does not match the grid dimension")
    J, _ = _twist_data(form)
    out = np.zeros(grid.shape, dtype=complex)
    for a in range(grid.dim):
        if X[a] != 0.0:
            out += X[a] * _diff4(f.values, a, grid.h[a])
    if J is not None and np.any(J):
        w = np.tensordot(grid.mesh(), J @ X, axes=(-1, 0))
        out += 1j * np.pi * w * f.values
    return f.with_values(out)


def _diff4_matrix(n: int, h: float) -> sp.csr_matrix:
    c = 1.0 / (12 * h)
    return sp.diags(
        [c, -8 * c, 8 * c, -c],
        offsets=[-2, -1, 1, 2],
        shape=(n, n),
        format="csr",
    )


def vector_field_matrices(frame_or_J, grid: Grid):
    """Sparse matrices of the twisted basis fields V_j^mu on the grid."""
    J, _ = _twist_data(frame_or_J)
    m = grid.dim
    mats = []
    eye = [sp.identity(n, format="csr") for n in grid.shape]
    pts = grid.points()
    for j in range(m):
        D = None
        for a in range(m):
            factor = _diff4_matrix(grid.shape[a], grid.h[a]) if a == j else eye[a]
            D = factor if D is None else sp.kron(D, factor, format="csr")
        Mj = D.astype(complex)
        if J is not None and np.any(J):
            w = pts @ (J @ np.eye(m)[:, j])
            Mj = Mj + sp.diags(1j * np.pi * w)
        mats.append(Mj.tocsr())
    return mats


def operator_matrix_sparse(A, form, grid: Grid) -> sp.csr_matrix:
    A = np.asarray(A, dtype=float)
    V = vector_field_matrices(form, grid)
    L = None
    for j in range(len(V)):
        for k in range(len(V)):
            if A[j, k] != 0.0:
                term = (A[j, k] * V[j]) @ V[k]
                L = term if L is None else L + term
    if L is None:
        L = sp.csr_matrix((grid.size, grid.size), dtype=complex)
    return L.tocsr()


def operator_matrix(A, form, grid: Grid, cap: int = OPERATOR_NODE_CAP) -> np.ndarray:
    """Dense matrix of sum_jk a_jk V_j^mu V_k^mu, assembled from the field stencils.

    Used only as oracle input; grids above the node cap are refused.
    """
    if grid.size > cap:
        raise CapExceededError(f"grid size {grid.size} exceeds the dense-operator cap {cap}")
    return operator_matrix_sparse(A, form, grid).toarray()
