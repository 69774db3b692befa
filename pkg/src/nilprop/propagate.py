"""Propagators on frequency slices and on the group.

The physical flow exp(i t L_A) acts on a frequency slice as a twisted
convolution with the Gaussian kernel at the rescaled parameter 4 pi t;
that rescaling is internal to this module and never leaks into the API.
A slice can be propagated three ways: by the explicit kernel, by the
chirp-Fourier factorisation of the same kernel, or by a brute-force
exponential of the dense discretised operator (the oracle).  Imaginary
time gives the heat semigroup; complex time with a frame generator gives
the damping factors used by the regularised factorisation for singular
coefficient matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .algebra import CentralForm
from .errors import (
    AlgebraSpecError,
    CapExceededError,
    DegenerateGeneratorError,
    NilpropError,
    NonInvertibleMapError,
)
from .fields import Grid, SampledField, relative_l2, sample
from .kernels import (
    GaussianKernel,
    kernel_domain,
    oscillator_kernel,
    schrodinger_kernel_orig,
    schrodinger_kernel_sympl,
)
from .symplectic import (
    SpGenerator,
    SymplecticFrame,
    ad_conjugate,
    build_frame,
    generator,
    matrix_function,
    realified,
    sp_combine,
)
from .twisted import (
    MuGrid,
    OPERATOR_NODE_CAP,
    central_inversion,
    operator_matrix_sparse,
    partial_central_ft,
    twisted_convolve,
)

DENSE_EXPM_CUTOFF = 1500


@dataclass(frozen=True)
class PropagatorSpec:
    """Coefficient matrix and clocks of one propagation experiment."""

    A: np.ndarray
    t: float = 0.0
    tau: complex | None = None
    T: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
            raise AlgebraSpecError("coefficient matrix must be symmetric")
        object.__setattr__(self, "A", A)

    def at_time(self, t: float) -> "PropagatorSpec":
        return replace(self, t=t)


@dataclass(frozen=True)
class RegularizationSchedule:
    """Damping strengths for the singular-coefficient factorisation.

    eps is the envelope slack, eps0 the admissible ceiling (calibrated
    empirically, see fit_eps0), and eps_prime the damping actually used;
    they must satisfy 0 < eps_prime < eps0 < eps.
    """

    eps: float
    eps_prime: float
    eps0: float | None = None

    def __post_init__(self):
        if self.eps <= 0 or self.eps_prime <= 0:
            raise AlgebraSpecError("schedule parameters must be positive")
        if self.eps0 is not None and not (self.eps_prime < self.eps0 < self.eps):
            raise AlgebraSpecError("schedule needs eps_prime < eps0 < eps")


def _sample_kernel(kern: GaussianKernel, grid: Grid, mu=None) -> SampledField:
    return sample(kern.value, grid, space="g1", mu=mu)


def _nondegenerate(A: np.ndarray) -> bool:
    m = A.shape[0]
    return abs(np.linalg.det(A)) > 1e-12 * max(1.0, np.linalg.norm(A)) ** m


# ---------------------------------------------------------------------------
# slice propagation
# ---------------------------------------------------------------------------

def propagate_mu(f_mu: SampledField, spec: PropagatorSpec, frame: SymplecticFrame) -> SampledField:
    """Apply the slice flow at physical time spec.t through the explicit kernel."""
    if spec.t == 0.0:
        return f_mu.with_values(f_mu.values.copy())
    if not _nondegenerate(spec.A):
        raise DegenerateGeneratorError(
            "degenerate coefficient matrix has no slice kernel; use regularized_propagate"
        )
    kern = schrodinger_kernel_orig(4 * np.pi * spec.t, spec.A, frame)
    return twisted_convolve(f_mu, _sample_kernel(kern, f_mu.grid, mu=frame.mu.mu), frame)


def _axis_dft(values: np.ndarray, axes_nodes, freq_nodes, cell: float) -> np.ndarray:
    """Exact DFT hat(f)(xi) = sum f(y) exp(-i xi.y) * cell on a frequency product grid."""
    out = values
    for a, (y, xi) in enumerate(zip(axes_nodes, freq_nodes)):
        E = np.exp(-1j * np.outer(xi, y))
        out = np.moveaxis(np.tensordot(E, np.moveaxis(out, a, 0), axes=(1, 0)), 0, a)
    return out * cell


def _multilinear(values: np.ndarray, axes_nodes, query: np.ndarray) -> np.ndarray:
    """Multilinear interpolation on a regular product grid (queries clipped)."""
    m = len(axes_nodes)
    idx, frac = [], []
    for a in range(m):
        nodes = axes_nodes[a]
        h = nodes[1] - nodes[0]
        pos = np.clip((query[..., a] - nodes[0]) / h, 0.0, len(nodes) - 1.001)
        i0 = np.floor(pos).astype(int)
        idx.append(i0)
        frac.append(pos - i0)
    out = np.zeros(query.shape[:-1], dtype=complex)
    for corner in range(1 << m):
        w = np.ones(query.shape[:-1])
        sel = []
        for a in range(m):
            if corner >> a & 1:
                w = w * frac[a]
                sel.append(idx[a] + 1)
            else:
                w = w * (1.0 - frac[a])
                sel.append(idx[a])
        out += w * values[tuple(sel)]
    return out


def fourier_form_mu(f_mu: SampledField, spec: PropagatorSpec, frame: SymplecticFrame,
                    freq_oversample: int = 2) -> SampledField:
    """Slice flow evaluated through the chirp-Fourier factorisation.

    chirp-multiply, Euclidean Fourier transform, chirp-multiply, then the
    linear frequency substitution xi = -pi J_mu (coth(t S_mu / 2) - I) x,
    with off-grid frequencies filled by multilinear interpolation.
    """
    t = 4 * np.pi * spec.t
    if spec.t == 0.0:
        return f_mu.with_values(f_mu.values.copy())
    if not _nondegenerate(spec.A):
        raise DegenerateGeneratorError("degenerate coefficient matrix has no slice kernel")
    kern = schrodinger_kernel_orig(t, spec.A, frame)  # also validates the domain
    C = realified(kern.Q, tol=1e-8)
    Mmap = C - frame.Jmu
    m = frame.m
    if abs(np.linalg.det(Mmap)) < 1e-12 * max(1.0, np.linalg.norm(Mmap)) ** m:
        raise NonInvertibleMapError("frequency substitution J_mu(coth - I) is singular")

    grid = f_mu.grid
    mesh = grid.mesh()
    quad = np.einsum("...j,jk,...k->...", mesh, C, mesh)
    chirp = np.exp(-0.5j * np.pi * quad)
    f_t = f_mu.values * chirp

    # frequency grid covering the image of the box corners under -pi*Mmap
    corners = np.array([[(s and L or -L) for s, L in zip(map(int, f"{c:0{m}b}"), grid.L)]
                        for c in range(1 << m)])
    img = corners @ (-np.pi * Mmap).T
    lo, hi = img.min(axis=0), img.max(axis=0)
    pad = 0.02 * (hi - lo + 1.0)
    freq_nodes = [np.linspace(lo[a] - pad[a], hi[a] + pad[a], freq_oversample * grid.N[a])
                  for a in range(m)]
    fhat = _axis_dft(f_t, grid.axes(), freq_nodes, grid.cell_volume)

    xi_q = mesh @ (-np.pi * Mmap).T
    interp = _multilinear(fhat, freq_nodes, xi_q)
    out = kern.prefactor * chirp * frame.measure_weight * interp
    return f_mu.with_values(out)


def expansion_residual(spec: PropagatorSpec, frame: SymplecticFrame) -> float:
    """|| (J_mu (coth(tS_mu/2) - I))^{-1} + (t/2) A ||, the O(|mu|) residual."""
    t = 4 * np.pi * spec.t
    Smu = generator(spec.A, frame, "S_mu")
    coth = matrix_function("coth", 0.5 * t * Smu.S.astype(complex))
    Mmap = realified(frame.Jmu @ coth, tol=1e-8) - frame.Jmu
    return float(np.linalg.norm(np.linalg.inv(Mmap) + 0.5 * t * spec.A, 2))


# ---------------------------------------------------------------------------
# dense exponential oracle
# ---------------------------------------------------------------------------

def oracle_expm(f_mu: SampledField, spec: PropagatorSpec, frame, grid: Grid | None = None,
                method: str = "auto", cap: int = OPERATOR_NODE_CAP) -> SampledField:
    """exp(i t L_A^mu) applied to the sample vector via the discretised operator.

    'pade' exponentiates the dense matrix by scaling-and-squaring;
    'action' applies the scaled-Taylor exponential action to the vector
    (identical operator, machine-accurate, affordable on large grids).
    'auto' picks by node count.
    """
    grid = grid or f_mu.grid
    if grid.size > cap:
        raise CapExceededError(f"grid size {grid.size} exceeds the oracle cap {cap}")
    if spec.t == 0.0:
        return f_mu.with_values(f_mu.values.copy())
    L = operator_matrix_sparse(spec.A, frame, grid)
    if method == "auto":
        method = "pade" if grid.size <= DENSE_EXPM_CUTOFF else "action"
    v = f_mu.values.reshape(-1)
    if method == "pade":
        out = sla.expm(1j * spec.t * L.toarray()) @ v
    elif method == "action":
        out = spla.expm_multiply(1j * spec.t * L.tocsc(), v)
    else:
        raise AlgebraSpecError(f"unknown oracle method {method!r}")
    return f_mu.with_values(out.reshape(grid.shape))


# ---------------------------------------------------------------------------
# group-level propagation
# ---------------------------------------------------------------------------

def propagate_group(f: SampledField, spec: PropagatorSpec, mu_grid: MuGrid) -> SampledField:
    """Decompose over the mu-grid, propagate each slice, and invert."""
    if f.space != "group":
        raise AlgebraSpecError("propagate_group needs a field over the group")
    slices, weights, failures = [], [], []
    for form, w in zip(mu_grid.forms, mu_grid.weights):
        try:
            frame = build_frame(mu_grid.alg, form)
            f_mu = partial_central_ft(f, form, frame)
            slices.append(propagate_mu(f_mu, spec, frame))
            weights.append(w)
        except NilpropError as exc:
            failures.append((form.mu.tolist(), str(exc)))
    if failures:
        labels = "; ".join(f"mu={mu}: {msg}" for mu, msg in failures[:5])
        raise NilpropError(f"{len(failures)} slice(s) failed: {labels}")
    return central_inversion(slices, weights, f.grid)


# ---------------------------------------------------------------------------
# free Euclidean propagator
# ---------------------------------------------------------------------------

def free_propagator(f: SampledField, t: float, path: str = "multiplier") -> SampledField:
    """exp(i t Laplacian) on a Euclidean grid.

    'multiplier' applies exp(-i t |xi|^2) spectrally; 'chirp' evaluates
    the chirp-Fourier-chirp factorisation with an exact off-grid DFT.
    The two agree on well-decayed data.
    """
    if t == 0.0:
        return f.with_values(f.values.copy())
    grid = f.grid
    n = grid.dim
    if path == "multiplier":
        k2 = np.zeros(grid.shape)
        for a in range(n):
            k = 2 * np.pi * np.fft.fftfreq(grid.N[a], d=grid.h[a])
            shape = [1] * n
            shape[a] = k.size
            k2 = k2 + (k**2).reshape(shape)
        out = np.fft.ifftn(np.exp(-1j * t * k2) * np.fft.fftn(f.values))
        return f.with_values(out)
    if path == "chirp":
        mesh = grid.mesh()
        r2 = np.einsum("...j,...j->...", mesh, mesh)
        g = np.exp(0.25j * r2 / t) * f.values
        freq_nodes = [ax / (2 * t) for ax in grid.axes()]
        ghat = _axis_dft(g, grid.axes(), freq_nodes, grid.cell_volume)
        pref = (4 * np.pi * abs(t)) ** (-n / 2) * np.exp(-0.25j * np.pi * n * np.sign(t))
        out = np.exp(0.25j * r2 / t) * pref * ghat
        return f.with_values(out)
    raise AlgebraSpecError(f"unknown free-propagator path {path!r}")


# ---------------------------------------------------------------------------
# heat semigroup
# ---------------------------------------------------------------------------

def heat_kernel_mu(s: float, frame: SymplecticFrame) -> GaussianKernel:
    """Slice kernel of the heat flow at time s > 0 (sub-Laplacian case A = I)."""
    if s <= 0:
        raise AlgebraSpecError("heat kernel needs s > 0")
    D = generator(None, frame, "D_mu")
    return oscillator_kernel(4j * np.pi * s, D).to_original(frame)


def heat_group(s: float, mu_grid: MuGrid, grid: Grid) -> SampledField:
    """Heat kernel on the group by central inversion of the slice kernels."""
    m = mu_grid.alg.m
    xgrid = grid.subgrid(range(m))
    slices, weights = [], []
    for form, w in zip(mu_grid.forms, mu_grid.weights):
        frame = build_frame(mu_grid.alg, form)
        kern = heat_kernel_mu(s, frame)
        slices.append(_sample_kernel(kern, xgrid, mu=form.mu))
        weights.append(w)
    out = central_inversion(slices, weights, grid)
    return out


def heat_mass(field: SampledField) -> float:
    return float(np.sum(field.values.real) * field.grid.cell_volume)


def heat_bound_constants(field: SampledField, s: float, m: int, l: int, eps: float = 0.5,
                         floor: float = 1e-10, max_log_c: float = 60.0):
    """Fitted constants of the two-sided Gaussian/exponential heat envelope.

    Upper: smallest C >= 1 with h <= C s^(-D/2) exp(-|x|^2/(4(1+eps)s)) exp(-|u|/(C s)).
    Lower: smallest C >= 1 with h >= C^-1 s^(-D/2) exp(-|x|^2/(4(1-eps)s)) exp(-C|u|/s),
    fitted over nodes where h is above `floor` times its peak (below that the
    inversion quadrature noise dominates).  Both fits are monotone in C and
    solved by bisection on log C; an infeasible side returns inf.
    """
    D = m + 2 * l
    mesh = field.grid.mesh()
    x2 = np.einsum("...j,...j->...", mesh[..., :m], mesh[..., :m])
    uabs = np.linalg.norm(mesh[..., m:], axis=-1)
    h = field.values.real
    peak = float(h.max())

    pos = h > 0
    logh = np.where(pos, np.log(np.where(pos, h, 1.0)), -np.inf)

    def upper_feasible(logC):
        C = np.exp(logC)
        lhs = logh + x2 / (4 * (1 + eps) * s) + 0.5 * D * np.log(s) + uabs / (C * s)
        return float(np.max(lhs[pos], initial=-np.inf)) <= logC

    trusted = h > floor * peak

    def lower_feasible(logC):
        C = np.exp(logC)
        rhs = -logC - 0.5 * D * np.log(s) - x2 / (4 * (1 - eps) * s) - C * uabs / s
        return bool(np.all(logh[trusted] >= rhs[trusted]))

    def bisect(feasible):
        lo, hi = 0.0, max_log_c
        if not feasible(hi):
            return np.inf
        if feasible(lo):
            return 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        return float(np.exp(hi))

    return bisect(upper_feasible), bisect(lower_feasible)


# ---------------------------------------------------------------------------
# regularised factorisation for singular coefficient matrices
# ---------------------------------------------------------------------------

def log_envelope_constant(kern: GaussianKernel, frame: SymplecticFrame, eps: float,
                          eps_prime: float, grid: Grid) -> float:
    """log of the fitted constant in |kernel(x)| <= C (eps' |mu|)^(-n) exp(-|x|^2 / 4 eps).

    Evaluated in original coordinates, where |R(mu) z| = |x|; returned in
    log space so divergent fits are representable.
    """
    k = kern.to_original(frame)
    mesh = grid.mesh()
    x2 = np.einsum("...j,...j->...", mesh, mesh)
    imq = np.einsum("...j,jk,...k->...", mesh, k.Q.imag, mesh)
    logabs = np.log(abs(k.prefactor)) + 0.5 * np.pi * imq
    weight = x2 / (4 * eps) + frame.n * np.log(eps_prime * frame.mu.norm)
    return float(np.max(logabs + weight))


def damping_envelope_ok(frame: SymplecticFrame, T: float, eps: float, eps_prime: float,
                        grid: Grid, sigmas=(0.0, 0.5, 1.0), log_ceiling: float = 12.0) -> bool:
    """Check the damped-kernel Gaussian envelope over the sigma segment."""
    D = generator(None, frame, "D_mu")
    for sigma in sigmas:
        tau = 4 * np.pi * T * eps_prime * (sigma + 1j)
        kern = oscillator_kernel(tau, D)
        if log_envelope_constant(kern, frame, eps, eps_prime, grid) > log_ceiling:
            return False
    return True


def fit_eps0(alg, T: float, eps: float, grid: Grid, mu_direction=None, max_halvings: int = 10,
             log_ceiling: float = 12.0) -> float:
    """Largest dyadic eps0 < eps for which the damping envelope holds.

    Tests eps' and |mu| at half the candidate, mirroring the admissible
    open ranges; returns 0.0 if no candidate passes.
    """
    direction = np.ones(alg.l) if mu_direction is None else np.asarray(mu_direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    for k in range(1, max_halvings + 1):
        e0 = eps / 2**k
        frame = build_frame(alg, CentralForm(0.5 * e0 * direction))
        if damping_envelope_ok(frame, T, eps, 0.5 * e0, grid, log_ceiling=log_ceiling):
            return e0
    return 0.0


@dataclass
class FactorizationReport:
    discrepancy: float
    eps_prime: float
    mu_norm: float
    a_eps_min_singular: float
    left_norm: float
    right_norm: float
    envelope_ok: bool
    oracle_fallback: bool

    def __str__(self):
        lines = [
            f"discrepancy: {self.discrepancy:.6e}",
            f"eps_prime: {self.eps_prime}",
            f"mu_norm: {self.mu_norm}",
            f"A_eps smallest singular value: {self.a_eps_min_singular:.6e}",
            f"left/right norms: {self.left_norm:.6e} / {self.right_norm:.6e}",
            f"envelope check: {'ok' if self.envelope_ok else 'failed'}",
            f"T-step: {'oracle' if self.oracle_fallback else 'kernel'}",
        ]
        return "\n".join(lines)


def _regularizing_generators(spec: PropagatorSpec, sched: RegularizationSchedule,
                             frame: SymplecticFrame):
    t = 4 * np.pi * spec.T
    S = generator(spec.A, frame, "S_of_mu")
    D = generator(None, frame, "D_mu")
    S_eps = sp_combine(t, SpGenerator(S=sched.eps_prime * D.S, kind="custom"), S)
    D_eps = ad_conjugate(t, S_eps, D)
    return S, D, S_eps, D_eps


def regularized_data(f_mu: SampledField, spec: PropagatorSpec, sched: RegularizationSchedule,
                     frame: SymplecticFrame) -> SampledField:
    """Damped slice data: f x_mu (kernel of the D_eps' damping factor)."""
    _, _, _, D_eps = _regularizing_generators(spec, sched, frame)
    tau = 4j * np.pi * spec.T * sched.eps_prime
    kern = oscillator_kernel(tau, D_eps).to_original(frame)
    return twisted_convolve(f_mu, _sample_kernel(kern, f_mu.grid, mu=frame.mu.mu), frame)


def regularized_propagate(f_mu: SampledField, spec: PropagatorSpec,
                          sched: RegularizationSchedule, frame: SymplecticFrame):
    """Damped propagation of a slice, evaluated through both factorisations.

    Left: propagate to time T (kernel when A is regular, otherwise the
    dense-exponential oracle), then damp with the complex-time frame
    kernel.  Right: damp with the transported generator first, then apply
    the combined-generator unitary kernel.  Both sides are returned with
    their L^2 discrepancy; analytically they coincide.
    """
    if spec.T is None or spec.T == 0:
        raise AlgebraSpecError("regularized_propagate needs a nonzero experiment time T")
    t = 4 * np.pi * spec.T
    S, D, S_eps, D_eps = _regularizing_generators(spec, sched, frame)

    # left factorisation: damp(T eps' (1+i)) o flow(T)
    oracle_fallback = not _nondegenerate(spec.A)
    if oracle_fallback:
        Tf = oracle_expm(f_mu, spec.at_time(spec.T), frame)
    else:
        Tf = propagate_mu(f_mu, spec.at_time(spec.T), frame)
    tau_damp = 4 * np.pi * spec.T * sched.eps_prime * (1 + 1j)
    P_kern = oscillator_kernel(tau_damp, D).to_original(frame)
    left = twisted_convolve(Tf, _sample_kernel(P_kern, f_mu.grid, mu=frame.mu.mu), frame)

    # right factorisation: flow of the combined generator o damp(D_eps')
    f_reg = regularized_data(f_mu, spec, sched, frame)
    gamma = schrodinger_kernel_sympl(t, S_eps).to_original(frame)
    right = twisted_convolve(f_reg, _sample_kernel(gamma, f_mu.grid, mu=frame.mu.mu), frame)

    A_eps = realified(S_eps.S @ frame.Jstd, tol=1e-6)
    sing = np.linalg.svd(A_eps, compute_uv=False)
    env_ok = damping_envelope_ok(frame, spec.T, sched.eps, sched.eps_prime, f_mu.grid)
    report = FactorizationReport(
        discrepancy=relative_l2(left, right),
        eps_prime=sched.eps_prime,
        mu_norm=frame.mu.norm,
        a_eps_min_singular=float(sing.min()),
        left_norm=left.norm2(frame.measure_weight),
        right_norm=right.norm2(frame.measure_weight),
        envelope_ok=env_ok,
        oracle_fallback=oracle_fallback,
    )
    return left, report
