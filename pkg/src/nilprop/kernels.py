"""Explicit Gaussian propagator kernels and their closed-form composition.

A kernel is a centered complex Gaussian

    value(z) = c * exp(-(i pi / 2) * z^T Q z)

stored as (prefactor c, complex symmetric matrix Q).  Real-time kernels
carry the Maslov-type phase exp(-i pi/4 k(JS) sgn t) in the prefactor;
complex-time (oscillator semigroup) kernels fix the square-root branch by
continuous tracking along the ray sigma -> sigma*tau from sigma = 0+,
normalised so that the kernel tends to the identity of the semigroup.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AlgebraSpecError,
    BranchTrackingFailedError,
    DegenerateGeneratorError,
    NonConvergentError,
    OutsideDomainError,
)
from .symplectic import (
    SpGenerator,
    SymplecticFrame,
    generator,
    matrix_function,
    signature_count,
    standard_j,
)

COORD_TAGS = ("symplectic_z", "original_x")


@dataclass(frozen=True)
class GaussianKernel:
    """Centered complex Gaussian c * exp(-(i pi/2) z^T Q z)."""

    prefactor: complex
    Q: np.ndarray
    coords: str = "symplectic_z"

    def __post_init__(self):
        if self.coords not in COORD_TAGS:
            raise AlgebraSpecError(f"unknown coordinate tag {self.coords!r}")
        Q = np.asarray(self.Q, dtype=complex)
        if np.max(np.abs(Q - Q.T)) > 1e-10 * max(1.0, np.max(np.abs(Q))):
            raise AlgebraSpecError("kernel quadratic form must be symmetric")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))

    @property
    def m(self) -> int:
        return self.Q.shape[0]

    def value(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an array of points with shape (..., m)."""
        z = np.asarray(points, dtype=float)
        quad = np.einsum("...j,jk,...k->...", z, self.Q, z)
        return self.prefactor * np.exp(-0.5j * np.pi * quad)

    def to_original(self, frame: SymplecticFrame) -> "GaussianKernel":
        """Express a symplectic-coordinate kernel in the original basis.

        Values are preserved: value_x(x) = value_z(R^{-1} x).
        """
        if self.coords == "original_x":
            return self
        Rinv = frame.R_inv
        return GaussianKernel(self.prefactor, Rinv.T @ self.Q @ Rinv, "original_x")

    def to_symplectic(self, frame: SymplecticFrame) -> "GaussianKernel":
        if self.coords == "symplectic_z":
            return self
        R = frame.R
        return GaussianKernel(self.prefactor, R.T @ self.Q @ R, "symplectic_z")

    def scaled(self, factor: complex) -> "GaussianKernel":
        return replace(self, prefactor=self.prefactor * factor)


@dataclass(frozen=True)
class KernelDomain:
    """Admissible time window (0, kappa) of a real-time kernel.

    kappa keeps both det sinh(tS) and det sinh(tS/2) away from zero, the
    stronger of the two conditions in circulation; any zeros of
    det sinh(tS/2) inside (0, kappa] are listed.  degenerate marks a
    singular generator, for which det sinh(tS) vanishes identically.
    """

    kappa: float
    singular_times: tuple
    degenerate: bool = False


def _gen_matrix(S) -> np.ndarray:
    return S.S if isinstance(S, SpGenerator) else np.asarray(S)


def kernel_domain(S, t_max: float = np.inf) -> KernelDomain:
    """kappa = min over eigenvalues of pi / |Im lambda|, capped at t_max."""
    M = _gen_matrix(S)
    if np.max(np.abs(M)) == 0.0:
        raise DegenerateGeneratorError("kernel domain of the zero generator is empty")
    w = np.linalg.eigvals(M)
    scale = float(np.max(np.abs(w)))
    degenerate = bool(np.min(np.abs(w)) <= 1e-12 * max(1.0, scale))
    im = np.abs(w.imag)
    im = im[im > 1e-12 * max(1.0, scale)]
    kappa = float(t_max) if im.size == 0 else min(float(t_max), float(np.pi / np.max(im)))
    singular = set()
    for a in np.unique(np.round(im, 15)):
        k = 1
        while 2 * np.pi * k / a <= kappa * (1 + 1e-12):
            singular.add(2 * np.pi * k / a)
            k += 1
    return KernelDomain(kappa=kappa, singular_times=tuple(sorted(singular)), degenerate=degenerate)


def _sinh_half_det_and_coth(t: float | complex, M: np.ndarray):
    arg = 0.5 * t * np.asarray(M, dtype=complex)
    w = np.linalg.eigvals(arg)
    det = complex(np.prod(np.sinh(w)))
    coth = matrix_function("coth", arg)
    return det, coth


def schrodinger_kernel_sympl(t: float, S, t_max: float = np.inf) -> GaussianKernel:
    """Real-time metaplectic kernel in symplectic coordinates.

    prefactor = exp(-i pi/4 k(JS) sgn t) / (2^n |det sinh(tS/2)|^(1/2)),
    Q = J coth(tS/2).  Needs a non-degenerate generator and 0 < |t| < kappa.
    """
    M = _gen_matrix(S)
    m = M.shape[0]
    n = m // 2
    if m % 2:
        raise AlgebraSpecError("generator dimension must be even")
    if abs(np.linalg.det(M)) <= 1e-12 * max(1.0, np.linalg.norm(M)) ** m:
        raise DegenerateGeneratorError("schrodinger kernel needs a non-degenerate generator")
    dom = kernel_domain(M, t_max=t_max)
    if t == 0 or abs(t) >= dom.kappa:
        raise OutsideDomainError(t, dom.kappa)
    J = standard_j(m)
    k = signature_count(J @ M)
    det, coth = _sinh_half_det_and_coth(t, M)
    pref = np.exp(-0.25j * np.pi * k * np.sign(t)) / (2**n * np.sqrt(abs(det)))
    return GaussianKernel(pref, J @ coth, "symplectic_z")


def schrodinger_kernel_orig(t: float, A: np.ndarray, frame: SymplecticFrame,
                            t_max: float = np.inf, check_tol: float = 1e-9) -> GaussianKernel:
    """Real-time kernel in the original basis, with the standard-coordinate
    identities (equal signature count, equal det sinh, conjugated quadratic
    form) verified at build time."""
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise AlgebraSpecError("coefficient matrix must be symmetric")
    if abs(np.linalg.det(A)) <= 1e-12 * max(1.0, np.linalg.norm(A)) ** A.shape[0]:
        raise DegenerateGeneratorError("degenerate coefficient matrix: use the regularized path")
    Smu = generator(A, frame, "S_mu")
    m, n = frame.m, frame.n
    dom = kernel_domain(Smu, t_max=t_max)
    if t == 0 or abs(t) >= dom.kappa:
        raise OutsideDomainError(t, dom.kappa)
    k = signature_count(frame.Jmu @ Smu.S)
    det, coth = _sinh_half_det_and_coth(t, Smu.S)
    Q = np.asarray(frame.Jmu, dtype=complex) @ coth

    # cross-checks against the symplectic-coordinate expression
    Sofmu = generator(A, frame, "S_of_mu")
    k_std = signature_count(frame.Jstd @ Sofmu.S)
    if k_std != k:
        raise DegenerateGeneratorError("signature counts disagree between coordinate systems")
    det_std, coth_std = _sinh_half_det_and_coth(t, Sofmu.S)
    if abs(det_std - det) > check_tol * max(1.0, abs(det)):
        raise DegenerateGeneratorError("det sinh disagrees between coordinate systems")
    lhs = frame.Jstd @ coth_std
    rhs = frame.R.T @ Q @ frame.R
    if np.max(np.abs(lhs - rhs)) > check_tol * max(1.0, np.max(np.abs(lhs))):
        raise DegenerateGeneratorError("quadratic forms disagree between coordinate systems")

    pref = np.exp(-0.25j * np.pi * k * np.sign(t)) / (2**n * np.sqrt(abs(det)))
    return GaussianKernel(pref, Q, "original_x")


# ---------------------------------------------------------------------------
# oscillator semigroup kernels (complex time)
# ---------------------------------------------------------------------------

def _tracked_sqrt_det(tau: complex, eigs: np.ndarray, det0: complex,
                      steps: int = 64, max_steps: int = 4096):
    """Continuous square root of sigma -> det sinh(sigma tau Lambda / 2).

    The argument starts from m*arg(tau) + arg(det0) at sigma -> 0+ (the
    asymptote det ~ (sigma tau / 2)^m det0) and is continued to sigma = 1
    without reduction mod 2pi.
    """
    m = len(eigs)
    base = m * np.angle(tau) + np.angle(det0)
    while steps <= max_steps:
        sigmas = np.linspace(0.0, 1.0, steps + 1)[1:]
        vals = np.prod(np.sinh(np.outer(sigmas, 0.5 * tau * eigs)), axis=1)
        if np.min(np.abs(vals)) == 0.0:
            raise BranchTrackingFailedError("det sinh vanishes on the tracking ray")
        asym = (sigmas[0] * tau / 2.0) ** m * det0
        first_jump = np.angle(vals[0] / asym)
        jumps = np.angle(vals[1:] / vals[:-1])
        if abs(first_jump) < 0.5 * np.pi and np.all(np.abs(jumps) < 0.5 * np.pi):
            arg = base + first_jump + float(np.sum(jumps))
            return np.sqrt(np.abs(vals[-1])) * np.exp(0.5j * arg)
        steps *= 2
    raise BranchTrackingFailedError("square-root tracking did not stabilise after refinement")


def oscillator_kernel(tau: complex, D, steps: int = 64) -> GaussianKernel:
    """Gaussian kernel of the damped/complex-time flow of a frame generator.

    For Im tau > 0 this is a contraction-semigroup kernel; on the real
    boundary it reproduces the real-time kernel including its Maslov
    phase.  Branch bookkeeping: prefactor = i^n / (2^n * sqrt_tracked),
    where sqrt_tracked continues the square root of det sinh(tau D / 2)
    from the identity end of the ray.
    """
    tau = complex(tau)
    if tau.imag < -1e-15 or tau == 0:
        raise AlgebraSpecError("oscillator kernel needs Im tau >= 0 and tau != 0")
    M = _gen_matrix(D)
    m = M.shape[0]
    n = m // 2
    eigs = np.linalg.eigvals(np.asarray(M, dtype=complex))
    det0 = complex(np.prod(eigs))
    if abs(det0) <= 1e-12:
        raise DegenerateGeneratorError("oscillator kernel needs an invertible generator")
    root = _tracked_sqrt_det(tau, eigs, det0, steps=steps)
    pref = (1j**n) / (2**n * root)
    coth = matrix_function("coth", 0.5 * tau * np.asarray(M, dtype=complex))
    Q = standard_j(m) @ coth
    kern = GaussianKernel(pref, Q, "symplectic_z")
    if tau.imag > 1e-12 and isinstance(D, SpGenerator) and D.kind == "D_mu":
        imQ = kern.Q.imag
        if np.max(np.linalg.eigvalsh(0.5 * (imQ + imQ.T))) >= 0:
            raise DegenerateGeneratorError("damped kernel is not square-integrable (Im Q not negative)")
    return kern


# ---------------------------------------------------------------------------
# closed-form twisted composition
# ---------------------------------------------------------------------------

def _principal_rsqrt_det(N: np.ndarray) -> complex:
    """prod of principal lambda^{-1/2} over the spectrum of N (Re N > 0)."""
    w = np.linalg.eigvals(N)
    return complex(np.prod(w ** (-0.5)))


def _compose_once(c1, Q1, c2, Q2, J, weight, eps):
    m = Q1.shape[0]
    M = Q1 + Q2 - (2j * eps / np.pi) * np.eye(m)
    Minv = np.linalg.inv(M)
    detfac = _principal_rsqrt_det(0.5j * M)
    Q = Q1 - (Q1 - J) @ Minv @ (Q1 + J)
    c = c1 * c2 * weight * detfac
    return c, 0.5 * (Q + Q.T)


def gaussian_twisted_compose(k1: GaussianKernel, k2: GaussianKernel, form,
                             eps_schedule=(1e-2, 5e-3, 2.5e-3),
                             conv_tol: float = 1e-5) -> GaussianKernel:
    """Kernel of the twisted convolution k1 x_J k2 (phase exp(-i pi x.J y)).

    Gaussians with a strictly damping combined form are composed directly;
    oscillatory (unitary) ones are damped by exp(-eps |y|^2) and the
    eps -> 0 limit is recovered by Richardson extrapolation over the
    schedule.  The measure weight |Pf| is taken from the frame when the
    kernels live in original coordinates.
    """
    if k1.coords != k2.coords or k1.m != k2.m:
        raise AlgebraSpecError("twisted composition needs kernels in matching coordinates")
    if isinstance(form, SymplecticFrame):
        if k1.coords == "original_x":
            J = form.Jmu
            weight = form.measure_weight
        else:
            J = form.Jstd
            weight = 1.0
    else:
        J = np.asarray(form, dtype=float)
        weight = 1.0
    Q1, Q2 = k1.Q, k2.Q
    M0 = Q1 + Q2
    if abs(np.linalg.det(M0)) < 1e-12:
        raise NonConvergentError("combined quadratic form is singular (composition at a caustic)")
    im_top = float(np.max(np.linalg.eigvalsh(M0.imag + M0.imag.T))) * 0.5
    if im_top < -1e-12:
        c, Q = _compose_once(k1.prefactor, Q1, k2.prefactor, Q2, J, weight, 0.0)
        return GaussianKernel(c, Q, k1.coords)
    e1, e2, e3 = eps_schedule
    f1 = _compose_once(k1.prefactor, Q1, k2.prefactor, Q2, J, weight, e1)
    f2 = _compose_once(k1.prefactor, Q1, k2.prefactor, Q2, J, weight, e2)
    f3 = _compose_once(k1.prefactor, Q1, k2.prefactor, Q2, J, weight, e3)
    # two Richardson levels assuming eps halves along the schedule
    c12, Q12 = 2 * f2[0] - f1[0], 2 * f2[1] - f1[1]
    c23, Q23 = 2 * f3[0] - f2[0], 2 * f3[1] - f2[1]
    c = (4 * c23 - c12) / 3.0
    Q = (4 * Q23 - Q12) / 3.0
    drift = max(
        abs(c23 - c12) / max(1.0, abs(c)),
        float(np.max(np.abs(Q23 - Q12))) / max(1.0, float(np.max(np.abs(Q)))),
    )
    if drift > conv_tol * 50:
        raise NonConvergentError(f"damping extrapolation did not stabilise (drift {drift:.2e})")
    return GaussianKernel(c, Q, k1.coords)
