"""Step-2 nilpotent Lie algebras and groups in exponential coordinates.

An algebra is stored as the pair of layer dimensions (m, l) together with
the structure tensor c, where c[s, j, k] is the U_s-coefficient of
[V_j, V_k].  The group sits on the same coordinate space; its product is
the degree-2 Campbell-Baker-Hausdorff formula

    (x, u) . (y, v) = (x + y, u + v + [x, y] / 2),

which is exact because all triple brackets vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlgebraSpecError

DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class LieAlgebra2Step:
    """Structure constants of g = g1 (+) g2 in a fixed orthonormal basis."""

    m: int
    l: int
    c: np.ndarray  # shape (l, m, m), c[s, j, k] = coefficient of U_s in [V_j, V_k]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if self.m <= 0 or self.l <= 0:
            raise AlgebraSpecError(f"layer dimensions must be positive, got m={self.m}, l={self.l}")
        if c.shape != (self.l, self.m, self.m):
            raise AlgebraSpecError(
                f"structure tensor shape {c.shape} does not match (l, m, m) = ({self.l}, {self.m}, {self.m})"
            )
        object.__setattr__(self, "c", c)

    def bracket(self, x, y):
        """[x, y] in g2 coordinates for x, y in g1."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.einsum("sjk,j,k->s", self.c, x, y)


@dataclass(frozen=True)
class GroupPoint:
    """Exponential coordinates (x, u) of a group element."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.u))):
            raise AlgebraSpecError("group point has non-finite coordinates")


@dataclass(frozen=True)
class CentralForm:
    """Covector mu on the central layer g2."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if not np.all(np.isfinite(mu)):
            raise AlgebraSpecError("central form has non-finite entries")
        object.__setattr__(self, "mu", mu)

    @property
    def norm(self):
        return float(np.linalg.norm(self.mu))


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __str__(self):
        lines = ["ok" if self.ok else "invalid"]
        lines += [f"violation: {v}" for v in self.violations]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def validate_algebra(alg: LieAlgebra2Step, tol: float = 1e-12) -> ValidationReport:
    """Check antisymmetry, surjectivity onto g2 and non-abelianness.

    The Jacobi identity needs no numerical check: in step 2 every double
    bracket lands in the centre and is killed by the next bracket, so it
    holds identically.  The report records this.
    """
    violations = []
    c = alg.c
    if np.max(np.abs(c + np.transpose(c, (0, 2, 1)))) > tol:
        violations.append("antisymmetry: c[s,j,k] != -c[s,k,j]")
    if np.max(np.abs(c)) <= tol:
        violations.append("non-abelian: structure tensor is identically zero")
    else:
        flat = c.reshape(alg.l, alg.m * alg.m)
        rank = np.linalg.matrix_rank(flat, tol=1e-10)
        if rank < alg.l:
            violations.append(
                f"surjectivity: flattened slices have rank {rank} < l = {alg.l} ([g1,g1] != g2)"
            )
    return ValidationReport(
        ok=not violations,
        violations=violations,
        notes=["Jacobi identity holds identically in step 2 (all double brackets vanish)"],
    )


def group_multiply(alg: LieAlgebra2Step, p: GroupPoint, q: GroupPoint) -> GroupPoint:
    """CBH product (p.x + q.x, p.u + q.u + [p.x, q.x]/2)."""
    if p.x.shape != (alg.m,) or q.x.shape != (alg.m,):
        raise AlgebraSpecError("g1 coordinate length does not match algebra dimension m")
    if p.u.shape != (alg.l,) or q.u.shape != (alg.l,):
        raise AlgebraSpecError("g2 coordinate length does not match algebra dimension l")
    return GroupPoint(p.x + q.x, p.u + q.u + 0.5 * alg.bracket(p.x, q.x))


def group_inverse(p: GroupPoint) -> GroupPoint:
    return GroupPoint(-p.x, -p.u)


def identity_point(alg: LieAlgebra2Step) -> GroupPoint:
    return GroupPoint(np.zeros(alg.m), np.zeros(alg.l))


def dilate(alg: LieAlgebra2Step, t: float, p: GroupPoint) -> GroupPoint:
    """Automorphic dilation (x, u) -> (t x, t^2 u); t must be nonzero."""
    if t == 0:
        raise AlgebraSpecError("dilation parameter t must be nonzero")
    return GroupPoint(t * p.x, t * t * p.u)


def homogeneous_norm(p: GroupPoint) -> float:
    """Surrogate gauge (|x|^4 + 16 |u|^2)^(1/4), homogeneous of degree 1."""
    x2 = float(np.dot(p.x, p.x))
    u2 = float(np.dot(p.u, p.u))
    return (x2 * x2 + 16.0 * u2) ** 0.25


def j_matrix(alg: LieAlgebra2Step, mu) -> np.ndarray:
    """Skew matrix of the central-frequency form: (J_mu)[j,k] = mu([V_j, V_k])."""
    mu = mu.mu if isinstance(mu, CentralForm) else np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.shape != (alg.l,):
        raise AlgebraSpecError("central form length does not match algebra dimension l")
    return np.einsum("s,sjk->jk", mu, alg.c)


def is_generic(alg: LieAlgebra2Step, mu, tol: float = DEGENERACY_TOL) -> bool:
    """True when |det J_mu| > tol * |mu|^m, i.e. mu lies in the generic cone."""
    mu = mu.mu if isinstance(mu, CentralForm) else np.atleast_1d(np.asarray(mu, dtype=float))
    r = np.linalg.norm(mu)
    if r == 0:
        return False
    return abs(np.linalg.det(j_matrix(alg, mu))) > tol * r**alg.m


@dataclass
class MwResult:
    is_mw: bool
    witness: CentralForm | None
    max_abs_det: float


def is_mw(alg: LieAlgebra2Step, trials: int = 32, seed: int = 0, tol: float = DEGENERACY_TOL) -> MwResult:
    """Monte-Carlo test for non-degeneracy of J_mu at generic mu.

    det J_mu is a polynomial in mu, so a single unit-sphere sample with
    |det J_mu| above tolerance certifies genericity.  Failure after all
    trials is reported with the largest determinant seen.
    """
    if trials <= 0:
        raise AlgebraSpecError("trials must be positive")
    if alg.m % 2 == 1:
        # odd-dimensional skew matrices are singular for every mu
        return MwResult(False, None, 0.0)
    rng = np.random.default_rng(seed)
    max_det = 0.0
    for _ in range(trials):
        mu = rng.standard_normal(alg.l)
        r = np.linalg.norm(mu)
        if r == 0.0:
            continue
        mu /= r
        d = abs(np.linalg.det(j_matrix(alg, mu)))
        if d > max_det:
            max_det = d
        if d > tol:
            return MwResult(True, CentralForm(mu), max_det)
    return MwResult(False, None, max_det)


@dataclass(frozen=True)
class MwLift:
    """Lift of a step-2 algebra to one whose generic central forms are symplectic.

    The lifted first layer is g1 x g1* (coordinates (x, xi)), the lifted
    centre is g2 x R (coordinates (u, s)).  The extra bracket slice pairs
    x against xi canonically, which makes J_(mu,lambda) invertible for
    every lambda != 0.
    """

    base: LieAlgebra2Step
    lifted: LieAlgebra2Step

    def embed_point(self, p: GroupPoint) -> GroupPoint:
        """(x, u) -> ((x, 0), (u, 0))."""
        m, l = self.base.m, self.base.l
        x = np.zeros(2 * m)
        x[:m] = p.x
        u = np.zeros(l + 1)
        u[:l] = p.u
        return GroupPoint(x, u)

    def subgroup_point(self, xi, s) -> GroupPoint:
        """(xi; s) -> ((0, xi), (0, s)), a point of the abelian complement."""
        m, l = self.base.m, self.base.l
        x = np.zeros(2 * m)
        x[m:] = np.asarray(xi, dtype=float)
        u = np.zeros(l + 1)
        u[l] = float(s)
        return GroupPoint(x, u)

    def central_form(self, mu, lam: float) -> CentralForm:
        return CentralForm(np.concatenate([np.atleast_1d(np.asarray(mu, dtype=float)), [float(lam)]]))

    @property
    def x_slice(self):
        return slice(0, self.base.m)

    @property
    def xi_slice(self):
        return slice(self.base.m, 2 * self.base.m)

    @property
    def u_slice(self):
        return slice(0, self.base.l)

    @property
    def s_index(self):
        return self.base.l


def mw_lift(alg: LieAlgebra2Step) -> MwLift:
    """Build the lifted algebra h = (g1 x g1*) (+) (g2 x R) with the pairing bracket."""
    m, l = alg.m, alg.l
    c = np.zeros((l + 1, 2 * m, 2 * m))
    c[:l, :m, :m] = alg.c
    # new central slice: [(V, xi), (V', xi')] -> xi'(V) - xi(V')
    c[l, :m, m:] = np.eye(m)
    c[l, m:, :m] = -np.eye(m)
    return MwLift(base=alg, lifted=LieAlgebra2Step(2 * m, l + 1, c))


# ---------------------------------------------------------------------------
# canonical examples
# ---------------------------------------------------------------------------

def heisenberg(n: int = 1) -> LieAlgebra2Step:
    """Heisenberg algebra h_n: m = 2n, l = 1, [V_j, V_{n+j}] = U."""
    m = 2 * n
    c = np.zeros((1, m, m))
    for j in range(n):
        c[0, j, n + j] = 1.0
        c[0, n + j, j] = -1.0
    return LieAlgebra2Step(m, 1, c)


def free_two_step(m: int) -> LieAlgebra2Step:
    """Free step-2 algebra on m generators; l = m(m-1)/2, one U per pair j<k."""
    l = m * (m - 1) // 2
    c = np.zeros((l, m, m))
    s = 0
    for j in range(m):
        for k in range(j + 1, m):
            c[s, j, k] = 1.0
            c[s, k, j] = -1.0
            s += 1
    return LieAlgebra2Step(m, l, c)


# ---------------------------------------------------------------------------
# algebra specification files
# ---------------------------------------------------------------------------
#
# Grammar (one statement per line, '#' starts a comment):
#
#   m = <positive integer>
#   l = <positive integer>
#   c <s> <j> <k> <value>     # 0-based indices, j < k; c[s,k,j] = -value implied
#
# 'm' and 'l' must appear before any 'c' entry.  Unlisted entries are zero.

def parse_algebra(text: str) -> LieAlgebra2Step:
    m = None
    l = None
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in ("m", "l"):
                raise AlgebraSpecError(f"unknown key {key!r}", line=lineno)
            try:
                ivalue = int(value)
            except ValueError:
                raise AlgebraSpecError(f"{key} must be an integer, got {value!r}", line=lineno)
            if ivalue <= 0:
                raise AlgebraSpecError(f"{key} must be positive", line=lineno)
            if key == "m":
                m = ivalue
            else:
                l = ivalue
            continue
        parts = line.split()
        if parts[0] != "c":
            raise AlgebraSpecError(f"expected 'm =', 'l =' or 'c s j k value', got {raw.strip()!r}", line=lineno)
        if len(parts) != 5:
            raise AlgebraSpecError("'c' entries take exactly four fields: s j k value", line=lineno)
        if m is None or l is None:
            raise AlgebraSpecError("'m' and 'l' must be declared before 'c' entries", line=lineno)
        try:
            s, j, k = (int(p) for p in parts[1:4])
            value = float(parts[4])
        except ValueError:
            raise AlgebraSpecError(f"could not parse 'c' entry {raw.strip()!r}", line=lineno)
        if not (0 <= s < l):
            raise AlgebraSpecError(f"slice index s={s} out of range [0, {l})", line=lineno)
        if not (0 <= j < m and 0 <= k < m):
            raise AlgebraSpecError(f"indices (j,k)=({j},{k}) out of range [0, {m})", line=lineno)
        if j >= k:
            raise AlgebraSpecError("'c' entries require j < k (antisymmetric completion is implied)", line=lineno)
        entries.append((s, j, k, value))
    if m is None or l is None:
        raise AlgebraSpecError("file must declare both 'm' and 'l'")
    c = np.zeros((l, m, m))
    for s, j, k, value in entries:
        c[s, j, k] = value
        c[s, k, j] = -value
    return LieAlgebra2Step(m, l, c)


def load_algebra(path) -> LieAlgebra2Step:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_algebra(fh.read())


def format_algebra(alg: LieAlgebra2Step) -> str:
    lines = [f"m = {alg.m}", f"l = {alg.l}"]
    for s in range(alg.l):
        for j in range(alg.m):
            for k in range(j + 1, alg.m):
                v = alg.c[s, j, k]
                if v != 0.0:
                    lines.append(f"c {s} {j} {k} {v!r}")
    return "\n".join(lines) + "\n"
