"""Periodic cocycles, closed-form perturbation paths, and path verification.

A periodic cocycle is a finite sequence of invertible matrices A_1..A_l
(stored 0-based as ``mats[0..l-1]``) acting along a periodic orbit:
``mats[i]`` maps position i to position i+1 mod l.  A perturbation path
composes each matrix on the right with a generator family G_i(t),
``A_i(t) = A_i @ G_i(t)``, where every generator is a closed form in t and
equals the identity exactly at t = 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .utils import freeze, opnorm


class GroupTag(str, enum.Enum):
    GL = "GL"
    SL = "SL"
    SP = "SP"


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances shared across the package.

    symp / det bound the symplectic defect and determinant drift accepted as
    group membership; eig is the relative eigenvalue-coincidence threshold;
    hyp the hyperbolicity margin (no modulus inside [1-hyp, 1+hyp]); angle the
    subspace residual; q_max the largest denominator for rational angle
    targets; k_samples the number of t-samples used when verifying a path.
    """

    symp: float = 1e-9
    det: float = 1e-9
    eig: float = 1e-8
    hyp: float = 1e-6
    angle: float = 1e-9
    q_max: int = 64
    k_samples: int = 11

    def __post_init__(self):
        for name in ("symp", "det", "eig", "hyp", "angle"):
            if getattr(self, name) <= 0:
                raise DomainError(f"tolerance {name} must be positive")
        if self.q_max < 2:
            raise DomainError("q_max must be at least 2")
        if self.k_samples < 3:
            raise DomainError("k_samples must be at least 3")

    @classmethod
    def from_dict(cls, data: dict) -> "Tolerances":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown tolerance fields: {sorted(unknown)}")
        return cls(**data)


DEFAULT_TOLERANCES = Tolerances()


def standard_j(dim: int) -> np.ndarray:
    """The block matrix [[0, I], [-I, 0]] of the standard symplectic form."""
    if dim % 2 != 0 or dim <= 0:
        raise DomainError(f"symplectic form needs a positive even dimension, got {dim}")
    d = dim // 2
    j = np.zeros((dim, dim))
    j[:d, d:] = np.eye(d)
    j[d:, :d] = -np.eye(d)
    return j


def symplectic_defect(m: np.ndarray) -> float:
    """Operator norm of M^T J M - J."""
    m = np.asarray(m, dtype=float)
    j = standard_j(m.shape[0])
    return opnorm(m.T @ j @ m - j)


def group_defect(m: np.ndarray, group: GroupTag) -> float:
    """Distance of a single matrix from its group constraint (0.0 for GL)."""
    if group is GroupTag.SL:
        return abs(float(np.linalg.det(m)) - 1.0)
    if group is GroupTag.SP:
        return symplectic_defect(m)
    return 0.0


@dataclass(frozen=True, eq=False)
class PeriodicCocycle:
    """A period, a group tag, a bound C and the matrices A_1..A_l.

    Matrices are stored read-only; ``matrix(i)`` wraps the index mod the
    period.  ``bound`` dominates max(||A_i||, ||A_i^-1||) for every index.
    """

    group: GroupTag
    dim: int
    period: int
    bound: float
    mats: tuple[np.ndarray, ...]
    invs: tuple[np.ndarray, ...]

    @classmethod
    def make(cls, group: GroupTag | str, mats: Sequence[np.ndarray],
             bound: float | None = None,
             tol: Tolerances = DEFAULT_TOLERANCES) -> "PeriodicCocycle":
        group = GroupTag(group)
        mats = [np.asarray(m, dtype=float) for m in mats]
        if not mats:
            raise DomainError("a cocycle needs at least one matrix")
        dim = mats[0].shape[0]
        violations: list[str] = []
        if any(m.shape != (dim, dim) for m in mats):
            raise DomainError("all matrices must be square with equal dimension")
        if group is GroupTag.SP and dim % 2 != 0:
            raise DomainError("SP requires an even dimension")
        invs = []
        measured = 0.0
        for i, m in enumerate(mats):
            if not np.all(np.isfinite(m)):
                violations.append(f"matrix {i + 1}: non-finite entry")
                continue
            try:
                inv = np.linalg.inv(m)
            except np.linalg.LinAlgError:
                violations.append(f"matrix {i + 1}: singular")
                continue
            invs.append(inv)
            measured = max(measured, opnorm(m), opnorm(inv))
            defect = group_defect(m, group)
            limit = tol.det if group is GroupTag.SL else tol.symp
            if group is not GroupTag.GL and defect > limit:
                violations.append(
                    f"matrix {i + 1}: {group.value} defect {defect:.3e} exceeds {limit:.1e}")
        if violations:
            raise PreconditionError("; ".join(violations))
        if bound is None:
            bound = max(measured * (1 + 1e-12), 1.0 + 1e-12)
        elif measured > bound:
            raise PreconditionError(
                f"measured bound {measured:.6g} exceeds declared bound {bound:.6g}")
        return cls(group=group, dim=dim, period=len(mats), bound=float(bound),
                   mats=tuple(freeze(m) for m in mats),
                   invs=tuple(freeze(v) for v in invs))

    @classmethod
    def unchecked(cls, group: GroupTag, mats: Sequence[np.ndarray],
                  bound: float | None = None) -> "PeriodicCocycle":
        """Fast constructor for internally produced matrices (inverses still
        computed; invariants are the caller's responsibility)."""
        mats = [np.asarray(m, dtype=float) for m in mats]
        invs = [np.linalg.inv(m) for m in mats]
        if bound is None:
            bound = max(max(opnorm(m) for m in mats),
                        max(opnorm(v) for v in invs)) * (1 + 1e-12)
        return cls(group=group, dim=mats[0].shape[0], period=len(mats),
                   bound=float(bound), mats=tuple(freeze(m) for m in mats),
                   invs=tuple(freeze(v) for v in invs))

    def matrix(self, i: int) -> np.ndarray:
        return self.mats[i % self.period]

    def inverse(self, i: int) -> np.ndarray:
        return self.invs[i % self.period]

    def measured_bound(self) -> float:
        return max(max(opnorm(m) for m in self.mats),
                   max(opnorm(v) for v in self.invs))

    def allclose(self, other: "PeriodicCocycle", atol: float = 0.0) -> bool:
        return (self.period == other.period and self.dim == other.dim
                and all(np.allclose(a, b, rtol=0, atol=atol)
                        for a, b in zip(self.mats, other.mats)))


# ---------------------------------------------------------------------------
# Path generators
# ---------------------------------------------------------------------------

class PathGenerator:
    """A closed-form family t -> G(t) with G(0) = I exactly."""

    dim: int

    def matrix(self, t: float) -> np.ndarray:
        if t == 0.0:
            return np.eye(self.dim)
        return self._matrix(t)

    def _matrix(self, t: float) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def is_identity(self) -> bool:
        return False


@dataclass(frozen=True)
class Identity(PathGenerator):
    dim: int

    def _matrix(self, t: float) -> np.ndarray:
        return np.eye(self.dim)

    def is_identity(self) -> bool:
        return True


@dataclass(frozen=True)
class ShearInterp(PathGenerator):
    """G(t) = I + t*S."""

    shear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shear", freeze(self.shear))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.shear.shape[0]

    def _matrix(self, t: float) -> np.ndarray:
        return np.eye(self.dim) + t * self.shear


@dataclass(frozen=True)
class RotationInterp(PathGenerator):
    """Rotation by t*theta in the coordinate plane (a, b), 0-based axes."""

    dim: int
    axes: tuple[int, int]
    theta: float

    def __post_init__(self):
        a, b = self.axes
        if not (0 <= a < self.dim and 0 <= b < self.dim and a != b):
            raise DomainError(f"bad rotation plane {self.axes} in dimension {self.dim}")

    def _matrix(self, t: float) -> np.ndarray:
        a, b = self.axes
        g = np.eye(self.dim)
        c, s = math.cos(t * self.theta), math.sin(t * self.theta)
        g[a, a] = c
        g[b, b] = c
        g[a, b] = s
        g[b, a] = -s
        return g


@dataclass(frozen=True)
class DiagPower(PathGenerator):
    """G(t) = D^t for a positive diagonal D, computed as exp(t*log D)."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).ravel()
        if np.any(d <= 0):
            raise DomainError("DiagPower requires strictly positive diagonal entries")
        object.__setattr__(self, "diag", freeze(d))
        object.__setattr__(self, "_log", freeze(np.log(d)))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.diag.shape[0]

    def _matrix(self, t: float) -> np.ndarray:
        if t == 1.0:
            return np.diag(self.diag)
        return np.diag(np.exp(t * self._log))  # type: ignore[attr-defined]


@dataclass(frozen=True)
class BlockEmbed(PathGenerator):
    """inner acting on the first k coordinates of ``basis``:
    G(t) = P @ blockdiag(inner(t), I) @ P^-1."""

    inner: PathGenerator
    basis: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.basis, dtype=float)
        if p.shape[0] != p.shape[1]:
            raise DomainError("embedding basis must be square")
        if self.inner.dim > p.shape[0]:
            raise DomainError("inner generator larger than the embedding")
        object.__setattr__(self, "basis", freeze(p))
        object.__setattr__(self, "_basis_inv", freeze(np.linalg.inv(p)))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.basis.shape[0]

    def _matrix(self, t: float) -> np.ndarray:
        k = self.inner.dim
        core = np.eye(self.dim)
        core[:k, :k] = self.inner.matrix(t)
        return self.basis @ core @ self._basis_inv  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Compose(PathGenerator):
    """Left-to-right product: G(t) = F_1(t) @ F_2(t) @ ... @ F_m(t)."""

    factors: tuple[PathGenerator, ...]

    def __post_init__(self):
        if not self.factors:
            raise DomainError("Compose needs at least one factor")
        dims = {f.dim for f in self.factors}
        if len(dims) != 1:
            raise DomainError("Compose factors must share one dimension")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.factors[0].dim

    def _matrix(self, t: float) -> np.ndarray:
        g = self.factors[0].matrix(t)
        for f in self.factors[1:]:
            g = g @ f.matrix(t)
        return g


def compose(factors: Iterable[PathGenerator]) -> PathGenerator:
    """Compose, dropping identities and unwrapping singletons."""
    real = [f for f in factors if not f.is_identity()]
    if not real:
        raise DomainError("compose() of identities needs an explicit dimension")
    if len(real) == 1:
        return real[0]
    return Compose(tuple(real))


# ---------------------------------------------------------------------------
# Perturbation paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PerturbationPath:
    """A base cocycle plus one generator per index and a declared size bound.

    ``meta`` carries per-stage bookkeeping (budgets consumed, indices
    touched, constants exposed for audit); it never affects evaluation.
    """

    base: PeriodicCocycle
    gens: tuple[PathGenerator, ...]
    epsilon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.gens) != self.base.period:
            raise DomainError("one generator per index is required")
        if any(g.dim != self.base.dim for g in self.gens):
            raise DomainError("generator dimension mismatch")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")

    def is_identity(self) -> bool:
        return all(g.is_identity() for g in self.gens)


def identity_path(base: PeriodicCocycle, epsilon: float,
                  meta: dict | None = None) -> PerturbationPath:
    return PerturbationPath(base=base,
                            gens=tuple(Identity(base.dim) for _ in range(base.period)),
                            epsilon=epsilon, meta=meta or {})


def evaluate_path(path: PerturbationPath, t: float) -> PeriodicCocycle:
    """The cocycle (A_i G_i(t))_i; at t = 0 the base matrices are returned
    bitwise unchanged."""
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"path parameter t={t} outside [0, 1]")
    if t == 0.0:
        return path.base
    mats = []
    for i in range(path.base.period):
        g = path.gens[i]
        mats.append(path.base.mats[i] if g.is_identity()
                    else path.base.mats[i] @ g.matrix(t))
    return PeriodicCocycle.unchecked(path.base.group, mats)


@dataclass(frozen=True)
class PathFailure:
    t: float
    index: int
    kind: str
    value: float


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of sampling a path at equispaced t including both endpoints."""

    passed: bool
    epsilon: float
    samples: tuple[float, ...]
    deviation_per_sample: tuple[float, ...]
    max_deviation: float
    group_defect_max: float
    group_tolerance: float
    failures: tuple[PathFailure, ...]

    def summary(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (f"{state}: max deviation {self.max_deviation:.3e} vs epsilon "
                f"{self.epsilon:.3e}, group defect {self.group_defect_max:.3e}")


def verify_path(path: PerturbationPath,
                tol: Tolerances = DEFAULT_TOLERANCES) -> VerificationReport:
    """Check the path's size bound and group closure at k_samples t values.

    A singular evaluated matrix is recorded as a hard failure, never skipped.
    """
    k = tol.k_samples
    samples = tuple(i / (k - 1) for i in range(k))
    base = path.base
    group_tol = {GroupTag.GL: float("inf"), GroupTag.SL: tol.det,
                 GroupTag.SP: tol.symp}[base.group]
    per_sample: list[float] = []
    failures: list[PathFailure] = []
    defect_max = 0.0
    for t in samples:
        worst = 0.0
        for i in range(base.period):
            g = path.gens[i]
            if g.is_identity():
                continue
            gt = g.matrix(t)
            at = base.mats[i] @ gt
            try:
                at_inv = np.linalg.inv(at)
            except np.linalg.LinAlgError:
                failures.append(PathFailure(t, i, "singular", float("inf")))
                continue
            dev = max(opnorm(base.mats[i] - at), opnorm(base.invs[i] - at_inv))
            if dev >= path.epsilon:
                failures.append(PathFailure(t, i, "deviation", dev))
            worst = max(worst, dev)
            defect = group_defect(at, base.group)
            defect_max = max(defect_max, defect)
            if defect > group_tol:
                failures.append(PathFailure(t, i, "group-defect", defect))
        per_sample.append(worst)
    passed = not failures
    return VerificationReport(
        passed=passed, epsilon=path.epsilon, samples=samples,
        deviation_per_sample=tuple(per_sample),
        max_deviation=max(per_sample) if per_sample else 0.0,
        group_defect_max=defect_max, group_tolerance=group_tol,
        failures=tuple(failures))


def path_deviation(path: PerturbationPath, t: float) -> float:
    """max over indices of max(||A_i - A_i(t)||, ||A_i^-1 - A_i(t)^-1||)."""
    base = path.base
    worst = 0.0
    for i in range(base.period):
        g = path.gens[i]
        if g.is_identity():
            continue
        at = base.mats[i] @ g.matrix(t)
        worst = max(worst, opnorm(base.mats[i] - at),
                    opnorm(base.invs[i] - np.linalg.inv(at)))
    return worst


def extend_period(cocycle: PeriodicCocycle, multiple: int) -> PeriodicCocycle:
    """The same cocycle declared with period multiple*l (matrices repeated)."""
    if multiple < 1:
        raise DomainError("period multiple must be >= 1")
    mats = [cocycle.matrix(i) for i in range(cocycle.period * multiple)]
    return replace(cocycle, period=len(mats), mats=tuple(mats),
                   invs=tuple(cocycle.inverse(i) for i in range(len(mats))))
