"""Symplectic linear algebra: membership, complements, Lagrangian subspaces,
and the bounded changes of basis every symplectic construction conjugates
through.

Throughout, omega(u, v) = u^T J v with J = [[0, I], [-I, 0]], and the angle
between subspaces is the smallest principal angle; the zero subspace is at
infinite angle from everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import GroupTag, PeriodicCocycle, Tolerances, DEFAULT_TOLERANCES, standard_j
from .errors import DegenerateFrameError, DomainError, PreconditionError
from .utils import freeze, opnorm, orthonormal_columns


@lru_cache(maxsize=32)
def _cached_j(dim: int) -> np.ndarray:
    return freeze(standard_j(dim))


@dataclass(frozen=True)
class StandardForm:
    """The standard symplectic form on R^(2d)."""

    dim: int

    def __post_init__(self):
        if self.dim % 2 != 0 or self.dim <= 0:
            raise DomainError("StandardForm needs a positive even dimension")

    @property
    def j(self) -> np.ndarray:
        return _cached_j(self.dim)

    def omega(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ self.j @ v)


def is_symplectic(m: np.ndarray, tol: float = 1e-9) -> tuple[bool, float]:
    """(membership, defect) where defect = ||M^T J M - J||.

    Equivalent to checking the three block relations A^T C = C^T A,
    B^T D = D^T B, A^T D - C^T B = I.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise DomainError("matrix must be square")
    if m.shape[0] % 2 != 0:
        raise DomainError("symplectic membership needs an even dimension")
    j = _cached_j(m.shape[0])
    defect = opnorm(m.T @ j @ m - j)
    return defect <= tol, defect


@dataclass(frozen=True, eq=False)
class Subspace:
    """A subspace stored as an orthonormal column frame (computed once)."""

    frame: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frame, dtype=float)
        if f.ndim != 2:
            raise DomainError("frame must be a 2-D array of columns")
        if f.shape[1] > 0:
            gram = f.T @ f
            if opnorm(gram - np.eye(f.shape[1])) > 1e-10:
                raise DomainError("frame columns are not orthonormal")
        object.__setattr__(self, "frame", freeze(f))

    @classmethod
    def from_spanning(cls, vectors: np.ndarray, tol: float = 1e-12) -> "Subspace":
        """Orthonormalise a spanning set; rank deficiency is an error."""
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        basis = orthonormal_columns(v, tol)
        if v.shape[1] > 0 and basis.shape[1] < v.shape[1]:
            raise PreconditionError(
                f"spanning set of {v.shape[1]} vectors has rank {basis.shape[1]}")
        return cls(basis)

    @classmethod
    def zero(cls, ambient: int) -> "Subspace":
        return cls(np.zeros((ambient, 0)))

    @classmethod
    def span(cls, *vectors: np.ndarray) -> "Subspace":
        return cls.from_spanning(np.column_stack(vectors))

    @classmethod
    def coordinate(cls, ambient: int, axes) -> "Subspace":
        return cls(np.eye(ambient)[:, list(axes)])

    @property
    def ambient_dim(self) -> int:
        return self.frame.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.frame @ (self.frame.T @ v)

    def apply(self, m: np.ndarray) -> "Subspace":
        """Image under an invertible matrix."""
        return Subspace.from_spanning(m @ self.frame)

    def contains(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        n = np.linalg.norm(v)
        if n == 0:
            return True
        return np.linalg.norm(v - self.project(v)) <= tol * n


def principal_angles(e: Subspace, f: Subspace) -> np.ndarray:
    """All principal angles (ascending); empty if either subspace is zero."""
    if e.dim == 0 or f.dim == 0:
        return np.array([])
    s = np.linalg.svd(e.frame.T @ f.frame, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def smallest_angle(e: Subspace, f: Subspace) -> float:
    """Smallest principal angle; +inf when either subspace is zero."""
    angles = principal_angles(e, f)
    if angles.size == 0:
        return float("inf")
    return float(angles.min())


def subspace_distance(e: Subspace, f: Subspace) -> float:
    """||P_E - P_F|| (= sin of the largest principal angle for equal dims)."""
    pe = e.frame @ e.frame.T
    pf = f.frame @ f.frame.T
    return opnorm(pe - pf)


def omega_gram(e: Subspace) -> np.ndarray:
    """Matrix of the symplectic form restricted to the frame."""
    j = _cached_j(e.ambient_dim)
    return e.frame.T @ j @ e.frame


def symplectic_complement(e: Subspace) -> Subspace:
    """E^omega: all v with omega(v, u) = 0 for every u in E."""
    n = e.ambient_dim
    if e.dim == 0:
        return Subspace(np.eye(n))
    j = _cached_j(n)
    constraints = (j @ e.frame).T          # rows r with r @ v = 0
    _, s, vh = np.linalg.svd(constraints)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    return Subspace(vh[rank:].T)


def is_lagrangian(e: Subspace, tol: float = 1e-9) -> bool:
    """dim d and the form vanishes on the frame (max |omega(b_i, b_j)| <= tol)."""
    if e.ambient_dim % 2 != 0:
        raise DomainError("Lagrangian test needs an even ambient dimension")
    if e.dim != e.ambient_dim // 2:
        return False
    return float(np.abs(omega_gram(e)).max()) <= tol


def is_symplectic_subspace(e: Subspace, tol: float = 1e-9) -> bool:
    """The restricted form is non-degenerate (its smallest singular value > tol)."""
    if e.dim == 0 or e.dim % 2 != 0:
        return False
    s = np.linalg.svd(omega_gram(e), compute_uv=False)
    return float(s[-1]) > tol


def frame_to_standard(frame: np.ndarray, eps: float | None = None,
                      tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Near-identity symplectic A with A e_i = E_i for a near-standard
    Lagrangian frame (e_1..e_d).

    Construction: stack the frame into blocks (A; C), set D = (A^T)^-1, and
    invert [[A, 0], [C, D]] by its closed block formula.  A frame whose top
    block has condition number above 1e8 is rejected, not regularised.
    """
    m = np.asarray(frame, dtype=float)
    if m.ndim != 2 or m.shape[0] != 2 * m.shape[1]:
        raise DomainError("frame must be 2d x d")
    d = m.shape[1]
    pairwise = m.T @ _cached_j(2 * d) @ m
    if float(np.abs(pairwise).max()) > max(tol.symp, 1e-9) * 10:
        raise PreconditionError(
            f"frame is not Lagrangian: max |omega(e_i,e_j)| = {np.abs(pairwise).max():.3e}")
    a_blk = m[:d, :]
    c_blk = m[d:, :]
    if np.linalg.cond(a_blk) > 1e8:
        raise DegenerateFrameError("top block of the frame is numerically singular")
    a_inv = np.linalg.inv(a_blk)
    # inverse of [[A, 0], [C, (A^T)^-1]] is [[A^-1, 0], [-A^T C A^-1, A^T]]
    out = np.zeros((2 * d, 2 * d))
    out[:d, :d] = a_inv
    out[d:, :d] = -a_blk.T @ c_blk @ a_inv
    out[d:, d:] = a_blk.T
    if eps is not None and opnorm(out - np.eye(2 * d)) >= eps:
        raise PreconditionError(
            f"frame too far from standard: ||A - I|| = {opnorm(out - np.eye(2 * d)):.3e} >= {eps}")
    return out


def delta_for_eps(eps: float, d: int) -> float:
    """Frozen admissible entrywise frame distance guaranteeing
    ||frame_to_standard(frame) - I|| < eps (calibrated empirically)."""
    return eps / (4.0 * np.sqrt(d) + 4.0)


def lagrangian_to_standard(lagrangian: Subspace,
                           tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Symplectic A with A(L) = R^d x {0}^d and ||A||, ||A^-1|| bounded.

    For an orthonormal basis U of L the columns (U, -J U) form a basis that
    is simultaneously orthogonal and symplectic, so A = (U, -JU)^T is
    orthogonal with norm exactly 1.
    """
    n = lagrangian.ambient_dim
    if not is_lagrangian(lagrangian, max(tol.symp, 1e-9) * 10):
        raise PreconditionError("input subspace is not Lagrangian")
    u = lagrangian.frame
    j = _cached_j(n)
    s = np.hstack([u, -j @ u])
    return s.T


def symplectic_basis_for(lagrangian: Subspace) -> np.ndarray:
    """Columns (q_1..q_d, p_1..p_d) of a symplectic orthogonal basis whose
    first half spans the given Lagrangian subspace."""
    return lagrangian_to_standard(lagrangian).T


def dual_frame(q: np.ndarray) -> np.ndarray:
    """For an isotropic frame Q, the frame P = -J Q (Q^T Q)^-1 satisfying
    omega(q_i, p_j) = delta_ij and omega(p_i, p_j) = 0."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    j = _cached_j(q.shape[0])
    return -j @ q @ np.linalg.inv(q.T @ q)


def _pair_basis_of_form(form: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Columns (q's then p's) normalising a non-degenerate antisymmetric form
    to the standard block shape, via the real Schur form of the skew matrix."""
    import scipy.linalg

    k = form.shape[0]
    if k % 2 != 0:
        raise DomainError("antisymmetric form on odd dimension is degenerate")
    t, z = scipy.linalg.schur((form - form.T) / 2.0, output="real")
    qs, ps = [], []
    for b in range(0, k, 2):
        a = t[b, b + 1]
        if abs(a) <= tol:
            raise PreconditionError("form is numerically degenerate")
        if a > 0:
            qs.append(z[:, b])
            ps.append(z[:, b + 1] / a)
        else:
            qs.append(z[:, b + 1])
            ps.append(z[:, b] / (-a))
    return np.column_stack(qs + ps)


def symplectic_completion(isotropic: np.ndarray) -> np.ndarray:
    """Complete an isotropic frame (columns q_1..q_k) to a full basis
    (q_1..q_d, p_1..p_d) with omega(q_i, p_j) = delta_ij, omega(q,q) =
    omega(p,p) = 0; the first k columns are the given vectors unchanged."""
    q = np.atleast_2d(np.asarray(isotropic, dtype=float))
    n, k = q.shape
    if n % 2 != 0:
        raise DomainError("ambient dimension must be even")
    d = n // 2
    if k > d:
        raise DomainError("isotropic frame larger than a Lagrangian")
    j = _cached_j(n)
    gram = q.T @ j @ q
    if k and float(np.abs(gram).max()) > 1e-8 * max(1.0, opnorm(q) ** 2):
        raise PreconditionError("prescribed frame is not isotropic")
    p = dual_frame(q) if k else np.zeros((n, 0))
    if k == d:
        return np.hstack([q, p])
    # orthonormal basis of the omega-complement of span(q, p)
    span = np.hstack([q, p])
    constraints = (j @ span).T
    _, s, vh = np.linalg.svd(constraints)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0]))) if s.size else 0
    w = vh[rank:].T
    form_w = w.T @ j @ w
    pairs = _pair_basis_of_form(form_w)
    m = w.shape[1] // 2
    q_rest = w @ pairs[:, :m]
    p_rest = w @ pairs[:, m:]
    return np.hstack([q, q_rest, p, p_rest])


def conjugate_cocycle(cocycle: PeriodicCocycle, frames,
                      tol: Tolerances = DEFAULT_TOLERANCES
                      ) -> tuple[PeriodicCocycle, float]:
    """(P_{i+1}^-1 A_i P_i)_i together with max(||P_i||, ||P_i^-1||).

    For an SP cocycle every frame must be symplectic within tolerance so the
    group tag survives the conjugation.
    """
    frames = [np.asarray(p, dtype=float) for p in frames]
    if len(frames) != cocycle.period:
        raise PreconditionError(
            f"need {cocycle.period} frames, got {len(frames)}")
    if any(p.shape != (cocycle.dim, cocycle.dim) for p in frames):
        raise PreconditionError("frame dimension mismatch")
    inverses = []
    bound = 0.0
    for i, p in enumerate(frames):
        if cocycle.group is GroupTag.SP:
            ok, defect = is_symplectic(p, tol.symp * 10)
            if not ok:
                raise PreconditionError(
                    f"frame {i} has symplectic defect {defect:.3e}")
        try:
            pinv = np.linalg.inv(p)
        except np.linalg.LinAlgError:
            raise PreconditionError(f"frame {i} is singular") from None
        inverses.append(pinv)
        bound = max(bound, opnorm(p), opnorm(pinv))
    mats = [inverses[(i + 1) % cocycle.period] @ cocycle.mats[i] @ frames[i]
            for i in range(cocycle.period)]
    return PeriodicCocycle.unchecked(cocycle.group, mats), bound
