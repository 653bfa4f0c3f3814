"""Small shared linear-algebra helpers.

All norms in this package are operator norms (largest singular value);
conorms are smallest singular values.
"""

from __future__ import annotations

import numpy as np

from .errors import EigenSolverError


def opnorm(m: np.ndarray) -> float:
    """Operator norm (largest singular value)."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def conorm(m: np.ndarray) -> float:
    """Smallest singular value: the minimal expansion factor of the map."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def freeze(a: np.ndarray) -> np.ndarray:
    """Return a C-contiguous float64 copy with the writeable flag cleared."""
    out = np.array(a, dtype=float, order="C", copy=True)
    out.flags.writeable = False
    return out


def eig_or_raise(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """np.linalg.eig wrapped so a non-converging matrix is dumped, never lost."""
    try:
        return np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - exotic failure
        raise EigenSolverError(
            f"eigen solver failed: {exc}; matrix:\n{m!r}") from exc


def eigvals_or_raise(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise EigenSolverError(
            f"eigen solver failed: {exc}; matrix:\n{m!r}") from exc


def orthonormal_columns(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the column span, rank decided against ``tol``."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    if v.shape[1] == 0:
        return v.reshape(v.shape[0], 0)
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return u[:, :rank]


def positive_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR factorisation normalised so diag(R) > 0 (unique, deterministic)."""
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[np.newaxis, :]
    r = r * signs[:, np.newaxis]
    return q, r


def sort_eigenvalues(values: np.ndarray) -> np.ndarray:
    """Sort by modulus descending, then |argument| ascending, positive
    imaginary part first.  Conjugate pairs end up adjacent."""
    vals = np.asarray(values, dtype=complex)
    mod = np.abs(vals)
    arg = np.angle(vals)
    order = sorted(range(len(vals)),
                   key=lambda k: (-mod[k], abs(arg[k]), -np.sign(arg[k])))
    return vals[order]


def relative_gap(a: complex, b: complex) -> float:
    """|a - b| scaled by the larger modulus (1.0 floor for near-zero pairs)."""
    scale = max(abs(a), abs(b), 1e-300)
    return abs(a - b) / scale
