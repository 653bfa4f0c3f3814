"""Eigenstructure of the period map: spectra, invariant splittings propagated
along the orbit, angle measurement, and triangularising conjugations.

Long products are formed with periodic renormalisation and a separately
tracked log scale, so moduli stay meaningful far beyond float range; the
reported eigenvalue list can overflow to inf for extreme periods while the
log moduli remain finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (DEFAULT_TOLERANCES, GroupTag, PeriodicCocycle, Tolerances)
from .errors import (DomainError, EigenSolverError, NotHyperbolic,
                     PreconditionError, SpectrumNotReal, SpectrumNotSimple)
from .symplectic import Subspace, smallest_angle, subspace_distance, is_lagrangian
from .utils import (eig_or_raise, opnorm, positive_qr, relative_gap,
                    sort_eigenvalues)

_RENORM_LIMIT = 1e120


def period_map(cocycle: PeriodicCocycle, start: int = 0) -> np.ndarray:
    """A_{start+l-1} ... A_{start} as a plain matrix product."""
    m = np.eye(cocycle.dim)
    for k in range(cocycle.period):
        m = cocycle.matrix(start + k) @ m
    return m


def scaled_period_map(cocycle: PeriodicCocycle, start: int = 0
                      ) -> tuple[np.ndarray, float]:
    """(M, s) with the true period map equal to M * exp(s) and ||M|| ~ 1."""
    return scaled_product(cocycle, start, cocycle.period)


def scaled_product(cocycle: PeriodicCocycle, start: int, count: int
                   ) -> tuple[np.ndarray, float]:
    """Partial product A_{start+count-1} ... A_{start}, renormalised."""
    m = np.eye(cocycle.dim)
    log_scale = 0.0
    for k in range(count):
        m = cocycle.matrix(start + k) @ m
        peak = float(np.abs(m).max())
        if peak > _RENORM_LIMIT or (peak != 0 and peak < 1.0 / _RENORM_LIMIT):
            m = m / peak
            log_scale += math.log(peak)
    peak = float(np.abs(m).max())
    if peak > 0 and (peak > 1e8 or peak < 1e-8):
        m = m / peak
        log_scale += math.log(peak)
    return m, log_scale


@dataclass(frozen=True)
class PeriodSpectrum:
    """Eigenvalues at the period, sorted by modulus (desc) with conjugate
    pairs adjacent; log_moduli stay finite even when eigenvalues overflow."""

    eigenvalues: tuple[complex, ...]
    moduli: tuple[float, ...]
    log_moduli: tuple[float, ...]
    simple: bool
    hyperbolic: bool
    margin: float

    @property
    def all_real(self) -> bool:
        return all(abs(ev.imag) <= 1e-8 * max(1.0, abs(ev)) for ev in self.eigenvalues)

    def stable_count(self) -> int:
        return sum(1 for lm in self.log_moduli if lm < 0)


def spectrum(cocycle: PeriodicCocycle,
             tol: Tolerances = DEFAULT_TOLERANCES,
             start: int = 0) -> PeriodSpectrum:
    m, log_scale = scaled_period_map(cocycle, start)
    vals = sort_eigenvalues(_eigvals(m))
    scale = math.exp(log_scale) if abs(log_scale) < 700 else float("inf")
    eigenvalues = tuple(
        complex(v) * scale if math.isfinite(scale) else complex(v) * float("inf")
        for v in vals)
    log_moduli = tuple(
        (math.log(abs(v)) if abs(v) > 0 else -math.inf) + log_scale for v in vals)
    moduli = tuple(math.exp(lm) if lm < 700 else float("inf") for lm in log_moduli)
    simple = True
    for a in range(len(vals)):
        for b in range(a + 1, len(vals)):
            if relative_gap(vals[a], vals[b]) <= tol.eig:
                simple = False
    hyp_band = math.log1p(tol.hyp)
    margin = min((abs(lm) for lm in log_moduli), default=math.inf)
    hyperbolic = all(not (math.log(max(1e-300, 1 - tol.hyp)) <= lm <= hyp_band)
                     for lm in log_moduli)
    return PeriodSpectrum(eigenvalues=eigenvalues, moduli=moduli,
                          log_moduli=log_moduli, simple=simple,
                          hyperbolic=hyperbolic, margin=float(margin))


def _eigvals(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigen solver failed: {exc}; matrix:\n{m!r}") from exc


# ---------------------------------------------------------------------------
# Invariant splittings
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Splitting:
    """Per-index direct sums of invariant subspaces, one tuple of bundles per
    index; labels name the bundles in order."""

    bundles: tuple[tuple[Subspace, ...], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.bundles:
            raise DomainError("empty splitting")
        counts = {len(b) for b in self.bundles}
        if counts != {len(self.labels)}:
            raise DomainError("bundle count must match labels at every index")

    @property
    def period(self) -> int:
        return len(self.bundles)

    @property
    def n_bundles(self) -> int:
        return len(self.labels)

    def bundle(self, index: int, k: int) -> Subspace:
        return self.bundles[index % self.period][k]

    def bundle_family(self, k: int) -> list[Subspace]:
        return [self.bundles[i][k] for i in range(self.period)]

    def joined(self, ks) -> list[Subspace]:
        """Direct sums of the selected bundles, index by index."""
        out = []
        for i in range(self.period):
            frames = [self.bundles[i][k].frame for k in ks]
            out.append(Subspace.from_spanning(np.hstack(frames)))
        return out

    def invariance_residual(self, cocycle: PeriodicCocycle) -> float:
        worst = 0.0
        for i in range(self.period):
            a = cocycle.matrix(i)
            for k in range(self.n_bundles):
                img = self.bundles[i][k].apply(a)
                worst = max(worst, subspace_distance(img, self.bundle(i + 1, k)))
        return worst


def _period_maps_along_orbit(cocycle: PeriodicCocycle) -> list[tuple[np.ndarray, float]]:
    """Scaled period maps at every start index, via similarity transport with
    periodic re-anchoring (P_{i+1} = A_i P_i A_i^-1)."""
    out: list[tuple[np.ndarray, float]] = [scaled_period_map(cocycle, 0)]
    for i in range(1, cocycle.period):
        if i % 128 == 0:
            out.append(scaled_period_map(cocycle, i))
            continue
        m_prev, s_prev = out[-1]
        m = cocycle.matrix(i - 1) @ m_prev @ cocycle.inverse(i - 1)
        peak = float(np.abs(m).max())
        if peak > 1e8 or peak < 1e-8:
            m = m / peak
            s_prev += math.log(peak)
        out.append((m, s_prev))
    return out


def _stable_unstable_at(m: np.ndarray, log_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases of the stable / unstable invariant subspaces of a
    scaled period map (split at log-modulus 0)."""
    threshold = -log_scale  # |eig of m| < e^threshold  <=>  true modulus < 1

    def stable_sel(re, im):
        with np.errstate(divide="ignore"):
            return np.log(np.hypot(re, im)) < threshold

    def unstable_sel(re, im):
        with np.errstate(divide="ignore"):
            return np.log(np.hypot(re, im)) > threshold

    ts, zs, sdim_s = scipy.linalg.schur(m, output="real", sort=stable_sel)
    tu, zu, sdim_u = scipy.linalg.schur(m, output="real", sort=unstable_sel)
    return zs[:, :sdim_s], zu[:, :sdim_u]


def invariant_splitting(cocycle: PeriodicCocycle,
                        tol: Tolerances = DEFAULT_TOLERANCES,
                        finest: bool = False) -> Splitting:
    """Stable/unstable eigenspaces of the period map at every index, or the
    finest splitting into one-dimensional bundles (simple real spectrum).

    One-dimensional bundles are ordered by modulus ascending (most
    contracting first), so the stable flag occupies the leading positions.
    """
    spec = spectrum(cocycle, tol)
    if finest:
        if not spec.simple:
            raise SpectrumNotSimple("finest splitting needs a simple spectrum")
        if not spec.all_real:
            raise SpectrumNotReal("finest splitting needs a real spectrum")
        return _finest_splitting(cocycle, tol)
    if not spec.hyperbolic:
        raise NotHyperbolic(
            f"margin {spec.margin:.3e} within the hyperbolicity band {tol.hyp:.1e}")
    bundles = []
    for m, s in _period_maps_along_orbit(cocycle):
        bs, bu = _stable_unstable_at(m, s)
        bundles.append((Subspace(bs), Subspace(bu)))
    split = Splitting(bundles=tuple(bundles), labels=("stable", "unstable"))
    if cocycle.group is GroupTag.SP:
        for i in range(split.period):
            for k in range(2):
                if not is_lagrangian(split.bundle(i, k), 1e-6):
                    raise PreconditionError(
                        "stable/unstable bundle of an SP cocycle failed the "
                        f"Lagrangian check at index {i}")
    return split


def _finest_splitting(cocycle: PeriodicCocycle, tol: Tolerances) -> Splitting:
    d = cocycle.dim
    bundles = []
    for m, s in _period_maps_along_orbit(cocycle):
        vals, vecs = eig_or_raise(m)
        if np.abs(vals.imag).max(initial=0.0) > 1e-8 * max(1.0, np.abs(vals).max()):
            raise SpectrumNotReal("complex eigenvalue in finest splitting")
        order = np.argsort(np.log(np.abs(vals.real) + 1e-300))
        cols = []
        for k in order:
            v = vecs[:, k].real
            cols.append(v / np.linalg.norm(v))
        bundles.append(tuple(Subspace.from_spanning(c.reshape(d, 1)) for c in cols))
    labels = tuple(f"b{k + 1}" for k in range(d))
    return Splitting(bundles=tuple(bundles), labels=labels)


def min_angle(splitting: Splitting, index: int) -> float:
    """Smallest principal angle between the two bundles at one index."""
    if splitting.n_bundles != 2:
        raise PreconditionError("min_angle needs a two-bundle splitting")
    return smallest_angle(splitting.bundle(index, 0), splitting.bundle(index, 1))


def min_angle_over_orbit(splitting: Splitting) -> tuple[int, float]:
    best_j, best = 0, float("inf")
    for j in range(splitting.period):
        a = min_angle(splitting, j)
        if a < best:
            best_j, best = j, a
    return best_j, best


# ---------------------------------------------------------------------------
# Triangularisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TriangularForm:
    """Conjugated upper-triangular cocycle plus the orthogonal conjugators and
    the diagonal scalar cocycles diag[r][i]."""

    cocycle: PeriodicCocycle
    conjugators: tuple[np.ndarray, ...]
    diagonals: np.ndarray  # shape (d, period)
    subdiagonal_residual: float


def _ascending_real_flag(m: np.ndarray) -> np.ndarray:
    """Orthonormal columns q_1..q_n such that span(q_1..q_k) is invariant for
    every k and the associated eigenvalue moduli ascend.  Requires a real
    spectrum (repeated eigenvalues allowed); built by deflation: peel off an
    invariant line of smallest modulus, compress, repeat."""
    n = m.shape[0]
    cols: list[np.ndarray] = []
    work = m.copy()
    embed = np.eye(n)  # maps current work coordinates into the original space
    for step in range(n):
        size = n - step
        vals = np.linalg.eigvals(work)
        if float(np.abs(vals.imag).max(initial=0.0)) > 1e-8 * max(1.0, float(np.abs(vals).max())):
            raise SpectrumNotReal("period map has a complex pair; no real flag")
        moduli = np.sort(np.abs(vals))
        if size > 1 and moduli[1] - moduli[0] > 1e-12 * max(1.0, moduli[1]):
            cut = 0.5 * (moduli[0] + moduli[1])
            _, z, sdim = scipy.linalg.schur(
                work, output="real", sort=lambda re, im: np.hypot(re, im) <= cut)
            if sdim == 0:
                _, z = scipy.linalg.schur(work, output="real")
        else:
            _, z = scipy.linalg.schur(work, output="real")
        # the first Schur vector is an eigenvector of the smallest modulus
        cols.append(embed @ z[:, 0])
        embed = embed @ z[:, 1:]
        work = z[:, 1:].T @ work @ z[:, 1:]
    return np.column_stack(cols)


def real_schur_flags(cocycle: PeriodicCocycle) -> list[np.ndarray]:
    """Per-index full invariant flags of the period map, ordered by modulus
    ascending; valid whenever the spectrum is real, simple or not."""
    return [_ascending_real_flag(m) for m, _ in _period_maps_along_orbit(cocycle)]


def triangularize(cocycle: PeriodicCocycle,
                  flags: list[np.ndarray] | None = None,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> TriangularForm:
    """Conjugate by per-index orthogonal matrices (Gram-Schmidt on a full
    invariant flag) so every matrix becomes upper triangular.

    ``flags`` supplies per-index ordered direction columns; when omitted the
    finest splitting provides them (simple real spectrum required).
    The group tag degrades to GL/SL: orthogonal conjugation does not preserve
    the symplectic form.
    """
    if flags is None:
        split = invariant_splitting(cocycle, tol, finest=True)
        flags = [np.hstack([split.bundle(i, k).frame
                            for k in range(split.n_bundles)])
                 for i in range(cocycle.period)]
    if len(flags) != cocycle.period:
        raise PreconditionError("one flag per index is required")
    qs = []
    for f in flags:
        f = np.asarray(f, dtype=float)
        if f.shape != (cocycle.dim, cocycle.dim):
            raise PreconditionError("each flag must supply a full basis")
        q, _ = positive_qr(f)
        if np.linalg.det(q) < 0:  # keep conjugators in SO(d) so det survives
            q = q.copy()
            q[:, -1] = -q[:, -1]
        qs.append(q)
    mats = []
    residual = 0.0
    for i in range(cocycle.period):
        t = qs[(i + 1) % cocycle.period].T @ cocycle.mats[i] @ qs[i]
        residual = max(residual, float(np.abs(np.tril(t, -1)).max()))
        mats.append(t)
    if residual > 1e-10 * max(1.0, cocycle.bound):
        raise PreconditionError(
            f"flag is not invariant: subdiagonal residual {residual:.3e}")
    group = GroupTag.SL if cocycle.group in (GroupTag.SL, GroupTag.SP) else GroupTag.GL
    if group is GroupTag.SL and any(abs(np.linalg.det(t) - 1.0) > 1e-6 for t in mats):
        group = GroupTag.GL
    out = PeriodicCocycle.unchecked(group, mats)
    diags = np.column_stack([np.diag(t) for t in mats])
    return TriangularForm(cocycle=out, conjugators=tuple(qs),
                          diagonals=diags, subdiagonal_residual=residual)


@dataclass(frozen=True, eq=False)
class SymplecticBlockForm:
    """SP cocycle conjugated so the stable bundle is R^d x {0}: blocks
    [[B_i^T, C_i], [0, B_i^-1]] with B_i^T upper triangular when a stable
    flag is available.  scalars[r - 1][i] = b_i(r); reciprocals implicit."""

    cocycle: PeriodicCocycle
    conjugators: tuple[np.ndarray, ...]
    scalars: np.ndarray  # shape (d, period): diagonal of B_i^T
    lower_left_residual: float

    @property
    def half_dim(self) -> int:
        return self.cocycle.dim // 2

    def scalar_cocycle(self, r: int) -> np.ndarray:
        """b_i(r) for 1 <= r <= d, b_i(d + r) = 1 / b_i(r) above."""
        d = self.half_dim
        if 1 <= r <= d:
            return self.scalars[r - 1]
        if d < r <= 2 * d:
            return 1.0 / self.scalars[r - d - 1]
        raise DomainError(f"scalar index {r} outside 1..{2 * d}")


def symplectic_block_form(cocycle: PeriodicCocycle,
                          stable: list[Subspace] | None = None,
                          stable_flags: list[np.ndarray] | None = None,
                          tol: Tolerances = DEFAULT_TOLERANCES
                          ) -> SymplecticBlockForm:
    """Conjugate a hyperbolic SP cocycle by per-index orthogonal symplectic
    frames built on the stable Lagrangian bundle.

    ``stable_flags`` (per-index ordered stable directions) make the upper
    left block upper triangular, exposing the diagonal scalar cocycles.
    """
    if cocycle.group is not GroupTag.SP:
        raise PreconditionError("block form requires an SP cocycle")
    d = cocycle.dim // 2
    if stable_flags is not None:
        frames_in = [np.asarray(f, dtype=float) for f in stable_flags]
    else:
        if stable is None:
            split = invariant_splitting(cocycle, tol)
            stable = split.bundle_family(0)
        frames_in = [s.frame for s in stable]
    from .symplectic import _cached_j  # local import to avoid cycle at load
    j = _cached_j(cocycle.dim)
    conj = []
    for f in frames_in:
        if f.shape[1] != d:
            raise PreconditionError("stable bundle must be Lagrangian (dim d)")
        u, _ = positive_qr(f)
        lag = Subspace(u)
        if not is_lagrangian(lag, 1e-6):
            raise PreconditionError("stable bundle failed the Lagrangian check")
        conj.append(np.hstack([u, -j @ u]))
    mats = []
    residual = 0.0
    for i in range(cocycle.period):
        s_next = conj[(i + 1) % cocycle.period]
        t = s_next.T @ cocycle.mats[i] @ conj[i]
        residual = max(residual, float(np.abs(t[d:, :d]).max()))
        t[d:, :d] = 0.0  # exact block shape; the residual is reported
        mats.append(t)
    if residual > 1e-8 * max(1.0, cocycle.bound):
        raise PreconditionError(
            f"stable bundle not invariant: lower-left residual {residual:.3e}")
    out = PeriodicCocycle.unchecked(GroupTag.SP, mats)
    scalars = np.column_stack([np.diag(t[:d, :d]) for t in mats])
    return SymplecticBlockForm(cocycle=out, conjugators=tuple(conj),
                               scalars=scalars, lower_left_residual=residual)
