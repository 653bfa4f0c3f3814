"""Perturbation-path constructors.

Every operation returns a PerturbationPath whose generators are closed forms
in t, so verify_path and the spectral/domination modules can certify each
claim from raw matrices.  Constructions never trust their own bookkeeping:
endpoint properties are re-measured before a path is returned, and a budget
shortfall raises HeadroomExceeded (or PeriodTooShort) with diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core import (DEFAULT_TOLERANCES, BlockEmbed, Compose, DiagPower,
                   GroupTag, Identity, PathGenerator, PerturbationPath,
                   PeriodicCocycle, RotationInterp, ShearInterp, Tolerances,
                   compose, evaluate_path, identity_path, path_deviation)
from .domination import (check_domination, scalar_domination,
                         scalar_to_bundle_N, measure_triangular_K,
                         DominationCertificate)
from .errors import (DomainError, HeadroomExceeded, NoBreakFound,
                     NotHyperbolic, PeriodTooShort, PreconditionError)
from .spectral import (PeriodSpectrum, Splitting, invariant_splitting,
                       min_angle_over_orbit, real_schur_flags,
                       scaled_period_map, spectrum, symplectic_block_form,
                       triangularize)
from .symplectic import (Subspace, smallest_angle, symplectic_completion)
from .utils import opnorm, relative_gap, sort_eigenvalues


# ---------------------------------------------------------------------------
# Rational angles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RationalAngle:
    """An angle p*pi/q with gcd(p, q) = 1 and q bounded."""

    p: int
    q: int

    @property
    def value(self) -> float:
        return self.p * math.pi / self.q

    @classmethod
    def near(cls, theta: float, q_max: int) -> "RationalAngle":
        """Best rational multiple of pi near theta with denominator <= q_max,
        by continued-fraction selection."""
        frac = Fraction(theta / math.pi).limit_denominator(q_max)
        return cls(p=frac.numerator, q=max(1, frac.denominator))


def _distinct_rational_args(base_args: Sequence[float], count: int, q_max: int,
                            taken: Sequence[float], min_sep: float
                            ) -> list[RationalAngle]:
    """count rational angles, each near its base argument, pairwise separated
    and clear of already-taken argument values.  Collisions fall back to the
    pi/q_max lattice around the base."""
    out: list[RationalAngle] = []
    used = list(taken)

    def free(v: float) -> bool:
        return all(abs(v - u) >= min_sep for u in used)

    for base in base_args:
        cand = RationalAngle.near(base, q_max)
        if not free(cand.value):
            lattice = round(base * q_max / math.pi)
            cand = None
            for step in range(1, 4 * q_max):
                for sign in (1, -1):
                    p = lattice + sign * step
                    trial = RationalAngle(p, q_max)
                    if free(trial.value):
                        cand = trial
                        break
                if cand is not None:
                    break
            if cand is None:
                raise HeadroomExceeded("no free rational argument available")
        out.append(cand)
        used.append(cand.value)
    return out


# ---------------------------------------------------------------------------
# Generator helpers
# ---------------------------------------------------------------------------

def conjugated_generator(gen: PathGenerator, frame: np.ndarray) -> PathGenerator:
    """P G(t) P^-1 (full-size inner)."""
    return BlockEmbed(inner=gen, basis=frame)


def embed_at(gen: PathGenerator, ambient: int, positions: Sequence[int]
             ) -> PathGenerator:
    """A small generator acting on the listed coordinates of the ambient
    space, identity elsewhere."""
    positions = list(positions)
    if gen.dim != len(positions):
        raise DomainError("positions must match the generator dimension")
    rest = [k for k in range(ambient) if k not in positions]
    perm = np.eye(ambient)[:, positions + rest]
    return BlockEmbed(inner=gen, basis=perm)


def inv_transpose_generator(gen: PathGenerator) -> PathGenerator:
    """The family t -> (G(t)^T)^-1, closed form for the kinds used here."""
    if isinstance(gen, Identity):
        return gen
    if isinstance(gen, DiagPower):
        return DiagPower(1.0 / gen.diag)
    if isinstance(gen, RotationInterp):
        return gen  # rotations are orthogonal
    if isinstance(gen, BlockEmbed):
        return BlockEmbed(inner=inv_transpose_generator(gen.inner),
                          basis=np.linalg.inv(gen.basis).T)
    if isinstance(gen, Compose):
        return Compose(tuple(inv_transpose_generator(f) for f in gen.factors))
    raise DomainError(f"no closed inverse-transpose for {type(gen).__name__}")


def _conformal_frame(block: np.ndarray) -> tuple[np.ndarray, float]:
    """(W, theta): W^-1 @ block @ W = r * [[cos, sin], [-sin, cos]] for a 2x2
    block with a complex eigenvalue pair; theta is the argument."""
    vals, vecs = np.linalg.eig(block)
    k = int(np.argmax(vals.imag))
    if vals[k].imag <= 0:
        raise DomainError("block has no complex pair")
    v = vecs[:, k]
    w = np.column_stack([v.real, v.imag])
    w = w / math.sqrt(max(np.linalg.norm(v.real) * np.linalg.norm(v.imag), 1e-300))
    c = np.linalg.inv(w) @ block @ w
    theta = math.atan2(c[0, 1], c[0, 0])
    return w, theta


def _per_index_headroom(cocycle: PeriodicCocycle, eps: float,
                        safety: float = 1.35) -> np.ndarray:
    """Admissible ||G - I|| per index for a total deviation below eps."""
    norms = np.array([max(opnorm(m), opnorm(v))
                      for m, v in zip(cocycle.mats, cocycle.invs)])
    return eps / (norms * safety)


def _measure_and_gate(path: PerturbationPath, eps: float, samples: int = 5
                      ) -> float:
    """Measured sup deviation over a few samples; raises on budget overflow."""
    worst = max(path_deviation(path, k / (samples - 1)) for k in range(1, samples))
    if worst >= eps:
        raise HeadroomExceeded(
            f"path deviation {worst:.3e} exceeds budget {eps:.3e}",
            needed=worst, available=eps)
    return worst


# ---------------------------------------------------------------------------
# Eigenvalue clustering and block diagonalisation
# ---------------------------------------------------------------------------

def _cluster_eigenvalues(vals: np.ndarray, rel_tol: float) -> list[np.ndarray]:
    """Conjugation-closed clusters of (approximately) equal eigenvalues;
    returns index arrays into vals."""
    n = len(vals)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        parent[find(i)] = find(j)

    for i in range(n):
        for j in range(i + 1, n):
            if relative_gap(vals[i], vals[j]) <= rel_tol:
                union(i, j)
            if relative_gap(vals[i], np.conj(vals[j])) <= rel_tol:
                union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in groups.values()]


def _cluster_block_diagonalize(m: np.ndarray, clusters: list[np.ndarray],
                               vals: np.ndarray
                               ) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Real similarity V with V^-1 m V block diagonal, one block per cluster,
    via Schur selection plus Sylvester decoupling.  Returns (V, slices)."""
    n = m.shape[0]
    v_total = np.eye(n)
    slices: list[tuple[int, int]] = []
    work = m.copy()
    offset = 0
    order = sorted(range(len(clusters)), key=lambda k: -np.abs(vals[clusters[k]]).max())
    for pos, ck in enumerate(order):
        member_idx = set(clusters[ck].tolist())
        members = vals[clusters[ck]]
        size = len(members)
        if pos == len(order) - 1:
            slices.append((offset, offset + size))
            break
        others = [vals[j] for j in range(n) if j not in member_idx]
        sep = min((relative_gap(a, b) for a in members for b in others),
                  default=1.0)
        thr = max(1e-7, min(sep / 3.0, 0.1))

        def sel(re, im):
            z = complex(re, im)
            return min(relative_gap(z, mem) for mem in members) <= thr

        t, z, sdim = scipy.linalg.schur(work, output="real", sort=sel)
        if sdim != size:
            raise PreconditionError(
                f"cluster isolation failed: selected {sdim}, expected {size}")
        t11 = t[:size, :size]
        t22 = t[size:, size:]
        t12 = t[:size, size:]
        x = scipy.linalg.solve_sylvester(t11, -t22, -t12)
        decouple = np.eye(work.shape[0])
        decouple[:size, size:] = x
        frame = z @ decouple
        v_total = v_total @ scipy.linalg.block_diag(np.eye(offset), frame)
        slices.append((offset, offset + size))
        work = t22
        offset += size
    return v_total, slices


# ---------------------------------------------------------------------------
# Simple spectrum
# ---------------------------------------------------------------------------

def _argument_is_rational(theta: float, q_max: int, tol: float = 1e-6) -> bool:
    best = RationalAngle.near(theta, q_max)
    return abs(theta - best.value) <= tol


def _spectrum_is_simple_rational(spec: PeriodSpectrum, tol: Tolerances) -> bool:
    if not spec.simple:
        return False
    for ev in spec.eigenvalues:
        if abs(ev.imag) > 1e-9 * max(1.0, abs(ev)):
            if not _argument_is_rational(abs(math.atan2(ev.imag, ev.real)),
                                         tol.q_max):
                return False
    return True


def perturb_simple(cocycle: PeriodicCocycle, eps: float,
                   tol: Tolerances = DEFAULT_TOLERANCES) -> PerturbationPath:
    """Path to a cocycle whose period map has distinct eigenvalues with all
    non-real arguments rational multiples of pi.

    The perturbation acts at a single index (the whole period map is adjusted
    through A_1) with at most dim/2 elementary moves.  For GL and SL the
    sorted eigenvalue moduli are constant along the whole path; the SP case
    moves moduli only to split collisions, staying symplectic at every t.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    spec0 = spectrum(cocycle, tol)
    if _spectrum_is_simple_rational(spec0, tol):
        return identity_path(cocycle, eps, meta={"op": "simple", "moves": 0})
    if cocycle.group in (GroupTag.GL, GroupTag.SL):
        gen, moves = _simple_moves_dissipative(cocycle, eps, tol)
    else:
        gen, moves = _simple_moves_symplectic(cocycle, eps, tol)
    gens = [gen] + [Identity(cocycle.dim) for _ in range(cocycle.period - 1)]
    path = PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps,
                            meta={"op": "simple", "moves": moves, "index": 0})
    _measure_and_gate(path, eps)
    end = spectrum(evaluate_path(path, 1.0), tol)
    if not _spectrum_is_simple_rational(end, tol):
        raise HeadroomExceeded(
            "endpoint failed the simplicity check after all moves; "
            f"eigenvalues {end.eigenvalues}")
    return path


def _simple_moves_dissipative(cocycle: PeriodicCocycle, eps: float,
                              tol: Tolerances) -> tuple[PathGenerator, int]:
    m, _ = scaled_period_map(cocycle, 0)
    vals = np.linalg.eigvals(m)
    clusters = _cluster_eigenvalues(vals, max(tol.eig * 10, 1e-9))
    v_frame, slices = _cluster_block_diagonalize(m, clusters, vals)
    order = sorted(range(len(clusters)),
                   key=lambda k: -np.abs(vals[clusters[k]]).max())
    t_full = np.linalg.inv(v_frame) @ m @ v_frame
    moves: list[PathGenerator] = []
    taken_args: list[float] = []
    for ev in vals:
        if abs(ev.imag) <= 1e-9 * max(1.0, abs(ev)):
            taken_args.append(0.0 if ev.real >= 0 else math.pi)
    min_sep = max(20 * tol.eig, 1e-7)
    for pos, ck in enumerate(order):
        lo, hi = slices[pos]
        block = t_full[lo:hi, lo:hi]
        members = vals[clusters[ck]]
        is_real = bool(np.abs(members.imag).max()
                       <= 1e-9 * max(1.0, np.abs(members).max()))
        if is_real:
            if hi - lo < 2:
                continue  # simple real eigenvalue: argument already rational
            moves += _real_cluster_moves(block, lo, v_frame, tol, taken_args,
                                         min_sep)
        else:
            theta = float(np.abs(np.angle(members)).max())
            mult = (hi - lo) // 2
            if mult == 1 and _argument_is_rational(theta, tol.q_max):
                continue
            moves += _complex_cluster_moves(block, lo, v_frame, tol,
                                            taken_args, min_sep)
    if not moves:
        raise PreconditionError("no offending clusters, but spectrum check failed")
    return compose(moves), len(moves)


def _real_cluster_moves(block: np.ndarray, offset: int, v_frame: np.ndarray,
                        tol: Tolerances, taken_args: list[float],
                        min_sep: float) -> list[PathGenerator]:
    """Complexify a repeated-real cluster two dimensions at a time, keeping
    det (hence the modulus pair) of each 2x2 sub-block fixed."""
    n = v_frame.shape[0]
    m = block.shape[0]
    moves: list[PathGenerator] = []
    bases = [float(k + 1) * math.pi / tol.q_max for k in range(m // 2)]
    angles = _distinct_rational_args(bases, m // 2, tol.q_max, taken_args,
                                     min_sep)
    for k in range(m // 2):
        sub = block[2 * k:2 * k + 2, 2 * k:2 * k + 2]
        lam = 0.5 * (sub[0, 0] + sub[1, 1])
        coupling = sub[0, 1]
        psi = angles[k].value
        positions = [offset + 2 * k, offset + 2 * k + 1]
        if abs(coupling) <= 1e-7 * max(abs(lam), 1e-12):
            inner: PathGenerator = RotationInterp(2, (0, 1), psi)
        else:
            eps_prime = 2.0 * (1.0 - math.cos(psi))
            s2 = np.array([[0.0, 0.0], [-eps_prime * lam / coupling, 0.0]])
            inner = ShearInterp(s2)
        moves.append(BlockEmbed(inner=inner, basis=_perm_first(v_frame, positions)))
        taken_args.append(psi)
        taken_args.append(math.pi - psi)
    return moves


def _complex_cluster_moves(block: np.ndarray, offset: int, v_frame: np.ndarray,
                           tol: Tolerances, taken_args: list[float],
                           min_sep: float) -> list[PathGenerator]:
    """Rotate each 2x2 sub-block of a complex cluster to its own rational
    argument; moduli are untouched at every t."""
    m = block.shape[0]
    moves: list[PathGenerator] = []
    thetas = []
    subs = []
    frames = []
    for k in range(m // 2):
        sub = block[2 * k:2 * k + 2, 2 * k:2 * k + 2]
        w, theta_c = _conformal_frame(sub)
        subs.append(sub)
        frames.append(w)
        thetas.append(theta_c)
    targets = _distinct_rational_args([abs(t) for t in thetas], m // 2,
                                      tol.q_max, taken_args, min_sep)
    for k in range(m // 2):
        delta = math.copysign(targets[k].value, thetas[k]) - thetas[k]
        positions = [offset + 2 * k, offset + 2 * k + 1]
        basis = _perm_first(v_frame, positions).copy()
        basis[:, :2] = basis[:, :2] @ frames[k]
        moves.append(BlockEmbed(inner=RotationInterp(2, (0, 1), delta),
                                basis=basis))
        taken_args.append(targets[k].value)
    return moves


def _perm_first(v_frame: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    n = v_frame.shape[0]
    rest = [k for k in range(n) if k not in positions]
    return v_frame[:, list(positions) + rest]


def _simple_moves_symplectic(cocycle: PeriodicCocycle, eps: float,
                             tol: Tolerances) -> tuple[PathGenerator, int]:
    """Sequential symplectic moves, each consuming one offending eigenvalue
    group of the current endpoint; symplectic at every t by construction."""
    d = cocycle.dim // 2
    m_scaled, log_scale = scaled_period_map(cocycle, 0)
    current = m_scaled.copy()
    moves: list[PathGenerator] = []
    budget_each = eps / 1.35 / max(opnorm(cocycle.mats[0]), opnorm(cocycle.invs[0]))
    for _ in range(cocycle.dim):
        move = _next_symplectic_move(current, log_scale, tol, budget_each)
        if move is None:
            break
        moves.append(move)
        current = current @ move.matrix(1.0)
        if len(moves) > d:
            raise HeadroomExceeded(
                f"needed more than {d} moves; diagnostics: "
                f"eigenvalues {np.linalg.eigvals(current)}")
    if not moves:
        raise PreconditionError("no offending groups, but spectrum check failed")
    return compose(moves), len(moves)


def _next_symplectic_move(m_scaled: np.ndarray, log_scale: float,
                          tol: Tolerances, budget: float) -> PathGenerator | None:
    n = m_scaled.shape[0]
    d = n // 2
    vals, vecs = np.linalg.eig(m_scaled)
    rel = max(tol.eig * 10, 1e-9)
    taken = [float(np.angle(v)) for v in vals]

    # repeated values first (value multiplicity within tolerance)
    for i in range(n):
        mult = sum(1 for j in range(n) if relative_gap(vals[i], vals[j]) <= rel)
        if mult < 2:
            continue
        if abs(vals[i].imag) <= 1e-9 * max(1.0, abs(vals[i])):
            return _sp_real_split_move(m_scaled, vals, vecs, i, rel, budget)
        return _sp_complex_move(m_scaled, log_scale, vals, vecs, i, tol,
                                budget, split=True, taken=taken)
    # then irrational arguments
    for i in range(n):
        ev = vals[i]
        if ev.imag > 1e-9 * max(1.0, abs(ev)):
            theta = float(np.angle(ev))
            if not _argument_is_rational(abs(theta), tol.q_max):
                return _sp_complex_move(m_scaled, log_scale, vals, vecs, i, tol,
                                        budget, split=False, taken=taken)
    return None


def _collision_free_scale(vals: np.ndarray, i: int, rel: float) -> float:
    """A multiplicative split factor 1+s clearing every other eigenvalue."""
    s = max(64 * rel, 1e-6)
    for _ in range(40):
        target = vals[i] * (1 + s)
        paired = vals[i] / (1 + s)
        ok = all(relative_gap(target, vals[j]) > 4 * rel
                 and relative_gap(paired, vals[j]) > 4 * rel
                 for j in range(len(vals)) if j != i)
        if ok:
            return s
        s *= 1.7
    raise HeadroomExceeded("no collision-free split factor found")


def _sp_real_split_move(m: np.ndarray, vals: np.ndarray, vecs: np.ndarray,
                        i: int, rel: float, budget: float) -> PathGenerator:
    """Scale along one eigenvector of a repeated real eigenvalue: the pair
    (lambda, 1/lambda) splits into (lambda(1+s), (lambda(1+s))^-1 ...)."""
    u = vecs[:, i].real
    if np.linalg.norm(u) < 1e-9:
        u = vecs[:, i].imag
    u = u / np.linalg.norm(u)
    basis = symplectic_completion(u.reshape(-1, 1))
    s = _collision_free_scale(vals, i, rel)
    d = m.shape[0] // 2
    diag = np.ones(2 * d)
    diag[0] = 1 + s
    diag[d] = 1 / (1 + s)
    cond = np.linalg.cond(basis)
    if s * cond > budget:
        s_fit = budget / (2 * cond)
        if s_fit < 16 * rel:
            raise HeadroomExceeded(
                "split factor does not fit the budget",
                needed=s * cond, available=budget)
        diag[0] = 1 + s_fit
        diag[d] = 1 / (1 + s_fit)
    return conjugated_generator(DiagPower(diag), basis)


def _sp_complex_move(m: np.ndarray, log_scale: float, vals: np.ndarray,
                     vecs: np.ndarray, i: int, tol: Tolerances,
                     budget: float, split: bool,
                     taken: list[float]) -> PathGenerator:
    """Fix a complex group: rotate its invariant plane to a rational argument
    and, when needed, push the modulus off collisions.

    Invariant 2-planes with non-degenerate restricted form (unit modulus)
    take a det-1 move inside the plane; otherwise the plane is isotropic and
    the move acts as [[M(t), 0], [0, M(t)^-T]] in a symplectic completion.
    """
    n = m.shape[0]
    d = n // 2
    ev = vals[i]
    v = vecs[:, i]
    x, y = v.real.copy(), v.imag.copy()
    from .symplectic import _cached_j
    j = _cached_j(n)
    plane = np.column_stack([x, y])
    gram = float(x @ j @ y)
    scalefree = abs(gram) / max(np.linalg.norm(x) * np.linalg.norm(y), 1e-300)
    true_logmod = math.log(abs(ev)) + log_scale if abs(ev) > 0 else -math.inf
    unit = abs(true_logmod) <= 10 * tol.eig

    theta = float(np.angle(ev))
    min_sep = max(20 * tol.eig, 1e-7)
    target = _distinct_rational_args([abs(theta)], 1, tol.q_max, taken,
                                     min_sep)[0]
    delta = math.copysign(target.value, theta) - theta

    rel = max(tol.eig * 10, 1e-9)
    s = 0.0
    if split:
        s = _collision_free_scale(vals, i, rel)
    elif unit and not _plane_symplectic(scalefree):
        s = max(64 * rel, 1e-6)

    if unit and _plane_symplectic(scalefree):
        # symplectic plane: normalise omega(w1, w2) = 1, det-1 inner move
        w1 = x / math.sqrt(abs(gram))
        w2 = math.copysign(1.0, gram) * y / math.sqrt(abs(gram))
        rest = _omega_complement_frame(np.column_stack([w1, w2]))
        basis = np.hstack([np.column_stack([w1, w2]), rest])
        block = np.linalg.lstsq(np.column_stack([w1, w2]),
                                m @ np.column_stack([w1, w2]), rcond=None)[0]
        w_conf, theta_c = _conformal_frame(block)
        delta_c = math.copysign(target.value, theta_c) - theta_c
        inner2 = BlockEmbed(inner=RotationInterp(2, (0, 1), delta_c), basis=w_conf)
        return conjugated_generator(embed_at(inner2, n, [0, 1]), basis)

    # isotropic plane: complete to (q1, q2, ..., p1, p2, ...)
    qx = x / np.linalg.norm(x)
    qy = y - qx * (qx @ y)
    qy = qy / np.linalg.norm(qy)
    plane_frame = np.column_stack([qx, qy])
    iso_defect = abs(float(qx @ j @ qy))
    if iso_defect > 1e-6:
        raise PreconditionError(
            f"invariant plane neither symplectic nor isotropic (defect {iso_defect:.2e})")
    basis = symplectic_completion(plane_frame)
    block = np.linalg.lstsq(plane_frame, m @ plane_frame, rcond=None)[0]
    w_conf, theta_c = _conformal_frame(block)
    delta_c = math.copysign(target.value, theta_c) - theta_c
    factor = 1.0 + s
    g_m = compose([
        DiagPower(np.array([factor, factor])),
        BlockEmbed(inner=RotationInterp(2, (0, 1), delta_c), basis=w_conf),
    ]) if s else BlockEmbed(inner=RotationInterp(2, (0, 1), delta_c), basis=w_conf)
    g_p = inv_transpose_generator(g_m)
    inner4 = compose([
        embed_at(g_m, 4, [0, 1]),
        embed_at(g_p, 4, [2, 3]),
    ])
    # columns (q1, q2, p1, p2, rest): the form on the leading four is standard
    cols = [0, 1, d, d + 1] + [k for k in range(n) if k not in (0, 1, d, d + 1)]
    return conjugated_generator(embed_at(inner4, n, [0, 1, 2, 3]),
                                basis[:, cols])


def _plane_symplectic(scalefree_gram: float) -> bool:
    return scalefree_gram > 1e-6


def _omega_complement_frame(span_cols: np.ndarray) -> np.ndarray:
    from .symplectic import _cached_j
    n = span_cols.shape[0]
    j = _cached_j(n)
    constraints = (j @ span_cols).T
    _, s, vh = np.linalg.svd(constraints)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0]))) if s.size else 0
    return vh[rank:].T


# ---------------------------------------------------------------------------
# Realification
# ---------------------------------------------------------------------------

def perturb_real(cocycle: PeriodicCocycle, eps: float,
                 tol: Tolerances = DEFAULT_TOLERANCES) -> PerturbationPath:
    """Path whose endpoint has only real eigenvalues, with the sorted moduli
    constant in t.

    Each complex pair is removed by composing every index with a small
    rotation inside the pair's invariant plane bundle; the total rotation
    sweeps the pair's argument to zero (an intermediate-value search on the
    discriminant of the restricted return map).  For SP the construction runs
    on the stable block of the Lagrangian block form and is lifted through
    [[V, 0], [0, V^-T]] so the path stays symplectic; this requires the
    cocycle to be hyperbolic.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    spec0 = spectrum(cocycle, tol)
    if spec0.all_real:
        return identity_path(cocycle, eps, meta={"op": "real", "pairs": 0})
    if cocycle.group is GroupTag.SP:
        if not spec0.hyperbolic:
            raise NotHyperbolic(
                "realification of a non-hyperbolic SP cocycle is not supported")
        return _perturb_real_sp(cocycle, eps, tol)
    gens, meta = _realify_generators(list(cocycle.mats), eps, tol)
    path = PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps,
                            meta={"op": "real", **meta})
    _measure_and_gate(path, eps)
    _require_real_endpoint(path, tol)
    return path


def _require_real_endpoint(path: PerturbationPath, tol: Tolerances) -> None:
    end = spectrum(evaluate_path(path, 1.0), tol)
    worst = max((abs(ev.imag) / max(abs(ev), 1e-300) for ev in end.eigenvalues),
                default=0.0)
    if worst > 1e-8:
        raise HeadroomExceeded(
            f"endpoint eigenvalues not real: max |Im|/|ev| = {worst:.3e}",
            achieved=worst)


def _perturb_real_sp(cocycle: PeriodicCocycle, eps: float,
                     tol: Tolerances) -> PerturbationPath:
    split = invariant_splitting(cocycle, tol)
    sbf = symplectic_block_form(cocycle, stable=split.bundle_family(0), tol=tol)
    d = cocycle.dim // 2
    sub_mats = [m[:d, :d] for m in sbf.cocycle.mats]
    sub_gens, meta = _realify_generators(sub_mats, eps / 1.2, tol)
    gens: list[PathGenerator] = []
    for i, v_gen in enumerate(sub_gens):
        if v_gen.is_identity():
            gens.append(Identity(cocycle.dim))
            continue
        lifted = compose([
            embed_at(v_gen, cocycle.dim, list(range(d))),
            embed_at(inv_transpose_generator(v_gen), cocycle.dim,
                     list(range(d, 2 * d))),
        ])
        gens.append(conjugated_generator(lifted, sbf.conjugators[i]))
    path = PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps,
                            meta={"op": "real", "route": "sp-block", **meta})
    _measure_and_gate(path, eps)
    _require_real_endpoint(path, tol)
    return path


def _realify_generators(mats: list[np.ndarray], eps: float, tol: Tolerances
                        ) -> tuple[list[PathGenerator], dict]:
    """Per-index rotation generators realifying every complex pair of the
    product of ``mats`` (treated as a GL cocycle), with measured budgets."""
    ell = len(mats)
    dim = mats[0].shape[0]
    cocycle = PeriodicCocycle.unchecked(GroupTag.GL, mats)
    m0, s0 = scaled_period_map(cocycle, 0)
    vals = sort_eigenvalues(np.linalg.eigvals(m0))
    pairs = [k for k in range(len(vals)) if vals[k].imag > 1e-9 * max(1.0, abs(vals[k]))]
    if not pairs:
        return [Identity(dim) for _ in range(ell)], {"pairs": 0}

    frames, plane_slices = _invariant_frames_along_orbit(cocycle, vals, pairs)
    kappa = max(np.linalg.cond(f) for f in frames)
    norms = np.array([max(opnorm(m), opnorm(np.linalg.inv(m))) for m in mats])
    delta_cap = eps / (float(norms.max()) * kappa * 1.45)
    if delta_cap <= 0:
        raise PeriodTooShort("no rotation budget at all")

    angles: list[float] = []
    for which, k in enumerate(pairs):
        sl = plane_slices[which]
        steps = _restricted_steps(cocycle, frames, sl)
        c_star = _realify_angle_search(steps, delta_cap)
        if c_star is None:
            raise PeriodTooShort(
                f"per-index budget {delta_cap:.3e} over {ell} steps cannot "
                f"close the rotation for the pair at argument "
                f"{math.atan2(vals[k].imag, vals[k].real):.4f}")
        angles.append(c_star)

    gens: list[PathGenerator] = []
    for i in range(ell):
        moves = []
        for which, k in enumerate(pairs):
            lo, _ = plane_slices[which]
            moves.append(BlockEmbed(
                inner=RotationInterp(2, (0, 1), angles[which]),
                basis=_perm_first(frames[i], [lo, lo + 1])))
        gens.append(compose(moves))
    return gens, {"pairs": len(pairs), "kappa": float(kappa),
                  "angles": [float(a) for a in angles]}


def _invariant_frames_along_orbit(cocycle: PeriodicCocycle, vals: np.ndarray,
                                  pairs: list[int]
                                  ) -> tuple[list[np.ndarray], list[tuple[int, int]]]:
    """Per-index frames whose leading 2-column groups span the invariant
    planes of the selected complex pairs (orthonormal within each plane) and
    whose remaining columns span the complementary invariant subspace."""
    from .spectral import _period_maps_along_orbit

    plane_slices = [(2 * w, 2 * w + 2) for w in range(len(pairs))]
    frames = []
    for m, s in _period_maps_along_orbit(cocycle):
        v, w = np.linalg.eig(m)
        cols = []
        used = np.zeros(len(v), dtype=bool)
        for k in pairs:
            cand = [j for j in range(len(v)) if not used[j]
                    and v[j].imag > 0
                    and relative_gap(v[j], vals[k]) < 0.3]
            if not cand:
                cand = [j for j in range(len(v)) if not used[j] and v[j].imag > 0]
            jj = min(cand, key=lambda j: relative_gap(v[j], vals[k]))
            used[jj] = True
            conj = min((j for j in range(len(v)) if not used[j]),
                       key=lambda j: relative_gap(v[j], np.conj(v[jj])))
            used[conj] = True
            x, y = w[:, jj].real, w[:, jj].imag
            qx = x / np.linalg.norm(x)
            qy = y - qx * (qx @ y)
            qy /= np.linalg.norm(qy)
            cols += [qx, qy]
        for j in range(len(v)):
            if not used[j] and v[j].imag >= 0:
                if v[j].imag > 1e-9 * max(1.0, abs(v[j])):
                    used[j] = True
                    conj = min((jj for jj in range(len(v)) if not used[jj]),
                               key=lambda jj: relative_gap(v[jj], np.conj(v[j])))
                    used[conj] = True
                    x, y = w[:, j].real, w[:, j].imag
                    qx = x / np.linalg.norm(x)
                    qy = y - qx * (qx @ y)
                    qy /= np.linalg.norm(qy)
                    cols += [qx, qy]
                else:
                    used[j] = True
                    x = w[:, j].real
                    cols.append(x / np.linalg.norm(x))
        frames.append(np.column_stack(cols))
    return frames, plane_slices


def _restricted_steps(cocycle: PeriodicCocycle, frames: list[np.ndarray],
                      sl: tuple[int, int]) -> list[np.ndarray]:
    lo, hi = sl
    steps = []
    for i in range(cocycle.period):
        nxt = frames[(i + 1) % cocycle.period][:, lo:hi]
        cur = frames[i][:, lo:hi]
        img = cocycle.matrix(i) @ cur
        step = np.linalg.lstsq(nxt, img, rcond=None)[0]
        residual = opnorm(img - nxt @ step) / max(opnorm(img), 1e-300)
        if residual > 1e-6:
            raise PreconditionError(
                f"plane bundle not invariant at index {i} (residual {residual:.2e})")
        steps.append(step)
    return steps


def _realify_angle_search(steps: list[np.ndarray], delta_cap: float,
                          imag_goal: float = 2e-9) -> float | None:
    """Per-index rotation angle making the pair product real, within the cap.

    A transversal crossing (discriminant changes sign) is bisected to its
    boundary, where the endpoint is exactly real.  A conformal family only
    touches the real locus tangentially, so the fallback minimises |Im|/|ev|
    by ternary search and accepts the touch point when it is deep enough.
    """
    ell = len(steps)

    def disc(c: float) -> float:
        p = np.eye(2)
        rot = np.array([[math.cos(c), math.sin(c)],
                        [-math.sin(c), math.cos(c)]])
        for m in steps:
            p = m @ rot @ p
            peak = float(np.abs(p).max())
            if peak > 1e100:
                p /= peak
        tr = p[0, 0] + p[1, 1]
        det = p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0]
        return tr * tr - 4.0 * det

    def im_ratio(c: float) -> float:
        p = np.eye(2)
        rot = np.array([[math.cos(c), math.sin(c)],
                        [-math.sin(c), math.cos(c)]])
        for m in steps:
            p = m @ rot @ p
            peak = float(np.abs(p).max())
            if peak > 1e100:
                p /= peak
        vals = np.linalg.eigvals(p)
        return float(max(abs(v.imag) / max(abs(v), 1e-300) for v in vals))

    if disc(0.0) >= 0:
        return 0.0
    grid = 192
    candidates: list[float] = []
    for sign in (1.0, -1.0):
        prev = 0.0
        for g in range(1, grid + 1):
            c = sign * delta_cap * g / grid
            if disc(c) >= 0:
                lo, hi = prev, c
                for _ in range(90):
                    mid = 0.5 * (lo + hi)
                    if disc(mid) >= 0:
                        hi = mid
                    else:
                        lo = mid
                return hi
            candidates.append(c)
            prev = c
    # tangential case: minimise the imaginary part near the best grid point
    if not candidates:
        return None
    best = min(candidates, key=im_ratio)
    step = delta_cap / grid
    lo, hi = best - step, best + step
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if im_ratio(m1) <= im_ratio(m2):
            hi = m2
        else:
            lo = m1
        if hi - lo <= abs(best) * 1e-15 + 1e-18:
            break
    c_star = 0.5 * (lo + hi)
    if abs(c_star) > delta_cap or im_ratio(c_star) > imag_goal:
        return None
    return c_star


# ---------------------------------------------------------------------------
# Real simple eigenvalues (modulus splitting)
# ---------------------------------------------------------------------------

def perturb_real_simple(cocycle: PeriodicCocycle, eps: float,
                        tol: Tolerances = DEFAULT_TOLERANCES,
                        modulus_band: float = math.log(2.0),
                        require_distinct: bool = True) -> PerturbationPath:
    """Realify, then push the (triangularised) diagonal coefficients so the
    endpoint has distinct real eigenvalues with every modulus outside
    [1/2, 2]; sampled cocycles at t > 0 are hyperbolic.

    ``modulus_band`` is the half-width of the excluded log-modulus band
    around 0 (log 2 gives the (1/2, 2) exclusion).
    """
    stage1 = perturb_real(cocycle, eps / 2.0, tol)
    mid = evaluate_path(stage1, 1.0)
    spec_mid = spectrum(mid, tol)
    targets_needed = _moduli_need_split(spec_mid, tol, modulus_band,
                                        require_distinct)
    if not targets_needed:
        return PerturbationPath(base=cocycle, gens=stage1.gens, epsilon=eps,
                                meta={**stage1.meta, "op": "real-simple",
                                      "split": False})
    if cocycle.group is GroupTag.SP:
        stage2 = _split_moduli_sp(mid, eps / 2.0, tol, modulus_band)
    else:
        stage2 = _split_moduli_gl(mid, eps / 2.0, tol, modulus_band)
    gens = tuple(compose([g1, g2]) if not (g1.is_identity() and g2.is_identity())
                 else Identity(cocycle.dim)
                 for g1, g2 in zip(stage1.gens, stage2.gens))
    path = PerturbationPath(base=cocycle, gens=gens, epsilon=eps,
                            meta={"op": "real-simple",
                                  "stage1": stage1.meta, "stage2": stage2.meta})
    _measure_and_gate(path, eps)
    end = spectrum(evaluate_path(path, 1.0), tol)
    if require_distinct and not _distinct_moduli(end, tol):
        raise HeadroomExceeded("endpoint moduli not distinct after split")
    if any(abs(lm) < modulus_band - 1e-9 for lm in end.log_moduli) \
            and modulus_band > 0:
        raise HeadroomExceeded("endpoint modulus inside the excluded band")
    return path


def _moduli_need_split(spec: PeriodSpectrum, tol: Tolerances,
                       band: float, require_distinct: bool) -> bool:
    if any(abs(lm) < band for lm in spec.log_moduli):
        return True
    if require_distinct and not _distinct_moduli(spec, tol):
        return True
    return not spec.simple


def _distinct_moduli(spec: PeriodSpectrum, tol: Tolerances) -> bool:
    lm = sorted(spec.log_moduli)
    return all(lm[i + 1] - lm[i] > 5 * tol.eig for i in range(len(lm) - 1))


def _moduli_targets(log_moduli: np.ndarray, band: float, sl_sum: bool,
                    gap: float) -> np.ndarray:
    """Target log moduli: each keeps its sign (no crossing through the unit
    circle along the path), pairwise gaps >= gap, |target| >= band + gap;
    for SL the sum of targets equals the input sum."""
    n = len(log_moduli)
    order = np.argsort(log_moduli)
    lm = log_moduli[order]
    signs = np.sign(lm)
    n_neg = int(np.sum(signs < 0))
    n_pos = int(np.sum(signs > 0))
    for k in range(n):
        if signs[k] == 0:
            if n_neg <= n_pos:
                signs[k], n_neg = -1.0, n_neg + 1
            else:
                signs[k], n_pos = 1.0, n_pos + 1
    if sl_sum and n_neg == 0:
        signs[0], n_neg = -1.0, 1
    if sl_sum and n_pos == 0:
        signs[-1], n_pos = 1.0, 1
    targets = lm.copy()
    neg = [k for k in range(n) if signs[k] < 0]
    pos = [k for k in range(n) if signs[k] > 0]
    for rank, k in enumerate(reversed(neg)):  # nearest the band first
        targets[k] = min(lm[k], -(band + gap) - rank * gap)
    for ii in range(len(neg) - 2, -1, -1):    # keep the original order
        targets[neg[ii]] = min(targets[neg[ii]], targets[neg[ii + 1]] - gap)
    for rank, k in enumerate(pos):
        targets[k] = max(lm[k], (band + gap) + rank * gap)
    for ii in range(1, len(pos)):
        targets[pos[ii]] = max(targets[pos[ii]], targets[pos[ii - 1]] + gap)
    if sl_sum:
        resid = lm.sum() - targets.sum()
        if resid <= 0 and neg:
            targets[neg[0]] += resid
        elif resid > 0 and pos:
            targets[pos[-1]] += resid
        elif neg:
            targets[neg[0]] += resid
        else:
            targets[pos[-1]] += resid
    out = np.empty(n)
    out[order] = targets
    return out


def _split_moduli_gl(cocycle: PeriodicCocycle, eps: float, tol: Tolerances,
                     band: float) -> PerturbationPath:
    flags = real_schur_flags(cocycle)
    tri = triangularize(cocycle, flags, tol)
    log_mod = np.log(np.abs(tri.diagonals)).sum(axis=1)
    targets = _moduli_targets(log_mod, band,
                              cocycle.group is GroupTag.SL, gap=0.05)
    ell = cocycle.period
    exps = (targets - log_mod) / ell
    _gate_split_budget(cocycle, exps, eps)
    gens = [conjugated_generator(DiagPower(np.exp(exps)), tri.conjugators[i])
            for i in range(ell)]
    return PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps,
                            meta={"op": "split-moduli",
                                  "targets": targets.tolist()})


def _split_moduli_sp(cocycle: PeriodicCocycle, eps: float, tol: Tolerances,
                     band: float) -> PerturbationPath:
    split = invariant_splitting(cocycle, tol)
    sbf = symplectic_block_form(cocycle, stable=split.bundle_family(0), tol=tol)
    d = cocycle.dim // 2
    sub = PeriodicCocycle.unchecked(
        GroupTag.GL, [m[:d, :d] for m in sbf.cocycle.mats])
    flags = real_schur_flags(sub)
    tri = triangularize(sub, flags, tol)
    log_mod = np.log(np.abs(tri.diagonals)).sum(axis=1)
    gap = 0.05
    targets = _moduli_targets(log_mod, band, sl_sum=False, gap=gap)
    targets = np.minimum(targets, -(band + gap))  # stable side stays stable
    order = np.argsort(log_mod)
    for ii in range(len(order) - 2, -1, -1):      # re-enforce gaps after cap
        targets[order[ii]] = min(targets[order[ii]],
                                 targets[order[ii + 1]] - gap)
    ell = cocycle.period
    exps = (targets - log_mod) / ell
    _gate_split_budget(cocycle, exps, eps)
    gens = []
    for i in range(ell):
        v_gen = conjugated_generator(DiagPower(np.exp(exps)), tri.conjugators[i])
        lifted = compose([
            embed_at(v_gen, cocycle.dim, list(range(d))),
            embed_at(inv_transpose_generator(v_gen), cocycle.dim,
                     list(range(d, 2 * d))),
        ])
        gens.append(conjugated_generator(lifted, sbf.conjugators[i]))
    return PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps,
                            meta={"op": "split-moduli", "route": "sp-block",
                                  "targets": targets.tolist()})


def _gate_split_budget(cocycle: PeriodicCocycle, exps: np.ndarray,
                       eps: float) -> None:
    size = float(np.abs(np.expm1(exps)).max())
    need = size * cocycle.bound * 1.4
    if need >= eps:
        raise PeriodTooShort(
            f"period {cocycle.period} too short: per-index factor "
            f"{size:.3e} needs {need:.3e} > budget {eps:.3e}")


# ---------------------------------------------------------------------------
# The 2-D twist
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwistPlan:
    """Per-index upper-triangular 2x2 move recipe: one shear index, a boosted
    window, a compensated complement; the exponents sum to ~0 exactly so the
    endpoint moduli match the input."""

    shear_index: int
    shear_size: float
    exponents: np.ndarray   # one per index, applied as diag(e^g, e^-g)^t
    window: tuple[int, int]  # [start, start + length)
    forward: bool            # amplification direction through the window


def _plan_pair_twist(log_b: np.ndarray, log_c: np.ndarray, n_min: int,
                     shear_budget: float, exp_budget: float,
                     angle_target: float) -> TwistPlan | None:
    """Plan a twist collapsing the angle between the two axis bundles of the
    diagonal pair cocycle diag(b_i, c_i).

    The upper shear feeds the graph recursion x_{i+1} = (b_i/c_i)(x_i + eta);
    a non-dominated window is boosted (first entries up, second down, or the
    reverse) so the injected eta is amplified to ~1/angle_target, and the
    boost is compensated outside the window.  When the first axis expands
    overall, the graph is the stable bundle and the amplification runs
    backward through the window, so the shear sits at the window end.
    Returns None when no window is feasible within the budgets.
    """
    ell = len(log_b)
    forward = float(np.sum(log_b - log_c)) <= 0
    diff = (log_b - log_c) if forward else (log_c - log_b)
    amp_needed = math.log(2.0 / (angle_target * shear_budget))
    best: tuple[int, int, float] | None = None
    for n in range(max(1, n_min), ell // 2 + 1):
        reps = (n + ell - 1) // ell + 1
        ext = np.concatenate([diff] * reps)
        cs = np.concatenate([[0.0], np.cumsum(ext)])
        sums = cs[np.arange(ell) + n] - cs[np.arange(ell)]
        i = int(np.argmax(sums))
        margin = float(sums[i])
        if margin + 2 * n * exp_budget >= amp_needed:
            best = (i, n, margin)
            break
    if best is None:
        return None
    start, n, margin = best
    g = min(exp_budget,
            max(0.0, amp_needed - margin) / (2 * n) * 1.25 + 0.1 * exp_budget)
    window = [(start + k) % ell for k in range(n)]
    shear_index = (start - 1) % ell if forward else (start + n) % ell
    if shear_index in window:
        return None
    comp = [k for k in range(ell) if k not in window and k != shear_index]
    if not comp:
        return None
    exps = np.zeros(ell)
    orient = 1.0 if forward else -1.0  # boost b/c forward, c/b backward
    for k in window:
        exps[k] = orient * g
    spread = -orient * g * n / len(comp)
    for k in comp:
        exps[k] = spread
    exps[comp[-1]] -= exps.sum()  # exact-ish zero sum
    if np.abs(exps).max() > 1.1 * exp_budget:
        return None
    return TwistPlan(shear_index=shear_index, shear_size=shear_budget,
                     exponents=exps, window=(start, n), forward=forward)


def _twist_generators_2x2(plan: TwistPlan) -> list[PathGenerator]:
    """The per-index upper-triangular 2x2 generators of a twist plan."""
    ell = len(plan.exponents)
    gens: list[PathGenerator] = []
    for i in range(ell):
        if i == plan.shear_index:
            s = np.zeros((2, 2))
            s[0, 1] = plan.shear_size
            gens.append(ShearInterp(s))
        elif plan.exponents[i] != 0.0:
            e = plan.exponents[i]
            gens.append(DiagPower(np.exp(np.array([e, -e]))))
        else:
            gens.append(Identity(2))
    return gens


def mane_twist_2d(cocycle: PeriodicCocycle, eps_prime: float, n_prime: int,
                  tol: Tolerances = DEFAULT_TOLERANCES
                  ) -> tuple[PerturbationPath, int]:
    """Collapse the angle between the invariant directions of a hyperbolic
    diagonal 2x2 cocycle with unit determinant, without moving eigenvalue
    moduli.

    Generators are upper triangular: one shear [[1, t*eta], [0, 1]] at a
    single index plus diagonal factors [[(1+eta_i)^t, 0], [0, (1+eta_i)^-t]]
    whose product is 1, so the first axis stays invariant along the whole
    path and the endpoint moduli equal the input moduli.  Returns the path
    and an index where the endpoint angle is at most eps_prime.
    """
    if cocycle.dim != 2:
        raise PreconditionError("the twist needs a two-dimensional cocycle")
    offdiag = max(float(np.abs(m - np.diag(np.diag(m))).max())
                  for m in cocycle.mats)
    if offdiag > 1e-12 * cocycle.bound:
        raise PreconditionError("the twist needs a diagonal cocycle")
    dets = [float(np.linalg.det(m)) for m in cocycle.mats]
    if any(abs(dd - 1.0) > 1e-9 for dd in dets):
        raise PreconditionError("the twist needs unit determinants")
    spec0 = spectrum(cocycle, tol)
    if not spec0.hyperbolic:
        raise NotHyperbolic("the twist needs a hyperbolic cocycle")
    log_b = np.log(np.abs(np.array([m[0, 0] for m in cocycle.mats])))
    log_c = np.log(np.abs(np.array([m[1, 1] for m in cocycle.mats])))
    stable_first = log_b.sum() < log_c.sum()
    s_log, u_log = (log_b, log_c) if stable_first else (log_c, log_b)
    cert = scalar_domination(np.exp(s_log), np.exp(u_log), n_prime, tol)
    if cert.dominated:
        raise PreconditionError(
            f"splitting is {n_prime}-dominated; no twist window exists")

    split0 = invariant_splitting(cocycle, tol)
    j0, a0 = min_angle_over_orbit(split0)
    if a0 <= eps_prime:
        return identity_path(cocycle, eps_prime,
                             meta={"op": "twist", "trivial": True}), j0

    budgets = _per_index_headroom(cocycle, eps_prime)
    shear_budget = float(budgets.min()) * 0.9
    exp_budget = math.log1p(float(budgets.min()) * 0.9)
    target = eps_prime
    for attempt in range(3):
        plan = _plan_pair_twist(log_b, log_c, n_prime, shear_budget,
                                exp_budget, target)
        if plan is None:
            break
        gens = _twist_generators_2x2(plan)
        path = PerturbationPath(base=cocycle, gens=tuple(gens),
                                epsilon=eps_prime,
                                meta={"op": "twist", "window": plan.window,
                                      "shear_index": plan.shear_index})
        _measure_and_gate(path, eps_prime)
        end = evaluate_path(path, 1.0)
        end_split = invariant_splitting(end, tol)
        j_best, angle = min_angle_over_orbit(end_split)
        if angle <= eps_prime:
            return path, j_best
        target = target / 6.0
    raise HeadroomExceeded(
        "angle target unreachable within the budget",
        achieved=locals().get("angle", float("inf")), available=eps_prime)


# ---------------------------------------------------------------------------
# Small angle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmallAngleOutcome:
    """Either a path with the index realising the small angle, or the
    domination certificate that makes the construction impossible."""

    path: PerturbationPath | None
    index: int | None
    angle: float | None
    certificate: DominationCertificate | None

    @property
    def dominated(self) -> bool:
        return self.certificate is not None and self.certificate.dominated


def perturb_small_angle(cocycle: PeriodicCocycle, eps: float,
                        tol: Tolerances = DEFAULT_TOLERANCES
                        ) -> SmallAngleOutcome:
    """Make the angle between the stable and unstable spaces at some index
    smaller than eps, keeping the path hyperbolic at every sample.

    Pipeline: realify and separate moduli (half budget), exit early when the
    angle is already small, reduce to a diagonal pair straddling the
    stable/unstable split, and run the 2-D twist there.  When the splitting
    is N-dominated for the module-computed N the Dominated branch is
    returned: that is the other horn of the dichotomy, not a failure.
    """
    spec0 = spectrum(cocycle, tol)
    if not spec0.hyperbolic:
        raise NotHyperbolic("small-angle construction needs hyperbolicity")

    if spec0.all_real and _distinct_moduli(spec0, tol):
        stage1 = identity_path(cocycle, eps / 2.0, meta={"op": "noop"})
    else:
        stage1 = perturb_real_simple(cocycle, eps / 2.0, tol)
    mid = evaluate_path(stage1, 1.0)

    split_mid = invariant_splitting(mid, tol)
    j_now, angle_now = min_angle_over_orbit(split_mid)
    if angle_now <= eps:
        path = PerturbationPath(base=cocycle, gens=stage1.gens, epsilon=eps,
                                meta={**stage1.meta, "op": "small-angle",
                                      "early_exit": True})
        return SmallAngleOutcome(path=path, index=j_now,
                                 angle=angle_now, certificate=None)

    if cocycle.group is GroupTag.SP:
        return _small_angle_sp(cocycle, mid, stage1, eps, tol)
    return _small_angle_gl(cocycle, mid, stage1, eps, tol)


def _combine_stage_gens(dim: int, *stages) -> tuple[PathGenerator, ...]:
    out = []
    for parts in zip(*stages):
        live = [g for g in parts if not g.is_identity()]
        out.append(compose(live) if live else Identity(dim))
    return tuple(out)


def _small_angle_sp(original: PeriodicCocycle, mid: PeriodicCocycle,
                    stage1: PerturbationPath, eps: float, tol: Tolerances
                    ) -> SmallAngleOutcome:
    d = mid.dim // 2
    fine = invariant_splitting(mid, tol, finest=True)
    stable_flags = [np.hstack([fine.bundle(i, k).frame for k in range(d)])
                    for i in range(mid.period)]
    sbf = symplectic_block_form(mid, stable_flags=stable_flags, tol=tol)
    # unstable bundle as a Lagrangian graph over {0} x R^d in the new coords
    susp = invariant_splitting(mid, tol)
    deltas = []
    for i in range(mid.period):
        u_frame = sbf.conjugators[i].T @ susp.bundle(i, 1).frame
        top, bottom = u_frame[:d, :], u_frame[d:, :]
        slope = top @ np.linalg.inv(bottom)
        delta = np.eye(2 * d)
        delta[:d, d:] = slope
        deltas.append(delta)
    kappa = max(opnorm(dl) * opnorm(np.linalg.inv(dl)) for dl in deltas)
    frames = [sbf.conjugators[i] @ deltas[i] for i in range(mid.period)]

    # diagonal scalar cocycles of the block-diagonal reduction
    reduced = [np.linalg.inv(frames[(i + 1) % mid.period]) @ mid.mats[i]
               @ frames[i] for i in range(mid.period)]
    scalars = np.stack([np.array([reduced[i][r, r] for i in range(mid.period)])
                        for r in range(d)])

    budget_pair = (eps / 2.0) / (kappa * 1.3)
    pair_target = eps / (1.3 * max(kappa, 1.0))
    tri_mats = [r[:d, :d] for r in reduced]
    k_const = measure_triangular_K(np.abs(scalars), tri_mats,
                                   min(2 * mid.period, 40))
    n_prime = max(1, _twist_window_floor(mid, budget_pair, pair_target))
    n_bundle = scalar_to_bundle_N(n_prime, k_const)
    cert = check_domination(mid, susp.bundle_family(0), susp.bundle_family(1),
                            n_bundle, tol)
    if cert.dominated:
        return SmallAngleOutcome(path=None, index=None, angle=None,
                                 certificate=cert)
    try:
        from .domination import select_nondominated_pair
        r = select_nondominated_pair(scalars, n_prime, tol)
    except NoBreakFound:
        return SmallAngleOutcome(path=None, index=None, angle=None,
                                 certificate=cert)

    pair_mats = [np.diag([scalars[r - 1, i], 1.0 / scalars[r - 1, i]])
                 for i in range(mid.period)]
    pair = PeriodicCocycle.unchecked(GroupTag.SL, pair_mats)

    for attempt in range(4):
        sub_path, j_sub = mane_twist_2d(pair, min(budget_pair, pair_target),
                                        n_prime, tol)
        try_gens = []
        for i in range(mid.period):
            g2 = sub_path.gens[i]
            if g2.is_identity():
                try_gens.append(Identity(mid.dim))
            else:
                emb = embed_at(g2, mid.dim, [r - 1, d + r - 1])
                try_gens.append(conjugated_generator(emb, frames[i]))
        stage2 = PerturbationPath(base=mid, gens=tuple(try_gens),
                                  epsilon=eps / 2.0,
                                  meta={"op": "small-angle-twist", "r": r})
        end = evaluate_path(stage2, 1.0)
        end_split = invariant_splitting(end, tol)
        j_star, angle = min_angle_over_orbit(end_split)
        if angle <= eps:
            gens = _combine_stage_gens(mid.dim, stage1.gens, stage2.gens)
            path = PerturbationPath(
                base=original, gens=gens, epsilon=eps,
                meta={"op": "small-angle", "group": "SP", "r": r,
                      "N": n_bundle, "N_prime": n_prime, "K": k_const,
                      "kappa": kappa})
            _measure_and_gate(path, eps)
            _require_hyperbolic_samples(path, tol)
            return SmallAngleOutcome(path=path, index=j_star, angle=angle,
                                     certificate=None)
        pair_target /= 4.0
    raise HeadroomExceeded("small-angle twist did not reach the target",
                           achieved=angle, available=eps)


def _small_angle_gl(original: PeriodicCocycle, mid: PeriodicCocycle,
                    stage1: PerturbationPath, eps: float, tol: Tolerances
                    ) -> SmallAngleOutcome:
    fine = invariant_splitting(mid, tol, finest=True)
    spec_mid = spectrum(mid, tol)
    k_stable = spec_mid.stable_count()
    d0 = mid.dim
    frames = [np.hstack([fine.bundle(i, k).frame for k in range(d0)])
              for i in range(mid.period)]
    kappa = max(np.linalg.cond(f) for f in frames)
    # scalar coefficient cocycles along the unit-norm one-dimensional bundles
    diag = np.stack([
        np.array([float(frames[(i + 1) % mid.period][:, k]
                        @ (mid.matrix(i) @ frames[i][:, k]))
                  for i in range(mid.period)])
        for k in range(d0)])

    eps_twist = (eps / 2.0) / (kappa * 1.3)
    angle_target = eps / (1.5 * max(kappa, 1.0))
    n_prime = max(1, _twist_window_floor(mid, eps_twist, angle_target))
    susp = invariant_splitting(mid, tol)
    k_const = 1.0  # diagonal reduction: products are exactly diagonal
    n_bundle = scalar_to_bundle_N(n_prime, k_const)
    cert = check_domination(mid, susp.bundle_family(0), susp.bundle_family(1),
                            n_bundle, tol)
    if cert.dominated:
        return SmallAngleOutcome(path=None, index=None, angle=None,
                                 certificate=cert)

    candidates = []
    for a in range(k_stable):
        for b in range(k_stable, d0):
            sub = scalar_domination(diag[a], diag[b], n_prime, tol)
            if not sub.dominated:
                candidates.append((a, b, sub.witness.ratio))
    if not candidates:
        return SmallAngleOutcome(path=None, index=None, angle=None,
                                 certificate=cert)
    a, b, _ = max(candidates, key=lambda t: t[2])

    log_b = np.log(np.abs(diag[a]))
    log_c = np.log(np.abs(diag[b]))
    budget = float(_per_index_headroom(mid, eps_twist).min())
    for attempt in range(4):
        plan = _plan_pair_twist(log_b, log_c, n_prime, budget * 0.9,
                                math.log1p(budget * 0.9), angle_target)
        if plan is None:
            raise HeadroomExceeded("no feasible twist window for the pair")
        gens2x2 = _twist_generators_2x2(plan)
        try_gens = []
        for i in range(mid.period):
            g2 = gens2x2[i]
            if g2.is_identity():
                try_gens.append(Identity(d0))
            else:
                try_gens.append(BlockEmbed(inner=g2,
                                           basis=_perm_first(frames[i], [a, b])))
        stage2 = PerturbationPath(base=mid, gens=tuple(try_gens),
                                  epsilon=eps / 2.0, meta={"op": "gl-twist"})
        end = evaluate_path(stage2, 1.0)
        end_split = invariant_splitting(end, tol)
        j_star, angle = min_angle_over_orbit(end_split)
        if angle <= eps:
            gens = _combine_stage_gens(d0, stage1.gens, stage2.gens)
            path = PerturbationPath(
                base=original, gens=gens, epsilon=eps,
                meta={"op": "small-angle", "group": mid.group.value,
                      "pair": (a, b), "N": n_bundle, "N_prime": n_prime,
                      "kappa": kappa})
            _measure_and_gate(path, eps)
            _require_hyperbolic_samples(path, tol)
            return SmallAngleOutcome(path=path, index=j_star, angle=angle,
                                     certificate=None)
        angle_target /= 4.0
    raise HeadroomExceeded("small-angle twist did not reach the target",
                           achieved=angle, available=eps)


def _twist_window_floor(cocycle: PeriodicCocycle, eps_twist: float,
                        angle_target: float) -> int:
    """Window length below which the boosted amplification cannot reach the
    angle target: the N' the twist effectively requires."""
    shear = eps_twist / (cocycle.bound * 1.5)
    g = math.log1p(shear)
    need = math.log(2.0 / max(angle_target * shear, 1e-300)) + math.log(2.0)
    return max(1, math.ceil(need / (2 * g) / 8))


def _require_hyperbolic_samples(path: PerturbationPath, tol: Tolerances,
                                samples: int = 11) -> None:
    for k in range(samples):
        t = k / (samples - 1)
        if not spectrum(evaluate_path(path, t), tol).hyperbolic:
            raise HeadroomExceeded(f"sample t={t:.2f} lost hyperbolicity")


# ---------------------------------------------------------------------------
# Pairwise exponent mixing (twist + complexifying rotation)
# ---------------------------------------------------------------------------

def _plane_steps(cocycle: PeriodicCocycle, planes: list[np.ndarray]
                 ) -> list[np.ndarray]:
    """Restricted 2x2 step matrices of an invariant plane bundle given by
    per-index orthonormal 2-frames."""
    steps = []
    for i in range(cocycle.period):
        img = cocycle.matrix(i) @ planes[i]
        nxt = planes[(i + 1) % cocycle.period]
        step = np.linalg.lstsq(nxt, img, rcond=None)[0]
        if opnorm(img - nxt @ step) > 1e-6 * max(1.0, opnorm(img)):
            raise PreconditionError("pair plane is not invariant")
        steps.append(step)
    return steps


def _complexify_rotation(steps: list[np.ndarray], j_star: int,
                         phi_max: float) -> float | None:
    """Rotation angle at one index pushing the restricted product's
    discriminant strictly negative (a complex, equal-modulus pair)."""
    def disc(phi: float) -> float:
        rot = np.array([[math.cos(phi), math.sin(phi)],
                        [-math.sin(phi), math.cos(phi)]])
        p = np.eye(2)
        for i in range(len(steps)):
            m = steps[(j_star + i) % len(steps)]
            if i == 0:
                m = m @ rot
            p = m @ p
            peak = float(np.abs(p).max())
            if peak > 1e100:
                p /= peak
        tr = p[0, 0] + p[1, 1]
        det = p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0]
        return tr * tr - 4.0 * det

    scale = abs(disc(0.0)) + 1e-300
    grid = 160
    best_phi, best_val = None, 0.0
    for sign in (1.0, -1.0):
        for g in range(1, grid + 1):
            phi = sign * phi_max * g / grid
            val = disc(phi)
            if val < -1e-9 * scale:
                # step a little deeper for robustness, within the budget
                deeper = phi * min(1.3, phi_max / abs(phi))
                if disc(deeper) < val:
                    return deeper
                return phi
            if val < best_val:
                best_phi, best_val = phi, val
    return best_phi if best_val < -1e-12 * scale else None


def _pair_mix_once(cocycle: PeriodicCocycle, pair: tuple[int, int],
                   budget: float, tol: Tolerances) -> PerturbationPath | None:
    """One pairwise mixing stage: collapse the angle of an adjacent real
    eigenvalue pair, then rotate at the pinch index until the pair goes
    complex, which locks both moduli to the pair's geometric mean.

    Returns None when the pair is dominated or no twist window fits.
    """
    a, b = pair
    d0 = cocycle.dim
    fine = invariant_splitting(cocycle, tol, finest=True)
    frames = [np.hstack([fine.bundle(i, k).frame for k in range(d0)])
              for i in range(cocycle.period)]
    kappa = max(np.linalg.cond(f) for f in frames)
    coeff = np.stack([
        np.array([float(frames[(i + 1) % cocycle.period][:, k]
                        @ (cocycle.matrix(i) @ frames[i][:, k]))
                  for i in range(cocycle.period)])
        for k in range(d0)])
    log_b = np.log(np.abs(coeff[a]))
    log_c = np.log(np.abs(coeff[b]))
    cert = scalar_domination(np.exp(log_b), np.exp(log_c), 1, tol)
    if cert.dominated:
        return None

    # the complexifying rotation must exceed the pinched angle, so the twist
    # target is sized to the rotation budget (re-estimated after the twist)
    shear_budget = (budget / 2.0) / (kappa * 1.35 * max(1.0, cocycle.bound))
    phi_est = (budget / 2.0) / (max(1.0, cocycle.bound) * kappa * 1.2)
    pinch_target = 0.4 * phi_est
    for attempt in range(3):
        plan = _plan_pair_twist(log_b, log_c, 1, shear_budget,
                                math.log1p(shear_budget), pinch_target)
        if plan is None:
            return None
        gens1 = []
        for i, g2 in enumerate(_twist_generators_2x2(plan)):
            if g2.is_identity():
                gens1.append(Identity(d0))
            else:
                gens1.append(BlockEmbed(inner=g2,
                                        basis=_perm_first(frames[i], [a, b])))
        stage1 = PerturbationPath(base=cocycle, gens=tuple(gens1),
                                  epsilon=budget, meta={"op": "pair-twist"})
        mid = evaluate_path(stage1, 1.0)

        fine_mid = invariant_splitting(mid, tol, finest=True)
        planes = []
        angles = []
        for i in range(mid.period):
            u = np.hstack([fine_mid.bundle(i, a).frame,
                           fine_mid.bundle(i, b).frame])
            angles.append(smallest_angle(fine_mid.bundle(i, a),
                                         fine_mid.bundle(i, b)))
            q, _ = np.linalg.qr(u)
            planes.append(q[:, :2])
        j_star = int(np.argmin(angles))
        steps = _plane_steps(mid, planes)
        others = [k for k in range(d0) if k not in (a, b)]
        embed_basis = np.hstack(
            [planes[j_star]]
            + [fine_mid.bundle(j_star, k).frame for k in others])
        kappa_rot = np.linalg.cond(embed_basis)
        phi_max = (budget / 2.0) / (max(1.0, cocycle.bound) * kappa_rot * 1.2)
        if angles[j_star] > 0.9 * phi_max:
            pinch_target /= 4.0
            continue
        phi = _complexify_rotation(steps, j_star, phi_max)
        if phi is None:
            pinch_target /= 4.0
            continue
        gens2 = [Identity(d0) for _ in range(mid.period)]
        gens2[j_star] = BlockEmbed(inner=RotationInterp(2, (0, 1), phi),
                                   basis=embed_basis)
        combined = _combine_stage_gens(d0, stage1.gens, tuple(gens2))
        path = PerturbationPath(base=cocycle, gens=combined, epsilon=budget,
                                meta={"op": "pair-mix", "pair": pair,
                                      "pinch_index": j_star, "phi": phi})
        _measure_and_gate(path, budget)
        end = spectrum(evaluate_path(path, 1.0), tol)
        if _pair_merged(sorted(end.log_moduli),
                        (log_b.sum() + log_c.sum()) / 2.0):
            return path
        pinch_target /= 4.0
    return None


def _pair_merged(sorted_log_moduli, target_log: float, rel: float = 1e-6
                 ) -> bool:
    hits = [lm for lm in sorted_log_moduli
            if abs(lm - target_log) <= max(rel, rel * abs(target_log)) * 4]
    return len(hits) >= 2


MixStrategy = Callable[[PeriodicCocycle, float], PerturbationPath]
