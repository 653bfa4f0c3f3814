"""Exponent mixing: locating and exploiting domination breaks inside the
stable bundle so the stable (and, reciprocally, unstable) eigenvalue moduli
can be equalised.

The symplectic route reduces along a cascade: for each strong-stable
dimension j the splitting inside the stable space is either broken by a small
perturbation (two graph shears around a located domination failure) or the
whole cocycle carries a propagated domination certificate.  Once no stable
sub-splitting is strongly dominated, the stable block is handed to a GL
mixing strategy and the result is lifted back through the Lagrangian block
form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (DEFAULT_TOLERANCES, Compose, DiagPower, GroupTag, Identity,
                   PathGenerator, PerturbationPath, PeriodicCocycle,
                   ShearInterp, Tolerances, compose, evaluate_path,
                   extend_period, identity_path)
from .domination import (BreakConstants, DominationBreak, DominationCertificate,
                         PropagationReport, Verdict, Witness, break_constants,
                         check_domination, find_domination_break,
                         propagate_symplectic_domination, scalar_domination)
from .errors import (DomainError, HeadroomExceeded, NotHyperbolic,
                     PreconditionError, SpectrumNotSimple, StrategyFailed)
from .perturb import (MixStrategy, _combine_stage_gens, _measure_and_gate,
                      _pair_mix_once, _per_index_headroom,
                      conjugated_generator, embed_at, inv_transpose_generator,
                      perturb_real_simple)
from .spectral import (Splitting, invariant_splitting, scaled_period_map,
                       spectrum, symplectic_block_form)
from .symplectic import Subspace, smallest_angle, subspace_distance
from .utils import opnorm, relative_gap


# ---------------------------------------------------------------------------
# Four-way splittings and adapted symplectic frames
# ---------------------------------------------------------------------------

def four_way_splitting(cocycle: PeriodicCocycle, j: int,
                       tol: Tolerances = DEFAULT_TOLERANCES) -> Splitting:
    """ss/cs/cu/uu splitting with dim ss = dim uu = j, from the finest
    splitting of a hyperbolic cocycle with simple real spectrum (bundles
    ordered by modulus ascending)."""
    fine = invariant_splitting(cocycle, tol, finest=True)
    d = cocycle.dim // 2
    if not 1 <= j <= d - 1:
        raise DomainError(f"strong dimension j={j} outside 1..{d - 1}")
    groups = (tuple(range(j)), tuple(range(j, d)),
              tuple(range(d, 2 * d - j)), tuple(range(2 * d - j, 2 * d)))
    bundles = []
    for i in range(cocycle.period):
        row = []
        for g in groups:
            frames = np.hstack([fine.bundle(i, k).frame for k in g])
            row.append(Subspace.from_spanning(frames))
        bundles.append(tuple(row))
    return Splitting(bundles=tuple(bundles), labels=("ss", "cs", "cu", "uu"))


def _adapted_frame(split4: Splitting, index: int, j_std: np.ndarray
                   ) -> np.ndarray:
    """Symplectic frame [ss | cs | duals-from-uu | duals-from-cu] at one
    index: q-block spans the stable space, p-block lies inside the unstable
    space with omega(q_a, p_b) = delta_ab exactly."""
    q = np.hstack([split4.bundle(index, 0).frame, split4.bundle(index, 1).frame])
    p0 = np.hstack([split4.bundle(index, 3).frame, split4.bundle(index, 2).frame])
    pairing = q.T @ j_std @ p0
    p = p0 @ np.linalg.inv(pairing)
    return np.hstack([q, p])


def _form4_frame(split4: Splitting, index: int, j_std: np.ndarray,
                 j: int) -> np.ndarray:
    """Frame [ss | cs, duals-of-cs-inside-cu | duals-of-ss-inside-uu]: the
    middle 2(d-j) columns carry their own standard form, so the conjugated
    middle block is symplectic in its own right."""
    ss = split4.bundle(index, 0).frame
    cs = split4.bundle(index, 1).frame
    cu = split4.bundle(index, 2).frame
    uu = split4.bundle(index, 3).frame
    p_cs = cu @ np.linalg.inv(cs.T @ j_std @ cu)
    p_ss = uu @ np.linalg.inv(ss.T @ j_std @ uu)
    return np.hstack([ss, cs, p_cs, p_ss])


# ---------------------------------------------------------------------------
# Rectification (graph shears)
# ---------------------------------------------------------------------------

def _graph_slope(frame_inv: np.ndarray, target: Subspace, j: int, d: int
                 ) -> np.ndarray:
    """Slope G of a subspace that is a graph over the cs coordinates in
    adapted coordinates: rows are cu-dual coordinates, columns cs ones."""
    x = frame_inv @ target.frame
    q_cs = x[j:d, :]
    p_cs = x[d + j:, :]
    leak = float(np.abs(x[:j, :]).max(initial=0.0))
    if leak > 1e-6:
        raise PreconditionError(
            f"target has a strong-stable component ({leak:.2e}); "
            "it must sit inside cs + cu")
    g = p_cs @ np.linalg.inv(q_cs)
    sym_defect = opnorm(g - g.T)
    if sym_defect > 1e-6 * max(1.0, opnorm(g)):
        raise PreconditionError(
            f"target graph slope is not symmetric (defect {sym_defect:.2e}); "
            "the target must be isotropic")
    return 0.5 * (g + g.T)


def _rectify_generator(frame: np.ndarray, slope: np.ndarray, j: int,
                       d: int) -> PathGenerator:
    """U(t) = [[I, 0], [tB, I]] in the adapted frame, B = diag(0_j, slope):
    symplectic for every t, identity on the strong-stable block."""
    s = np.zeros((2 * d, 2 * d))
    s[d + j:, j:d] = slope
    return conjugated_generator(ShearInterp(s), frame)


def rectify_center_stable(cocycle: PeriodicCocycle, split4: Splitting,
                          k: int, target: Subspace, eps_prime: float,
                          tol: Tolerances = DEFAULT_TOLERANCES,
                          from_space: Subspace | None = None
                          ) -> PerturbationPath:
    """Path fragment at index k sending the centre-stable space (or
    ``from_space``) onto ``target`` at index k+1, constant on the
    strong-stable bundle and on the whole unstable space.

    The generator is the symplectic shear [[I, 0], [tB, I]] in adapted
    coordinates with the strong-stable block inside ker(B).
    """
    from .symplectic import _cached_j

    d = cocycle.dim // 2
    j = split4.bundle(0, 0).dim
    jj = _cached_j(cocycle.dim)
    k = k % cocycle.period
    frame = _adapted_frame(split4, k, jj)
    frame_inv = np.linalg.inv(frame)
    pulled = target.apply(cocycle.inverse(k))
    slope_target = _graph_slope(frame_inv, pulled, j, d)
    if from_space is None:
        slope_from = np.zeros_like(slope_target)
    else:
        slope_from = _graph_slope(frame_inv, from_space, j, d)
    slope = slope_target - slope_from
    gen = _rectify_generator(frame, slope, j, d)
    gens = [gen if i == k else Identity(cocycle.dim)
            for i in range(cocycle.period)]
    path = PerturbationPath(base=cocycle, gens=tuple(gens), epsilon=eps_prime,
                            meta={"op": "rectify", "index": k,
                                  "slope_norm": float(opnorm(slope))})
    _measure_and_gate(path, eps_prime)
    end = evaluate_path(path, 1.0)
    src = from_space if from_space is not None else split4.bundle(k, 1)
    image = src.apply(end.matrix(k))
    residual = subspace_distance(image, target)
    if residual > 1e-8:
        raise PreconditionError(
            f"rectification image residual {residual:.3e} > 1e-8")
    return path


# ---------------------------------------------------------------------------
# mix_reduced: break one stable sub-splitting or certify domination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixReducedOutcome:
    """Either a propagated domination certificate (``dominated``) or a path
    breaking the index-j stable splitting, with audit constants in meta."""

    certificate: DominationCertificate | None
    propagation: PropagationReport | None
    path: PerturbationPath | None
    meta: dict

    @property
    def dominated(self) -> bool:
        return self.certificate is not None


def mix_reduced(cocycle: PeriodicCocycle, j: int, n0: int, eps_prime: float,
                tol: Tolerances = DEFAULT_TOLERANCES,
                eta: float = 0.25) -> MixReducedOutcome:
    """Given a hyperbolic SP cocycle with simple real spectrum and the stable
    splitting E^s = ss + cs of strong dimension j, either certify an
    N'-dominated splitting of the whole cocycle, or produce a path (possibly
    with an enlarged, even multiple period) such that: every sample is
    hyperbolic; the restriction to ss is untouched; the continued splitting
    stays trackable; the restricted stable/unstable determinants are constant
    in t; and the endpoint splitting ss + cs is no longer n0-dominated.
    """
    spec = spectrum(cocycle, tol)
    if not spec.hyperbolic:
        raise NotHyperbolic("mix_reduced needs a hyperbolic cocycle")
    if not (spec.simple and spec.all_real):
        raise SpectrumNotSimple("mix_reduced needs simple real spectrum")
    if not _distinct_log_moduli(spec.log_moduli, tol):
        raise SpectrumNotSimple("mix_reduced needs pairwise distinct moduli")
    split4 = four_way_splitting(cocycle, j, tol)
    ss = split4.bundle_family(0)
    cs = split4.bundle_family(1)

    stable_cert = check_domination(cocycle, ss, cs, n0, tol)
    if not stable_cert.dominated:
        # nothing to show: the target splitting is already broken
        return MixReducedOutcome(
            certificate=None, propagation=None,
            path=identity_path(cocycle, eps_prime,
                               meta={"op": "mix-reduced", "trivial": True}),
            meta={"j": j, "n0": n0, "already_broken": True,
                  "witness": stable_cert.witness})

    cons = break_constants(n0, eta, cocycle.bound)
    brk = find_domination_break(cocycle, split4, n0, eta, tol, cons)
    if brk is None:
        return _dominated_branch(cocycle, split4, j, n0, cons, tol)
    return _break_branch(cocycle, split4, j, n0, eps_prime, brk, tol)


def _distinct_log_moduli(log_moduli, tol: Tolerances) -> bool:
    lm = sorted(log_moduli)
    return all(lm[i + 1] - lm[i] > 5 * tol.eig for i in range(len(lm) - 1))


def _dominated_branch(cocycle: PeriodicCocycle, split4: Splitting, j: int,
                      n0: int, cons: BreakConstants, tol: Tolerances
                      ) -> MixReducedOutcome:
    from .symplectic import _cached_j

    # no break found: the strong bundle must actually dominate the centre
    hypothesis = check_domination(cocycle, split4.bundle_family(0),
                                  split4.joined((1, 2)), n0, tol)
    if not hypothesis.dominated:
        raise PreconditionError(
            "no domination break found although the strong/centre splitting "
            f"is not even {n0}-dominated; witness {hypothesis.witness}")
    jj = _cached_j(cocycle.dim)
    frames = [_form4_frame(split4, i, jj, j) for i in range(cocycle.period)]
    inverses = [np.linalg.inv(f) for f in frames]
    mats = [inverses[(i + 1) % cocycle.period] @ cocycle.mats[i] @ frames[i]
            for i in range(cocycle.period)]
    conj = PeriodicCocycle.unchecked(GroupTag.GL, mats)
    report = propagate_symplectic_domination(conj, j, max(2, min(cons.n_tilde, 12)),
                                             tol)
    # re-issue the certificate on the original cocycle's bundles
    weak = split4.joined((0, 1, 2))
    strong = split4.bundle_family(3)
    cert = check_domination(cocycle, weak, strong, report.n_prime, tol)
    if not cert.dominated:
        raise PreconditionError(
            "propagated certificate failed on the original coordinates")
    return MixReducedOutcome(certificate=cert, propagation=report, path=None,
                             meta={"j": j, "n0": n0,
                                   "constants": cons.__dict__})


def _break_branch(cocycle: PeriodicCocycle, split4: Splitting, j: int,
                  n0: int, eps_prime: float, brk: DominationBreak,
                  tol: Tolerances) -> MixReducedOutcome:
    from .symplectic import _cached_j

    d = cocycle.dim // 2
    ell = cocycle.period
    jj = _cached_j(cocycle.dim)

    # the deformed centre-stable space at the window end: the minimal
    # isotropic graph over cs containing the propagated centre direction
    e_idx = (brk.i0 + brk.m0) % ell
    frame_e = _adapted_frame(split4, e_idx, jj)
    frame_e_inv = np.linalg.inv(frame_e)
    from .spectral import scaled_product
    prod, _ = scaled_product(cocycle, brk.i0, brk.m0)
    w = prod @ brk.u_c
    w = w / np.linalg.norm(w)
    wx = frame_e_inv @ w
    w_cs = wx[j:d]
    w_cu = wx[d + j:]
    alpha = float(w_cs @ w_cs)
    if alpha < 1e-12:
        raise PreconditionError("propagated centre direction lost its cs part")
    g_min = (np.outer(w_cu, w_cs) + np.outer(w_cs, w_cu)) / alpha \
        - float(w_cs @ w_cu) * np.outer(w_cs, w_cs) / (alpha * alpha)
    dm = d - j
    hat_frame = frame_e[:, j:d] + frame_e[:, d + j:] @ g_min
    hat_e = Subspace.from_spanning(hat_frame)

    # pull back until the deformation has decayed below the shear budget
    budget = float(_per_index_headroom(cocycle, eps_prime).min()) * 0.5
    threshold = min(brk.closeness, budget, 0.05)
    k_idx: int | None = None
    span_limit = 8 * ell
    cur = hat_e
    steps_back = 0
    for back in range(1, span_limit):
        m_idx = (e_idx - back) % ell
        cur = cur.apply(cocycle.inverse(m_idx))
        dist = subspace_distance(cur, split4.bundle(m_idx, 1))
        if back > brk.m0 and dist <= threshold:
            k_idx = e_idx - back  # unwrapped (may be negative)
            steps_back = back
            break
    if k_idx is None:
        raise HeadroomExceeded(
            "pulled-back deformation never entered the shear budget",
            available=threshold)
    hat = cur

    # extended period: an even multiple of the base period covering the
    # whole perturbed window, with the window embedded at positive indices
    shift = ell * math.ceil((steps_back + 1) / ell)
    k_ext = k_idx + shift
    e_ext = k_ext + steps_back
    i0_ext = e_ext - brk.m0
    q_mult = 2 * math.ceil((e_ext + ell + 1) / (2 * ell))
    ell_ext = q_mult * ell

    extended = extend_period(cocycle, q_mult)
    split_ext = Splitting(
        bundles=tuple(split4.bundles[i % ell] for i in range(ell_ext)),
        labels=split4.labels)

    # hat lives at index k_idx; its image one step forward is the target of
    # the first rectification.
    hat_k1 = hat.apply(cocycle.matrix(k_idx))
    frag1 = rectify_center_stable(extended, split_ext, k_ext, hat_k1,
                                  eps_prime, tol)
    # continuation from k_ext+1 forward to e_ext
    cur = hat_k1
    for m in range(k_ext + 1, e_ext):
        cur = cur.apply(extended.matrix(m))
    hat_at_e = cur
    frag2 = rectify_center_stable(
        extended, split_ext, e_ext,
        split_ext.bundle(e_ext + 1, 1), eps_prime, tol,
        from_space=hat_at_e)

    gens = _combine_stage_gens(cocycle.dim, frag1.gens, frag2.gens)
    path = PerturbationPath(
        base=extended, gens=gens, epsilon=eps_prime,
        meta={"op": "mix-reduced", "j": j, "n0": n0,
              "i0": i0_ext, "m0": brk.m0, "k": k_ext,
              "constants": brk.constants.__dict__,
              "period_multiple": q_mult})
    _measure_and_gate(path, eps_prime)
    _verify_mix_reduced_items(path, extended, split_ext, j, n0, i0_ext,
                              brk, tol)
    return MixReducedOutcome(certificate=None, propagation=None, path=path,
                             meta=dict(path.meta))


def _verify_mix_reduced_items(path: PerturbationPath,
                              extended: PeriodicCocycle,
                              split_ext: Splitting, j: int, n0: int,
                              i0_ext: int, brk: DominationBreak,
                              tol: Tolerances) -> None:
    end = evaluate_path(path, 1.0)
    # item: hyperbolic at samples with det restrictions constant
    dets = []
    for k in range(11):
        t = k / 10
        ct = evaluate_path(path, t)
        spec_t = spectrum(ct, tol)
        if not spec_t.hyperbolic:
            raise HeadroomExceeded(f"sample t={t:.1f} lost hyperbolicity")
        stable_log = sum(lm for lm in spec_t.log_moduli if lm < 0)
        dets.append(stable_log)
    det_range = max(dets) - min(dets)
    if det_range > 1e-8 * max(1.0, abs(dets[0])):
        raise HeadroomExceeded(
            f"stable determinant drifted by {det_range:.3e} along the path")
    # item: untouched restriction to ss
    for i in range(extended.period):
        ss_frame = split_ext.bundle(i, 0).frame
        drift = opnorm(end.matrix(i) @ ss_frame - extended.matrix(i) @ ss_frame)
        if drift > 1e-12 * max(1.0, extended.bound):
            raise HeadroomExceeded(f"ss restriction moved at index {i}")
    # item: the endpoint splitting is not n0-dominated, witnessed by the
    # break vectors evaluated on raw endpoint matrices
    prod = np.eye(extended.dim)
    for k in range(n0):
        prod = end.matrix(i0_ext + k) @ prod
    num = float(np.linalg.norm(prod @ brk.u_ss))
    den = float(np.linalg.norm(prod @ brk.u_c))
    if not num > 0.5 * den:
        raise HeadroomExceeded(
            f"endpoint kept n0-domination: ratio {num / den:.3f}")
    path.meta["item5_ratio"] = num / den
    path.meta["det_range"] = det_range


# ---------------------------------------------------------------------------
# Full mixing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixOutcome:
    """Either the mixing path or the domination certificate that voids the
    hypothesis; ``partial`` marks a fallback that stopped at its iteration
    cap with the achieved spread recorded in meta."""

    path: PerturbationPath | None
    certificate: DominationCertificate | None
    meta: dict

    @property
    def dominated(self) -> bool:
        return self.certificate is not None


def mix_exponents(cocycle: PeriodicCocycle, eps: float,
                  strategy: MixStrategy | None = None,
                  tol: Tolerances = DEFAULT_TOLERANCES,
                  n0: int = 2) -> MixOutcome:
    """Equalise the stable (and unstable) eigenvalue moduli of a hyperbolic
    cocycle without strong domination.

    GL and SL route straight to the strategy.  SP runs the descending
    cascade: break every n0-dominated splitting inside the stable bundle via
    mix_reduced with budgets eps_j < eps/2d, then apply the strategy to the
    stable block of the Lagrangian block form and lift the result through
    [[V, 0], [0, V^-T]].
    """
    strategy = strategy or fallback_mix_strategy
    if cocycle.group in (GroupTag.GL, GroupTag.SL):
        try:
            return MixOutcome(path=strategy(cocycle, eps), certificate=None,
                              meta={"route": "direct"})
        except (HeadroomExceeded, PreconditionError) as exc:
            raise StrategyFailed(f"direct strategy failed: {exc}") from exc
    d = cocycle.dim // 2
    spec0 = spectrum(cocycle, tol)
    if not spec0.hyperbolic:
        raise NotHyperbolic("mixing needs a hyperbolic cocycle")
    if d == 1:
        return MixOutcome(path=identity_path(cocycle, eps,
                                             meta={"route": "trivial"}),
                          certificate=None, meta={"route": "trivial"})

    stages: list[PerturbationPath] = []
    current = cocycle
    budget = eps / (2.0 * d)

    if not (spec0.all_real and spec0.simple
            and _distinct_log_moduli(spec0.log_moduli, tol)):
        prep = perturb_real_simple(cocycle, budget, tol, modulus_band=0.0)
        stages.append(prep)
        current = evaluate_path(prep, 1.0)

    trace: list[dict] = []
    for jj in range(1, d):
        outcome = mix_reduced(current, jj, n0, budget, tol)
        trace.append({"j": jj, "dominated": outcome.dominated,
                      **{k: v for k, v in outcome.meta.items()
                         if k in ("already_broken", "period_multiple")}})
        if outcome.dominated:
            return MixOutcome(path=None, certificate=outcome.certificate,
                              meta={"route": "cascade", "trace": trace})
        if outcome.path.is_identity():
            continue
        mult = outcome.path.base.period // current.period
        if mult > 1:
            stages = [_repeat_path(p, mult) for p in stages]
        stages.append(outcome.path)
        current = evaluate_path(outcome.path, 1.0)

    final_stage = _simple_case_stage(current, eps / 2.0, strategy, tol)
    stages.append(final_stage)

    gens = _combine_stage_gens(cocycle.dim, *(p.gens for p in stages))
    base = cocycle if current.period == cocycle.period \
        else extend_period(cocycle, current.period // cocycle.period)
    path = PerturbationPath(base=base, gens=gens, epsilon=eps,
                            meta={"route": "cascade", "trace": trace,
                                  "stages": [p.meta.get("op") for p in stages]})
    _measure_and_gate(path, eps)
    spread = _stable_spread(evaluate_path(path, 1.0), tol)
    path.meta["stable_spread"] = spread
    partial = bool(final_stage.meta.get("partial", False)) or spread > 1e-6
    return MixOutcome(path=path, certificate=None,
                      meta={"route": "cascade", "trace": trace,
                            "stable_spread": spread, "partial": partial})


def _repeat_path(path: PerturbationPath, mult: int) -> PerturbationPath:
    base = extend_period(path.base, mult)
    gens = tuple(path.gens[i % path.base.period]
                 for i in range(base.period))
    return PerturbationPath(base=base, gens=gens, epsilon=path.epsilon,
                            meta=path.meta)


def _stable_spread(cocycle: PeriodicCocycle, tol: Tolerances) -> float:
    """Relative spread of the stable eigenvalue moduli (log range)."""
    spec = spectrum(cocycle, tol)
    stable = [lm for lm in spec.log_moduli if lm < 0]
    if len(stable) < 2:
        return 0.0
    return max(stable) - min(stable)


def _simple_case_stage(current: PeriodicCocycle, eps: float,
                       strategy: MixStrategy, tol: Tolerances
                       ) -> PerturbationPath:
    """Conjugate to the Lagrangian block form, run the strategy on the stable
    block, and lift the generators symplectically."""
    d = current.dim // 2
    split = invariant_splitting(current, tol)
    sbf = symplectic_block_form(current, stable=split.bundle_family(0), tol=tol)
    sub = PeriodicCocycle.unchecked(GroupTag.GL,
                                    [m[:d, :d] for m in sbf.cocycle.mats])
    try:
        sub_path = strategy(sub, eps / 1.4)
    except (HeadroomExceeded, PreconditionError) as exc:
        raise StrategyFailed(f"stable-block strategy failed: {exc}") from exc
    gens = []
    for i in range(current.period):
        v_gen = sub_path.gens[i]
        if v_gen.is_identity():
            gens.append(Identity(current.dim))
            continue
        lifted = compose([
            embed_at(v_gen, current.dim, list(range(d))),
            embed_at(inv_transpose_generator(v_gen), current.dim,
                     list(range(d, 2 * d))),
        ])
        gens.append(conjugated_generator(lifted, sbf.conjugators[i]))
    return PerturbationPath(base=current, gens=tuple(gens), epsilon=eps,
                            meta={"op": "simple-case",
                                  "partial": sub_path.meta.get("partial", False)})


# ---------------------------------------------------------------------------
# Fallback GL mixing strategy
# ---------------------------------------------------------------------------

def fallback_mix_strategy(cocycle: PeriodicCocycle, eps: float,
                          tol: Tolerances = DEFAULT_TOLERANCES,
                          spread_goal: float = 1e-6,
                          max_rounds: int | None = None) -> PerturbationPath:
    """Stand-in exponent mixer for GL(d): repeatedly collapse the angle of an
    adjacent non-dominated modulus pair and rotate it into a complex pair,
    which forces both moduli onto the pair's geometric mean (determinants are
    untouched throughout).

    Emits a valid path even when the target spread is out of reach of the
    pairwise mechanism; meta["partial"] marks that case with the achieved
    spread recorded.
    """
    d = cocycle.dim
    if d == 1:
        return identity_path(cocycle, eps, meta={"op": "fallback-mix"})
    rounds = max_rounds if max_rounds is not None else 2 * d
    stages: list[PerturbationPath] = []
    current = cocycle
    budget = eps / max(1, d - 1) * 0.9
    for _ in range(rounds):
        spread, pair = _worst_real_pair(current, tol)
        if spread <= spread_goal:
            break
        if pair is None:
            break
        attempted = True
        stage = _pair_mix_once(current, pair, budget, tol)
        if stage is None:
            if not stages:
                raise PreconditionError(
                    "the selected adjacent pair is dominated; no mixing "
                    "mechanism applies")
            break
        stages.append(stage)
        current = evaluate_path(stage, 1.0)
    final_spread, _ = _worst_real_pair(current, tol)
    if not stages:
        if final_spread <= spread_goal:
            return identity_path(cocycle, eps,
                                 meta={"op": "fallback-mix", "partial": False,
                                       "achieved_spread": final_spread})
        raise PreconditionError(
            "no adjacent non-dominated real pair is available to mix")
    gens = _combine_stage_gens(d, *(p.gens for p in stages))
    path = PerturbationPath(base=cocycle, gens=gens, epsilon=eps,
                            meta={"op": "fallback-mix",
                                  "rounds": len(stages),
                                  "achieved_spread": final_spread,
                                  "partial": final_spread > spread_goal})
    _measure_and_gate(path, eps)
    return path


def _worst_real_pair(cocycle: PeriodicCocycle, tol: Tolerances
                     ) -> tuple[float, tuple[int, int] | None]:
    """(log-modulus spread, indices of the adjacent real-real eigenvalue pair
    with the largest gap), indices in the modulus-ascending bundle order."""
    spec = spectrum(cocycle, tol)
    logs = sorted(spec.log_moduli)
    spread = logs[-1] - logs[0]
    vals_sorted = sorted(zip(spec.log_moduli, spec.eigenvalues),
                         key=lambda p: p[0])
    best = None
    best_gap = 0.0
    for a in range(len(vals_sorted) - 1):
        la, va = vals_sorted[a]
        lb, vb = vals_sorted[a + 1]
        if abs(va.imag) > 1e-9 * max(1.0, abs(va)):
            continue
        if abs(vb.imag) > 1e-9 * max(1.0, abs(vb)):
            continue
        gap = lb - la
        if gap > max(best_gap, 5 * tol.eig):
            best, best_gap = (a, a + 1), gap
    return spread, best
