"""Constructive transforms on distributions and interaction matrices, and
checkers for the quantitative energy bounds.

Every checker returns a report dict with ``lhs``, ``rhs`` and ``pass`` plus
the energies involved.  Energies on graphons are computed with the
projected-gradient solver, warm-started from grid-oracle profiles when the
grid is small, and improved by transporting certificates between the two
sides of the inequality (each transport maps a feasible profile of one
problem to a feasible profile of the other).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InteractionMatrix, ProbabilityDistribution, ThresholdSpec, WeightedGraph
from .cut import cut_distance_step
from .errors import BudgetExceeded, DomainError, ValidationError
from .graph_energy import DEFAULT_BUDGET, ltgse_graph, mgse
from .graphon import StepGraphon, graphon_from_graph
from .graphon_energy import FractionalProfile, energy_of_profile, grid_oracle, minimize_energy

RATIONAL_TOL = 1e-12
CHECK_TOL = 1e-6
ORACLE_WARM_BUDGET = 2 * 10**6


# ------------------------------------------------------------------ blow-up


@dataclass(frozen=True)
class BlowUp:
    """J' on q' states, the uniform distribution b, and the parent state of each new state."""

    J: InteractionMatrix
    b: ProbabilityDistribution
    parent: tuple
    kept: tuple

    def to_dict(self):
        return {
            "J": self.J.to_list(),
            "b": self.b.a.tolist(),
            "parent": [p + 1 for p in self.parent],
        }


def _units(a, qprime):
    a = np.asarray(a.a if isinstance(a, ProbabilityDistribution) else a, float)
    units = np.rint(a * qprime)
    if np.max(np.abs(units - a * qprime)) > RATIONAL_TOL * qprime or units.sum() != qprime:
        raise DomainError(f"distribution {a.tolist()} is not made of multiples of 1/{qprime}")
    return units.astype(int)


def blow_up(a, qprime: int, J: InteractionMatrix) -> BlowUp:
    """Split state i into q' * a_i copies; states with a_i = 0 disappear."""
    if qprime < 1:
        raise DomainError("q' must be positive")
    units = _units(a, qprime)
    if units.size != J.q:
        raise ValidationError(f"distribution has {units.size} entries, J is {J.q} x {J.q}")
    parent = np.repeat(np.arange(J.q), units)
    Jp = J.entries[np.ix_(parent, parent)]
    kept = tuple(int(i) for i in np.nonzero(units)[0])
    return BlowUp(
        InteractionMatrix(Jp),
        ProbabilityDistribution.uniform(qprime),
        tuple(int(p) for p in parent),
        kept,
    )


def project_profile(r_blown, bu: BlowUp, q: int) -> FractionalProfile:
    """Merge copies back: column i collects all copies of state i."""
    r = np.asarray(getattr(r_blown, "r", r_blown), float)
    out = np.zeros((r.shape[0], q))
    np.add.at(out.T, np.asarray(bu.parent), r.T)
    return FractionalProfile(out)


def lift_profile(r, bu: BlowUp) -> FractionalProfile:
    """Spread state i evenly over its copies; erased states must carry no mass."""
    r = np.asarray(getattr(r, "r", r), float)
    parent = np.asarray(bu.parent)
    counts = np.bincount(parent, minlength=r.shape[1])
    out = r[:, parent] / counts[parent]
    # mass left on erased states (zero up to rounding) goes to the first copy
    lost = r[:, counts == 0].sum(axis=1)
    out[:, 0] += lost
    return FractionalProfile(out)


# ----------------------------------------------------------- distributions


def rationalize(a: ProbabilityDistribution, qprime: int) -> ProbabilityDistribution:
    """Round down to multiples of 1/q' in every coordinate but the last."""
    q = a.q
    if qprime < q:
        raise DomainError(f"q'={qprime} must be at least q={q}")
    x = np.asarray(a.a) * qprime
    # snap values within rounding noise of an integer before flooring
    near = np.abs(x - np.rint(x)) <= RATIONAL_TOL * qprime
    units = np.where(near, np.rint(x), np.floor(x)).astype(int)
    units[-1] = qprime - units[:-1].sum()
    return ProbabilityDistribution(units / qprime)


def round_threshold(x: ThresholdSpec, qprime: int) -> ThresholdSpec:
    """Positive multiples of h/q' summing to h, by largest remainders."""
    if x.direction != "lower":
        raise DomainError("threshold rounding applies to lower thresholds")
    q = x.q
    bounds = x.bounds
    h = float(bounds.sum())
    if h <= 0:
        raise DomainError("total threshold mass must be positive")
    if qprime < q:
        raise DomainError(f"q'={qprime} < q={q}: cannot keep every component positive")
    quota = bounds * qprime / h
    near = np.abs(quota - np.rint(quota)) <= RATIONAL_TOL * qprime
    m = np.where(near, np.rint(quota), np.floor(quota)).astype(int)
    m = np.maximum(m, 1)
    rem = quota - m
    # stable sorts give lowest index first among equal remainders
    while m.sum() < qprime:
        i = int(np.argsort(-rem, kind="stable")[0])
        m[i] += 1
        rem[i] -= 1
    while m.sum() > qprime:
        cand = np.nonzero(m > 1)[0]
        i = int(cand[np.argsort(rem[cand], kind="stable")[0]])
        m[i] -= 1
        rem[i] += 1
    out = m * (h / qprime)
    j = int(np.argmax(out))
    out[j] += h - math.fsum(out)
    return ThresholdSpec.general(tuple(out))


def interpolate_threshold(a, h1: float, h2: float, q: int | None = None, variant: str = "corrected"):
    """Thresholds x_a with a in A_{x_a} and every x_a component at least h1/q.

    ``variant="literal"`` evaluates the formula with a_i - h1 in place of
    a_i - h1/q, whose components do not sum to h2 when q > 1; it exists only to
    report that discrepancy.
    """
    a = np.asarray(getattr(a, "a", a), float)
    q = a.size if q is None else q
    if a.size != q:
        raise ValidationError(f"distribution has {a.size} entries, expected {q}")
    if not (0 <= h1 < h2 <= 1):
        raise DomainError(f"need 0 <= h1 < h2 <= 1, got h1={h1}, h2={h2}")
    base = h1 / q
    if np.any(a < base - RATIONAL_TOL):
        raise DomainError(f"distribution has a component below h1/q = {base}")
    scale = (h2 - h1) / (1 - h1)
    if variant == "literal":
        return base + (a - h1) * scale
    if variant != "corrected":
        raise ValidationError(f"unknown variant {variant!r}")
    x = base + (a - base) * scale
    x = np.clip(x, base, None)
    # put the rounding residue on the largest component so the sum is h2
    i = int(np.argmax(x))
    x[i] += h2 - math.fsum(x)
    return x


# ----------------------------------------------------------- energies, certified


def certified_energy(W, J, constraint=None, seed=0, restarts=64, init=(), oracle_m=None):
    """Best of the solver and (when small) a grid-oracle warm start.

    Returns the EnergyResult of the solver run, whose ``stats["oracle"]``
    holds the grid value when one was computed.
    """
    inits = [np.asarray(getattr(r, "r", r), float) for r in init]
    oracle_value = None
    if oracle_m:
        try:
            o = grid_oracle(W, J, constraint, m=oracle_m, budget=ORACLE_WARM_BUDGET)
            inits.append(np.asarray(o.certificate.r))
            oracle_value = o.value
        except (BudgetExceeded, DomainError):
            pass
    res = minimize_energy(W, J, constraint, restarts=restarts, seed=seed, init=inits or None)
    res.stats["oracle"] = oracle_value
    return res


def _energy_or_inf(W, J, r):
    try:
        return energy_of_profile(W, J, r)
    except ValidationError:
        return math.inf


def transport_profile(r, a, b) -> np.ndarray:
    """Move a profile with class masses a to one with class masses b.

    Shrinking classes are scaled down and the freed mass of every block is
    shared among the growing classes in proportion to their growth.
    """
    r = np.asarray(getattr(r, "r", r), float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    dec = b < a
    D = float(np.clip(a - b, 0.0, None).sum())
    if D == 0:
        return r.copy()
    out = r.copy()
    ratio = np.where(dec, np.divide(b, a, out=np.zeros_like(a), where=a > 0), 1.0)
    out[:, dec] = r[:, dec] * ratio[dec]
    freed = (r[:, dec] * (1 - ratio[dec])).sum(axis=1)
    inc = np.clip(b - a, 0.0, None) / D
    out += freed[:, None] * inc[None, :]
    return out


def couple_profile(r_u, X, lam_w) -> np.ndarray:
    """Average a profile on U's blocks along a coupling onto W's blocks."""
    r_u = np.asarray(getattr(r_u, "r", r_u), float)
    return (np.asarray(X).T @ r_u) / np.asarray(lam_w)[:, None]


# -------------------------------------------------------------- checkers


def check_blow_up(W: StepGraphon, J: InteractionMatrix, a, qprime: int, seed=0, restarts=64, oracle_m=None, tol=CHECK_TOL):
    """E_a(W, J) against E_b(W, J') for the blow-up (J', b) of (a, J)."""
    a = a if isinstance(a, ProbabilityDistribution) else ProbabilityDistribution(a)
    bu = blow_up(a, qprime, J)
    ra = certified_energy(W, J, a, seed, restarts, oracle_m=oracle_m)
    rb = certified_energy(W, bu.J, bu.b, seed, restarts, init=[lift_profile(ra.certificate, bu)])
    Ea = min(ra.value, _energy_or_inf(W, J, project_profile(rb.certificate, bu, J.q)))
    Eb = min(rb.value, _energy_or_inf(W, bu.J, lift_profile(ra.certificate, bu)))
    lhs = abs(Ea - Eb)
    return {"E_a": Ea, "E_b": Eb, "lhs": lhs, "rhs": tol, "pass": bool(lhs <= tol), "qprime": qprime}


def continuity_rhs(a, b, w_inf: float, j_inf: float) -> float:
    a = np.asarray(getattr(a, "a", a), float)
    b = np.asarray(getattr(b, "a", b), float)
    return 2.0 * float(np.abs(a - b).sum()) * w_inf * j_inf


def _fix_rows(r):
    r = np.clip(r, 0.0, None)
    return r / r.sum(axis=1, keepdims=True)


def check_continuity(W, J, a, b, seed=0, restarts=64, oracle_m=None, tol=CHECK_TOL):
    """|E_a - E_b| <= 2 ||a - b||_1 ||W||_inf ||J||_inf (non-strict)."""
    a = a if isinstance(a, ProbabilityDistribution) else ProbabilityDistribution(a)
    b = b if isinstance(b, ProbabilityDistribution) else ProbabilityDistribution(b)
    ra = certified_energy(W, J, a, seed, restarts, oracle_m=oracle_m)
    rb = certified_energy(W, J, b, seed, restarts, oracle_m=oracle_m)
    ab = _fix_rows(transport_profile(ra.certificate, a.a, b.a))
    ba = _fix_rows(transport_profile(rb.certificate, b.a, a.a))
    Ea = min(ra.value, energy_of_profile(W, J, ba))
    Eb = min(rb.value, energy_of_profile(W, J, ab))
    lhs = abs(Ea - Eb)
    rhs = continuity_rhs(a, b, W.inf_norm, J.inf_norm)
    return {"E_a": Ea, "E_b": Eb, "lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs + tol)}


def graph_graphon_rhs(G: WeightedGraph, q: int, J: InteractionMatrix) -> float:
    return 6.0 * q**3 * (G.alpha_max / G.alpha_total) * G.beta_max * J.inf_norm


def check_graph_graphon(G, J, a=None, c=None, seed=0, restarts=64, budget=DEFAULT_BUDGET, tol=CHECK_TOL):
    """Graph energy against the energy of its graphon, for a distribution a
    (microcanonical) or a lower threshold c."""
    if (a is None) == (c is None):
        raise ValidationError("give exactly one of a or c")
    W = graphon_from_graph(G)
    mode = "exhaustive" if J.q**G.n <= budget else "heuristic"
    if a is not None:
        a = a if isinstance(a, ProbabilityDistribution) else ProbabilityDistribution(a)
        g = mgse(G, J, a, mode=mode, seed=seed, budget=budget)
        con = a
    else:
        con = ThresholdSpec.lower(J.q, c)
        g = ltgse_graph(G, J, con, mode=mode, seed=seed, budget=budget)
    w = certified_energy(W, J, con, seed, restarts)
    lhs = abs(g.value - w.value)
    rhs = graph_graphon_rhs(G, J.q, J)
    return {
        "graph_energy": g.value,
        "graphon_energy": w.value,
        "graph_method": g.method,
        "lhs": lhs,
        "rhs": rhs,
        "pass": bool(lhs <= rhs + tol),
    }


def cut_lipschitz_rhs(q: int, J: InteractionMatrix, delta: float) -> float:
    if delta < 0:
        raise DomainError("cut distance must be nonnegative")
    return q * q * J.inf_norm * delta


def check_cut_lipschitz(U, W, J, a, mode="alternating", seed=0, restarts=64, oracle_m=None, tol=CHECK_TOL):
    """|E_a(U) - E_a(W)| <= q^2 ||J||_inf delta(U, W) with delta from a coupling.

    The inequality holds for the cut norm of the coupled difference under any
    coupling, so a coupling-based upper bound on delta keeps the check sound.
    """
    a = a if isinstance(a, ProbabilityDistribution) else ProbabilityDistribution(a)
    d = cut_distance_step(U, W, mode=mode, seed=seed)
    ru = certified_energy(U, J, a, seed, restarts, oracle_m=oracle_m)
    rw = certified_energy(W, J, a, seed, restarts, oracle_m=oracle_m)
    X = d.coupling
    uw = _fix_rows(couple_profile(ru.certificate, X, W.lam))
    wu = _fix_rows(couple_profile(rw.certificate, X.T, U.lam))
    Eu = min(ru.value, energy_of_profile(U, J, wu))
    Ew = min(rw.value, energy_of_profile(W, J, uw))
    lhs = abs(Eu - Ew)
    rhs = cut_lipschitz_rhs(J.q, J, d.value)
    return {"E_U": Eu, "E_W": Ew, "delta": d.value, "lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs + tol)}
