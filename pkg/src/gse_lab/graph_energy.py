"""Energies of spin configurations on finite weighted graphs.

Energy density of phi (weighted form, ordered pairs u != v)::

    E_phi(G, J) = -(1 / alpha_G^2) * sum_{u != v} alpha_u alpha_v beta_uv J[phi(u), phi(v)]

which for simple graphs is -(2 / n^2) * sum over edges of J[phi(u), phi(v)].
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np

from .core import (
    EnergyResult,
    InteractionMatrix,
    ProbabilityDistribution,
    SpinConfiguration,
    ThresholdSpec,
    WeightedGraph,
    constraint_bounds,
)
from .errors import BudgetExceeded, DomainError, ValidationError

DEFAULT_BUDGET = 10**7
SIZE_TOL = 1e-12
_CHUNK = 1 << 15
_MAX_TIES = 256


def _labels(G, J, phi):
    if phi.n != G.n:
        raise ValidationError(f"configuration has {phi.n} entries, graph has {G.n} nodes")
    if phi.q != J.q:
        raise ValidationError(f"configuration uses q={phi.q}, interaction matrix has q={J.q}")
    return phi.labels


def canonical_energy(G: WeightedGraph, Jm: np.ndarray, labels) -> float:
    """-sum_ij J_ij P_ij.  P_ij is the exactly rounded sum of the pair weights
    alpha_u alpha_v beta_uv between classes i and j, divided once by alpha_G^2;
    the outer sum is exact too.

    Two configurations with the same class-pair masses get bit-identical
    energies, and the value equals the graphon energy of the indicator profile.
    """
    q = Jm.shape[0]
    labels = np.asarray(labels, dtype=int)
    nz = G.nonzero_pairs
    pair = labels[nz[0]] * q + labels[nz[1]]
    vals = G.pair_weights[nz]
    order = np.argsort(pair, kind="stable")
    cuts = np.searchsorted(pair[order], np.arange(q * q + 1))
    vs = vals[order].tolist()
    Z = G.mass_norm
    P = [math.fsum(vs[cuts[c] : cuts[c + 1]]) / Z for c in range(q * q)]
    return -math.fsum(float(j) * p for j, p in zip(Jm.ravel(), P)) + 0.0


def energy_of_configuration(G: WeightedGraph, J: InteractionMatrix, phi: SpinConfiguration) -> float:
    return canonical_energy(G, J.entries, _labels(G, J, phi))


def _batch_energies(Wp, Jm, labels, alpha2):
    oh = np.eye(Jm.shape[0])[labels]
    T = Wp @ oh
    return -np.einsum("mua,mua->m", oh @ Jm, T) / alpha2


def _energy_scale(G, Jm):
    return max(1e-300, np.abs(G.pair_weights).sum() * np.abs(Jm).max() / G.alpha_total**2)


# ------------------------------------------------------------ size feasibility


def size_feasible(sizes, n, lo, hi, tol=SIZE_TOL):
    """Whether class sizes can sit inside Omega_a for some a with lo <= a <= hi.

    A size n_i admits a_i in [(n_i - 1)/n, (n_i + 1)/n]; intersecting with the
    bounds and asking for sum(a) = 1 leaves three conditions.
    """
    s = np.asarray(sizes, dtype=float)
    L = np.maximum(np.maximum(lo, (s - 1) / n), 0.0)
    U = np.minimum(np.minimum(hi, (s + 1) / n), 1.0)
    return (
        np.all(L <= U + tol, axis=-1)
        & (L.sum(axis=-1) <= 1 + tol)
        & (U.sum(axis=-1) >= 1 - tol)
    )


def _compositions(n, q):
    for bars in itertools.combinations(range(n + q - 1), q - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + q - 1 - prev - 1)
        yield tuple(out)


def size_vectors(n, lo, hi) -> list[tuple]:
    """All class-size vectors feasible for the bounds, in lexicographic order."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    comps = list(_compositions(n, lo.size))
    if not comps:
        return []
    arr = np.array(comps)
    ok = size_feasible(arr, n, lo, hi)
    return sorted(tuple(int(v) for v in row) for row in arr[ok])


def feasible_size_vectors(n: int, q: int, c: float) -> list[tuple]:
    """Size vectors realizable inside Omega_a for some a with every a_i >= c."""
    if not (0 <= c <= 1 / q + SIZE_TOL):
        raise DomainError(f"c={c} outside [0, 1/q]")
    return size_vectors(n, np.full(q, float(c)), np.ones(q))


def _unconstrained(lo, hi):
    return bool(np.all(lo <= 0) and np.all(hi >= 1))


# ------------------------------------------------------------ exhaustive search


def _exhaustive(G, J, lo, hi, budget, method="exhaustive"):
    t0 = time.perf_counter()
    n, q = G.n, J.q
    total = q**n
    if total > budget:
        raise BudgetExceeded(
            f"exhaustive search needs q^n = {q}^{n} = {total} configurations, budget is {budget}"
        )
    Jm = J.entries
    Wp = np.asarray(G.pair_weights)
    alpha2 = G.alpha_total**2
    tol = 1e-9 * _energy_scale(G, Jm)
    constrained = not _unconstrained(lo, hi)
    powers = q ** np.arange(n - 1, -1, -1)
    best = math.inf
    cand_E = np.empty(0)
    cand_L = np.empty((0, n), dtype=int)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK))
        labels = (idx[:, None] // powers[None, :]) % q
        E = _batch_energies(Wp, Jm, labels, alpha2)
        if constrained:
            sizes = np.stack([(labels == s).sum(1) for s in range(q)], axis=1)
            E[~size_feasible(sizes, n, lo, hi)] = math.inf
        m = E.min()
        if not np.isfinite(m):
            continue
        best = min(best, m)
        keep = cand_E <= best + tol
        cand_E, cand_L = cand_E[keep], cand_L[keep]
        if len(cand_E) < _MAX_TIES:
            sel = np.nonzero(E <= best + tol)[0][: _MAX_TIES - len(cand_E)]
            cand_E = np.concatenate([cand_E, E[sel]])
            cand_L = np.concatenate([cand_L, labels[sel]])
    if not math.isfinite(best):
        raise DomainError("no configuration satisfies the class-size constraints")
    vals = [canonical_energy(G, Jm, row) for row in cand_L]
    vmin = min(vals)
    i = vals.index(vmin)
    phi = SpinConfiguration.from_labels(cand_L[i], q)
    return EnergyResult(
        value=vmin,
        certificate=phi,
        method=method,
        stats={"configurations": total, "wall_time": time.perf_counter() - t0},
        size_vector=tuple(np.bincount(cand_L[i], minlength=q)),
    )


def gse_exhaustive(G: WeightedGraph, J: InteractionMatrix, budget: int = DEFAULT_BUDGET) -> EnergyResult:
    """Exact ground state energy by enumerating all q^n configurations."""
    return _exhaustive(G, J, np.zeros(J.q), np.ones(J.q), budget)


# ------------------------------------------------------------- local search


def _descent(Wp, Jm, labels, alpha2, lo=None, hi=None, swaps=False, max_iter=100_000):
    """Batched steepest descent; each row of ``labels`` is one restart.

    Moves are single-node state changes (restricted to feasible class sizes
    when bounds are given) and, optionally, swaps of two nodes' states.
    """
    R, n = labels.shape
    q = Jm.shape[0]
    labels = labels.copy()
    oh = np.eye(q)[labels]
    F = (Wp @ oh) @ Jm  # F[r, u, s] = sum_v w_uv J[phi_r(v), s]
    sizes = oh.sum(axis=1).astype(int)
    scale = max(np.abs(Wp).max() * np.abs(Jm).max(), 1e-300)
    gain_tol = 1e-12 * scale * n
    constrained = lo is not None
    eye = np.eye(q, dtype=int)
    diffJ = Jm[:, None, :] - Jm[None, :, :]  # diffJ[s, a, :] = J[s, :] - J[a, :]
    active = np.ones(R, dtype=bool)
    rows_all = np.arange(R)
    iters = 0
    while active.any() and iters < max_iter:
        iters += 1
        rows = rows_all[active]
        Fa = F[rows]
        La = labels[rows]
        cur = np.take_along_axis(Fa, La[:, :, None], axis=2)
        mg = Fa - cur  # gain of moving u to s
        if constrained:
            # new sizes for a -> s: sizes - e_a + e_s, shape (Ra, q, q, q)
            new = sizes[rows][:, None, None, :] - eye[None, :, None, :] + eye[None, None, :, :]
            ok = size_feasible(new, n, lo, hi)
            ok = ok | np.eye(q, dtype=bool)[None]
            allowed = np.take_along_axis(ok, La[:, :, None], axis=1)  # (Ra, n, q)
            mg = np.where(allowed, mg, -np.inf)
        flat = mg.reshape(len(rows), -1)
        mi = flat.argmax(axis=1)
        mbest = flat[np.arange(len(rows)), mi]
        if swaps:
            Fu_phiv = np.take_along_axis(Fa, np.broadcast_to(La[:, None, :], Fa.shape[:1] + (n, n)), axis=2)
            c = cur[:, :, 0]
            Jdiag = np.diag(Jm)[La]
            Jcross = Jm[La[:, :, None], La[:, None, :]]
            sg = Fu_phiv - c[:, :, None] + np.transpose(Fu_phiv, (0, 2, 1)) - c[:, None, :]
            sg = sg + Wp[None] * (2 * Jcross - Jdiag[:, :, None] - Jdiag[:, None, :])
            sflat = sg.reshape(len(rows), -1)
            si = sflat.argmax(axis=1)
            sbest = sflat[np.arange(len(rows)), si]
        else:
            sbest = np.full(len(rows), -np.inf)
        improving = np.maximum(mbest, sbest) > gain_tol
        for j, r in enumerate(rows):
            if not improving[j]:
                active[r] = False
                continue
            if mbest[j] >= sbest[j]:
                u, s = divmod(int(mi[j]), q)
                steps = [(u, s)]
            else:
                u, v = divmod(int(si[j]), n)
                steps = [(u, labels[r, v]), (v, labels[r, u])]
            for u, s in steps:
                a = labels[r, u]
                F[r] += Wp[:, u][:, None] * diffJ[s, a][None, :]
                labels[r, u] = s
                sizes[r, a] -= 1
                sizes[r, s] += 1
    return labels, iters


def _pick_best(G, Jm, labels):
    best = None
    for row in labels:
        key = (canonical_energy(G, Jm, row), tuple(int(x) for x in row))
        if best is None or key < best:
            best = key
    return best


def gse_local_search(
    G: WeightedGraph, J: InteractionMatrix, restarts: int = 50, seed: int = 0
) -> EnergyResult:
    """Multi-start single-node-move steepest descent (upper bound on the GSE)."""
    if restarts < 1:
        raise ValidationError("restarts must be at least 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    starts = rng.integers(J.q, size=(restarts, G.n))
    labels, iters = _descent(np.asarray(G.pair_weights), J.entries, starts, G.alpha_total**2)
    value, best = _pick_best(G, J.entries, labels)
    return EnergyResult(
        value=value,
        certificate=SpinConfiguration.from_labels(best, J.q),
        method="local_search",
        stats={"restarts": restarts, "iterations": iters, "seed": seed,
               "wall_time": time.perf_counter() - t0},
        size_vector=tuple(np.bincount(best, minlength=J.q)),
    )


def _constrained_search(G, J, lo, hi, restarts, seed, method):
    t0 = time.perf_counter()
    if restarts < 1:
        raise ValidationError("restarts must be at least 1")
    vectors = size_vectors(G.n, lo, hi)
    if not vectors:
        raise DomainError("no class-size vector satisfies the constraints")
    rng = np.random.default_rng(seed)
    starts = np.empty((restarts, G.n), dtype=int)
    for r in range(restarts):
        sizes = vectors[int(rng.integers(len(vectors)))]
        row = np.repeat(np.arange(J.q), sizes)
        starts[r] = rng.permutation(row)
    labels, iters = _descent(
        np.asarray(G.pair_weights), J.entries, starts, G.alpha_total**2, lo=lo, hi=hi, swaps=True
    )
    value, best = _pick_best(G, J.entries, labels)
    return EnergyResult(
        value=value,
        certificate=SpinConfiguration.from_labels(best, J.q),
        method=method,
        stats={"restarts": restarts, "iterations": iters, "seed": seed,
               "size_vectors": len(vectors), "wall_time": time.perf_counter() - t0},
        size_vector=tuple(np.bincount(best, minlength=J.q)),
    )


# ------------------------------------------------------------ constrained energies


def mgse(
    G: WeightedGraph,
    J: InteractionMatrix,
    a: ProbabilityDistribution,
    mode: str = "exhaustive",
    seed: int = 0,
    restarts: int = 50,
    budget: int = DEFAULT_BUDGET,
) -> EnergyResult:
    """Microcanonical GSE: minimum over phi with ||phi^-1(i)| - a_i n| <= 1."""
    lo, hi = constraint_bounds(a, J.q)
    if mode == "exhaustive":
        return _exhaustive(G, J, lo, hi, budget)
    if mode in ("swap_search", "heuristic"):
        return _constrained_search(G, J, lo, hi, restarts, seed, "local_search")
    raise ValidationError(f"unknown mode {mode!r}")


def ltgse_graph(
    G: WeightedGraph,
    J: InteractionMatrix,
    spec: ThresholdSpec | None,
    mode: str = "exhaustive",
    seed: int = 0,
    restarts: int = 50,
    budget: int = DEFAULT_BUDGET,
) -> EnergyResult:
    """Threshold GSE: minimum over all class-size vectors admissible for some
    distribution inside the threshold set (lower, upper, homogeneous or general).
    """
    lo, hi = constraint_bounds(spec, J.q)
    if not size_vectors(G.n, lo, hi):
        raise DomainError("threshold admits no class-size vector for this graph")
    if mode == "exhaustive":
        res = _exhaustive(G, J, lo, hi, budget)
    elif mode in ("heuristic", "swap_search", "local_search"):
        if _unconstrained(lo, hi):
            res = gse_local_search(G, J, restarts=restarts, seed=seed)
        else:
            res = _constrained_search(G, J, lo, hi, restarts, seed, "local_search")
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    if spec is not None:
        res.stats["threshold"] = spec.to_dict()
    return res
