"""Sampling, testability runs and the block-diagonal counterexample reports."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .core import InteractionMatrix, ThresholdSpec, WeightedGraph, _jsonable
from .errors import BudgetExceeded, DomainError, ValidationError
from .graph_energy import DEFAULT_BUDGET, ltgse_graph
from .graphon import block_diagonal
from .graphon_energy import grid_oracle, minimize_energy

SCHEMA = "gse-lab/1"
CSV_HEADER = ("index", "q", "J-id", "threshold", "value", "method", "seed")


def _substream(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def sample_nodes(n: int, k: int, seed=0) -> np.ndarray:
    """Sorted uniformly random k-subset of range(n) by a seeded partial Fisher-Yates.

    ``seed`` may be an int or a ``np.random.Generator``.
    """
    if not 0 <= k <= n:
        raise DomainError(f"cannot sample k={k} nodes from a graph with {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = np.arange(n)
    for i in range(k):
        j = int(rng.integers(i, n))
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:k])


def sample_induced(G: WeightedGraph, k: int, seed=0) -> WeightedGraph:
    """Induced subgraph G[S] on a uniformly random k-subset S."""
    if not G.simple_flag:
        raise ValidationError("sampling is defined for simple graphs")
    if not 1 <= k <= G.n:
        raise DomainError(f"cannot sample k={k} nodes from a graph with {G.n}")
    return G.induced(sample_nodes(G.n, k, seed))


@dataclass
class ParameterSpec:
    """Graph parameter f(G) = threshold energy of G with J (c = 0 gives the GSE)."""

    J: InteractionMatrix
    threshold: ThresholdSpec | None = None
    mode: str = "heuristic"
    restarts: int = 50
    seed: int = 0
    tol: float = 1e-9
    budget: int = DEFAULT_BUDGET
    J_id: str = "custom"

    def __post_init__(self):
        if self.threshold is None:
            self.threshold = ThresholdSpec.lower(self.J.q, 0.0)
        if self.threshold.q != self.J.q:
            raise ValidationError(f"threshold has q={self.threshold.q}, J has q={self.J.q}")
        if self.mode not in ("exhaustive", "heuristic"):
            raise ValidationError(f"unknown mode {self.mode!r}")

    @property
    def q(self):
        return self.J.q

    def evaluate(self, G: WeightedGraph, seed=None):
        return ltgse_graph(
            G,
            self.J,
            self.threshold,
            mode=self.mode,
            seed=self.seed if seed is None else seed,
            restarts=self.restarts,
            budget=self.budget,
        )

    def to_dict(self):
        return {
            "q": self.q,
            "J": self.J.to_list(),
            "J_id": self.J_id,
            "threshold": self.threshold.to_dict(),
            "mode": self.mode,
            "restarts": self.restarts,
            "seed": self.seed,
            "tol": self.tol,
        }


@dataclass
class ExperimentReport:
    name: str
    inputs: dict
    items: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    runtime: float = 0.0
    partial: bool = False

    def to_dict(self):
        return _jsonable(
            {
                "schema": SCHEMA,
                "experiment": self.name,
                "inputs": self.inputs,
                "items": self.items,
                "summary": self.summary,
                "seeds": self.seeds,
                "partial": self.partial,
                "runtime": self.runtime,
            }
        )

    def csv_rows(self):
        for it in self.items:
            yield tuple(it.get(col, "") for col in CSV_HEADER)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.csv_rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


# ---------------------------------------------------------------- testability


def complete_graph_maxcut(k: int) -> float:
    """Max-cut ground state energy of K_k: -2 floor(k^2/4) / k^2."""
    return -(2 * (k * k // 4)) / (k * k)


def testability_experiment(G: WeightedGraph, spec: ParameterSpec, k_list, m: int, epsilon: float, seed=0):
    """Empirical deviation of f on random induced subgraphs from f(G).

    Empirical evidence only: one graph cannot establish testability.
    """
    t0 = time.perf_counter()
    rep = ExperimentReport(
        "testability",
        {"n": G.n, "k_list": list(k_list), "m": m, "epsilon": epsilon, "spec": spec.to_dict()},
        seeds={"seed": seed, "substreams": "(seed, k, sample index)"},
    )
    try:
        full = spec.evaluate(G)
    except BudgetExceeded as exc:
        rep.partial = True
        rep.summary["error"] = str(exc)
        rep.runtime = time.perf_counter() - t0
        return rep
    rep.summary["f_G"] = full.value
    per_k = {}
    for k in k_list:
        devs = []
        for j in range(m):
            rng = _substream(seed, k, j)
            H = sample_induced(G, k, rng)
            try:
                res = spec.evaluate(H, seed=spec.seed)
            except BudgetExceeded as exc:
                rep.partial = True
                rep.summary["error"] = str(exc)
                break
            dev = abs(full.value - res.value)
            devs.append(dev)
            rep.items.append(
                {
                    "index": f"{k}:{j}",
                    "k": k,
                    "sample": j,
                    "q": spec.q,
                    "J-id": spec.J_id,
                    "threshold": spec.threshold.total / spec.q if spec.threshold.c is None else spec.threshold.c,
                    "value": res.value,
                    "deviation": dev,
                    "method": res.method,
                    "seed": seed,
                }
            )
        if devs:
            d = np.asarray(devs)
            per_k[str(k)] = {
                "samples": len(devs),
                "exceedance": float(np.mean(d > epsilon)),
                "quantiles": {str(p): float(np.quantile(d, p)) for p in (0.5, 0.9, 1.0)},
            }
        else:
            per_k[str(k)] = {"samples": 0}
        if rep.partial:
            break
    rep.summary["per_k"] = per_k
    rep.summary["label"] = "empirical evidence"
    rep.runtime = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------- block-diagonal


def maxcut_closed_form(alpha, beta1, beta2):
    return -(alpha**2 * beta1 + (1 - alpha) ** 2 * beta2) / 2


def single_entry_closed_form(beta1, beta2, c):
    return beta1 * beta2 * c * c / (beta1 + beta2)


def penalized_limit(alpha, beta1, beta2):
    a, b = alpha**2 * beta1, (1 - alpha) ** 2 * beta2
    return a + b + max(a, b)


def richardson(ks, values):
    """Limit of v(k) = L + A/k from the last two points, with the misfit at the third last."""
    k1, k2 = ks[-2], ks[-1]
    v1, v2 = values[-2], values[-1]
    L = (k2 * v2 - k1 * v1) / (k2 - k1)
    A = (v1 - L) * k1
    resid = abs(L + A / ks[-3] - values[-3]) if len(ks) >= 3 else None
    return L, resid


def _diverges(ks, values, scale):
    """-E falling at a steady rate in k, rather than settling like 1/k.

    The slope over the last interval must be clearly negative and at least half
    the slope over the interval before it (a 1/k tail shrinks much faster).
    """
    if len(ks) < 3:
        return False
    s1, s2 = np.diff(values[-3:]) / np.diff(ks[-3:])
    return bool(s2 < -1e-6 * scale and s2 <= 0.5 * s1)


def _scan(W, q, k_schedule, constraint_of, restarts, seed):
    vals, inits = [], []
    for kk in k_schedule:
        res = minimize_energy(
            W, InteractionMatrix.penalized_pair(kk), constraint_of(), restarts=restarts, seed=seed, init=inits or None
        )
        inits = [res.certificate]
        vals.append(-res.value)
    return vals


def blockdiag_report(alpha, beta1, beta2, h, q0, k_schedule, n_list=(1, 2, 3, 4), restarts=64, seed=0):
    """Items (i)-(iv) for the block-diagonal graphon W(alpha, beta1, beta2)."""
    t0 = time.perf_counter()
    if not (0 < alpha < 1):
        raise DomainError(f"alpha={alpha} outside (0, 1)")
    if beta1 <= 0 or beta2 <= 0:
        raise DomainError("beta1 and beta2 must be positive")
    if not (0 < h <= 1):
        raise DomainError(f"threshold mass h={h} outside (0, 1]")
    if q0 < 2:
        raise DomainError("q0 must be at least 2")
    ks = sorted(int(k) for k in k_schedule)
    if len(ks) < 2:
        raise ValidationError("k_schedule needs at least two values")
    W = block_diagonal(alpha, beta1, beta2)
    rep = ExperimentReport(
        "blockdiag",
        {"alpha": alpha, "beta1": beta1, "beta2": beta2, "h": h, "q0": q0, "k_schedule": ks, "n_list": list(n_list)},
        seeds={"seed": seed},
    )
    scale = W.inf_norm

    # (i) max-cut
    r1 = minimize_energy(W, InteractionMatrix.maxcut(2), None, restarts, seed)
    cf1 = maxcut_closed_form(alpha, beta1, beta2)
    rep.items.append(
        {"index": "i", "q": 2, "J-id": "maxcut2", "threshold": 0.0, "value": r1.value,
         "closed_form": cf1, "method": r1.method, "seed": seed}
    )

    # (ii) single negative entry at a homogeneous lower threshold
    c = h / q0
    r2 = minimize_energy(W, InteractionMatrix.single_entry(q0), ThresholdSpec.lower(q0, c), restarts, seed)
    valid2 = c < min(alpha, 1 - alpha)
    cf2 = single_entry_closed_form(beta1, beta2, c)
    rep.items.append(
        {"index": "ii", "q": q0, "J-id": "single_entry", "threshold": c, "value": r2.value,
         "closed_form": cf2 if valid2 else None, "method": r2.method, "seed": seed}
    )

    # (iii) penalized pair J_k at c(2) = h / 2
    c2 = h / 2
    vals3 = _scan(W, 2, ks, lambda: ThresholdSpec.lower(2, c2), restarts, seed)
    for kk, v in zip(ks, vals3):
        rep.items.append(
            {"index": f"iii:{kk}", "q": 2, "J-id": f"J_{kk}", "threshold": c2, "value": -v,
             "method": "projected_gradient", "seed": seed}
        )
    lim3, resid3 = richardson(ks, vals3)
    cf3 = penalized_limit(alpha, beta1, beta2)
    valid3 = min(alpha, 1 - alpha) >= c2

    # (iv) general thresholds x_n = (c1(n), c2(n)) and the swapped x'_n
    scans = {}
    for n in n_list:
        lo, hi = 2 * c2 / n, 2 * c2 * (n - 1) / n
        out = {}
        for tag, x in (("x", (lo, hi)), ("x_swapped", (hi, lo))):
            vals = _scan(W, 2, ks, lambda x=x: ThresholdSpec.general(x), restarts, seed)
            div = _diverges(ks, vals, scale)
            lim = None if div else richardson(ks, vals)[0]
            out[tag] = {"x": list(x), "values": vals, "diverges": div, "limit": lim}
            for kk, v in zip(ks, vals):
                rep.items.append(
                    {"index": f"iv:{n}:{tag}:{kk}", "q": 2, "J-id": f"J_{kk}", "threshold": list(x),
                     "value": -v, "method": "projected_gradient", "seed": seed}
                )
        finite = [out[t]["limit"] for t in ("x", "x_swapped") if out[t]["limit"] is not None]
        out["max_limit"] = max(finite) if finite else None
        scans[str(n)] = out

    rep.summary = {
        "maxcut": {"value": r1.value, "closed_form": cf1, "error": abs(r1.value - cf1)},
        "single_entry": {
            "value": r2.value,
            "closed_form": cf2 if valid2 else None,
            "valid": valid2,
            "error": abs(r2.value - cf2) if valid2 else None,
            "inverse_beta_sum": 1 / beta1 + 1 / beta2,
        },
        "penalized_limit": {
            "values": vals3,
            "extrapolated": lim3,
            "residual": resid3,
            "closed_form": cf3,
            "valid": valid3,
            "relative_error": abs(lim3 - cf3) / abs(cf3),
        },
        "general_thresholds": scans,
    }
    rep.runtime = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- hierarchy


def cauchy_gaps(values, windows=None):
    """max_{m,n >= N} |E_m - E_n| for every tail start N."""
    v = np.asarray(values, float)
    windows = range(len(v)) if windows is None else windows
    return [float(v[N:].max() - v[N:].min()) for N in windows]


def hierarchy_experiment(
    alpha_schedule,
    h1,
    h2,
    J_menu=None,
    q_menu=(2, 3, 4, 5, 6),
    seed=0,
    restarts=64,
    gap_threshold=1e-6,
    oracle_m=None,
):
    """Threshold energies along W_n = W(alpha_n, 1/alpha_n^2, 0) at h1 and h2.

    ``J_menu`` maps an id to an InteractionMatrix; by default the mincut
    matrices for ``q_menu``.  A pair is flagged when its h2 sequence has a
    tail gap above ``gap_threshold`` while every h1 sequence stays below it.
    With ``oracle_m`` the grid oracle brackets the value of each flagged pair.
    """
    t0 = time.perf_counter()
    alphas = [float(a) for a in alpha_schedule]
    if any(not (0 < a < 1) for a in alphas):
        raise DomainError("every alpha must lie in (0, 1)")
    if not (0 <= h1 < h2 <= 1):
        raise DomainError(f"need 0 <= h1 < h2 <= 1, got {h1}, {h2}")
    if J_menu is None:
        J_menu = {f"mincut{q}": InteractionMatrix.mincut(q) for q in q_menu}
    rep = ExperimentReport(
        "hierarchy",
        {"alpha_schedule": alphas, "h1": h1, "h2": h2, "J_menu": {k: J.to_list() for k, J in J_menu.items()}},
        seeds={"seed": seed},
    )
    graphons = {a: block_diagonal(a, 1 / a**2, 0.0) for a in sorted(set(alphas))}
    cache = {}
    seqs = {}
    for jid, J in J_menu.items():
        q = J.q
        seqs[jid] = {}
        for tag, h in (("h1", h1), ("h2", h2)):
            con = ThresholdSpec.lower(q, h / q)
            vals = []
            for n, a in enumerate(alphas):
                key = (jid, tag, a)
                if key not in cache:
                    cache[key] = minimize_energy(graphons[a], J, con, restarts=restarts, seed=seed)
                res = cache[key]
                vals.append(res.value)
                rep.items.append(
                    {"index": n, "q": q, "J-id": jid, "threshold": h / q, "value": res.value,
                     "method": res.method, "seed": seed, "alpha": a, "level": tag}
                )
            gaps = cauchy_gaps(vals)
            seqs[jid][tag] = {"values": vals, "gaps": gaps, "tail_gap": gaps[len(gaps) // 2]}
    h1_ok = all(s["h1"]["tail_gap"] < gap_threshold for s in seqs.values())
    flagged = [jid for jid, s in seqs.items() if h1_ok and s["h2"]["tail_gap"] > gap_threshold]
    certs = {}
    if oracle_m:
        for jid in flagged:
            J = J_menu[jid]
            con = ThresholdSpec.lower(J.q, h2 / J.q)
            a = max(graphons, key=lambda a: cache[(jid, "h2", a)].value)
            entry = {"alpha": a, "value": cache[(jid, "h2", a)].value}
            try:
                entry["oracle_relaxed"] = grid_oracle(graphons[a], J, con, m=oracle_m, slack=1 / (2 * oracle_m)).value
                entry["oracle_feasible"] = grid_oracle(graphons[a], J, con, m=oracle_m, slack=0.0).value
            except (BudgetExceeded, DomainError) as exc:
                entry["oracle_error"] = str(exc)
            certs[jid] = entry
    rep.summary = {
        "sequences": seqs,
        "h1_all_constant": h1_ok,
        "flagged": flagged,
        "certificates": certs,
        "gap_threshold": gap_threshold,
    }
    rep.runtime = time.perf_counter() - t0
    return rep
