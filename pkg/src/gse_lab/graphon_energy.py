"""Energies of fractional partitions on step graphons.

Because W is constant on blocks, a fractional partition only matters through
its block averages, so the decision variable is a k x q matrix r with rows in
the probability simplex.  The energy is the indefinite quadratic

    E(r) = -sum_ij J_ij (r^T M r)_ij,   M = diag(lam) B diag(lam).

Two minimizers live here: a multi-start projected-gradient solver (an upper
bound on the true minimum) and an exact minimizer over a 1/m grid used as an
independent oracle.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    EnergyResult,
    InteractionMatrix,
    ProbabilityDistribution,
    ThresholdSpec,
    _frozen,
    constraint_bounds,
)
from .errors import BudgetExceeded, DomainError, InvariantViolation, ValidationError
from .graph_energy import _compositions
from .graphon import StepGraphon, _check_refinement

ROW_TOL = 1e-10
FEAS_TOL = 1e-12
_ACCEPT_TOL = 1e-9
_EXACT_TERMS = 4 * 10**6
_WINDOW = 50
ORACLE_BUDGET = 5 * 10**9
_METRIC_POWER = 1.0
VERTEX_STARTS = 64


@dataclass(frozen=True, eq=False)
class FractionalProfile:
    """Block averages r[t, i] of a q-fractional partition on a k-block graphon."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise ValidationError(f"profile must be a nonempty k x q matrix, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < -ROW_TOL):
            raise ValidationError("profile entries must be nonnegative")
        if np.max(np.abs(r.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValidationError("profile rows must sum to 1")
        object.__setattr__(self, "r", _frozen(np.clip(r, 0.0, None)))

    @property
    def k(self) -> int:
        return self.r.shape[0]

    @property
    def q(self) -> int:
        return self.r.shape[1]

    @classmethod
    def indicator(cls, labels, q):
        """Profile putting block t entirely into state labels[t] (0-based)."""
        return cls(np.eye(q)[np.asarray(labels, dtype=int)])

    @classmethod
    def constant(cls, k, a):
        return cls(np.tile(np.asarray(a, float), (k, 1)))

    def induced_distribution(self, W: StepGraphon) -> np.ndarray:
        if W.k != self.k:
            raise ValidationError(f"profile has {self.k} blocks, graphon has {W.k}")
        return W.lam @ self.r

    def to_dict(self):
        return {"r": self.r.tolist()}

    def __eq__(self, other):
        if not isinstance(other, FractionalProfile):
            return NotImplemented
        return np.array_equal(self.r, other.r)

    def __hash__(self):
        return hash(self.r.tobytes())


def _as_r(r):
    return r.r if isinstance(r, FractionalProfile) else np.asarray(r, dtype=float)


def energy_of_profile(W: StepGraphon, J: InteractionMatrix, r) -> float:
    r = _as_r(r)
    if r.shape != (W.k, J.q):
        raise ValidationError(f"profile has shape {r.shape}, expected {(W.k, J.q)}")
    k, q = r.shape
    M, Z = W.energy_masses
    if k * k * q * q <= _EXACT_TERMS:
        # every term M_st r_si r_tj summed exactly, class pair by class pair
        T = ((M[:, :, None, None] * r[:, None, :, None]) * r[None, :, None, :]).reshape(k * k, q * q)
        P = [math.fsum(T[:, c].tolist()) / Z for c in range(q * q)]
    else:
        P = (r.T @ M @ r / Z).ravel().tolist()
    return -math.fsum(float(j) * p for j, p in zip(J.entries.ravel(), P)) + 0.0


def refine_profile(W: StepGraphon, r, refinement) -> FractionalProfile:
    """Copy each block's row onto its sub-blocks (see ``refine_graphon``)."""
    _check_refinement(W, refinement)
    r = _as_r(r)
    parent = np.concatenate([np.full(len(fr), s) for s, fr in enumerate(refinement)])
    return FractionalProfile(r[parent])


# ----------------------------------------------------------------- projection


def _proj_simplex_rows(V):
    """Euclidean projection of every row (last axis) onto the simplex."""
    q = V.shape[-1]
    U = -np.sort(-V, axis=-1)
    css = np.cumsum(U, axis=-1) - 1.0
    ind = np.arange(1, q + 1)
    cond = U - css / ind > 0
    rho = q - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(V - theta, 0.0)


class _Projector:
    """Projection onto {rows in simplex, lo <= lam^T r <= hi}.

    Distances are measured with weight ``d[s]`` on row s.  For fixed column
    multipliers nu the rows decouple into simplex projections of
    v_s + (lam_s / d_s) nu, so the projection is found by a semismooth Newton
    iteration on the q multipliers; Dykstra's alternating scheme takes over
    for the rare batch entries where Newton stalls.
    """

    def __init__(self, lam, lo, hi, d=None, max_iter=5000, newton_iter=100):
        self.lam = np.asarray(lam, float)
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.free = bool(np.all(self.lo <= 0) and np.all(self.hi >= 1))
        d = np.ones_like(self.lam) if d is None else np.asarray(d, float)
        self.shift = self.lam / d
        self.nrm2 = float(self.lam @ self.shift)
        self.max_iter = max_iter
        self.newton_iter = newton_iter

    def violation(self, V):
        col = np.einsum("k,rkq->rq", self.lam, V)
        return np.maximum(np.maximum(self.lo - col, col - self.hi), 0.0).max(axis=-1)

    def _cols(self, V):
        col = np.einsum("k,rkq->rq", self.lam, V)
        target = np.clip(col, self.lo, self.hi)
        return V + self.shift[None, :, None] * ((target - col) / self.nrm2)[:, None, :]

    def __call__(self, V):
        if self.free:
            return _proj_simplex_rows(V)
        Y, ok = self._newton(V)
        if not ok.all():
            Y[~ok] = self._dykstra(V[~ok])
        return Y

    def _newton(self, V):
        """Active-set Newton on the column multipliers.

        Within a region where every row support and every multiplier sign is
        fixed, the column masses are affine in nu, so a Newton step is exact
        there.  Steps are cut at the first breakpoint.  Directions the
        Jacobian cannot see are followed to the next breakpoint.
        """
        R, k, q = V.shape
        lam, a = self.lam, self.shift
        w = lam * a
        eye = np.eye(q)
        nu = np.zeros((R, q))
        ok = np.zeros(R, dtype=bool)
        dead = np.zeros(R, dtype=bool)
        spread = np.ptp(V.reshape(R, -1), axis=1) if V.size else np.zeros(R)
        bound = 1e6 * (1.0 + spread[:, None]) / max(float(a.min()), 1e-300)
        for _ in range(self.newton_iter):
            U = V + a[None, :, None] * nu[:, None, :]
            Y = _proj_simplex_rows(U)
            col = np.einsum("k,rkq->rq", lam, Y)
            low = (nu > 0) | ((nu == 0) & (col < self.lo))
            up = ~low & ((nu < 0) | ((nu == 0) & (col > self.hi)))
            act = low | up
            res = np.where(low, col - self.lo, np.where(up, col - self.hi, 0.0))
            ok = np.all(np.abs(res) <= FEAS_TOL, axis=1) & ~dead
            if (ok | dead).all():
                break
            S = Y > 0
            Sf = S.astype(float)
            cnt = np.maximum(Sf.sum(axis=2), 1.0)
            # d col / d nu = sum_s w_s (I - 11^T / |S_s|) restricted to the support S_s
            H = np.einsum("s,rsi->ri", w, Sf)[:, :, None] * eye - np.einsum("rsi,rsj,rs->rij", Sf, Sf, w / cnt)
            M = np.where(act[:, :, None] & act[:, None, :], H, 0.0)
            ev, Q = np.linalg.eigh(M)
            scale = max(float(w.sum()), 1e-300)
            big = ev > 1e-12 * scale
            coef = np.einsum("rji,rj->ri", Q, -res)
            null = np.where(big, 0.0, coef)
            null = np.where(act, np.einsum("rij,rj->ri", Q, null), 0.0)
            # the all-ones direction carries rounding noise of order eps, so
            # a null step also needs an absolute size
            nmax = np.abs(null).max(axis=1)
            use_null = (nmax > 1e-9 * np.abs(res).max(axis=1)) & (nmax > 1e-3 * FEAS_TOL)
            newton = np.einsum("rij,rj->ri", Q, np.where(big, coef / np.where(big, ev, 1.0), 0.0))
            D = np.where(use_null[:, None], null, np.where(act, newton, 0.0))
            tmax = np.where(use_null, np.inf, 1.0)

            # breakpoints along nu + t D
            m = np.where(S, D[:, None, :], 0.0).sum(axis=2) / cnt
            slope = a[None, :, None] * (D[:, None, :] - m[:, :, None])
            tau = (np.where(S, U, 0.0).sum(axis=2) - 1.0) / cnt
            gap = U - tau[:, :, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_out = np.where(S & (slope < 0), Y / -slope, np.inf)
                t_in = np.where(~S & (slope > 0), -gap / slope, np.inf)
                t_sign = np.where((nu != 0) & (nu * D < 0), -nu / D, np.inf)
                HD = np.einsum("rij,rj->ri", H, D)
                t_lo = np.where(~act & (HD < 0), (self.lo - col) / HD, np.inf)
                t_hi = np.where(~act & (HD > 0), (self.hi - col) / HD, np.inf)
            t = np.minimum(t_out.min(axis=(1, 2)), t_in.min(axis=(1, 2)))
            t = np.minimum(t, np.minimum(t_sign, np.minimum(t_lo, t_hi)).min(axis=1))
            # step slightly past a breakpoint so the next region is entered
            # strictly; the following Newton step removes the overshoot
            t = np.maximum(t, 0.0)
            t = t + 1e-9 * t + 1e-12 / np.maximum(np.abs(D).max(axis=1), 1e-300)
            t = np.minimum(t, tmax)
            t = np.where(np.isfinite(t), t, 0.0)
            new = nu + t[:, None] * D
            new[(nu * new < 0) | (np.abs(new) <= 1e-15 * np.abs(nu))] = 0.0
            # runaway multipliers are left to the fallback
            dead |= ~np.all(np.abs(new) <= bound, axis=1)
            nu = np.where((ok | dead)[:, None], nu, new)
            if (ok | dead).all():
                break
        else:
            Y = _proj_simplex_rows(V + a[None, :, None] * nu[:, None, :])
        return Y, ok

    def _dykstra(self, V):
        x = V.copy()
        p = np.zeros_like(V)
        pq = np.zeros_like(V)
        y = _proj_simplex_rows(x)
        for it in range(self.max_iter):
            y = _proj_simplex_rows(x + p)
            p = x + p - y
            x_new = self._cols(y + pq)
            pq = y + pq - x_new
            if it % 4 == 3:
                delta = np.abs(x_new - x).max()
                if delta < 1e-13 and self.violation(y).max() < FEAS_TOL:
                    break
            x = x_new
        return y


def _feasible_region(W, J, constraint):
    """Column bounds (lo, hi) on lam^T r, plus a label for the constraint kind."""
    q = J.q
    lo, hi = constraint_bounds(constraint, q)
    kind = "none"
    if isinstance(constraint, ProbabilityDistribution):
        kind = "equality"
    elif isinstance(constraint, ThresholdSpec):
        kind = constraint.kind
        if constraint.direction == "lower" and abs(lo.sum() - 1.0) <= FEAS_TOL:
            # the bounds pin the distribution: hand over to the equality path
            kind = "equality"
            hi = lo.copy()
        elif constraint.direction == "upper" and abs(hi.sum() - 1.0) <= FEAS_TOL:
            kind = "equality"
            lo = hi.copy()
    if np.any(lo > hi + FEAS_TOL) or lo.sum() > 1 + FEAS_TOL or hi.sum() < 1 - FEAS_TOL:
        raise DomainError("constraints admit no distribution")
    return lo, hi, kind


# ------------------------------------------------------------ projected gradient


def _dirichlet_starts(rng, R, k, q):
    return rng.dirichlet(np.ones(q), size=(R, k))


def minimize_energy(
    W: StepGraphon,
    J: InteractionMatrix,
    constraint=None,
    restarts: int = 64,
    seed: int = 0,
    tol: float = 1e-9,
    init=None,
    max_iter: int = 5000,
    vertex_starts: bool = True,
) -> EnergyResult:
    """Multi-start projected gradient with Armijo backtracking.

    ``constraint`` is None, a ProbabilityDistribution (fixed class masses) or a
    ThresholdSpec (bounds on the class masses, which stay free otherwise).
    ``init`` adds extra starting profiles ahead of the random ones; with
    ``vertex_starts`` the q^k indicator profiles are added too when there are at
    most 64 of them.  The value is an upper bound on the constrained minimum.
    """
    t0 = time.perf_counter()
    k, q = W.k, J.q
    lo, hi, kind = _feasible_region(W, J, constraint)
    M = np.asarray(W.mass_matrix)
    Jm = J.entries
    # row metric lam^p evens out the curvature of small and large blocks
    d = W.lam**_METRIC_POWER
    proj = _Projector(W.lam, lo, hi, d)

    starts = []
    if init is not None:
        for r0 in init:
            starts.append(_as_r(r0).reshape(k, q))
    if vertex_starts and q**k <= VERTEX_STARTS:
        # every block-to-state assignment, pushed into the feasible region
        for labels in itertools.product(range(q), repeat=k):
            starts.append(np.eye(q)[list(labels)])
    rng = np.random.default_rng(seed)
    if restarts > 0:
        starts.extend(_dirichlet_starts(rng, restarts, k, q))
    if not starts:
        raise ValidationError("need at least one restart or initial profile")
    X = proj(np.asarray(starts, dtype=float))

    def f_and_grad(X):
        G = M @ X @ Jm
        return -np.einsum("rkq,rkq->r", X, G), -2.0 * G

    sd = np.sqrt(d)
    L = 2.0 * np.linalg.norm(M / np.outer(sd, sd), 2) * np.linalg.norm(Jm, 2)
    dinv = (1.0 / d)[None, :, None]
    dw = d[None, :, None]
    R = X.shape[0]
    iters = 0
    if L > 0:
        eta = np.full(R, 1.0 / L)
        fx, gx = f_and_grad(X)
        fscale = float(np.abs(M).sum() * np.abs(Jm).max())
        stall = np.zeros(R, dtype=int)
        done = np.zeros(R, dtype=bool)
        f_mark = fx.copy()
        while not done.all() and iters < max_iter:
            iters += 1
            idx = np.nonzero(~done)[0]
            Xa, ga, fa, ea = X[idx], gx[idx], fx[idx], eta[idx]
            pending = np.ones(idx.size, dtype=bool)
            first = np.zeros(idx.size, dtype=bool)
            Xn = np.empty_like(Xa)
            fn = np.empty_like(fa)
            gn = np.empty_like(ga)
            for _ in range(60):
                pi = np.nonzero(pending)[0]
                trial = proj(Xa[pi] - ea[pi, None, None] * ga[pi] * dinv)
                ft, gt = f_and_grad(trial)
                dec = np.einsum("rkq,rkq->r", ga[pi], trial - Xa[pi])
                # a projection that ran out of iterations is not a valid trial
                ok = (ft <= fa[pi] + 1e-4 * dec) & (proj.violation(trial) <= _ACCEPT_TOL)
                Xn[pi[ok]] = trial[ok]
                fn[pi[ok]] = ft[ok]
                gn[pi[ok]] = gt[ok]
                pending[pi[ok]] = False
                if _ == 0:
                    first[pi[ok]] = True
                if not pending.any():
                    break
                ea[pi[~ok]] *= 0.5
            if pending.any():
                # step collapsed; treat as stationary
                pi = np.nonzero(pending)[0]
                Xn[pi] = Xa[pi]
                fn[pi] = fa[pi]
                gn[pi] = ga[pi]
            step = np.sqrt(np.einsum("rkq,rkq->r", dw * (Xn - Xa), Xn - Xa)) / ea
            # a run also stops once its value has not moved for a while
            moved = fa - fn > 1e-13 * fscale
            stall[idx] = np.where(moved, 0, stall[idx] + 1)
            stat = (step < tol) | pending | (stall[idx] >= 50)
            X[idx] = Xn
            fx[idx] = fn
            gx[idx] = gn
            eta[idx] = np.where(first, np.minimum(ea * 2.0, 1e3 / L), ea)
            done[idx[stat]] = True
            if iters % _WINDOW == 0:
                # slow creep near a degenerate stationary point: stop once a whole
                # window gains less than tol (relative to the problem scale)
                done |= f_mark - fx < tol * fscale
                f_mark = fx.copy()
    values = np.array([energy_of_profile(W, J, X[i]) for i in range(R)])
    values[proj.violation(X) > _ACCEPT_TOL] = np.inf
    if not np.isfinite(values).any():
        raise InvariantViolation("no start could be projected onto the feasible region")
    best = int(np.argmin(values))
    r = np.clip(X[best], 0.0, None)
    r /= r.sum(axis=1, keepdims=True)
    prof = FractionalProfile(r)
    value = energy_of_profile(W, J, prof)
    dist = prof.induced_distribution(W)
    return EnergyResult(
        value=value,
        certificate=prof,
        method="projected_gradient",
        stats={
            "restarts": R,
            "iterations": iters,
            "constraint": kind,
            "max_violation": float(proj.violation(r[None])[0]),
            "wall_time": time.perf_counter() - t0,
        },
        distribution=tuple(float(v) for v in dist),
    )


# ------------------------------------------------------------------ grid oracle


def _grid_rows(m, q):
    """All integer vectors of length q summing to m."""
    return np.array(list(_compositions(m, q)), dtype=np.int64).reshape(-1, q)


class _GridSearch:
    """Exact minimization over profiles with entries in (1/m) Z.

    Blocks are fixed one at a time with lower-bound pruning.  The last block is
    handled in closed form: for every choice of its first q-2 coordinates the
    objective is a 1-D quadratic in the (q-1)-th coordinate, so only interval
    ends and the rounded vertex need checking.
    """

    def __init__(self, W, J, lo, hi, m, slack, budget, chunk=1 << 21):
        self.m = m
        self.k, self.q = W.k, J.q
        self.lam = np.asarray(W.lam)
        self.M = np.asarray(W.mass_matrix)
        self.J = J.entries
        self.lo = lo - slack - FEAS_TOL
        self.hi = hi + slack + FEAS_TOL
        self.chunk = chunk
        k, q = self.k, self.q
        self.rows = _grid_rows(m, q)
        self.P = self.rows / m
        N = self.P.shape[0]
        # prefix/remainder decomposition of the last block
        if q >= 2:
            pre = _grid_rows(m, q - 1)
            self.pre = pre[:, : q - 2]
            self.rem = pre[:, q - 2]
        else:
            self.pre = np.zeros((1, 0), dtype=np.int64)
            self.rem = np.zeros(1, dtype=np.int64)
        E = self.pre.shape[0]
        work = float(N) ** max(k - 1, 0) * E
        if work > budget:
            raise BudgetExceeded(
                f"grid oracle with k={k}, q={q}, m={m} needs about {work:.3g} evaluations, budget is {budget}"
            )
        self.nominal = float(N) ** k
        # per-row quadratic self terms x^T J x and their minimum
        self.xJx = np.einsum("ni,ij,nj->n", self.P, self.J, self.P)
        self.JP = self.P @ self.J  # (N, q)
        # pairwise bilinear values x^T J y on the grid, when small enough to hold
        self.G = self.JP @ self.P.T if N <= 3000 else None
        self.Jmin = float(self.J.min())
        self.Jmax = float(self.J.max())
        self.best = math.inf
        self.best_rows = None
        self.evaluated = 0

    def _room(self, col, rem):
        """Whether mass ``rem`` still to be placed can complete column masses ``col``."""
        lo, hi = self.lo, self.hi
        tol = 1e-12
        return (
            np.all(col <= hi, axis=-1)
            & np.all(col + rem >= lo, axis=-1)
            & (np.maximum(lo - col, 0.0).sum(axis=-1) <= rem + tol)
            & (np.minimum(hi - col, rem).sum(axis=-1) >= rem - tol)
        )

    # lower bounds on pieces of the objective over the whole grid
    def _self_lb(self, s):
        Mss = self.M[s, s]
        return -Mss * (self.xJx.max() if Mss >= 0 else self.xJx.min())

    def _cross_lb(self, s, t):
        c = -2.0 * self.M[s, t]
        return c * (self.Jmin if c >= 0 else self.Jmax)

    def run(self):
        k = self.k
        self._tail_lb = np.zeros(k + 1)
        self._cross_tail = np.zeros(k + 1)
        for s in range(k - 1, -1, -1):
            cross = sum(self._cross_lb(s, t) for t in range(s + 1, k))
            self._cross_tail[s] = self._cross_tail[s + 1] + cross
            self._tail_lb[s] = self._tail_lb[s + 1] + self._self_lb(s) + cross
        lin = np.zeros((k, self.q))
        self._recurse(0, [], 0.0, lin, np.zeros(self.q))
        return self.best, self.best_rows

    def _recurse(self, s, fixed, f0, lin, col):
        k = self.k
        if s >= k - 2:
            self._finish(s, fixed, f0, lin, col)
            return
        # candidates for block s
        vals = f0 - self.M[s, s] * self.xJx + self.P @ lin[s]
        newcol = col[None, :] + self.lam[s] * self.P
        rem = self.lam[s + 1 :].sum()
        ok = self._room(newcol, rem)
        if self.G is not None:
            # each later block minimized on its own over the grid, given row n here
            fut = np.zeros(self.P.shape[0])
            for t in range(s + 1, k):
                own = -self.M[t, t] * self.xJx + self.P @ lin[t]
                fut += (own[None, :] - 2.0 * self.M[s, t] * self.G).min(axis=1)
            lbs = vals + fut + self._cross_tail[s + 1]
        else:
            lbs = vals + self._lin_lb(s, lin) + self._tail_lb[s + 1]
        order = np.argsort(np.where(ok, lbs, np.inf), kind="stable")
        for n in order:
            if not ok[n] or lbs[n] >= self.best:
                break
            lin2 = lin.copy()
            # contribution of block s to later blocks: -2 M_st (J x)
            lin2[s + 1 :] += -2.0 * self.M[s, s + 1 :, None] * self.JP[n][None, :]
            self._recurse(s + 1, fixed + [n], vals[n], lin2, newcol[n])

    def _lin_lb(self, s, lin):
        """Lower bound on the future linear terms given the new row at block s."""
        # future blocks t > s get linear terms lin[t] + (-2 M_st) J x; bound each
        # over states, for every candidate x at once
        k = self.k
        if s + 1 >= k:
            return 0.0
        future = lin[s + 1 :][None, :, :] + (-2.0 * self.M[s, s + 1 :])[None, :, None] * self.JP[:, None, :]
        return future.min(axis=2).sum(axis=1)

    def _finish(self, s, fixed, f0, lin, col):
        """Blocks s (and s+1 when present) remain; s is the last or second to last."""
        k = self.k
        if s == k - 1:
            vals, arg = self._last(np.array([f0]), lin[s][None, :], col[None, :])
            if vals[0] < self.best:
                e, t = arg[0]
                self.best = float(vals[0])
                self.best_rows = fixed + [self._row_of(e, t)]
            return
        # s == k-2: vectorize over the candidates of block s
        L = k - 1
        vals = f0 - self.M[s, s] * self.xJx + self.P @ lin[s]
        v = lin[L][None, :] + (-2.0 * self.M[s, L]) * self.JP
        newcol = col[None, :] + self.lam[s] * self.P
        lam_last = self.lam[L]
        ok = self._room(newcol, lam_last)
        lbs = vals + self._self_lb(L) + v.min(axis=1)
        order = np.argsort(np.where(ok, lbs, np.inf), kind="stable")
        order = order[ok[order]]
        E = self.pre.shape[0]
        cap = max(1, self.chunk // max(E, 1))
        step = min(cap, 32)
        start = 0
        while start < order.size:
            idx = order[start : start + step]
            start += step
            step = min(cap, 2 * step)
            if lbs[idx[0]] >= self.best:
                break
            idx = idx[lbs[idx] < self.best]
            bv, arg = self._last(vals[idx], v[idx], newcol[idx])
            j = int(np.argmin(bv))
            if bv[j] < self.best:
                e, t = arg[j]
                self.best = float(bv[j])
                self.best_rows = fixed + [int(idx[j]), self._row_of(e, t)]

    def _row_of(self, e, t):
        q, m = self.q, self.m
        if q == 1:
            row = np.array([m])
        else:
            row = np.concatenate([self.pre[e], [t, self.rem[e] - t]])
        return int(np.nonzero(np.all(self.rows == row, axis=1))[0][0])

    def _last(self, f0, v, pc):
        """Best completion by the last block for a batch of partial states.

        f0: (B,) objective so far; v: (B, q) linear coefficients on the last
        row; pc: (B, q) column masses so far.  Returns values and (prefix, t).
        """
        L = self.k - 1
        q, m = self.q, self.m
        lamL = self.lam[L]
        MLL = self.M[L, L]
        Bn = f0.shape[0]
        self.evaluated += Bn * self.pre.shape[0]
        if q == 1:
            val = f0 - MLL * self.J[0, 0] + v[:, 0]
            c = pc[:, 0] + lamL
            val = np.where((c >= self.lo[0]) & (c <= self.hi[0]), val, np.inf)
            return val, [(0, 0)] * Bn
        pre, R = self.pre, self.rem
        E = pre.shape[0]
        y0 = np.zeros((E, q))
        y0[:, : q - 2] = pre / m
        y0[:, q - 1] = R / m
        d = np.zeros(q)
        d[q - 2] = 1.0 / m
        d[q - 1] = -1.0 / m
        Jy0 = y0 @ self.J
        const_e = -MLL * np.einsum("ei,ei->e", y0, Jy0)
        lin_e = -2.0 * MLL * (Jy0 @ d)
        quad = -MLL * float(d @ self.J @ d)
        vy0 = v @ y0.T  # (B, E)
        vd = v @ d  # (B,)
        base = f0[:, None] + const_e[None, :] + vy0
        b1 = lin_e[None, :] + vd[:, None]
        # feasibility of the prefix columns
        okm = np.ones((Bn, E), dtype=bool)
        for i in range(q - 2):
            c = pc[:, i, None] + lamL * pre[None, :, i] / m
            okm &= (c >= self.lo[i]) & (c <= self.hi[i])
        scale = m / lamL
        a_lo = (self.lo[q - 2] - pc[:, q - 2]) * scale
        a_hi = (self.hi[q - 2] - pc[:, q - 2]) * scale
        b_lo = (self.lo[q - 1] - pc[:, q - 1]) * scale
        b_hi = (self.hi[q - 1] - pc[:, q - 1]) * scale
        Rf = R[None, :].astype(float)
        tlo = np.maximum(np.maximum(0.0, a_lo[:, None]), Rf - b_hi[:, None])
        thi = np.minimum(np.minimum(Rf, a_hi[:, None]), Rf - b_lo[:, None])
        tlo = np.ceil(tlo - 1e-9)
        thi = np.floor(thi + 1e-9)
        okm &= tlo <= thi
        cands = [tlo, thi]
        if quad > 0:
            tv = -b1 / (2.0 * quad)
            cands.append(np.clip(np.floor(tv), tlo, thi))
            cands.append(np.clip(np.ceil(tv), tlo, thi))
        best = np.full((Bn, E), np.inf)
        bt = np.zeros((Bn, E))
        for t in cands:
            val = base + b1 * t + quad * t * t
            better = val < best
            best = np.where(better, val, best)
            bt = np.where(better, t, bt)
        best = np.where(okm, best, np.inf)
        e = np.argmin(best, axis=1)
        rows = np.arange(Bn)
        vals = best[rows, e]
        ts = bt[rows, e].astype(np.int64)
        return vals, list(zip(e.tolist(), ts.tolist()))


def grid_oracle(
    W: StepGraphon,
    J: InteractionMatrix,
    constraint=None,
    m: int = 20,
    slack: float | None = None,
    budget: float = ORACLE_BUDGET,
) -> EnergyResult:
    """Exact minimum over profiles with entries in multiples of 1/m.

    By default only grid profiles that satisfy the constraints exactly (up to
    float rounding) are admitted, so the value bounds the true minimum from
    above.  When no such profile exists the constraints are relaxed by
    1/(2m).  An explicit ``slack`` overrides both.
    """
    t0 = time.perf_counter()
    if m < 1:
        raise ValidationError("grid resolution must be at least 1")
    lo, hi, kind = _feasible_region(W, J, constraint)
    slacks = [0.0, 1.0 / (2 * m)] if slack is None else [float(slack)]
    # large blocks first: they decide the most, so pruning bites early
    perm = np.argsort(-W.lam, kind="stable")
    Wp = W.permuted(perm)
    for sl in slacks:
        search = _GridSearch(Wp, J, lo, hi, m, sl, budget)
        _, rows = search.run()
        if rows is not None:
            slack = sl
            break
    else:
        raise DomainError(f"no grid profile at resolution m={m} satisfies the constraints")
    r = np.empty((W.k, J.q))
    r[perm] = search.P[np.asarray(rows)]
    prof = FractionalProfile(r)
    value = energy_of_profile(W, J, prof)
    return EnergyResult(
        value=value,
        certificate=prof,
        method="grid_oracle",
        stats={
            "resolution": m,
            "slack": slack,
            "constraint": kind,
            "grid_points": search.nominal,
            "evaluated": search.evaluated,
            "wall_time": time.perf_counter() - t0,
        },
        distribution=tuple(float(v) for v in prof.induced_distribution(W)),
    )
