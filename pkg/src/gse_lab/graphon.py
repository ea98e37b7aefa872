"""Step graphons: block measures plus a symmetric block-value matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import DIST_TOL, SYM_TOL, WeightedGraph, _frozen
from .errors import CouplingError, DomainError, ParseError, ValidationError

COUPLING_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StepGraphon:
    """W(x, y) = B[s, t] for x in block s, y in block t; block s has measure lam[s].

    Blocks of measure zero are dropped on construction.
    """

    lam: np.ndarray
    B: np.ndarray
    # unnormalized block weights when the graphon comes from a weighted graph
    _weights = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 0:
            B = B.reshape(1, 1)
        if B.shape != (lam.size, lam.size):
            raise ValidationError(f"B has shape {B.shape}, expected {(lam.size, lam.size)}")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(B))):
            raise ValidationError("graphon data must be finite")
        if np.any(lam < 0):
            raise ValidationError("block measures must be nonnegative")
        if abs(lam.sum() - 1.0) > DIST_TOL:
            raise ValidationError(f"block measures sum to {lam.sum()!r}, not 1")
        scale = max(1.0, float(np.abs(B).max()) if B.size else 1.0)
        if np.max(np.abs(B - B.T), initial=0.0) > SYM_TOL * scale:
            raise ValidationError("block-value matrix is not symmetric")
        keep = lam > 0
        if not keep.any():
            raise ValidationError("graphon needs a block of positive measure")
        B = (B + B.T) / 2
        object.__setattr__(self, "lam", _frozen(lam[keep]))
        object.__setattr__(self, "B", _frozen(B[np.ix_(keep, keep)]))
        object.__setattr__(self, "_keep", keep)

    @classmethod
    def from_weights(cls, w, B) -> "StepGraphon":
        """Blocks of measure w_s / sum(w) that remember the raw weights w.

        Energies are then summed over w_s w_t B_st and divided once by sum(w)^2,
        which keeps them bit-identical to the weighted-graph energies.
        """
        w = np.asarray(w, dtype=float).reshape(-1)
        W = cls(w / math.fsum(w.tolist()), B)
        object.__setattr__(W, "_weights", _frozen(w[W._keep]))
        return W

    @cached_property
    def energy_masses(self):
        """(A, Z) with A_st / Z the mass of block pair (s, t)."""
        if self._weights is None:
            return self.mass_matrix, 1.0
        w = self._weights
        A = np.outer(w, w) * self.B
        A.setflags(write=False)
        return A, math.fsum(w.tolist()) ** 2

    @property
    def k(self) -> int:
        return self.lam.size

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.B).max())

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        """lam_s * lam_t * B_st, the integral of W over block pair (s, t)."""
        out = np.outer(self.lam, self.lam) * self.B
        out.setflags(write=False)
        return out

    def permuted(self, perm) -> "StepGraphon":
        p = np.asarray(perm, dtype=int)
        if self._weights is not None:
            return StepGraphon.from_weights(self._weights[p], self.B[np.ix_(p, p)])
        return StepGraphon(self.lam[p], self.B[np.ix_(p, p)])

    def to_dict(self):
        return {"lambda": self.lam.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(np.asarray(d["lambda"], float), np.asarray(d["B"], float))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"graphon document needs 'lambda' and 'B': {exc}") from None

    def __eq__(self, other):
        if not isinstance(other, StepGraphon):
            return NotImplemented
        return np.array_equal(self.lam, other.lam) and np.array_equal(self.B, other.B)

    def __hash__(self):
        return hash((self.lam.tobytes(), self.B.tobytes()))


def parse_graphon(text: str) -> StepGraphon:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid graphon JSON: {exc.msg}", exc.lineno) from None
    return StepGraphon.from_dict(d)


def serialize_graphon(W: StepGraphon) -> str:
    return json.dumps(W.to_dict())


def graphon_from_graph(G: WeightedGraph) -> StepGraphon:
    """The step graphon W_G: node i becomes a block of measure alpha_i / alpha_G."""
    return StepGraphon.from_weights(G.node_weights, G.edge_weights)


def block_diagonal(alpha, beta1, beta2) -> StepGraphon:
    """beta1 on [0, alpha]^2, beta2 on (alpha, 1]^2, zero elsewhere."""
    if not (0 < alpha <= 1):
        raise DomainError(f"alpha={alpha} outside (0, 1]")
    if alpha == 1:
        return StepGraphon([1.0], [[beta1]])
    return StepGraphon([alpha, 1 - alpha], [[beta1, 0.0], [0.0, beta2]])


def constant_graphon(c) -> StepGraphon:
    return StepGraphon([1.0], [[c]])


def refine_graphon(W: StepGraphon, refinement) -> StepGraphon:
    """Split block s into sub-blocks with relative sizes ``refinement[s]``."""
    fractions = _check_refinement(W, refinement)
    base = W.lam if W._weights is None else W._weights
    lam, parent = [], []
    for s, fr in enumerate(fractions):
        lam.extend(base[s] * fr)
        parent.extend([s] * len(fr))
    parent = np.asarray(parent)
    lam = np.asarray(lam)
    if W._weights is not None:
        return StepGraphon.from_weights(lam, W.B[np.ix_(parent, parent)])
    return StepGraphon(lam, W.B[np.ix_(parent, parent)])


def _check_refinement(W, refinement):
    if len(refinement) != W.k:
        raise ValidationError(f"refinement lists {len(refinement)} blocks, graphon has {W.k}")
    out = []
    for fr in refinement:
        fr = np.asarray(fr, dtype=float).reshape(-1)
        if fr.size == 0 or np.any(fr <= 0):
            raise ValidationError("sub-blocks must have positive measure")
        out.append(fr / fr.sum())
    return out


def refinement_parents(refinement) -> np.ndarray:
    return np.concatenate([np.full(len(fr), s) for s, fr in enumerate(refinement)])


def validate_coupling(U: StepGraphon, W: StepGraphon, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (U.k, W.k):
        raise CouplingError(f"coupling has shape {X.shape}, expected {(U.k, W.k)}")
    if np.any(X < -COUPLING_TOL):
        raise CouplingError("coupling has negative entries")
    if np.max(np.abs(X.sum(axis=1) - U.lam)) > COUPLING_TOL:
        raise CouplingError("coupling row sums differ from the left block measures")
    if np.max(np.abs(X.sum(axis=0) - W.lam)) > COUPLING_TOL:
        raise CouplingError("coupling column sums differ from the right block measures")
    return np.clip(X, 0.0, None)


def coupled_pair(U: StepGraphon, W: StepGraphon, X):
    """Realize U and W on the common blocks {(s, t): X_st > 0}.

    Returns (U^X, W^X, cells) where ``cells`` lists the (s, t) index pairs in
    block order. Both coupled graphons are refinements of the originals.
    """
    X = validate_coupling(U, W, X)
    s_idx, t_idx = np.nonzero(X > 0)
    mass = X[s_idx, t_idx]
    mass = mass / mass.sum()
    UX = StepGraphon(mass, U.B[np.ix_(s_idx, s_idx)])
    WX = StepGraphon(mass, W.B[np.ix_(t_idx, t_idx)])
    return UX, WX, list(zip(s_idx.tolist(), t_idx.tolist()))


def coupled_difference(U: StepGraphon, W: StepGraphon, X) -> StepGraphon:
    """The step graphon U^X - W^X on the coupling's support."""
    X = validate_coupling(U, W, X)
    s_idx, t_idx = np.nonzero(X > 0)
    mass = X[s_idx, t_idx]
    D = U.B[np.ix_(s_idx, s_idx)] - W.B[np.ix_(t_idx, t_idx)]
    return StepGraphon(mass / mass.sum(), D)


def independent_coupling(U: StepGraphon, W: StepGraphon) -> np.ndarray:
    return np.outer(U.lam, W.lam)


def quantile_coupling(lam_u, lam_w, order_u=None, order_w=None) -> np.ndarray:
    """Couple [0, 1] to itself by identity after laying blocks out in the given orders."""
    lam_u = np.asarray(lam_u, float)
    lam_w = np.asarray(lam_w, float)
    ou = np.arange(lam_u.size) if order_u is None else np.asarray(order_u)
    ow = np.arange(lam_w.size) if order_w is None else np.asarray(order_w)
    cu = np.concatenate([[0.0], np.cumsum(lam_u[ou])])
    cw = np.concatenate([[0.0], np.cumsum(lam_w[ow])])
    cu[-1] = cw[-1] = 1.0
    X = np.zeros((lam_u.size, lam_w.size))
    for i, s in enumerate(ou):
        for j, t in enumerate(ow):
            overlap = min(cu[i + 1], cw[j + 1]) - max(cu[i], cw[j])
            if overlap > 0:
                X[s, t] = overlap
    # absorb rounding so that marginals match exactly up to float error
    X *= (lam_u / np.where(X.sum(1) > 0, X.sum(1), 1.0))[:, None]
    return X
