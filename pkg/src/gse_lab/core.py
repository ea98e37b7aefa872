"""Foundational data types: weighted graphs, interaction matrices, distributions,
threshold specifications, spin configurations and energy results, plus their
text serialization."""

from __future__ import annotations

import math

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .errors import ConsistencyError, DomainError, ParseError, ValidationError

DIST_TOL = 1e-12
SYM_TOL = 1e-12


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Node- and edge-weighted undirected graph stored as a dense matrix.

    ``edge_weights`` is the symmetric n x n matrix of beta_ij (zero diagonal),
    ``node_weights`` the positive alpha_i (all ones when omitted).
    """

    edge_weights: np.ndarray
    node_weights: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.edge_weights, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise ValidationError(f"edge weight matrix must be square, got shape {beta.shape}")
        n = beta.shape[0]
        if n < 1:
            raise ValidationError("a graph needs at least one node")
        if not np.all(np.isfinite(beta)):
            raise ValidationError("edge weights must be finite")
        if not np.array_equal(beta, beta.T):
            raise ConsistencyError("edge weight matrix is not symmetric")
        if np.any(np.diag(beta) != 0):
            raise ValidationError("self-loop weights must be 0")
        if self.node_weights is None:
            alpha = np.ones(n)
        else:
            alpha = np.asarray(self.node_weights, dtype=float)
            if alpha.shape != (n,):
                raise ValidationError(f"expected {n} node weights, got shape {alpha.shape}")
            if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
                raise ValidationError("node weights must be positive and finite")
        object.__setattr__(self, "edge_weights", _frozen(beta))
        object.__setattr__(self, "node_weights", _frozen(alpha))

    @classmethod
    def from_edges(cls, n, edges, node_weights=None):
        """Build from an iterable of ``(u, v)`` or ``(u, v, w)`` with 0-based nodes."""
        beta = np.zeros((n, n))
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if u == v:
                raise ValidationError(f"self loop at node {u}")
            beta[u, v] = beta[v, u] = w
        return cls(beta, node_weights)

    @classmethod
    def complete(cls, n):
        return cls(np.ones((n, n)) - np.eye(n))

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.edge_weights.shape[0]

    @property
    def alpha_total(self) -> float:
        return float(self.node_weights.sum())

    @property
    def alpha_max(self) -> float:
        return float(self.node_weights.max())

    @property
    def beta_max(self) -> float:
        return float(np.abs(self.edge_weights).max())

    @cached_property
    def simple_flag(self) -> bool:
        beta = self.edge_weights
        return bool(np.all((beta == 0) | (beta == 1)) and np.all(self.node_weights == 1))

    @cached_property
    def pair_weights(self) -> np.ndarray:
        """alpha_u * alpha_v * beta_uv, the weight of the ordered pair (u, v)."""
        a = self.node_weights
        out = np.outer(a, a) * self.edge_weights
        out.setflags(write=False)
        return out

    @cached_property
    def mass_norm(self) -> float:
        """alpha_G squared, with alpha_G summed exactly."""
        return math.fsum(self.node_weights.tolist()) ** 2

    @cached_property
    def nonzero_pairs(self):
        """Index arrays of the ordered pairs with nonzero weight."""
        return np.nonzero(self.pair_weights)

    def edges(self):
        """Nonzero edges ``(u, v, beta)`` with u < v (0-based)."""
        iu, iv = np.nonzero(np.triu(self.edge_weights, 1))
        return [(int(u), int(v), float(self.edge_weights[u, v])) for u, v in zip(iu, iv)]

    def induced(self, nodes) -> "WeightedGraph":
        idx = np.asarray(nodes, dtype=int)
        return WeightedGraph(self.edge_weights[np.ix_(idx, idx)], self.node_weights[idx])

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return np.array_equal(self.edge_weights, other.edge_weights) and np.array_equal(
            self.node_weights, other.node_weights
        )

    def __hash__(self):
        return hash((self.edge_weights.tobytes(), self.node_weights.tobytes()))


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Symmetric q x q real matrix J."""

    entries: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.entries, dtype=float)
        if J.ndim == 0:
            J = J.reshape(1, 1)
        if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] < 1:
            raise ValidationError(f"interaction matrix must be square with q >= 1, got {J.shape}")
        if not np.all(np.isfinite(J)):
            raise ValidationError("interaction matrix entries must be finite")
        if np.max(np.abs(J - J.T)) > SYM_TOL * max(1.0, np.abs(J).max()):
            raise ConsistencyError("interaction matrix is not symmetric")
        object.__setattr__(self, "entries", _frozen((J + J.T) / 2))

    @property
    def q(self) -> int:
        return self.entries.shape[0]

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.entries).max())

    @classmethod
    def maxcut(cls, q=2):
        """J_ij = 1 - delta_ij."""
        return cls(np.ones((q, q)) - np.eye(q))

    @classmethod
    def mincut(cls, q):
        """Zero diagonal, -1 off the diagonal (the q-way mincut matrix)."""
        return cls(np.eye(q) - np.ones((q, q)))

    @classmethod
    def single_entry(cls, q, value=-1.0):
        """value at (1, 1), zeros elsewhere."""
        J = np.zeros((q, q))
        J[0, 0] = value
        return cls(J)

    @classmethod
    def penalized_pair(cls, k):
        """The 2x2 family ((1, -k), (-k, 2))."""
        return cls([[1.0, -float(k)], [-float(k), 2.0]])

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def to_list(self):
        return self.entries.tolist()


@dataclass(frozen=True, eq=False)
class ProbabilityDistribution:
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if a.size < 1:
            raise ValidationError("empty distribution")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValidationError("distribution components must be nonnegative")
        if abs(a.sum() - 1.0) > DIST_TOL:
            raise ValidationError(f"distribution sums to {a.sum()!r}, not 1 (tolerance {DIST_TOL})")
        object.__setattr__(self, "a", _frozen(a))

    @classmethod
    def normalized(cls, weights):
        """Explicit renormalization of nonnegative weights."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be nonnegative with positive total")
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, q):
        return cls(np.full(q, 1.0 / q))

    @property
    def q(self) -> int:
        return self.a.size

    def l1(self, other) -> float:
        other = other.a if isinstance(other, ProbabilityDistribution) else np.asarray(other, float)
        return float(np.abs(self.a - other).sum())

    def __eq__(self, other):
        if not isinstance(other, ProbabilityDistribution):
            return NotImplemented
        return np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash(self.a.tobytes())


@dataclass(frozen=True, eq=False)
class ThresholdSpec:
    """Per-class bounds on the class distribution.

    Homogeneous specs carry a scalar ``c``, general ones a vector ``x``;
    ``direction`` is ``"lower"`` (a_i >= bound) or ``"upper"`` (a_i <= bound).
    """

    q: int
    c: float | None = None
    x: tuple | None = None
    direction: str = "lower"

    def __post_init__(self):
        if self.q < 1:
            raise DomainError("q must be at least 1")
        if self.direction not in ("lower", "upper"):
            raise DomainError(f"unknown threshold direction {self.direction!r}")
        if (self.c is None) == (self.x is None):
            raise DomainError("give exactly one of c (homogeneous) or x (general)")
        if self.x is not None:
            x = tuple(float(v) for v in self.x)
            if len(x) != self.q:
                raise DomainError(f"threshold vector has {len(x)} entries, expected {self.q}")
            if any(not np.isfinite(v) or v < 0 for v in x):
                raise DomainError("threshold components must be nonnegative")
            object.__setattr__(self, "x", x)
            total = sum(x)
            if self.direction == "lower" and total > 1 + DIST_TOL:
                raise DomainError(f"lower thresholds sum to {total} > 1; no distribution satisfies them")
            if self.direction == "upper" and total < 1 - DIST_TOL:
                raise DomainError(f"upper thresholds sum to {total} < 1; no distribution satisfies them")
        else:
            c = float(self.c)
            object.__setattr__(self, "c", c)
            if self.direction == "lower" and not (0 <= c <= 1 / self.q + DIST_TOL):
                raise DomainError(f"lower threshold c={c} outside [0, 1/q]")
            if self.direction == "upper" and not (c * self.q >= 1 - DIST_TOL and c <= 1 + DIST_TOL):
                raise DomainError(f"upper threshold c={c} needs c*q >= 1 and c <= 1")

    @classmethod
    def lower(cls, q, c):
        return cls(q, c=c)

    @classmethod
    def upper(cls, q, c):
        return cls(q, c=c, direction="upper")

    @classmethod
    def general(cls, x, direction="lower"):
        return cls(len(x), x=tuple(x), direction=direction)

    @property
    def kind(self) -> str:
        return "homogeneous" if self.c is not None else "general"

    @property
    def bounds(self) -> np.ndarray:
        if self.c is not None:
            return np.full(self.q, self.c)
        return np.asarray(self.x, dtype=float)

    @property
    def total(self) -> float:
        """Total threshold mass h (c * q for homogeneous specs)."""
        return float(self.bounds.sum())

    def column_bounds(self):
        """(lo, hi) bounds on each class mass."""
        b = self.bounds
        if self.direction == "lower":
            return b, np.ones(self.q)
        return np.zeros(self.q), np.minimum(b, 1.0)

    def to_dict(self):
        d = {"q": self.q, "kind": self.kind, "direction": self.direction}
        if self.c is not None:
            d["c"] = self.c
        else:
            d["x"] = list(self.x)
        return d


@dataclass(frozen=True)
class SpinConfiguration:
    """Assignment of one of the states 1..q to every node (1-based, as printed)."""

    assignment: tuple
    q: int

    def __post_init__(self):
        a = tuple(int(s) for s in self.assignment)
        if any(s < 1 or s > self.q for s in a):
            raise ValidationError(f"states must lie in 1..{self.q}")
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_labels(cls, labels, q):
        """From 0-based state labels."""
        return cls(tuple(int(s) + 1 for s in labels), q)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=int) - 1

    @property
    def n(self) -> int:
        return len(self.assignment)

    def to_dict(self):
        return {"assignment": list(self.assignment), "q": self.q, "class_sizes": class_sizes(self)}


def constraint_bounds(constraint, q):
    """(lo, hi) bounds on the class distribution for None, a distribution
    (equality) or a threshold specification."""
    if constraint is None:
        return np.zeros(q), np.ones(q)
    if isinstance(constraint, ProbabilityDistribution):
        if constraint.q != q:
            raise ValidationError(f"distribution has q={constraint.q}, expected {q}")
        return constraint.a.copy(), constraint.a.copy()
    if isinstance(constraint, ThresholdSpec):
        if constraint.q != q:
            raise ValidationError(f"threshold has q={constraint.q}, expected {q}")
        lo, hi = constraint.column_bounds()
        return np.array(lo, float), np.array(hi, float)
    raise TypeError(f"unsupported constraint {constraint!r}")


def class_sizes(phi: SpinConfiguration) -> list[int]:
    """Number of nodes mapped to each state."""
    return np.bincount(phi.labels, minlength=phi.q).tolist()


@dataclass
class EnergyResult:
    """An energy value together with the object that achieves it."""

    value: float
    certificate: Any = None
    method: str = "exhaustive"
    stats: dict = field(default_factory=dict)
    distribution: np.ndarray | None = None
    size_vector: tuple | None = None

    def to_dict(self):
        cert = None
        if self.certificate is not None:
            cert = self.certificate.to_dict()
            if self.distribution is not None:
                cert["distribution"] = [float(v) for v in self.distribution]
            if self.size_vector is not None:
                cert["size_vector"] = [int(v) for v in self.size_vector]
        return {
            "value": float(self.value),
            "certificate": cert,
            "method": self.method,
            "stats": _jsonable(self.stats),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


# ---------------------------------------------------------------- text formats


def _content_lines(text):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def parse_graph(text: str) -> WeightedGraph:
    """Parse the edge-list format.

    First line ``n``; an optional ``w: a_1 ... a_n`` line of node weights; then
    one ``u v beta`` line per edge with 1-based endpoints. Unlisted pairs get 0.
    """
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty graph document", 1)
    lineno, first = lines[0]
    try:
        n = int(first)
    except ValueError:
        raise ParseError(f"expected node count, got {first!r}", lineno) from None
    if n < 1:
        raise ParseError("node count must be positive", lineno)
    alpha = None
    body = lines[1:]
    if body and body[0][1].startswith("w:"):
        lineno, line = body[0]
        try:
            alpha = [float(t) for t in line[2:].split()]
        except ValueError:
            raise ParseError("malformed node weight line", lineno) from None
        if len(alpha) != n:
            raise ParseError(f"expected {n} node weights, got {len(alpha)}", lineno)
        if any(a <= 0 for a in alpha):
            raise ValidationError(f"line {lineno}: node weights must be positive")
        body = body[1:]
    beta = np.zeros((n, n))
    seen = {}
    for lineno, line in body:
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'u v beta', got {line!r}", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(f"malformed edge line {line!r}", lineno) from None
        if not (1 <= u <= n and 1 <= v <= n):
            raise ParseError(f"endpoint out of range 1..{n}", lineno)
        if u == v:
            raise ParseError("self loops are not allowed", lineno)
        if not np.isfinite(w):
            raise ParseError("edge weight must be finite", lineno)
        key = (min(u, v), max(u, v))
        if key in seen and seen[key] != w:
            raise ConsistencyError(
                f"line {lineno}: edge {key} given weight {w} but earlier {seen[key]}"
            )
        seen[key] = w
        beta[u - 1, v - 1] = beta[v - 1, u - 1] = w
    return WeightedGraph(beta, alpha)


def serialize_graph(G: WeightedGraph) -> str:
    lines = [str(G.n)]
    if not np.all(G.node_weights == 1):
        lines.append("w: " + " ".join(repr(float(a)) for a in G.node_weights))
    for u, v, w in G.edges():
        lines.append(f"{u + 1} {v + 1} {w!r}")
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> InteractionMatrix:
    """First line q, then q whitespace-separated rows."""
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty matrix document", 1)
    lineno, first = lines[0]
    try:
        q = int(first)
    except ValueError:
        raise ParseError(f"expected matrix size, got {first!r}", lineno) from None
    rows = lines[1:]
    if len(rows) != q:
        raise ParseError(f"expected {q} rows, got {len(rows)}", lineno)
    J = []
    for lineno, line in rows:
        try:
            row = [float(t) for t in line.split()]
        except ValueError:
            raise ParseError(f"malformed matrix row {line!r}", lineno) from None
        if len(row) != q:
            raise ParseError(f"expected {q} entries, got {len(row)}", lineno)
        J.append(row)
    return InteractionMatrix(np.array(J))


def serialize_matrix(J: InteractionMatrix) -> str:
    rows = [" ".join(repr(float(v)) for v in row) for row in J.entries]
    return "\n".join([str(J.q), *rows]) + "\n"


def parse_vector(text: str) -> np.ndarray:
    """Whitespace- or comma-separated reals; fractions like ``1/3`` are accepted."""
    out = []
    for tok in text.replace(",", " ").split():
        try:
            if "/" in tok:
                num, den = tok.split("/")
                out.append(float(num) / float(den))
            else:
                out.append(float(tok))
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"malformed real {tok!r}") from None
    if not out:
        raise ParseError("empty vector")
    return np.array(out)
