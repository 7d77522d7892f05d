"""Sterile-insect dynamics: the linear release model, its equilibrium,
structural positivity and the supremal equilibrium under release bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericError, PreconditionError
from .metzler import SCCDecomposition, as_square, scc_decomposition

POSITIVE_REL_TOL = 1e-12


class ExtendedVector:
    """Vector over ``[0, +inf]`` with infinity tracked as a separate mask.

    Finite entries live in ``finite`` (zero where the entry is infinite). Addition
    follows ``x + inf = inf``; scaling by a positive real keeps infinities; scaling
    an infinite entry by zero is rejected as undefined.
    """

    __slots__ = ("finite", "infinite")

    def __init__(self, values: Iterable[float], infinite: Iterable[bool] | None = None):
        vals = np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
        if vals.ndim != 1:
            raise InvalidInputError("ExtendedVector must be one-dimensional")
        inf = np.isposinf(vals)
        if infinite is not None:
            inf = inf | np.asarray(list(infinite) if not isinstance(infinite, np.ndarray) else infinite,
                                   dtype=bool)
        if np.any(np.isnan(vals)) or np.any(np.isneginf(vals)):
            raise InvalidInputError("ExtendedVector entries must lie in [0, +inf]")
        fin = np.where(inf, 0.0, vals)
        if np.any(fin < 0):
            raise InvalidInputError("ExtendedVector entries must be non-negative")
        fin.setflags(write=False)
        inf.setflags(write=False)
        self.finite = fin
        self.infinite = inf

    @classmethod
    def zeros(cls, n: int) -> "ExtendedVector":
        return cls(np.zeros(n))

    def __len__(self) -> int:
        return self.finite.size

    def __getitem__(self, i: int) -> float:
        return float("inf") if self.infinite[i] else float(self.finite[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __add__(self, other):
        if isinstance(other, ExtendedVector):
            return ExtendedVector(self.finite + other.finite, self.infinite | other.infinite)
        other = np.asarray(other, dtype=float)
        if np.any(other < 0) or not np.all(np.isfinite(other)):
            return self + ExtendedVector(other)
        return ExtendedVector(self.finite + other, self.infinite)

    __radd__ = __add__

    def __mul__(self, c: float):
        c = float(c)
        if c < 0:
            raise InvalidInputError("ExtendedVector can only be scaled by c >= 0")
        if c == 0 and np.any(self.infinite):
            raise InvalidInputError("0 * inf is undefined")
        return ExtendedVector(self.finite * c, self.infinite)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, ExtendedVector):
            return NotImplemented
        return (np.array_equal(self.infinite, other.infinite)
                and np.array_equal(self.finite, other.finite))

    def __hash__(self):
        return hash((self.finite.tobytes(), self.infinite.tobytes()))

    def __repr__(self):
        parts = ["inf" if self.infinite[i] else f"{self.finite[i]:g}" for i in range(len(self))]
        return f"ExtendedVector([{', '.join(parts)}])"

    def is_finite(self) -> bool:
        return not np.any(self.infinite)

    def to_float(self) -> np.ndarray:
        """Plain float array with ``numpy.inf`` at infinite entries."""
        return np.where(self.infinite, np.inf, self.finite)

    def dominates(self, x) -> bool:
        """True iff ``x <= self`` entrywise (``x`` finite)."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.infinite | (x <= self.finite)))

    def capped(self, cap: float) -> np.ndarray:
        return np.where(self.infinite, cap, np.minimum(self.finite, cap))


@dataclass(frozen=True)
class ReleaseBounds:
    """Upper bounds on release rates; zero bounds mark patches without releases."""

    lambda_bar: ExtendedVector

    def __post_init__(self):
        lb = self.lambda_bar
        if not isinstance(lb, ExtendedVector):
            object.__setattr__(self, "lambda_bar", ExtendedVector(lb))

    @property
    def n(self) -> int:
        return len(self.lambda_bar)

    @property
    def cs_infinite(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.lambda_bar.infinite))

    @property
    def cs_finite(self) -> frozenset[int]:
        lb = self.lambda_bar
        return frozenset(int(i) for i in np.flatnonzero(~lb.infinite & (lb.finite > 0)))

    @property
    def cs(self) -> frozenset[int]:
        return self.cs_infinite | self.cs_finite

    @classmethod
    def on_subset(cls, n: int, subset: Iterable[int], bound: float = float("inf")) -> "ReleaseBounds":
        vals = np.zeros(n)
        for i in subset:
            vals[i] = bound
        return cls(ExtendedVector(vals))


@dataclass(frozen=True)
class ReleaseRate:
    """Constant release rates, individuals per day, one entry per patch."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 1 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidInputError("release rates must be a finite non-negative vector")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def is_admissible(self, bounds: ReleaseBounds) -> bool:
        if self.lam.size != bounds.n:
            return False
        off = np.ones(bounds.n, dtype=bool)
        off[list(bounds.cs)] = False
        return bounds.lambda_bar.dominates(self.lam) and bool(np.all(self.lam[off] == 0))

    def check_admissible(self, bounds: ReleaseBounds) -> None:
        if not self.is_admissible(bounds):
            raise InvalidInputError(f"release {self.lam} is not admissible for {bounds.lambda_bar}")


def as_release(lam) -> np.ndarray:
    if isinstance(lam, ReleaseRate):
        return lam.lam
    return ReleaseRate(lam).lam


@dataclass(frozen=True)
class SterileParams:
    mus: np.ndarray
    rho_s: np.ndarray
    Ds: np.ndarray

    def __post_init__(self):
        Ds = as_square(self.Ds)
        n = Ds.shape[0]
        mus = np.broadcast_to(np.asarray(self.mus, dtype=float), (n,)).copy()
        rho_s = np.broadcast_to(np.asarray(self.rho_s, dtype=float), (n,)).copy()
        if np.any(mus <= 0):
            raise InvalidInputError("sterile death rates must be positive")
        if np.any(rho_s < 0):
            raise InvalidInputError("sterile trapping rates must be non-negative")
        for arr in (Ds, mus, rho_s):
            arr.setflags(write=False)
        object.__setattr__(self, "Ds", Ds)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "rho_s", rho_s)

    @property
    def n(self) -> int:
        return self.mus.size


def sterile_matrix(p: SterileParams) -> np.ndarray:
    return p.Ds - np.diag(p.mus + p.rho_s)


def sterile_equilibrium(p: SterileParams, lam) -> np.ndarray:
    """Unique globally attracting equilibrium ``-(J^s)^{-1} lam``."""
    lam = as_release(lam)
    if lam.size != p.n:
        raise InvalidInputError(f"release has {lam.size} entries, expected {p.n}")
    Js = sterile_matrix(p)
    try:
        x = np.linalg.solve(Js, -lam)
    except np.linalg.LinAlgError as exc:
        raise NumericError("sterile matrix is singular", matrix=Js) from exc
    return np.maximum(x, 0.0)


def sterile_inverse(p: SterileParams) -> np.ndarray:
    Js = sterile_matrix(p)
    try:
        return np.linalg.inv(Js)
    except np.linalg.LinAlgError as exc:
        raise NumericError("sterile matrix is singular", matrix=Js) from exc


STRICTLY_POSITIVE = "strictly-positive"
ZERO = "zero"


@dataclass(frozen=True)
class PositivityClassification:
    decomposition: SCCDecomposition
    labels: tuple[str, ...]

    def label_of(self, vertex: int) -> str:
        return self.labels[self.decomposition.component_of(vertex)]

    def vertex_labels(self) -> tuple[str, ...]:
        return tuple(self.label_of(v) for v in range(len(self.decomposition.membership)))


def _reaches(dec: SCCDecomposition, k: int, vertices: frozenset[int]) -> bool:
    comps = {k} | set(dec.upstream[k])
    return any(v in vertices for c in comps for v in dec.components[c])


def classify_positivity(p: SterileParams, bounds: ReleaseBounds, lam) -> PositivityClassification:
    """Label every SCC of the sterile dispersal graph as strictly positive or
    zero at the sterile equilibrium for a release positive on the whole set Cs."""
    lam = as_release(lam)
    cs = bounds.cs
    if any(lam[j] <= 0 for j in cs):
        raise PreconditionError("classification needs a positive release on every patch of Cs")
    if not ReleaseRate(lam).is_admissible(bounds):
        raise PreconditionError("release is not admissible")
    dec = scc_decomposition(p.Ds)
    labels = tuple(STRICTLY_POSITIVE if _reaches(dec, k, cs) else ZERO
                   for k in range(len(dec.components)))
    return PositivityClassification(dec, labels)


def numeric_positivity(x) -> np.ndarray:
    """Entrywise strict-positivity flags with a tolerance relative to ``x``."""
    x = np.asarray(x, dtype=float)
    return x > POSITIVE_REL_TOL * (1.0 + np.max(np.abs(x)))


def supremal_equilibrium(p: SterileParams, bounds: ReleaseBounds) -> ExtendedVector:
    """Supremum of the sterile equilibrium over admissible releases.

    Components are processed upstream-first: a component is infinite if it or an
    upstream component contains an unbounded release patch, zero if neither it
    nor its upstream contains any release patch, and otherwise obtained by a
    finite block solve driven by ``lambda_bar`` and the inflow from upstream.
    """
    if bounds.n != p.n:
        raise InvalidInputError("bounds and sterile parameters disagree on n")
    Js = sterile_matrix(p)
    dec = scc_decomposition(p.Ds)
    cs, cs_inf = bounds.cs, bounds.cs_infinite
    lb = bounds.lambda_bar
    finite = np.zeros(p.n)
    infinite = np.zeros(p.n, dtype=bool)
    for k, comp in enumerate(dec.components):
        idx = list(comp)
        if _reaches(dec, k, cs_inf):
            infinite[idx] = True
            continue
        if not _reaches(dec, k, cs):
            continue
        others = [j for j in range(p.n) if j not in comp]
        inflow_cols = [j for j in others if np.any(Js[np.ix_(idx, [j])] != 0)]
        if any(infinite[j] for j in inflow_cols):
            raise NumericError("finite block receives inflow from an infinite component", matrix=Js)
        rhs = lb.finite[idx] + Js[np.ix_(idx, inflow_cols)] @ finite[inflow_cols]
        try:
            finite[idx] = np.linalg.solve(Js[np.ix_(idx, idx)], -rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular sterile block", matrix=Js) from exc
    return ExtendedVector(np.maximum(finite, 0.0), infinite)


class SterileForcing:
    """Closed-form sterile trajectory ``x* + exp(J^s t)(x_s0 - x*)``.

    Uses an eigendecomposition of ``J^s`` when it is well conditioned and falls
    back to :func:`scipy.linalg.expm` otherwise.
    """

    COND_LIMIT = 1e8

    def __init__(self, p: SterileParams, lam, xs0):
        self.J = sterile_matrix(p)
        self.equilibrium = sterile_equilibrium(p, lam)
        xs0 = np.asarray(xs0, dtype=float)
        if xs0.shape != (p.n,) or np.any(xs0 < 0):
            raise InvalidInputError("initial sterile state must be a non-negative n-vector")
        self.delta = xs0 - self.equilibrium
        w, V = np.linalg.eig(self.J)
        self._eig = None
        if np.linalg.cond(V) < self.COND_LIMIT:
            self._eig = (w, V, np.linalg.solve(V, self.delta.astype(complex)))

    def __call__(self, t: float) -> np.ndarray:
        if self._eig is not None:
            w, V, coef = self._eig
            dev = (V @ (np.exp(w * t) * coef)).real
        else:
            dev = scipy.linalg.expm(self.J * t) @ self.delta
        return np.maximum(self.equilibrium + dev, 0.0)
