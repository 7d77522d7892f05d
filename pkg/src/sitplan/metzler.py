"""Spectral and structural linear algebra for Metzler matrices.

Arc convention: a nonzero off-diagonal entry ``A[i, j]`` is an arc ``j -> i``
(flow from patch ``j`` into patch ``i``). All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericError, StructuralError

POSITIVITY_TOL = 1e-10
GROUP_INVERSE_TOL = 1e-8


def as_square(A) -> np.ndarray:
    arr = np.array(A, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("matrix has non-finite entries")
    return arr


def is_metzler(A) -> bool:
    arr = as_square(A)
    off = arr[~np.eye(arr.shape[0], dtype=bool)]
    return bool(np.all(off >= 0))


def build_connectivity(flows) -> np.ndarray:
    """Connectivity matrix from pairwise dispersal rates.

    ``flows[i, j]`` is the rate (day^-1) at which individuals move from patch
    ``j`` to patch ``i``. The diagonal of ``flows`` is ignored; each diagonal
    entry of the result is minus the total outflow of that patch, so every
    column sums to zero.
    """
    F = as_square(flows)
    np.fill_diagonal(F, 0.0)
    if np.any(F < 0):
        raise InvalidInputError("dispersal flows must be non-negative")
    return F - np.diag(F.sum(axis=0))


def stability_modulus(A) -> float:
    """Largest real part over the spectrum of ``A``."""
    arr = as_square(A)
    try:
        eigvals = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigenvalue iteration did not converge", matrix=arr) from exc
    return float(np.max(eigvals.real))


@dataclass(frozen=True)
class SpectralResult:
    """Stability modulus together with its right and left Perron vectors."""

    modulus: float
    right: np.ndarray
    left: np.ndarray
    left_min_normalized: bool
    biorthonormal: bool


def _digraph(A: np.ndarray) -> list[list[int]]:
    """Out-neighbour lists: ``succ[j]`` holds every ``i`` with an arc ``j -> i``."""
    n = A.shape[0]
    succ: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and A[i, j] != 0:
                succ[j].append(i)
    return succ


def is_irreducible(A) -> bool:
    """True iff the digraph of the off-diagonal pattern is strongly connected."""
    arr = as_square(A)
    return len(_tarjan(_digraph(arr))) == 1


def _tarjan(succ: list[list[int]]) -> list[list[int]]:
    # Iterative Tarjan; components come out sinks-first.
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, k = work[-1]
            if k < len(succ[v]):
                work[-1] = (v, k + 1)
                w = succ[v][k]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
    return out


@dataclass(frozen=True)
class SCCDecomposition:
    """Strongly connected components listed in an acyclic (upstream-first) order.

    Attributes:
        components: vertex sets, each a sorted tuple of 0-based indices.
        component_edges: pairs ``(k, l)`` of component indices with at least
            one arc from component ``k`` into component ``l``; always ``k < l``.
        upstream: for each component, the indices of every component from
            which a path leads into it.
    """

    components: tuple[tuple[int, ...], ...]
    component_edges: frozenset[tuple[int, int]]
    upstream: tuple[frozenset[int], ...]
    membership: tuple[int, ...] = field(repr=False)

    def component_of(self, vertex: int) -> int:
        return self.membership[vertex]

    def downstream(self, k: int) -> frozenset[int]:
        return frozenset(l for l, up in enumerate(self.upstream) if k in up)


def scc_decomposition(A) -> SCCDecomposition:
    arr = as_square(A)
    succ = _digraph(arr)
    # Tarjan emits sinks first, so the reversal is upstream-first.
    comps = _tarjan(succ)[::-1]
    membership = [0] * arr.shape[0]
    for k, comp in enumerate(comps):
        for v in comp:
            membership[v] = k
    edges = set()
    for j, targets in enumerate(succ):
        for i in targets:
            kj, ki = membership[j], membership[i]
            if kj != ki:
                edges.add((kj, ki))
    direct_up: list[set[int]] = [set() for _ in comps]
    for kj, ki in edges:
        if kj >= ki:
            raise NumericError("SCC ordering is not acyclic", matrix=arr)
        direct_up[ki].add(kj)
    upstream: list[frozenset[int]] = []
    for k in range(len(comps)):
        acc = set(direct_up[k])
        for u in direct_up[k]:
            acc |= upstream[u]
        upstream.append(frozenset(acc))
    return SCCDecomposition(
        components=tuple(tuple(c) for c in comps),
        component_edges=frozenset(edges),
        upstream=tuple(upstream),
        membership=tuple(membership),
    )


def _positive_eigvec(M: np.ndarray) -> np.ndarray | None:
    w, V = np.linalg.eig(M)
    v = V[:, int(np.argmax(w.real))].real
    v = v * np.sign(v[np.argmax(np.abs(v))])
    v = v / np.max(np.abs(v))
    if np.all(v > POSITIVITY_TOL):
        return v
    return None


def _power_iteration(M: np.ndarray, iters: int = 20000) -> np.ndarray:
    delta = 1.0 + np.max(np.abs(np.diag(M)))
    B = M + delta * np.eye(M.shape[0])
    v = np.ones(M.shape[0])
    for _ in range(iters):
        nxt = B @ v
        nxt /= np.max(np.abs(nxt))
        if np.max(np.abs(nxt - v)) < 1e-14:
            return nxt
        v = nxt
    return v


def perron_vectors(A, require_irreducible: bool = True, normalize: str = "min") -> SpectralResult:
    """Stability modulus and strictly positive left/right eigenvectors.

    Args:
        A: Metzler matrix.
        require_irreducible: raise :class:`StructuralError` when ``A`` is
            reducible instead of attempting the computation.
        normalize: ``"min"`` scales the left vector so its smallest entry is 1
            (right vector scaled to max 1); ``"biorthonormal"`` scales both so
            that ``left @ right == 1``.
    """
    arr = as_square(A)
    if not is_metzler(arr):
        raise InvalidInputError("perron_vectors requires a Metzler matrix")
    if require_irreducible and not is_irreducible(arr):
        raise StructuralError("matrix is reducible")
    if normalize not in ("min", "biorthonormal"):
        raise InvalidInputError(f"unknown normalization {normalize!r}")
    try:
        w = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigenvalue iteration did not converge", matrix=arr) from exc
    modulus = float(np.max(w.real))
    pair = []
    for M in (arr, arr.T):
        vec = _positive_eigvec(M)
        if vec is None:
            vec = _power_iteration(M)
        if not np.all(vec > POSITIVITY_TOL * np.max(np.abs(vec))):
            raise NumericError("Perron vector has non-positive entries", matrix=arr)
        pair.append(vec)
    right, left = pair
    if normalize == "min":
        left = left / left.min()
        right = right / right.max()
    else:
        left = left / (left @ right)
    return SpectralResult(
        modulus=modulus,
        right=right,
        left=left,
        left_min_normalized=normalize == "min",
        biorthonormal=normalize == "biorthonormal",
    )


def group_inverse(Q, null_vectors: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Group inverse of a matrix whose zero eigenvalue is simple.

    Uses ``X = (Q + u v^T)^{-1} - u v^T`` where ``u``/``v`` are right/left null
    vectors with ``v^T u = 1``; the three defining identities are checked
    before returning. ``null_vectors`` may be supplied when already known
    (e.g. the Perron vectors of ``A`` for ``Q = s(A) I - A``).
    """
    arr = as_square(Q)
    n = arr.shape[0]
    scale = max(1.0, np.max(np.abs(arr)))
    sv = np.linalg.svd(arr, compute_uv=False)
    if sv[-1] > 1e-8 * scale:
        raise StructuralError("matrix is nonsingular; zero is not an eigenvalue")
    if n > 1 and sv[-2] <= 1e-10 * scale:
        raise StructuralError("zero eigenvalue is not simple")
    if n == 1:
        return np.zeros((1, 1))
    if null_vectors is None:
        w, V = np.linalg.eig(arr)
        u = V[:, int(np.argmin(np.abs(w)))].real
        wl, Vl = np.linalg.eig(arr.T)
        v = Vl[:, int(np.argmin(np.abs(wl)))].real
    else:
        u, v = (np.asarray(x, dtype=float) for x in null_vectors)
    denom = v @ u
    if abs(denom) < 1e-14 * np.linalg.norm(u) * np.linalg.norm(v):
        raise StructuralError("left and right null vectors are orthogonal (index > 1)")
    P = np.outer(u, v) / denom
    try:
        X = np.linalg.solve(arr + P, np.eye(n)) - P
    except np.linalg.LinAlgError as exc:
        raise NumericError("bordered system is singular", matrix=arr) from exc
    tol = GROUP_INVERSE_TOL * max(1.0, np.max(np.abs(X))) * scale
    residuals = (
        np.max(np.abs(arr @ X @ arr - arr)),
        np.max(np.abs(X @ arr @ X - X)),
        np.max(np.abs(arr @ X - X @ arr)),
    )
    if max(residuals) > tol:
        raise NumericError(f"group inverse identities violated: {residuals}", matrix=arr)
    return X
