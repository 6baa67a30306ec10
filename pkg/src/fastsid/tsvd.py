"""Column-blocked truncated SVD with pairwise merge-and-truncate (MAT).

A wide matrix ``A = [A_1 ... A_Nc]`` is decomposed block by block. Two block
factorisations ``A_1 = U_1 S_1 V_1^T`` and ``A_2 = U_2 S_2 V_2^T`` are combined
by decomposing the small matrix ``E = [U_1 S_1, U_2 S_2] = U S W^T`` and
setting ``V = blockdiag(V_1, V_2) W``; each step drops singular values below
the numerical-rank cutoff. Merges run pairwise in rounds, an odd leftover
being carried to the next round unchanged.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, EmptyInput, InvalidShape
from .projection import rank_tolerance

# entries below this fraction of a column's peak are not trusted to fix its sign
_SIGN_FLOOR = 1e-8


@dataclass(frozen=True)
class SvdTriple:
    """Factors ``U`` (m x k), ``S`` (k,), ``V`` (n x k) of ``U diag(S) V^T``."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        k = self.S.shape[0]
        if self.U.ndim != 2 or self.V.ndim != 2 or self.S.ndim != 1:
            raise InvalidShape("SvdTriple needs 2-D U, V and 1-D S")
        if self.U.shape[1] != k or self.V.shape[1] != k:
            raise InvalidShape(f"inconsistent ranks U{self.U.shape} S{self.S.shape} V{self.V.shape}")

    @property
    def k(self) -> int:
        return self.S.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the represented matrix."""
        return self.U.shape[0], self.V.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T

    @classmethod
    def empty(cls, m: int, n: int) -> "SvdTriple":
        return cls(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))


def _fix_signs(U, V):
    """Make the first significant entry of every column of ``U`` non-negative."""
    if U.shape[1] == 0:
        return U, V
    mag = np.abs(U)
    significant = mag >= _SIGN_FLOOR * mag.max(axis=0, keepdims=True)
    first = significant.argmax(axis=0)
    flip = np.sign(U[first, np.arange(U.shape[1])])
    flip[flip == 0] = 1.0
    return U * flip, V * flip


def svd_dense(M, complete: bool = False) -> SvdTriple:
    """Thin SVD of ``M`` with ``k = min(rows, cols)``.

    ``complete=True`` runs the full LAPACK decomposition (square ``U`` and
    ``V``, the textbook ``6mn^2 + 16n^3`` flop cost) before slicing down to the
    thin factors. Results are the same; only the cost differs.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise InvalidShape(f"svd_dense needs a non-empty 2-D matrix, got shape {M.shape}")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=complete)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    k = s.shape[0]
    U, V = _fix_signs(U[:, :k], Vt[:k].T)
    return SvdTriple(U, s, V)


def numerical_rank(t: SvdTriple) -> int:
    if t.k == 0 or t.S[0] == 0.0:
        return 0
    return int(np.count_nonzero(t.S >= rank_tolerance(t.shape, t.S[0])))


def do_truncate(t: SvdTriple) -> SvdTriple:
    """Keep the leading ``numerical_rank(t)`` singular triplets."""
    k = numerical_rank(t)
    if k == t.k:
        return t
    return SvdTriple(t.U[:, :k], t.S[:k], t.V[:, :k])


def block_merge(t1: SvdTriple, t2: SvdTriple) -> SvdTriple:
    """Merge the factorisations of ``A_1`` and ``A_2`` into one of ``[A_1 A_2]``."""
    if t1.shape[0] != t2.shape[0]:
        raise DimensionMismatch(f"row dimensions differ: {t1.shape[0]} vs {t2.shape[0]}")
    a, b = do_truncate(t1), do_truncate(t2)
    m = a.shape[0]
    n1, n2 = a.shape[1], b.shape[1]
    if a.k + b.k == 0:
        return SvdTriple.empty(m, n1 + n2)
    E = np.hstack([a.U * a.S, b.U * b.S])
    try:
        Ue, s, Wt = np.linalg.svd(E, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    W = Wt.T
    V = np.vstack([a.V @ W[:a.k], b.V @ W[a.k:]])
    U, V = _fix_signs(Ue, V)
    return do_truncate(SvdTriple(U, s, V))


def merge_plan(count: int) -> list[list[tuple[int, int, int]]]:
    """Pairwise merge rounds for ``count`` leaves.

    Leaves are numbered ``0..count-1``; merge outputs take the next free ids.
    Each round is a list of ``(out, left, right)``. An odd leftover is carried
    into the next round after that round's merge outputs.
    """
    if count < 1:
        raise EmptyInput("nothing to merge")
    rounds = []
    current = list(range(count))
    next_id = count
    for _ in range(math.ceil(math.log2(count))):
        merges, survivors = [], []
        for i in range(0, len(current) - 1, 2):
            merges.append((next_id, current[i], current[i + 1]))
            survivors.append(next_id)
            next_id += 1
        if len(current) % 2:
            survivors.append(current[-1])
        rounds.append(merges)
        current = survivors
    assert len(current) == 1
    return rounds


def do_merge_of_blocks(triples) -> SvdTriple:
    triples = list(triples)
    if not triples:
        raise EmptyInput("do_merge_of_blocks needs at least one triple")
    rows = {t.shape[0] for t in triples}
    if len(rows) != 1:
        raise DimensionMismatch(f"blocks disagree on row dimension: {sorted(rows)}")
    items = dict(enumerate(triples))
    out = len(triples) - 1
    for merges in merge_plan(len(triples)):
        for out, left, right in merges:
            items[out] = block_merge(items.pop(left), items.pop(right))
    return items[out]


@dataclass(frozen=True)
class BlockPlan:
    n: int
    col: int

    def __post_init__(self):
        if self.n < 1 or self.col < 1:
            raise InvalidShape(f"BlockPlan needs n, col >= 1 (n={self.n}, col={self.col})")

    @property
    def Nc(self) -> int:
        return -(-self.n // self.col)

    @property
    def offsets(self) -> list[int]:
        return [i * self.col for i in range(self.Nc)]

    def bounds(self) -> list[tuple[int, int]]:
        return [(o, min(o + self.col, self.n)) for o in self.offsets]

    @classmethod
    def for_parallelism(cls, n: int, P: int) -> "BlockPlan":
        """Plan whose block count is exactly ``P`` (requires ``P <= n``)."""
        if P < 1 or P > n:
            raise InvalidShape(f"cannot split {n} columns into {P} blocks")
        plan = cls(n, -(-n // P))
        if plan.Nc != P:
            raise InvalidShape(f"no uniform block width splits {n} columns into {P} blocks")
        return plan


def block_svd(A_block, complete: bool = False) -> SvdTriple:
    """Truncated SVD of one column block."""
    return do_truncate(svd_dense(A_block, complete=complete))


def parallel_svd_by_cols(A, col: int, parallel: int = 1, complete: bool = False) -> SvdTriple:
    """Truncated SVD of ``A`` computed block by block and merged pairwise.

    ``parallel`` sets how many block SVDs may run at once. The merge order is
    fixed by the block plan, so the result does not depend on it.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise InvalidShape(f"need a non-empty 2-D matrix, got shape {A.shape}")
    plan = BlockPlan(A.shape[1], col)
    blocks = [A[:, lo:hi] for lo, hi in plan.bounds()]
    if parallel > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=min(parallel, len(blocks))) as pool:
            triples = list(pool.map(lambda b: block_svd(b, complete), blocks))
    else:
        triples = [block_svd(b, complete) for b in blocks]
    return do_merge_of_blocks(triples)
