"""Exact linear algebra over Expr entries.

Fraction-free forward elimination with a deterministic pivot policy: within
each column (taken in roster order) prefer rows whose entry is a nonzero
rational constant; otherwise take the first row with an is_zero-certified
nonzero entry.  Division only happens when extracting the nullspace basis,
through certified inverses.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .expr import DivisionError_, Expr, ExprError, is_zero as expr_is_zero

__all__ = ["nullspace", "numeric_rank", "numeric_matrix", "in_span"]


def _pivot_row(rows, used, col):
    best_generic = None
    for r, row in enumerate(rows):
        if used[r]:
            continue
        e = row[col]
        if e.is_rational():
            if e.rational_value() != 0:
                return r
        elif best_generic is None and not expr_is_zero(e):
            best_generic = r
    return best_generic


def nullspace(rows: Sequence[Sequence[Expr]], ncols: int):
    """Basis of the right nullspace, first nonzero entry of each vector = 1.

    Raises DivisionError_ if a pivot cannot be certified nonzero.
    """
    mat = [list(r) for r in rows]
    used = [False] * len(mat)
    pivots: list[tuple[int, int]] = []  # (row, col)
    for col in range(ncols):
        r = _pivot_row(mat, used, col)
        if r is None:
            continue
        used[r] = True
        pivots.append((r, col))
        pivot = mat[r][col]
        for r2 in range(len(mat)):
            if r2 == r:
                continue
            factor = mat[r2][col]
            if factor.is_zero():
                continue
            # fraction-free: row2 <- pivot*row2 - factor*row_pivot
            mat[r2] = [pivot * mat[r2][c] - factor * mat[r][c]
                       for c in range(ncols)]
    pivot_cols = {c: r for r, c in pivots}
    free_cols = [c for c in range(ncols) if c not in pivot_cols]
    basis = []
    for fc in free_cols:
        vec = [Expr.zero()] * ncols
        vec[fc] = Expr.one()
        # back-substitute pivot columns in reverse order
        for r, c in reversed(pivots):
            acc = Expr.zero()
            for c2 in range(c + 1, ncols):
                if not vec[c2].is_zero() and not mat[r][c2].is_zero():
                    acc = acc + mat[r][c2] * vec[c2]
            if acc.is_zero():
                continue
            vec[c] = -acc * mat[r][c].inverse("elimination pivot")
        basis.append(_normalize(vec))
    return basis


def _normalize(vec):
    for e in vec:
        if not e.is_zero():
            inv = e.inverse("leading nullspace entry")
            return [v * inv for v in vec]
    return vec


def in_span(vec: Sequence[Expr], basis: Sequence[Sequence[Expr]]) -> bool:
    """Whether vec lies in the span of basis vectors (exact, via elimination).

    Solves the augmented system [basis^T | vec] and checks consistency.
    """
    if all(e.is_zero() for e in vec):
        return True
    if not basis:
        return False
    n = len(vec)
    cols = len(basis)
    rows = [[basis[j][i] for j in range(cols)] + [vec[i]] for i in range(n)]
    mat = [list(r) for r in rows]
    used = [False] * len(mat)
    for col in range(cols):
        r = _pivot_row(mat, used, col)
        if r is None:
            continue
        used[r] = True
        pivot = mat[r][col]
        for r2 in range(len(mat)):
            if r2 == r:
                continue
            factor = mat[r2][col]
            if factor.is_zero():
                continue
            mat[r2] = [pivot * mat[r2][c] - factor * mat[r][c]
                       for c in range(cols + 1)]
    for r, row in enumerate(mat):
        if used[r]:
            continue
        if all(expr_is_zero(row[c]) for c in range(cols)) and \
                not expr_is_zero(row[cols]):
            return False
    return True


def numeric_matrix(rows: Sequence[Sequence[Expr]], point) -> np.ndarray:
    return np.array([[e.eval_numeric(point) for e in row] for row in rows],
                    dtype=float)


def numeric_rank(rows: Sequence[Sequence[Expr]], point,
                 tol: float = 1e-8) -> int:
    m = numeric_matrix(rows, point)
    if m.size == 0:
        return 0
    return int(np.linalg.matrix_rank(m, tol=tol))
