"""Tiny dense two-phase simplex over exact rationals.

Used by the efficiency check, whose LPs are small (tens of variables) but
whose verdicts feed pass/fail assertions, so float pivoting noise is
unwelcome. Bland's rule keeps it cycle-free. Everything is a Fraction in and
out; callers rationalize their floats first.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

__all__ = ["LpInfeasible", "LpUnbounded", "maximize"]


class LpInfeasible(Exception):
    pass


class LpUnbounded(Exception):
    pass


def maximize(
    c: Sequence[Fraction],
    A_eq: Sequence[Sequence[Fraction]],
    b_eq: Sequence[Fraction],
    A_ge: Sequence[Sequence[Fraction]] = (),
    b_ge: Sequence[Fraction] = (),
) -> tuple[Fraction, list[Fraction]]:
    """Maximize c.x subject to A_eq x = b_eq, A_ge x >= b_ge, x >= 0.

    Returns (optimal value, an optimal x). Raises LpInfeasible / LpUnbounded.
    """
    n = len(c)
    n_ge = len(A_ge)
    n_rows = len(A_eq) + n_ge
    width = n + n_ge  # structural + surplus columns

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    for a, b in zip(A_eq, b_eq):
        rows.append([Fraction(v) for v in a] + [Fraction(0)] * n_ge)
        rhs.append(Fraction(b))
    for k, (a, b) in enumerate(zip(A_ge, b_ge)):
        row = [Fraction(v) for v in a] + [Fraction(0)] * n_ge
        row[n + k] = Fraction(-1)
        rows.append(row)
        rhs.append(Fraction(b))
    for r in range(n_rows):
        if rhs[r] < 0:
            rows[r] = [-v for v in rows[r]]
            rhs[r] = -rhs[r]

    # Phase 1: artificial variable per row, maximize minus their sum.
    T = [rows[r] + [Fraction(1) if i == r else Fraction(0) for i in range(n_rows)] + [rhs[r]]
         for r in range(n_rows)]
    basis = [width + r for r in range(n_rows)]
    total_cols = width + n_rows
    Z = [Fraction(0)] * (total_cols + 1)
    for j in range(total_cols + 1):
        Z[j] = -sum(T[r][j] for r in range(n_rows))
    for r in range(n_rows):
        Z[width + r] = Fraction(0)  # z_j - c_j = -1 - (-1) for basic artificials

    _run(T, Z, basis, total_cols)
    if Z[-1] < 0:
        raise LpInfeasible("phase 1 optimum below zero")

    # Pivot out any artificial stuck in the basis at level zero.
    for r in range(n_rows):
        if basis[r] >= width:
            for j in range(width):
                if T[r][j] != 0:
                    _pivot(T, Z, basis, r, j)
                    break
            # A row of zeros is redundant; leaving the artificial basic at
            # zero is harmless since its column is barred below.

    # Phase 2: real objective over the same tableau, artificials barred.
    Z = [Fraction(0)] * (total_cols + 1)
    for j in range(width):
        Z[j] = -Fraction(c[j]) if j < n else Fraction(0)
    for r in range(n_rows):
        var = basis[r]
        cb = Fraction(c[var]) if var < n else Fraction(0)
        if cb != 0:
            for j in range(total_cols + 1):
                Z[j] += cb * T[r][j]
    _run(T, Z, basis, width)

    x = [Fraction(0)] * n
    for r in range(n_rows):
        if basis[r] < n:
            x[basis[r]] = T[r][-1]
    return Z[-1], x


def _run(T, Z, basis, cols):
    """Bland-rule simplex iterations until no negative reduced cost remains."""
    n_rows = len(T)
    while True:
        enter = -1
        for j in range(cols):
            if Z[j] < 0:
                enter = j
                break
        if enter == -1:
            return
        leave = -1
        best = None
        for r in range(n_rows):
            if T[r][enter] > 0:
                ratio = T[r][-1] / T[r][enter]
                if best is None or ratio < best or (ratio == best and basis[r] < basis[leave]):
                    best = ratio
                    leave = r
        if leave == -1:
            raise LpUnbounded(f"column {enter} improves without bound")
        _pivot(T, Z, basis, leave, enter)


def _pivot(T, Z, basis, row, col):
    piv = T[row][col]
    T[row] = [v / piv for v in T[row]]
    prow = T[row]
    for r in range(len(T)):
        if r != row and T[r][col] != 0:
            f = T[r][col]
            T[r] = [a - f * b for a, b in zip(T[r], prow)]
    if Z[col] != 0:
        f = Z[col]
        for j in range(len(Z)):
            Z[j] -= f * prow[j]
    basis[row] = col
