"""Correlated-randomness counting and reuse planning for masked polynomials.

A row of an exponent matrix is a product of masked factors; evaluating it
in one round needs shares of the product of the masks over every nonempty
subset of the row's active columns. Rows that share columns can share those
subset products. Subsets are bitmasks over columns.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .bits import ConfigError

MAX_COLUMNS = 64
MAX_ORACLE_ACTIVE = 20
MAX_ROWS_INCLUSION_EXCLUSION = 24


class MatrixParseError(ConfigError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ExponentMatrix:
    rows: tuple  # tuple of tuples of non-negative ints

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in r) for r in self.rows)
        if not rows:
            raise ConfigError("exponent matrix needs at least one row")
        width = len(rows[0])
        if width == 0 or any(len(r) != width for r in rows):
            raise ConfigError("exponent matrix rows must be nonempty and equal length")
        if width > MAX_COLUMNS:
            raise ConfigError(f"at most {MAX_COLUMNS} columns supported")
        for i, r in enumerate(rows):
            if any(v < 0 for v in r):
                raise ConfigError(f"row {i} has a negative exponent")
            if not any(r):
                raise ConfigError(f"row {i} has no positive entry")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_array(cls, arr) -> "ExponentMatrix":
        return cls(tuple(map(tuple, np.asarray(arr, dtype=np.int64).tolist())))

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def n(self) -> int:
        return len(self.rows[0])

    def active_sets(self) -> list[int]:
        return [sum(1 << j for j, v in enumerate(r) if v > 0) for r in self.rows]

    def to_text(self) -> str:
        return "\n".join(" ".join(str(v) for v in r) for r in self.rows) + "\n"


def parse_matrix(text: str) -> ExponentMatrix:
    """Whitespace-separated integer grid, one row per nonblank line."""
    rows, widths = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row = []
        for match in re.finditer(r"\S+", line):
            tok, col = match.group(), match.start() + 1
            try:
                v = int(tok)
            except ValueError:
                raise MatrixParseError(f"not an integer: {tok!r}", lineno, col) from None
            if v < 0:
                raise MatrixParseError(f"negative exponent {v}", lineno, col)
            row.append(v)
        if not any(row):
            raise MatrixParseError("row has no positive entry", lineno, 1)
        widths.add(len(row))
        if len(widths) > 1:
            raise MatrixParseError(f"row has {len(row)} entries, expected {len(rows[0])}", lineno, 1)
        rows.append(row)
    if not rows:
        raise MatrixParseError("empty matrix", 1, 1)
    return ExponentMatrix(tuple(map(tuple, rows)))


def _popcount(x: int) -> int:
    return x.bit_count()


def comparison_merge_matrix(n: int) -> ExponentMatrix:
    """Merge polynomial of an n-chunk comparison.

    Columns are lt_0..lt_{n-1} then eq_1..eq_{n-1}; row i is
    lt_i * prod_{j>i} eq_j (chunks are least-significant first).
    """
    if n < 1:
        raise ConfigError("need at least one chunk")
    rows = []
    for i in range(n):
        row = [0] * (2 * n - 1)
        row[i] = 1
        for j in range(i + 1, n):
            row[n + j - 1] = 1
        rows.append(tuple(row))
    return ExponentMatrix(tuple(rows))


def eval_matrix_plain(E: ExponentMatrix, values) -> np.ndarray:
    """Plaintext Boolean value: XOR over rows of AND over active columns.
    ``values`` has shape (..., n)."""
    v = np.asarray(values, dtype=np.uint8)
    out = np.zeros(v.shape[:-1], dtype=np.uint8)
    for a in E.active_sets():
        cols = [j for j in range(E.n) if a >> j & 1]
        out ^= np.bitwise_and.reduce(v[..., cols], axis=-1)
    return out


def n_naive(E: ExponentMatrix) -> int:
    total = 0
    for i, r in enumerate(E.rows):
        s = sum(r)
        if s > 62:
            raise OverflowError(f"row {i} exponent sum {s} exceeds 62")
        total += (1 << s) - 1
    return total


def n_opt(E: ExponentMatrix) -> int:
    return sum((1 << _popcount(a)) - 1 for a in E.active_sets())


def _row_new_subsets(a_i: int, prior: list[int], max_size: int | None) -> int:
    # sum over T subset of prior of (-1)^|T| (2^|A_i & A_T| - 1), pruned once
    # the running intersection is empty (every extension contributes 0)
    total = 0
    stack = [(0, a_i, 0)]
    while stack:
        start, inter, size = stack.pop()
        total += (-1) ** size * ((1 << _popcount(inter)) - 1)
        if max_size is not None and size >= max_size:
            continue
        for t in range(start, len(prior)):
            nxt = inter & prior[t]
            if nxt:
                stack.append((t + 1, nxt, size + 1))
    return total


def n_final(E: ExponentMatrix, *, printed_bounds: bool = False) -> tuple[list[int], int]:
    """Per-row new subset products after cross-row reuse, and their total.

    Row i counts, by inclusion-exclusion over subsets T of the earlier
    rows, the nonempty subsets of A_i not already contained in some earlier
    A_t; T = {} stands for A_i itself. ``printed_bounds`` stops the outer
    sum at |T| = i - 1 instead of i, which drops the all-earlier-rows term.
    """
    if E.m > MAX_ROWS_INCLUSION_EXCLUSION:
        raise ConfigError(f"{E.m} rows exceed the inclusion-exclusion cap of "
                          f"{MAX_ROWS_INCLUSION_EXCLUSION}; use brute_force_count")
    act = E.active_sets()
    per_row = [_row_new_subsets(a, act[:i], i - 1 if printed_bounds else None)
               for i, a in enumerate(act)]
    return per_row, sum(per_row)


def _submasks(a: int):
    s = a
    while s:
        yield s
        s = (s - 1) & a


def oracle_feasible(E: ExponentMatrix) -> bool:
    return max(_popcount(a) for a in E.active_sets()) <= MAX_ORACLE_ACTIVE


def brute_force_count(E: ExponentMatrix) -> int:
    """|{S nonempty : S subset of some A_i}| by explicit enumeration.

    Work is bounded by the largest active set, which must have at most
    MAX_ORACLE_ACTIVE columns (so any matrix with n <= 20 qualifies).
    """
    if not oracle_feasible(E):
        raise ConfigError(f"brute force limited to active sets of {MAX_ORACLE_ACTIVE} columns")
    seen: set[int] = set()
    for a in E.active_sets():
        seen.update(_submasks(a))
    return len(seen)


def _subset_key(s: int):
    return (_popcount(s), [j for j in range(s.bit_length()) if s >> j & 1])


@dataclass(frozen=True)
class ReusePlan:
    n_vars: int
    subsets: tuple  # distinct bitmasks, sorted by size then lexicographically
    rows: tuple  # per row: (active mask, ((subset mask, plan index), ...))

    def __len__(self):
        return len(self.subsets)

    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.subsets)}

    def singleton(self, j: int) -> int:
        return self.index()[1 << j]

    def to_json(self) -> dict:
        def idx(s):
            return [j for j in range(self.n_vars) if s >> j & 1]
        return {
            "n_vars": self.n_vars,
            "subsets": [idx(s) for s in self.subsets],
            "rows": [{"active": idx(a), "slots": [k for _, k in terms]} for a, terms in self.rows],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def build_reuse_plan(E: ExponentMatrix) -> ReusePlan:
    act = E.active_sets()
    distinct: set[int] = set()
    for a in act:
        distinct.update(_submasks(a))
    subsets = tuple(sorted(distinct, key=_subset_key))
    index = {s: i for i, s in enumerate(subsets)}
    rows = tuple(
        (a, tuple((s, index[s]) for s in sorted(_submasks(a), key=_subset_key)))
        for a in act
    )
    return ReusePlan(E.n, subsets, rows)


def counts_summary(E: ExponentMatrix) -> dict:
    per_row, total = n_final(E)
    out = {
        "m": E.m,
        "n": E.n,
        "n_naive": n_naive(E),
        "n_opt": n_opt(E),
        "n_final_per_row": per_row,
        "n_final": total,
    }
    if oracle_feasible(E):
        bf = brute_force_count(E)
        out["brute_force"] = bf
        out["oracle"] = "match" if bf == total else "MISMATCH"
    else:
        out["brute_force"] = None
        out["oracle"] = "skipped"
    return out
