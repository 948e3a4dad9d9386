"""Blocked fractional-factorial choice designs with balance/orthogonality search.

A run (choice task) jointly assigns one level to every design slot. Slots are
the per-alternative design attributes plus the task-level context attributes,
in schema order. The fraction is found by a balanced start followed by
pairwise level-swap hill climbing on d-efficiency: swapping one slot's levels
between two runs preserves level counts exactly, so exact balance set up at
initialization survives the whole search. When the run count and level counts
admit a strength-2 linear orthogonal array, the first restart starts from it
(already optimal: exactly balanced and cross-slot orthogonal); random starts
cover every other geometry.

d_efficiency = det(X'X/n)^(1/k) over the effects-coded run matrix. Values
compare designs of the same schema only; effects coding correlates columns
within a slot, so 1.0 is not attainable. Cross-slot correlation is the
interpretable orthogonality diagnostic.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DesignError
from .schema import AttributeDef, ExperimentSchema, effects_code

__all__ = [
    "Profile",
    "DesignDiagnostics",
    "BlockedDesign",
    "full_factorial",
    "select_fraction",
    "block_design",
    "design_diagnostics",
    "within_block_deviation",
    "write_design_csv",
    "read_design_csv",
]

FACTORIAL_CAP = 1_000_000


@dataclass(frozen=True)
class Profile:
    """One run: per-alternative design levels plus task-level context levels."""

    alt_levels: dict[str, dict[str, str]]
    context: dict[str, str]


@dataclass(frozen=True)
class DesignDiagnostics:
    level_balance: dict[str, float]
    max_abs_column_correlation: float
    d_efficiency: float
    singular: bool = False

    @property
    def max_level_imbalance(self) -> float:
        return max(self.level_balance.values()) if self.level_balance else 0.0


@dataclass(frozen=True)
class BlockedDesign:
    schema: ExperimentSchema
    runs: tuple[Profile, ...]
    blocks: tuple[tuple[int, ...], ...]
    seed: int | None
    diagnostics: DesignDiagnostics

    def __post_init__(self):
        seen = [i for b in self.blocks for i in b]
        if sorted(seen) != list(range(len(self.runs))):
            raise DesignError("bad_blocks", "blocks must partition the runs exactly")

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self, run_index: int) -> int:
        for b, members in enumerate(self.blocks):
            if run_index in members:
                return b
        raise DesignError("bad_blocks", f"run {run_index} in no block")


# ---------------------------------------------------------------------------
# Slots: the unit the search permutes
# ---------------------------------------------------------------------------

def _slots(schema: ExperimentSchema) -> list[tuple[str | None, AttributeDef]]:
    out: list[tuple[str | None, AttributeDef]] = []
    for alt in schema.alternatives:
        for attr in schema.design_attributes(alt.id):
            out.append((alt.id, attr))
    for attr in schema.context_attributes():
        out.append((None, attr))
    return out


def _slot_name(alt_id: str | None, attr: AttributeDef) -> str:
    return attr.csv_column if alt_id is None else f"{alt_id}:{attr.csv_column}"


def _slot_codes(attr: AttributeDef) -> np.ndarray:
    """Level-index -> coded row, stacked (L, n_columns)."""
    return np.vstack([effects_code(attr, lv.label) for lv in attr.levels])


def full_factorial(schema: ExperimentSchema, alternative_id: str,
                   cap: int = FACTORIAL_CAP) -> list[dict[str, str]]:
    """All level combinations of one alternative's design attributes, in
    deterministic lexicographic order (first attribute varies slowest)."""
    if alternative_id not in schema.alternative_ids():
        raise DesignError("unknown_alternative", f"no alternative {alternative_id!r}")
    attrs = schema.design_attributes(alternative_id)
    size = 1
    for a in attrs:
        size *= a.n_levels
    if size > cap:
        raise DesignError("overflow",
                          f"full factorial has {size} combinations, above the cap of {cap}")
    out = []
    for combo in itertools.product(*[a.level_labels() for a in attrs]):
        out.append({a.csv_column: label for a, label in zip(attrs, combo)})
    return out


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def _assignment_matrix(design: BlockedDesign) -> np.ndarray:
    slots = _slots(design.schema)
    A = np.empty((design.n_runs, len(slots)), dtype=np.intp)
    for r, run in enumerate(design.runs):
        for s, (alt_id, attr) in enumerate(slots):
            label = run.context[attr.csv_column] if alt_id is None \
                else run.alt_levels[alt_id][attr.csv_column]
            A[r, s] = attr.level_labels().index(label)
    return A


def _coded_matrix(A: np.ndarray, slots) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Effects-coded run matrix and each slot's column range."""
    parts, ranges, start = [], [], 0
    for s, (_, attr) in enumerate(slots):
        codes = _slot_codes(attr)
        parts.append(codes[A[:, s]])
        ranges.append((start, start + codes.shape[1]))
        start += codes.shape[1]
    return np.hstack(parts), ranges


def _d_efficiency(X: np.ndarray) -> tuple[float, bool]:
    n, k = X.shape
    sign, logdet = np.linalg.slogdet(X.T @ X / n)
    if sign <= 0 or not np.isfinite(logdet):
        return 0.0, True
    return float(np.exp(logdet / k)), False


def _max_cross_correlation(X: np.ndarray, ranges) -> float:
    """Largest |corr| between coded columns of different slots. Pairs within
    one slot are excluded: effects coding correlates them by construction.
    A zero-variance column counts as 1 (it cannot be decorrelated)."""
    sd = X.std(axis=0)
    if np.any(sd == 0):
        return 1.0
    C = np.corrcoef(X, rowvar=False)
    mask = np.ones_like(C, dtype=bool)
    for a, b in ranges:
        mask[a:b, a:b] = False
    return float(np.max(np.abs(C[mask]))) if mask.any() else 0.0


def design_diagnostics(design: BlockedDesign) -> DesignDiagnostics:
    if design.n_runs == 0:
        raise DesignError("empty_design", "design has no runs")
    slots = _slots(design.schema)
    A = _assignment_matrix(design)
    X, ranges = _coded_matrix(A, slots)
    balance = {}
    n = design.n_runs
    for s, (alt_id, attr) in enumerate(slots):
        counts = np.bincount(A[:, s], minlength=attr.n_levels)
        balance[_slot_name(alt_id, attr)] = float(np.max(np.abs(counts - n / attr.n_levels)))
    d_eff, singular = _d_efficiency(X)
    return DesignDiagnostics(
        level_balance=balance,
        max_abs_column_correlation=_max_cross_correlation(X, ranges),
        d_efficiency=d_eff,
        singular=singular,
    )


def within_block_deviation(design: BlockedDesign) -> float:
    """Max over blocks, slots, levels of |count - block_size/L|."""
    slots = _slots(design.schema)
    A = _assignment_matrix(design)
    worst = 0.0
    for members in design.blocks:
        sub = A[list(members)]
        size = len(members)
        for s, (_, attr) in enumerate(slots):
            counts = np.bincount(sub[:, s], minlength=attr.n_levels)
            worst = max(worst, float(np.max(np.abs(counts - size / attr.n_levels))))
    return worst


def _finalize(schema: ExperimentSchema, runs, blocks, seed) -> BlockedDesign:
    placeholder = DesignDiagnostics({}, 0.0, 0.0)
    draft = BlockedDesign(schema=schema, runs=runs, blocks=blocks, seed=seed,
                          diagnostics=placeholder)
    return BlockedDesign(schema=schema, runs=runs, blocks=blocks, seed=seed,
                         diagnostics=design_diagnostics(draft))


# ---------------------------------------------------------------------------
# Fraction selection
# ---------------------------------------------------------------------------

_GF4_MUL = ((0, 0, 0, 0), (0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2))
_GF2_MUL = ((0, 0), (0, 1))


def _linear_oa(q: int, m: int) -> np.ndarray:
    """Strength-2 orthogonal array with q^m rows and (q^m - 1)/(q - 1)
    q-level columns: rows are GF(q)^m vectors, columns are linear forms
    indexed by projective representatives (first nonzero coordinate = 1).
    Any two columns have a uniform joint distribution, so effects-coded
    cross-slot correlations vanish exactly."""
    mul = _GF4_MUL if q == 4 else _GF2_MUL
    reps = []
    for v in itertools.product(range(q), repeat=m):
        nz = [x for x in v if x]
        if nz and nz[0] == 1:
            reps.append(v)
    rows = list(itertools.product(range(q), repeat=m))
    A = np.zeros((len(rows), len(reps)), dtype=np.intp)
    for r, x in enumerate(rows):
        for c, v in enumerate(reps):
            acc = 0
            for xi, vi in zip(x, v):
                acc ^= mul[xi][vi]  # addition in GF(2^k) is XOR
            A[r, c] = acc
    return A


def _oa_init(slots, n_runs: int, rng) -> np.ndarray | None:
    """Orthogonal-array start when the geometry admits one: n_runs = q^m,
    every slot has q or 2 levels (2 by collapsing {0,1}/{2,3}), and there
    are enough array columns. Returns a level-index assignment or None."""
    n_levels = [attr.n_levels for _, attr in slots]
    q = 4 if any(L == 4 for L in n_levels) else 2
    if any(L not in (2, q) for L in n_levels):
        return None
    m, size = 1, q
    while size < n_runs:
        size *= q
        m += 1
    if size != n_runs:
        return None
    n_cols = (q ** m - 1) // (q - 1)
    if len(slots) > n_cols:
        return None
    oa = _linear_oa(q, m)
    A = np.empty((n_runs, len(slots)), dtype=np.intp)
    for s, L in enumerate(n_levels):
        col = oa[:, s]
        if L != q:
            col = col // (q // L)
        # seeded relabeling keeps balance and pairwise uniformity
        A[:, s] = rng.permutation(L)[col]
    return A


def _balanced_levels(n_runs: int, n_levels: int, rng) -> np.ndarray:
    base, rem = divmod(n_runs, n_levels)
    counts = [base + (1 if i < rem else 0) for i in range(n_levels)]
    col = np.repeat(np.arange(n_levels, dtype=np.intp), counts)
    return rng.permutation(col)


def _profiles_from_assignment(A: np.ndarray, slots) -> tuple[Profile, ...]:
    runs = []
    for r in range(A.shape[0]):
        alt_levels: dict[str, dict[str, str]] = {}
        context: dict[str, str] = {}
        for s, (alt_id, attr) in enumerate(slots):
            label = attr.levels[A[r, s]].label
            if alt_id is None:
                context[attr.csv_column] = label
            else:
                alt_levels.setdefault(alt_id, {})[attr.csv_column] = label
        runs.append(Profile(alt_levels=alt_levels, context=context))
    return tuple(runs)


def select_fraction(schema: ExperimentSchema, n_runs: int, seed: int,
                    iters: int = 5000, restarts: int = 5) -> BlockedDesign:
    """Pick n_runs joint profiles by balanced init + level-swap hill climbing.

    Exact per-slot level balance holds whenever each slot's level count
    divides n_runs (warned otherwise) and is preserved by every accepted
    step. d-efficiency never decreases across accepted steps. Restarts use
    independent seeded streams and the best restart wins, ties to the lowest
    restart index, so the result is reproducible from (seed, iters, restarts).
    """
    slots = _slots(schema)
    if not slots:
        raise DesignError("empty_design", "schema has no design attributes")
    k_cols = sum(attr.n_columns for _, attr in slots)
    if n_runs < k_cols + 1:
        raise DesignError("infeasible",
                          f"n_runs={n_runs} cannot identify {k_cols} coded columns; "
                          f"minimum feasible size is {k_cols + 1}")
    for alt_id, attr in slots:
        if n_runs % attr.n_levels:
            warnings.warn(f"n_runs={n_runs} not divisible by {attr.n_levels} levels of "
                          f"{_slot_name(alt_id, attr)}; balance will be approximate",
                          stacklevel=2)

    best: tuple[float, int, np.ndarray] | None = None
    for restart in range(restarts):
        rng = np.random.default_rng([seed, restart])
        A = _oa_init(slots, n_runs, rng) if restart == 0 else None
        if A is None:
            A = np.column_stack([_balanced_levels(n_runs, attr.n_levels, rng)
                                 for _, attr in slots])
        X, ranges = _coded_matrix(A, slots)
        d_cur, _ = _d_efficiency(X)

        for _ in range(iters):
            s = int(rng.integers(len(slots)))
            i, j = rng.integers(n_runs, size=2)
            if A[i, s] == A[j, s]:
                continue
            a, b = ranges[s]
            old_i, old_j = X[i, a:b].copy(), X[j, a:b].copy()
            X[i, a:b], X[j, a:b] = old_j, old_i
            d_new, _ = _d_efficiency(X)
            if d_new > d_cur:
                d_cur = d_new
                A[i, s], A[j, s] = A[j, s], A[i, s]
            else:
                X[i, a:b], X[j, a:b] = old_i, old_j

        if best is None or d_cur > best[0]:
            best = (d_cur, restart, A.copy())

    runs = _profiles_from_assignment(best[2], slots)
    return _finalize(schema, runs, (tuple(range(n_runs)),), seed)


# ---------------------------------------------------------------------------
# Blocking
# ---------------------------------------------------------------------------

def block_design(design: BlockedDesign, n_blocks: int, seed: int,
                 restarts: int = 8) -> BlockedDesign:
    """Partition runs into equal blocks minimizing within-block level
    imbalance, measured as the sum over blocks, slots, levels of
    (count - block_size/L)^2 (quadratic, so one badly overfull cell costs
    more than several near-misses). Each restart runs seeded greedy
    sequential placement, then cross-block pair swaps to a local minimum;
    the lowest-objective restart wins, ties to the lowest restart index.
    Deterministic given seed."""
    n = design.n_runs
    if n % n_blocks:
        raise DesignError("non_divisible", f"{n_blocks} blocks must divide {n} runs")
    size = n // n_blocks
    slots = _slots(design.schema)
    A = _assignment_matrix(design)

    best: tuple[float, np.ndarray] | None = None
    for restart in range(restarts):
        assign, objective = _block_once(A, slots, n_blocks, size,
                                        np.random.default_rng([seed, restart]))
        if best is None or objective < best[0] - 1e-9:
            best = (objective, assign)

    blocks = tuple(tuple(int(i) for i in np.flatnonzero(best[1] == b))
                   for b in range(n_blocks))
    return BlockedDesign(schema=design.schema, runs=design.runs, blocks=blocks,
                         seed=seed, diagnostics=design.diagnostics)


def _block_once(A: np.ndarray, slots, n_blocks: int, size: int, rng):
    n = A.shape[0]
    n_slots = len(slots)
    targets = np.array([size / attr.n_levels for _, attr in slots])
    counts = [[np.zeros(slots[s][1].n_levels) for s in range(n_slots)]
              for b in range(n_blocks)]
    room = [size] * n_blocks
    assign = np.empty(n, dtype=np.intp)

    # greedy: place runs in seeded order where they add least imbalance
    for i in rng.permutation(n):
        best_b, best_cost = -1, None
        for b in range(n_blocks):
            if room[b] == 0:
                continue
            cost = 0.0
            for s in range(n_slots):
                c = counts[b][s][A[i, s]]
                cost += 2.0 * (c - targets[s]) + 1.0
            if best_cost is None or cost < best_cost - 1e-12:
                best_b, best_cost = b, cost
        assign[i] = best_b
        room[best_b] -= 1
        for s in range(n_slots):
            counts[best_b][s][A[i, s]] += 1

    def swap_delta(i, j):
        # move run i to block bj and run j to block bi
        bi, bj = assign[i], assign[j]
        delta = 0.0
        for s in range(n_slots):
            li, lj = A[i, s], A[j, s]
            if li == lj:
                continue
            t = targets[s]
            for b, gained, lost in ((bi, lj, li), (bj, li, lj)):
                c = counts[b][s]
                delta += 2.0 * (c[gained] - t) + 1.0
                delta += -2.0 * (c[lost] - t) + 1.0
        return delta

    for _ in range(60):  # bounded improvement passes
        improved = False
        for i in range(n):
            for j in range(i + 1, n):
                if assign[i] == assign[j]:
                    continue
                if swap_delta(i, j) < -1e-9:
                    bi, bj = assign[i], assign[j]
                    for s in range(n_slots):
                        li, lj = A[i, s], A[j, s]
                        counts[bi][s][li] -= 1
                        counts[bi][s][lj] += 1
                        counts[bj][s][lj] -= 1
                        counts[bj][s][li] += 1
                    assign[i], assign[j] = bj, bi
                    improved = True
        if not improved:
            break

    objective = 0.0
    for b in range(n_blocks):
        for s in range(n_slots):
            objective += float(np.sum((counts[b][s] - targets[s]) ** 2))
    return assign, objective


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def write_design_csv(design: BlockedDesign, path: str | Path) -> None:
    slots = _slots(design.schema)
    header = ["run_id", "block_id"] + [_slot_name(alt_id, attr) for alt_id, attr in slots]
    run_block = {}
    for b, members in enumerate(design.blocks, start=1):
        for r in members:
            run_block[r] = b
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r, run in enumerate(design.runs):
            row = [str(r + 1), str(run_block[r])]
            for alt_id, attr in slots:
                row.append(run.context[attr.csv_column] if alt_id is None
                           else run.alt_levels[alt_id][attr.csv_column])
            writer.writerow(row)


def read_design_csv(path: str | Path, schema: ExperimentSchema) -> BlockedDesign:
    slots = _slots(schema)
    names = [_slot_name(alt_id, attr) for alt_id, attr in slots]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DesignError("empty_design", f"{path}: no header row")
        missing = [c for c in ("run_id", "block_id", *names) if c not in reader.fieldnames]
        if missing:
            raise DesignError("missing_column", f"{path}: missing columns {missing}")
        runs, block_keys = [], []
        for n, row in enumerate(reader, start=2):
            alt_levels: dict[str, dict[str, str]] = {}
            context: dict[str, str] = {}
            for (alt_id, attr), col in zip(slots, names):
                label = (row.get(col) or "").strip()
                if label not in attr.level_labels():
                    raise DesignError("unknown_level",
                                      f"{path} row {n}: {label!r} is not a level of "
                                      f"{attr.name}")
                if alt_id is None:
                    context[attr.csv_column] = label
                else:
                    alt_levels.setdefault(alt_id, {})[attr.csv_column] = label
            runs.append(Profile(alt_levels=alt_levels, context=context))
            block_keys.append((row.get("block_id") or "").strip())
    if not runs:
        raise DesignError("empty_design", f"{path}: no runs")
    unique = list(dict.fromkeys(block_keys))
    try:
        unique.sort(key=int)
    except ValueError:
        unique.sort()
    blocks = tuple(tuple(i for i, k in enumerate(block_keys) if k == key)
                   for key in unique)
    return _finalize(schema, tuple(runs), blocks, None)
