"""Time-varying move-blocking state machine.

A blocking vector s = (s_1, ..., s_Nbar) holds the lengths of the intervals
over which each decision input is held constant. The per-step update either
shrinks the in-progress first interval, or — when it expires — drops it and,
while the horizon still exceeds the decision-input budget, splits another
interval so no decision input goes to waste. Warm starts map the previous
blocked solution onto the new blocking exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonExhausted, InvalidSplit, NoSplittable


@dataclass(frozen=True)
class BlockingVector:
    """Interval lengths; canonical form of the blocking matrix."""

    s: tuple

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        if len(s) == 0:
            raise ValueError("blocking vector must be nonempty")
        if any(v < 1 for v in s):
            raise ValueError("interval lengths must be >= 1")
        object.__setattr__(self, "s", s)

    @property
    def horizon(self) -> int:
        return sum(self.s)

    def __len__(self) -> int:
        return len(self.s)

    def __iter__(self):
        return iter(self.s)

    def __getitem__(self, i):
        return self.s[i]


class TransitionKind(enum.Enum):
    DECREMENT_FIRST = "decrement_first"
    DROP_ONLY = "drop_only"
    DROP_AND_SPLIT = "drop_and_split"


@dataclass(frozen=True)
class BlockingTransition:
    """What a single advance did; drives the warm-start mapping.

    For DROP_AND_SPLIT, `index` (0-based) and `cut` describe the split applied
    after the expired first interval was dropped.
    """

    kind: TransitionKind
    index: int = -1
    cut: int = 0


def to_matrix(s: BlockingVector) -> np.ndarray:
    """N x Nbar block-diagonal ones matrix; U = (M ⊗ I_m) Ubar."""
    N, Nbar = s.horizon, len(s)
    M = np.zeros((N, Nbar))
    row = 0
    for j, length in enumerate(s):
        M[row:row + length, j] = 1.0
        row += length
    return M


def split(s: BlockingVector, index: int, cut: int) -> BlockingVector:
    """Split interval `index` into (s_j − cut, cut); sum preserved, length +1."""
    if not 0 <= index < len(s):
        raise InvalidSplit(f"index {index} out of range")
    sj = s[index]
    if sj <= 1:
        raise InvalidSplit("cannot split a unit interval")
    if not 1 <= cut <= sj - 1:
        raise InvalidSplit(f"cut {cut} not in [1, {sj - 1}]")
    return BlockingVector(s.s[:index] + (sj - cut, cut) + s.s[index + 1:])


def choose_split(s: BlockingVector):
    """Split the largest interval through the middle.

    Ties go to the largest index; odd lengths round the cut toward infinity.
    Raises NoSplittable when every interval has length one.
    """
    best = max(s)
    if best <= 1:
        raise NoSplittable("all intervals have length 1")
    index = max(j for j, v in enumerate(s) if v == best)
    cut = math.ceil(best / 2)
    return index, cut


def advance(s: BlockingVector, N_k: int, N_max: int):
    """One shrinking-horizon step of the blocking update.

    Returns (new vector, transition). Decrements the first interval while it
    lasts; once it expires, drops it, and splits the largest remaining
    interval whenever the horizon still exceeds the decision-input budget.
    """
    if s.horizon != N_k:
        raise ValueError(f"sum(s)={s.horizon} disagrees with N_k={N_k}")
    if N_k <= 1:
        raise HorizonExhausted("one step left; nothing to advance to")
    if s[0] > 1:
        return (BlockingVector((s[0] - 1,) + s.s[1:]),
                BlockingTransition(TransitionKind.DECREMENT_FIRST))
    dropped = BlockingVector(s.s[1:])
    if N_k > N_max:
        index, cut = choose_split(dropped)
        return (split(dropped, index, cut),
                BlockingTransition(TransitionKind.DROP_AND_SPLIT, index, cut))
    return dropped, BlockingTransition(TransitionKind.DROP_ONLY)


def warm_start(V_prev: np.ndarray, t: BlockingTransition, m: int) -> np.ndarray:
    """Map the previous blocked input vector onto the new blocking.

    decrement_first keeps it; drop_only removes the first input; and
    drop_and_split removes the first input then duplicates the split block,
    so the expanded sequences match the truncated previous plan entrywise.
    """
    V_prev = np.asarray(V_prev, dtype=float).ravel()
    if V_prev.size % m != 0:
        raise ValueError("input vector length is not a multiple of m")
    if t.kind is TransitionKind.DECREMENT_FIRST:
        return V_prev.copy()
    V = V_prev[m:]
    if t.kind is TransitionKind.DROP_ONLY:
        return V.copy()
    j = t.index
    block = V[j * m:(j + 1) * m]
    return np.concatenate([V[:(j + 1) * m], block, V[(j + 1) * m:]])


def expand(V_bar: np.ndarray, s: BlockingVector, m: int) -> np.ndarray:
    """Per-step input sequence (M(s) ⊗ I_m) V_bar, flattened."""
    V_bar = np.asarray(V_bar, dtype=float).reshape(len(s), m)
    return np.concatenate([np.tile(V_bar[j], (length,))
                           for j, length in enumerate(s)])


def lengths_from(s0: BlockingVector, N_max: int):
    """All interval lengths that the advance dynamics will ever produce when
    starting from s0 (for stage precomputation before the control loop)."""
    seen = set(s0.s)
    s = s0
    N_k = s0.horizon
    while N_k > 1:
        s, _ = advance(s, N_k, N_max)
        N_k -= 1
        seen.update(s.s)
    return sorted(seen)
