"""Assembly of the square target blocks the block model fits.

Every observed rating is lifted to a t x t matrix: all diagonal entries hold
the rating normalized by the global maximum, and registered side channels
fill chosen off-diagonal positions with values in [0, 1].  Popularity ranks
are the built-in channels; unbound off-diagonal positions stay 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import InteractionTable, PopularityTable
from .errors import ConfigError


class SideChannel(enum.Enum):
    """Normalized auxiliary signals available for off-diagonal positions."""

    ITEM_POPULARITY = "item_popularity"
    USER_POPULARITY = "user_popularity"
    CONSTANT_ZERO = "constant_zero"


@dataclass(frozen=True)
class ChannelBinding:
    """Attach one side channel to one off-diagonal (row, col) position."""

    position: tuple[int, int]
    channel: SideChannel


@dataclass(frozen=True)
class BlockSpec:
    """Block side length plus the channel layout of the off-diagonals."""

    t: int
    channels: tuple[ChannelBinding, ...] = ()

    def __post_init__(self):
        if self.t < 1:
            raise ConfigError(f"block side length must be >= 1, got {self.t}")
        seen = set()
        for binding in self.channels:
            row, col = binding.position
            if not (0 <= row < self.t and 0 <= col < self.t):
                raise ConfigError(f"channel position {binding.position} outside {self.t}x{self.t} block")
            if row == col:
                raise ConfigError(f"channel position {binding.position} is on the diagonal")
            if binding.position in seen:
                raise ConfigError(f"duplicate channel position {binding.position}")
            seen.add(binding.position)


@dataclass(frozen=True, eq=False)
class BlockTarget:
    """One assembled t x t target block."""

    t: int
    values: np.ndarray


def popularity_spec() -> BlockSpec:
    """The 2x2 layout with item popularity at (0,1) and user popularity at (1,0)."""
    return BlockSpec(
        t=2,
        channels=(
            ChannelBinding((0, 1), SideChannel.ITEM_POPULARITY),
            ChannelBinding((1, 0), SideChannel.USER_POPULARITY),
        ),
    )


def scalar_spec() -> BlockSpec:
    """The degenerate 1x1 layout: plain scalar rating fitting."""
    return BlockSpec(t=1)


def channel_value(channel: SideChannel, u: int, i: int, pop: PopularityTable) -> float:
    """Evaluate one side channel for a (user, item) pair; always in [0, 1]."""
    if channel is SideChannel.ITEM_POPULARITY:
        return pop.item_rank[i] / pop.max_item_rank
    if channel is SideChannel.USER_POPULARITY:
        return pop.user_rank[u] / pop.max_user_rank
    return 0.0


def build_target(
    spec: BlockSpec,
    u: int,
    i: int,
    r: float,
    table: InteractionTable,
    pop: PopularityTable,
) -> BlockTarget:
    """Assemble the target block for one observed rating.

    Diagonal entries are r / max_rating; bound off-diagonals take their
    channel value; everything else is 0.
    """
    if not 0 <= u < table.n_users:
        raise IndexError(f"user index {u} out of range [0, {table.n_users})")
    if not 0 <= i < table.n_items:
        raise IndexError(f"item index {i} out of range [0, {table.n_items})")
    if r <= 0:
        raise ConfigError(f"rating must be positive, got {r}")

    values = np.zeros((spec.t, spec.t), dtype=np.float64)
    np.fill_diagonal(values, r / table.max_rating)
    for binding in spec.channels:
        values[binding.position] = channel_value(binding.channel, u, i, pop)
    return BlockTarget(t=spec.t, values=values)


def build_targets(
    spec: BlockSpec,
    us: np.ndarray,
    iis: np.ndarray,
    rs: np.ndarray,
    table: InteractionTable,
    pop: PopularityTable,
) -> np.ndarray:
    """Vectorized target assembly for many pairs: returns (n, t, t).

    Entry-for-entry identical to calling build_target per pair; used by the
    trainer so target construction is not the bottleneck.
    """
    n = us.shape[0]
    targets = np.zeros((n, spec.t, spec.t), dtype=np.float64)
    diag = rs / table.max_rating
    for a in range(spec.t):
        targets[:, a, a] = diag
    for binding in spec.channels:
        row, col = binding.position
        if binding.channel is SideChannel.ITEM_POPULARITY:
            targets[:, row, col] = pop.item_rank[iis] / pop.max_item_rank
        elif binding.channel is SideChannel.USER_POPULARITY:
            targets[:, row, col] = pop.user_rank[us] / pop.max_user_rank
    return targets
