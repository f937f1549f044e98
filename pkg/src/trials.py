"""Seeded, chunked and thread-parallel execution of independent Monte-Carlo trials.

Trial t always draws from the stream derived from (base_seed, t), and partial
results are folded in a fixed pairwise tree, so results do not depend on the
number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from logging import getLogger
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np

logger = getLogger(__name__)

CHUNK_SIZE = 256

T = TypeVar("T")


def trial_rng(base_seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(0, t)))


def auxiliary_rng(base_seed: int, key: int) -> np.random.Generator:
    """Stream for work outside the trials themselves (bootstrap, pre-selection)."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(1, key)))


def tree_reduce(values: Sequence[T], combine: Callable[[T, T], T]) -> T:
    """Pairwise-tree reduction in a fixed order."""
    if not values:
        raise ValueError("tree_reduce needs at least one value")
    level = list(values)
    while len(level) > 1:
        nxt = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass
class TrialOutcome:
    """Result of one trial; estimate is None for rejected trials."""

    accepted: bool
    estimate: Optional[np.ndarray] = None
    loss: float = 0.0


@dataclass
class TrialAccumulator:
    """Commutative-monoid summary of a run of trials."""

    accepted: int = 0
    rejected: int = 0
    estimate_sum: Optional[np.ndarray] = None
    loss_sum: float = 0.0
    loss_sq_sum: float = 0.0
    keep_estimates: bool = True
    estimates: list[np.ndarray] = field(default_factory=list)

    def add(self, outcome: TrialOutcome):
        if not outcome.accepted:
            self.rejected += 1
            return
        self.accepted += 1
        est = np.ravel(outcome.estimate)
        self.estimate_sum = est.copy() if self.estimate_sum is None else self.estimate_sum + est
        self.loss_sum += outcome.loss
        self.loss_sq_sum += outcome.loss * outcome.loss
        if self.keep_estimates:
            self.estimates.append(est)

    def merge(self, other: "TrialAccumulator") -> "TrialAccumulator":
        if self.estimate_sum is None:
            estimate_sum = other.estimate_sum
        elif other.estimate_sum is None:
            estimate_sum = self.estimate_sum
        else:
            estimate_sum = self.estimate_sum + other.estimate_sum
        return TrialAccumulator(
            accepted=self.accepted + other.accepted,
            rejected=self.rejected + other.rejected,
            estimate_sum=estimate_sum,
            loss_sum=self.loss_sum + other.loss_sum,
            loss_sq_sum=self.loss_sq_sum + other.loss_sq_sum,
            keep_estimates=self.keep_estimates,
            estimates=self.estimates + other.estimates,
        )

    @property
    def mean_estimate(self) -> Optional[np.ndarray]:
        if self.estimate_sum is None:
            return None
        return self.estimate_sum / self.accepted

    @property
    def estimate_matrix(self) -> np.ndarray:
        if not self.estimates:
            return np.empty((0, 0))
        return np.vstack(self.estimates)


def run_trials(trial_fn: Callable[[np.random.Generator], TrialOutcome], trials: int, base_seed: int,
               threads: int = 1, keep_estimates: bool = True) -> TrialAccumulator:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    starts = list(range(0, trials, CHUNK_SIZE))

    def run_chunk(start: int) -> TrialAccumulator:
        acc = TrialAccumulator(keep_estimates=keep_estimates)
        for t in range(start, min(start + CHUNK_SIZE, trials)):
            acc.add(trial_fn(trial_rng(base_seed, t)))
        logger.debug(f"Finished trials {start}..{min(start + CHUNK_SIZE, trials) - 1}")
        return acc

    if threads <= 1 or len(starts) == 1:
        partials = [run_chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run_chunk, starts))
    return tree_reduce(partials, TrialAccumulator.merge)
