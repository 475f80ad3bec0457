"""The Moran population process with single-crossover recombination.

Individuals die at rate one and are replaced by an offspring spliced from
uniformly drawn parents (with replacement) according to the recombination
distribution.  The module provides the exact transition rates, the full
generator matrix over all populations of size ``N``, an event-driven
simulator, and the infinite-population replacement ODE.

Simulation skips silent replacements (offspring type equals the dying
type) by default: the holding time uses the exact effective rate and the
jump is drawn from the exact conditional law, so the law of the recorded
path is unchanged.  ``exact_events=True`` restores literal rate-``N``
stepping through silent events.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SizeCapError
from .markov import GeneratorMatrix, count_population_states, enumerate_population_states
from .measures import (
    Measure,
    PopulationState,
    SiteSpace,
    parse_type_token,
    type_token,
)
from .operators import RecombinationDistribution

DEFAULT_POPULATION_CAP = 20000


@dataclass(frozen=True)
class ForwardModel:
    """Population size, site space and recombination distribution."""

    space: SiteSpace
    N: int
    recomb: RecombinationDistribution

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("population size must be at least 1")
        if self.recomb.n != self.space.n:
            raise ValueError("recombination distribution and site space disagree on n")


def replacement_distribution(model: ForwardModel, counts: np.ndarray) -> np.ndarray:
    """Type distribution of a newborn given the current counts.

    Mixture over the recombination distribution of the normalized
    block-marginal products; a probability vector.
    """
    cards = model.space.cards
    N = counts.sum()
    q = (model.recomb.r_whole / N) * counts.astype(float)
    grid = counts.reshape(cards)
    ndim = len(cards)
    for i, ri in enumerate(model.recomb.crossover, start=1):
        if ri == 0.0:
            continue
        lead = grid.sum(axis=tuple(range(i, ndim))).ravel()
        trail = grid.sum(axis=tuple(range(0, i))).ravel()
        q += (ri / N**2) * np.outer(lead, trail).ravel()
    return q


def rate_lambda(model: ForwardModel, z: PopulationState, y: int, x: int) -> float:
    """Rate of replacing one individual of type ``y`` by one of type ``x``.

    Includes the silent case ``x == y``; summing over ``x`` returns the
    death rate ``z(y)``.
    """
    q = replacement_distribution(model, z.counts)
    return float(q[x] * z.counts[y])


def generator_lambda(model: ForwardModel, cap: int = DEFAULT_POPULATION_CAP) -> GeneratorMatrix:
    """Exact generator over every population of size ``N``.

    Rows are indexed by count vectors in the order of
    ``enumerate_population_states``; monomorphic rows are zero (absorbing).
    """
    K = model.space.total_states
    n_states = count_population_states(K, model.N)
    if n_states > cap:
        raise SizeCapError(f"{n_states} population states exceeds the cap of {cap}")
    states = enumerate_population_states(K, model.N)
    index = {s: i for i, s in enumerate(states)}
    G = np.zeros((n_states, n_states))
    for si, s in enumerate(states):
        counts = np.array(s)
        q = replacement_distribution(model, counts)
        for y in range(K):
            if counts[y] == 0:
                continue
            for x in range(K):
                if x == y or q[x] == 0.0:
                    continue
                t = list(s)
                t[y] -= 1
                t[x] += 1
                G[si, index[tuple(t)]] += q[x] * counts[y]
        G[si, si] = -G[si].sum()
    return GeneratorMatrix(tuple(states), G)


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated path: initial counts plus (time, dying, newborn) events."""

    initial: tuple[int, ...]
    events: tuple[tuple[float, int, int], ...]
    seed: int
    replicate: int
    t_end: float

    def state_at(self, t: float) -> np.ndarray:
        """Counts right after the last event at or before ``t``."""
        z = np.array(self.initial, dtype=np.int64)
        for when, y, x in self.events:
            if when > t:
                break
            z[y] -= 1
            z[x] += 1
        return z

    def final_counts(self) -> np.ndarray:
        return self.state_at(np.inf)


def simulate_forward(model: ForwardModel, z0: PopulationState, t_end: float,
                     seed: int, *, exact_events: bool = False,
                     replicate: int = 0) -> TrajectoryRecord:
    """Event-driven path of the population process up to ``t_end``.

    The stream is seeded by ``(seed, replicate)``, so replicates are
    independent and each run is bit-reproducible.  ``t_end`` may be
    ``inf``; the loop then runs until absorption (monomorphic state).
    """
    rng = np.random.default_rng([seed, replicate])
    counts = z0.counts.astype(np.int64).copy()
    N = model.N
    K = counts.size
    t = 0.0
    events: list[tuple[float, int, int]] = []
    while True:
        if counts.max() == N:
            break  # monomorphic: only silent replacements remain
        q = replacement_distribution(model, counts)
        if exact_events:
            t += rng.exponential(1.0 / N)
            if t >= t_end:
                break
            y = int(rng.choice(K, p=counts / N))
            x = int(rng.choice(K, p=q))
            if x == y:
                continue
        else:
            silent = float(q @ counts)
            effective = N - silent
            if effective <= N * 1e-13:
                break
            t += rng.exponential(1.0 / effective)
            if t >= t_end:
                break
            w = np.outer(counts.astype(float), q)
            np.fill_diagonal(w, 0.0)
            flat = w.ravel()
            k = int(rng.choice(flat.size, p=flat / flat.sum()))
            y, x = divmod(k, K)
        counts[y] -= 1
        counts[x] += 1
        events.append((t, y, x))
    return TrajectoryRecord(tuple(int(c) for c in z0.counts), tuple(events),
                            seed, replicate, t_end)


def deterministic_step(recomb: RecombinationDistribution, omega: Measure,
                       dt: float) -> Measure:
    """One classical RK4 step of the infinite-population replacement ODE.

    The field is the crossover-weighted sum of (normalized block-marginal
    product minus current state); it preserves total mass, so probability
    measures stay probability measures to machine precision.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cards = omega.cards
    cuts = [(i, r) for i, r in enumerate(recomb.crossover, start=1) if r > 0.0]
    ndim = len(cards)

    def field(w: np.ndarray) -> np.ndarray:
        norm = w.sum()
        grid = w.reshape(cards)
        out = np.zeros_like(w)
        for i, ri in cuts:
            lead = grid.sum(axis=tuple(range(i, ndim))).ravel()
            trail = grid.sum(axis=tuple(range(0, i))).ravel()
            out += ri * (np.outer(lead, trail).ravel() / norm**2 - w)
        return out

    w = omega.weights
    k1 = field(w)
    k2 = field(w + 0.5 * dt * k1)
    k3 = field(w + 0.5 * dt * k2)
    k4 = field(w + dt * k3)
    return omega.with_weights(w + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


def integrate_deterministic(recomb: RecombinationDistribution, omega: Measure,
                            t_end: float, dt: float = 1e-3) -> Measure:
    """Fixed-step RK4 integration of the replacement ODE up to ``t_end``."""
    steps = int(np.ceil(t_end / dt)) if t_end > 0 else 0
    if steps:
        dt = t_end / steps
    for _ in range(steps):
        omega = deterministic_step(recomb, omega, dt)
    return omega


def trajectory_to_csv(rec: TrajectoryRecord, cards: Sequence[int],
                      header_comment: str | None = None) -> str:
    """Serialize events as ``time,dying_type,new_type`` with digit-token types."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write("time,dying_type,new_type\n")
    for t, y, x in rec.events:
        buf.write(f"{t:.17g},{type_token(cards, y)},{type_token(cards, x)}\n")
    return buf.getvalue()


def trajectory_events_from_csv(text: str, cards: Sequence[int]) -> list[tuple[float, int, int]]:
    """Parse the output of :func:`trajectory_to_csv` back to index events."""
    events = []
    seen_header = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not seen_header:
            if line != "time,dying_type,new_type":
                raise ValueError(f"unexpected header {line!r}")
            seen_header = True
            continue
        t, y, x = line.split(",")
        events.append((float(t), parse_type_token(cards, y), parse_type_token(cards, x)))
    return events
