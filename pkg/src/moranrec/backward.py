"""The partitioning process: ancestry of site blocks backward in time.

States are partitions of the site set; blocks split when a crossover hits
the material that separates their sites, and blocks coalesce when two
fragments pick the same parent among the ``N`` individuals of the
population.  Three variants share one interface:

* ``finite``: the exact finite-population chain.
* ``deterministic``: the infinite-population limit at fixed crossover
  probabilities, a pure splitting (progressive refinement) process.
* ``diffusion``: crossover probabilities scaled like rates over ``N`` and
  time sped up by ``N``; splits at marginal rates, every unordered pair of
  blocks coalesces at rate 2, and nothing else.

Simulation follows the generative narrative (pick a block, split it, let
each fragment pick a parent); the generator matrices are built from the
same transition rates and serve as the exact reference.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidInitialError
from .markov import GeneratorMatrix
from .operators import (
    DiffusionRates,
    RecombinationDistribution,
    marginal_recomb_prob,
    marginal_split_rate,
)
from .partitions import (
    DEFAULT_SITE_CAP,
    Partition,
    enumerate_partitions,
    format_partition,
    ordered_partitions_le2,
    parse_partition,
    refines,
    restrict,
)

VARIANTS = ("finite", "deterministic", "diffusion")


@dataclass(frozen=True)
class BackwardModel:
    """Sites, population size, recombination input and limit variant."""

    n: int
    N: int
    recomb: RecombinationDistribution | None = None
    variant: str = "finite"
    rho: DiffusionRates | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "diffusion":
            if self.rho is None:
                raise ValueError("diffusion variant needs DiffusionRates")
            if self.rho.n != self.n:
                raise ValueError("rates and model disagree on n")
        else:
            if self.recomb is None:
                raise ValueError(f"{self.variant} variant needs a RecombinationDistribution")
            if self.recomb.n != self.n:
                raise ValueError("recombination distribution and model disagree on n")
        if self.N < 1:
            raise ValueError("population size must be at least 1")

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(range(1, self.n + 1))


def _falling_weight(N: int, m: int, b_size: int) -> float:
    """(N-(m-1))! / (N-b_size)! as a product; zero once ``b_size`` exceeds ``N``."""
    w = 1.0
    for i in range(N - b_size + 1, N - m + 2):
        if i <= 0:
            return 0.0
        w *= i
    return w


def theta_rate(model: BackwardModel, j: int, jj: Partition, a: Partition,
               b: Partition) -> float:
    """Rate of the transition ``a -> b`` through block ``j`` splitting as ``jj``.

    ``jj`` is an ordered partition of block ``j`` into at most two parts.
    Nonzero exactly when ``b`` restricted to block ``j`` coarsens ``jj``
    while the other blocks of ``a`` stay intact in ``b``; includes the
    silent case ``b == a``.  Transitions to partitions with more than ``N``
    blocks get weight zero.
    """
    m = len(a)
    block = a.blocks[j]
    rest = a.drop_block(j)
    if restrict(b, rest.ground) != rest:
        return 0.0
    if not refines(jj, restrict(b, block)):
        return 0.0
    r = marginal_recomb_prob(model.recomb, block, jj)
    return r * model.N ** (-len(jj)) * _falling_weight(model.N, m, len(b))


@lru_cache(maxsize=None)
def _split_choices(model: BackwardModel, block: tuple[int, ...]) -> tuple[tuple[Partition, float], ...]:
    """(split, probability) over the at-most-two-part partitions of ``block``."""
    return tuple((jj, marginal_recomb_prob(model.recomb, block, jj))
                 for jj in ordered_partitions_le2(block))


def _merge_into(blocks: list[tuple[int, ...]], target: int,
                fragment: tuple[int, ...]) -> None:
    blocks[target] = tuple(sorted(blocks[target] + fragment))


def transition_rates(model: BackwardModel, a: Partition) -> dict[Partition, float]:
    """All nonzero off-diagonal rates out of ``a`` for the model variant.

    Built constructively from the event narrative: every way the fragments
    of a split can stay alone or land on another block contributes the
    rate of the resulting partition.
    """
    if model.variant == "finite":
        return _transition_rates_finite(model, a)
    if model.variant == "deterministic":
        return _transition_rates_det(model, a)
    return _transition_rates_diff(model, a)


def _transition_rates_finite(model: BackwardModel, a: Partition) -> dict[Partition, float]:
    N = model.N
    m = len(a)
    out: dict[Partition, float] = {}
    if m > N:
        return out  # states with more blocks than individuals are not reachable
    for j in range(m):
        block = a.blocks[j]
        others = [blk for k, blk in enumerate(a.blocks) if k != j]
        for jj, r in _split_choices(model, block):
            if r == 0.0:
                continue
            if len(jj) == 1:
                # unchanged block: it may still land on another block
                for k in range(m - 1):
                    blocks = list(others)
                    _merge_into(blocks, k, block)
                    b = Partition(tuple(blocks))
                    w = r / N * _falling_weight(N, m, len(b))
                    if w:
                        out[b] = out.get(b, 0.0) + w
                continue
            f1, f2 = jj.blocks
            targets = [None] + list(range(m - 1))
            for t1 in targets:
                for t2 in targets:
                    blocks = list(others)
                    if t1 is None:
                        blocks.append(f1)
                    else:
                        _merge_into(blocks, t1, f1)
                    if t2 is None:
                        blocks.append(f2)
                    else:
                        _merge_into(blocks, t2, f2)
                    b = Partition(tuple(blocks))
                    if b == a:
                        continue
                    w = r / N**2 * _falling_weight(N, m, len(b))
                    if w:
                        out[b] = out.get(b, 0.0) + w
    return out


def _transition_rates_det(model: BackwardModel, a: Partition) -> dict[Partition, float]:
    out: dict[Partition, float] = {}
    for j in range(len(a)):
        block = a.blocks[j]
        others = tuple(blk for k, blk in enumerate(a.blocks) if k != j)
        for jj, r in _split_choices(model, block):
            if len(jj) == 1 or r == 0.0:
                continue
            b = Partition(others + jj.blocks)
            out[b] = out.get(b, 0.0) + r
    return out


def _transition_rates_diff(model: BackwardModel, a: Partition) -> dict[Partition, float]:
    out: dict[Partition, float] = {}
    m = len(a)
    for j in range(m):
        block = a.blocks[j]
        others = tuple(blk for k, blk in enumerate(a.blocks) if k != j)
        for jj in ordered_partitions_le2(block)[1:]:
            rho = marginal_split_rate(model.rho, block, jj)
            if rho == 0.0:
                continue
            b = Partition(others + jj.blocks)
            out[b] = out.get(b, 0.0) + rho
    for j in range(m):
        for k in range(j + 1, m):
            blocks = [blk for i, blk in enumerate(a.blocks) if i not in (j, k)]
            blocks.append(tuple(sorted(a.blocks[j] + a.blocks[k])))
            b = Partition(tuple(blocks))
            out[b] = out.get(b, 0.0) + 2.0
    return out


def _generator_from_rates(model: BackwardModel, cap: int) -> GeneratorMatrix:
    states = enumerate_partitions(model.sites, cap=cap)
    index = {p: i for i, p in enumerate(states)}
    G = np.zeros((len(states), len(states)))
    for ai, a in enumerate(states):
        for b, rate in transition_rates(model, a).items():
            G[ai, index[b]] = rate
        G[ai, ai] = -G[ai].sum()
    return GeneratorMatrix(tuple(states), G)


def generator_theta(model: BackwardModel, cap: int = DEFAULT_SITE_CAP) -> GeneratorMatrix:
    """Exact finite-population generator over all partitions of the sites.

    Rows with more blocks than individuals are zero; they are unreachable
    from any admissible initial partition.
    """
    if model.variant != "finite":
        raise ValueError("generator_theta needs the finite variant")
    return _generator_from_rates(model, cap)


def generator_theta_det(model: BackwardModel, cap: int = DEFAULT_SITE_CAP) -> GeneratorMatrix:
    """Infinite-population (fixed crossover probabilities) generator: pure splitting."""
    if model.variant == "diffusion":
        raise ValueError("deterministic generator needs crossover probabilities")
    return _generator_from_rates(
        BackwardModel(model.n, model.N, model.recomb, "deterministic"), cap)


def generator_theta_diff(model: BackwardModel, cap: int = DEFAULT_SITE_CAP) -> GeneratorMatrix:
    """Diffusion-limit generator: marginal split rates plus pairwise coalescence at 2."""
    if model.rho is None:
        raise ValueError("diffusion generator needs DiffusionRates")
    return _generator_from_rates(
        BackwardModel(model.n, model.N, model.recomb, "diffusion", model.rho), cap)


@dataclass(frozen=True)
class PartitionTrajectory:
    """One simulated ancestry path: (time, partition) jumps from ``initial``."""

    initial: Partition
    events: tuple[tuple[float, Partition], ...]
    seed: int
    replicate: int
    t_end: float

    def state_at(self, t: float) -> Partition:
        cur = self.initial
        for when, p in self.events:
            if when > t:
                break
            cur = p
        return cur

    def final_state(self) -> Partition:
        return self.state_at(np.inf)


@lru_cache(maxsize=None)
def _silent_rate_finite(model: BackwardModel, a: Partition) -> float:
    """Total rate of events that leave the state unchanged."""
    N = model.N
    m = len(a)
    s = 0.0
    for block in a.blocks:
        r_one = _split_choices(model, block)[0][1]
        stay = (N - (m - 1)) / N
        s += r_one * stay + (1.0 - r_one) * stay / N
    return s


def _narrative_step_finite(model: BackwardModel, a: Partition,
                           rng: np.random.Generator) -> Partition:
    """One block-level event: split, then parent choice per fragment."""
    N = model.N
    m = len(a)
    j = int(rng.integers(m))
    block = a.blocks[j]
    others = [blk for k, blk in enumerate(a.blocks) if k != j]
    choices = _split_choices(model, a.blocks[j])
    u = rng.random()
    acc = 0.0
    jj = choices[-1][0]
    for cand, p in choices:
        acc += p
        if u < acc:
            jj = cand
            break
    if len(jj) == 1:
        parent = int(rng.integers(N))
        if parent < m - 1:
            blocks = list(others)
            _merge_into(blocks, parent, block)
            return Partition(tuple(blocks))
        return a
    f1, f2 = jj.blocks
    p1 = int(rng.integers(N))
    p2 = int(rng.integers(N))
    blocks = list(others)
    if p1 < m - 1:
        _merge_into(blocks, p1, f1)
    else:
        blocks.append(f1)
    if p2 < m - 1:
        _merge_into(blocks, p2, f2)
    elif p2 == p1:
        return a  # both fragments picked the same empty parent
    else:
        blocks.append(f2)
    return Partition(tuple(blocks))


def simulate_backward(model: BackwardModel, sigma0: Partition, t_end: float,
                      seed: int, *, exact_events: bool = False,
                      replicate: int = 0) -> PartitionTrajectory:
    """Event-driven path of the partitioning process up to ``t_end``.

    For the finite variant silent events are skipped by default: holding
    times use the exact effective rate and the jump is redrawn from the
    narrative until it changes the state, which leaves the path law
    unchanged.  The deterministic variant only ever refines; the diffusion
    variant has no silent events at all.
    """
    if sigma0.ground != model.sites:
        raise InvalidInitialError(f"initial partition must cover sites {model.sites}")
    if model.variant == "finite" and len(sigma0) > model.N:
        raise InvalidInitialError("more blocks than individuals in the population")
    rng = np.random.default_rng([seed, replicate])
    cur = sigma0
    t = 0.0
    events: list[tuple[float, Partition]] = []

    while True:
        if model.variant == "finite":
            m = len(cur)
            effective = m - _silent_rate_finite(model, cur)
            if effective <= m * 1e-13:
                break  # absorbing: no state-changing event has positive rate
            if exact_events:
                t += rng.exponential(1.0 / m)
                if t >= t_end:
                    break
                nxt = _narrative_step_finite(model, cur, rng)
                if nxt == cur:
                    continue
            else:
                t += rng.exponential(1.0 / effective)
                if t >= t_end:
                    break
                while True:
                    nxt = _narrative_step_finite(model, cur, rng)
                    if nxt != cur:
                        break
        elif model.variant == "deterministic":
            m = len(cur)
            split_rates = [1.0 - _split_choices(model, blk)[0][1]
                           for blk in cur.blocks]
            total = sum(split_rates)
            if total <= 1e-15:
                break  # nothing left to split
            if exact_events:
                t += rng.exponential(1.0 / m)
                if t >= t_end:
                    break
                j = int(rng.integers(m))
                nxt = _det_split(model, cur, j, rng)
                if nxt == cur:
                    continue
            else:
                t += rng.exponential(1.0 / total)
                if t >= t_end:
                    break
                j = _pick_weighted(rng, split_rates, total)
                while True:
                    nxt = _det_split(model, cur, j, rng)
                    if nxt != cur:
                        break
        else:  # diffusion: no silent events
            rates = transition_rates(model, cur)
            total = sum(rates.values())
            if total <= 1e-15:
                break
            t += rng.exponential(1.0 / total)
            if t >= t_end:
                break
            u = rng.random() * total
            acc = 0.0
            nxt = cur
            for b, rate in rates.items():
                acc += rate
                if u < acc:
                    nxt = b
                    break
        cur = nxt
        events.append((t, cur))
    return PartitionTrajectory(sigma0, tuple(events), seed, replicate, t_end)


def _det_split(model: BackwardModel, a: Partition, j: int,
               rng: np.random.Generator) -> Partition:
    """Split block ``j`` per the marginal distribution; may stay whole."""
    block = a.blocks[j]
    choices = _split_choices(model, block)
    u = rng.random()
    acc = 0.0
    jj = choices[-1][0]
    for cand, p in choices:
        acc += p
        if u < acc:
            jj = cand
            break
    if len(jj) == 1:
        return a
    others = tuple(blk for k, blk in enumerate(a.blocks) if k != j)
    return Partition(others + jj.blocks)


def _pick_weighted(rng: np.random.Generator, weights: Sequence[float],
                   total: float) -> int:
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def partition_trajectory_to_csv(rec: PartitionTrajectory,
                                header_comment: str | None = None) -> str:
    """Serialize as ``time,partition`` rows; the partition field is quoted."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write("time,partition\n")
    for t, p in rec.events:
        buf.write(f'{t:.17g},"{format_partition(p)}"\n')
    return buf.getvalue()


def partition_events_from_csv(text: str) -> list[tuple[float, Partition]]:
    """Parse the output of :func:`partition_trajectory_to_csv`."""
    events = []
    seen_header = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not seen_header:
            if line != "time,partition":
                raise ValueError(f"unexpected header {line!r}")
            seen_header = True
            continue
        t, p = line.split(",", 1)
        events.append((float(t), parse_partition(p.strip().strip('"'))))
    return events


def generator_to_csv(gen: GeneratorMatrix, header_comment: str | None = None) -> str:
    """Dense CSV with the partition order as header row."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    labels = [format_partition(p) if isinstance(p, Partition) else str(p)
              for p in gen.labels]
    buf.write("state," + ",".join(f'"{lab}"' for lab in labels) + "\n")
    for i, lab in enumerate(labels):
        row = ",".join(f"{v:.17g}" for v in gen.matrix[i])
        buf.write(f'"{lab}",{row}\n')
    return buf.getvalue()


def generator_from_csv(text: str) -> GeneratorMatrix:
    """Parse the output of :func:`generator_to_csv` (partition labels)."""
    rows = []
    labels: list[Partition] = []
    header: list[str] | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        # partition labels contain commas, so split on quoted fields
        fields = _split_quoted_csv(line)
        if header is None:
            if fields[0] != "state":
                raise ValueError(f"unexpected header {fields[0]!r}")
            header = fields[1:]
            continue
        labels.append(parse_partition(fields[0]))
        rows.append([float(v) for v in fields[1:]])
    if header is None:
        raise ValueError("missing header row")
    if [format_partition(p) for p in labels] != header:
        raise ValueError("row labels do not match the header order")
    return GeneratorMatrix(tuple(labels), np.array(rows))


def _split_quoted_csv(line: str) -> list[str]:
    out = []
    field = []
    quoted = False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "," and not quoted:
            out.append("".join(field))
            field = []
        else:
            field.append(ch)
    out.append("".join(field))
    return out
