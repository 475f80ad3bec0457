"""Exact expectations of sampling measures through the backward generator.

The population process and the partitioning process are intertwined: if
``H`` denotes the table of without-replacement sampling measures (one
probability vector per population state and partition), then the forward
generator applied to ``H`` equals ``H`` contracted against the transpose
of the partitioning generator.  That identity closes the moment hierarchy:
the expectations of all sampling measures solve a linear ODE driven by the
small partition-lattice generator, independently of the type coordinate.

This module verifies the identity exactly, integrates the ODE (matrix
exponential as the production path, fixed-step RK4 as an independent
cross-check), translates sampling expectations into expected linkage
disequilibria, and evaluates the closed-form results available for two
and three sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, expm, inv

from .backward import BackwardModel, generator_theta, generator_theta_diff
from .errors import SampleTooLargeError, ShapeError, SizeCapError
from .forward import DEFAULT_POPULATION_CAP, ForwardModel, generator_lambda
from .markov import (
    assert_sorted_times,
    count_population_states,
    enumerate_population_states,
)
from .measures import Measure, PopulationState, SiteSpace, marginalize
from .operators import recombinator_bar, sampling
from .partitions import (
    DEFAULT_SITE_CAP,
    Partition,
    coarsest,
    enumerate_partitions,
    finest,
    mobius,
    parse_partition,
    refines,
    site_set,
)


def mobius_matrix(partitions: list[Partition]) -> np.ndarray:
    """M[a, b] = mobius(a, b) when ``a`` refines ``b``, else 0."""
    B = len(partitions)
    M = np.zeros((B, B))
    for i, a in enumerate(partitions):
        for j, b in enumerate(partitions):
            if refines(a, b):
                M[i, j] = mobius(a, b)
    return M


def sampling_stack(z: PopulationState, partitions: list[Partition]) -> np.ndarray:
    """Matrix of normalized sampling measures of ``z``, one row per partition."""
    rows = [sampling(p, z.measure).weights for p in partitions]
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class SamplingTable:
    """Sampling measures for every population state and every partition.

    ``values[z_index, partition_index, type_index]`` holds the probability
    that a without-replacement spliced sample shows the given type.
    """

    pop_states: tuple[tuple[int, ...], ...]
    partitions: tuple[Partition, ...]
    cards: tuple[int, ...]
    values: np.ndarray

    def measure(self, z: tuple[int, ...], a: Partition) -> Measure:
        zi = self.pop_states.index(z)
        ai = self.partitions.index(a)
        sites = tuple(range(1, len(self.cards) + 1))
        return Measure(sites, self.cards, self.values[zi, ai])


def sampling_table(space: SiteSpace, N: int,
                   cap: int = DEFAULT_POPULATION_CAP,
                   site_cap: int = DEFAULT_SITE_CAP) -> SamplingTable:
    """Build the full duality table over populations of size ``N``.

    The per-state work is one stack of block-marginal products contracted
    against the Mobius matrix; the falling-factorial normalization needs
    ``N`` at least the number of sites.
    """
    n = space.n
    if n > N:
        raise SampleTooLargeError(
            f"sampling measures need N >= n, got N={N}, n={n}")
    K = space.total_states
    if count_population_states(K, N) > cap:
        raise SizeCapError("population state space exceeds the cap")
    partitions = enumerate_partitions(space.sites, cap=site_cap)
    M = mobius_matrix(partitions)
    states = enumerate_population_states(K, N)
    sites = space.sites
    norm = np.array([math.factorial(N - len(p)) / math.factorial(N)
                     for p in partitions])
    values = np.empty((len(states), len(partitions), K))
    for zi, s in enumerate(states):
        z = Measure(sites, space.cards, np.array(s, dtype=float))
        rbar = np.array([recombinator_bar(p, z).weights for p in partitions])
        values[zi] = (M @ rbar) * norm[:, None]
    return SamplingTable(tuple(states), tuple(partitions), space.cards, values)


def check_generator_duality(forward: ForwardModel, backward: BackwardModel,
                            cap: int = DEFAULT_POPULATION_CAP) -> float:
    """Maximum absolute defect of the generator intertwining identity.

    Builds the population generator, the partitioning generator and the
    sampling table, and returns the largest entry of the difference
    between the forward generator acting on the table and the table
    contracted with the transposed backward generator.  Exact duality
    makes this pure floating-point roundoff.
    """
    if (forward.N != backward.N or forward.space.n != backward.n
            or forward.recomb != backward.recomb):
        raise ValueError("forward and backward models must share N, n and r")
    lam = generator_lambda(forward, cap=cap)
    theta = generator_theta(backward)
    table = sampling_table(forward.space, forward.N, cap=cap)
    if tuple(lam.labels) != table.pop_states or tuple(theta.labels) != table.partitions:
        raise RuntimeError("state enumeration mismatch")
    lhs = np.einsum("zw,wbx->zbx", lam.matrix, table.values)
    rhs = np.einsum("ab,zbx->zax", theta.matrix, table.values)
    return float(np.abs(lhs - rhs).max())


@dataclass(frozen=True, eq=False)
class ExpectationTrajectory:
    """Expected sampling measures on a time grid, one block per partition."""

    times: np.ndarray
    partitions: tuple[Partition, ...]
    cards: tuple[int, ...]
    values: np.ndarray  # (times, partitions, types)

    def series(self, a: Partition) -> np.ndarray:
        return self.values[:, self.partitions.index(a), :]

    def measure_at(self, t_index: int, a: Partition) -> Measure:
        sites = tuple(range(1, len(self.cards) + 1))
        return Measure(sites, self.cards, self.values[t_index, self.partitions.index(a)])


def expected_sampling(backward: BackwardModel, z0: PopulationState, a0: Partition,
                      times) -> ExpectationTrajectory:
    """Expected sampling measures of the evolving population, all partitions.

    Solves the closed linear ODE with the partitioning generator acting on
    the initial sampling stack, via the matrix exponential; ``a0`` is
    validated so that the row of interest is well defined
    (``len(a0) <= N``), and the trajectory for every partition is
    returned.
    """
    t = assert_sorted_times(times)
    if z0.N != backward.N:
        raise ValueError(f"population holds {z0.N} individuals, model expects {backward.N}")
    if len(a0) > backward.N:
        raise SampleTooLargeError("initial partition has more blocks than individuals")
    theta = generator_theta(backward)
    partitions = list(theta.labels)
    H0 = sampling_stack(z0, partitions)
    values = np.empty((t.size, len(partitions), H0.shape[1]))
    for i, ti in enumerate(t):
        values[i] = expm(theta.matrix * ti) @ H0
    return ExpectationTrajectory(t, tuple(partitions), z0.measure.cards, values)


def expectation_rk4(theta: np.ndarray, H0: np.ndarray, times,
                    dt: float = 1e-3) -> np.ndarray:
    """Fixed-step RK4 integration of ``dY/dt = theta @ Y``.

    Independent of the matrix-exponential path; used to cross-check it.
    """
    t = assert_sorted_times(times)
    out = np.empty((t.size,) + H0.shape)
    y = H0.astype(float).copy()
    now = 0.0
    for i, ti in enumerate(t):
        span = ti - now
        steps = max(1, int(np.ceil(span / dt))) if span > 0 else 0
        h = span / steps if steps else 0.0
        for _ in range(steps):
            k1 = theta @ y
            k2 = theta @ (y + 0.5 * h * k1)
            k3 = theta @ (y + 0.5 * h * k2)
            k4 = theta @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        now = ti
        out[i] = y
    return out


def lde_transform(partitions: list[Partition], N: int) -> np.ndarray:
    """Matrix turning a stack of sampling expectations into LDE expectations.

    ``T[a, c] = sum over common refinements b of a and c of
    N! / ((N - |c|)! N**|b|) * mobius(b, a)``.
    """
    B = len(partitions)
    T = np.zeros((B, B))
    for ai, a in enumerate(partitions):
        for ci, c in enumerate(partitions):
            s = 0.0
            for b in partitions:
                if refines(b, a) and refines(b, c):
                    s += (math.factorial(N) / math.factorial(N - len(c))
                          / N ** len(b) * mobius(b, a))
            T[ai, ci] = s
    return T


def lde_transform_diffusion(partitions: list[Partition]) -> tuple[np.ndarray, np.ndarray]:
    """Large-N limit of :func:`lde_transform` and its exact inverse.

    The limit is the Mobius matrix from below; its inverse is the
    refinement indicator (inversion from below).
    """
    B = len(partitions)
    T = np.zeros((B, B))
    Tinv = np.zeros((B, B))
    for ai, a in enumerate(partitions):
        for bi, b in enumerate(partitions):
            if refines(b, a):
                T[ai, bi] = mobius(b, a)
                Tinv[ai, bi] = 1.0
    return T, Tinv


@dataclass(frozen=True, eq=False)
class LdeTrajectory:
    """Expected LDE measures on a subset of sites, per partition of that subset."""

    times: np.ndarray
    sites: tuple[int, ...]
    cards: tuple[int, ...]
    partitions: tuple[Partition, ...]
    values: np.ndarray  # (times, partitions, types on the subset)

    def series(self, a: Partition) -> np.ndarray:
        return self.values[:, self.partitions.index(a), :]

    def measure_at(self, t_index: int, a: Partition) -> Measure:
        return Measure(self.sites, self.cards,
                       self.values[t_index, self.partitions.index(a)], signed=True)


def lde_trajectory(backward: BackwardModel, z0: PopulationState, u,
                   times) -> LdeTrajectory:
    """Expected linkage disequilibria on the sites ``u`` over a time grid.

    Pads each partition of ``u`` with singletons, applies the linear map
    from sampling expectations to correlation expectations on the full
    site set, and marginalizes the resulting signed measures onto ``u``.
    """
    u = site_set(u)
    traj = expected_sampling(backward, z0, coarsest(backward.sites), times)
    partitions_S = list(traj.partitions)
    index_S = {p: i for i, p in enumerate(partitions_S)}
    T = lde_transform(partitions_S, backward.N)
    sub_partitions = enumerate_partitions(u)
    rest = tuple(s for s in backward.sites if s not in u)
    space = SiteSpace(z0.measure.cards)
    cards_u = space.cards_for(u)
    values = np.empty((traj.times.size, len(sub_partitions),
                       int(np.prod(cards_u)) if cards_u else 1))
    pad_rows = []
    for p in sub_partitions:
        padded = Partition(p.blocks + tuple((s,) for s in rest))
        pad_rows.append(T[index_S[padded]])
    pad_rows = np.array(pad_rows)
    sites_S = tuple(range(1, backward.n + 1))
    for ti in range(traj.times.size):
        L_full = pad_rows @ traj.values[ti]  # signed measures on the full space
        for pi in range(len(sub_partitions)):
            m = Measure(sites_S, space.cards, L_full[pi], signed=True)
            values[ti, pi] = marginalize(m, u).weights
    return LdeTrajectory(traj.times, u, cards_u, tuple(sub_partitions), values)


@dataclass(frozen=True, eq=False)
class LdeTransform:
    """Conjugation of the 3-site partitioning generator into LDE coordinates.

    ``order`` fixes the partition indexing of every matrix here: whole set
    first, then the split after site 1, the split after site 2, the
    non-contiguous pair, and the all-singletons partition last.
    ``conjugated = T @ theta @ Tinv`` is lower triangular; ``Vinv`` holds
    left eigenvectors so that ``Vinv @ conjugated = D @ Vinv``.
    """

    order: tuple[Partition, ...]
    theta: np.ndarray
    T: np.ndarray
    Tinv: np.ndarray
    conjugated: np.ndarray
    D: np.ndarray
    V: np.ndarray | None = None
    Vinv: np.ndarray | None = None


def three_site_order() -> tuple[Partition, ...]:
    """Display order for 3-site reports (see :class:`LdeTransform`)."""
    return tuple(parse_partition(s) for s in
                 ("1,2,3", "1|2,3", "1,2|3", "1,3|2", "1|2|3"))


def lde_conjugation_3site(backward: BackwardModel) -> LdeTransform:
    """Triangularize the 3-site generator in LDE coordinates.

    For the finite variant the transform carries the population size; in
    the diffusion variant it degenerates to the Mobius matrix and the left
    eigenvector matrix has a closed form.  Eigen data is computed
    numerically in both cases.
    """
    if backward.n != 3:
        raise ShapeError("this conjugation is specific to 3 sites")
    order = three_site_order()
    if backward.variant == "diffusion":
        gen = generator_theta_diff(backward)
    else:
        gen = generator_theta(backward)
    perm = [gen.index(p) for p in order]
    theta = gen.matrix[np.ix_(perm, perm)]
    if backward.variant == "diffusion":
        T, Tinv = lde_transform_diffusion(list(order))
    else:
        T = lde_transform(list(order), backward.N)
        Tinv = inv(T)
    A = T @ theta @ Tinv
    D = np.diag(np.diag(A))
    evals, V = eig(A)
    # order eigenvectors to match the diagonal of A
    cols = []
    used: set[int] = set()
    for d in np.diag(A):
        k = min((i for i in range(len(evals)) if i not in used),
                key=lambda i: abs(evals[i] - d))
        used.add(k)
        cols.append(k)
    V = np.real_if_close(V[:, cols])
    Vinv = inv(V)
    return LdeTransform(order, theta, T, Tinv, A, D, V, Vinv)


def diffusion_left_eigenvectors(rho1: float, rho2: float) -> np.ndarray:
    """Closed-form left eigenvector matrix of the diffusion 3-site conjugation.

    Rows are left eigenvectors of ``conjugated`` for the eigenvalues on
    its diagonal, normalized to unit diagonal.
    """
    s = rho1 + rho2
    c = 4 * (rho1 * rho2 + (2 + s) * (6 + s)) / (
        (2 + rho1) * (2 + rho2) * (2 + s) * (6 + s))
    return np.array([
        [1.0, 0, 0, 0, 0],
        [2 / ((2 + rho2) * (4 + rho1)), 1 / (2 + rho2), 0, 0, 0],
        [2 / ((2 + rho1) * (4 + rho2)), 0, 1 / (2 + rho1), 0, 0],
        [1 / (2 * (2 + s)), 0, 0, 1 / (2 + s), 0],
        [c, 2 / (2 + rho2), 2 / (2 + rho1), 2 / (2 + s), 1.0],
    ])


def fixation_2site(model: ForwardModel, z0: PopulationState) -> Measure:
    """Long-run absorption distribution for two sites.

    A convex mixture of the initial type frequencies and the distribution
    of a leading/trailing splice drawn without replacement, with weights
    set by the relative intensities of resampling and recombination.
    """
    if model.space.n != 2:
        raise ShapeError("fixation formula is specific to 2 sites")
    if z0.N != model.N:
        raise ValueError(f"population holds {z0.N} individuals, model expects {model.N}")
    r = model.recomb.crossover[0]
    N = model.N
    w_res = 2.0 / (2.0 + r * (N - 1))
    w_rec = r * (N - 1) / (2.0 + r * (N - 1))
    h0 = sampling(finest(model.space.sites), z0.measure)
    weights = w_res * z0.counts / N + w_rec * h0.weights
    return Measure(z0.measure.sites, z0.measure.cards, weights)
