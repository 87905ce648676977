"""Regular multigraphs given by port tables, spectral measurement, and walks.

A graph on V = {0..|V|-1} of degree d is a (|V| x d) neighbor table; walks
step through ports. Undirected families pair every port with an inverse port.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import networkx as nx
import numpy as np
from scipy import sparse

from .circuits import CircuitBuilder
from .errors import LimitExceededError
from .hamming import bits_to_int

logger = logging.getLogger(__name__)

DEFAULT_LIMIT_SPECTRAL = 1 << 14
SPECTRAL_TOLERANCE = 1e-6
MAX_POWER_ITERATIONS = 20000
_WALK_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class ExpanderGraph:
    name: str
    neighbors: np.ndarray

    def __post_init__(self) -> None:
        table = self.neighbors
        if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
            raise ValueError(f"neighbor table must be a non-empty (|V| x d) matrix, got shape {table.shape}")
        if table.min() < 0 or table.max() >= table.shape[0]:
            raise ValueError("neighbor table references a vertex outside the graph")
        table.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return int(self.neighbors.shape[0])

    @property
    def degree(self) -> int:
        return int(self.neighbors.shape[1])

    def neighbor(self, vertex: int, port: int) -> int:
        return int(self.neighbors[vertex, port])

    @functools.cached_property
    def lam(self) -> float:
        return second_eigenvalue(self)


@dataclass(frozen=True, slots=True)
class Walk:
    vertices: tuple[int, ...]
    seed: int | None
    seed_bits: int


# --- families ------------------------------------------------------------


def build_margulis(m: int) -> ExpanderGraph:
    """8-regular Margulis-Gabber-Galil graph on Z_m x Z_m, vertex (x, y) = x*m + y.

    Ports 0-3 apply (x+2y, y), (x+2y+1, y), (x, y+2x), (x, y+2x+1); port p+4
    inverts port p.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    x, y = np.divmod(np.arange(m * m, dtype=np.int64), m)
    images = [
        ((x + 2 * y) % m, y),
        ((x + 2 * y + 1) % m, y),
        (x, (y + 2 * x) % m),
        (x, (y + 2 * x + 1) % m),
        ((x - 2 * y) % m, y),
        ((x - 2 * y - 1) % m, y),
        (x, (y - 2 * x) % m),
        (x, (y - 2 * x - 1) % m),
    ]
    table = np.stack([px * m + py for px, py in images], axis=1)
    return ExpanderGraph(name=f"margulis(m={m})", neighbors=table)


def build_complete(n: int, *, self_loops: bool = False) -> ExpanderGraph:
    """K_n as an (n-1)-regular graph, or n-regular with a self-loop per vertex.

    With self-loops one step is a uniform vertex: the i.i.d. baseline.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if self_loops:
        table = np.tile(np.arange(n, dtype=np.int64), (n, 1))
    else:
        table = np.array([[u for u in range(n) if u != v] for v in range(n)], dtype=np.int64)
    return ExpanderGraph(name=f"complete(n={n}{',loops' if self_loops else ''})", neighbors=table)


def from_networkx(graph: nx.Graph, *, name: str = "networkx") -> ExpanderGraph:
    """Port table of a regular (multi)graph; a self-loop fills two ports."""
    nodes = sorted(graph.nodes())
    index = {node: i for i, node in enumerate(nodes)}
    adjacency: list[list[int]] = [[] for _ in nodes]
    for u, v in graph.edges():
        adjacency[index[u]].append(index[v])
        adjacency[index[v]].append(index[u])
    degrees = {len(row) for row in adjacency}
    if len(degrees) != 1:
        raise ValueError(f"{name} is not regular: degrees {sorted(degrees)}")
    return ExpanderGraph(name=name, neighbors=np.array([sorted(row) for row in adjacency], dtype=np.int64))


def to_networkx(g: ExpanderGraph) -> nx.MultiGraph:
    """Undirected multigraph view; each port pair becomes one edge."""
    graph = nx.MultiGraph()
    graph.add_nodes_from(range(g.n_vertices))
    for v in range(g.n_vertices):
        for u in g.neighbors[v]:
            if v <= int(u):
                graph.add_edge(v, int(u))
    return graph


def build_random_regular(n: int, d: int, seed: int) -> ExpanderGraph:
    return from_networkx(nx.random_regular_graph(d, n, seed=seed), name=f"random-regular(n={n},d={d},seed={seed})")


GRAPH_FAMILIES: dict[str, Callable[..., ExpanderGraph]] = {
    "margulis": build_margulis,
    "complete": build_complete,
    "random-regular": build_random_regular,
}


def build_graph(family: str, **params) -> ExpanderGraph:
    try:
        builder = GRAPH_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown graph family {family!r}; known: {sorted(GRAPH_FAMILIES)}") from None
    return builder(**params)


def is_connected(g: ExpanderGraph) -> bool:
    return nx.is_connected(to_networkx(g))


def is_bipartite(g: ExpanderGraph) -> bool:
    return nx.is_bipartite(to_networkx(g))


# --- spectrum ------------------------------------------------------------


def transition_matrix(g: ExpanderGraph) -> sparse.csr_matrix:
    n, d = g.n_vertices, g.degree
    rows = np.repeat(np.arange(n), d)
    matrix = sparse.csr_matrix((np.full(n * d, 1.0 / d), (rows, g.neighbors.ravel())), shape=(n, n))
    matrix.sum_duplicates()
    return matrix


def second_eigenvalue(
    g: ExpanderGraph,
    *,
    limit: int = DEFAULT_LIMIT_SPECTRAL,
    tol: float = SPECTRAL_TOLERANCE,
    seed: int = 0,
) -> float:
    """Second-largest absolute eigenvalue of the transition matrix W.

    Power iteration on W^2 restricted to the complement of the uniform vector;
    sqrt of the Rayleigh quotient. Bipartite and disconnected graphs give 1.
    """
    n = g.n_vertices
    if n > limit:
        raise LimitExceededError("|V|", n, limit)
    if n == 1:
        return 0.0
    w = transition_matrix(g)
    x = np.random.default_rng(seed).standard_normal(n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(MAX_POWER_ITERATIONS):
        y = w @ (w @ x)
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        estimate = float(x @ y)
        # W is symmetric, so the Rayleigh quotient is within the residual of an eigenvalue
        if np.linalg.norm(y - estimate * x) < tol:
            break
        x = y / norm
    else:
        logger.warning("power iteration for %s stopped at %d iterations", g.name, MAX_POWER_ITERATIONS)
    return min(1.0, math.sqrt(max(estimate, 0.0)))


# --- walks ---------------------------------------------------------------


def walk_seed_length(g: ExpanderGraph, m: int) -> int:
    if m < 1:
        raise ValueError(f"walk length must be positive, got {m}")
    return math.ceil(math.log2(g.n_vertices)) + (m - 1) * math.ceil(math.log2(g.degree))


def sample_walk(g: ExpanderGraph, m: int, seed: int) -> Walk:
    if m < 1:
        raise ValueError(f"walk length must be positive, got {m}")
    rng = np.random.default_rng(seed)
    vertex = int(rng.integers(g.n_vertices))
    vertices = [vertex]
    for port in rng.integers(g.degree, size=m - 1):
        vertex = int(g.neighbors[vertex, port])
        vertices.append(vertex)
    return Walk(vertices=tuple(vertices), seed=seed, seed_bits=walk_seed_length(g, m))


def sample_walks(g: ExpanderGraph, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count independent walks of length m as a (count x m) vertex matrix."""
    if m < 1:
        raise ValueError(f"walk length must be positive, got {m}")
    walks = np.empty((count, m), dtype=np.int64)
    walks[:, 0] = rng.integers(g.n_vertices, size=count)
    ports = rng.integers(g.degree, size=(count, m - 1))
    for step in range(1, m):
        walks[:, step] = g.neighbors[walks[:, step - 1], ports[:, step - 1]]
    return walks


def _power_of_two_bits(value: int, what: str) -> int:
    if value & (value - 1):
        raise ValueError(f"{what}={value} is not a power of two")
    return value.bit_length() - 1


def walk_from_bits(g: ExpanderGraph, bits: Sequence[int]) -> Walk:
    """Start vertex from the first log2|V| bits, then log2 d bits per port, MSB first."""
    v_bits = _power_of_two_bits(g.n_vertices, "|V|")
    p_bits = _power_of_two_bits(g.degree, "d")
    extra = len(bits) - v_bits
    if extra < 0 or (p_bits == 0 and extra) or (p_bits and extra % p_bits):
        raise ValueError(f"{len(bits)} seed bits do not describe a walk on {g.name}")
    vertex = bits_to_int(bits[:v_bits])
    vertices = [vertex]
    for start in range(v_bits, len(bits), max(p_bits, 1)):
        vertex = int(g.neighbors[vertex, bits_to_int(bits[start : start + p_bits])])
        vertices.append(vertex)
    return Walk(vertices=tuple(vertices), seed=None, seed_bits=len(bits))


def walk_wires(builder: CircuitBuilder, g: ExpanderGraph, seed_wires: Sequence[int], steps: int) -> list[list[int]]:
    """Circuit form of walk_from_bits: vertex bit-wires for each of the `steps` vertices."""
    v_bits = _power_of_two_bits(g.n_vertices, "|V|")
    p_bits = _power_of_two_bits(g.degree, "d")
    if len(seed_wires) != v_bits + (steps - 1) * p_bits:
        raise ValueError(f"a {steps}-vertex walk needs {v_bits + (steps - 1) * p_bits} seed wires, got {len(seed_wires)}")
    # tables[j][v * d + p] = bit j of neighbor(v, p)
    flat = g.neighbors.ravel()
    tables = [tuple(int(b) for b in (flat >> (v_bits - 1 - j)) & 1) for j in range(v_bits)]
    vertex = list(seed_wires[:v_bits])
    walk = [vertex]
    for step in range(1, steps):
        port = list(seed_wires[v_bits + (step - 1) * p_bits : v_bits + step * p_bits])
        vertex = [builder.lookup(vertex + port, tables[j]) for j in range(v_bits)]
        walk.append(vertex)
    return walk


# --- Chernoff bound ------------------------------------------------------


def chernoff_bound(epsilon: float, lam: float, m: int) -> float:
    """2 exp(-epsilon^2 (1 - lambda) m / 4)."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    return 2.0 * math.exp(-(epsilon**2) * (1.0 - lam) * m / 4.0)


@dataclass(frozen=True, slots=True)
class Deviation:
    trials: int
    hits: int
    epsilon: float
    m: int

    @property
    def frequency(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        if not self.trials:
            return 0.0
        p = self.frequency
        return math.sqrt(p * (1 - p) / self.trials)


def random_indicators(g: ExpanderGraph, count: int, density: float, rng: np.random.Generator) -> tuple[list[np.ndarray], list[float]]:
    """`count` indicator functions of random vertex sets of size floor(density*|V|), with exact means."""
    size = math.floor(density * g.n_vertices)
    functions, means = [], []
    for _ in range(count):
        f = np.zeros(g.n_vertices)
        f[rng.choice(g.n_vertices, size=size, replace=False)] = 1.0
        functions.append(f)
        means.append(size / g.n_vertices)
    return functions, means


def empirical_deviation(
    g: ExpanderGraph,
    fs: Sequence[np.ndarray],
    means: Sequence[float],
    epsilon: float,
    trials: int,
    seed: int,
) -> Deviation:
    """Frequency over `trials` walks of |sum_i f_i(v_i) - sum_i mu_i| >= epsilon * m."""
    m = len(fs)
    if m < 1:
        raise ValueError("need at least one function")
    if len(means) != m:
        raise ValueError(f"{len(means)} means for {m} functions")
    values = np.array([np.asarray(f, dtype=float) for f in fs])
    if values.shape != (m, g.n_vertices):
        raise ValueError(f"every function must have one value per vertex ({g.n_vertices})")
    if values.min() < 0 or values.max() > 1:
        raise ValueError("functions must take values in [0, 1]")
    exact = values.mean(axis=1)
    for i, (declared, actual) in enumerate(zip(means, exact)):
        if abs(declared - actual) > 1e-12:
            raise ValueError(f"declared mean {declared} of f_{i + 1} differs from its exact mean {actual}")
    if trials < 0:
        raise ValueError(f"trials must be non-negative, got {trials}")
    rng = np.random.default_rng(seed)
    target = float(np.sum(exact))
    hits = 0
    columns = np.arange(m)
    for lo in range(0, trials, _WALK_CHUNK):
        walks = sample_walks(g, m, min(_WALK_CHUNK, trials - lo), rng)
        sums = values[columns[None, :], walks].sum(axis=1)
        hits += int(np.count_nonzero(np.abs(sums - target) >= epsilon * m - 1e-9))
    return Deviation(trials=trials, hits=hits, epsilon=epsilon, m=m)
