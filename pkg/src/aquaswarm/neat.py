"""NEAT neuroevolution: genomes, innovation tracking, speciation, networks.

Controllers are evolved with the classic NEAT operators: topology and
weights evolve together, structural genes carry innovation numbers so that
crossover can align them, and speciation with explicit fitness sharing
protects young topologies.  Parameters default to the canonical NEAT
values (population 150, compatibility threshold 3.0, c1 = c2 = 1.0,
c3 = 0.4, steepened sigmoid slope 4.9, 20% survival, staleness 15).

Decoded networks run one synchronous propagation pass per control step:
feed-forward links see this step's values, recurrent links (those that
would close a cycle) see the previous step's activations.  Activation
state persists across steps and is reset at trial start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class NeatError(RuntimeError):
    pass


NODE_ROLES = ("input", "output", "hidden")


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: str  # input | output | hidden


@dataclass
class ConnectionGene:
    in_node: int
    out_node: int
    weight: float
    enabled: bool
    innovation: int

    def copy(self) -> "ConnectionGene":
        return ConnectionGene(self.in_node, self.out_node, self.weight,
                              self.enabled, self.innovation)


@dataclass
class Genome:
    """A controller genotype: node genes plus innovation-numbered links."""

    nodes: dict[int, NodeGene]
    connections: dict[int, ConnectionGene]  # keyed by innovation number
    n_inputs: int
    n_outputs: int
    fitness: float = 0.0

    def copy(self) -> "Genome":
        return Genome(
            nodes=dict(self.nodes),
            connections={k: c.copy() for k, c in self.connections.items()},
            n_inputs=self.n_inputs,
            n_outputs=self.n_outputs,
            fitness=self.fitness,
        )

    def input_ids(self) -> list[int]:
        return list(range(self.n_inputs))

    def output_ids(self) -> list[int]:
        return list(range(self.n_inputs, self.n_inputs + self.n_outputs))

    def has_connection(self, in_node: int, out_node: int) -> bool:
        return any(c.in_node == in_node and c.out_node == out_node
                   for c in self.connections.values())

    def validate(self) -> None:
        innovations = [c.innovation for c in self.connections.values()]
        if len(innovations) != len(set(innovations)):
            raise NeatError("duplicate innovation numbers within genome")
        for c in self.connections.values():
            if c.out_node < self.n_inputs:
                raise NeatError("connection into an input node")
            if c.in_node not in self.nodes or c.out_node not in self.nodes:
                raise NeatError("connection references a missing node")


@dataclass
class NeatParams:
    """Evolution parameters; defaults are the canonical NEAT settings."""

    population_size: int = 150
    compat_threshold: float = 3.0
    c1: float = 1.0  # excess coefficient
    c2: float = 1.0  # disjoint coefficient
    c3: float = 0.4  # mean weight-difference coefficient
    small_genome_limit: int = 20  # below this size N is taken as 1
    weight_mutate_prob: float = 0.8
    weight_perturb_sigma: float = 0.5
    weight_reset_prob: float = 0.1
    weight_init_range: float = 1.0
    add_connection_prob: float = 0.05
    add_node_prob: float = 0.03
    crossover_prob: float = 0.75
    disabled_inherit_prob: float = 0.75
    survival_threshold: float = 0.2
    elitism_min_size: int = 5
    staleness_limit: int = 15
    sigmoid_slope: float = 4.9


class InnovationRegistry:
    """Global innovation bookkeeping.

    Counters only ever increase; within one generation, identical
    structural mutations (same connection endpoints, or a split of the
    same connection) are assigned the same numbers.  Call
    :meth:`new_generation` at each reproduction phase to reset the
    same-generation memos.
    """

    def __init__(self, n_inputs: int, n_outputs: int):
        self.next_innovation = 0
        self.next_node_id = n_inputs + n_outputs
        self._conn_memo: dict[tuple[int, int], int] = {}
        self._split_memo: dict[int, tuple[int, int, int]] = {}

    def new_generation(self) -> None:
        self._conn_memo.clear()
        self._split_memo.clear()

    def connection_innovation(self, in_node: int, out_node: int) -> int:
        key = (in_node, out_node)
        if key not in self._conn_memo:
            self._conn_memo[key] = self.next_innovation
            self.next_innovation += 1
        return self._conn_memo[key]

    def node_split(self, innovation: int, in_node: int, out_node: int) -> tuple[int, int, int]:
        """(new node id, in->new innovation, new->out innovation) for a split."""
        if innovation not in self._split_memo:
            node_id = self.next_node_id
            self.next_node_id += 1
            self._split_memo[innovation] = (
                node_id,
                self.connection_innovation(in_node, node_id),
                self.connection_innovation(node_id, out_node),
            )
        return self._split_memo[innovation]


def initial_genome(n_inputs: int, n_outputs: int, registry: InnovationRegistry,
                   rng: np.random.Generator, params: NeatParams) -> Genome:
    """Fully connected input->output genome with uniform random weights."""
    nodes = {i: NodeGene(i, "input") for i in range(n_inputs)}
    for j in range(n_inputs, n_inputs + n_outputs):
        nodes[j] = NodeGene(j, "output")
    connections = {}
    w = params.weight_init_range
    for i in range(n_inputs):
        for j in range(n_inputs, n_inputs + n_outputs):
            innov = registry.connection_innovation(i, j)
            connections[innov] = ConnectionGene(i, j, float(rng.uniform(-w, w)), True, innov)
    return Genome(nodes, connections, n_inputs, n_outputs)


def mutate(genome: Genome, params: NeatParams, registry: InnovationRegistry,
           rng: np.random.Generator) -> Genome:
    """Return a mutated copy: weight jitter plus structural additions.

    Weights are perturbed with probability ``weight_mutate_prob`` each
    (Gaussian sigma ``weight_perturb_sigma``), of which a
    ``weight_reset_prob`` share are redrawn uniformly instead.  Structural
    mutations draw their numbers from the shared registry; an
    add-connection that duplicates an existing link is skipped.
    """
    g = genome.copy()
    for conn in g.connections.values():
        if rng.random() < params.weight_mutate_prob:
            if rng.random() < params.weight_reset_prob:
                conn.weight = float(rng.uniform(-params.weight_init_range,
                                                params.weight_init_range))
            else:
                conn.weight += float(rng.normal(0.0, params.weight_perturb_sigma))

    if rng.random() < params.add_connection_prob:
        sources = sorted(g.nodes)
        targets = [n for n in sorted(g.nodes) if g.nodes[n].role != "input"]
        if targets:
            src = int(sources[rng.integers(len(sources))])
            dst = int(targets[rng.integers(len(targets))])
            if not g.has_connection(src, dst):
                innov = registry.connection_innovation(src, dst)
                w = params.weight_init_range
                g.connections[innov] = ConnectionGene(src, dst, float(rng.uniform(-w, w)),
                                                      True, innov)

    if rng.random() < params.add_node_prob:
        enabled = [c for c in sorted(g.connections.values(), key=lambda c: c.innovation)
                   if c.enabled]
        if enabled:
            old = enabled[rng.integers(len(enabled))]
            node_id, innov_in, innov_out = registry.node_split(
                old.innovation, old.in_node, old.out_node)
            if node_id not in g.nodes:
                old.enabled = False
                g.nodes[node_id] = NodeGene(node_id, "hidden")
                g.connections[innov_in] = ConnectionGene(old.in_node, node_id, 1.0, True, innov_in)
                g.connections[innov_out] = ConnectionGene(node_id, old.out_node, old.weight,
                                                          True, innov_out)
    return g


def crossover(fitter: Genome, other: Genome, rng: np.random.Generator,
              params: NeatParams = NeatParams()) -> Genome:
    """Align parents by innovation number and recombine.

    Matching genes are inherited from either parent at random; disjoint
    and excess genes come from the fitter parent.  A gene disabled in
    either parent stays disabled in the child with probability 0.75.
    Fitness ties resolve toward the first argument.
    """
    if other.fitness > fitter.fitness:
        fitter, other = other, fitter
    child_nodes = dict(fitter.nodes)
    child_conns: dict[int, ConnectionGene] = {}
    for innov, gene in fitter.connections.items():
        match = other.connections.get(innov)
        if match is None:
            child_conns[innov] = gene.copy()
            continue
        chosen = (gene if rng.random() < 0.5 else match).copy()
        if not gene.enabled or not match.enabled:
            chosen.enabled = not (rng.random() < params.disabled_inherit_prob)
        child_conns[innov] = chosen
    return Genome(child_nodes, child_conns, fitter.n_inputs, fitter.n_outputs)


def compatibility_distance(a: Genome, b: Genome, c1: float = 1.0, c2: float = 1.0,
                           c3: float = 0.4, small_genome_limit: int = 20) -> float:
    """delta = c1*E/N + c2*D/N + c3*Wbar over innovation-aligned genes."""
    ia = a.connections
    ib = b.connections
    if not ia and not ib:
        return 0.0
    max_a = max(ia) if ia else -1
    max_b = max(ib) if ib else -1
    matching = ia.keys() & ib.keys()
    excess = disjoint = 0
    for k in ia.keys() - matching:
        if k > max_b:
            excess += 1
        else:
            disjoint += 1
    for k in ib.keys() - matching:
        if k > max_a:
            excess += 1
        else:
            disjoint += 1
    wbar = (
        sum(abs(ia[k].weight - ib[k].weight) for k in matching) / len(matching)
        if matching else 0.0
    )
    n = max(len(ia), len(ib))
    if len(ia) < small_genome_limit and len(ib) < small_genome_limit:
        n = 1
    return c1 * excess / n + c2 * disjoint / n + c3 * wbar


# -- speciation and reproduction ---------------------------------------------


@dataclass
class Species:
    representative: Genome
    members: list[Genome] = field(default_factory=list)
    best_fitness: float = -math.inf
    staleness: int = 0


@dataclass
class SpeciesPartition:
    """The population split into species (every genome in exactly one)."""

    species: list[Species]

    def assign(self, genomes: list[Genome], params: NeatParams) -> None:
        for s in self.species:
            s.members = []
        for g in genomes:
            for s in self.species:
                if compatibility_distance(g, s.representative, params.c1, params.c2,
                                          params.c3, params.small_genome_limit) \
                        < params.compat_threshold:
                    s.members.append(g)
                    break
            else:
                self.species.append(Species(representative=g, members=[g]))
        self.species = [s for s in self.species if s.members]


class Population:
    """A NEAT population with its innovation registry and species state."""

    def __init__(self, params: NeatParams, n_inputs: int, n_outputs: int,
                 rng: np.random.Generator):
        self.params = params
        self.registry = InnovationRegistry(n_inputs, n_outputs)
        self.genomes = [
            initial_genome(n_inputs, n_outputs, self.registry, rng, params)
            for _ in range(params.population_size)
        ]
        self.partition = SpeciesPartition(species=[])
        self.generation = 0

    def champion(self) -> Genome:
        return max(self.genomes, key=lambda g: g.fitness)

    def next_generation(self, rng: np.random.Generator) -> None:
        """Breed the next population from evaluated genomes (in place)."""
        self.genomes = next_generation(
            self.genomes, self.params, self.registry, rng, self.partition)
        self.generation += 1


def next_generation(genomes: list[Genome], params: NeatParams,
                    registry: InnovationRegistry, rng: np.random.Generator,
                    partition: SpeciesPartition) -> list[Genome]:
    """One reproduction phase: speciate, share fitness, cull, breed.

    Offspring quotas follow each species' total adjusted (shared) fitness;
    species champions of size > ``elitism_min_size`` carry over unchanged;
    species stale for ``staleness_limit`` generations are culled (the two
    best species survive if everything went stale).  The returned
    population has exactly ``population_size`` genomes.
    """
    registry.new_generation()
    partition.assign(genomes, params)
    species = partition.species

    for s in species:
        best = max(g.fitness for g in s.members)
        if best > s.best_fitness:
            s.best_fitness = best
            s.staleness = 0
        else:
            s.staleness += 1

    alive = [s for s in species if s.staleness < params.staleness_limit]
    if not alive:
        alive = sorted(species, key=lambda s: s.best_fitness, reverse=True)[:2]

    # explicit fitness sharing on fitness shifted to be non-negative
    # (homing scores can start negative)
    f_min = min(g.fitness for g in genomes)
    totals = []
    for s in alive:
        totals.append(sum((g.fitness - f_min) / len(s.members) for g in s.members))
    grand = sum(totals)

    pop_size = params.population_size
    if grand <= 0.0:
        shares = [len(s.members) / sum(len(x.members) for x in alive) * pop_size
                  for s in alive]
    else:
        shares = [t / grand * pop_size for t in totals]
    quotas = [int(math.floor(x)) for x in shares]
    remainders = sorted(range(len(alive)), key=lambda i: shares[i] - quotas[i], reverse=True)
    for i in remainders[: pop_size - sum(quotas)]:
        quotas[i] += 1

    offspring: list[Genome] = []
    for s, quota in zip(alive, quotas):
        if quota == 0:
            continue
        ranked = sorted(s.members, key=lambda g: g.fitness, reverse=True)
        slots = quota
        if len(ranked) > params.elitism_min_size:
            elite = ranked[0].copy()
            offspring.append(elite)
            slots -= 1
        n_parents = max(1, math.ceil(params.survival_threshold * len(ranked)))
        parents = ranked[:n_parents]
        for _ in range(slots):
            if len(parents) >= 2 and rng.random() < params.crossover_prob:
                i, j = rng.choice(len(parents), size=2, replace=False)
                a, b = parents[int(i)], parents[int(j)]
                if b.fitness > a.fitness:
                    a, b = b, a
                child = crossover(a, b, rng, params)
                child = mutate(child, params, registry, rng)
            else:
                parent = parents[int(rng.integers(len(parents)))]
                child = mutate(parent, params, registry, rng)
            child.fitness = 0.0
            offspring.append(child)

    # new representatives are drawn from this generation's members
    for s in alive:
        s.representative = s.members[int(rng.integers(len(s.members)))]
        s.members = []
    partition.species = alive

    if len(offspring) != pop_size:  # defensive: quotas must restore the size
        raise NeatError(f"population size drifted: {len(offspring)} != {pop_size}")
    return offspring


# -- phenotype ----------------------------------------------------------------


def steepened_sigmoid(x, slope: float = 4.9):
    return 1.0 / (1.0 + np.exp(np.clip(-slope * x, -60.0, 60.0)))


class NetworkPhenotype:
    """Evaluable network decoded from a genome, with persistent state.

    Decoding is deterministic: enabled connections are taken in innovation
    order and an edge is classified recurrent iff it would close a cycle
    among the feed-forward edges accepted before it (self-loops included).
    Activation state is a (batch, nodes) matrix so one decoded network can
    drive every robot of a trial batch simultaneously.
    """

    def __init__(self, genome: Genome, slope: float = 4.9):
        genome.validate()
        self.n_inputs = genome.n_inputs
        self.n_outputs = genome.n_outputs
        self.slope = slope

        node_ids = sorted(genome.nodes)
        self.index = {nid: k for k, nid in enumerate(node_ids)}
        self.n_nodes = len(node_ids)
        self.input_cols = [self.index[i] for i in genome.input_ids()]
        self.output_cols = [self.index[i] for i in genome.output_ids()]

        # split enabled edges into a feed-forward DAG plus recurrent links
        dag: dict[int, set[int]] = {nid: set() for nid in node_ids}
        ff_edges: list[ConnectionGene] = []
        rec_edges: list[ConnectionGene] = []
        for conn in sorted(genome.connections.values(), key=lambda c: c.innovation):
            if not conn.enabled:
                continue
            if conn.in_node == conn.out_node or self._reaches(dag, conn.out_node, conn.in_node):
                rec_edges.append(conn)
            else:
                dag[conn.in_node].add(conn.out_node)
                ff_edges.append(conn)

        order = self._topo_order(node_ids, ff_edges)
        ff_by_dst: dict[int, list[ConnectionGene]] = {}
        rec_by_dst: dict[int, list[ConnectionGene]] = {}
        for c in ff_edges:
            ff_by_dst.setdefault(c.out_node, []).append(c)
        for c in rec_edges:
            rec_by_dst.setdefault(c.out_node, []).append(c)

        self.plan: list[tuple[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for nid in order:
            if genome.nodes[nid].role == "input":
                continue
            ff = ff_by_dst.get(nid, [])
            rec = rec_by_dst.get(nid, [])
            self.plan.append((
                self.index[nid],
                np.array([self.index[c.in_node] for c in ff], dtype=int),
                np.array([c.weight for c in ff]),
                np.array([self.index[c.in_node] for c in rec], dtype=int),
                np.array([c.weight for c in rec]),
            ))
        self.values = np.zeros((1, self.n_nodes))

    @staticmethod
    def _reaches(dag: dict[int, set[int]], src: int, dst: int) -> bool:
        stack = [src]
        seen = set()
        while stack:
            n = stack.pop()
            if n == dst:
                return True
            if n in seen:
                continue
            seen.add(n)
            stack.extend(dag[n])
        return False

    @staticmethod
    def _topo_order(node_ids: list[int], ff_edges: list[ConnectionGene]) -> list[int]:
        indeg = {nid: 0 for nid in node_ids}
        succ: dict[int, list[int]] = {nid: [] for nid in node_ids}
        for c in ff_edges:
            indeg[c.out_node] += 1
            succ[c.in_node].append(c.out_node)
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            inserts = []
            for nxt in succ[nid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    inserts.append(nxt)
            for nxt in sorted(inserts):
                ready.append(nxt)
            ready.sort()
        if len(order) != len(node_ids):
            raise NeatError("feed-forward subgraph is not acyclic")
        return order

    def reset(self, batch_size: int = 1) -> None:
        """Zero all activations (call at trial start)."""
        self.values = np.zeros((batch_size, self.n_nodes))

    def grow_batch(self, batch_size: int) -> None:
        """Extend state with zero rows for robots added mid-run."""
        if batch_size > len(self.values):
            extra = np.zeros((batch_size - len(self.values), self.n_nodes))
            self.values = np.concatenate([self.values, extra])

    def activate_batch(self, inputs: np.ndarray) -> np.ndarray:
        """One synchronous pass for a (batch, n_inputs) input block."""
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != self.n_inputs:
            raise NeatError(
                f"expected (batch, {self.n_inputs}) inputs, got {inputs.shape}")
        if inputs.shape[0] != len(self.values):
            raise NeatError("batch size does not match network state; call reset()")
        prev = self.values
        new = np.zeros_like(prev)
        new[:, self.input_cols] = inputs
        for col, ff_src, ff_w, rec_src, rec_w in self.plan:
            # row-wise multiply+sum keeps results independent of batch size
            # (BLAS matmul kernels are not)
            pre = 0.0
            if len(ff_src):
                pre = (new[:, ff_src] * ff_w).sum(axis=1)
            if len(rec_src):
                pre = pre + (prev[:, rec_src] * rec_w).sum(axis=1)
            new[:, col] = steepened_sigmoid(pre, self.slope)
        self.values = new
        return new[:, self.output_cols]

    def activate(self, frame) -> tuple[float, ...]:
        """Single-robot step: one input frame in, outputs in [0, 1] out."""
        out = self.activate_batch(np.asarray(frame, dtype=float)[None, :])
        return tuple(float(v) for v in out[0])


def activate(net: NetworkPhenotype, inputs) -> tuple[float, float]:
    return net.activate(inputs)


# -- genome files --------------------------------------------------------------

GENOME_MAGIC = "aquaswarm-genome v1"


def save_genome(genome: Genome, path) -> None:
    """Write the line-oriented genome file (floats via repr, bit-exact)."""
    lines = [GENOME_MAGIC,
             f"inputs {genome.n_inputs}",
             f"outputs {genome.n_outputs}",
             f"fitness {float(genome.fitness)!r}"]
    for nid in sorted(genome.nodes):
        lines.append(f"node {nid} {genome.nodes[nid].role}")
    for innov in sorted(genome.connections):
        c = genome.connections[innov]
        lines.append(f"conn {c.in_node} {c.out_node} {float(c.weight)!r} "
                     f"{1 if c.enabled else 0} {c.innovation}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_genome(path) -> Genome:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != GENOME_MAGIC:
        raise NeatError(f"not a genome file: {path}")
    header = {}
    nodes: dict[int, NodeGene] = {}
    conns: dict[int, ConnectionGene] = {}
    for line in text[1:]:
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag in ("inputs", "outputs", "fitness"):
            header[tag] = parts[1]
        elif tag == "node":
            nid = int(parts[1])
            role = parts[2]
            if role not in NODE_ROLES:
                raise NeatError(f"bad node role {role!r}")
            nodes[nid] = NodeGene(nid, role)
        elif tag == "conn":
            innov = int(parts[5])
            conns[innov] = ConnectionGene(int(parts[1]), int(parts[2]),
                                          float(parts[3]), parts[4] == "1", innov)
        else:
            raise NeatError(f"unknown genome line {line!r}")
    g = Genome(nodes, conns, int(header["inputs"]), int(header["outputs"]),
               float(header["fitness"]))
    g.validate()
    return g
