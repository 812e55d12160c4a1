"""Exact genotype posteriors on pedigrees by junction-tree belief propagation.

The pedigree Bayesian network has one 4-state variable per individual and one
factor per individual: the Hardy-Weinberg prior for founders, the Mendelian
transmission table P(child | father, mother) otherwise. Evidence vectors are
multiplied into the individual's own factor. Loops (mating loops,
consanguinity) are handled by the clique tree, no loop breaking is needed.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .genetics import N_STATES, TRANSMISSION, GeneticModel, founder_prior
from .pedigree import Pedigree


class InconsistentEvidence(ValueError):
    """The evidence has probability zero under the genetic model."""

    def __init__(self, family_id: str | None = None):
        self.family_id = family_id
        super().__init__(f"evidence has zero probability in family {family_id}")


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    scope: tuple[int, ...]
    table: np.ndarray


def family_scopes(ped: Pedigree) -> list[tuple[int, ...]]:
    """Scope of each individual's own factor: ``(i,)`` or ``(i, father, mother)``."""
    return [
        (i,) if ped.father[i] < 0 else (i, int(ped.father[i]), int(ped.mother[i]))
        for i in range(len(ped))
    ]


def _make_factors(scopes, evidence: np.ndarray, gm: GeneticModel) -> list[Factor]:
    prior = founder_prior(gm)
    evidence = np.asarray(evidence, dtype=float)
    return [
        Factor(s, prior * evidence[i] if len(s) == 1 else TRANSMISSION * evidence[i][:, None, None])
        for i, s in enumerate(scopes)
    ]


def factor_graph(ped: Pedigree, evidence: np.ndarray, gm: GeneticModel) -> list[Factor]:
    """One factor per individual, evidence already multiplied in."""
    return _make_factors(family_scopes(ped), evidence, gm)


@dataclass(frozen=True)
class JunctionTree:
    family_id: str
    n_vars: int
    cliques: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    parent: tuple[int, ...]
    # cliques in inward (leaves-to-root) order; the root comes last
    schedule: tuple[int, ...]
    # clique index holding each individual's own factor
    factor_clique: tuple[int, ...]
    scopes: tuple[tuple[int, ...], ...]

    @property
    def root(self) -> int:
        return self.schedule[-1]

    def children(self, c: int) -> list[int]:
        return [k for k, p in enumerate(self.parent) if p == c]

    def separator(self, a: int, b: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.cliques[a]) & set(self.cliques[b])))

    @property
    def width(self) -> int:
        return max(len(c) for c in self.cliques) - 1


def moral_graph(ped: Pedigree) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(len(ped))]
    for scope in family_scopes(ped):
        for a in scope:
            for b in scope:
                if a != b:
                    adj[a].add(b)
    return adj


def _fill_in(adj: list[set[int]], v: int) -> int:
    nb = sorted(adj[v])
    return sum(1 for k, a in enumerate(nb) for b in nb[k + 1:] if b not in adj[a])


def triangulate(adj: list[set[int]]) -> list[tuple[int, ...]]:
    """Min-fill elimination (ties to the lowest index); returns maximal cliques."""
    adj = [set(s) for s in adj]
    alive = set(range(len(adj)))
    cliques: list[frozenset[int]] = []
    while alive:
        v = min(alive, key=lambda u: (_fill_in(adj, u), u))
        nb = adj[v]
        cliques.append(frozenset(nb | {v}))
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
        alive.discard(v)
        adj[v] = set()
    maximal = []
    for k, c in enumerate(cliques):
        if any(c < d or (c == d and j < k) for j, d in enumerate(cliques) if j != k):
            continue
        maximal.append(tuple(sorted(c)))
    return maximal


def _kruskal(cliques: Sequence[tuple[int, ...]]) -> list[tuple[int, int]]:
    n = len(cliques)
    sets = [set(c) for c in cliques]
    heap = [(-len(sets[a] & sets[b]), a, b) for a in range(n) for b in range(a + 1, n)]
    heapq.heapify(heap)
    comp = list(range(n))

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    edges = []
    while heap and len(edges) < n - 1:
        _, a, b = heapq.heappop(heap)
        ra, rb = find(a), find(b)
        if ra != rb:
            comp[ra] = rb
            edges.append((a, b))
    return edges


def check_running_intersection(cliques, edges) -> bool:
    n = len(cliques)
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    variables = set().union(*map(set, cliques)) if cliques else set()
    for v in variables:
        holders = {k for k, c in enumerate(cliques) if v in c}
        start = next(iter(holders))
        seen, stack = {start}, [start]
        while stack:
            x = stack.pop()
            for y in nbrs[x]:
                if y in holders and y not in seen:
                    seen.add(y)
                    stack.append(y)
        if seen != holders:
            return False
    return True


def build_junction_tree(ped: Pedigree, root: int = 0) -> JunctionTree:
    """Moralize, triangulate (min-fill), and join maximal cliques by a
    maximum-weight spanning tree on separator sizes."""
    scopes = family_scopes(ped)
    cliques = triangulate(moral_graph(ped))
    edges = _kruskal(cliques)
    if not check_running_intersection(cliques, edges):
        raise AssertionError("running intersection property violated")

    nbrs: list[list[int]] = [[] for _ in cliques]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    parent = [-1] * len(cliques)
    visit = [root]
    seen = {root}
    for c in visit:
        for d in sorted(nbrs[c]):
            if d not in seen:
                seen.add(d)
                parent[d] = c
                visit.append(d)
    schedule = tuple(reversed(visit))

    clique_sets = [set(c) for c in cliques]
    factor_clique = []
    for scope in scopes:
        s = set(scope)
        factor_clique.append(next(k for k, c in enumerate(clique_sets) if s <= c))
    return JunctionTree(
        family_id=ped.family_id,
        n_vars=len(ped),
        cliques=tuple(cliques),
        edges=tuple(edges),
        parent=tuple(parent),
        schedule=schedule,
        factor_clique=tuple(factor_clique),
        scopes=tuple(scopes),
    )


@dataclass(frozen=True)
class PosteriorTable:
    family_id: str
    individual_ids: tuple[str, ...]
    marginals: np.ndarray  # (n, 4), rows sum to one
    log_evidence: float

    @property
    def carrier_prob(self) -> np.ndarray:
        return 1.0 - self.marginals[:, 0]

    def __getitem__(self, individual_id: str) -> np.ndarray:
        return self.marginals[self.individual_ids.index(individual_id)]


def _contract(clique: tuple[int, ...], operands, out_vars: tuple[int, ...]) -> np.ndarray:
    """Multiply arrays over subsets of ``clique`` and sum out to ``out_vars``."""
    pos = {v: k for k, v in enumerate(clique)}
    args = []
    for vars_, arr in operands:
        args.append(arr)
        args.append([pos[v] for v in vars_])
    args.append([pos[v] for v in out_vars])
    return np.einsum(*args)


def _clique_potentials(jt: JunctionTree, factors: Sequence[Factor]) -> list[np.ndarray]:
    assigned: list[list[Factor]] = [[] for _ in jt.cliques]
    for i, f in enumerate(factors):
        assigned[jt.factor_clique[i]].append(f)
    pots = []
    for c, fs in zip(jt.cliques, assigned):
        ops = [(f.scope, f.table) for f in fs] + [(c, np.ones((N_STATES,) * len(c)))]
        pots.append(_contract(c, ops, c))
    return pots


def propagate(
    jt: JunctionTree,
    evidence: np.ndarray,
    gm: GeneticModel,
    individual_ids: Sequence[str] | None = None,
) -> PosteriorTable:
    """Inward pass to the root then outward pass; exact marginals."""
    evidence = np.asarray(evidence, dtype=float)
    if evidence.shape != (jt.n_vars, N_STATES):
        raise ValueError(f"evidence must have shape ({jt.n_vars}, 4)")
    pots = _clique_potentials(jt, _make_factors(jt.scopes, evidence, gm))
    cliques = jt.cliques
    children = [[] for _ in cliques]
    for c, p in enumerate(jt.parent):
        if p >= 0:
            children[p].append(c)
    sep = {c: jt.separator(c, p) for c, p in enumerate(jt.parent) if p >= 0}

    up: dict[int, np.ndarray] = {}
    log_z = 0.0
    for c in jt.schedule[:-1]:
        ops = [(cliques[c], pots[c])] + [(sep[k], up[k]) for k in children[c]]
        msg = _contract(cliques[c], ops, sep[c])
        s = msg.sum()
        if not s > 0:
            raise InconsistentEvidence(jt.family_id)
        up[c] = msg / s
        log_z += np.log(s)

    root = jt.root
    down: dict[int, np.ndarray] = {}
    beliefs: dict[int, np.ndarray] = {}
    for c in reversed(jt.schedule):
        incoming = [(sep[k], up[k]) for k in children[c]]
        if c != root:
            incoming.append((sep[c], down[c]))
        ops = [(cliques[c], pots[c])] + incoming
        belief = _contract(cliques[c], ops, cliques[c])
        total = belief.sum()
        if not total > 0:
            raise InconsistentEvidence(jt.family_id)
        if c == root:
            log_z += np.log(total)
        beliefs[c] = belief / total
        for k in children[c]:
            others = [(cliques[c], pots[c])] + [(sep[j], up[j]) for j in children[c] if j != k]
            if c != root:
                others.append((sep[c], down[c]))
            msg = _contract(cliques[c], others, sep[k])
            down[k] = msg / msg.sum()

    marg = np.empty((jt.n_vars, N_STATES))
    home = {}
    for k, c in enumerate(cliques):
        for v in c:
            if v not in home or len(c) < len(cliques[home[v]]):
                home[v] = k
    for v in range(jt.n_vars):
        k = home[v]
        m = _contract(cliques[k], [(cliques[k], beliefs[k])], (v,))
        marg[v] = m / m.sum()
    ids = tuple(individual_ids) if individual_ids is not None else tuple(str(i) for i in range(jt.n_vars))
    return PosteriorTable(jt.family_id, ids, marg, float(log_z))


def family_posteriors(ped: Pedigree, evidence: np.ndarray, gm: GeneticModel) -> PosteriorTable:
    return propagate(build_junction_tree(ped), evidence, gm, ped.ids)


def brute_force_marginals(
    ped: Pedigree, evidence: np.ndarray, gm: GeneticModel, max_size: int = 12
) -> PosteriorTable:
    """Marginals by materialising the full joint over all 4**n genotype vectors."""
    n = len(ped)
    if n > max_size:
        raise TooLarge(f"{n} individuals exceeds enumeration cap {max_size}")
    joint = np.ones((N_STATES,) * n)
    for f in factor_graph(ped, evidence, gm):
        shape = [1] * n
        order = np.argsort(f.scope)
        table = np.transpose(f.table, order)
        for v in f.scope:
            shape[v] = N_STATES
        joint *= table.reshape(shape)
    total = joint.sum()
    if not total > 0:
        raise InconsistentEvidence(ped.family_id)
    marg = np.empty((n, N_STATES))
    for v in range(n):
        marg[v] = joint.sum(axis=tuple(a for a in range(n) if a != v)) / total
    return PosteriorTable(ped.family_id, tuple(ped.ids), marg, float(np.log(total)))
