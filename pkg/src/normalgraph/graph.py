"""Normal-form factor graph structures.

Variables live on edges and carry a finite alphabet.  Three node kinds
connect them: source blocks emit a prior along one edge, SISO blocks relate
an input edge to an output edge through a row-stochastic matrix, and
diverters impose equality across replicas of the same variable.  Every edge
has at most one producing node (its tail) and one consuming node (its
head); an unoccupied endpoint makes the variable a terminal where evidence
can be injected.

Graphs are plain frozen dataclasses with value semantics.  A JSON file
format (see ``load_graph``/``save_graph``) mirrors the structure one to
one; matrices are row-major with rows indexed by the input symbol.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .messages import is_normalized, uniform

__all__ = [
    "GraphError",
    "UnknownVariable",
    "InvalidIndex",
    "SisoBlock",
    "SourceBlock",
    "DiverterNode",
    "GraphSpec",
    "build_projector",
    "build_expander",
    "validate",
    "ensure_valid",
    "split_variable",
    "graph_to_dict",
    "graph_from_dict",
    "load_graph",
    "save_graph",
    "graph_digest",
]

STOCHASTIC_ATOL = 1e-12


class GraphError(ValueError):
    """Structural problem in a graph definition."""


class UnknownVariable(GraphError):
    """A referenced variable name is not declared."""


class InvalidIndex(GraphError):
    """A component index is outside its valid range."""


def _frozen_array(values, shape_hint: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != len(shape_hint):
        raise GraphError(f"expected a {len(shape_hint)}-d array for {shape_hint}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SisoBlock:
    """Soft-input soft-output block: a conditional matrix between two edges.

    ``theta[l, m]`` is the probability of output symbol m given input
    symbol l, so every row is a distribution over the output alphabet.
    """

    name: str
    from_var: str
    to_var: str
    theta: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta, "lm"))

    @property
    def input_size(self) -> int:
        return self.theta.shape[0]

    @property
    def output_size(self) -> int:
        return self.theta.shape[1]


@dataclass(frozen=True)
class SourceBlock:
    """Terminal producer holding a prior distribution for one edge."""

    name: str
    variable: str
    prior: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "prior", _frozen_array(self.prior, "m"))


@dataclass(frozen=True)
class DiverterNode:
    """Equality constraint across replicas of one variable.

    ``inbound`` replicas arrive at the node (it consumes their forward
    flow), ``taps`` leave it.  The common case is one inbound edge fanned
    out to several taps; joins of several produced replicas, as appear
    around product-space variables, use several inbound edges.
    """

    inbound: tuple[str, ...]
    taps: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.inbound, str):
            object.__setattr__(self, "inbound", (self.inbound,))
        else:
            object.__setattr__(self, "inbound", tuple(self.inbound))
        object.__setattr__(self, "taps", tuple(self.taps))

    @property
    def edges(self) -> tuple[str, ...]:
        return self.inbound + self.taps

    @property
    def name(self) -> str:
        return "=" + self.inbound[0]


@dataclass(frozen=True)
class GraphSpec:
    """Immutable description of a normal-form factor graph."""

    variables: tuple[tuple[str, int], ...]
    sources: tuple[SourceBlock, ...] = ()
    blocks: tuple[SisoBlock, ...] = ()
    diverters: tuple[DiverterNode, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple((str(n), int(s)) for n, s in self.variables))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "diverters", tuple(self.diverters))

    @property
    def sizes(self) -> dict[str, int]:
        return dict(self.variables)

    def size_of(self, variable: str) -> int:
        for name, size in self.variables:
            if name == variable:
                return size
        raise UnknownVariable(f"unknown variable {variable!r}")

    def tails(self) -> dict[str, object]:
        """Producing node per variable (absent key: open tail)."""
        out: dict[str, object] = {}
        for src in self.sources:
            out.setdefault(src.variable, src)
        for blk in self.blocks:
            out.setdefault(blk.to_var, blk)
        for div in self.diverters:
            for tap in div.taps:
                out.setdefault(tap, div)
        return out

    def heads(self) -> dict[str, object]:
        """Consuming node per variable (absent key: open head)."""
        out: dict[str, object] = {}
        for blk in self.blocks:
            out.setdefault(blk.from_var, blk)
        for div in self.diverters:
            for edge in div.inbound:
                out.setdefault(edge, div)
        return out

    def terminals(self) -> tuple[str, ...]:
        """Variables with an unoccupied endpoint, in declaration order."""
        tails = self.tails()
        heads = self.heads()
        return tuple(n for n, _ in self.variables if n not in tails or n not in heads)

    def block(self, name: str) -> SisoBlock:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise GraphError(f"no block named {name!r}")

    def source(self, name: str) -> SourceBlock:
        for src in self.sources:
            if src.name == name:
                return src
        raise GraphError(f"no source named {name!r}")

    def trainable_units(self) -> tuple[object, ...]:
        """Sources and blocks flagged trainable, sources first."""
        units = [s for s in self.sources if s.trainable]
        units += [b for b in self.blocks if b.trainable]
        return tuple(units)

    def with_parameters(self, updates: Mapping[str, np.ndarray]) -> "GraphSpec":
        """New graph with the named blocks' matrices / priors replaced."""
        seen = set()
        sources = []
        for src in self.sources:
            if src.name in updates:
                sources.append(replace(src, prior=np.asarray(updates[src.name], dtype=np.float64)))
                seen.add(src.name)
            else:
                sources.append(src)
        blocks = []
        for blk in self.blocks:
            if blk.name in updates:
                blocks.append(replace(blk, theta=np.asarray(updates[blk.name], dtype=np.float64)))
                seen.add(blk.name)
            else:
                blocks.append(blk)
        missing = set(updates) - seen
        if missing:
            raise GraphError(f"no such blocks: {sorted(missing)}")
        return replace(self, sources=tuple(sources), blocks=tuple(blocks))


def build_projector(sizes: Sequence[int], j: int) -> np.ndarray:
    """Marginalization matrix from a product-space alphabet onto component j.

    The product alphabet enumerates tuples (x_1, ..., x_D) in row-major
    order (last component fastest).  Row (x_1, ..., x_D) of the result is
    the one-hot indicator of x_j, so the matrix is the Kronecker product of
    all-ones columns with one identity at position j.  ``j`` is 1-based to
    match the file format.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 1 or any(s < 1 for s in sizes):
        raise InvalidIndex("sizes must be a nonempty list of positive integers")
    if not 1 <= j <= len(sizes):
        raise InvalidIndex(f"component index {j} outside 1..{len(sizes)}")
    out = np.ones((1, 1), dtype=np.float64)
    for pos, size in enumerate(sizes, start=1):
        factor = np.eye(size) if pos == j else np.ones((size, 1))
        out = np.kron(out, factor)
    out.setflags(write=False)
    return out


def build_expander(sizes: Sequence[int], j: int) -> np.ndarray:
    """Uniform embedding of component j into the product-space alphabet.

    Exactly the transposed projector scaled by M_j / prod(sizes), so each
    row spreads its symbol's mass evenly over the compatible tuples.
    """
    projector = build_projector(sizes, j)
    scale = np.float64(sizes[j - 1]) / np.float64(math.prod(sizes))
    out = projector.T * scale
    out.setflags(write=False)
    return out


def validate(graph: GraphSpec) -> list[str]:
    """Collect structural violations; an empty list means the graph is sound.

    Checks names, endpoint occupancy, alphabet agreement, numeric
    stochasticity of matrices and priors, and acyclicity of the node
    adjacency induced by fully attached edges.
    """
    problems: list[str] = []
    names = [n for n, _ in graph.variables]
    sizes = dict(graph.variables)
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        problems.append(f"duplicate variable names: {dupes}")
    for name, size in graph.variables:
        if size < 1:
            problems.append(f"variable {name!r} has non-positive size {size}")

    node_names = [s.name for s in graph.sources] + [b.name for b in graph.blocks]
    if len(set(node_names)) != len(node_names):
        dupes = sorted({n for n in node_names if node_names.count(n) > 1})
        problems.append(f"duplicate node names: {dupes}")

    def known(var: str, owner: str) -> bool:
        if var not in sizes:
            problems.append(f"{owner} references unknown variable {var!r}")
            return False
        return True

    tails: dict[str, list[str]] = {n: [] for n in sizes}
    heads: dict[str, list[str]] = {n: [] for n in sizes}

    for src in graph.sources:
        if known(src.variable, f"source {src.name!r}"):
            tails[src.variable].append(src.name)
            if src.prior.shape != (sizes[src.variable],):
                problems.append(
                    f"source {src.name!r} prior length {src.prior.shape[0]} "
                    f"does not match variable size {sizes[src.variable]}"
                )
            elif not is_normalized(src.prior, STOCHASTIC_ATOL):
                problems.append(f"source {src.name!r} prior is not a distribution")

    for blk in graph.blocks:
        ok_from = known(blk.from_var, f"block {blk.name!r}")
        ok_to = known(blk.to_var, f"block {blk.name!r}")
        if ok_from:
            heads[blk.from_var].append(blk.name)
        if ok_to:
            tails[blk.to_var].append(blk.name)
        if ok_from and ok_to:
            want = (sizes[blk.from_var], sizes[blk.to_var])
            if blk.theta.shape != want:
                problems.append(
                    f"block {blk.name!r} matrix shape {blk.theta.shape} "
                    f"does not match variable sizes {want}"
                )
                continue
        if np.any(blk.theta < 0.0) or np.any(blk.theta > 1.0):
            problems.append(f"block {blk.name!r} matrix has entries outside [0, 1]")
        elif not is_normalized(blk.theta, STOCHASTIC_ATOL):
            problems.append(f"block {blk.name!r} matrix rows do not sum to 1")

    for div in graph.diverters:
        label = f"diverter {div.name!r}"
        if len(div.inbound) < 1 or len(div.taps) < 1:
            problems.append(f"{label} needs at least one inbound edge and one tap")
        attached = [v for v in div.edges if known(v, label)]
        if len(set(div.edges)) != len(div.edges):
            problems.append(f"{label} attaches the same variable twice")
        for edge in div.inbound:
            if edge in sizes:
                heads[edge].append(div.name)
        for tap in div.taps:
            if tap in sizes:
                tails[tap].append(div.name)
        replica_sizes = {sizes[v] for v in attached}
        if len(replica_sizes) > 1:
            problems.append(f"{label} replicas disagree on alphabet size")

    for var in sizes:
        if len(tails[var]) > 1:
            problems.append(f"variable {var!r} has multiple producers: {tails[var]}")
        if len(heads[var]) > 1:
            problems.append(f"variable {var!r} has multiple consumers: {heads[var]}")
        if not tails[var] and not heads[var]:
            problems.append(f"variable {var!r} dangles (no attachment at all)")

    # Cycle and parallel-edge detection over fully attached edges, treating
    # each node as a vertex of an undirected multigraph.
    node_ids: dict[str, int] = {}
    for node in [*graph.sources, *graph.blocks, *graph.diverters]:
        node_ids.setdefault(node.name, len(node_ids))
    parent = list(range(len(node_ids)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    seen_pairs: set[tuple[int, int]] = set()
    for var in sizes:
        if len(tails[var]) == 1 and len(heads[var]) == 1:
            a, b = node_ids[tails[var][0]], node_ids[heads[var][0]]
            if a == b:
                problems.append(f"variable {var!r} loops node {tails[var][0]!r} to itself")
                continue
            pair = (min(a, b), max(a, b))
            if pair in seen_pairs:
                problems.append(f"parallel edge between {tails[var][0]!r} and {heads[var][0]!r}")
            seen_pairs.add(pair)
            ra, rb = find(a), find(b)
            if ra == rb:
                problems.append(f"cycle through variable {var!r}")
            else:
                parent[ra] = rb

    return problems


def ensure_valid(graph: GraphSpec) -> GraphSpec:
    """Raise GraphError with all violations if the graph is unsound."""
    problems = validate(graph)
    if problems:
        raise GraphError("; ".join(problems))
    return graph


def _fresh_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    k = 2
    while f"{base}{k}" in taken:
        k += 1
    return f"{base}{k}"


def split_variable(graph: GraphSpec, variable: str) -> GraphSpec:
    """Insert a degree-3 equality node on ``variable``, exposing a new tap.

    The variable keeps its producer and now feeds a diverter.  One replica
    (``<variable>_cont``) takes over the old consumer, the other
    (``<variable>_tap``) is a fresh terminal for evidence injection or
    posterior readout.  Messages everywhere else are unchanged because the
    new tap contributes only a uniform backward factor.
    """
    size = graph.size_of(variable)
    for div in graph.diverters:
        if variable in div.taps:
            raise GraphError(f"variable {variable!r} is already a diverter tap")
    names = [n for n, _ in graph.variables]
    cont = _fresh_name(f"{variable}_cont", names)
    tap = _fresh_name(f"{variable}_tap", names + [cont])

    consumer = graph.heads().get(variable)
    variables = list(graph.variables) + [(cont, size), (tap, size)]
    blocks = list(graph.blocks)
    diverters = list(graph.diverters)
    if consumer is not None:
        if isinstance(consumer, SisoBlock):
            idx = blocks.index(consumer)
            blocks[idx] = replace(consumer, from_var=cont)
        else:
            idx = diverters.index(consumer)
            inbound = tuple(cont if v == variable else v for v in consumer.inbound)
            diverters[idx] = replace(consumer, inbound=inbound)
    diverters.append(DiverterNode(inbound=(variable,), taps=(cont, tap)))
    return replace(
        graph,
        variables=tuple(variables),
        blocks=tuple(blocks),
        diverters=tuple(diverters),
    )


def _matrix_from_format(entry, rows: int, cols: int, owner: str) -> tuple[np.ndarray, bool]:
    """Decode a matrix field; returns (matrix, came_from_builder)."""
    if entry == "uniform":
        return np.full((rows, cols), 1.0 / cols), False
    if isinstance(entry, Mapping):
        builder = entry.get("builder")
        if builder not in ("expander", "projector"):
            raise GraphError(f"{owner}: unknown builder {builder!r}")
        sizes = entry.get("sizes")
        j = entry.get("j")
        if not isinstance(sizes, (list, tuple)) or not isinstance(j, int):
            raise GraphError(f"{owner}: builder needs integer list 'sizes' and integer 'j'")
        fn = build_expander if builder == "expander" else build_projector
        return fn(sizes, j), True
    return np.array(entry, dtype=np.float64), False


def graph_from_dict(data: Mapping) -> GraphSpec:
    """Build a GraphSpec from the JSON file structure."""
    try:
        variables = tuple((v["name"], int(v["size"])) for v in data.get("variables", []))
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed variables section: {exc}") from exc
    sizes = dict(variables)

    sources = []
    for entry in data.get("sources", []):
        var = entry["variable"]
        if var not in sizes:
            raise UnknownVariable(f"source {entry.get('name')!r} references unknown variable {var!r}")
        prior = entry.get("prior", "uniform")
        prior_arr = uniform(sizes[var]) if prior == "uniform" else np.array(prior, dtype=np.float64)
        sources.append(
            SourceBlock(
                name=entry["name"],
                variable=var,
                prior=prior_arr,
                trainable=bool(entry.get("trainable", True)),
            )
        )

    blocks = []
    for entry in data.get("blocks", []):
        frm, to = entry["from"], entry["to"]
        for var in (frm, to):
            if var not in sizes:
                raise UnknownVariable(f"block {entry.get('name')!r} references unknown variable {var!r}")
        theta, from_builder = _matrix_from_format(
            entry.get("matrix", "uniform"), sizes[frm], sizes[to], f"block {entry.get('name')!r}"
        )
        trainable = entry.get("trainable")
        if from_builder:
            # Structure-encoding matrices are constants of the model.
            if trainable:
                raise GraphError(f"block {entry['name']!r}: builder blocks cannot be trainable")
            trainable = False
        elif trainable is None:
            trainable = True
        blocks.append(
            SisoBlock(
                name=entry["name"],
                from_var=frm,
                to_var=to,
                theta=theta,
                trainable=bool(trainable),
            )
        )

    diverters = []
    for entry in data.get("diverters", []):
        inbound = entry["variable"]
        if isinstance(inbound, str):
            inbound = (inbound,)
        diverters.append(DiverterNode(inbound=tuple(inbound), taps=tuple(entry["taps"])))

    return GraphSpec(
        variables=variables,
        sources=tuple(sources),
        blocks=tuple(blocks),
        diverters=tuple(diverters),
    )


def graph_to_dict(graph: GraphSpec) -> dict:
    """JSON-ready structure; matrices are materialized row-major lists."""
    data: dict = {
        "variables": [{"name": n, "size": s} for n, s in graph.variables],
        "sources": [
            {
                "name": s.name,
                "variable": s.variable,
                "prior": [float(x) for x in s.prior],
                "trainable": s.trainable,
            }
            for s in graph.sources
        ],
        "blocks": [
            {
                "name": b.name,
                "from": b.from_var,
                "to": b.to_var,
                "matrix": [[float(x) for x in row] for row in b.theta],
                "trainable": b.trainable,
            }
            for b in graph.blocks
        ],
        "diverters": [
            {
                "variable": d.inbound[0] if len(d.inbound) == 1 else list(d.inbound),
                "taps": list(d.taps),
            }
            for d in graph.diverters
        ],
    }
    return data


def load_graph(path) -> GraphSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return ensure_valid(graph_from_dict(data))


def save_graph(graph: GraphSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(graph), fh, indent=2)
        fh.write("\n")


def graph_digest(graph: GraphSpec) -> str:
    """Short stable fingerprint of the graph's structure and parameters."""
    canon = json.dumps(graph_to_dict(graph), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
