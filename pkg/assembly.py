"""
Module for expanding genotypes into flat primitive-operation graphs, inferring
their shapes and parameter counts, and exporting them as DOT text
"""

import heapq
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass

from graphviz import Digraph

from exceptions import DegenerateArchitecture, InvalidGenotype
from genotype import Genotype, HierarchySpec, MotifGraph, PrimitiveOp, validate

logger = logging.getLogger(__name__)

# Ops whose output width is the cell channel constant C
_WIDTH_SETTING_OPS = (PrimitiveOp.CONV1X1, PrimitiveOp.SEPARABLE_CONV3X3)


@dataclass(frozen=True)
class TensorShape:
    batch: int
    channels: int
    height: int
    width: int

    def with_channels(self, channels):
        return TensorShape(self.batch, channels, self.height, self.width)

    def as_tuple(self):
        return (self.batch, self.channels, self.height, self.width)


@dataclass(frozen=True)
class FlatNode:
    """A feature map of the flattened cell; channels assume a C-channel cell input"""

    id: int
    channels: int
    provenance: tuple = ()


@dataclass(frozen=True)
class FlatEdge:
    """
    One primitive operation between two nodes.

    `restores` is set only on the 1x1 convolution that follows an inlined
    level-2 motif; it names the motif's input node, whose channel count the
    convolution outputs.
    """

    src: int
    dst: int
    op: PrimitiveOp
    restores: int = None
    provenance: tuple = ()


@dataclass(frozen=True)
class FlatArchitecture:
    """Pruned single-source single-sink DAG; nodes are listed in topological order"""

    nodes: tuple
    edges: tuple
    source: int
    sink: int

    def node_ids(self):
        return [node.id for node in self.nodes]

    def incoming(self, node_id):
        return [e for e in self.edges if e.dst == node_id]

    def outgoing(self, node_id):
        return [e for e in self.edges if e.src == node_id]

    def op_counts(self):
        return Counter(e.op for e in self.edges)

    def depth(self):
        """Number of edges on the longest source-to-sink path"""
        longest = {self.source: 0}
        for node_id in self.node_ids():
            for e in self.incoming(node_id):
                longest[node_id] = max(longest.get(node_id, 0), longest[e.src] + 1)
        return longest[self.sink]


class _GraphBuilder:
    def __init__(self):
        self.provenance = []
        self.edges = []

    def new_node(self, provenance):
        self.provenance.append(provenance)
        return len(self.provenance) - 1

    def add_edge(self, src, dst, op, restores=None, provenance=()):
        self.edges.append(FlatEdge(src=src, dst=dst, op=op, restores=restores, provenance=provenance))


def _expand(g, builder, level, motif_index, src, dst, path):
    motif = g.motif(level, motif_index)
    here = path + ((level, motif_index),)
    nodes = {1: src, motif.node_count: dst}
    for v in range(2, motif.node_count):
        nodes[v] = builder.new_node(here)

    for i, j, k in motif.edges:
        a, b = nodes[j], nodes[i]
        if level == 2:
            builder.add_edge(a, b, PrimitiveOp(k), provenance=here)
        elif level == 3:
            # Level-2 motifs are followed by a 1x1 convolution back to the
            # motif's input width
            inner = here + ((2, k),)
            mid = builder.new_node(inner)
            _expand(g, builder, 2, k, a, mid, here)
            builder.add_edge(mid, b, PrimitiveOp.CONV1X1, restores=a, provenance=inner)
        else:
            _expand(g, builder, level - 1, k, a, b, here)


def _reachable(start, adjacency):
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _topological_order(kept, edges):
    indegree = {v: 0 for v in kept}
    successors = defaultdict(list)
    for e in edges:
        indegree[e.dst] += 1
        successors[e.src].append(e.dst)
    ready = [v for v, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in successors[v]:
            indegree[w] -= 1
            if indegree[w] == 0:
                heapq.heappush(ready, w)
    return order


def edge_output_channels(edge, channels, c):
    if edge.restores is not None:
        return channels[edge.restores]
    if edge.op in _WIDTH_SETTING_OPS:
        return c
    return channels[edge.src]


def propagate_channels(a, in_channels, c):
    channels = {a.source: in_channels}
    incoming = defaultdict(list)
    for e in a.edges:
        incoming[e.dst].append(e)
    for node_id in a.node_ids():
        if node_id == a.source:
            continue
        channels[node_id] = sum(edge_output_channels(e, channels, c) for e in incoming[node_id])
    return channels


def flatten(g):
    """
    Recursively inline every motif of a genotype into one primitive DAG.

    Each edge of a level-l motif labeled with motif k becomes a fresh copy of
    that motif's expansion between the edge's endpoints. Multi-input nodes merge
    by depthwise concatenation. Nodes that are unreachable from the source or
    cannot reach the sink are pruned.

    Args:
        g (Genotype): Valid genotype

    Returns:
        FlatArchitecture: Pruned graph with nodes renumbered 1..n in topological order

    Raises:
        InvalidGenotype: if g does not validate
        DegenerateArchitecture: if no source-to-sink path survives
    """
    report = validate(g)
    if not report.ok:
        raise InvalidGenotype(report)

    top = ((g.spec.levels, 1),)
    builder = _GraphBuilder()
    src = builder.new_node(top)
    dst = builder.new_node(top)
    _expand(g, builder, g.spec.levels, 1, src, dst, ())

    forward = defaultdict(list)
    backward = defaultdict(list)
    for e in builder.edges:
        forward[e.src].append(e.dst)
        backward[e.dst].append(e.src)
    from_source = _reachable(src, forward)
    if dst not in from_source:
        raise DegenerateArchitecture(f"genotype {g.id} has no path from the cell input to its output")
    kept = from_source & _reachable(dst, backward)
    edges = [e for e in builder.edges if e.src in kept and e.dst in kept]

    order = _topological_order(kept, edges)
    renumber = {old: new for new, old in enumerate(order, start=1)}
    flat_edges = sorted(
        (
            FlatEdge(
                src=renumber[e.src],
                dst=renumber[e.dst],
                op=e.op,
                restores=None if e.restores is None else renumber[e.restores],
                provenance=e.provenance,
            )
            for e in edges
        ),
        key=lambda e: (e.src, e.dst, int(e.op)),
    )
    skeleton = FlatArchitecture(
        nodes=tuple(FlatNode(id=renumber[v], channels=0, provenance=builder.provenance[v]) for v in order),
        edges=tuple(flat_edges),
        source=renumber[src],
        sink=renumber[dst],
    )
    c = g.spec.channels
    channels = propagate_channels(skeleton, c, c)
    return FlatArchitecture(
        nodes=tuple(
            FlatNode(id=node.id, channels=channels[node.id], provenance=node.provenance)
            for node in skeleton.nodes
        ),
        edges=skeleton.edges,
        source=skeleton.source,
        sink=skeleton.sink,
    )


def infer_shapes(a, input_shape, c):
    """
    Infer the feature-map shape at every node.

    All primitives are stride 1 and padded, so height and width never change.
    1x1 and separable convolutions output c channels (the trailing 1x1 after a
    level-2 motif outputs its motif's input width), the other primitives keep
    their input width, and a node's width is the sum over its incoming edges.

    Args:
        a (FlatArchitecture): Flattened cell
        input_shape (TensorShape): Shape of the cell input
        c (int): Channel constant C

    Returns:
        dict: Node id -> TensorShape
    """
    channels = propagate_channels(a, input_shape.channels, c)
    return {node_id: input_shape.with_channels(width) for node_id, width in channels.items()}


def edge_parameters(op, c_in, c_out):
    """
    Learnable parameters of one primitive.

    Convolutions are bias-free and followed by a normalization layer with a
    per-channel scale and shift.
    """
    if op == PrimitiveOp.CONV1X1:
        return c_in * c_out + 2 * c_out
    if op == PrimitiveOp.SEPARABLE_CONV3X3:
        return 9 * c_in + c_in * c_out + 2 * c_out
    if op == PrimitiveOp.DEPTHWISE_CONV3X3:
        return 9 * c_in + 2 * c_in
    return 0


def count_parameters(a, input_shape, c):
    """Sum of per-edge parameter counts under the inferred channel widths"""
    channels = propagate_channels(a, input_shape.channels, c)
    return sum(
        edge_parameters(e.op, channels[e.src], edge_output_channels(e, channels, c))
        for e in a.edges
    )


def as_flat_genotype(a, channels=16, genotype_id=0):
    """
    Convert a flattened graph back into a flat (two-level) genotype.

    Only graphs without trailing 1x1 convolutions and without parallel edges
    have a flat encoding.
    """
    if any(e.restores is not None for e in a.edges):
        raise ValueError("architecture contains motif-trailing convolutions and has no flat encoding")
    position = {node_id: index for index, node_id in enumerate(a.node_ids(), start=1)}
    edges = {}
    for e in a.edges:
        key = (position[e.dst], position[e.src])
        if key in edges:
            raise ValueError(f"parallel edges between nodes {e.src} and {e.dst}")
        edges[key] = int(e.op)
    spec = HierarchySpec.flat(len(a.nodes), channels=channels)
    motif = MotifGraph.from_edges(len(a.nodes), edges)
    return Genotype(spec=spec, motifs=((motif,),), id=genotype_id)


def _motif_graph_name(level, motif_index, levels):
    if level == levels:
        return "Cell"
    if level == 2:
        return f"Motif {motif_index}"
    return f"Level {level} Motif {motif_index}"


def _edge_label(level, k, levels):
    if level == 2:
        return PrimitiveOp(k).label
    return _motif_graph_name(level - 1, k, levels)


def _motif_digraph(name, motif, label_for):
    graph = Digraph(name=name)
    graph.attr(rankdir="LR")
    for v in range(1, motif.node_count + 1):
        graph.node(str(v))
    for i, j, k in motif.edges:
        graph.edge(str(j), str(i), label=label_for(k))
    return graph


def dot_graphs(obj):
    """
    Build one Digraph per motif (plus the cell) of a genotype, or a single
    graph for a flattened architecture.

    Returns:
        list: (name, Digraph) pairs in a fixed order
    """
    if isinstance(obj, FlatArchitecture):
        graph = Digraph(name="Architecture")
        graph.attr(rankdir="LR")
        for node in obj.nodes:
            graph.node(str(node.id), label=f"{node.id} ({node.channels})")
        for e in obj.edges:
            graph.edge(str(e.src), str(e.dst), label=e.op.label)
        return [("Architecture", graph)]

    levels = obj.spec.levels
    graphs = []
    for level in range(2, levels + 1):
        for m, motif in enumerate(obj.motifs[level - 2], start=1):
            name = _motif_graph_name(level, m, levels)
            graphs.append((name, _motif_digraph(name, motif, lambda k, lv=level: _edge_label(lv, k, levels))))
    return graphs


def to_dot(obj):
    """
    Render a genotype or flattened architecture as DOT text.

    Args:
        obj (Genotype | FlatArchitecture): Object to render

    Returns:
        str: Concatenated digraph descriptions, deterministic for a given input
    """
    return "\n".join(graph.source for _, graph in dot_graphs(obj))
