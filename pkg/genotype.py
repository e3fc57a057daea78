"""
Module for defining, validating and serializing flat and hierarchical genotypes
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from enum import IntEnum

from config import GENOTYPE_FORMAT_VERSION
from exceptions import InvalidGenotype, ParseError

logger = logging.getLogger(__name__)


class PrimitiveOp(IntEnum):
    """Level-1 operations; NONE marks an absent edge"""

    NONE = 0
    IDENTITY = 1
    CONV1X1 = 2
    DEPTHWISE_CONV3X3 = 3
    SEPARABLE_CONV3X3 = 4
    MAX_POOL3X3 = 5
    AVG_POOL3X3 = 6

    @property
    def label(self):
        return OP_LABELS[self]


OP_LABELS = {
    PrimitiveOp.NONE: "none",
    PrimitiveOp.IDENTITY: "identity",
    PrimitiveOp.CONV1X1: "1 × 1",
    PrimitiveOp.DEPTHWISE_CONV3X3: "3 × 3 depthwise",
    PrimitiveOp.SEPARABLE_CONV3X3: "3 × 3 separable",
    PrimitiveOp.MAX_POOL3X3: "max-pooling",
    PrimitiveOp.AVG_POOL3X3: "avg-pooling",
}

LEVEL1_OPS = tuple(op for op in PrimitiveOp if op is not PrimitiveOp.NONE)

# Index of the identity-like operation at every level (identity primitive at
# level 2, motif 1 of the level below otherwise)
IDENTITY_INDEX = 1


class IdCounter:
    """Thread-safe monotone genotype id source scoped to one search run"""

    def __init__(self, start=1):
        self._next = start
        self._lock = threading.Lock()

    def next_id(self):
        with self._lock:
            value = self._next
            self._next += 1
            return value

    def observe(self, used_id):
        """Make sure later ids never collide with an id read from disk"""
        with self._lock:
            if used_id >= self._next:
                self._next = used_id + 1

    @property
    def peek(self):
        with self._lock:
            return self._next


default_ids = IdCounter()


@dataclass(frozen=True)
class MotifGraph:
    """
    Adjacency of one motif.

    Edges are stored as (i, j, k) triples sorted by (i, j): node j feeds node i
    through operation k of the level below. Entries with k = 0 are never stored,
    so an absent edge and an explicit none edge are the same state.
    """

    node_count: int
    edges: tuple = ()

    @classmethod
    def from_edges(cls, node_count, edges):
        """
        Build a motif from a {(i, j): k} mapping or an iterable of (i, j, k) triples
        """
        if isinstance(edges, dict):
            triples = [(i, j, k) for (i, j), k in edges.items()]
        else:
            triples = list(edges)
        normalized = sorted((int(i), int(j), int(k)) for i, j, k in triples if int(k) != 0)
        return cls(node_count=int(node_count), edges=tuple(normalized))

    @classmethod
    def chain(cls, node_count, op_index):
        return cls.from_edges(node_count, [(i + 1, i, op_index) for i in range(1, node_count)])

    def op(self, i, j):
        for ei, ej, k in self.edges:
            if ei == i and ej == j:
                return k
        return 0

    def edge_map(self):
        return {(i, j): k for i, j, k in self.edges}

    def with_edge(self, i, j, k):
        edges = self.edge_map()
        edges[(i, j)] = k
        return MotifGraph.from_edges(self.node_count, edges)


@dataclass(frozen=True)
class HierarchySpec:
    """
    Shape of a genotype: L levels, M_l motifs per level and node counts.

    motif_counts lists M_1..M_L; node_counts lists, for each level 2..L, one
    node count per motif at that level.
    """

    levels: int
    motif_counts: tuple
    node_counts: tuple
    channels: int = 16

    @classmethod
    def from_dict(cls, data):
        return cls(
            levels=int(data["levels"]),
            motif_counts=tuple(int(m) for m in data["motif_counts"]),
            node_counts=tuple(tuple(int(n) for n in level) for level in data["node_counts"]),
            channels=int(data.get("channels", 16)),
        )

    @classmethod
    def flat(cls, nodes, channels=16):
        return cls(levels=2, motif_counts=(len(LEVEL1_OPS), 1), node_counts=((nodes,),), channels=channels)

    def to_dict(self):
        return {
            "levels": self.levels,
            "channels": self.channels,
            "motif_counts": list(self.motif_counts),
            "node_counts": [list(level) for level in self.node_counts],
        }

    @property
    def is_flat(self):
        return self.levels == 2

    def motif_count(self, level):
        return self.motif_counts[level - 1]

    def node_count(self, level, motif):
        return self.node_counts[level - 2][motif - 1]

    def pool_size(self, level):
        """Largest legal operation index for edges of a level-`level` motif"""
        return self.motif_counts[level - 2]

    def problems(self):
        """List internal inconsistencies of this hierarchy description"""
        found = []
        if self.levels < 2:
            found.append(f"levels must be >= 2, got {self.levels}")
            return found
        if len(self.motif_counts) != self.levels:
            found.append(f"motif_counts has {len(self.motif_counts)} entries for {self.levels} levels")
            return found
        if self.motif_counts[0] != len(LEVEL1_OPS):
            found.append(f"level 1 must hold the {len(LEVEL1_OPS)} primitives, got {self.motif_counts[0]}")
        if self.motif_counts[-1] != 1:
            found.append(f"top level must hold exactly one motif, got {self.motif_counts[-1]}")
        if any(m < 1 for m in self.motif_counts):
            found.append("every level needs at least one motif")
        if len(self.node_counts) != self.levels - 1:
            found.append(f"node_counts has {len(self.node_counts)} levels, expected {self.levels - 1}")
        else:
            for level, counts in enumerate(self.node_counts, start=2):
                if len(counts) != self.motif_counts[level - 1]:
                    found.append(f"level {level} lists {len(counts)} node counts for {self.motif_counts[level - 1]} motifs")
                if any(n < 2 for n in counts):
                    found.append(f"level {level} has a motif with fewer than 2 nodes")
        if self.channels < 1:
            found.append(f"channels must be >= 1, got {self.channels}")
        return found


@dataclass(frozen=True)
class Genotype:
    """
    Motif graphs of every non-primitive level.

    motifs[l - 2][m - 1] is motif m of level l. The id does not take part in
    equality, so two genotypes compare equal when they are structurally equal.
    """

    spec: HierarchySpec
    motifs: tuple
    id: int = field(default=0, compare=False)

    def motif(self, level, motif):
        return self.motifs[level - 2][motif - 1]

    def with_edge(self, level, motif, i, j, k, genotype_id):
        """Return a copy with one cell of one motif replaced"""
        levels = list(self.motifs)
        row = list(levels[level - 2])
        row[motif - 1] = row[motif - 1].with_edge(i, j, k)
        levels[level - 2] = tuple(row)
        return Genotype(spec=self.spec, motifs=tuple(levels), id=genotype_id)

    def edge_count(self):
        return sum(len(m.edges) for level in self.motifs for m in level)


@dataclass(frozen=True)
class Violation:
    message: str
    level: int = None
    motif: int = None
    edge: tuple = None

    def __str__(self):
        where = []
        if self.level is not None:
            where.append(f"level {self.level}")
        if self.motif is not None:
            where.append(f"motif {self.motif}")
        if self.edge is not None:
            where.append(f"edge {self.edge}")
        return f"{self.message} ({', '.join(where)})" if where else self.message


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations


def validate(g):
    """
    Check every genotype invariant.

    Args:
        g (Genotype): Genotype to check

    Returns:
        ValidationReport: ok when no violation was found, otherwise every
        violation with its (level, motif, edge) coordinates
    """
    violations = [Violation(problem) for problem in g.spec.problems()]
    if violations:
        return ValidationReport(tuple(violations))

    spec = g.spec
    if len(g.motifs) != spec.levels - 1:
        violations.append(Violation(f"shape mismatch: {len(g.motifs)} motif levels, expected {spec.levels - 1}"))

    for level, row in enumerate(g.motifs, start=2):
        if level > spec.levels:
            break
        expected_motifs = spec.motif_count(level)
        if len(row) != expected_motifs:
            violations.append(Violation(
                f"shape mismatch: {len(row)} motifs, expected {expected_motifs}", level=level))
        pool = spec.pool_size(level)
        for m, motif in enumerate(row, start=1):
            if m <= expected_motifs:
                expected_nodes = spec.node_count(level, m)
                if motif.node_count != expected_nodes:
                    violations.append(Violation(
                        f"shape mismatch: {motif.node_count} nodes, expected {expected_nodes}",
                        level=level, motif=m))
            seen = set()
            for i, j, k in motif.edges:
                edge = (i, j)
                if edge in seen:
                    violations.append(Violation("duplicate edge", level=level, motif=m, edge=edge))
                seen.add(edge)
                if j >= i:
                    violations.append(Violation("acyclicity violation", level=level, motif=m, edge=edge))
                elif j < 1 or i > motif.node_count:
                    violations.append(Violation("node index out of range", level=level, motif=m, edge=edge))
                if k < 0 or k > pool:
                    violations.append(Violation(
                        f"operation index out of range: {k} not in 0..{pool}", level=level, motif=m, edge=edge))
    return ValidationReport(tuple(violations))


def trivial_genotype(spec, genotype_id=None, ids=None):
    """
    Build the identity-chain genotype of a spec.

    Every motif chains its nodes 1 -> 2 -> ... -> n with operation index 1: the
    identity primitive at level 2 and, above it, motif 1 of the level below,
    which is itself an identity chain.
    """
    if genotype_id is None:
        genotype_id = (ids or default_ids).next_id()
    motifs = tuple(
        tuple(MotifGraph.chain(n, IDENTITY_INDEX) for n in spec.node_counts[level - 2])
        for level in range(2, spec.levels + 1)
    )
    return Genotype(spec=spec, motifs=motifs, id=genotype_id)


def _format_list(items, indent):
    if not items:
        return "[]"
    pad = " " * indent
    body = ",\n".join(f"{pad}  {item}" for item in items)
    return f"[\n{body}\n{pad}]"


def encode(g):
    """
    Serialize a genotype into its canonical document.

    The document is JSON with one edge triple [i, j, k] per line, edges in
    ascending (level, motif, i, j) order and none edges omitted.

    Raises:
        InvalidGenotype: if validate(g) reports violations
    """
    report = validate(g)
    if not report.ok:
        raise InvalidGenotype(report)

    spec = g.spec
    levels = []
    for row in g.motifs:
        motif_texts = [
            _format_list([f"[{i}, {j}, {k}]" for i, j, k in motif.edges], 6)
            for motif in row
        ]
        levels.append(_format_list(motif_texts, 4))

    lines = [
        "{",
        f'  "version": {GENOTYPE_FORMAT_VERSION},',
        f'  "id": {g.id},',
        f'  "levels": {spec.levels},',
        f'  "channels": {spec.channels},',
        f'  "motif_counts": {json.dumps(list(spec.motif_counts))},',
        f'  "node_counts": {json.dumps([list(c) for c in spec.node_counts])},',
        f'  "motifs": {_format_list(levels, 2)}',
        "}",
    ]
    return "\n".join(lines) + "\n"


_DOCUMENT_KEYS = {"version", "id", "levels", "channels", "motif_counts", "node_counts", "motifs"}


def _require_int(value, what):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{what} must be an integer, got {value!r}")
    return value


def _require_list(value, what):
    if not isinstance(value, list):
        raise ParseError(f"{what} must be a list, got {type(value).__name__}")
    return value


def from_document(data, ids=None):
    """Build a genotype from an already-parsed document dictionary"""
    if not isinstance(data, dict):
        raise ParseError("genotype document must be an object")
    unknown = set(data) - _DOCUMENT_KEYS
    if unknown:
        raise ParseError(f"unknown keys in genotype document: {sorted(unknown)}")
    missing = (_DOCUMENT_KEYS - {"id"}) - set(data)
    if missing:
        raise ParseError(f"missing keys in genotype document: {sorted(missing)}")
    if data["version"] != GENOTYPE_FORMAT_VERSION:
        raise ParseError(f"unsupported genotype document version {data['version']!r}")

    levels = _require_int(data["levels"], "levels")
    channels = _require_int(data["channels"], "channels")
    motif_counts = tuple(_require_int(m, "motif_counts entry") for m in _require_list(data["motif_counts"], "motif_counts"))
    node_counts = tuple(
        tuple(_require_int(n, "node_counts entry") for n in _require_list(level, "node_counts level"))
        for level in _require_list(data["node_counts"], "node_counts")
    )
    spec = HierarchySpec(levels=levels, motif_counts=motif_counts, node_counts=node_counts, channels=channels)

    rows = []
    for li, level_doc in enumerate(_require_list(data["motifs"], "motifs")):
        row = []
        for mi, motif_doc in enumerate(_require_list(level_doc, f"motifs[{li}]")):
            triples = []
            seen = set()
            for triple in _require_list(motif_doc, f"motifs[{li}][{mi}]"):
                if not isinstance(triple, list) or len(triple) != 3:
                    raise ParseError(f"edge entries must be [i, j, k] triples, got {triple!r}")
                i, j, k = (_require_int(v, "edge component") for v in triple)
                if (i, j) in seen:
                    raise ParseError(f"duplicate edge ({i}, {j}) in level {li + 2} motif {mi + 1}")
                seen.add((i, j))
                triples.append((i, j, k))
            try:
                node_count = node_counts[li][mi]
            except IndexError:
                node_count = max([max(i, j) for i, j, _ in triples] + [2])
            row.append(MotifGraph.from_edges(node_count, triples))
        rows.append(tuple(row))

    if "id" in data:
        genotype_id = _require_int(data["id"], "id")
        (ids or default_ids).observe(genotype_id)
    else:
        genotype_id = (ids or default_ids).next_id()

    g = Genotype(spec=spec, motifs=tuple(rows), id=genotype_id)
    report = validate(g)
    if not report.ok:
        raise InvalidGenotype(report)
    return g


def decode(text, ids=None):
    """
    Parse a canonical genotype document.

    Args:
        text (str): Document produced by encode (or written by hand)
        ids (IdCounter): Id source used when the document carries no id

    Returns:
        Genotype: Decoded genotype

    Raises:
        ParseError: if the document is malformed
        InvalidGenotype: if it is well-formed but violates the invariants
    """
    try:
        data = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise ParseError(f"genotype document is not valid JSON: {str(e)}") from e
    return from_document(data, ids=ids)
