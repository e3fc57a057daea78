"""
Module for the uniform mutation action on genotypes and the classification of
the edits it makes
"""

from dataclasses import dataclass
from enum import Enum

from genotype import Genotype, MotifGraph, default_ids


class EditClass(str, Enum):
    ADD_EDGE = "add"
    ALTER_EDGE = "alter"
    REMOVE_EDGE = "remove"
    NO_OP = "noop"


@dataclass(frozen=True)
class MutationTrace:
    """Cell [G(level)_motif]_ij changed from operation k_old to k_new"""

    level: int
    motif: int
    i: int
    j: int
    k_old: int
    k_new: int

    @property
    def edit_class(self):
        return classify_edit(self)

    def to_dict(self):
        return {
            "level": self.level,
            "motif": self.motif,
            "i": self.i,
            "j": self.j,
            "k_old": self.k_old,
            "k_new": self.k_new,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: int(data[key]) for key in ("level", "motif", "i", "j", "k_old", "k_new")})


def classify_edit(trace):
    if trace.k_new == trace.k_old:
        return EditClass.NO_OP
    if trace.k_old == 0:
        return EditClass.ADD_EDGE
    if trace.k_new == 0:
        return EditClass.REMOVE_EDGE
    return EditClass.ALTER_EDGE


def draw_mutation(spec, rng):
    """
    Draw one mutation target in the fixed step order.

    Level, motif, successor i, predecessor j and replacement k are each one
    uniform draw from rng. Flat specs skip the level draw.

    Returns:
        tuple: (level, motif, i, j, k_new)
    """
    level = 2 if spec.levels == 2 else rng.randint(2, spec.levels)
    motif = rng.randint(1, spec.motif_count(level))
    n = spec.node_count(level, motif)
    i = rng.randint(2, n)
    j = rng.randint(1, i - 1)
    k_new = rng.randint(0, spec.pool_size(level))
    return level, motif, i, j, k_new


def mutate(g, rng, genotype_id=None, ids=None):
    """
    Apply one uniform mutation.

    Args:
        g (Genotype): Valid parent genotype, left unmodified
        rng (random.Random): Seeded stream owned by the caller
        genotype_id (int): Id for the child; drawn from ids when omitted
        ids (IdCounter): Id source for the child

    Returns:
        tuple: (child Genotype, MutationTrace)
    """
    level, motif, i, j, k_new = draw_mutation(g.spec, rng)
    k_old = g.motif(level, motif).op(i, j)
    if genotype_id is None:
        genotype_id = (ids or default_ids).next_id()
    child = g.with_edge(level, motif, i, j, k_new, genotype_id)
    return child, MutationTrace(level=level, motif=motif, i=i, j=j, k_old=k_old, k_new=k_new)


def mutate_many(g, n, rng, genotype_id):
    """
    Apply n sequential mutations and build only the final genotype.

    Uses exactly the draws n calls to mutate would use, so the result is the
    same as chaining mutate n times.
    """
    work = [[motif.edge_map() for motif in row] for row in g.motifs]
    for _ in range(n):
        level, motif, i, j, k_new = draw_mutation(g.spec, rng)
        edges = work[level - 2][motif - 1]
        if k_new:
            edges[(i, j)] = k_new
        else:
            edges.pop((i, j), None)
    motifs = tuple(
        tuple(MotifGraph.from_edges(g.motifs[li][mi].node_count, edges) for mi, edges in enumerate(row))
        for li, row in enumerate(work)
    )
    return Genotype(spec=g.spec, motifs=motifs, id=genotype_id)
