import random
from collections import Counter, deque

import pytest

from genotype import HierarchySpec, trivial_genotype, validate
from mutation import EditClass, MutationTrace, classify_edit, mutate, mutate_many
from tests.helpers import random_genotype

# 0.99 quantile of the chi-square distribution with 45 degrees of freedom
CHI2_CRITICAL_DF45 = 69.957


class ScriptedRng:
    """Stand-in stream returning prepared randint values"""

    def __init__(self, values):
        self.values = list(values)

    def randint(self, low, high):
        value = self.values.pop(0)
        assert low <= value <= high
        return value


def differing_cells(a, b):
    cells = []
    for level, (row_a, row_b) in enumerate(zip(a.motifs, b.motifs), start=2):
        for m, (ma, mb) in enumerate(zip(row_a, row_b), start=1):
            ea, eb = ma.edge_map(), mb.edge_map()
            cells += [(level, m, i, j) for (i, j) in set(ea) | set(eb) if ea.get((i, j), 0) != eb.get((i, j), 0)]
    return cells


@pytest.mark.parametrize("old, new, expected", [
    (0, 4, EditClass.ADD_EDGE),
    (5, 0, EditClass.REMOVE_EDGE),
    (1, 1, EditClass.NO_OP),
    (2, 6, EditClass.ALTER_EDGE),
    (0, 0, EditClass.NO_OP),
])
def test_classify_edit(old, new, expected):
    trace = MutationTrace(level=2, motif=1, i=3, j=1, k_old=old, k_new=new)
    assert classify_edit(trace) == expected
    assert trace.edit_class == expected


def test_flat_mutation_always_targets_level_two(flat_spec):
    g = trivial_genotype(flat_spec, genotype_id=1)
    rng = random.Random(0)
    assert {mutate(g, rng, genotype_id=2)[1].level for _ in range(200)} == {2}


def test_mutation_uses_fixed_draw_order():
    spec = HierarchySpec(levels=3, motif_counts=(6, 2, 1), node_counts=((4, 4), (5,)))
    g = trivial_genotype(spec, genotype_id=1)
    child, trace = mutate(g, ScriptedRng([2, 2, 4, 1, 5]), genotype_id=2)
    assert trace == MutationTrace(level=2, motif=2, i=4, j=1, k_old=0, k_new=5)
    assert child.motif(2, 2).op(4, 1) == 5
    assert child.id == 2


def test_replacing_with_same_op_is_a_noop():
    g = trivial_genotype(HierarchySpec.flat(3), genotype_id=1)
    child, trace = mutate(g, ScriptedRng([1, 3, 2, 1]), genotype_id=2)
    assert trace.edit_class == EditClass.NO_OP
    assert child == g


def test_parent_is_left_unmodified(hierarchical_spec):
    g = random_genotype(hierarchical_spec, 4)
    before = g.motifs
    rng = random.Random(9)
    for _ in range(50):
        mutate(g, rng, genotype_id=99)
    assert g.motifs is before


def test_mutation_is_closed_and_local(hierarchical_spec):
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    rng = random.Random(5)
    for step in range(500):
        child, trace = mutate(g, rng, genotype_id=step + 2)
        assert validate(child).ok
        cells = differing_cells(g, child)
        if trace.edit_class == EditClass.NO_OP:
            assert cells == []
        else:
            assert cells == [(trace.level, trace.motif, trace.i, trace.j)]
        g = child


def test_same_seed_gives_same_mutations(hierarchical_spec):
    g = random_genotype(hierarchical_spec, 1)

    def traces(seed):
        rng = random.Random(seed)
        return [mutate(g, rng, genotype_id=5)[1] for _ in range(100)]

    assert traces(42) == traces(42)
    assert traces(42) != traces(43)


def test_mutate_many_matches_chained_mutations(hierarchical_spec):
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    rng = random.Random(17)
    chained = g
    for _ in range(200):
        chained, _ = mutate(chained, rng, genotype_id=2)
    assert mutate_many(g, 200, random.Random(17), genotype_id=2) == chained


def test_iterated_mutation_reaches_every_small_flat_genotype():
    start = trivial_genotype(HierarchySpec.flat(3), genotype_id=1)
    cells = [(2, 1), (3, 1), (3, 2)]
    seen = {start}
    frontier = deque([start])
    while frontier:
        g = frontier.popleft()
        for i, j in cells:
            for k in range(7):
                child, _ = mutate(g, ScriptedRng([1, i, j, k]), genotype_id=2)
                if child not in seen:
                    seen.add(child)
                    frontier.append(child)
    assert len(seen) == 7 ** 3


def test_mutation_targets_are_uniform_and_cover_every_edit_class(hierarchical_spec):
    g = random_genotype(hierarchical_spec, 7, mutations=1000)
    rng = random.Random(2024)
    hits = Counter()
    classes = Counter()
    draws = 10000
    for _ in range(draws):
        _, trace = mutate(g, rng, genotype_id=2)
        hits[(trace.level, trace.motif, trace.i, trace.j)] += 1
        classes[trace.edit_class] += 1

    assert set(classes) == set(EditClass)

    spec = hierarchical_spec
    expected = {}
    for level in range(2, spec.levels + 1):
        for m in range(1, spec.motif_count(level) + 1):
            n = spec.node_count(level, m)
            for i in range(2, n + 1):
                for j in range(1, i):
                    p = 1 / (spec.levels - 1) / spec.motif_count(level) / (n - 1) / (i - 1)
                    expected[(level, m, i, j)] = p * draws
    assert set(hits) <= set(expected)
    assert len(expected) - 1 == 45
    chi2 = sum((hits[cell] - e) ** 2 / e for cell, e in expected.items())
    assert chi2 < CHI2_CRITICAL_DF45
