import random
import threading

from fitness import Evaluator, SurrogateEvaluator
from genotype import Genotype, HierarchySpec, MotifGraph, trivial_genotype
from search import SearchConfig, diversify


def flat_genotype(node_count, edges, channels=16, genotype_id=1):
    """Flat genotype from a {(i, j): op} mapping"""
    spec = HierarchySpec.flat(node_count, channels=channels)
    return Genotype(spec=spec, motifs=((MotifGraph.from_edges(node_count, edges),),), id=genotype_id)


def random_genotype(spec, seed, mutations=200):
    return diversify(trivial_genotype(spec, genotype_id=0), mutations, random.Random(seed), genotype_id=seed + 1)


def small_config(**overrides):
    data = {
        "representation": "flat",
        "population_size": 10,
        "total_steps": 40,
        "init_mutations": 50,
        "workers": 1,
        "seed": 3,
        "eval_runs": 1,
    }
    data.update(overrides)
    return SearchConfig.from_dict(data)


class InterruptingEvaluator(Evaluator):
    """Surrogate that raises KeyboardInterrupt on its `at`-th call"""

    def __init__(self, at):
        self.inner = SurrogateEvaluator()
        self.at = at
        self.calls = 0
        self.lock = threading.Lock()

    def evaluate(self, genotype):
        with self.lock:
            self.calls += 1
            interrupt = self.calls == self.at
        if interrupt:
            raise KeyboardInterrupt
        return self.inner.evaluate(genotype)
