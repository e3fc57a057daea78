"""
End-to-end behaviour of the search at desk scale
"""

import itertools
import math
import os
import re

import numpy as np
import pytest

from artifacts import load_config
from cli import main
from fitness import SurrogateEvaluator, make_evaluator
from genotype import OP_LABELS, PrimitiveOp, encode
from search import SearchConfig, evolve
from tests.helpers import flat_genotype, random_genotype

THREE_NODE_FLAT = {"levels": 2, "motif_counts": [6, 1], "node_counts": [[3]], "channels": 16}
FOUR_NODE_FLAT = {"levels": 2, "motif_counts": [6, 1], "node_counts": [[4]], "channels": 16}

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

LABEL_PATTERN = re.compile(r'-> \d+ \[label=(?:"([^"]*)"|([^\]\s]+))\]')


def brute_force_optimum():
    evaluator = SurrogateEvaluator()
    scores = []
    for k21, k31, k32 in itertools.product(range(7), repeat=3):
        g = flat_genotype(3, {(2, 1): k21, (3, 1): k31, (3, 2): k32})
        scores.append(evaluator.evaluate(g).fitness)
    return max(scores)


@pytest.mark.slow
def test_evolution_beats_random_search_beats_single_sample():
    evolved, sampled, single = [], [], []
    for seed in range(20):
        cfg = SearchConfig.from_dict({
            "representation": "hierarchical",
            "population_size": 200,
            "total_steps": 2000,
            "workers": 1,
            "seed": seed,
            "eval_runs": 1,
        })
        best, table, _ = evolve(cfg, SurrogateEvaluator())
        initial = [r.fitness for r in table.snapshot()[:cfg.population_size]]
        evolved.append(best.fitness)
        # random search with the same seed evaluates exactly the initial population
        sampled.append(max(initial))
        single.append(float(np.mean(initial)))
    assert np.mean(evolved) > np.mean(sampled) > np.mean(single)


@pytest.mark.slow
def test_evolution_recovers_small_flat_optimum():
    optimum = brute_force_optimum()
    found = 0
    for seed in range(20):
        cfg = SearchConfig.from_dict({
            "representation": THREE_NODE_FLAT,
            "population_size": 20,
            "total_steps": 300,
            "init_mutations": 20,
            "workers": 1,
            "seed": seed,
            "eval_runs": 1,
        })
        best, _, _ = evolve(cfg, SurrogateEvaluator())
        if math.isclose(best.fitness, optimum, rel_tol=1e-12):
            found += 1
    assert found >= 18


def test_constrained_evolution_respects_threshold():
    threshold = 600
    constrained_params, free_params = [], []
    for seed in range(5):
        base = {
            "representation": FOUR_NODE_FLAT,
            "population_size": 20,
            "total_steps": 200,
            "init_mutations": 30,
            "workers": 1,
            "seed": seed,
            "eval_runs": 1,
            "surrogate": {"param_weight": 0.5, "param_scale": 1000.0},
        }
        cfg = SearchConfig.from_dict({**base, "fitness_backend": "param", "param_threshold": threshold})
        best, table, _ = evolve(cfg, make_evaluator(cfg))
        assert best.fitness > 0
        assert best.param_count <= threshold
        assert all(r.param_count <= threshold for r in table.snapshot() if r.fitness > 0)
        constrained_params.append(best.param_count)

        # the same parameter-rewarding surrogate without the constraint
        free_cfg = SearchConfig.from_dict({**base, "fitness_backend": "surrogate"})
        free_best, _, _ = evolve(free_cfg, make_evaluator(free_cfg))
        free_params.append(free_best.param_count)
    assert np.mean(free_params) > np.mean(constrained_params)


@pytest.mark.slow
def test_trainer_backed_evolution_smoke():
    data = load_config(os.path.join(CONFIG_DIR, "trainer_smoke.json"))
    data["trainer"] = {**data["trainer"], "steps": 20, "schedule": [[0, 0.05]]}
    cfg = SearchConfig.from_dict(data)
    assert cfg.workers == 4 and cfg.eval_runs == 2
    best, table, _ = evolve(cfg, make_evaluator(cfg))
    records = table.snapshot()
    assert len(records) == 24
    assert all(math.isfinite(r.fitness) and 0.0 <= r.fitness <= 1.0 for r in records)
    initial = [r.fitness for r in records[:cfg.population_size]]
    assert best.fitness >= np.mean(initial)


def test_exported_dot_uses_operation_vocabulary(tmp_path, capsys, hierarchical_spec):
    g = random_genotype(hierarchical_spec, 11)
    path = tmp_path / "g.json"
    path.write_text(encode(g), encoding="utf-8")
    assert main(["export-dot", str(path)]) == 0
    graphs = capsys.readouterr().out.split("digraph")[1:]
    assert len(graphs) == 7

    primitive_labels = {OP_LABELS[op] for op in PrimitiveOp if op is not PrimitiveOp.NONE}
    motif_labels = {f"Motif {m}" for m in range(1, 7)}
    for index, graph in enumerate(graphs):
        labels = {quoted or bare for quoted, bare in LABEL_PATTERN.findall(graph)}
        allowed = motif_labels if index == 6 else primitive_labels
        assert labels <= allowed
