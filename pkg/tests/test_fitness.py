import math

import numpy as np
import pytest

from assembly import flatten
from config import DEFAULT_DATASET, DEFAULT_MODEL, DEFAULT_TRAINER
from exceptions import ConfigError
from fitness import (
    ConstrainedEvaluator,
    Evaluation,
    SurrogateEvaluator,
    TrainerEvaluator,
    cell_parameters,
    constrain,
    make_evaluator,
    run_seeds,
    surrogate_fitness,
    trained_fitness,
    trained_run,
)
from genotype import HierarchySpec, trivial_genotype
from nnexec import TrainerSettings, synth_dataset
from tests.helpers import flat_genotype, random_genotype, small_config

TRIVIAL_HIERARCHICAL_SURROGATE = 0.2 * (1.0 - math.exp(-16 / 4))

TINY_MODEL = {"stem_channels": 4, "cells_per_group": 1, "groups": 2}


@pytest.fixture
def tiny_dataset():
    return synth_dataset(classes=2, per_class=6, size=4, seed=0)


@pytest.fixture
def tiny_settings():
    return TrainerSettings(steps=3, batch=4, schedule=((0, 0.05),), momentum=0.9, weight_decay=1e-4)


def test_trivial_hierarchical_cell(hierarchical_spec):
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    assert cell_parameters(g) == 4 * (16 * 16 + 2 * 16)
    evaluation = SurrogateEvaluator().evaluate(g)
    assert evaluation.fitness == pytest.approx(TRIVIAL_HIERARCHICAL_SURROGATE)
    assert evaluation.param_count == 1152


def test_identity_chain_surrogate(flat_spec):
    g = trivial_genotype(flat_spec, genotype_id=1)
    expected = (1.0 - 0.5 * 1.9) * (1.0 - math.exp(-10 / 4))
    assert surrogate_fitness(flatten(g)) == pytest.approx(expected)
    assert SurrogateEvaluator().evaluate(g).param_count == 0


def test_degenerate_genotype_scores_zero():
    g = flat_genotype(3, {(2, 1): 1})
    assert SurrogateEvaluator().evaluate(g) == Evaluation(fitness=0.0, param_count=0)


def test_surrogate_stays_in_unit_interval(hierarchical_spec):
    for seed in range(20):
        assert 0.0 <= SurrogateEvaluator().evaluate(random_genotype(hierarchical_spec, seed)).fitness <= 1.0


def test_param_reward_blends_towards_larger_cells(hierarchical_spec):
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    evaluation = SurrogateEvaluator(param_weight=0.5, param_scale=1000.0).evaluate(g)
    expected = 0.5 * TRIVIAL_HIERARCHICAL_SURROGATE + 0.5 * (1.0 - math.exp(-1.152))
    assert evaluation.fitness == pytest.approx(expected)


@pytest.mark.parametrize("kwargs", [{"param_weight": 1.0}, {"param_weight": -0.1}, {"param_scale": 0.0}])
def test_surrogate_rejects_bad_settings(kwargs):
    with pytest.raises(ConfigError):
        SurrogateEvaluator(**kwargs)


def test_constraint_applies_at_threshold(hierarchical_spec):
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    assert constrain(SurrogateEvaluator(), 1152).evaluate(g).fitness == pytest.approx(TRIVIAL_HIERARCHICAL_SURROGATE)
    over = constrain(SurrogateEvaluator(), 1151).evaluate(g)
    assert over.fitness == 0.0
    assert over.param_count == 1152


def test_constraint_never_raises_fitness(hierarchical_spec):
    inner = SurrogateEvaluator(param_weight=0.3)
    constrained = constrain(inner, 2000)
    for seed in range(20):
        g = random_genotype(hierarchical_spec, seed)
        assert constrained.evaluate(g).fitness <= inner.evaluate(g).fitness


def test_constraint_rejects_non_positive_threshold():
    with pytest.raises(ConfigError):
        constrain(SurrogateEvaluator(), 0)


def test_run_seeds_are_reproducible_and_distinct():
    assert run_seeds(7, 0)[1] == run_seeds(7, 0)[1]
    assert run_seeds(7, 0)[1] != run_seeds(7, 1)[1]
    assert run_seeds(7, 0)[1] != run_seeds(8, 0)[1]


def test_trained_fitness_is_deterministic(tiny_dataset, tiny_settings):
    g = flat_genotype(3, {(2, 1): 2, (3, 1): 1, (3, 2): 6}, channels=4)
    first = trained_fitness(g, tiny_settings, TINY_MODEL, tiny_dataset, runs=2, seed=5)
    second = trained_fitness(g, tiny_settings, TINY_MODEL, tiny_dataset, runs=2, seed=5)
    assert first == second
    assert 0.0 <= first <= 1.0


def test_trained_fitness_averages_runs(tiny_dataset, tiny_settings):
    g = flat_genotype(3, {(2, 1): 4, (3, 2): 1}, channels=4)
    runs = [trained_run(g, tiny_settings, TINY_MODEL, tiny_dataset, 5, r) for r in range(3)]
    assert trained_fitness(g, tiny_settings, TINY_MODEL, tiny_dataset, runs=3, seed=5) == pytest.approx(np.mean(runs))


def test_make_evaluator_picks_backend():
    assert isinstance(make_evaluator(small_config()), SurrogateEvaluator)
    rewarding = make_evaluator(small_config(surrogate={"param_weight": 0.5, "param_scale": 1000.0}))
    assert isinstance(rewarding, SurrogateEvaluator)
    assert rewarding.param_weight == 0.5
    constrained = make_evaluator(small_config(param_threshold=400))
    assert isinstance(constrained, ConstrainedEvaluator)
    assert constrained.threshold == 400


def test_param_backend_is_the_constrained_surrogate(hierarchical_spec):
    evaluator = make_evaluator(small_config(fitness_backend="param", param_threshold=1151))
    assert isinstance(evaluator, ConstrainedEvaluator)
    assert isinstance(evaluator.inner, SurrogateEvaluator)
    assert evaluator.inner.param_weight == 0.0
    g = trivial_genotype(hierarchical_spec, genotype_id=1)
    assert evaluator.evaluate(g) == Evaluation(fitness=0.0, param_count=1152, runs=0)


def test_param_backend_needs_a_threshold():
    with pytest.raises(ConfigError):
        small_config(fitness_backend="param")


def test_make_evaluator_builds_trainer():
    cfg = small_config(
        fitness_backend="trainer",
        eval_runs=2,
        trainer={"steps": 2, "batch": 4},
        dataset={"classes": 2, "per_class": 4, "size": 8},
    )
    evaluator = make_evaluator(cfg)
    assert isinstance(evaluator, TrainerEvaluator)
    assert evaluator.runs == 2
    assert evaluator.settings.steps == 2
    assert evaluator.dataset.classes == 2


@pytest.mark.slow
def test_identity_chain_scores_between_chance_and_one():
    dataset = synth_dataset(**DEFAULT_DATASET)
    g = trivial_genotype(HierarchySpec.flat(3), genotype_id=1)
    settings = TrainerSettings.from_dict(DEFAULT_TRAINER)
    fitness = trained_fitness(g, settings, DEFAULT_MODEL, dataset, runs=2, seed=0)
    assert 1.0 / dataset.classes < fitness < 1.0


def test_trainer_evaluator_reads_dataset_difficulty():
    cfg = small_config(
        fitness_backend="trainer",
        dataset={"classes": 3, "per_class": 8, "size": 6, "label_noise": 0.0, "noise": 0.0, "contrast": 1.0},
    )
    evaluator = make_evaluator(cfg)
    expected = synth_dataset(classes=3, per_class=8, size=6, seed=0, label_noise=0.0, noise=0.0, contrast=1.0)
    assert np.array_equal(evaluator.dataset.train_x, expected.train_x)
    assert np.array_equal(evaluator.dataset.val_y, expected.val_y)
