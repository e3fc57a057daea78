"""
Module for fitness evaluation: the evaluator contract, the surrogate landscape,
the parameter constraint and the trainer-backed evaluator
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from assembly import TensorShape, count_parameters, flatten
from config import (
    DEFAULT_DATASET,
    DEFAULT_MODEL,
    DEFAULT_TRAINER,
    SURROGATE_DEPTH_SCALE,
    SURROGATE_TARGET,
)
from exceptions import ConfigError, DegenerateArchitecture, EvaluationFailure, NumericFailure
from genotype import LEVEL1_OPS
from nnexec import ModelSpec, TrainerSettings, build_model, sgd_train, synth_dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Evaluation:
    """Outcome of one evaluator call"""

    fitness: float
    param_count: int
    runs: int = 1


def cell_parameters(g, arch=None):
    """Parameter count of a genotype's cell under its own channel constant"""
    arch = arch if arch is not None else flatten(g)
    c = g.spec.channels
    return count_parameters(arch, TensorShape(1, c, 1, 1), c)


def _clamp(value):
    return min(1.0, max(0.0, value))


def surrogate_fitness(a):
    """
    Deterministic stand-in for validation accuracy.

    Scores how close the architecture's op mix is to SURROGATE_TARGET (one
    minus half the L1 distance of the normalized histograms), damped by a
    saturating function of the longest source-to-sink path.

    Args:
        a (FlatArchitecture): Non-degenerate flattened cell

    Returns:
        float: Fitness in [0, 1]
    """
    counts = a.op_counts()
    total = sum(counts.values())
    histogram = [counts.get(op, 0) / total for op in LEVEL1_OPS]
    distance = sum(abs(h - t) for h, t in zip(histogram, SURROGATE_TARGET))
    depth_term = 1.0 - math.exp(-a.depth() / SURROGATE_DEPTH_SCALE)
    return _clamp((1.0 - 0.5 * distance) * depth_term)


class Evaluator:
    """
    Fitness back-end contract.

    evaluate is total over valid genotypes, deterministic for a given genotype
    and safe to call from several worker threads at once. Degenerate
    architectures score 0.
    """

    def evaluate(self, genotype):
        raise NotImplementedError


class SurrogateEvaluator(Evaluator):
    """
    Surrogate landscape, optionally blended with a parameter reward.

    With param_weight w > 0 the score is (1 - w) * surrogate + w * (1 - exp(-params / param_scale)),
    a landscape where larger cells score higher.
    """

    def __init__(self, param_weight=0.0, param_scale=5000.0, runs=1):
        if not 0.0 <= param_weight < 1.0:
            raise ConfigError(f"surrogate param_weight must lie in [0, 1), got {param_weight}")
        if param_scale <= 0:
            raise ConfigError(f"surrogate param_scale must be positive, got {param_scale}")
        self.param_weight = param_weight
        self.param_scale = param_scale
        self.runs = runs

    def evaluate(self, genotype):
        try:
            arch = flatten(genotype)
        except DegenerateArchitecture:
            return Evaluation(fitness=0.0, param_count=0, runs=self.runs)
        params = cell_parameters(genotype, arch)
        score = surrogate_fitness(arch)
        if self.param_weight:
            reward = 1.0 - math.exp(-params / self.param_scale)
            score = _clamp((1.0 - self.param_weight) * score + self.param_weight * reward)
        # The surrogate is deterministic, so the mean over runs is the single value
        return Evaluation(fitness=score, param_count=params, runs=self.runs)


class ConstrainedEvaluator(Evaluator):
    """Scores 0 for cells over the parameter threshold, otherwise delegates"""

    def __init__(self, inner, threshold):
        if threshold <= 0:
            raise ConfigError(f"parameter threshold must be positive, got {threshold}")
        self.inner = inner
        self.threshold = threshold

    def evaluate(self, genotype):
        try:
            params = cell_parameters(genotype)
        except DegenerateArchitecture:
            return Evaluation(fitness=0.0, param_count=0, runs=0)
        if params > self.threshold:
            return Evaluation(fitness=0.0, param_count=params, runs=0)
        result = self.inner.evaluate(genotype)
        return replace(result, param_count=params)


def constrain(inner, threshold):
    """
    Wrap an evaluator so that only cells with at most `threshold` parameters
    are permitted.

    Args:
        inner (Evaluator): Evaluator used for permitted cells
        threshold (int): Largest permitted parameter count

    Returns:
        Evaluator: Constrained evaluator
    """
    return ConstrainedEvaluator(inner, threshold)


def run_seeds(seed, run_index):
    """
    Seeds of one training run.

    Run r of master seed s draws from SeedSequence(s, spawn_key=(r,)); its two
    children seed weight initialization and batch sampling.

    Returns:
        tuple: (init SeedSequence, batch-sampling seed)
    """
    init_seq, batch_seq = np.random.SeedSequence(seed, spawn_key=(run_index,)).spawn(2)
    return init_seq, int(batch_seq.generate_state(1)[0])


def trained_run(g, settings, model, dataset, seed, run_index, arch=None):
    """
    Train the model skeleton around g's cell once and return held-out accuracy.

    Args:
        g (Genotype): Valid genotype
        settings (TrainerSettings): Trainer hyperparameters
        model (dict): stem_channels, cells_per_group and groups
        dataset (Dataset): Synthetic train/validation split
        seed (int): Master seed
        run_index (int): Index r of the run

    Raises:
        DegenerateArchitecture: if g has no source-to-sink path
        EvaluationFailure: if training diverges
    """
    arch = arch if arch is not None else flatten(g)
    init_seq, batch_seed = run_seeds(seed, run_index)
    spec = ModelSpec(
        cell=arch,
        stem_channels=int(model["stem_channels"]),
        cells_per_group=int(model["cells_per_group"]),
        groups=int(model["groups"]),
        num_classes=dataset.classes,
        input_size=dataset.size,
    )
    net = build_model(spec, np.random.default_rng(init_seq))
    try:
        _, accuracy = sgd_train(net, dataset, replace(settings, seed=batch_seed))
    except NumericFailure as e:
        raise EvaluationFailure(f"training of genotype {g.id} diverged in run {run_index}: {str(e)}") from e
    return accuracy


def trained_fitness(g, settings, model, dataset, runs, seed):
    """
    Mean held-out accuracy over `runs` independent training runs.

    Args:
        g (Genotype): Valid genotype
        settings (TrainerSettings): Trainer hyperparameters
        model (dict): Model skeleton settings
        dataset (Dataset): Synthetic train/validation split
        runs (int): Number of training-evaluation runs
        seed (int): Master seed for the per-run streams

    Returns:
        float: Fitness in [0, 1]
    """
    arch = flatten(g)
    accuracies = [trained_run(g, settings, model, dataset, seed, r, arch=arch) for r in range(runs)]
    return _clamp(float(np.mean(accuracies)))


class TrainerEvaluator(Evaluator):
    """Fitness as the mean validation accuracy of the trained model skeleton"""

    def __init__(self, settings, model, dataset, runs, seed):
        self.settings = settings
        self.model = model
        self.dataset = dataset
        self.runs = runs
        self.seed = seed

    @classmethod
    def from_config(cls, cfg):
        trainer = {**DEFAULT_TRAINER, **(cfg.trainer or {})}
        model = {**DEFAULT_MODEL, **(cfg.model or {})}
        data = {**DEFAULT_DATASET, **(cfg.dataset or {})}
        dataset = synth_dataset(
            classes=int(data["classes"]),
            per_class=int(data["per_class"]),
            size=int(data["size"]),
            seed=int(data["seed"]),
            validation_fraction=float(data["validation_fraction"]),
            contrast=float(data["contrast"]),
            noise=float(data["noise"]),
            offset=float(data["offset"]),
            label_noise=float(data["label_noise"]),
        )
        settings = TrainerSettings.from_dict(trainer)
        return cls(settings, model, dataset, cfg.eval_runs, settings.seed)

    def evaluate(self, genotype):
        try:
            arch = flatten(genotype)
        except DegenerateArchitecture:
            return Evaluation(fitness=0.0, param_count=0, runs=0)
        accuracies = [
            trained_run(genotype, self.settings, self.model, self.dataset, self.seed, r, arch=arch)
            for r in range(self.runs)
        ]
        return Evaluation(
            fitness=_clamp(float(np.mean(accuracies))),
            param_count=cell_parameters(genotype, arch),
            runs=self.runs,
        )


def make_evaluator(cfg):
    """
    Build the evaluator a search configuration asks for.

    "surrogate" is the surrogate landscape (blended with the parameter reward
    when surrogate.param_weight > 0), "param" the same surrogate under the
    parameter constraint and "trainer" the trained model skeleton. A
    param_threshold also constrains the other two back-ends.

    Raises:
        ConfigError: for "param" without a param_threshold
    """
    surrogate = cfg.surrogate or {}
    if cfg.fitness_backend in ("surrogate", "param"):
        evaluator = SurrogateEvaluator(
            param_weight=float(surrogate.get("param_weight", 0.0)),
            param_scale=float(surrogate.get("param_scale", 5000.0)),
            runs=cfg.eval_runs,
        )
    elif cfg.fitness_backend == "trainer":
        evaluator = TrainerEvaluator.from_config(cfg)
    else:
        raise ConfigError(f"unknown fitness back-end {cfg.fitness_backend!r}")

    if cfg.fitness_backend == "param" and cfg.param_threshold is None:
        raise ConfigError("the param back-end needs a param_threshold")
    if cfg.param_threshold is not None:
        evaluator = constrain(evaluator, cfg.param_threshold)
    logger.info(f"Using {cfg.fitness_backend} fitness"
                + (f" with parameter threshold {cfg.param_threshold}" if cfg.param_threshold is not None else ""))
    return evaluator
