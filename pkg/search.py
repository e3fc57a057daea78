"""
Module for population initialization, tournament selection and the
asynchronous controller/worker search loop shared by evolution and random
search
"""

import json
import logging
import math
import queue
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from config import (
    CHECKPOINT_FORMAT_VERSION,
    DEFAULT_DATASET,
    DEFAULT_EVAL_RUNS,
    DEFAULT_FITNESS_BACKEND,
    DEFAULT_INIT_MUTATIONS,
    DEFAULT_LOG_EVERY,
    DEFAULT_MODEL,
    DEFAULT_POPULATION_SIZE,
    DEFAULT_REPRESENTATION,
    DEFAULT_SEED,
    DEFAULT_SURROGATE,
    DEFAULT_TOTAL_STEPS,
    DEFAULT_TOURNAMENT_FRACTION,
    DEFAULT_TRAINER,
    DEFAULT_WORKERS,
    FITNESS_BACKENDS,
    PRESET_REPRESENTATIONS,
)
from exceptions import ConfigError, IncompatibleCheckpoint, SearchError
from fitness import Evaluation, cell_parameters
from genotype import HierarchySpec, IdCounter, default_ids, encode, from_document, trivial_genotype
from mutation import MutationTrace, mutate, mutate_many

logger = logging.getLogger(__name__)

SEED_BITS = 63
# Float noise absorbed before rounding a tournament size up
TOURNAMENT_FLOAT_TOLERANCE = 1e-9


def _fresh(defaults):
    return field(default_factory=lambda: json.loads(json.dumps(defaults)))


def _default_representation():
    return HierarchySpec.from_dict(PRESET_REPRESENTATIONS[DEFAULT_REPRESENTATION])


def _config_int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    return value


def _config_number(value, key, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{key} must be a finite number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{key} must be <= {maximum}, got {value}")
    return value


def _config_schedule(value, key):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{key} must be a non-empty list of [step, rate] pairs, got {value!r}")
    for pair in value:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{key} entries must be [step, rate] pairs, got {pair!r}")
        _config_int(pair[0], f"{key} step", 0)
        _config_number(pair[1], f"{key} rate")
        if pair[1] <= 0:
            raise ConfigError(f"{key} rates must be positive, got {pair[1]}")
    return value


def _fraction(value, key):
    _config_number(value, key)
    if not 0 < value < 1:
        raise ConfigError(f"{key} must lie in (0, 1), got {value}")
    return value


def _weight(value, key):
    _config_number(value, key)
    if not 0 <= value < 1:
        raise ConfigError(f"{key} must lie in [0, 1), got {value}")
    return value


def _positive(value, key):
    _config_number(value, key)
    if value <= 0:
        raise ConfigError(f"{key} must be positive, got {value}")
    return value


# Value checks of the nested sections, keyed by section then key
_SECTION_CHECKS = {
    "model": {
        "stem_channels": lambda v, k: _config_int(v, k, 1),
        "cells_per_group": lambda v, k: _config_int(v, k, 1),
        "groups": lambda v, k: _config_int(v, k, 1),
    },
    "trainer": {
        "steps": lambda v, k: _config_int(v, k, 0),
        "batch": lambda v, k: _config_int(v, k, 1),
        "schedule": _config_schedule,
        "momentum": lambda v, k: _config_number(v, k, 0, 1),
        "weight_decay": lambda v, k: _config_number(v, k, 0),
        "seed": _config_int,
    },
    "dataset": {
        "classes": lambda v, k: _config_int(v, k, 2),
        "per_class": lambda v, k: _config_int(v, k, 1),
        "size": lambda v, k: _config_int(v, k, 4),
        "seed": _config_int,
        "validation_fraction": _fraction,
        "contrast": lambda v, k: _config_number(v, k, 0),
        "noise": lambda v, k: _config_number(v, k, 0),
        "offset": lambda v, k: _config_number(v, k, 0),
        "label_noise": lambda v, k: _config_number(v, k, 0, 0.5),
    },
    "surrogate": {
        "param_weight": _weight,
        "param_scale": _positive,
    },
}


def _config_section(data, key, defaults):
    section = data.get(key, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{key} must be an object, got {type(section).__name__}")
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {key}: {sorted(unknown)}")
    checks = _SECTION_CHECKS.get(key, {})
    for name, value in section.items():
        if name in checks:
            checks[name](value, f"{key}.{name}")
    if key == "trainer" and "schedule" in section:
        steps = [s for s, _ in section["schedule"]]
        if steps != sorted(steps):
            raise ConfigError("trainer.schedule must be sorted by step")
    return {**json.loads(json.dumps(defaults)), **section}


_REPRESENTATION_KEYS = {"levels", "channels", "motif_counts", "node_counts"}


def resolve_representation(value):
    """Turn a preset name or an explicit representation object into a HierarchySpec"""
    if isinstance(value, HierarchySpec):
        spec = value
    elif isinstance(value, str):
        if value not in PRESET_REPRESENTATIONS:
            raise ConfigError(f"unknown representation preset {value!r}; "
                              f"choose one of {sorted(PRESET_REPRESENTATIONS)}")
        spec = HierarchySpec.from_dict(PRESET_REPRESENTATIONS[value])
    elif isinstance(value, dict):
        unknown = set(value) - _REPRESENTATION_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in representation: {sorted(unknown)}")
        missing = _REPRESENTATION_KEYS - {"channels"} - set(value)
        if missing:
            raise ConfigError(f"missing keys in representation: {sorted(missing)}")
        try:
            spec = HierarchySpec.from_dict(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed representation: {str(e)}") from e
    else:
        raise ConfigError(f"representation must be a preset name or an object, got {value!r}")
    problems = spec.problems()
    if problems:
        raise ConfigError(f"inconsistent representation: {'; '.join(problems)}")
    return spec


@dataclass(frozen=True)
class SearchConfig:
    """Resolved search configuration; every field carries its default"""

    population_size: int = DEFAULT_POPULATION_SIZE
    total_steps: int = DEFAULT_TOTAL_STEPS
    tournament_fraction: float = DEFAULT_TOURNAMENT_FRACTION
    init_mutations: int = DEFAULT_INIT_MUTATIONS
    workers: int = DEFAULT_WORKERS
    seed: int = DEFAULT_SEED
    eval_runs: int = DEFAULT_EVAL_RUNS
    param_threshold: int = None
    fitness_backend: str = DEFAULT_FITNESS_BACKEND
    representation: HierarchySpec = field(default_factory=_default_representation)
    model: dict = _fresh(DEFAULT_MODEL)
    trainer: dict = _fresh(DEFAULT_TRAINER)
    dataset: dict = _fresh(DEFAULT_DATASET)
    surrogate: dict = _fresh(DEFAULT_SURROGATE)
    log_every: int = DEFAULT_LOG_EVERY

    def __post_init__(self):
        _config_int(self.population_size, "population_size", 1)
        _config_int(self.total_steps, "total_steps", 1)
        _config_int(self.init_mutations, "init_mutations", 0)
        _config_int(self.workers, "workers", 1)
        _config_int(self.seed, "seed")
        _config_int(self.eval_runs, "eval_runs", 1)
        _config_int(self.log_every, "log_every", 1)
        if self.param_threshold is not None:
            _config_int(self.param_threshold, "param_threshold", 1)
        if isinstance(self.tournament_fraction, bool) or not isinstance(self.tournament_fraction, (int, float)):
            raise ConfigError(f"tournament_fraction must be a number, got {self.tournament_fraction!r}")
        if not 0 < self.tournament_fraction <= 1:
            raise ConfigError(f"tournament_fraction must lie in (0, 1], got {self.tournament_fraction}")
        if self.total_steps < self.population_size:
            raise ConfigError(f"total_steps ({self.total_steps}) must be >= population_size ({self.population_size})")
        if self.fitness_backend not in FITNESS_BACKENDS:
            raise ConfigError(f"fitness_backend must be one of {list(FITNESS_BACKENDS)}, got {self.fitness_backend!r}")
        if self.fitness_backend == "param" and self.param_threshold is None:
            raise ConfigError("fitness_backend \"param\" needs a param_threshold")

    @classmethod
    def from_dict(cls, data, overrides=None):
        """
        Resolve a configuration document.

        Args:
            data (dict): Parsed configuration document
            overrides (dict): Command-line values; None entries are ignored

        Returns:
            SearchConfig: Fully resolved configuration

        Raises:
            ConfigError: on unknown keys or ill-typed values
        """
        if not isinstance(data, dict):
            raise ConfigError("configuration document must be an object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        merged = dict(data)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value

        fraction = merged.get("tournament_fraction", DEFAULT_TOURNAMENT_FRACTION)
        return cls(
            population_size=merged.get("population_size", DEFAULT_POPULATION_SIZE),
            total_steps=merged.get("total_steps", DEFAULT_TOTAL_STEPS),
            tournament_fraction=float(fraction) if isinstance(fraction, int) and not isinstance(fraction, bool) else fraction,
            init_mutations=merged.get("init_mutations", DEFAULT_INIT_MUTATIONS),
            workers=merged.get("workers", DEFAULT_WORKERS),
            seed=merged.get("seed", DEFAULT_SEED),
            eval_runs=merged.get("eval_runs", DEFAULT_EVAL_RUNS),
            param_threshold=merged.get("param_threshold"),
            fitness_backend=merged.get("fitness_backend", DEFAULT_FITNESS_BACKEND),
            representation=resolve_representation(merged.get("representation", DEFAULT_REPRESENTATION)),
            model=_config_section(merged, "model", DEFAULT_MODEL),
            trainer=_config_section(merged, "trainer", DEFAULT_TRAINER),
            dataset=_config_section(merged, "dataset", DEFAULT_DATASET),
            surrogate=_config_section(merged, "surrogate", DEFAULT_SURROGATE),
            log_every=merged.get("log_every", DEFAULT_LOG_EVERY),
        )

    def to_dict(self):
        return {
            "population_size": self.population_size,
            "total_steps": self.total_steps,
            "tournament_fraction": self.tournament_fraction,
            "init_mutations": self.init_mutations,
            "workers": self.workers,
            "seed": self.seed,
            "eval_runs": self.eval_runs,
            "param_threshold": self.param_threshold,
            "fitness_backend": self.fitness_backend,
            "representation": self.representation.to_dict(),
            "model": dict(self.model),
            "trainer": json.loads(json.dumps(self.trainer)),
            "dataset": dict(self.dataset),
            "surrogate": dict(self.surrogate),
            "log_every": self.log_every,
        }


_CONFIG_KEYS = set(SearchConfig.__dataclass_fields__)


@dataclass(frozen=True)
class FitnessRecord:
    """One row of the memory table; wall_time is excluded from equality"""

    step_index: int
    genotype_id: int
    fitness: float
    param_count: int
    eval_runs: int
    best_so_far: float
    genotype: object
    trace: MutationTrace = None
    parent_id: int = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def edit_class(self):
        return "init" if self.trace is None else self.trace.edit_class.value

    def to_dict(self):
        return {
            "step_index": self.step_index,
            "genotype_id": self.genotype_id,
            "fitness": self.fitness,
            "param_count": self.param_count,
            "eval_runs": self.eval_runs,
            "best_so_far": self.best_so_far,
            "wall_time": self.wall_time,
            "parent_id": self.parent_id,
            "trace": None if self.trace is None else self.trace.to_dict(),
            "genotype": json.loads(encode(self.genotype)),
        }

    @classmethod
    def from_dict(cls, data, ids=None):
        return cls(
            step_index=int(data["step_index"]),
            genotype_id=int(data["genotype_id"]),
            fitness=float(data["fitness"]),
            param_count=int(data["param_count"]),
            eval_runs=int(data["eval_runs"]),
            best_so_far=float(data["best_so_far"]),
            genotype=from_document(data["genotype"], ids=ids),
            trace=None if data.get("trace") is None else MutationTrace.from_dict(data["trace"]),
            parent_id=data.get("parent_id"),
            wall_time=float(data.get("wall_time", 0.0)),
        )


class MemoryTable:
    """
    Append-only table of evaluated genotypes.

    Appends and snapshots are atomic. Listeners run inside the append lock, so
    they observe records one at a time in step order.
    """

    def __init__(self, records=()):
        self._lock = threading.Lock()
        self._records = []
        self._by_id = {}
        self._listeners = []
        for record in records:
            self._insert(record)

    def _insert(self, record):
        if record.genotype_id in self._by_id:
            raise SearchError(f"genotype {record.genotype_id} is already in the memory table")
        self._records.append(record)
        self._by_id[record.genotype_id] = record

    def add_listener(self, callback):
        self._listeners.append(callback)

    def append(self, genotype, evaluation, trace=None, parent_id=None, wall_time=0.0):
        """Record one evaluation; assigns the step index and running best"""
        fitness = min(1.0, max(0.0, float(evaluation.fitness)))
        with self._lock:
            previous = self._records[-1].best_so_far if self._records else 0.0
            record = FitnessRecord(
                step_index=len(self._records) + 1,
                genotype_id=genotype.id,
                fitness=fitness,
                param_count=int(evaluation.param_count),
                eval_runs=int(evaluation.runs),
                best_so_far=max(previous, fitness),
                genotype=genotype,
                trace=trace,
                parent_id=parent_id,
                wall_time=wall_time,
            )
            self._insert(record)
            for callback in self._listeners:
                callback(record)
        return record

    def snapshot(self):
        with self._lock:
            return tuple(self._records)

    def get(self, genotype_id):
        with self._lock:
            return self._by_id[genotype_id]

    def best(self):
        """Highest-fitness record; ties go to the lowest genotype id"""
        records = self.snapshot()
        if not records:
            return None
        return min(records, key=lambda r: (-r.fitness, r.genotype_id))

    def __len__(self):
        with self._lock:
            return len(self._records)

    def __contains__(self, genotype_id):
        with self._lock:
            return genotype_id in self._by_id


@dataclass(frozen=True)
class Job:
    """A genotype waiting in the work queue"""

    genotype: object
    trace: MutationTrace = None
    parent_id: int = None

    def to_dict(self):
        return {
            "genotype": json.loads(encode(self.genotype)),
            "trace": None if self.trace is None else self.trace.to_dict(),
            "parent_id": self.parent_id,
        }

    @classmethod
    def from_dict(cls, data, ids=None):
        return cls(
            genotype=from_document(data["genotype"], ids=ids),
            trace=None if data.get("trace") is None else MutationTrace.from_dict(data["trace"]),
            parent_id=data.get("parent_id"),
        )


_SENTINEL = object()


class WorkQueue:
    """Multi-consumer FIFO of jobs"""

    def __init__(self, jobs=()):
        self._q = queue.Queue()
        for job in jobs:
            self.put(job)

    def put(self, job):
        self._q.put(job)

    def get(self, block=True):
        return self._q.get(block=block)

    def empty(self):
        return self._q.empty()

    def qsize(self):
        return self._q.qsize()

    def pending(self):
        """Jobs still queued, in dequeue order"""
        with self._q.mutex:
            return [job for job in self._q.queue if job is not _SENTINEL]


@dataclass(frozen=True)
class LogEvent:
    kind: str
    step: int
    message: str


def diversify(g, n, rng, genotype_id=None, ids=None):
    """
    Apply n sequential uniform mutations.

    Args:
        g (Genotype): Valid starting genotype
        n (int): Number of mutations; 0 returns g itself
        rng (random.Random): Seeded stream
        genotype_id (int): Id of the result; drawn from ids, or the shared counter, when omitted

    Returns:
        Genotype: Diversified genotype
    """
    if n == 0:
        return g
    if genotype_id is None:
        genotype_id = (ids or default_ids).next_id()
    return mutate_many(g, n, rng, genotype_id)


def init_population(cfg, rng, ids=None):
    """
    Build the random initial population.

    Each member diversifies the trivial genotype with cfg.init_mutations
    mutations drawn from its own stream, seeded by one draw from rng.

    Returns:
        list: population_size Genotypes with ids in creation order
    """
    ids = ids or IdCounter()
    trivial = trivial_genotype(cfg.representation, genotype_id=0)
    seeds = [rng.getrandbits(SEED_BITS) for _ in range(cfg.population_size)]
    return [
        diversify(trivial, cfg.init_mutations, random.Random(seed), genotype_id=ids.next_id())
        for seed in seeds
    ]


def tournament_size(fraction, population):
    """
    ceil(fraction * population), at least 1.

    The product is taken to be whole when it lies within TOURNAMENT_FLOAT_TOLERANCE
    of an integer, so 0.05 * 60 gives 3 and not 4.
    """
    return max(1, math.ceil(fraction * population - TOURNAMENT_FLOAT_TOLERANCE))


def tournament_select(table, fraction, rng):
    """
    Select a parent by tournament.

    Samples ceil(fraction * |table|) records without replacement from a
    snapshot and returns the id of the fittest; ties go to the lowest id.

    Args:
        table (MemoryTable | sequence): Non-empty memory table or record snapshot
        fraction (float): Tournament fraction in (0, 1]
        rng (random.Random): Controller stream

    Returns:
        int: Genotype id of the winner
    """
    records = table.snapshot() if isinstance(table, MemoryTable) else list(table)
    if not records:
        raise SearchError("tournament selection needs a non-empty memory table")
    contestants = rng.sample(records, tournament_size(fraction, len(records)))
    return min(contestants, key=lambda r: (-r.fitness, r.genotype_id)).genotype_id


def _rng_state(rng):
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def _restore_rng(state):
    rng = random.Random()
    version, internal, gauss = state
    rng.setstate((version, tuple(internal), gauss))
    return rng


class Controller:
    """
    Controller of the asynchronous search.

    The controller fills the work queue with the initial population and then,
    every time a worker goes idle while the step budget remains, selects a
    parent by tournament, mutates it and enqueues the child. Workers dequeue,
    evaluate and append to the memory table. With one worker the loop runs
    single-threaded and is fully deterministic for a given seed.
    """

    def __init__(self, cfg, evaluator, mode="evolve", on_record=None):
        if mode not in ("evolve", "random"):
            raise ValueError(f"unknown search mode {mode!r}")
        self.cfg = cfg
        self.evaluator = evaluator
        self.mode = mode
        self.total = cfg.total_steps if mode == "evolve" else cfg.population_size
        self.rng = random.Random(cfg.seed)
        self.ids = IdCounter()
        self.table = MemoryTable()
        self.queue = WorkQueue()
        self.issued = 0
        self.seeded = False
        self.elapsed_before = 0.0
        self.events = []
        self._events_lock = threading.Lock()
        self._in_flight = {}
        self._in_flight_lock = threading.Lock()
        self._started = None
        if on_record is not None:
            self.table.add_listener(on_record)

    @property
    def complete(self):
        return len(self.table) >= self.total

    def _event(self, kind, step, message, level=logging.INFO):
        logger.log(level, message)
        with self._events_lock:
            self.events.append(LogEvent(kind=kind, step=step, message=message))

    def _seed_population(self):
        population = init_population(self.cfg, self.rng, self.ids)
        for g in population:
            self.queue.put(Job(genotype=g))
        self.issued += len(population)
        self.seeded = True

    def _enqueue_child(self):
        parent_id = tournament_select(self.table, self.cfg.tournament_fraction, self.rng)
        parent = self.table.get(parent_id).genotype
        child, trace = mutate(parent, self.rng, ids=self.ids)
        self.queue.put(Job(genotype=child, trace=trace, parent_id=parent_id))
        self.issued += 1

    def _evaluate(self, genotype):
        try:
            return self.evaluator.evaluate(genotype)
        except Exception as e:
            logger.warning(f"Evaluation of genotype {genotype.id} failed: {type(e).__name__}: {str(e)}")
            try:
                params = cell_parameters(genotype)
            except Exception:
                params = 0
            return Evaluation(fitness=0.0, param_count=params, runs=0)

    def _process(self, job):
        # In flight until recorded; checkpoints requeue these first
        with self._in_flight_lock:
            self._in_flight[job.genotype.id] = job
        evaluation = self._evaluate(job.genotype)
        wall = self.elapsed_before + (time.monotonic() - self._started)
        record = self.table.append(job.genotype, evaluation, trace=job.trace, parent_id=job.parent_id, wall_time=wall)
        with self._in_flight_lock:
            del self._in_flight[job.genotype.id]
        if record.step_index % self.cfg.log_every == 0 or record.step_index == self.total:
            self._event(
                "progress",
                record.step_index,
                f"Step {record.step_index}: fitness {record.fitness:.4f}, "
                f"best {record.best_so_far:.4f}, {record.param_count} parameters",
            )
        return record

    def _run_serial(self, stop):
        while len(self.table) < stop:
            if self.queue.empty():
                if self.issued >= self.total:
                    break
                self._enqueue_child()
            self._process(self.queue.get(block=False))

    def _worker(self, idle, halt, returned, returned_lock):
        while True:
            idle.put(None)
            job = self.queue.get()
            if job is _SENTINEL:
                return
            if halt.is_set():
                with returned_lock:
                    returned.append(job)
                continue
            self._process(job)

    def _run_threaded(self, stop):
        workers = self.cfg.workers
        idle = queue.Queue()
        halt = threading.Event()
        returned = []
        returned_lock = threading.Lock()
        demand = 0
        supplied = self.queue.qsize()

        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {
                executor.submit(self._worker, idle, halt, returned, returned_lock): w
                for w in range(workers)
            }
            try:
                while len(self.table) < stop:
                    try:
                        idle.get(timeout=1.0)
                    except queue.Empty:
                        for future in futures:
                            if future.done() and future.exception() is not None:
                                raise SearchError(f"worker {futures[future]} stopped: {future.exception()!r}")
                        continue
                    demand += 1
                    while supplied < demand and self.issued < self.total and len(self.table) > 0:
                        self._enqueue_child()
                        supplied += 1
            finally:
                # Workers finish the job in hand; later dequeues are handed back
                halt.set()
                for _ in range(workers):
                    self.queue.put(_SENTINEL)

                for future in as_completed(futures):
                    try:
                        future.result()
                    except BaseException as e:
                        logger.error(f"Worker {futures[future]} failed: {e!r}")

                leftover = self.queue.pending()
                self.queue = WorkQueue(returned + leftover)

    def run(self, stop_after=None):
        """
        Run until the step budget is spent or stop_after records exist.

        Returns:
            FitnessRecord: Best record so far
        """
        stop = self.total if stop_after is None else min(self.total, stop_after)
        if len(self.table) >= stop:
            logger.info(f"Nothing to do: {len(self.table)} of {self.total} steps already recorded")
            return self.table.best()

        self._started = time.monotonic()
        self._event("start", len(self.table),
                    f"Starting {self.mode} search: {self.total} steps, {self.cfg.workers} worker(s), seed {self.cfg.seed}")
        if not self.seeded:
            self._seed_population()
        try:
            if self.cfg.workers == 1:
                self._run_serial(stop)
            else:
                self._run_threaded(stop)
        except BaseException:
            self._event("interrupt", len(self.table),
                        f"Search interrupted after {len(self.table)} steps; "
                        f"{len(self._in_flight)} evaluation(s) will be repeated on resume", level=logging.WARNING)
            raise
        finally:
            self.elapsed_before += time.monotonic() - self._started

        best = self.table.best()
        kind = "finish" if self.complete else "stop"
        self._event(kind, len(self.table),
                    f"Search {'finished' if self.complete else 'stopped'} after {len(self.table)} steps; "
                    f"best genotype {best.genotype_id} with fitness {best.fitness:.4f}")
        return best

    def pending_jobs(self):
        """Unrecorded jobs in the order a resumed run takes them: in-flight first, then the queue"""
        with self._in_flight_lock:
            in_flight = [self._in_flight[key] for key in sorted(self._in_flight) if key not in self.table]
        return in_flight + self.queue.pending()

    def checkpoint_state(self):
        """Everything needed to continue this run later"""
        return {
            "version": CHECKPOINT_FORMAT_VERSION,
            "mode": self.mode,
            "total": self.total,
            "config": self.cfg.to_dict(),
            "seeded": self.seeded,
            "issued": self.issued,
            "next_id": self.ids.peek,
            "elapsed": self.elapsed_before,
            "rng_state": _rng_state(self.rng),
            "records": [record.to_dict() for record in self.table.snapshot()],
            "pending": [job.to_dict() for job in self.pending_jobs()],
            "complete": self.complete,
        }

    @classmethod
    def from_checkpoint(cls, state, evaluator, cfg=None, on_record=None):
        """
        Rebuild a controller from checkpoint_state output.

        Args:
            state (dict): Parsed checkpoint
            evaluator (Evaluator): Fitness back-end for the remaining steps
            cfg (SearchConfig): Optional configuration the run must be compatible with

        Raises:
            IncompatibleCheckpoint: on a version or representation mismatch
        """
        if not isinstance(state, dict) or state.get("version") != CHECKPOINT_FORMAT_VERSION:
            found = state.get("version") if isinstance(state, dict) else None
            raise IncompatibleCheckpoint(f"unsupported checkpoint version {found!r}")
        try:
            saved = SearchConfig.from_dict(state["config"])
        except (ConfigError, KeyError) as e:
            raise IncompatibleCheckpoint(f"checkpoint carries an unusable configuration: {str(e)}") from e
        if cfg is not None and cfg.representation != saved.representation:
            raise IncompatibleCheckpoint("checkpoint was written for a different representation")

        controller = cls(saved, evaluator, mode=state["mode"])
        try:
            for data in state["records"]:
                controller.table._insert(FitnessRecord.from_dict(data, ids=controller.ids))
            controller.queue = WorkQueue(Job.from_dict(data, ids=controller.ids) for data in state["pending"])
            controller.ids.observe(int(state["next_id"]) - 1)
            controller.rng = _restore_rng(state["rng_state"])
        except (KeyError, TypeError, ValueError, SearchError) as e:
            raise IncompatibleCheckpoint(f"checkpoint is damaged: {str(e)}") from e
        controller.issued = int(state["issued"])
        controller.seeded = bool(state["seeded"])
        controller.elapsed_before = float(state.get("elapsed", 0.0))
        if on_record is not None:
            controller.table.add_listener(on_record)
        logger.info(f"Restored {len(controller.table)} of {controller.total} steps "
                    f"and {controller.queue.qsize()} queued genotypes from checkpoint")
        return controller


def evolve(cfg, evaluator, stop_after=None, on_record=None):
    """
    Asynchronous evolution with tournament selection.

    Args:
        cfg (SearchConfig): Search configuration
        evaluator (Evaluator): Fitness back-end
        stop_after (int): Optional record count after which to stop early
        on_record (callable): Called with every new FitnessRecord

    Returns:
        tuple: (best FitnessRecord, MemoryTable, list of LogEvent)
    """
    controller = Controller(cfg, evaluator, mode="evolve", on_record=on_record)
    best = controller.run(stop_after)
    return best, controller.table, controller.events


def random_search(cfg, evaluator, on_record=None):
    """
    Evaluate population_size random genotypes and return the best.

    Uses the same controller as evolve, so its records equal the first
    population_size records of an evolution run with the same seed.

    Returns:
        tuple: (best FitnessRecord, MemoryTable)
    """
    controller = Controller(cfg, evaluator, mode="random", on_record=on_record)
    best = controller.run()
    return best, controller.table
