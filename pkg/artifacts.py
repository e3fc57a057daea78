"""
Module for the files a search run leaves behind: configuration snapshot,
run log, best genotype, checkpoint and DOT bundle
"""

import csv
import json
import logging
import os
from dataclasses import dataclass

from assembly import dot_graphs
from exceptions import ConfigError, IncompatibleCheckpoint
from genotype import encode

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "step",
    "wall_time_s",
    "genotype_id",
    "fitness",
    "param_count",
    "best_fitness_so_far",
    "edit_class",
    "level",
    "motif",
    "i",
    "j",
    "k_old",
    "k_new",
)


@dataclass(frozen=True)
class RunArtifacts:
    """Paths of every artifact inside one run directory"""

    out_dir: str

    @property
    def config(self):
        return os.path.join(self.out_dir, "config.json")

    @property
    def run_log(self):
        return os.path.join(self.out_dir, "run_log.csv")

    @property
    def best_genotype(self):
        return os.path.join(self.out_dir, "best_genotype.json")

    @property
    def checkpoint(self):
        return os.path.join(self.out_dir, "checkpoint.json")

    @property
    def dot_dir(self):
        return os.path.join(self.out_dir, "dot")

    @property
    def report(self):
        return os.path.join(self.out_dir, "report.docx")

    def ensure(self):
        os.makedirs(self.out_dir, exist_ok=True)
        return self


def load_config(path):
    """
    Read a configuration document.

    Raises:
        ConfigError: if the file is not valid JSON
        OSError: if the file cannot be read
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {str(e)}") from e


def save_config_snapshot(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2)
        f.write("\n")
    return path


def csv_row(record):
    trace = record.trace
    coords = ("", "", "", "", "", "") if trace is None else (
        trace.level, trace.motif, trace.i, trace.j, trace.k_old, trace.k_new)
    return [
        record.step_index,
        f"{record.wall_time:.3f}",
        record.genotype_id,
        f"{record.fitness:.6f}",
        record.param_count,
        f"{record.best_so_far:.6f}",
        record.edit_class,
        *coords,
    ]


class RunLogWriter:
    """
    Single writer of the run-log CSV.

    Registered as a memory-table listener, so rows arrive one at a time in step
    order; every row is flushed before the next step is recorded.
    """

    def __init__(self, path, records=()):
        self.path = path
        self._file = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        self._writer.writerow(CSV_COLUMNS)
        for record in records:
            self._writer.writerow(csv_row(record))
        self._file.flush()

    def __call__(self, record):
        self._writer.writerow(csv_row(record))
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_run_log(path):
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def save_checkpoint(state, path):
    """Write a checkpoint atomically (temporary file, then rename)"""
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(state, f)
    os.replace(tmp_path, path)
    logger.info(f"Checkpoint with {len(state['records'])} records written to {path}")
    return path


def load_checkpoint(path):
    """
    Read a checkpoint file.

    Raises:
        IncompatibleCheckpoint: if the file is not a readable checkpoint
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IncompatibleCheckpoint(f"cannot read checkpoint {path}: {str(e)}") from e


def write_genotype(g, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(encode(g))
    return path


def dot_file_name(name):
    return name.lower().replace(" ", "_") + ".dot"


def write_dot_bundle(obj, dot_dir):
    """
    Write one DOT file per graph of a genotype or flattened architecture.

    Returns:
        list: Written paths in graph order
    """
    os.makedirs(dot_dir, exist_ok=True)
    paths = []
    for name, graph in dot_graphs(obj):
        path = os.path.join(dot_dir, dot_file_name(name))
        with open(path, "w", encoding="utf-8") as f:
            f.write(graph.source)
        paths.append(path)
    return paths
