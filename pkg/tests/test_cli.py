import json
import os
import re

import pytest

import cli
from artifacts import RunArtifacts, read_run_log
from cli import EXIT_INTERRUPTED, inspect_genotype, main
from fitness import SurrogateEvaluator
from genotype import HierarchySpec, decode, encode, trivial_genotype
from tests.helpers import InterruptingEvaluator, flat_genotype, random_genotype

SMALL_RUN = {
    "representation": "flat",
    "population_size": 8,
    "total_steps": 30,
    "init_mutations": 40,
    "workers": 1,
    "seed": 2,
    "eval_runs": 1,
}


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def write_genotype_file(path, g):
    path.write_text(encode(g), encoding="utf-8")
    return str(path)


def last_json(text):
    """Last JSON document printed to a stream; log lines may precede it"""
    lines = text.splitlines()
    for start in range(len(lines) - 1, -1, -1):
        if lines[start].startswith("{"):
            try:
                return json.loads("\n".join(lines[start:]))
            except json.JSONDecodeError:
                continue
    raise AssertionError(f"no JSON document in {text!r}")


def without_wall_time(rows):
    return [{k: v for k, v in row.items() if k != "wall_time_s"} for row in rows]


def test_inspect_reports_shapes_and_parameters(tmp_path, capsys, hierarchical_spec):
    path = write_genotype_file(tmp_path / "g.json", trivial_genotype(hierarchical_spec, genotype_id=3))
    assert main(["inspect", path, "--size", "4"]) == 0
    report = last_json(capsys.readouterr().out)
    assert report["valid"] and not report["degenerate"]
    assert report["parameters"] == 1152
    assert report["flat"]["depth"] == 16
    assert all(shape[2:] == [4, 4] for shape in report["shapes"].values())
    assert len(report["motifs"]) == 7


def test_inspect_flags_degenerate_cell():
    result = inspect_genotype(flat_genotype(3, {(2, 1): 2}))
    assert result["valid"] and result["degenerate"]


def test_inspect_rejects_invalid_genotype(tmp_path, capsys):
    text = encode(trivial_genotype(HierarchySpec.flat(3), genotype_id=1)).replace("[3, 2, 1]", "[3, 2, 9]")
    path = tmp_path / "bad.json"
    path.write_text(text, encoding="utf-8")
    assert main(["inspect", str(path)]) == 2
    captured = capsys.readouterr()
    assert "operation index out of range" in captured.out
    assert last_json(captured.err)["error"] == "InvalidGenotype"


def test_export_dot_matches_genotype(tmp_path, capsys, hierarchical_spec):
    g = random_genotype(hierarchical_spec, 4)
    path = write_genotype_file(tmp_path / "g.json", g)
    assert main(["export-dot", path]) == 0
    out = capsys.readouterr().out
    assert out.count("digraph") == 7
    edges = re.findall(r"\d+ -> \d+", out)
    assert len(edges) == g.edge_count()

    assert main(["export-dot", path, "--out", str(tmp_path / "dot")]) == 0
    files = last_json(capsys.readouterr().out)["files"]
    assert len(files) == 7
    assert all(os.path.exists(f) for f in files)


def test_eval_prints_fitness(tmp_path, capsys, hierarchical_spec):
    g = random_genotype(hierarchical_spec, 1)
    path = write_genotype_file(tmp_path / "g.json", g)
    assert main(["eval", path, "--fitness", "surrogate"]) == 0
    result = last_json(capsys.readouterr().out)
    expected = SurrogateEvaluator().evaluate(g)
    assert result["genotype_id"] == g.id
    assert result["fitness"] == pytest.approx(expected.fitness)
    assert result["param_count"] == expected.param_count


def test_search_evolve_writes_artifacts(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    out = tmp_path / "run"
    assert main(["search-evolve", "--config", config, "--out", str(out)]) == 0
    summary = last_json(capsys.readouterr().out)
    assert summary["steps"] == 30 and summary["complete"]

    artifacts = RunArtifacts(str(out))
    rows = read_run_log(artifacts.run_log)
    assert [int(r["step"]) for r in rows] == list(range(1, 31))
    assert [r["edit_class"] for r in rows[:8]] == ["init"] * 8
    best_so_far = [float(r["best_fitness_so_far"]) for r in rows]
    assert best_so_far == sorted(best_so_far)

    with open(artifacts.best_genotype, encoding="utf-8") as f:
        best = decode(f.read())
    assert best.id == summary["best_genotype_id"]
    assert os.path.exists(artifacts.report)
    assert os.listdir(artifacts.dot_dir) == ["cell.dot"]
    with open(artifacts.config, encoding="utf-8") as f:
        assert json.load(f)["total_steps"] == 30


def test_search_random_evaluates_population_only(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    out = tmp_path / "run"
    assert main(["search-random", "--config", config, "--out", str(out)]) == 0
    assert last_json(capsys.readouterr().out)["steps"] == 8
    assert len(read_run_log(RunArtifacts(str(out)).run_log)) == 8


def test_command_line_flags_override_config(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    out = tmp_path / "run"
    assert main(["search-evolve", "--config", config, "--out", str(out), "--steps", "12", "--seed", "9"]) == 0
    assert last_json(capsys.readouterr().out)["total_steps"] == 12
    with open(RunArtifacts(str(out)).config, encoding="utf-8") as f:
        assert json.load(f)["seed"] == 9


def test_stop_and_resume_matches_uninterrupted_run(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    whole = tmp_path / "whole"
    split = tmp_path / "split"
    assert main(["search-evolve", "--config", config, "--out", str(whole)]) == 0
    assert main(["search-evolve", "--config", config, "--out", str(split), "--stop-after", "12"]) == 0
    assert not last_json(capsys.readouterr().out)["complete"]
    assert len(read_run_log(RunArtifacts(str(split)).run_log)) == 12

    assert main(["resume", str(split), "--config", config]) == 0
    assert last_json(capsys.readouterr().out)["complete"]
    assert without_wall_time(read_run_log(RunArtifacts(str(split)).run_log)) == \
        without_wall_time(read_run_log(RunArtifacts(str(whole)).run_log))

    # a finished run resumes to the same table
    assert main(["resume", str(split)]) == 0
    assert len(read_run_log(RunArtifacts(str(split)).run_log)) == 30


def test_resume_with_other_representation_fails(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    other = write_json(tmp_path / "other.json", {**SMALL_RUN, "representation": "hierarchical"})
    out = tmp_path / "run"
    assert main(["search-evolve", "--config", config, "--out", str(out), "--stop-after", "5"]) == 0
    capsys.readouterr()
    assert main(["resume", str(out), "--config", other]) == 2
    assert last_json(capsys.readouterr().err)["error"] == "IncompatibleCheckpoint"


def test_unknown_config_key_fails(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", {**SMALL_RUN, "mutation_rate": 0.1})
    assert main(["search-evolve", "--config", config, "--out", str(tmp_path / "run")]) == 2
    error = last_json(capsys.readouterr().err)
    assert error["error"] == "ConfigError"
    assert "mutation_rate" in error["message"]


def test_missing_genotype_file_fails(tmp_path, capsys):
    assert main(["inspect", str(tmp_path / "missing.json")]) == 2
    assert last_json(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_interrupted_search_leaves_resumable_checkpoint(tmp_path, capsys, monkeypatch):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    whole = tmp_path / "whole"
    killed = tmp_path / "killed"
    assert main(["search-evolve", "--config", config, "--out", str(whole)]) == 0

    monkeypatch.setattr(cli, "make_evaluator", lambda cfg: InterruptingEvaluator(15))
    assert main(["search-evolve", "--config", config, "--out", str(killed)]) == EXIT_INTERRUPTED
    assert last_json(capsys.readouterr().err)["error"] == "KeyboardInterrupt"
    artifacts = RunArtifacts(str(killed))
    assert os.path.exists(artifacts.checkpoint)
    assert len(read_run_log(artifacts.run_log)) == 14

    monkeypatch.undo()
    assert main(["resume", str(killed)]) == 0
    assert last_json(capsys.readouterr().out)["complete"]
    assert without_wall_time(read_run_log(artifacts.run_log)) == \
        without_wall_time(read_run_log(RunArtifacts(str(whole)).run_log))


@pytest.mark.parametrize("section", [
    {"trainer": {"steps": "many"}},
    {"dataset": {"classes": 1.5}},
    {"model": {"groups": "three"}},
])
def test_ill_typed_config_section_fails(tmp_path, capsys, hierarchical_spec, section):
    path = write_genotype_file(tmp_path / "g.json", trivial_genotype(hierarchical_spec, genotype_id=1))
    config = write_json(tmp_path / "config.json", {"fitness_backend": "trainer", **section})
    assert main(["eval", path, "--config", config]) == 2
    assert last_json(capsys.readouterr().err)["error"] == "ConfigError"


def test_param_backend_without_threshold_fails(tmp_path, capsys):
    config = write_json(tmp_path / "config.json", SMALL_RUN)
    out = str(tmp_path / "run")
    assert main(["search-evolve", "--config", config, "--out", out, "--fitness", "param"]) == 2
    assert last_json(capsys.readouterr().err)["error"] == "ConfigError"
    assert main(["search-evolve", "--config", config, "--out", out, "--fitness", "param",
                 "--param-threshold", "500"]) == 0
    assert last_json(capsys.readouterr().out)["complete"]
