"""Config handling, presets, artifact layout, and exit codes."""

import json
import math
import shutil

import numpy as np
import pytest

from batchreuse import cli
from batchreuse.cli import (
    ENGINES,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    hardness_report,
    list_presets,
    load_config,
    merge_config,
    run,
)

TINY = {
    "run": {
        "target": "he3",
        "engines": ["sim", "dmft", "one_pass_theory", "hardness"],
        "schedules": ["full_batch_reuse", "fresh_one_pass"],
        "directions": ["teacher"],
    },
    "train": {"d": 150, "runs": 3, "steps": "2"},
    "theory": {"n_samples": 10_000},
}

CSV_HEADER = "t,schedule,direction_name,overlap_mean,overlap_std,loss_mean"


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One small four-engine run shared by the artifact tests."""
    out = tmp_path_factory.mktemp("tiny_out")
    cfg_path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    data = {**TINY, "run": {**TINY["run"], "out": str(out)}}
    cfg_path.write_text(json.dumps(data))
    code = run(cfg_path)
    assert code == 0
    return cfg_path, out


# ---------------------------------------------------------------- config files


def test_ini_config_parses_sections(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(
        "[run]\ntarget = tanh\nengines = sim, dmft\n\n"
        "[train]\nd = 300\neta = 0.25\nlambda = 0.5\n\n"
        "[theory]\nn_samples = 5000\n"
    )
    cfg = ExperimentConfig.from_mapping(load_config(p))
    assert cfg.target == "tanh"
    assert cfg.engines == ("sim", "dmft")
    assert cfg.train["d"] == 300
    assert cfg.train["eta"] == 0.25
    assert cfg.train["lambda"] == 0.5
    assert cfg.theory["n_samples"] == 5000


def test_json_config_equivalent_to_ini(tmp_path):
    ini = tmp_path / "a.ini"
    ini.write_text("[run]\ntarget = he3\n[train]\nd = 200\n")
    js = tmp_path / "a.json"
    js.write_text(json.dumps({"run": {"target": "he3"}, "train": {"d": 200}}))
    assert merge_config(load_config(ini)) == merge_config(load_config(js))


def test_defaults_fill_unset_fields(tmp_path):
    p = tmp_path / "min.ini"
    p.write_text("[run]\ntarget = tanh\n")
    cfg = ExperimentConfig.from_mapping(load_config(p))
    assert cfg.train["d"] == 2000
    assert cfg.train["runs"] == 16
    assert cfg.theory["n_samples"] == 100_000
    assert cfg.engines == ("sim",)
    assert cfg.schedules == ("full_batch_reuse",)


def test_missing_config_file_is_config_error():
    with pytest.raises(ConfigError, match="no such config"):
        load_config("/nonexistent/path.ini")


def test_broken_ini_reports_line(tmp_path):
    p = tmp_path / "broken.ini"
    p.write_text("[run\ntarget = he3\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(p)


def test_broken_json_reports_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"run": {"target": "he3",}}')
    with pytest.raises(ConfigError, match=r":\d+"):
        load_config(p)


def test_unknown_field_named_in_error():
    with pytest.raises(ConfigError, match="train.decay"):
        merge_config({"train": {"decay": 0.9}})
    with pytest.raises(ConfigError, match="run.bogus"):
        merge_config({"run": {"bogus": 1}})
    with pytest.raises(ConfigError, match="extras"):
        merge_config({"extras": {}})


def test_bad_value_names_section_and_key():
    with pytest.raises(ConfigError, match="train.d"):
        merge_config({"train": {"d": "many"}})


# ------------------------------------------------------------------ validation


def test_target_required():
    with pytest.raises(ConfigError, match="run.target"):
        ExperimentConfig.from_mapping({"run": {"engines": ["sim"]}})


def test_unknown_engine_rejected():
    with pytest.raises(ConfigError, match="warp"):
        ExperimentConfig.from_mapping({"run": {"target": "he3", "engines": ["warp"]}})


def test_empty_engine_list_rejected():
    with pytest.raises(ConfigError, match="empty"):
        ExperimentConfig.from_mapping({"run": {"target": "he3", "engines": "  ,  "}})


def test_unknown_schedule_rejected():
    with pytest.raises(ConfigError, match="schedules"):
        ExperimentConfig.from_mapping(
            {"run": {"target": "he3", "schedules": ["shuffled"]}}
        )


def test_unknown_direction_rejected():
    with pytest.raises(ConfigError, match="directions"):
        ExperimentConfig.from_mapping(
            {"run": {"target": "he3", "directions": ["sideways"]}}
        )


def test_custom_direction_length_must_match_k():
    with pytest.raises(ConfigError, match="k=2"):
        ExperimentConfig.from_mapping(
            {"run": {"target": "staircase2", "directions": ["custom:1,0,0"]}}
        )


def test_theory_engines_need_paired_sign_layer():
    base = {"run": {"target": "he3", "engines": ["dmft"]}}
    with pytest.raises(ConfigError, match="second_layer"):
        ExperimentConfig.from_mapping(
            {**base, "train": {"second_layer": "gaussian"}}
        )
    with pytest.raises(ConfigError, match="grad_normalization"):
        ExperimentConfig.from_mapping(
            {**base, "train": {"grad_normalization": "mean"}}
        )
    # sim alone accepts either
    cfg = ExperimentConfig.from_mapping(
        {"run": {"target": "he3"}, "train": {"second_layer": "gaussian"}}
    )
    assert cfg.train["second_layer"] == "gaussian"


def test_symbolic_sizes_resolve_against_dataset():
    cfg = ExperimentConfig.from_mapping(
        {
            "run": {"target": "he3", "schedules": ["sequential(n/5)"]},
            "train": {"d": 100, "alpha": 3.0, "steps": "2*n"},
        }
    )
    tc = cfg.train_config("sequential(n/5)")
    assert tc.schedule.size == 60  # n = 300
    assert tc.steps == 600
    assert cfg.train_config("cycle_epochs(3)").schedule.size == 3
    assert cfg.train_config("with_replacement(n)").schedule.size == 300


def test_bad_symbolic_size_rejected():
    cfg = ExperimentConfig.from_mapping({"run": {"target": "he3"}})
    with pytest.raises(ConfigError, match="cannot read size"):
        cfg.train_config("sequential(n*n)")


def test_lambda_key_lands_on_weight_decay():
    cfg = ExperimentConfig.from_mapping(
        {"run": {"target": "he3"}, "train": {"lambda": 0.25}}
    )
    assert cfg.train_config("full_batch_reuse").lam == 0.25
    assert cfg.dmft_config().lam == 0.25


def test_direction_resolution_shapes():
    cfg = ExperimentConfig.from_mapping(
        {"run": {"target": "staircase2", "directions": ["teacher", "custom:-1,1"]}}
    )
    dirs = cfg.resolve_directions(cfg.resolve_target())
    assert [d.name for d in dirs] == ["e1", "e2", "custom:-1,1"]
    np.testing.assert_allclose(
        dirs[2].coefficients, [-1 / math.sqrt(2), 1 / math.sqrt(2)]
    )


# --------------------------------------------------------------------- presets


def test_preset_names_cover_shipped_panels():
    for name in (
        "fig1_left", "fig1_center", "fig1_right",
        "fig2_left", "fig2_center", "fig2_right",
        "fig3", "fig4_sequential", "fig4_replacement",
        "fig5_minibatch1", "staircase",
    ):
        assert name in PRESETS


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.parametrize("paper", [False, True])
def test_every_preset_validates(name, paper):
    layers = [PRESETS[name]]
    if paper:
        layers.append(
            {"train": {"d": 5000, "runs": 32}, "theory": {"n_samples": 1_000_000}}
        )
    cfg = ExperimentConfig.from_mapping(merge_config(*layers))
    tc = cfg.train_config(cfg.schedules[0])
    expect = 5000 if paper else 2000
    assert tc.d == expect
    assert tc.runs == (32 if paper else 16)
    cfg.resolve_directions(cfg.resolve_target())


def test_preset_facts():
    assert PRESETS["fig1_center"]["run"]["target"] == "he3"
    assert PRESETS["fig2_right"]["run"]["directions"] == ["C1", "custom:-1,1"]
    assert PRESETS["fig4_sequential"]["run"]["schedules"] == ["sequential(n/5)"]
    assert PRESETS["fig5_minibatch1"]["train"]["steps"] == "2*n"
    assert PRESETS["staircase"]["run"]["target"] == "staircase3"
    fig4 = ExperimentConfig.from_mapping(PRESETS["fig4_sequential"])
    tc = fig4.train_config("sequential(n/5)")
    assert tc.schedule.size * 5 == int(round(tc.alpha * tc.d))


def test_list_presets_one_line_each():
    table = list_presets()
    lines = table.splitlines()
    assert len(lines) == len(PRESETS)
    for name, preset in PRESETS.items():
        row = next(l for l in lines if l.startswith(name))
        assert preset["run"]["target"] in row


# ------------------------------------------------------------------- artifacts


def test_run_writes_all_engine_outputs(tiny_run):
    _, out = tiny_run
    names = {p.name for p in out.iterdir()}
    assert names == {
        "sim_full_batch_reuse.csv",
        "sim_fresh_one_pass.csv",
        "dmft.csv",
        "dmft_kernels.json",
        "one_pass_theory.csv",
        "hardness.json",
        "manifest.json",
    }


def test_csv_schema_shared_across_engines(tiny_run):
    _, out = tiny_run
    for name in ("sim_full_batch_reuse.csv", "dmft.csv", "one_pass_theory.csv"):
        header = (out / name).read_text().splitlines()[0]
        assert header == CSV_HEADER, name


def test_manifest_contents(tiny_run):
    _, out = tiny_run
    m = json.loads((out / "manifest.json").read_text())
    assert set(m) == {"config", "engines", "outputs", "seeds", "version", "wall_times_s"}
    assert m["engines"] == list(TINY["run"]["engines"])
    assert m["config"]["train"]["d"] == 150
    assert m["config"]["theory"]["n_samples"] == 10_000
    assert m["seeds"]["base"] == 0
    assert isinstance(m["version"], str) and m["version"]
    for key in ("sim:full_batch_reuse", "sim:fresh_one_pass", "dmft",
                "one_pass_theory", "hardness"):
        assert m["wall_times_s"][key] >= 0.0
    for name in m["outputs"]:
        assert (out / name).exists()


def test_hardness_artifact_keyed_by_direction(tiny_run):
    _, out = tiny_run
    report = json.loads((out / "hardness.json").read_text())
    assert list(report) == ["e1"]
    assert "status" in report["e1"]


def test_rerun_from_manifest_is_bit_identical(tiny_run, tmp_path):
    _, out = tiny_run
    keep = tmp_path / "first"
    shutil.copytree(out, keep)
    assert run(out / "manifest.json") == 0
    for name in keep.iterdir():
        if name.name == "manifest.json":
            continue  # wall times differ
        assert (out / name.name).read_bytes() == name.read_bytes(), name.name


def test_flag_overrides_echoed_in_manifest(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**TINY, "run": {**TINY["run"]}}))
    out = tmp_path / "o"
    code = cli.main([
        "run", str(cfg),
        "--eta", "0.2", "--T", "1", "--lambda", "0.125", "--seed", "7",
        "--runs", "2", "--samples", "5000", "--d", "120", "--alpha", "2.5",
        "--p", "1", "--engines", "sim", "--schedule", "sequential(n/5)",
        "--out", str(out),
    ])
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    t = m["config"]["train"]
    assert (t["eta"], t["steps"], t["lambda"], t["seed"]) == (0.2, "1", 0.125, 7)
    assert (t["runs"], t["d"], t["alpha"], t["p"]) == (2, 120, 2.5, 1)
    assert m["config"]["theory"]["n_samples"] == 5000
    assert m["config"]["run"]["engines"] == ["sim"]
    assert m["config"]["run"]["schedules"] == ["sequential(n/5)"]
    assert m["outputs"] == ["sim_sequential_60.csv"]


def test_preset_with_shrinking_overrides_runs(tmp_path):
    out = tmp_path / "o"
    code = run(
        preset="fig1_left",
        overrides={
            "run": {"engines": ["sim"], "out": str(out)},
            "train": {"d": 100, "runs": 2, "steps": "2"},
        },
    )
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["run"]["target"] == "tanh"
    assert m["config"]["train"]["d"] == 100


def test_config_file_overrides_preset(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[train]\neta = 0.3\n")
    out = tmp_path / "o"
    code = run(
        cfg,
        preset="fig1_left",
        overrides={
            "run": {"engines": ["sim"], "out": str(out)},
            "train": {"d": 100, "runs": 2, "steps": "1"},
        },
    )
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["run"]["target"] == "tanh"
    assert m["config"]["train"]["eta"] == 0.3


def test_paper_scale_changes_echo_only_fields(tmp_path):
    # validate the merge without paying for a big run
    layers = [PRESETS["fig1_left"],
              {"train": {"d": 5000, "runs": 32}, "theory": {"n_samples": 1_000_000}}]
    merged = merge_config(*layers)
    assert merged["train"]["d"] == 5000
    assert merged["train"]["runs"] == 32
    assert merged["theory"]["n_samples"] == 1_000_000
    assert merged["train"]["eta"] == PRESETS["fig1_left"]["train"]["eta"]


# ------------------------------------------------------------------ exit codes


def test_run_without_source_or_preset_fails(capsys):
    assert run() == 2
    assert "config" in capsys.readouterr().err


def test_unknown_preset_lists_known_names(capsys):
    assert run(preset="fig9") == 2
    err = capsys.readouterr().err
    assert "fig1_left" in err


def test_bad_config_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\ntarget = he3\nengines = warp\n")
    assert cli.main(["run", str(p)]) == 2
    assert "warp" in capsys.readouterr().err


def test_numerical_abort_exits_three(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "run": {"target": "he3", "engines": ["sim"], "out": str(tmp_path / "o")},
        "train": {"d": 100, "runs": 1, "steps": "8", "eta": 1000.0,
                  "activation": "he3"},
    }))
    assert cli.main(["run", str(cfg)]) == 3
    assert "numerical abort" in capsys.readouterr().err


# ---------------------------------------------------------------- sub commands


def test_list_presets_command(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "fig5_minibatch1" in out
    assert "staircase3" in out


def test_hardness_report_directions():
    report = hardness_report("linear_plus_he3", 4, customs=("custom:0,1",))
    assert list(report) == ["e1", "e2", "custom:0,1"]
    for verdict in report.values():
        assert "status" in verdict and "moments" in verdict


def test_hardness_report_bad_target():
    with pytest.raises(ConfigError, match="target"):
        hardness_report("no_such_surface")


def test_hardness_report_command_writes_file(tmp_path, capsys):
    out = tmp_path / "verdicts.json"
    code = cli.main([
        "hardness-report", "he3", "--k-max", "4", "--out", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert "e1" in report
    assert report["e1"]["k_max"] == 4


def test_engine_list_is_fixed():
    assert ENGINES == ("sim", "dmft", "one_pass_theory", "hardness")
