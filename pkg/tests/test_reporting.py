import csv
import json

import numpy as np
import pytest
import yaml

from fedatsim.nn import ModelSpec, init_params, load_checkpoint
from fedatsim.reporting import (
    METRICS_NAME,
    SUMMARY_NAME,
    RunWriter,
    read_metrics,
    render_comparison_figure,
    render_interpolation_figure,
    render_run_figures,
    render_svcca_figure,
    write_table,
    write_yaml,
)


def test_write_table_union_columns_and_cells(tmp_path):
    path = tmp_path / "t.csv"
    write_table(str(path), [{"a": 1.5, "b": None}, {"a": 2, "c": "x"}])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "1.5,,"
    assert lines[2] == "2,,x"
    assert not (tmp_path / "t.csv.tmp").exists()


def test_write_table_explicit_columns(tmp_path):
    path = tmp_path / "t.csv"
    write_table(str(path), [{"a": 1, "b": 2}], columns=["b", "a"])
    assert path.read_text().splitlines() == ["b,a", "2,1"]


def test_write_table_float_repr_roundtrips(tmp_path):
    path = tmp_path / "t.csv"
    value = 0.1 + 0.2  # 0.30000000000000004
    write_table(str(path), [{"x": value}])
    with open(path, newline="") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["x"]) == value


def test_write_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    tree = {"b": 1, "a": {"x": [1, 2]}}
    write_yaml(str(path), tree)
    assert yaml.safe_load(path.read_text()) == tree
    assert list(yaml.safe_load(path.read_text())) == ["b", "a"]  # insertion order kept


def test_read_metrics_skips_blank_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"round": 0}\n\n{"round": 1}\n')
    assert read_metrics(str(path)) == [{"round": 0}, {"round": 1}]


def test_run_writer_streams_and_finalizes(tmp_path):
    out = tmp_path / "run"
    writer = RunWriter(str(out))
    writer.write_config({"run": {"seed": 0}})
    writer.write_round({"round": 0, "nat_acc": 0.5})
    # the stream is flushed per record, so partial output is already readable
    tmp_stream = out / f"{METRICS_NAME}.tmp"
    assert json.loads(tmp_stream.read_text().splitlines()[0]) == {"round": 0, "nat_acc": 0.5}
    writer.write_round({"round": 1, "nat_acc": 0.75})
    writer.finalize()
    writer.finalize()  # idempotent
    assert not tmp_stream.exists()
    assert read_metrics(str(out / METRICS_NAME)) == [
        {"round": 0, "nat_acc": 0.5},
        {"round": 1, "nat_acc": 0.75},
    ]
    summary = (out / SUMMARY_NAME).read_text().splitlines()
    assert summary[0] == "round,nat_acc"
    assert len(summary) == 3
    assert yaml.safe_load((out / "config.yaml").read_text()) == {"run": {"seed": 0}}


def test_run_writer_save_model(tmp_path):
    out = tmp_path / "run"
    writer = RunWriter(str(out))
    spec = ModelSpec(layer_sizes=(3, 4, 2), seed=1)
    params = init_params(spec)
    writer.save_model("model.ckpt", params, spec)
    writer.finalize()
    loaded, loaded_spec = load_checkpoint(out / "model.ckpt")
    assert np.array_equal(loaded, params) and loaded_spec == spec


def records_fixture():
    recs = []
    for t in range(6):
        rec = {
            "round": t,
            "e_t": 2 if t < 3 else 1,
            "nat_acc": 0.4 + 0.05 * t if t % 2 == 1 else None,
            "adv_acc": 0.2 + 0.05 * t if t % 2 == 1 else None,
            "mean_loss": 1.5 - 0.1 * t,
        }
        if t in (2, 5):
            rec["svcca_l1"] = 0.8
            rec["svcca_l2"] = 0.7
        recs.append(rec)
    return recs


def test_render_run_figures(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    with open(run / METRICS_NAME, "w") as fh:
        for rec in records_fixture():
            fh.write(json.dumps(rec) + "\n")
    figs = tmp_path / "figs"
    written = render_run_figures(str(run), str(figs))
    names = sorted(p.rsplit("/", 1)[-1] for p in written)
    assert names == ["accuracy_curves.png", "drift_curves.png", "training_curves.png"]
    for p in written:
        assert (figs / p.rsplit("/", 1)[-1]).stat().st_size > 0


def test_render_run_figures_without_svcca(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    recs = [{k: v for k, v in r.items() if not k.startswith("svcca")} for r in records_fixture()]
    with open(run / METRICS_NAME, "w") as fh:
        for rec in recs:
            fh.write(json.dumps(rec) + "\n")
    written = render_run_figures(str(run), str(run))
    assert sorted(p.rsplit("/", 1)[-1] for p in written) == [
        "accuracy_curves.png",
        "training_curves.png",
    ]


def test_render_run_figures_empty_metrics(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    (run / METRICS_NAME).write_text("")
    with pytest.raises(ValueError, match="empty"):
        render_run_figures(str(run), str(run))


def test_render_interpolation_figure(tmp_path):
    path = tmp_path / "interpolation.csv"
    rows = [{"w": w, "nat_loss": (w - 0.5) ** 2, "adv_loss": (w - 0.5) ** 2 + 0.2} for w in (0.0, 0.5, 1.0)]
    write_table(str(path), rows, ["w", "nat_loss", "adv_loss"])
    out = render_interpolation_figure(str(path), str(tmp_path))
    assert out.endswith("interpolation.png")
    assert (tmp_path / "interpolation.png").stat().st_size > 0


def test_render_comparison_figure_skips_error_rows(tmp_path):
    path = tmp_path / "comparison.csv"
    rows = [
        {"axis": "schedule.fixed_e", "value": "1", "nat_acc": 0.8, "adv_acc": 0.5, "error": None},
        {"axis": "schedule.fixed_e", "value": "10", "nat_acc": None, "adv_acc": None, "error": "ClientError: x"},
    ]
    write_table(str(path), rows, ["axis", "value", "nat_acc", "adv_acc", "error"])
    out = render_comparison_figure(str(path), str(tmp_path))
    assert (tmp_path / "comparison.png").stat().st_size > 0

    all_bad = tmp_path / "bad.csv"
    write_table(str(all_bad), rows[1:], ["axis", "value", "nat_acc", "adv_acc", "error"])
    with pytest.raises(ValueError, match="no successful runs"):
        render_comparison_figure(str(all_bad), str(tmp_path))


def test_render_svcca_figure(tmp_path):
    path = tmp_path / "svcca.csv"
    write_table(
        str(path),
        [{"layer": 1, "score": 0.9}, {"layer": 2, "score": 0.6}],
        ["layer", "score"],
    )
    render_svcca_figure(str(path), str(tmp_path))
    assert (tmp_path / "svcca_layers.png").stat().st_size > 0
