import pytest
import yaml

from fedatsim import ConfigError, build_config, config_to_dict, load_config
from fedatsim.config import apply_overrides, parse_number, set_dotted


def test_defaults():
    cfg = build_config({})
    assert cfg.model.hidden == (24, 16) and cfg.model.activation == "relu"
    assert cfg.data.source == "synthetic" and cfg.data.classes == 5
    assert cfg.data.per_class == 100 and cfg.data.input_dim == 10
    assert cfg.partition.kind == "non_iid" and cfg.partition.clients == 5
    assert cfg.attack.t_steps == 5 and cfg.attack.epsilon == 0.1
    assert cfg.optim.kind == "sgd_momentum" and cfg.optim.batch_size == 32
    assert cfg.fusion.kind == "fedavg" and cfg.fusion.lam == 0.0
    assert cfg.schedule.is_fixed and cfg.schedule.e0 == 1
    assert cfg.run.rounds == 10 and cfg.run.seed == 0
    assert cfg.run.adv_eval == "auto" and cfg.run.svcca_layers is None


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        build_config({"modle": {}})
    with pytest.raises(ConfigError, match="optim.lr: unknown key"):
        build_config({"optim": {"lr": 0.1}})


def test_all_problems_collected():
    with pytest.raises(ConfigError) as err:
        build_config({"model": {"activation": "gelu"}, "run": {"rounds": 0}})
    assert len(err.value.problems) == 2
    assert any("model.activation" in p for p in err.value.problems)
    assert any("run.rounds" in p for p in err.value.problems)


def test_parse_number():
    assert parse_number(3) == 3.0
    assert parse_number("0.25") == 0.25
    assert parse_number("8/255") == 8 / 255
    with pytest.raises(ValueError):
        parse_number(True)
    with pytest.raises(ValueError):
        parse_number("not-a-number")


def test_fraction_strings_accepted():
    cfg = build_config({"attack": {"epsilon": "8/255", "alpha": "2/255"}})
    assert cfg.attack.epsilon == 8 / 255
    assert cfg.attack.alpha == 2 / 255


def test_boolean_is_not_a_number():
    with pytest.raises(ConfigError, match="learning_rate"):
        build_config({"optim": {"learning_rate": True}})


def test_hidden_must_be_positive_int_list():
    with pytest.raises(ConfigError, match="model.hidden"):
        build_config({"model": {"hidden": [8, 0]}})
    with pytest.raises(ConfigError, match="model.hidden"):
        build_config({"model": {"hidden": "8,4"}})


def test_schedule_partial_triple_rejected():
    with pytest.raises(ConfigError, match="gamma_e, freq_e as well"):
        build_config({"schedule": {"e0": 10}})


def test_schedule_decay_triple():
    cfg = build_config({"schedule": {"e0": 50, "gamma_e": 0.5, "freq_e": 5}})
    assert (cfg.schedule.e0, cfg.schedule.gamma, cfg.schedule.freq) == (50, 0.5, 5)
    assert not cfg.schedule.is_fixed


def test_schedule_bad_gamma():
    with pytest.raises(ConfigError, match="gamma"):
        build_config({"schedule": {"e0": 5, "gamma_e": 1.5, "freq_e": 1}})


def test_csv_source_requires_path():
    with pytest.raises(ConfigError, match="csv_path"):
        build_config({"data": {"source": "csv"}})


def test_non_iid_cross_checks():
    with pytest.raises(ConfigError, match="divisible"):
        build_config({"partition": {"clients": 3}})
    with pytest.raises(ConfigError, match="majority share"):
        build_config({"partition": {"clients": 5, "skew": 30.0}})
    # iid partition has no divisibility constraint
    build_config({"partition": {"kind": "iid", "clients": 3}})


def test_seed_override():
    assert build_config({}, seed=7).run.seed == 7
    assert build_config({"run": {"seed": 3}}, seed=9).run.seed == 9
    with pytest.raises(ConfigError, match="seed"):
        build_config({}, seed=-1)
    with pytest.raises(ConfigError, match="seed"):
        build_config({"run": {"seed": -3}})


def test_set_dotted_and_overrides():
    tree: dict = {}
    apply_overrides(
        tree, ["optim.learning_rate=0.05", "model.hidden=[8, 4]", "fusion.kind=fedcurv"]
    )
    cfg = build_config(tree)
    assert cfg.optim.learning_rate == 0.05
    assert cfg.model.hidden == (8, 4)
    assert cfg.fusion.kind == "fedcurv"


def test_override_errors():
    with pytest.raises(ConfigError, match="KEY=VALUE"):
        apply_overrides({}, ["nonsense"])
    with pytest.raises(ConfigError, match="not a mapping"):
        apply_overrides({"run": 5}, ["run.seed=1"])
    with pytest.raises(ValueError, match="not a mapping"):
        set_dotted({"a": 5}, "a.b", 1)


def test_load_config(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({"run": {"rounds": 4}, "optim": {"batch_size": 16}}))
    cfg = load_config(path)
    assert cfg.run.rounds == 4 and cfg.optim.batch_size == 16
    cfg = load_config(path, overrides=["run.rounds=6"], seed=11)
    assert cfg.run.rounds == 6 and cfg.run.seed == 11


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("run: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)
    listy = tmp_path / "list.yaml"
    listy.write_text("- a\n- b\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(listy)
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_config(empty).run.rounds == 10


def test_config_to_dict_roundtrip():
    tree = {
        "model": {"hidden": [12, 8], "activation": "tanh"},
        "fusion": {"kind": "fedcurv", "lambda": 0.5},
        "schedule": {"e0": 20, "gamma_e": 0.5, "freq_e": 4},
        "run": {"svcca_every": 5, "svcca_layers": [1, 2]},
    }
    cfg = build_config(tree)
    echoed = config_to_dict(cfg)
    assert build_config(echoed) == cfg
    assert echoed["schedule"] == {"fixed_e": None, "e0": 20, "gamma_e": 0.5, "freq_e": 4}
    assert echoed["fusion"] == {"kind": "fedcurv", "lambda": 0.5}


def test_config_to_dict_fixed_schedule_echo():
    echoed = config_to_dict(build_config({"schedule": {"fixed_e": 3}}))
    assert echoed["schedule"] == {"fixed_e": 3, "e0": None, "gamma_e": None, "freq_e": None}
    assert build_config(echoed).schedule.e0 == 3
