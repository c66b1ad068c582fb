import json

import pytest

from unoma.cli import main
from unoma.config import (
    ConfigError,
    load_config,
    preset_config,
    validate_config,
)
from unoma.engine import config_hash, run_experiment, subseed


def _tiny_link_config():
    return {
        "kind": "link_level",
        "name": "tiny",
        "seed": 1,
        "trials": 200,
        "scheme": "pd-noma",
        "k": 1,
        "n": 2,
        "q": 2,
        "sweep": {"variable": "snr_db", "values": [0.0, 6.0]},
    }


def _tiny_association_config():
    return {
        "kind": "association_sweep",
        "name": "assoc",
        "seed": 3,
        "trials": 60,
        "workers": 1,
        "region_radius_m": 500.0,
        "probe": "uniform",
        "guaranteed_bs": "center",
        "tiers": [
            {"tier_id": "macro", "tx_power_dbm": 40.0,
             "density_per_m2": 6.4e-7, "antennas": 200, "streams": 15},
            {"tier_id": "pico", "tx_power_dbm": 30.0,
             "density_factor_of_sweep": 1.0},
        ],
        "sweep": {"variable": "small_cell_density_per_m2",
                  "values": [1e-6, 5e-6]},
    }


def test_presets_validate():
    fig4 = preset_config("fig4")
    assert fig4.kind == "association_sweep"
    assert fig4.trials >= 20000
    assert len(fig4.sweep_values) >= 6
    assert fig4.data["tiers"][0]["array_gain"] == pytest.approx(12.4)
    fig5 = preset_config("fig5")
    assert fig5.kind == "allocation_sweep"
    assert fig5.trials >= 100
    assert fig5.data["taus"] == [2, 3]
    with pytest.raises(ConfigError):
        preset_config("fig6")


def test_unknown_key_rejected():
    data = _tiny_link_config()
    data["bogus"] = 1
    with pytest.raises(ConfigError) as exc:
        validate_config(data)
    assert "bogus" in str(exc.value)


def test_missing_required_key():
    data = _tiny_link_config()
    del data["trials"]
    with pytest.raises(ConfigError) as exc:
        validate_config(data)
    assert "trials" in str(exc.value)


def test_sweep_must_increase():
    data = _tiny_link_config()
    data["sweep"]["values"] = [6.0, 0.0]
    with pytest.raises(ConfigError):
        validate_config(data)
    data["sweep"]["values"] = [0.0, 0.0]
    with pytest.raises(ConfigError):
        validate_config(data)


def test_sweep_variable_checked():
    data = _tiny_link_config()
    data["sweep"]["variable"] = "snr"
    with pytest.raises(ConfigError):
        validate_config(data)


def test_bad_values_rejected():
    for key, val in [("q", 3), ("k", 0), ("trials", 0), ("seed", -1),
                     ("scheme", "cdma"), ("max_iters", 0)]:
        data = _tiny_link_config()
        data[key] = val
        with pytest.raises(ConfigError):
            validate_config(data)


def test_allocation_config_checks():
    data = dict(preset_config("fig5").data)
    data["taus"] = [2, 0]
    with pytest.raises(ConfigError):
        validate_config(data)
    data = dict(preset_config("fig5").data)
    data["schemes"] = ["noma", "tdma"]
    with pytest.raises(ConfigError):
        validate_config(data)
    data = dict(preset_config("fig5").data)
    data["a_m"], data["a_n"] = 0.5, 0.5
    with pytest.raises(ConfigError):
        validate_config(data)


def test_tier_checks():
    data = _tiny_association_config()
    data["tiers"].append(dict(data["tiers"][0]))
    with pytest.raises(ConfigError):  # duplicate tier_id
        validate_config(data)
    data = _tiny_association_config()
    data["tiers"][0]["array_gain"] = 3.0  # conflicts with antennas/streams
    with pytest.raises(ConfigError):
        validate_config(data)
    data = _tiny_association_config()
    cfg = validate_config(data)
    assert cfg.data["tiers"][0]["array_gain"] == pytest.approx(12.4)


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_defaults_applied():
    cfg = validate_config(_tiny_link_config())
    assert cfg.workers == 1
    assert cfg.data["max_iters"] == 8
    assert cfg.name == "tiny"


def test_subseed_and_hash_stable():
    assert subseed(1, 2) == subseed(1, 2)
    assert subseed(1, 2) != subseed(2, 1)
    assert 0 <= subseed(0) < 2**63
    a = config_hash({"b": 1, "a": 2})
    b = config_hash({"a": 2, "b": 1})
    assert a == b and len(a) == 64


def test_run_experiment_worker_invariant(tmp_path):
    cfg = validate_config(_tiny_association_config())
    csv1, man1, _ = run_experiment(cfg, tmp_path / "w1", workers=1)
    csv2, _, _ = run_experiment(cfg, tmp_path / "w2", workers=2)
    assert csv1.read_bytes() == csv2.read_bytes()
    manifest = json.loads(man1.read_text())
    assert manifest["config_hash"] == config_hash(cfg.data)
    assert len(manifest["point_seeds"]) == 2
    header = csv1.read_text().splitlines()[0]
    assert header == "sweep_value,tier_id,probability,ci_half_width,trials"


def test_cli_validate_ok(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_tiny_link_config()))
    assert main(["validate", "--config", str(path)]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_validate_bad_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"kind": "link_level"}))
    assert main(["validate", "--config", str(path)]) == 1


def test_cli_missing_config_flag():
    assert main(["run"]) == 1


def test_cli_unknown_command():
    assert main(["frobnicate"]) == 1


def test_cli_missing_file():
    assert main(["run", "--config", "/nonexistent/cfg.json"]) == 1


def test_cli_run_link_level(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_tiny_link_config()))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--output", str(out)]) == 0
    csv = (out / "tiny.csv").read_text().splitlines()
    assert csv[0] == "snr_db,ser,trials,seed"
    assert len(csv) == 3
    # SER should not increase with SNR
    ser = [float(line.split(",")[1]) for line in csv[1:]]
    assert ser[1] <= ser[0]
    assert (out / "tiny_manifest.json").exists()


def test_cli_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_tiny_link_config()))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--output", str(out),
                 "--trials", "50", "--seed", "9"]) == 0
    csv = (out / "tiny.csv").read_text().splitlines()
    assert csv[1].split(",")[2] == "50"
    manifest = json.loads((out / "tiny_manifest.json").read_text())
    assert manifest["master_seed"] == 9
