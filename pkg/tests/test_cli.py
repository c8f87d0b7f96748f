import json
import re
import subprocess
import sys
import time

import pytest

from precision_highway import cli, lstmcell as lc, modelio, resblocks as rb


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _write_yaml(path, text):
    path.write_text(text)
    return str(path)


def _read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_levels_two_bits(capsys):
    code, out, _ = _run(["levels", "--bits", "2"], capsys)
    assert code == 0
    spacing = float(re.search(r"spacing=([\d.]+)", out).group(1))
    assert 1.52 <= spacing <= 1.54
    assert "levels" in out


def test_levels_table(capsys):
    code, out, _ = _run(["levels"], capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 8


def test_levels_rejects_bits(capsys):
    code, _, err = _run(["levels", "--bits", "0"], capsys)
    assert code == 1 and "error" in err


def test_count_lstm_300(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", "lstm:\n  input_size: 300\n  hidden_size: 300\n")
    code, out, _ = _run(["count", "--config", cfg], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["model"] == "lstm"
    assert doc["counts"] == {"low_precision_mac": 720000, "high_precision_add": 300,
                             "nonlinear_op": 1500, "elementwise_mul": 900}
    assert doc["schema_version"] == 1


def test_count_toy_resnet(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml",
                      "resnet:\n  num_blocks: 1\n  channels: 2\n  spatial: 4\n  convs_per_block: 1\n")
    code, out, _ = _run(["count", "--config", cfg], capsys)
    assert json.loads(out)["counts"]["low_precision_mac"] == 576


def test_cost_reports_overhead(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", "resnet:\n  activation_bits: 2\n  weight_bits: 2\n")
    code, out, _ = _run(["cost", "--config", cfg], capsys)
    assert code == 0
    doc = json.loads(out)
    assert 0 < doc["highway_overhead"] < 0.10
    assert doc["bits"]["highway"] == "full"


def test_cost_params_override(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", "resnet:\n  activation_bits: 2\n")
    params = _write_yaml(tmp_path / "p.yaml", "mac_energy_pj: 4.0\n")
    _, out, _ = _run(["cost", "--config", cfg, "--params", params], capsys)
    assert json.loads(out)["params"]["mac_energy_pj"] == 4.0


def test_profile_resnet_smoke(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", "resnet:\n  num_blocks: 4\n")
    out = tmp_path / "run"
    t0 = time.perf_counter()
    code, stdout, _ = _run(["profile-resnet", "--config", cfg, "--seeds", "0", "--out", str(out)], capsys)
    assert time.perf_counter() - t0 < 60
    assert code == 0
    files = _read_all(out)
    assert set(files) == {"profile_resnet.csv", "profile_resnet.json", "profile_resnet.svg", "metadata.json"}
    lines = files["profile_resnet.csv"].decode().splitlines()
    assert lines[0] == "variant,seed,position,error"
    assert len(lines) == 1 + 2 * 4
    meta = json.loads(files["metadata.json"])
    assert meta["seeds"] == [0] and meta["version"] and meta["config"]["resnet"]["num_blocks"] == 4
    assert files["profile_resnet.svg"].startswith(b"<svg")


def test_emit_flags(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", "resnet:\n  num_blocks: 2\n  channels: 4\n")
    out = tmp_path / "run"
    _run(["profile-resnet", "--config", cfg, "--out", str(out), "--no-svg", "--no-json"], capsys)
    assert set(_read_all(out)) == {"profile_resnet.csv", "metadata.json"}


SMALL_YAML = """\
resnet:
  num_blocks: 3
  channels: 8
  activation_bits: 2
lstm:
  input_size: 8
  hidden_size: 8
sequence_length: 12
"""

COMMANDS = [
    ["profile-resnet", "--seeds", "0-2"],
    ["profile-lstm", "--seeds", "0-2"],
    ["sweep-highway", "--seeds", "0-1", "--bits", "full,8,6"],
    ["count", "--model", "resnet"],
    ["count", "--model", "lstm"],
    ["cost", "--model", "resnet"],
    ["cost", "--model", "lstm"],
]


@pytest.mark.parametrize("argv", COMMANDS, ids=lambda a: " ".join(a[:3]))
def test_reruns_byte_identical(tmp_path, capsys, argv):
    cfg = _write_yaml(tmp_path / "c.yaml", SMALL_YAML)
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        code, _, _ = _run(argv + ["--config", cfg, "--out", str(d)], capsys)
        assert code == 0
        outs.append({k: v for k, v in _read_all(d).items() if not k.endswith(".svg")})
    assert outs[0] == outs[1]
    assert outs[0]


def test_parallel_jobs_match_serial(tmp_path, capsys):
    cfg = _write_yaml(tmp_path / "c.yaml", SMALL_YAML)
    _run(["profile-resnet", "--config", cfg, "--seeds", "0-3", "--out", str(tmp_path / "a")], capsys)
    _run(["profile-resnet", "--config", cfg, "--seeds", "0-3", "--jobs", "2", "--out", str(tmp_path / "b")], capsys)
    assert (tmp_path / "a" / "profile_resnet.csv").read_bytes() == (tmp_path / "b" / "profile_resnet.csv").read_bytes()


def test_profile_from_saved_weights_and_input(tmp_path, capsys):
    net_cfg = rb.ResidualNetConfig(num_blocks=2, channels=4, spatial=5)
    modelio.save(rb.build_random_net(net_cfg), tmp_path / "net.phw")
    modelio.save({"x": rb.random_input(net_cfg, seed=9)}, tmp_path / "x.phw")
    cfg = _write_yaml(tmp_path / "c.yaml", "resnet:\n  num_blocks: 2\n  channels: 4\n  spatial: 5\n"
                      "weights: net.phw\ninput: x.phw\n")
    code, _, err = _run(["profile-resnet", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 0, err


def test_profile_lstm_from_saved_weights(tmp_path, capsys):
    lcfg = lc.LstmConfig(input_size=4, hidden_size=3)
    modelio.save(lc.init_weights(lcfg), tmp_path / "w.phw", lcfg)
    cfg = _write_yaml(tmp_path / "c.yaml", "lstm:\n  input_size: 4\n  hidden_size: 3\nweights: w.phw\n")
    code, _, err = _run(["profile-lstm", "--config", cfg, "--steps", "5", "--out", str(tmp_path / "o")], capsys)
    assert code == 0, err
    assert len((tmp_path / "o" / "profile_lstm.csv").read_text().splitlines()) == 1 + 2 * 5


@pytest.mark.parametrize("yaml_text,fragment", [
    ("resnet:\n  depth: 3\n", "depth"),
    ("resnet:\n  activation_bits: 0\n", "bit-width"),
    ("resnet:\n  activation_bits: two\n", "bit-width"),
    ("bogus: 1\n", "unknown"),
    ("resnet: [1, 2\n", "YAML"),
    ("resnet:\n  num_blocks: 2\nweights: missing.phw\n", "missing.phw"),
])
def test_bad_config_exits_nonzero(tmp_path, capsys, yaml_text, fragment):
    cfg = _write_yaml(tmp_path / "c.yaml", yaml_text)
    code, _, err = _run(["profile-resnet", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert fragment in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = _run(["count", "--config", str(tmp_path / "nope.yaml")], capsys)
    assert code == 1 and "cannot read" in err


def test_bad_seeds(tmp_path, capsys):
    code, _, err = _run(["profile-resnet", "--seeds", "1,1", "--out", str(tmp_path)], capsys)
    assert code == 1 and "duplicate" in err


def test_parse_seeds():
    assert cli.parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    with pytest.raises(cli.UsageError):
        cli.parse_seeds(",")


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "precision_highway", "levels", "--bits", "1"],
                         capture_output=True, text=True, check=True)
    assert "spacing=2.0000" in out.stdout
