import json
import struct

import numpy as np
import pytest

from precision_highway import erroranalysis as ea
from precision_highway import lstmcell as lc
from precision_highway import modelio
from precision_highway import resblocks as rb
from precision_highway.modelio import ContainerError

NET_CFG = rb.ResidualNetConfig(num_blocks=3, channels=4, spatial=5, convs_per_block=3, seed=4)


def _manifest_len(data):
    return struct.unpack("<I", data[4:8])[0]


def _rewrite_manifest(data, edit):
    n = _manifest_len(data)
    manifest = json.loads(data[8:8 + n])
    edit(manifest)
    head = json.dumps(manifest).encode()
    return data[:4] + struct.pack("<I", len(head)) + head + data[8 + n:]


def test_residual_round_trip_within_float32_rounding(tmp_path):
    net = rb.build_random_net(NET_CFG)
    path = tmp_path / "net.phw"
    modelio.save(net, path)
    back = modelio.load(path)
    assert back.config == net.config
    for blk_a, blk_b in zip(net.weights, back.weights):
        for a, b in zip(blk_a, blk_b):
            assert a.shape == b.shape
            assert np.max(np.abs(a - b) / np.abs(a)) <= 2.0 ** -23


def test_lstm_round_trip():
    cfg = lc.LstmConfig(input_size=3, hidden_size=2, num_layers=2, seed=1)
    w = lc.init_weights(cfg)
    cfg2, w2 = modelio.loads(modelio.dumps(w, cfg))
    assert cfg2 == cfg
    for la, lb in zip(w, w2):
        for part in ("w_ih", "w_hh", "b_ih", "b_hh"):
            np.testing.assert_allclose(getattr(lb, part), getattr(la, part), rtol=2.0 ** -23)


def test_tensor_dict_round_trip_exact_for_float32_values():
    x = np.random.default_rng(0).uniform(size=(2, 3)).astype(np.float32).astype(np.float64)
    cfg, tensors = modelio.loads(modelio.dumps({"x": x, "empty": np.zeros((0, 4))}, {"note": "in"}))
    assert cfg == {"note": "in"}
    assert tensors["x"].tobytes() == x.tobytes()
    assert tensors["empty"].shape == (0, 4)


def test_empty_container_loads_to_empty_set():
    cfg, tensors = modelio.loads(modelio.dumps({}))
    assert cfg == {} and tensors == {}


def test_serialization_deterministic():
    net = rb.build_random_net(NET_CFG)
    assert modelio.dumps(net) == modelio.dumps(rb.build_random_net(NET_CFG))


def test_manifest_round_trips_exactly():
    data = modelio.dumps(rb.build_random_net(NET_CFG))
    n = _manifest_len(data)
    manifest = json.loads(data[8:8 + n])
    assert manifest["format_version"] == modelio.FORMAT_VERSION
    assert manifest["config"] == NET_CFG.to_dict()
    again = modelio.dumps(modelio.loads(data))
    assert again == data


def test_truncated_payload_reports_offset():
    data = modelio.dumps(rb.build_random_net(NET_CFG))
    cut = data[:-10]
    with pytest.raises(ContainerError, match="truncated") as info:
        modelio.loads(cut)
    assert info.value.offset == len(cut)
    assert f"byte {len(cut)}" in str(info.value)


def test_trailing_bytes_rejected():
    with pytest.raises(ContainerError, match="trailing"):
        modelio.loads(modelio.dumps({"a": np.ones(2)}) + b"\0\0\0\0")


def test_bad_magic_rejected():
    with pytest.raises(ContainerError, match="magic") as info:
        modelio.loads(b"NOPE" + b"\0" * 20)
    assert info.value.offset == 0


def test_version_mismatch_rejected():
    data = _rewrite_manifest(modelio.dumps({"a": np.ones(2)}), lambda m: m.update(format_version=99))
    with pytest.raises(ContainerError, match="version"):
        modelio.loads(data)


def test_unknown_manifest_field_rejected():
    data = _rewrite_manifest(modelio.dumps({"a": np.ones(2)}), lambda m: m.update(extra=1))
    with pytest.raises(ContainerError, match="unknown"):
        modelio.loads(data)


def test_unknown_config_field_rejected():
    data = _rewrite_manifest(modelio.dumps(rb.build_random_net(NET_CFG)), lambda m: m["config"].update(width=3))
    with pytest.raises(ContainerError, match="unknown"):
        modelio.loads(data)


def test_shape_length_mismatch_rejected():
    def edit(m):
        m["tensors"][0]["shape"] = [3]
    data = _rewrite_manifest(modelio.dumps({"a": np.ones(2)}), edit)
    with pytest.raises(ContainerError, match="needs 12 bytes") as info:
        modelio.loads(data)
    assert info.value.offset is not None


def test_lstm_weights_need_config():
    cfg = lc.LstmConfig(input_size=2, hidden_size=2)
    with pytest.raises(TypeError):
        modelio.dumps(lc.init_weights(cfg))


def test_profile_from_reloaded_weights_matches():
    cfg = rb.ResidualNetConfig(num_blocks=6, channels=8, spatial=6, activation_bits=2)
    net = rb.build_random_net(cfg)
    reloaded = modelio.loads(modelio.dumps(net))
    for variant in ea.VARIANTS:
        a = ea.profile_residual(cfg, variant=variant, net=net)
        b = ea.profile_residual(cfg, variant=variant, net=reloaded)
        np.testing.assert_allclose(b.errors, a.errors, rtol=1e-3, atol=1e-5)
