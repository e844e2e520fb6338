import json

import numpy as np
import pytest

from cascadesr import model, ops

TABLE_PARAMS = {
    3: 57_184,
    5: 75_616,
    7: 94_048,
    9: 112_480,
    11: 130_912,
    13: 149_344,
    15: 167_776,
    17: 186_208,
    19: 204_640,
}


@pytest.fixture
def base_net():
    return model.build_base_network(ops.RngState(11))


class TestBuild:
    def test_base_param_count(self, base_net):
        assert model.param_count(base_net) == 57_184

    def test_base_layer_shapes(self, base_net):
        assert base_net.filter_counts() == [64, 32, 1]
        assert [l.spec.kernel_size for l in base_net.layers] == [9, 5, 5]
        assert all(l.spec.pad == 0 for l in base_net.layers)
        assert all(not l.bias.any() for l in base_net.layers)

    def test_same_seed_serializes_identically(self, tmp_path):
        paths = []
        for i in range(2):
            net = model.build_base_network(ops.RngState(42))
            p = tmp_path / f"m{i}.ctsr"
            model.save_model(net, str(p))
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    @pytest.mark.parametrize("depth,expected", sorted(TABLE_PARAMS.items()))
    def test_family_param_counts(self, depth, expected):
        net = model.build_network(depth, ops.RngState(0))
        assert model.param_count(net) == expected

    def test_grown_network_matches_built_counts(self):
        net = model.build_base_network(ops.RngState(1))
        for depth in range(5, 21, 2):
            net = model.insert_layers(net, ops.RngState(depth))
            assert model.param_count(net) == TABLE_PARAMS[depth]


class TestInsertLayers:
    def test_three_to_five(self, base_net):
        grown = model.insert_layers(base_net, ops.RngState(2))
        assert grown.depth == 5
        assert model.param_count(grown) == 75_616
        assert [l.spec.kernel_size for l in grown.layers] == [9, 5, 3, 3, 5]

    def test_inherited_weights_bit_identical(self, base_net):
        before = [l.weights.tobytes() for l in base_net.layers]
        grown = model.insert_layers(base_net, ops.RngState(2))
        inherited = [grown.layers[0], grown.layers[1], grown.layers[-1]]
        assert [l.weights.tobytes() for l in inherited] == before

    def test_insertion_position_and_specs(self, base_net):
        grown = model.insert_layers(base_net, ops.RngState(2))
        for layer in grown.layers[2:4]:
            assert layer.spec.kernel_size == 3
            assert layer.spec.pad == 1
            assert layer.spec.out_filters == 32
            assert layer.spec.activation == model.ACT_RELU
            assert not layer.bias.any()

    def test_17_to_19_delta(self):
        net = model.build_network(17, ops.RngState(0))
        grown = model.insert_layers(net, ops.RngState(1))
        assert model.param_count(grown) - model.param_count(net) == 2 * (3**2 * 32 * 32)

    def test_chain_invariant_preserved(self):
        net = model.build_base_network(ops.RngState(5))
        for _ in range(3):
            net = model.insert_layers(net, ops.RngState(6))
            for a, b in zip(net.layers, net.layers[1:]):
                assert a.spec.out_filters == b.spec.in_channels


class TestForward:
    @pytest.mark.parametrize("depth", [3, 5, 7, 13])
    def test_33_maps_to_17(self, depth):
        net = model.build_network(depth, ops.RngState(0))
        x = np.random.default_rng(0).random((1, 1, 33, 33), dtype=np.float32)
        assert model.forward(net, x).shape == (1, 1, 17, 17)

    def test_zero_weights_zero_output(self, base_net):
        for layer in base_net.layers:
            layer.weights[:] = 0
            layer.bias[:] = 0
        x = np.random.default_rng(0).random((1, 1, 33, 33), dtype=np.float32)
        assert not model.forward(base_net, x).any()

    def test_too_small_input_names_layer(self, base_net):
        x = np.ones((1, 1, 12, 12), np.float32)
        with pytest.raises(model.InvalidNetworkError, match="layer 1"):
            model.forward(base_net, x)

    def test_multi_channel_input_rejected(self, base_net):
        with pytest.raises(model.InvalidNetworkError):
            model.forward(base_net, np.ones((1, 3, 33, 33), np.float32))


class TestMultiplyCount:
    def test_formula_for_base_on_33(self, base_net):
        # 9x9: 1*81*64*25*25, 5x5: 64*25*32*21*21, 5x5: 32*25*1*17*17
        expected = 81 * 64 * 625 + 64 * 25 * 32 * 441 + 32 * 25 * 1 * 289
        assert model.multiply_count(base_net, 33, 33) == expected

    def test_padded_layers_keep_size(self):
        net = model.build_network(5, ops.RngState(0))
        base = model.build_base_network(ops.RngState(0))
        delta = model.multiply_count(net, 33, 33) - model.multiply_count(base, 33, 33)
        assert delta == 2 * (32 * 9 * 32 * 21 * 21)


class TestSerialization:
    def test_round_trip_bytes(self, base_net, tmp_path):
        p1, p2 = tmp_path / "a.ctsr", tmp_path / "b.ctsr"
        model.save_model(base_net, str(p1))
        loaded = model.load_model(str(p1))
        model.save_model(loaded, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_params(self, base_net, tmp_path):
        p = tmp_path / "m.ctsr"
        model.save_model(base_net, str(p))
        assert model.param_count(model.load_model(str(p))) == 57_184

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.ctsr"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(model.ModelFormatError, match="bad magic"):
            model.load_model(str(p))

    def test_version_mismatch(self, base_net, tmp_path):
        p = tmp_path / "m.ctsr"
        model.save_model(base_net, str(p))
        blob = bytearray(p.read_bytes())
        blob[4] = 99
        p.write_bytes(bytes(blob))
        with pytest.raises(model.ModelFormatError, match="version"):
            model.load_model(str(p))

    def test_truncated_payload(self, base_net, tmp_path):
        p = tmp_path / "m.ctsr"
        model.save_model(base_net, str(p))
        blob = p.read_bytes()
        p.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(model.ModelFormatError, match="truncated"):
            model.load_model(str(p))

    def test_trailing_bytes_rejected(self, base_net, tmp_path):
        p = tmp_path / "m.ctsr"
        model.save_model(base_net, str(p))
        p.write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(model.ModelFormatError, match="trailing"):
            model.load_model(str(p))

    def test_sidecar_written_and_parsed(self, base_net, tmp_path):
        p = tmp_path / "m.ctsr"
        base_net.stage_history.append(model.StageRecord(3, 7, 0.001))
        model.save_model(base_net, str(p))
        meta = json.loads((tmp_path / "m.json").read_text())
        assert meta["layers"][0]["kernel_size"] == 9
        assert meta["stage_history"] == [{"depth_after": 3, "epochs_run": 7, "final_loss": 0.001}]
        loaded = model.load_model(str(p))
        assert loaded.stage_history[0].depth_after == 3

    def test_invariants_checked_on_load(self, tmp_path):
        # hand-build a file whose chain is broken (layer0 out=2 feeds in=3)
        import struct

        blob = model.MAGIC + struct.pack("<III", 1, 2, 2)
        blob += struct.pack("<IIIII", 9, 1, 2, 0, 1) + b"\x00" * 4 * (81 * 2 + 2)
        blob += struct.pack("<IIIII", 5, 3, 1, 0, 0) + b"\x00" * 4 * (25 * 3 + 1)
        p = tmp_path / "bad.ctsr"
        p.write_bytes(blob)
        with pytest.raises(model.InvalidNetworkError):
            model.load_model(str(p))


class TestValidation:
    def test_kernel_pattern_enforced(self):
        net = model.build_base_network(ops.RngState(0))
        spec = net.layers[1].spec
        net.layers[1] = model.Layer(
            model.LayerSpec(3, spec.in_channels, spec.out_filters, 1, spec.activation),
            np.zeros((32, 64, 3, 3), np.float32),
            np.zeros(32, np.float32),
        )
        with pytest.raises(model.InvalidNetworkError, match="pattern"):
            net.validate()

    def test_layer_spec_rules(self):
        with pytest.raises(model.InvalidNetworkError):
            model.LayerSpec(7, 1, 1, 0, model.ACT_NONE)
        with pytest.raises(model.InvalidNetworkError):
            model.LayerSpec(5, 1, 1, 1, model.ACT_NONE)  # pad 1 only for 3x3
        with pytest.raises(model.InvalidNetworkError):
            model.LayerSpec(3, 1, 0, 1, model.ACT_NONE)
