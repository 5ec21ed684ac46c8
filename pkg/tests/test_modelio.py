"""Binary model files: roundtrips, corruption detection, version gating."""

import json

import numpy as np
import pytest

from settransport.datagen import PriorConfig, build_unsupervised_dataset
from settransport.modelio import FORMAT_VERSION, MAGIC, load_model, save_model
from settransport.training import TrainConfig, train

MVN = PriorConfig(family="mvn")


def _trained(generator="energy", conditioning="set", seed=0):
    data = build_unsupervised_dataset(MVN, 16, 12, 8, 0)
    cfg = TrainConfig(generator=generator, conditioning=conditioning, stc=True,
                      pairing="any_to_any_uniform", d_latent=6,
                      d_hidden_encoder=12, d_hidden_generator=12, epochs=1,
                      batch_pairs=4, subsample=8, seed=seed)
    return train(data, cfg)


def _params(model):
    return list(model.encoder.parameters()) + list(model.generator.parameters())


class TestRoundtrip:
    @pytest.mark.parametrize("generator", ["energy", "swd", "fm", "stoch_energy"])
    def test_parameters_and_outputs_survive(self, generator, tmp_path):
        model = _trained(generator)
        path = tmp_path / "model.stm"
        save_model(model, path)
        back = load_model(path)

        assert back.family == model.family and back.dim == model.dim
        assert back.config == model.config
        assert back.epoch_losses == model.epoch_losses
        for a, b in zip(_params(model), _params(back)):
            assert np.array_equal(a.data, b.data)

        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 2))
        Y = rng.standard_normal((20, 2)) + [2.0, 0.0]
        kw = {}
        if generator == "stoch_energy":
            out1 = model.transport(X, model.embed(X), model.embed(Y),
                                   rng=np.random.default_rng(5))
            out2 = back.transport(X, back.embed(X), back.embed(Y),
                                  rng=np.random.default_rng(5))
        else:
            out1 = model.transport(X, model.embed(X), model.embed(Y), **kw)
            out2 = back.transport(X, back.embed(X), back.embed(Y), **kw)
        assert np.array_equal(out1, out2)

    def test_onehot_centroids_survive(self, tmp_path):
        model = _trained(conditioning="onehot")
        path = tmp_path / "model.stm"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(model.encoder.centroids, back.encoder.centroids)
        X = np.random.default_rng(1).standard_normal((15, 2))
        assert np.array_equal(model.embed(X), back.embed(X))

    def test_save_load_save_is_byte_stable(self, tmp_path):
        model = _trained()
        p1, p2 = tmp_path / "a.stm", tmp_path / "b.stm"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestCorruption:
    def _saved(self, tmp_path):
        path = tmp_path / "model.stm"
        save_model(_trained(), path)
        return path

    def test_flipped_blob_byte_fails_checksum(self, tmp_path):
        path = self._saved(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[-5] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="checksum"):
            load_model(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:8] = b"NOTMODEL"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="not a transport model"):
            load_model(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 16])
        with pytest.raises(ValueError):
            load_model(path)

    def test_future_format_version_rejected(self, tmp_path):
        path = self._saved(tmp_path)
        raw = path.read_bytes()
        head_len = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
        header = json.loads(raw[16:16 + head_len].decode("utf-8"))
        header["format_version"] = FORMAT_VERSION + 1
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        path.write_bytes(MAGIC + np.uint64(len(head)).tobytes() + head
                         + raw[16 + head_len:])
        with pytest.raises(ValueError, match="format version"):
            load_model(path)

    def test_non_model_file_rejected(self, tmp_path):
        path = tmp_path / "junk.stm"
        path.write_bytes(b"hello world, definitely not a model")
        with pytest.raises(ValueError):
            load_model(path)
