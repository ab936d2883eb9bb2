"""
Testes unitários para a persistência do modelo (selest.infrastructure.model_store).
"""

import struct

import numpy as np
import pytest

from selest.core.estimator import SelNetModel
from selest.core.exceptions import (
    ChecksumError,
    ConfigurationError,
    FileFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from selest.core.models import HyperParams, VectorDataset
from selest.core.partition import build_layout, partition_random
from selest.infrastructure.model_store import decode_model, encode_model, load_model, save_model


def _model(K=2, random_layout=False):
    D = VectorDataset(np.random.default_rng(0).normal(size=(80, 5)))
    hyper = HyperParams(L=4, K=K, r=0.2, z_dim=2, h_dim=4, tau_hidden=[6], m_hidden=[6], ae_hidden=[6],
                        t_max=6.0, seed=3)
    layout = partition_random(D, K, seed=1) if random_layout else build_layout(D, hyper)
    return D, SelNetModel.build(hyper, D.d, layout)


class TestModelStore:
    """Testes para encode_model/decode_model e save_model/load_model."""

    def test_round_trip_is_bit_identical(self, tmp_path):
        """Testa que parâmetros, layout e estimativas voltam idênticos em float64."""
        # Arrange
        D, model = _model()
        path = tmp_path / "model.seln"
        X = D.rows[:6]
        t = np.linspace(0.0, 6.0, 6)

        # Act
        save_model(model, path)
        loaded = load_model(path)

        # Assert
        for name, value in model.parameters().items():
            np.testing.assert_array_equal(loaded.parameters()[name], value)
        assert loaded.hyper == model.hyper
        assert loaded.layout.sizes == model.layout.sizes
        assert loaded.layout.kind == "metric"
        np.testing.assert_array_equal(loaded.estimate_batch(X, t), model.estimate_batch(X, t))
        for a, b in zip(loaded.layout.clusters, model.layout.clusters):
            np.testing.assert_array_equal(a.member_indices, b.member_indices)
            np.testing.assert_array_equal(a.balls[0].center, b.balls[0].center)

    def test_random_layout(self):
        _, model = _model(K=3, random_layout=True)
        loaded = decode_model(encode_model(model))
        assert loaded.layout.kind == "random" and loaded.K == 3

    def test_float32_precision(self):
        """Testa a gravação em float32: tamanho menor e valores próximos."""
        # Arrange
        _, model = _model()

        # Act
        data32 = encode_model(model, precision="float32")
        loaded = decode_model(data32)

        # Assert
        assert len(data32) < len(encode_model(model))
        for name, value in model.parameters().items():
            np.testing.assert_allclose(loaded.parameters()[name], value, rtol=1e-6, atol=1e-7)

    def test_unknown_precision(self):
        _, model = _model()
        with pytest.raises(ConfigurationError):
            encode_model(model, precision="float16")

    def test_corrupted_payload(self):
        """Testa ChecksumError quando um byte do payload é alterado."""
        # Arrange
        _, model = _model()
        data = bytearray(encode_model(model))
        data[len(data) // 2] ^= 0x01

        # Act & Assert
        with pytest.raises(ChecksumError):
            decode_model(bytes(data))

    def test_unsupported_version(self):
        _, model = _model()
        data = bytearray(encode_model(model))
        struct.pack_into("<I", data, 4, 2)
        with pytest.raises(UnsupportedVersionError):
            decode_model(bytes(data))

    def test_bad_magic(self):
        _, model = _model()
        with pytest.raises(FileFormatError):
            decode_model(b"ABCD" + encode_model(model)[4:])

    def test_truncated(self):
        """Testa TruncatedFileError para arquivos cortados."""
        _, model = _model()
        data = encode_model(model)
        with pytest.raises(TruncatedFileError):
            decode_model(data[:-1])
        with pytest.raises(TruncatedFileError):
            decode_model(data[:8])
