"""
Testes unitários para a escrita atômica (selest.infrastructure.file_system).
"""

from unittest import mock

import pytest

from selest.infrastructure.file_system import atomic_write_bytes, atomic_write_text


class TestAtomicWrite:
    """Testes para atomic_write_bytes e atomic_write_text."""

    def test_creates_parent_directories(self, tmp_path):
        """Testa que diretórios pais são criados e o conteúdo é escrito."""
        # Arrange
        path = tmp_path / "a" / "b" / "out.bin"

        # Act
        result = atomic_write_bytes(path, b"\x00\x01")

        # Assert
        assert result == path
        assert path.read_bytes() == b"\x00\x01"

    def test_overwrites_existing_file(self, tmp_path):
        path = tmp_path / "out.txt"
        path.write_text("antigo")
        atomic_write_text(path, "novo")
        assert path.read_text() == "novo"

    def test_failure_keeps_old_content_and_removes_temp(self, tmp_path):
        """Testa que uma falha na renomeação não deixa arquivo parcial nem temporário."""
        # Arrange
        path = tmp_path / "out.txt"
        path.write_text("original")

        # Act
        with mock.patch("selest.infrastructure.file_system.os.replace", side_effect=OSError("disco cheio")):
            with pytest.raises(OSError):
                atomic_write_text(path, "parcial")

        # Assert
        assert path.read_text() == "original"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
