"""Embedding container format and PGM rendering round trips."""

import numpy as np
import pytest

from segros.errors import FormatError, InputError
from segros.fileio import (
    MAGIC,
    EmbeddingFile,
    read_embedding_file,
    read_pgm,
    write_embedding_file,
    write_pgm,
)
from segros.numerics import Rng


def sample_file(n=6, dim=4, **kwargs):
    # float32-representable values so the payload round trip is exact
    emb = Rng(0).normal((n, dim)).astype(np.float32).astype(np.float64)
    return EmbeddingFile(embeddings=emb, **{"special_indices": [0], **kwargs})


class TestEmbeddingFileValidation:
    def test_special_out_of_range(self):
        with pytest.raises(InputError):
            EmbeddingFile(embeddings=np.zeros((3, 2)), special_indices=[3])

    def test_special_duplicates(self):
        with pytest.raises(InputError):
            EmbeddingFile(embeddings=np.zeros((3, 2)), special_indices=[1, 1])

    def test_grid_must_cover_tokens(self):
        with pytest.raises(InputError):
            EmbeddingFile(
                embeddings=np.zeros((6, 2)), special_indices=[], grid_rows=2, grid_cols=2
            )

    def test_grid_halves_must_come_together(self):
        with pytest.raises(InputError):
            EmbeddingFile(embeddings=np.zeros((4, 2)), special_indices=[], grid_rows=2)

    def test_codes_length(self):
        with pytest.raises(InputError):
            EmbeddingFile(
                embeddings=np.zeros((4, 2)), special_indices=[], codes=np.array([1, 2])
            )

    def test_to_token_sequence_flags(self):
        ef = sample_file()
        seq = ef.to_token_sequence()
        assert seq.special_flags[0] and not seq.special_flags[1:].any()


class TestEmbeddingFileRoundTrip:
    def test_byte_identical_round_trip(self, tmp_path):
        ef = sample_file(grid_rows=2, grid_cols=3, codes=np.arange(6))
        first = tmp_path / "a.emb"
        second = tmp_path / "b.emb"
        write_embedding_file(first, ef)
        back = read_embedding_file(first)
        write_embedding_file(second, back)
        assert first.read_bytes() == second.read_bytes()

    def test_values_and_metadata_survive(self, tmp_path):
        ef = sample_file(grid_rows=3, grid_cols=2)
        path = tmp_path / "x.emb"
        write_embedding_file(path, ef)
        back = read_embedding_file(path)
        np.testing.assert_array_equal(back.embeddings, ef.embeddings)
        assert back.special_indices == [0]
        assert (back.grid_rows, back.grid_cols) == (3, 2)
        assert back.codes is None

    def test_optional_keys_omitted_when_absent(self, tmp_path):
        ef = EmbeddingFile(embeddings=np.ones((2, 2), dtype=np.float32), special_indices=[])
        path = tmp_path / "bare.emb"
        write_embedding_file(path, ef)
        header = path.read_bytes()
        assert b"special" not in header
        assert b"grid" not in header
        assert b"codes" not in header


class TestEmbeddingFileErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_embedding_file(path)

    def test_truncated_payload_names_byte_offset(self, tmp_path):
        ef = sample_file()
        path = tmp_path / "t.emb"
        write_embedding_file(path, ef)
        data = path.read_bytes()
        payload_offset = len(data) - 6 * 4 * 4
        path.write_bytes(data[:-7])
        with pytest.raises(FormatError, match=f"byte offset {payload_offset}"):
            read_embedding_file(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "t.emb"
        write_embedding_file(path, sample_file())
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            read_embedding_file(path)

    def test_missing_end_line(self, tmp_path):
        path = tmp_path / "noend.emb"
        path.write_bytes(MAGIC + b"n_tokens=2\ndim=2\n")
        with pytest.raises(FormatError, match="end"):
            read_embedding_file(path)

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "nokey.emb"
        path.write_bytes(MAGIC + b"n_tokens=1\nend\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="dim"):
            read_embedding_file(path)

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "dup.emb"
        path.write_bytes(MAGIC + b"n_tokens=1\nn_tokens=1\ndim=1\nend\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="duplicate"):
            read_embedding_file(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "unk.emb"
        path.write_bytes(MAGIC + b"n_tokens=1\ndim=1\nwhat=3\nend\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="unknown"):
            read_embedding_file(path)

    def test_non_integer_field(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(MAGIC + b"n_tokens=x\ndim=1\nend\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="integer"):
            read_embedding_file(path)

    def test_grid_mismatch_is_format_error(self, tmp_path):
        path = tmp_path / "grid.emb"
        path.write_bytes(MAGIC + b"n_tokens=2\ndim=1\ngrid=3 3\nend\n" + b"\x00" * 8)
        with pytest.raises(FormatError, match="grid"):
            read_embedding_file(path)

    def test_bad_special_index_is_format_error(self, tmp_path):
        path = tmp_path / "spec.emb"
        path.write_bytes(MAGIC + b"n_tokens=2\ndim=1\nspecial=5\nend\n" + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_embedding_file(path)


class TestPgm:
    def test_round_trip(self, tmp_path):
        pixels = np.arange(12).reshape(3, 4) * 20
        path = tmp_path / "m.pgm"
        write_pgm(path, pixels)
        np.testing.assert_array_equal(read_pgm(path), pixels)

    def test_header_shape(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm(path, np.zeros((2, 5), dtype=int))
        lines = path.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "5 2"
        assert lines[2] == "255"

    def test_out_of_range_pixels_rejected(self, tmp_path):
        with pytest.raises(InputError):
            write_pgm(tmp_path / "m.pgm", np.array([[256]]))

    def test_comments_tolerated_on_read(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_text("P2\n# a comment\n2 1\n255\n3 4\n")
        np.testing.assert_array_equal(read_pgm(path), [[3, 4]])

    def test_wrong_pixel_count_rejected(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_text("P2\n2 2\n255\n1 2 3\n")
        with pytest.raises(FormatError):
            read_pgm(path)
