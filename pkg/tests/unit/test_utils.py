"""Test utility functions and helpers."""

import hashlib
import json
import subprocess
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from src.errors import ParameterError
from src.utils import (
    config_hash,
    describe_version,
    make_rng,
    md5_hash,
    parse_seed_list,
    qident,
    qliteral,
    spawn_rngs,
    write_json,
)
from tests.constants import MD5_HASH_LENGTH, SEED_COUNT_10


@pytest.mark.unit
class TestUtilityFunctions:
    """Test utility functions used across the package."""

    def test_md5_hash_calculation(self, temp_dir: Path) -> None:
        """Test MD5 hash calculation."""
        path = temp_dir / "content.txt"
        path.write_text("test content")

        result = md5_hash(path)

        assert result == hashlib.md5(b"test content").hexdigest()
        assert len(result) == MD5_HASH_LENGTH
        assert result.isalnum()

    def test_identifier_quoting(self) -> None:
        """Test identifier quoting for SQL."""
        assert qident("simple_name") == '"simple_name"'
        assert qident('name with "quotes"') == '"name with ""quotes"""'
        assert qident("") == '""'

    def test_literal_quoting(self) -> None:
        """Single quotes in a path literal are doubled."""
        assert qliteral("/tmp/bench.csv") == "'/tmp/bench.csv'"
        assert qliteral("/tmp/o'brien/bench.csv") == "'/tmp/o''brien/bench.csv'"

    def test_config_hash_ignores_key_order(self) -> None:
        """Equal configs hash equally regardless of key order."""
        a = {"n": 10, "learner": {"eps": 0.05, "zeta": 0.1}}
        b = {"learner": {"zeta": 0.1, "eps": 0.05}, "n": 10}
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash({**a, "n": 11})

    def test_write_json_handles_numpy(self, temp_dir: Path) -> None:
        """Arrays and numpy scalars serialize as plain JSON."""
        path = temp_dir / "nested" / "out.json"
        write_json(path, {"v": np.arange(3), "x": np.float64(0.5), "p": Path("a/b")})

        payload = json.loads(path.read_text())
        assert payload == {"v": [0, 1, 2], "x": 0.5, "p": "a/b"}

    def test_describe_version_falls_back_without_git(self) -> None:
        """A failing git call still yields a version string."""
        failed = subprocess.CompletedProcess(args=[], returncode=128, stdout="", stderr="")
        with patch("src.utils.subprocess.run", return_value=failed):
            version = describe_version()
        assert version.startswith("v")


@pytest.mark.unit
class TestSeeds:
    """Test seed parsing and random stream derivation."""

    def test_parse_range_is_inclusive(self) -> None:
        assert parse_seed_list("0..9") == list(range(SEED_COUNT_10))

    def test_parse_comma_list(self) -> None:
        assert parse_seed_list("1, 4,7") == [1, 4, 7]

    def test_parse_empty(self) -> None:
        assert parse_seed_list("  ") == []

    def test_parse_reversed_range_rejected(self) -> None:
        with pytest.raises(ParameterError):
            parse_seed_list("5..2")

    def test_spawned_streams_are_reproducible(self) -> None:
        """Same parent seed gives the same children; children differ from each other."""
        first = [r.standard_normal(4) for r in spawn_rngs(make_rng(3), 3)]
        second = [r.standard_normal(4) for r in spawn_rngs(make_rng(3), 3)]

        for a, b in zip(first, second, strict=True):
            np.testing.assert_array_equal(a, b)
        assert not np.allclose(first[0], first[1])
