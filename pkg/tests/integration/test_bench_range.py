"""Test the seed replay script in local and dagster modes."""

from pathlib import Path
from unittest.mock import MagicMock, patch

import pytest

from scripts.bench_range import ASSETS, main

EXIT_USAGE = 2


@pytest.mark.integration
class TestBenchRangeLocal:
    """Local process-pool replay."""

    def test_local_mode_with_config(
        self,
        fast_k1_experiment: Path,
        mock_environment: dict[str, str],
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        code = main(["0", "--local", "--config", str(fast_k1_experiment)])

        assert code == 0
        out = capsys.readouterr().out
        assert "seed=0 status=ok" in out
        assert "success_rate=" in out

    def test_local_mode_missing_config_file(
        self, temp_dir: Path, mock_environment: dict[str, str]
    ) -> None:
        assert main(["0", "--local", "--config", str(temp_dir / "absent.json")]) == EXIT_USAGE

    def test_bad_seed_range(self, mock_environment: dict[str, str]) -> None:
        assert main(["5..1", "--local"]) == EXIT_USAGE


@pytest.mark.integration
class TestBenchRangeDagster:
    """Dagster replay forwards the experiment to each materialization."""

    def test_config_forwarded_to_subprocess_env(
        self, temp_dir: Path, mock_environment: dict[str, str]
    ) -> None:
        config = temp_dir / "other.json"
        config.write_text("{}")
        done = MagicMock(returncode=0)

        with patch("scripts.bench_range.subprocess.run", return_value=done) as run:
            code = main(["0..1", "--config", str(config)])

        assert code == 0
        # two seeds times the per-seed assets, then one summary
        assert run.call_count == 2 * len(ASSETS) + 1
        for call in run.call_args_list:
            assert call.kwargs["env"]["MLR_EXPERIMENT_CONFIG"] == str(config.resolve())

    def test_every_seed_failing_exits_nonzero(self, mock_environment: dict[str, str]) -> None:
        failed = MagicMock(returncode=1)

        with patch("scripts.bench_range.subprocess.run", return_value=failed):
            assert main(["0..1"]) == 1

    def test_dry_run_runs_nothing(
        self, mock_environment: dict[str, str], capsys: pytest.CaptureFixture[str]
    ) -> None:
        with patch("scripts.bench_range.subprocess.run") as run:
            assert main(["3", "--dry-run"]) == 0

        run.assert_not_called()
        assert "--partition 3" in capsys.readouterr().out
