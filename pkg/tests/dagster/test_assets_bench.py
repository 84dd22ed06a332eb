"""Tests for the seed-partitioned instance, fit and summary assets."""

import json
from pathlib import Path

import pytest
from dagster import build_asset_context, materialize

from orchestration.assets_bench import mlr_bench_summary
from orchestration.assets_fit import mlr_fit
from orchestration.assets_instances import mlr_instance, seed_dir
from orchestration.repo import defs
from tests.constants import DESK_EPS

SEED = "0"


@pytest.mark.dagster
class TestDefinitions:
    """Test the Dagster code location."""

    def test_jobs_registered(self) -> None:
        assert defs.get_job_def("mlr_bench").name == "mlr_bench"
        assert defs.get_job_def("mlr_summary").name == "mlr_summary"


@pytest.mark.dagster
class TestInstanceAsset:
    """Test instance generation through the asset."""

    def test_direct_invocation_writes_instance(self, mock_environment: dict[str, str]) -> None:
        context = build_asset_context(partition_key=SEED)

        result = mlr_instance(context)

        run_dir = seed_dir(Path(mock_environment["MLR_DATA_DIR"]), int(SEED))
        assert (run_dir / "dataset.csv").is_file()
        assert (run_dir / "model.json").is_file()
        assert result.value["row_count"] > 0
        assert result.metadata["assumptions_passed"].value is True


@pytest.mark.dagster
class TestBenchPipeline:
    """Test instance -> fit -> summary for one seed."""

    def test_materialize_seed_then_summarise(self, mock_environment: dict[str, str]) -> None:
        result = materialize([mlr_instance, mlr_fit], partition_key=SEED)
        assert result.success

        data_dir = Path(mock_environment["MLR_DATA_DIR"])
        report = json.loads((seed_dir(data_dir, int(SEED)) / "fit_report.json").read_text())
        assert report["row"]["status"] == "ok"
        assert report["row"]["max_error"] <= DESK_EPS
        assert report["report"]["matched"] is not None

        summary = mlr_bench_summary(build_asset_context())

        assert summary.value["seeds"] == 1
        assert summary.value["completed"] == 1
        assert (data_dir / "bench.csv").is_file()
        assert (data_dir / "bench_summary.json").is_file()

    def test_summary_without_reports(self, mock_environment: dict[str, str]) -> None:
        summary = mlr_bench_summary(build_asset_context())
        assert summary.value["seeds"] == 0
