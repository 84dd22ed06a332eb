from dagster import AssetSelection, Definitions, define_asset_job

from .assets_bench import mlr_bench_summary
from .assets_fit import mlr_fit
from .assets_instances import bench_partitions, mlr_instance

all_assets = [
    mlr_instance,
    mlr_fit,
    mlr_bench_summary,
]

# per-seed gen + fit; run as a backfill over the seed partitions
mlr_bench = define_asset_job(
    name="mlr_bench",
    selection=AssetSelection.assets(mlr_instance, mlr_fit),
    partitions_def=bench_partitions,
)

mlr_summary = define_asset_job(
    name="mlr_summary",
    selection=AssetSelection.assets(mlr_bench_summary),
)

defs = Definitions(
    assets=all_assets,
    jobs=[mlr_bench, mlr_summary],
)
