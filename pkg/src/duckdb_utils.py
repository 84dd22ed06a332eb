"""DuckDB helpers: dataset CSV reading and benchmark aggregation."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import duckdb
import numpy as np

from src.errors import DataError, StructuralError
from src.model import Dataset
from src.utils import qident, qliteral

BENCH_COLUMNS: list[tuple[str, str]] = [
    ("seed", "bigint"),
    ("status", "varchar"),
    ("success", "boolean"),
    ("max_error", "double"),
    ("rounds", "integer"),
    ("samples_consumed", "bigint"),
    ("gen_s", "double"),
    ("descent_s", "double"),
    ("refine_s", "double"),
    ("total_s", "double"),
    ("error", "varchar"),
]
STAGE_COLUMNS = ["gen_s", "descent_s", "refine_s", "total_s"]
ERROR_QUANTILES = (0.1, 0.5, 0.9)


def get_file_columns(con: duckdb.DuckDBPyConnection, path: Path) -> list[str]:
    """Get column names from a CSV file."""
    rows = con.execute(
        "describe select * from read_csv_auto(?, header=true)",
        [str(path)],
    ).fetchall()
    return [r[0] for r in rows]


def dataset_header(d: int, with_z: bool) -> list[str]:
    cols = [f"x{i}" for i in range(1, d + 1)] + ["alpha"]
    if with_z:
        cols.append("z")
    return cols


def _check_header(cols: list[str], path: Path) -> tuple[int, bool]:
    has_z = bool(cols) and cols[-1] == "z"
    body = cols[:-1] if has_z else cols
    if len(body) < 2 or body[-1] != "alpha":
        msg = f"{path}: header must be x1..xd,alpha[,z], got {','.join(cols)}"
        raise StructuralError(msg)
    d = len(body) - 1
    if body[:-1] != [f"x{i}" for i in range(1, d + 1)]:
        msg = f"{path}: feature columns must be named x1..x{d} in order, got {','.join(body[:-1])}"
        raise StructuralError(msg)
    return d, has_z


def read_dataset_csv(path: Path, *, keep_truth: bool = True) -> Dataset:
    """Read ``x1..xd,alpha[,z]`` into a Dataset; the ``z`` column is dropped unless ``keep_truth``."""
    if not path.is_file():
        msg = f"Dataset file not found: {path}"
        raise StructuralError(msg)
    with duckdb.connect(":memory:") as con:
        try:
            cols = get_file_columns(con, path)
        except duckdb.Error as e:
            msg = f"{path}: could not read CSV header: {e}"
            raise StructuralError(msg) from e
        d, has_z = _check_header(cols, path)
        select = [f"cast({qident(c)} as double) as {qident(c)}" for c in cols[: d + 1]]
        if has_z and keep_truth:
            select.append(f"cast({qident('z')} as bigint) as {qident('z')}")
        try:
            arrays = con.execute(
                f"select {', '.join(select)} from read_csv(?, header=true, all_varchar=true)",
                [str(path)],
            ).fetchnumpy()
        except duckdb.Error as e:
            msg = f"{path}: unparsable value: {e}"
            raise DataError(msg) from e

    for name, arr in arrays.items():
        if np.ma.is_masked(arr):
            bad = int(np.flatnonzero(np.ma.getmaskarray(arr))[0]) + 1
            msg = f"{path}: empty cell in column {name} at data row {bad}"
            raise DataError(msg)
    x = np.column_stack([np.asarray(arrays[f"x{i}"], dtype=float) for i in range(1, d + 1)])
    alpha = np.asarray(arrays["alpha"], dtype=float)
    z = np.asarray(arrays["z"], dtype=np.int64) if "z" in arrays else None
    return Dataset(x.reshape(-1, d), alpha, z)


def write_dataset_csv(path: Path, data: Dataset, *, with_truth: bool = True) -> int:
    """Write the dataset with round-trip float formatting; returns the row count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with_z = with_truth and data.hidden_z is not None
    header = dataset_header(data.d, with_z)
    columns = [data.x, data.alpha[:, None]]
    fmt = ["%.17g"] * (data.d + 1)
    if with_z and data.hidden_z is not None:
        columns.append(data.hidden_z[:, None].astype(float))
        fmt.append("%d")
    np.savetxt(
        path,
        np.hstack(columns),
        delimiter=",",
        fmt=fmt,
        header=",".join(header),
        comments="",
    )
    return data.n


# -------------------------
# Benchmark tables
# -------------------------


def load_bench_rows(con: duckdb.DuckDBPyConnection, rows: list[dict[str, Any]]) -> None:
    cols_ddl = ", ".join(f"{qident(name)} {kind}" for name, kind in BENCH_COLUMNS)
    con.execute(f"create or replace table bench ({cols_ddl})")
    if not rows:
        return
    placeholders = ", ".join("?" for _ in BENCH_COLUMNS)
    con.executemany(
        f"insert into bench values ({placeholders})",
        [[row.get(name) for name, _ in BENCH_COLUMNS] for row in rows],
    )


def aggregate_bench_rows(rows: list[dict[str, Any]]) -> dict[str, Any]:
    """Success rate, max-error quantiles and mean stage runtimes over per-seed rows."""
    stage_means = ", ".join(f"avg({qident(c)}) as {qident(c)}" for c in STAGE_COLUMNS)
    quantiles = ", ".join(
        f"quantile_cont(max_error, {q}) as q{int(q * 100)}" for q in ERROR_QUANTILES
    )
    with duckdb.connect(":memory:") as con:
        load_bench_rows(con, rows)
        row = con.execute(
            f"""
            select
                count(*) as seeds,
                count(*) filter (where status = 'ok') as completed,
                avg(case when success then 1.0 else 0.0 end) as success_rate,
                max(max_error) as worst_error,
                {quantiles},
                {stage_means}
            from bench
            """
        ).fetchone()
        names = [desc[0] for desc in con.description]
    if row is None:
        return {}
    summary = dict(zip(names, row, strict=True))
    return {
        "seeds": int(summary["seeds"]),
        "completed": int(summary["completed"] or 0),
        "success_rate": float(summary["success_rate"] or 0.0),
        "worst_error": summary["worst_error"],
        "error_quantiles": {
            f"q{int(q * 100)}": summary[f"q{int(q * 100)}"] for q in ERROR_QUANTILES
        },
        "runtime_mean_s": {c: summary[c] for c in STAGE_COLUMNS},
    }


def export_bench_csv(rows: list[dict[str, Any]], path: Path) -> int:
    """COPY the per-seed rows (sorted by seed) to CSV; returns the row count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with duckdb.connect(":memory:") as con:
        load_bench_rows(con, rows)
        con.execute(
            f"COPY (select * from bench order by seed) TO {qliteral(path.as_posix())} WITH (HEADER, DELIMITER ',')"
        )
        result = con.execute("select count(*) from bench").fetchone()
    return int(result[0]) if result else 0
