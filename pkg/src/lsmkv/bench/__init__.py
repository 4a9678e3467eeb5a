"""Benchmark driver: db_bench operations, YCSB workloads and the ``lsmkv-bench`` CLI."""
from .runner import BenchReport, Harness, format_table, run_db_bench, run_ycsb
from .workloads import KeyDistribution, WorkloadSpec, ZipfianGenerator, gen_key, workload

__all__ = [
    "BenchReport",
    "Harness",
    "KeyDistribution",
    "WorkloadSpec",
    "ZipfianGenerator",
    "format_table",
    "gen_key",
    "run_db_bench",
    "run_ycsb",
    "workload",
]
