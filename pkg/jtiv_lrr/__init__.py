"""jtiv_lrr package.

Main entry points:
- python jtiv_lrr.py <subcommand> ...
- python -m jtiv_lrr.cli <subcommand> ...
"""

__all__ = [
    "benchmarks",
    "cli",
    "cluster_eval",
    "config",
    "constants",
    "dataset_io",
    "recovery",
    "report_writer",
    "stats",
    "synth",
    "tensor_core",
    "trpca",
]
