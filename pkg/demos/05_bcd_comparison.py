"""
Strategy table on the breast cancer data
========================================

Runs the shipped configuration for five seeds and prints the comparison in
the same layout the CLI writes to report.txt.
"""
from dataclasses import replace
from pathlib import Path

from hetfl.harness import compare_strategies, format_table, load_config

config = load_config(Path(__file__).parent.parent / "configs" / "bcd.json")
reports = compare_strategies(replace(config, out_dir=None))
print(format_table(reports, config.name))
for strategy, rep in reports.items():
    print(strategy.value, [round(v, 4) for v in rep.values])
