"""The four-way attention x augmentation ablation on the scaled benchmark.

Takes about five minutes on one CPU core.

Run: python demos/07_ablation_benchmark.py [seed]
"""
import logging
import sys

from lexstress.benchmark import BenchmarkConfig, run_benchmark

logging.basicConfig(level=logging.INFO, format="%(message)s")
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
result = run_benchmark(BenchmarkConfig(seed=seed))
for name, summary in result.corpora.items():
    print(f"{name:<10} {summary}")
print(result.table())
for check, ok in result.checks().items():
    print(f"{check:<10} {'ok' if ok else 'FAILED'}")
