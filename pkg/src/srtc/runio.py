"""Run-directory layout and metric streams.

A run directory is named by the config digest plus a timestamp; all file
contents are pure functions of (config, seed), so two runs of the same
config differ only in directory name.  Metric streams are line-delimited
JSON, flushed per record so interrupted runs stay inspectable.
"""

from __future__ import annotations

import json
import time
from pathlib import Path


def create_run_dir(parent, digest: str) -> Path:
    parent = Path(parent)
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    base = parent / f"{digest[:12]}-{stamp}"
    run_dir = base
    counter = 1
    while run_dir.exists():
        run_dir = Path(f"{base}-{counter}")
        counter += 1
    for sub in ("data", "teachers", "models", "metrics", "reports"):
        (run_dir / sub).mkdir(parents=True)
    return run_dir


class MetricWriter:
    """Append-only JSONL stream; one record per epoch, flushed."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8")

    def __call__(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_metrics(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
