"""Result rows, summary tables and per-episode detail files."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from safesep.errors import ContractViolation

HEADER = ("case", "density", "mode", "mean_score", "std_score", "episodes", "seed", "checkpoint_hash")


@dataclass(frozen=True)
class ResultRow:
    case: str
    density: str
    mode: str
    mean_score: float
    std_score: float
    episodes: int
    seed: int
    checkpoint_hash: str

    @classmethod
    def from_scores(cls, case, density, mode, scores, seed, checkpoint_hash) -> "ResultRow":
        arr = np.asarray(scores, dtype=float)
        return cls(case, density, mode, float(arr.mean()), float(arr.std()), len(arr), int(seed), checkpoint_hash)

    def cells(self) -> list[str]:
        return [self.case, self.density, self.mode, f"{self.mean_score:.4f}", f"{self.std_score:.4f}",
                str(self.episodes), str(self.seed), self.checkpoint_hash]


def detail_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".episodes.jsonl")


def write_results(rows, path, details=None) -> Path:
    """Write the summary table (CSV) and, if given, per-episode records next to it."""
    rows = list(rows)
    if not rows:
        raise ContractViolation("no result rows to write")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow(r.cells())
    if details is not None:
        with open(detail_path(path), "w") as fh:
            for rec in details:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [ResultRow(r["case"], r["density"], r["mode"], float(r["mean_score"]), float(r["std_score"]),
                          int(r["episodes"]), int(r["seed"]), r["checkpoint_hash"]) for r in rd]


def format_table(rows) -> str:
    """Plain-text pivot: one line per (case, density), one column per mode."""
    rows = list(rows)
    modes = list(dict.fromkeys(r.mode for r in rows))
    keys = list(dict.fromkeys((r.case, r.density) for r in rows))
    cell = {(r.case, r.density, r.mode): r.mean_score for r in rows}
    lines = ["case  density  " + "  ".join(f"{m:>8}" for m in modes)]
    for case, dens in keys:
        vals = "  ".join(f"{cell.get((case, dens, m), float('nan')):8.2f}" for m in modes)
        lines.append(f"{case:<5} {dens:<8} {vals}")
    return "\n".join(lines)


def row_dict(row: ResultRow) -> dict:
    return asdict(row)
