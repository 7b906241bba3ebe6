"""Incumbent-cost histories and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

PHASES = ("nominal", "reevaluation", "search")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    elapsed_ns: int
    incumbent_cost: float
    phase: str


@dataclass
class ConvergenceTrace:
    rows: List[TraceRow] = field(default_factory=list)

    def append(self, iteration: int, elapsed_ns: int, cost: float, phase: str) -> None:
        if self.rows:
            last = self.rows[-1]
            if cost > last.incumbent_cost or iteration < last.iteration:
                raise ValueError("trace must be nonincreasing in cost and nondecreasing in iteration")
        self.rows.append(TraceRow(iteration, elapsed_ns, cost, phase))

    def extend(self, other: "ConvergenceTrace") -> None:
        for row in other.rows:
            self.append(row.iteration, row.elapsed_ns, row.incumbent_cost, row.phase)

    def __len__(self):
        return len(self.rows)

    @property
    def final_cost(self) -> Optional[float]:
        return self.rows[-1].incumbent_cost if self.rows else None

    def incumbent_at(self, iteration: int) -> Optional[float]:
        """Best cost recorded at or before ``iteration``; None if nothing yet."""
        best = None
        for row in self.rows:
            if row.iteration > iteration:
                break
            best = row.incumbent_cost
        return best

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if timing:
            w.writerow(["iteration", "elapsed_ns", "incumbent_cost", "phase"])
            for r in self.rows:
                w.writerow([r.iteration, r.elapsed_ns, repr(r.incumbent_cost), r.phase])
        else:
            w.writerow(["iteration", "incumbent_cost", "phase"])
            for r in self.rows:
                w.writerow([r.iteration, repr(r.incumbent_cost), r.phase])
        return buf.getvalue()

    def write_csv(self, path, timing: bool = False) -> None:
        Path(path).write_text(self.to_csv(timing))

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTrace":
        trace = cls()
        for rec in csv.DictReader(io.StringIO(text)):
            trace.append(
                int(rec["iteration"]),
                int(rec.get("elapsed_ns") or 0),
                float(rec["incumbent_cost"]),
                rec["phase"],
            )
        return trace
