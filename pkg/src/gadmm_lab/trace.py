"""Per-round metrics traces and their CSV form."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BASE_COLUMNS = ("round", "obj_error", "cum_bits", "cum_joules", "msgs_sent", "msgs_censored")
FADMM_COLUMNS = BASE_COLUMNS + ("noise_floor_est", "imag_residue", "uplink_slots")
_INT_COLUMNS = {"round", "msgs_sent", "msgs_censored", "uplink_slots"}


def _fmt(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


@dataclass
class MetricsTrace:
    """One row per executed round.

    ``initial_error`` is the objective error of the starting point (round 0);
    it travels in the CSV comment line rather than as a row.
    """

    variant: str
    problem_hash: str
    seed: int
    initial_error: float = math.nan
    columns: tuple[str, ...] = BASE_COLUMNS
    rows: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, **values) -> None:
        if set(values) != set(self.columns):
            raise KeyError(f"row keys {sorted(values)} do not match columns {self.columns}")
        if self.rows:
            prev = dict(zip(self.columns, self.rows[-1]))
            for name in ("cum_bits", "cum_joules"):
                assert values[name] >= prev[name] >= 0, f"{name} must be nonnegative and nondecreasing"
        self.rows.append(tuple(values[c] for c in self.columns))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def last(self, name: str):
        return self.rows[-1][self.columns.index(name)]

    def first_reaching(self, target: float) -> int | None:
        """Index of the first row with ``obj_error <= target``."""
        err = self.column("obj_error")
        hit = np.flatnonzero(err <= target)
        return int(hit[0]) if hit.size else None

    def value_at_target(self, name: str, target: float) -> float:
        """``name`` at the first row reaching ``target``; ``inf`` if never reached."""
        i = self.first_reaching(target)
        return math.inf if i is None else float(self.rows[i][self.columns.index(name)])

    def header_line(self) -> str:
        return (f"# variant={self.variant} problem={self.problem_hash} seed={self.seed} "
                f"initial_error={self.initial_error!r}")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(self.header_line() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(c, v) for c, v in zip(self.columns, row)])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv_text())
        return path

    @classmethod
    def read_csv(cls, path) -> "MetricsTrace":
        lines = Path(path).read_text().splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            for tok in lines[0][1:].split():
                k, _, v = tok.partition("=")
                meta[k] = v
            lines = lines[1:]
        reader = csv.reader(lines)
        columns = tuple(next(reader))
        rows = [tuple(int(v) if c in _INT_COLUMNS else float(v) for c, v in zip(columns, r)) for r in reader]
        return cls(meta.get("variant", ""), meta.get("problem", ""), int(meta.get("seed", 0)),
                   float(meta.get("initial_error", "nan")), columns=columns, rows=rows)
