"""Result rows and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Union

__all__ = ["METRICS", "COLUMNS", "ResultRow", "rows_to_csv", "parse_csv", "write_csv", "read_csv"]

METRICS = ("avg_snr_db", "theory_snr_db", "bound_snr_db", "sum_rate", "surrogate_rate")


@dataclass(frozen=True)
class ResultRow:
    """One value of one metric at one sweep point.

    ``experiment`` may carry a variant suffix, e.g. ``"fig5:lens"``.
    ``user`` is a 0-based user index or an aggregate label such as
    ``"sum"`` or ``"median"``. ``stderr`` is NaN for exact values.
    """

    experiment: str
    sweep_value: float
    user: Union[int, str]
    metric: str
    value: float
    stderr: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")


COLUMNS = tuple(f.name for f in fields(ResultRow))


def _fmt(v) -> str:
    # repr round-trips floats exactly
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue()


def _user(s: str):
    return int(s) if s.lstrip("-").isdigit() else s


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for rec in reader:
        if not rec:
            continue
        exp, sweep, user, metric, value, se, trials, seed = rec
        out.append(ResultRow(exp, float(sweep), _user(user), metric, float(value), float(se), int(trials), int(seed)))
    return out


def write_csv(rows: Iterable[ResultRow], path: str):
    text = rows_to_csv(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(path: str) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def to_db(x: float) -> float:
    return 10 * math.log10(x) if x > 0 else -math.inf
