"""Daily-count CSV ingestion."""

from __future__ import annotations

import csv
import datetime
import logging

import numpy as np

from .errors import NegativeCount, NonMonotonicDates, ParseError
from .observation import CaseSeries

log = logging.getLogger(__name__)

HEADER = ("date", "count")


def ingest_csv(path) -> CaseSeries:
    """Parse a `date,count` CSV into a contiguous daily series.

    Rows may arrive unsorted; duplicate dates are rejected.  Missing
    interior dates are filled with a zero count and recorded in
    ``filled_dates`` (and logged as a warning).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file") from None
        if [h.strip().lower() for h in header] != list(HEADER):
            raise ParseError(f"expected header 'date,count', got {','.join(header)!r}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
            try:
                date = datetime.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad ISO date {row[0]!r}", line=lineno) from None
            try:
                count = float(row[1])
            except ValueError:
                raise ParseError(f"bad count {row[1]!r}", line=lineno) from None
            if not np.isfinite(count):
                raise ParseError(f"non-finite count {row[1]!r}", line=lineno)
            if count < 0:
                raise NegativeCount(f"negative count {count} on {date}")
            rows.append((date, count))
    if not rows:
        raise ParseError("no data rows")

    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise NonMonotonicDates(f"duplicate date {a}")

    by_date = dict(rows)
    first, last = rows[0][0], rows[-1][0]
    dates, counts, filled = [], [], []
    day = first
    while day <= last:
        dates.append(day)
        if day in by_date:
            counts.append(by_date[day])
        else:
            counts.append(0.0)
            filled.append(day)
        day += datetime.timedelta(days=1)
    if filled:
        log.warning("filled %d missing interior date(s) with zero counts: %s",
                    len(filled), ", ".join(d.isoformat() for d in filled))
    return CaseSeries(dates=tuple(dates), counts=np.array(counts), filled_dates=tuple(filled))
