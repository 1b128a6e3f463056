"""SQLite-backed store of normalized AIS records.

Keyed on (mmsi, timestamp) so replayed broadcasts deduplicate on insert
(first record wins). Query results are always ordered by (mmsi, timestamp)
for deterministic downstream sampling. A single connection serializes all
access behind a lock, which keeps post-ingest reads safe from any number of
threads.
"""
from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import AisRecord, StatusCategory, TIMESTAMP_FORMAT, VesselCategory


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive lat/lon box."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self) -> None:
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError(f"malformed bounding box {self}")

    def contains(self, lat: float, lon: float) -> bool:
        return (self.min_lat <= lat <= self.max_lat
                and self.min_lon <= lon <= self.max_lon)

    def to_list(self) -> list[float]:
        return [self.min_lat, self.min_lon, self.max_lat, self.max_lon]


_SCHEMA = """
CREATE TABLE IF NOT EXISTS records (
    mmsi TEXT NOT NULL,
    ts TEXT NOT NULL,
    lat REAL NOT NULL,
    lon REAL NOT NULL,
    sog REAL,
    cog REAL,
    heading REAL,
    vessel_name TEXT,
    imo TEXT,
    call_sign TEXT,
    vessel_type_code INTEGER,
    vessel_category TEXT NOT NULL,
    status_code INTEGER,
    status_category TEXT NOT NULL,
    length_m REAL,
    width_m REAL,
    draft_m REAL,
    cargo_code INTEGER,
    transceiver_class TEXT,
    PRIMARY KEY (mmsi, ts)
) WITHOUT ROWID;
CREATE INDEX IF NOT EXISTS idx_records_ts ON records (ts);
CREATE INDEX IF NOT EXISTS idx_records_pos ON records (lat, lon);
"""

_COLUMNS = ("mmsi", "ts", "lat", "lon", "sog", "cog", "heading", "vessel_name",
            "imo", "call_sign", "vessel_type_code", "vessel_category",
            "status_code", "status_category", "length_m", "width_m", "draft_m",
            "cargo_code", "transceiver_class")

_INSERT = (f"INSERT OR IGNORE INTO records ({', '.join(_COLUMNS)}) "
           f"VALUES ({', '.join('?' * len(_COLUMNS))})")


def _ts_text(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def _record_to_row(r: AisRecord) -> tuple:
    return (r.mmsi, _ts_text(r.timestamp), r.lat, r.lon, r.sog, r.cog, r.heading,
            r.vessel_name, r.imo, r.call_sign, r.vessel_type_code,
            r.vessel_category.value, r.status_code, r.status_category.value,
            r.length_m, r.width_m, r.draft_m, r.cargo_code, r.transceiver_class)


def _row_to_record(row: Sequence) -> AisRecord:
    return AisRecord(
        mmsi=row[0],
        timestamp=datetime.strptime(row[1], TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc),
        lat=row[2], lon=row[3], sog=row[4], cog=row[5], heading=row[6],
        vessel_name=row[7], imo=row[8], call_sign=row[9],
        vessel_type_code=row[10], vessel_category=VesselCategory(row[11]),
        status_code=row[12], status_category=StatusCategory(row[13]),
        length_m=row[14], width_m=row[15], draft_m=row[16],
        cargo_code=row[17], transceiver_class=row[18],
    )


class RecordStore:
    """Append-then-query collection of AisRecord."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.executescript(_SCHEMA)
        self._lock = threading.Lock()

    # -- writes ---------------------------------------------------------

    def add(self, record: AisRecord) -> bool:
        """Insert one record; returns False when (mmsi, timestamp) exists."""
        with self._lock:
            cur = self._conn.execute(_INSERT, _record_to_row(record))
            self._conn.commit()
            return cur.rowcount > 0

    def add_many(self, records: Iterable[AisRecord]) -> tuple[int, int]:
        """Insert a batch; returns (accepted, deduplicated) counts."""
        rows = [_record_to_row(r) for r in records]
        if not rows:
            return 0, 0
        with self._lock:
            before = self._conn.total_changes
            self._conn.executemany(_INSERT, rows)
            self._conn.commit()
            accepted = self._conn.total_changes - before
        return accepted, len(rows) - accepted

    # -- reads ------------------------------------------------------------

    def count(self) -> int:
        with self._lock:
            (n,) = self._conn.execute("SELECT COUNT(*) FROM records").fetchone()
        return n

    def time_span(self) -> tuple[datetime, datetime] | None:
        """(earliest, latest) timestamps, or None for an empty store."""
        with self._lock:
            lo, hi = self._conn.execute("SELECT MIN(ts), MAX(ts) FROM records").fetchone()
        if lo is None:
            return None
        parse = lambda t: datetime.strptime(t, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
        return parse(lo), parse(hi)

    def query(self,
              start: datetime | None = None,
              end: datetime | None = None,
              bbox: BoundingBox | None = None,
              mmsi: str | None = None,
              vessel_category: VesselCategory | None = None,
              status_category: StatusCategory | None = None,
              complete_position_only: bool = False) -> list[AisRecord]:
        """Records matching every given predicate, ordered by (mmsi, ts).

        Time windows are half-open [start, end); boxes are inclusive.
        """
        clauses: list[str] = []
        params: list = []
        if start is not None:
            clauses.append("ts >= ?")
            params.append(_ts_text(start))
        if end is not None:
            clauses.append("ts < ?")
            params.append(_ts_text(end))
        if bbox is not None:
            clauses.append("lat BETWEEN ? AND ? AND lon BETWEEN ? AND ?")
            params.extend([bbox.min_lat, bbox.max_lat, bbox.min_lon, bbox.max_lon])
        if mmsi is not None:
            clauses.append("mmsi = ?")
            params.append(mmsi)
        if vessel_category is not None:
            clauses.append("vessel_category = ?")
            params.append(vessel_category.value)
        if status_category is not None:
            clauses.append("status_category = ?")
            params.append(status_category.value)
        if complete_position_only:
            clauses.append("sog IS NOT NULL AND cog IS NOT NULL")
        sql = f"SELECT {', '.join(_COLUMNS)} FROM records"
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY mmsi, ts"
        with self._lock:
            rows = self._conn.execute(sql, params).fetchall()
        return [_row_to_record(row) for row in rows]

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "RecordStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
