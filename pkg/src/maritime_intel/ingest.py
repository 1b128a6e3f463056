"""AIS CSV parsing, validation, and normalization.

Consumes CSV exports with the NOAA column layout (MMSI, BaseDateTime, LAT,
LON, SOG, COG, Heading, VesselName, IMO, CallSign, VesselType, Status,
Length, Width, Draft, Cargo, TransceiverClass) and produces normalized
records. Invalid rows are rejected with a structured error naming the
offending field; they are never silently dropped.

Validation policy:
- MMSI must be exactly 9 decimal digits.
- LAT in [-90, 90], LON in [-180, 180].
- SOG in [0, 102.2] knots (AIS field maximum used as a hard cap).
- COG in [0, 360); Heading in [0, 360) with the 511 sentinel mapped to
  "unavailable" (None).
- BaseDateTime must be `YYYY-MM-DDTHH:MM:SS`, interpreted as UTC.
- SOG/COG/Heading cells may be empty (field absent); MMSI, BaseDateTime,
  LAT, LON may not.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping, TYPE_CHECKING

from .util import load_packaged_json

if TYPE_CHECKING:
    from .store import RecordStore

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
HEADING_UNAVAILABLE = 511.0
SOG_MAX_KN = 102.2

REQUIRED_COLUMNS = ("MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG")
OPTIONAL_COLUMNS = ("Heading", "VesselName", "IMO", "CallSign", "VesselType",
                    "Status", "Length", "Width", "Draft", "Cargo", "TransceiverClass")

_MMSI_RE = re.compile(r"\d{9}")


class VesselCategory(str, Enum):
    CARGO = "cargo"
    TANKER = "tanker"
    PASSENGER = "passenger"
    FISHING = "fishing"
    TUG = "tug"
    PLEASURE = "pleasure"
    MILITARY = "military"
    OTHER = "other"
    UNKNOWN = "unknown"


class StatusCategory(str, Enum):
    UNDERWAY = "underway"
    ANCHORED = "anchored"
    MOORED = "moored"
    RESTRICTED = "restricted"
    AGROUND = "aground"
    FISHING = "fishing"
    SAILING = "sailing"
    UNKNOWN = "unknown"


class ParseError(ValueError):
    """A row failed validation; `field` names the offending column."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


# Code tables ship as a versioned config file; load once at import.
_CODES = load_packaged_json("ais_codes.json")
_TYPE_RANGES: list[tuple[int, int, VesselCategory]] = [
    (int(lo), int(hi), VesselCategory(cat)) for lo, hi, cat in _CODES["vessel_type_ranges"]
]
_STATUS_CODES: dict[int, StatusCategory] = {
    int(code): StatusCategory(cat) for code, cat in _CODES["status_codes"].items()
}


def normalize_vessel_type(code: int | None) -> VesselCategory:
    """Map a raw AIS vessel-type code to its normalized category.

    Total function: unmapped or missing codes yield UNKNOWN.
    """
    if code is None:
        return VesselCategory.UNKNOWN
    for lo, hi, cat in _TYPE_RANGES:
        if lo <= code <= hi:
            return cat
    return VesselCategory.UNKNOWN


def normalize_status(code: int | None) -> StatusCategory:
    """Map a raw AIS navigational-status code to its normalized category."""
    if code is None:
        return StatusCategory.UNKNOWN
    return _STATUS_CODES.get(code, StatusCategory.UNKNOWN)


@dataclass(frozen=True)
class AisRecord:
    """One normalized AIS broadcast."""

    mmsi: str
    timestamp: datetime
    lat: float
    lon: float
    sog: float | None = None
    cog: float | None = None
    heading: float | None = None
    vessel_name: str | None = None
    imo: str | None = None
    call_sign: str | None = None
    vessel_type_code: int | None = None
    vessel_category: VesselCategory = VesselCategory.UNKNOWN
    status_code: int | None = None
    status_category: StatusCategory = StatusCategory.UNKNOWN
    length_m: float | None = None
    width_m: float | None = None
    draft_m: float | None = None
    cargo_code: int | None = None
    transceiver_class: str | None = None

    @property
    def has_complete_position(self) -> bool:
        """True when both kinematic fields needed for projection are present."""
        return self.sog is not None and self.cog is not None

    @property
    def key(self) -> tuple[str, datetime]:
        return (self.mmsi, self.timestamp)


def build_schema(header_fields: Iterable[str]) -> dict[str, int]:
    """Column-name -> index map from a CSV header row.

    Raises ParseError if any required column is missing.
    """
    schema = {name.strip(): i for i, name in enumerate(header_fields)}
    for name in REQUIRED_COLUMNS:
        if name not in schema:
            raise ParseError(name, "missing required column")
    return schema


def _cell(fields: list[str], schema: Mapping[str, int], column: str) -> str | None:
    idx = schema.get(column)
    if idx is None or idx >= len(fields):
        return None
    value = fields[idx].strip()
    return value or None


def _parse_float(raw: str, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(column, f"malformed number {raw!r}") from None


def _parse_int(raw: str, column: str) -> int:
    try:
        return int(float(raw))
    except ValueError:
        raise ParseError(column, f"malformed integer {raw!r}") from None


def parse_csv_fields(fields: list[str], schema: Mapping[str, int]) -> AisRecord:
    """Validate and normalize one already-split CSV row."""
    mmsi = _cell(fields, schema, "MMSI")
    if mmsi is None:
        raise ParseError("mmsi", "missing value")
    if not _MMSI_RE.fullmatch(mmsi):
        raise ParseError("mmsi", f"must be exactly 9 decimal digits, got {mmsi!r}")

    raw_ts = _cell(fields, schema, "BaseDateTime")
    if raw_ts is None:
        raise ParseError("timestamp", "missing value")
    try:
        ts = datetime.strptime(raw_ts, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise ParseError("timestamp", f"expected YYYY-MM-DDTHH:MM:SS, got {raw_ts!r}") from None

    raw_lat = _cell(fields, schema, "LAT")
    if raw_lat is None:
        raise ParseError("lat", "missing value")
    lat = _parse_float(raw_lat, "lat")
    if not -90.0 <= lat <= 90.0:
        raise ParseError("lat", f"out of range [-90, 90]: {lat}")

    raw_lon = _cell(fields, schema, "LON")
    if raw_lon is None:
        raise ParseError("lon", "missing value")
    lon = _parse_float(raw_lon, "lon")
    if not -180.0 <= lon <= 180.0:
        raise ParseError("lon", f"out of range [-180, 180]: {lon}")

    sog = None
    raw_sog = _cell(fields, schema, "SOG")
    if raw_sog is not None:
        sog = _parse_float(raw_sog, "sog")
        if not 0.0 <= sog <= SOG_MAX_KN:
            raise ParseError("sog", f"out of range [0, {SOG_MAX_KN}]: {sog}")

    cog = None
    raw_cog = _cell(fields, schema, "COG")
    if raw_cog is not None:
        cog = _parse_float(raw_cog, "cog")
        if not 0.0 <= cog < 360.0:
            raise ParseError("cog", f"out of range [0, 360): {cog}")

    heading = None
    raw_heading = _cell(fields, schema, "Heading")
    if raw_heading is not None:
        heading = _parse_float(raw_heading, "heading")
        if heading == HEADING_UNAVAILABLE:
            heading = None
        elif not 0.0 <= heading < 360.0:
            raise ParseError("heading", f"out of range [0, 360): {heading}")

    type_code = None
    raw_type = _cell(fields, schema, "VesselType")
    if raw_type is not None:
        type_code = _parse_int(raw_type, "vessel_type_code")

    status_code = None
    raw_status = _cell(fields, schema, "Status")
    if raw_status is not None:
        status_code = _parse_int(raw_status, "status_code")

    def _positive_float(column: str, label: str) -> float | None:
        raw = _cell(fields, schema, column)
        if raw is None:
            return None
        value = _parse_float(raw, label)
        if value < 0:
            raise ParseError(label, f"must be >= 0: {value}")
        return value

    cargo_code = None
    raw_cargo = _cell(fields, schema, "Cargo")
    if raw_cargo is not None:
        cargo_code = _parse_int(raw_cargo, "cargo_code")

    transceiver = _cell(fields, schema, "TransceiverClass")
    if transceiver is not None:
        transceiver = transceiver.upper()
        if transceiver not in ("A", "B"):
            raise ParseError("transceiver_class", f"expected A or B, got {transceiver!r}")

    return AisRecord(
        mmsi=mmsi,
        timestamp=ts,
        lat=lat,
        lon=lon,
        sog=sog,
        cog=cog,
        heading=heading,
        vessel_name=_cell(fields, schema, "VesselName"),
        imo=_cell(fields, schema, "IMO"),
        call_sign=_cell(fields, schema, "CallSign"),
        vessel_type_code=type_code,
        vessel_category=normalize_vessel_type(type_code),
        status_code=status_code,
        status_category=normalize_status(status_code),
        length_m=_positive_float("Length", "length_m"),
        width_m=_positive_float("Width", "width_m"),
        draft_m=_positive_float("Draft", "draft_m"),
        cargo_code=cargo_code,
        transceiver_class=transceiver,
    )


def parse_csv_record(line: str, schema: Mapping[str, int]) -> AisRecord:
    """Parse one raw CSV data line against a header schema."""
    fields = next(csv.reader([line]))
    return parse_csv_fields(fields, schema)


# --- Canonical vessel-JSON line ---------------------------------------------
#
# One compact object per record, used verbatim in prompts:
#   {"lat": ..., "lon": ..., "sog": ..., "cog": ..., "heading": ...,
#    "mmsi": ..., "timestamp": ..., "type": ..., "status": ...}
# Coordinates are printed with at most 4 decimal places.

def to_vessel_json(record: AisRecord) -> str:
    payload = {
        "lat": round(record.lat, 4),
        "lon": round(record.lon, 4),
        "sog": record.sog,
        "cog": record.cog,
        "heading": record.heading,
        "mmsi": record.mmsi,
        "timestamp": record.timestamp.strftime(TIMESTAMP_FORMAT),
        "type": record.vessel_category.value,
        "status": record.status_category.value,
    }
    return json.dumps(payload, separators=(", ", ": "))


def from_vessel_json(line: str) -> AisRecord:
    """Reparse a canonical vessel-JSON line.

    Only the nine projected fields survive the round trip; identity fields
    that the line format does not carry come back empty.
    """
    obj = json.loads(line)
    return AisRecord(
        mmsi=str(obj["mmsi"]),
        timestamp=datetime.strptime(obj["timestamp"], TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc),
        lat=float(obj["lat"]),
        lon=float(obj["lon"]),
        sog=None if obj.get("sog") is None else float(obj["sog"]),
        cog=None if obj.get("cog") is None else float(obj["cog"]),
        heading=None if obj.get("heading") is None else float(obj["heading"]),
        vessel_category=VesselCategory(obj.get("type", "unknown")),
        status_category=StatusCategory(obj.get("status", "unknown")),
    )


def canonical_projection(record: AisRecord) -> AisRecord:
    """Project a record onto the fields the vessel-JSON line carries."""
    return AisRecord(
        mmsi=record.mmsi,
        timestamp=record.timestamp,
        lat=round(record.lat, 4),
        lon=round(record.lon, 4),
        sog=record.sog,
        cog=record.cog,
        heading=record.heading,
        vessel_category=record.vessel_category,
        status_category=record.status_category,
    )


# --- Batch ingestion ---------------------------------------------------------

@dataclass
class IngestStats:
    """Counters for one ingestion run; accepted + rejected + deduplicated
    always equals the number of data rows consumed."""

    accepted: int = 0
    rejected: int = 0
    deduplicated: int = 0
    rejection_reasons: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected + self.deduplicated

    def merge(self, other: "IngestStats") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.deduplicated += other.deduplicated
        self.rejection_reasons.update(other.rejection_reasons)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "deduplicated": self.deduplicated,
            "total": self.total,
            "rejection_reasons": dict(self.rejection_reasons),
        }


def ingest(source: Iterable[str] | IO[str], store: "RecordStore",
           schema: Mapping[str, int] | None = None,
           batch_size: int = 2000) -> IngestStats:
    """Ingest a stream of CSV lines into a record store.

    When no schema is supplied the first non-blank line is treated as the
    header. Per-row validation failures are counted and logged, not fatal;
    duplicates on (mmsi, timestamp) are dropped, first record wins.
    """
    stats = IngestStats()
    reader = csv.reader(_nonblank(source))
    if schema is None:
        try:
            header = next(reader)
        except StopIteration:
            return stats
        schema = build_schema(header)

    batch: list[AisRecord] = []

    def _flush() -> None:
        if not batch:
            return
        accepted, deduplicated = store.add_many(batch)
        stats.accepted += accepted
        stats.deduplicated += deduplicated
        batch.clear()

    for fields in reader:
        try:
            batch.append(parse_csv_fields(fields, schema))
        except ParseError as exc:
            stats.rejected += 1
            stats.rejection_reasons[exc.field] += 1
            logger.warning("rejected row (%s): %s", exc.field, exc.reason)
            continue
        if len(batch) >= batch_size:
            _flush()
    _flush()
    return stats


def ingest_files(paths: Iterable[str], store: "RecordStore") -> IngestStats:
    """Ingest multiple CSV files in sorted order (deterministic merge)."""
    stats = IngestStats()
    for path in sorted(str(p) for p in paths):
        with open(path, "r", encoding="utf-8-sig", newline="") as fh:
            file_stats = ingest(fh, store)
        logger.info("ingested %s: %s", path, file_stats.to_dict())
        stats.merge(file_stats)
    return stats


def _nonblank(lines: Iterable[str]) -> Iterator[str]:
    for line in lines:
        if line.strip():
            yield line
