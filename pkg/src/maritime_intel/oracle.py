"""Deterministic ground-truth computation for the six question categories.

Every answer here is brute-force verifiable: dead-reckoned positions on a
sphere, per-track movement summaries, distinct-vessel counts, aggregate
speed statistics, behavioral pattern detection, and rule-based anomaly
detection. The same functions back both generation-time quality control and
evaluation references, so semantics stay consistent end to end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Sequence, TYPE_CHECKING

from .ingest import AisRecord
from .store import BoundingBox
from .util import format_quantity, load_packaged_json, round_quantity

if TYPE_CHECKING:
    from .sampler import VesselContext

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_NM = 1852.0
MAX_PROJECTION_S = 24 * 3600


class Category(str, Enum):
    TRAJECTORY = "trajectory"
    MOVEMENT = "movement"
    COUNT = "count"
    DATA_ANALYSIS = "data_analysis"
    PATTERN = "pattern"
    ANOMALY = "anomaly"


# --- Spherical geometry -------------------------------------------------------

def haversine_nm(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in nautical miles."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a)) / METERS_PER_NM


def project_position(lat: float, lon: float, bearing_deg: float,
                     distance_m: float) -> tuple[float, float]:
    """Great-circle forward projection; longitude wrapped to [-180, 180]."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(lat)
    lam1 = math.radians(lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta)
                     + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    lat2 = math.degrees(phi2)
    lon2 = math.degrees(lam2)
    lon2 = (lon2 + 180.0) % 360.0 - 180.0
    return lat2, lon2


def signed_angle_delta(a: float, b: float) -> float:
    """Minimal signed angle from a to b in degrees, in [-180, 180)."""
    return (b - a + 180.0) % 360.0 - 180.0


def circular_std_deg(angles_deg: Sequence[float]) -> float:
    """Circular standard deviation in degrees (wraparound-safe)."""
    if not angles_deg:
        return 0.0
    s = sum(math.sin(math.radians(a)) for a in angles_deg) / len(angles_deg)
    c = sum(math.cos(math.radians(a)) for a in angles_deg) / len(angles_deg)
    r = math.hypot(s, c)
    if r < 1e-12:
        return 180.0
    if r >= 1.0:
        return 0.0
    return math.degrees(math.sqrt(-2.0 * math.log(r)))


# --- Trajectory ----------------------------------------------------------------

def predict_position(last: AisRecord, delta_t_s: float) -> tuple[float, float]:
    """Dead-reckon from a record's position along its course over ground.

    Distance is sog * delta_t at 1 knot = 1852 m/h on a sphere of radius
    6371 km. delta_t must lie in [0, 24 h].
    """
    if last.sog is None or last.cog is None:
        raise ValueError("record lacks sog/cog; cannot project")
    if not 0 <= delta_t_s <= MAX_PROJECTION_S:
        raise ValueError(f"delta_t must lie in [0, {MAX_PROJECTION_S}] seconds")
    distance_m = last.sog * METERS_PER_NM * (delta_t_s / 3600.0)
    if distance_m == 0.0:
        return last.lat, last.lon
    return project_position(last.lat, last.lon, last.cog, distance_m)


# --- Movement ------------------------------------------------------------------

@dataclass(frozen=True)
class MovementSummary:
    mean_sog: float
    max_sog: float
    total_heading_change_deg: float
    max_acceleration_kn_per_min: float
    record_count: int


def movement_summary(track: Sequence[AisRecord]) -> MovementSummary:
    """Speed and heading statistics over one vessel's time-sorted track.

    Heading change sums the magnitude of the minimal signed angle between
    consecutive course values (350° -> 10° counts 20°, not 340°).
    Acceleration is |delta sog| per elapsed minute between consecutive
    reports; pairs with zero elapsed time are skipped.
    """
    if len(track) < 2:
        raise ValueError("movement summary requires at least 2 records")
    sogs = [r.sog for r in track if r.sog is not None]
    if not sogs:
        raise ValueError("movement summary requires sog values")
    heading_total = 0.0
    max_accel = 0.0
    for prev, cur in zip(track, track[1:]):
        if prev.cog is not None and cur.cog is not None:
            heading_total += abs(signed_angle_delta(prev.cog, cur.cog))
        minutes = (cur.timestamp - prev.timestamp).total_seconds() / 60.0
        if minutes > 0 and prev.sog is not None and cur.sog is not None:
            max_accel = max(max_accel, abs(cur.sog - prev.sog) / minutes)
    return MovementSummary(
        mean_sog=sum(sogs) / len(sogs),
        max_sog=max(sogs),
        total_heading_change_deg=heading_total,
        max_acceleration_kn_per_min=max_accel,
        record_count=len(track),
    )


# --- Counting & aggregate statistics --------------------------------------------

def count_vessels(context: "VesselContext",
                  bbox: BoundingBox | None = None,
                  window: tuple[datetime, datetime] | None = None,
                  category: str | None = None,
                  status: str | None = None) -> int:
    """Distinct vessels with at least one record satisfying every predicate."""
    matched: set[str] = set()
    for track in context.vessels:
        for r in track.records:
            if bbox is not None and not bbox.contains(r.lat, r.lon):
                continue
            if window is not None and not window[0] <= r.timestamp < window[1]:
                continue
            if category is not None and r.vessel_category.value != category:
                continue
            if status is not None and r.status_category.value != status:
                continue
            matched.add(track.mmsi)
            break
    return len(matched)


def lower_median(values: Sequence[float]) -> float:
    """Median as the lower-middle element for even counts (an observed value,
    never a fabricated midpoint)."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class AggregateStats:
    mean_sog: float
    median_sog: float
    max_sog: float
    category_histogram: dict[str, int]
    status_histogram: dict[str, int]
    record_count: int


def aggregate_stats(context: "VesselContext") -> AggregateStats:
    """Speed statistics and per-record category/status histograms."""
    sogs: list[float] = []
    cat_hist: dict[str, int] = {}
    status_hist: dict[str, int] = {}
    n = 0
    for track in context.vessels:
        for r in track.records:
            n += 1
            if r.sog is not None:
                sogs.append(r.sog)
            cat_hist[r.vessel_category.value] = cat_hist.get(r.vessel_category.value, 0) + 1
            status_hist[r.status_category.value] = status_hist.get(r.status_category.value, 0) + 1
    if n == 0:
        raise ValueError("aggregate statistics require a non-empty context")
    return AggregateStats(
        mean_sog=sum(sogs) / len(sogs) if sogs else 0.0,
        median_sog=lower_median(sogs) if sogs else 0.0,
        max_sog=max(sogs) if sogs else 0.0,
        category_histogram=dict(sorted(cat_hist.items())),
        status_histogram=dict(sorted(status_hist.items())),
        record_count=n,
    )


# --- Pattern detection -----------------------------------------------------------

@dataclass(frozen=True)
class PatternThresholds:
    loiter_max_mean_sog_kn: float = 1.0
    loiter_min_minutes: float = 30.0
    loiter_max_radius_nm: float = 1.0
    transit_min_mean_sog_kn: float = 5.0
    transit_max_cog_std_deg: float = 15.0
    transit_min_minutes: float = 30.0
    circle_min_total_deg: float = 360.0
    circle_window_minutes: float = 120.0

    @classmethod
    def from_config(cls, cfg: dict) -> "PatternThresholds":
        return cls(**{k: float(v) for k, v in cfg.items()})


@dataclass(frozen=True)
class PatternHit:
    mmsi: str
    pattern: str  # loitering | transit | circling
    window: tuple[datetime, datetime]


def _track_span_minutes(records: Sequence[AisRecord]) -> float:
    return (records[-1].timestamp - records[0].timestamp).total_seconds() / 60.0


def _bounding_radius_nm(records: Sequence[AisRecord]) -> float:
    # Max distance from the track centroid: a cheap bounding-circle proxy.
    clat = sum(r.lat for r in records) / len(records)
    clon = sum(r.lon for r in records) / len(records)
    return max(haversine_nm(clat, clon, r.lat, r.lon) for r in records)


def detect_patterns(context: "VesselContext",
                    thresholds: PatternThresholds | None = None) -> list[PatternHit]:
    """Classify per-vessel behavior: loitering, steady transit, circling.

    - loitering: mean sog below the cap over a long-enough track confined to
      a small bounding circle.
    - transit: fast mean sog with a tight circular spread of course values.
    - circling: cumulative signed heading change of a full turn inside the
      circling window.
    Detections are monotone in the thresholds: loosening any bound never
    removes a hit.
    """
    t = thresholds or PatternThresholds()
    hits: list[PatternHit] = []
    for track in context.vessels:
        records = track.records
        if len(records) < 2:
            continue
        span_min = _track_span_minutes(records)
        window = (records[0].timestamp, records[-1].timestamp)
        sogs = [r.sog for r in records if r.sog is not None]
        mean_sog = sum(sogs) / len(sogs) if sogs else 0.0

        if (span_min >= t.loiter_min_minutes and sogs
                and mean_sog < t.loiter_max_mean_sog_kn
                and _bounding_radius_nm(records) < t.loiter_max_radius_nm):
            hits.append(PatternHit(track.mmsi, "loitering", window))

        cogs = [r.cog for r in records if r.cog is not None]
        if (span_min >= t.transit_min_minutes and sogs and len(cogs) >= 2
                and mean_sog > t.transit_min_mean_sog_kn
                and circular_std_deg(cogs) < t.transit_max_cog_std_deg):
            hits.append(PatternHit(track.mmsi, "transit", window))

        circle = _detect_circling(records, t)
        if circle is not None:
            hits.append(PatternHit(track.mmsi, "circling", circle))
    return hits


def _detect_circling(records: Sequence[AisRecord],
                     t: PatternThresholds) -> tuple[datetime, datetime] | None:
    timed = [(r.timestamp, r.cog) for r in records if r.cog is not None]
    if len(timed) < 3:
        return None
    # Cumulative signed course change; look for a full turn within the window.
    cum = [0.0]
    for (_, a), (_, b) in zip(timed, timed[1:]):
        cum.append(cum[-1] + signed_angle_delta(a, b))
    window_s = t.circle_window_minutes * 60.0
    for i in range(len(timed)):
        for j in range(i + 1, len(timed)):
            if (timed[j][0] - timed[i][0]).total_seconds() > window_s:
                break
            if abs(cum[j] - cum[i]) >= t.circle_min_total_deg:
                return timed[i][0], timed[j][0]
    return None


# --- Anomaly detection -------------------------------------------------------------

_THRESHOLDS = load_packaged_json("thresholds.json")

DEFAULT_SPEED_CAPS_KN: dict[str, float] = {
    k: float(v) for k, v in _THRESHOLDS["speed_caps_kn"].items()
}


@dataclass(frozen=True)
class AnomalyThresholds:
    speed_caps_kn: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SPEED_CAPS_KN))
    impossible_jump_kn: float = float(_THRESHOLDS["anomalies"]["impossible_jump_kn"])
    dark_gap_hours: float = float(_THRESHOLDS["anomalies"]["dark_gap_hours"])
    normal_cadence_minutes: float = float(_THRESHOLDS["anomalies"]["normal_cadence_minutes"])


@dataclass(frozen=True)
class AnomalyHit:
    mmsi: str
    anomaly: str  # speed_violation | impossible_jump | dark_gap
    evidence: dict


def detect_anomalies(context: "VesselContext",
                     thresholds: AnomalyThresholds | None = None) -> list[AnomalyHit]:
    """Rule-based anomaly scan over every vessel track.

    - speed_violation: any sog above the per-category cap.
    - impossible_jump: implied point-to-point speed above the jump cap.
    - dark_gap: a reporting gap beyond the gap threshold from a vessel whose
      other inter-report gaps show a tight (sub-cadence) median.
    """
    t = thresholds or AnomalyThresholds()
    hits: list[AnomalyHit] = []
    for track in context.vessels:
        records = track.records
        for r in records:
            cap = t.speed_caps_kn.get(r.vessel_category.value)
            if cap is not None and r.sog is not None and r.sog > cap:
                hits.append(AnomalyHit(track.mmsi, "speed_violation", {
                    "timestamp": r.timestamp.isoformat(),
                    "sog_kn": r.sog,
                    "cap_kn": cap,
                    "category": r.vessel_category.value,
                }))
        for prev, cur in zip(records, records[1:]):
            hours = (cur.timestamp - prev.timestamp).total_seconds() / 3600.0
            if hours <= 0:
                continue
            implied = haversine_nm(prev.lat, prev.lon, cur.lat, cur.lon) / hours
            if implied > t.impossible_jump_kn:
                hits.append(AnomalyHit(track.mmsi, "impossible_jump", {
                    "from": prev.timestamp.isoformat(),
                    "to": cur.timestamp.isoformat(),
                    "implied_speed_kn": implied,
                }))
        hits.extend(_dark_gaps(track.mmsi, records, t))
    return hits


def _dark_gaps(mmsi: str, records: Sequence[AisRecord],
               t: AnomalyThresholds) -> list[AnomalyHit]:
    if len(records) < 3:
        return []
    gaps_s = [(cur.timestamp - prev.timestamp).total_seconds()
              for prev, cur in zip(records, records[1:])]
    out = []
    for i, gap in enumerate(gaps_s):
        if gap <= t.dark_gap_hours * 3600.0:
            continue
        others = gaps_s[:i] + gaps_s[i + 1:]
        if others and lower_median(others) <= t.normal_cadence_minutes * 60.0:
            out.append(AnomalyHit(mmsi, "dark_gap", {
                "from": records[i].timestamp.isoformat(),
                "to": records[i + 1].timestamp.isoformat(),
                "gap_hours": gap / 3600.0,
            }))
    return out


# --- Canonical answers ----------------------------------------------------------

@dataclass(frozen=True)
class NumericValue:
    name: str
    value: float
    unit: str = "none"

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "unit": self.unit}


@dataclass(frozen=True)
class OracleAnswer:
    """A reference answer: numbers plus a short canonical narrative.

    Every numeric value appearing in the narrative is listed in
    numeric_values (same rounding), which validate() enforces.
    """

    category: Category
    numeric_values: tuple[NumericValue, ...]
    narrative: str
    provenance: tuple[str, ...] = ()

    def validate(self) -> None:
        from .evalharness import extract_numbers
        listed = sorted(v.value for v in self.numeric_values)
        found = sorted(v for v, _ in extract_numbers(self.narrative))
        if listed != found:
            raise ValueError(
                f"narrative numbers {found} diverge from numeric_values {listed}")

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "numeric_values": [v.to_dict() for v in self.numeric_values],
            "narrative": self.narrative,
            "provenance": list(self.provenance),
        }


def _nv(name: str, value: float, unit: str = "none") -> NumericValue:
    return NumericValue(name=name, value=round_quantity(value), unit=unit)


def answer_trajectory(context: "VesselContext", mmsi: str, minutes: float) -> OracleAnswer:
    track = context.track(mmsi)
    last = track.records[-1]
    lat, lon = predict_position(last, minutes * 60.0)
    values = (
        _nv("elapsed_minutes", minutes),
        _nv("lat", lat, "degrees"),
        _nv("lon", lon, "degrees"),
    )
    narrative = (
        f"After {format_quantity(minutes)} minutes at its last reported speed and course, "
        f"the projected position is latitude {format_quantity(lat)}, "
        f"longitude {format_quantity(lon)}."
    )
    return OracleAnswer(Category.TRAJECTORY, values, narrative,
                        (f"{mmsi}@{last.timestamp.isoformat()}",))


def answer_movement(context: "VesselContext", mmsi: str) -> OracleAnswer:
    track = context.track(mmsi)
    summary = movement_summary(track.records)
    values = (
        _nv("report_count", summary.record_count, "count"),
        _nv("mean_sog", summary.mean_sog, "knots"),
        _nv("max_sog", summary.max_sog, "knots"),
        _nv("total_heading_change", summary.total_heading_change_deg, "degrees"),
        _nv("max_acceleration", summary.max_acceleration_kn_per_min),
    )
    narrative = (
        f"Across {format_quantity(summary.record_count)} reports the vessel averaged "
        f"{format_quantity(round_quantity(summary.mean_sog))} knots with a peak of "
        f"{format_quantity(round_quantity(summary.max_sog))} knots, changed heading by "
        f"{format_quantity(round_quantity(summary.total_heading_change_deg))} degrees in total, "
        f"and its largest speed change was "
        f"{format_quantity(round_quantity(summary.max_acceleration_kn_per_min))} knots per minute."
    )
    return OracleAnswer(Category.MOVEMENT, values, narrative,
                        tuple(f"{mmsi}@{r.timestamp.isoformat()}" for r in track.records))


def answer_count(context: "VesselContext", category: str | None = None) -> OracleAnswer:
    n = count_vessels(context, category=category)
    subject = f"{category} vessels" if category else "vessels"
    values = (_nv("vessel_count", n, "count"),)
    narrative = f"{format_quantity(n)} distinct {subject} reported in the area during the window."
    return OracleAnswer(Category.COUNT, values, narrative,
                        (f"context:{context.context_id}",))


def answer_data_analysis(context: "VesselContext") -> OracleAnswer:
    stats = aggregate_stats(context)
    top_category = max(stats.category_histogram.items(), key=lambda kv: (kv[1], kv[0]))
    values = (
        _nv("record_count", stats.record_count, "count"),
        _nv("mean_sog", stats.mean_sog, "knots"),
        _nv("median_sog", stats.median_sog, "knots"),
        _nv("max_sog", stats.max_sog, "knots"),
        _nv("top_category_count", top_category[1], "count"),
    )
    narrative = (
        f"Across {format_quantity(stats.record_count)} reports: mean speed "
        f"{format_quantity(round_quantity(stats.mean_sog))} knots, median speed "
        f"{format_quantity(round_quantity(stats.median_sog))} knots, maximum "
        f"{format_quantity(round_quantity(stats.max_sog))} knots; the most common vessel "
        f"category was {top_category[0]} with {format_quantity(top_category[1])} reports."
    )
    return OracleAnswer(Category.DATA_ANALYSIS, values, narrative,
                        (f"context:{context.context_id}",))


def answer_pattern(context: "VesselContext",
                   thresholds: PatternThresholds | None = None) -> OracleAnswer:
    hits = detect_patterns(context, thresholds)
    counts = {"loitering": set(), "transit": set(), "circling": set()}
    for hit in hits:
        counts[hit.pattern].add(hit.mmsi)
    values = (
        _nv("loitering", len(counts["loitering"]), "count"),
        _nv("transit", len(counts["transit"]), "count"),
        _nv("circling", len(counts["circling"]), "count"),
    )
    narrative = (
        f"Pattern scan: {format_quantity(len(counts['loitering']))} vessels loitering, "
        f"{format_quantity(len(counts['transit']))} in steady transit, "
        f"{format_quantity(len(counts['circling']))} circling."
    )
    return OracleAnswer(Category.PATTERN, values, narrative,
                        (f"context:{context.context_id}",))


def answer_anomaly(context: "VesselContext",
                   thresholds: AnomalyThresholds | None = None) -> OracleAnswer:
    hits = detect_anomalies(context, thresholds)
    counts = {"speed_violation": 0, "impossible_jump": 0, "dark_gap": 0}
    for hit in hits:
        counts[hit.anomaly] += 1
    values = (
        _nv("speed_violations", counts["speed_violation"], "count"),
        _nv("impossible_jumps", counts["impossible_jump"], "count"),
        _nv("dark_gaps", counts["dark_gap"], "count"),
    )
    narrative = (
        f"Anomaly scan: {format_quantity(counts['speed_violation'])} speed violations, "
        f"{format_quantity(counts['impossible_jump'])} impossible position jumps, "
        f"{format_quantity(counts['dark_gap'])} dark gaps."
    )
    return OracleAnswer(Category.ANOMALY, values, narrative,
                        (f"context:{context.context_id}",))


def answer_question(context: "VesselContext", category: Category, params: dict) -> OracleAnswer:
    """Dispatch to the category-specific answer builder."""
    if category == Category.TRAJECTORY:
        return answer_trajectory(context, params["mmsi"], params["minutes"])
    if category == Category.MOVEMENT:
        return answer_movement(context, params["mmsi"])
    if category == Category.COUNT:
        return answer_count(context, params.get("category"))
    if category == Category.DATA_ANALYSIS:
        return answer_data_analysis(context)
    if category == Category.PATTERN:
        return answer_pattern(context)
    if category == Category.ANOMALY:
        return answer_anomaly(context)
    raise ValueError(f"unknown category {category}")
