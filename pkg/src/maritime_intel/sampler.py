"""Stratified sampling of vessel contexts from the record store.

Contexts bundle 200-500 vessels' records drawn from one stratum, where a
stratum crosses geographic region, port vs open water, peak/off-peak hours
by season, and a density tier derived from the qualifying vessel count.
Every context is assigned a generator model by a fixed schedule over its
ordinal id so the assignment never depends on scheduling or completion
order.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from .ingest import AisRecord, from_vessel_json, to_vessel_json
from .oracle import haversine_nm
from .store import BoundingBox, RecordStore
from .util import derive_seed, load_packaged_json

logger = logging.getLogger(__name__)


class Region(str, Enum):
    EAST_COAST = "east_coast"
    WEST_COAST = "west_coast"
    GULF_OF_MEXICO = "gulf_of_mexico"
    GREAT_LAKES = "great_lakes"


class AreaType(str, Enum):
    PORT = "port"
    OPEN_WATER = "open_water"


class DayPart(str, Enum):
    PEAK = "peak"
    OFF_PEAK = "off_peak"


class Season(str, Enum):
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"
    Q4 = "Q4"


class DensityTier(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class Generator(str, Enum):
    MODEL_A = "model_a"
    MODEL_B = "model_b"


# One context in every block of seven goes to the secondary model, which
# gives it exactly a 1-in-7 (14.29%) share of contexts.
GENERATOR_BLOCK = 7
MODEL_B_SLOT = 6


def assign_generator(context_id: int) -> Generator:
    """Generator model for a context ordinal (deterministic schedule)."""
    if context_id < 0:
        raise ValueError("context_id must be >= 0")
    return Generator.MODEL_B if context_id % GENERATOR_BLOCK == MODEL_B_SLOT else Generator.MODEL_A


@dataclass(frozen=True)
class Port:
    name: str
    lat: float
    lon: float


@dataclass(frozen=True)
class SamplingSettings:
    """Region boxes, port list, and sampling bounds (config-backed)."""

    region_boxes: dict[Region, BoundingBox]
    region_utc_offsets: dict[Region, int]
    ports: tuple[Port, ...]
    port_radius_nm: float = 10.0
    peak_start_local: int = 6
    peak_end_local: int = 18
    density_low_below: int = 300
    density_high_above: int = 1000
    min_vessels: int = 200
    max_vessels: int = 500

    @classmethod
    def from_config(cls, cfg: dict | None = None) -> "SamplingSettings":
        cfg = cfg or load_packaged_json("regions.json")
        boxes = {}
        offsets = {}
        for name, spec in cfg["regions"].items():
            region = Region(name)
            boxes[region] = BoundingBox(min_lat=spec["lat"][0], min_lon=spec["lon"][0],
                                        max_lat=spec["lat"][1], max_lon=spec["lon"][1])
            offsets[region] = int(spec["utc_offset_hours"])
        ports = tuple(Port(p["name"], p["lat"], p["lon"]) for p in cfg["ports"])
        tiers = cfg.get("density_tiers", {})
        peak = cfg.get("peak_hours_local", [6, 18])
        return cls(
            region_boxes=boxes,
            region_utc_offsets=offsets,
            ports=ports,
            port_radius_nm=float(cfg.get("port_radius_nm", 10.0)),
            peak_start_local=int(peak[0]),
            peak_end_local=int(peak[1]),
            density_low_below=int(tiers.get("low_below", 300)),
            density_high_above=int(tiers.get("high_above", 1000)),
            min_vessels=int(cfg.get("min_vessels_per_context", 200)),
            max_vessels=int(cfg.get("max_vessels_per_context", 500)),
        )

    def near_port(self, lat: float, lon: float) -> bool:
        return any(haversine_nm(lat, lon, p.lat, p.lon) <= self.port_radius_nm
                   for p in self.ports)

    def density_tier(self, vessel_count: int) -> DensityTier:
        if vessel_count < self.density_low_below:
            return DensityTier.LOW
        if vessel_count > self.density_high_above:
            return DensityTier.HIGH
        return DensityTier.MEDIUM


@dataclass(frozen=True)
class Stratum:
    region: Region
    area_type: AreaType
    day_part: DayPart
    season: Season
    density_tier: DensityTier

    def label(self) -> str:
        return (f"{self.region.value}/{self.area_type.value}/"
                f"{self.day_part.value}/{self.season.value}/{self.density_tier.value}")

    def to_dict(self) -> dict:
        return {
            "region": self.region.value,
            "area_type": self.area_type.value,
            "day_part": self.day_part.value,
            "season": self.season.value,
            "density_tier": self.density_tier.value,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Stratum":
        return cls(Region(obj["region"]), AreaType(obj["area_type"]),
                   DayPart(obj["day_part"]), Season(obj["season"]),
                   DensityTier(obj["density_tier"]))


@dataclass(frozen=True)
class VesselTrack:
    mmsi: str
    records: tuple[AisRecord, ...]


@dataclass(frozen=True)
class VesselContext:
    """A stratified bundle of vessels' records plus generator assignment."""

    context_id: int
    stratum: Stratum
    window: tuple[datetime, datetime]
    vessels: tuple[VesselTrack, ...]
    generator: Generator
    token_estimate: int

    @property
    def vessel_count(self) -> int:
        return len(self.vessels)

    def track(self, mmsi: str) -> VesselTrack:
        for t in self.vessels:
            if t.mmsi == mmsi:
                return t
        raise KeyError(f"mmsi {mmsi} not in context {self.context_id}")

    def all_records(self) -> list[AisRecord]:
        return [r for t in self.vessels for r in t.records]

    def validate(self, settings: SamplingSettings | None = None) -> None:
        s = settings or SamplingSettings.from_config()
        if not s.min_vessels <= self.vessel_count <= s.max_vessels:
            raise ValueError(f"vessel count {self.vessel_count} outside "
                             f"[{s.min_vessels}, {s.max_vessels}]")
        box = s.region_boxes[self.stratum.region]
        for track in self.vessels:
            for r in track.records:
                if not r.has_complete_position:
                    raise ValueError(f"incomplete positional data for {track.mmsi}")
                if not self.window[0] <= r.timestamp < self.window[1]:
                    raise ValueError(f"record outside window for {track.mmsi}")
                if not box.contains(r.lat, r.lon):
                    raise ValueError(f"record outside region box for {track.mmsi}")
        if assign_generator(self.context_id) != self.generator:
            raise ValueError("generator does not match the schedule for this id")


class InsufficientVesselsError(ValueError):
    """Fewer qualifying vessels than the context floor for a stratum."""

    def __init__(self, stratum: Stratum, found: int, needed: int):
        super().__init__(f"stratum {stratum.label()}: {found} qualifying vessels, "
                         f"need >= {needed}")
        self.stratum = stratum
        self.found = found
        self.needed = needed


def season_of(ts: datetime) -> Season:
    return Season(f"Q{(ts.month - 1) // 3 + 1}")


def _day_window_utc(day: datetime, day_part: DayPart,
                    settings: SamplingSettings, region: Region) -> tuple[datetime, datetime]:
    # Local peak hours shifted into UTC by the region's nominal offset.
    offset = settings.region_utc_offsets[region]
    base = day.replace(hour=0, minute=0, second=0, microsecond=0)
    peak_start = base + timedelta(hours=settings.peak_start_local - offset)
    peak_end = base + timedelta(hours=settings.peak_end_local - offset)
    if day_part == DayPart.PEAK:
        return peak_start, peak_end
    return peak_end, peak_start + timedelta(hours=24)


def candidate_days(span: tuple[datetime, datetime], season: Season) -> list[datetime]:
    """UTC midnights within the span whose calendar quarter matches."""
    start = span[0].replace(hour=0, minute=0, second=0, microsecond=0)
    days = []
    day = start
    while day <= span[1]:
        if season_of(day) == season:
            days.append(day)
        day += timedelta(days=1)
    return days


def choose_window(span: tuple[datetime, datetime], stratum: Stratum,
                  seed: int, settings: SamplingSettings) -> tuple[datetime, datetime] | None:
    days = candidate_days(span, stratum.season)
    if not days:
        return None
    rng = random.Random(derive_seed(seed, "window", stratum.label()))
    day = rng.choice(days)
    return _day_window_utc(day, stratum.day_part, settings, stratum.region)


def _qualifying_tracks(store: RecordStore, region: Region, area: AreaType,
                       window: tuple[datetime, datetime],
                       settings: SamplingSettings) -> dict[str, list[AisRecord]]:
    box = settings.region_boxes[region]
    records = store.query(start=window[0], end=window[1], bbox=box,
                          complete_position_only=True)
    tracks: dict[str, list[AisRecord]] = {}
    for r in records:
        in_port = settings.near_port(r.lat, r.lon)
        if (area == AreaType.PORT) != in_port:
            continue
        tracks.setdefault(r.mmsi, []).append(r)
    return tracks


@dataclass
class StratifyPlan:
    allocations: list[tuple[Stratum, int]]
    warnings: list[str] = field(default_factory=list)
    # qualifying vessel count measured for each planned stratum's probe window
    probe_counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(count for _, count in self.allocations)


def stratify_plan(store: RecordStore, target_contexts: int,
                  settings: SamplingSettings | None = None,
                  seed: int = 0) -> StratifyPlan:
    """Allocate context counts across the strata the store can actually fill.

    Every region with data receives at least one context; strata that cannot
    reach the vessel floor are reported in warnings, never silently dropped.
    Raises on an empty store.
    """
    if target_contexts < 1:
        raise ValueError("target_contexts must be >= 1")
    settings = settings or SamplingSettings.from_config()
    span = store.time_span()
    if span is None:
        raise ValueError("record store is empty; nothing to stratify")

    seasons = sorted(s.value for s in Season if candidate_days(span, s))
    available: list[tuple[Stratum, int]] = []
    warnings: list[str] = []
    probe_counts: dict[str, int] = {}
    covered_regions: set[Region] = set()
    for region in Region:
        for area in AreaType:
            for day_part in DayPart:
                for season_name in seasons:
                    season = Season(season_name)
                    probe = Stratum(region, area, day_part, season, DensityTier.LOW)
                    window = choose_window(span, probe, seed, settings)
                    if window is None:
                        continue
                    count = len(_qualifying_tracks(store, region, area, window, settings))
                    if count < settings.min_vessels:
                        warnings.append(
                            f"no usable data for stratum {region.value}/{area.value}/"
                            f"{day_part.value}/{season.value} "
                            f"({count} qualifying vessels, need {settings.min_vessels})")
                        continue
                    stratum = Stratum(region, area, day_part, season,
                                      settings.density_tier(count))
                    available.append((stratum, count))
                    probe_counts[stratum.label()] = count
                    covered_regions.add(region)

    for region in Region:
        if region not in covered_regions:
            warnings.append(f"region {region.value} has no stratum with sufficient data")

    if not available:
        raise ValueError("no stratum has enough qualifying vessels to build a context")

    available.sort(key=lambda sc: sc[0].label())
    counts = {stratum: 0 for stratum, _ in available}
    # First pass guarantees covered regions appear; then round-robin to target.
    remaining = target_contexts
    for region in sorted(covered_regions, key=lambda r: r.value):
        if remaining == 0:
            break
        stratum = next(s for s, _ in available if s.region == region)
        counts[stratum] += 1
        remaining -= 1
    idx = 0
    order = [s for s, _ in available]
    while remaining > 0:
        counts[order[idx % len(order)]] += 1
        idx += 1
        remaining -= 1

    allocations = [(s, counts[s]) for s in order if counts[s] > 0]
    return StratifyPlan(allocations=allocations, warnings=warnings,
                        probe_counts=probe_counts)


def build_context(store: RecordStore, stratum: Stratum,
                  window: tuple[datetime, datetime], rng_seed: int,
                  context_id: int = 0,
                  settings: SamplingSettings | None = None) -> VesselContext:
    """Build one context from a stratum and time window, deterministically.

    Takes every qualifying vessel up to the cap; beyond the cap, a seeded
    sample over the sorted vessel list picks exactly max_vessels. Raises
    InsufficientVesselsError below the floor.
    """
    if window[0] >= window[1]:
        raise ValueError("window must be non-empty")
    settings = settings or SamplingSettings.from_config()
    tracks = _qualifying_tracks(store, stratum.region, stratum.area_type, window, settings)
    if len(tracks) < settings.min_vessels:
        raise InsufficientVesselsError(stratum, len(tracks), settings.min_vessels)

    mmsis = sorted(tracks)
    if len(mmsis) > settings.max_vessels:
        rng = random.Random(derive_seed(rng_seed, "vessel-sample", context_id, stratum.label()))
        mmsis = sorted(rng.sample(mmsis, settings.max_vessels))

    vessels = tuple(
        VesselTrack(mmsi=m, records=tuple(sorted(tracks[m], key=lambda r: r.timestamp)))
        for m in mmsis
    )
    chars = sum(len(to_vessel_json(r)) + 1 for t in vessels for r in t.records)
    return VesselContext(
        context_id=context_id,
        stratum=stratum,
        window=window,
        vessels=vessels,
        generator=assign_generator(context_id),
        token_estimate=chars // 4,
    )


# --- Serialization -----------------------------------------------------------

def context_to_dict(ctx: VesselContext) -> dict:
    return {
        "context_id": ctx.context_id,
        "stratum": ctx.stratum.to_dict(),
        "window": [ctx.window[0].strftime("%Y-%m-%dT%H:%M:%S"),
                   ctx.window[1].strftime("%Y-%m-%dT%H:%M:%S")],
        "generator": ctx.generator.value,
        "vessel_count": ctx.vessel_count,
        "token_estimate": ctx.token_estimate,
        "vessels": [to_vessel_json(r) for t in ctx.vessels for r in t.records],
    }


def context_from_dict(obj: dict) -> VesselContext:
    window = tuple(datetime.strptime(w, "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)
                   for w in obj["window"])
    tracks: dict[str, list[AisRecord]] = {}
    for line in obj["vessels"]:
        r = from_vessel_json(line)
        tracks.setdefault(r.mmsi, []).append(r)
    vessels = tuple(
        VesselTrack(mmsi=m, records=tuple(sorted(tracks[m], key=lambda r: r.timestamp)))
        for m in sorted(tracks)
    )
    return VesselContext(
        context_id=int(obj["context_id"]),
        stratum=Stratum.from_dict(obj["stratum"]),
        window=(window[0], window[1]),
        vessels=vessels,
        generator=Generator(obj["generator"]),
        token_estimate=int(obj["token_estimate"]),
    )


def write_context(ctx: VesselContext, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"context_{ctx.context_id:06d}.json"
    path.write_text(json.dumps(context_to_dict(ctx)) + "\n", encoding="utf-8")
    return path


def load_context(path: str | Path) -> VesselContext:
    return context_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_contexts(contexts_dir: str | Path) -> list[VesselContext]:
    paths = sorted(Path(contexts_dir).glob("context_*.json"))
    return [load_context(p) for p in paths]


def sample_contexts(store: RecordStore, target_contexts: int, seed: int,
                    settings: SamplingSettings | None = None) -> tuple[list[VesselContext], StratifyPlan]:
    """Plan and build a batch of contexts with ordinal ids from 0.

    Context building is read-only over the store; each context derives its
    own RNG stream from (seed, context_id) so results never depend on
    build order.
    """
    settings = settings or SamplingSettings.from_config()
    plan = stratify_plan(store, target_contexts, settings, seed)
    span = store.time_span()
    contexts: list[VesselContext] = []
    context_id = 0
    for stratum, count in plan.allocations:
        for _ in range(count):
            window = choose_window(span, stratum, derive_seed(seed, context_id), settings)
            ctx = build_context(store, stratum, window, seed,
                                context_id=context_id, settings=settings)
            contexts.append(ctx)
            context_id += 1
    return contexts, plan
