"""Deterministic synthetic AIS fixture for tests and demos.

Generates a NOAA-layout CSV covering all four regions with both port and
open-water clusters, enough vessels per cluster to satisfy the context
floor, and kinematics that stay clean: speeds below every category cap,
implied point-to-point speeds far under the jump threshold, and a sprinkle
of sub-1-knot loiterers per open-water cluster. All records fall in local
peak hours of a single Q1 day.
"""
from __future__ import annotations

import csv
import math
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

FIXTURE_DAY = datetime(2024, 3, 15, tzinfo=timezone.utc)

# (region key, port cluster center, open-water cluster center, UTC offset)
_CLUSTERS = [
    ("east_coast", (25.77, -80.17), (33.5, -75.5), -5),
    ("gulf_of_mexico", (29.73, -95.01), (26.5, -89.5), -6),
    ("west_coast", (33.74, -118.26), (36.0, -124.5), -8),
    ("great_lakes", (46.77, -92.09), (44.0, -82.2), -5),
]

# (type code, sog range kn) pairs; every range sits safely below the
# category speed cap so the fixture is anomaly-free.
_PROFILES = [
    (70, (6.0, 18.0)),   # cargo (cap 25)
    (80, (5.0, 13.0)),   # tanker (cap 20)
    (30, (2.0, 8.0)),    # fishing (cap 20)
    (60, (8.0, 20.0)),   # passenger (cap 45)
    (52, (3.0, 10.0)),   # tug (cap 15)
    (37, (4.0, 22.0)),   # pleasure (cap 60)
]

HEADER = ["MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG", "Heading",
          "VesselName", "IMO", "CallSign", "VesselType", "Status", "Length",
          "Width", "Draft", "Cargo", "TransceiverClass"]

RECORDS_PER_VESSEL = 4
STEP_MINUTES = 15


def write_fixture_csv(path: str | Path, seed: int = 20240315,
                      vessels_per_cluster: int = 215,
                      loiterers_per_open_cluster: int = 10) -> int:
    """Write the fixture CSV; returns the number of data rows."""
    rng = random.Random(seed)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    vessel_index = 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for _region, port_center, open_center, offset in _CLUSTERS:
            for area, center in (("port", port_center), ("open", open_center)):
                spread = 0.06 if area == "port" else 0.4
                for i in range(vessels_per_cluster):
                    vessel_index += 1
                    loiterer = area == "open" and i < loiterers_per_open_cluster
                    rows += _write_vessel(writer, rng, vessel_index, center,
                                          spread, offset, loiterer)
    return rows


def _write_vessel(writer, rng: random.Random, index: int,
                  center: tuple[float, float], spread: float,
                  utc_offset: int, loiterer: bool) -> int:
    mmsi = f"3670{index:05d}"
    type_code, sog_range = _PROFILES[index % len(_PROFILES)]
    if loiterer:
        sog = rng.uniform(0.55, 0.9)
        status = rng.choice([1, 5])
    else:
        sog = rng.uniform(*sog_range)
        status = 0
    cog = rng.uniform(0, 359.9)
    lat0 = center[0] + rng.uniform(-spread, spread)
    lon0 = center[1] + rng.uniform(-spread, spread)
    # Local 08:00-13:00 start keeps all four reports inside peak hours.
    local_start_h = rng.uniform(8.0, 13.0)
    start = FIXTURE_DAY + timedelta(hours=local_start_h - utc_offset)
    heading = round(cog) % 360 if rng.random() > 0.1 else 511
    north = math.cos(math.radians(cog))
    east = math.sin(math.radians(cog))
    lon_scale = max(0.2, math.cos(math.radians(lat0)))

    for k in range(RECORDS_PER_VESSEL):
        ts = start + timedelta(minutes=k * STEP_MINUTES)
        # Advance along the course so implied speeds match sog.
        dist_nm = sog * (STEP_MINUTES / 60.0) * k
        writer.writerow([
            mmsi,
            ts.strftime("%Y-%m-%dT%H:%M:%S"),
            f"{lat0 + dist_nm / 60.0 * north:.5f}",
            f"{lon0 + dist_nm / 60.0 * east / lon_scale:.5f}",
            f"{sog:.1f}",
            f"{cog:.1f}",
            heading,
            f"VESSEL {mmsi[-5:]}",
            f"IMO{7000000 + index}",
            f"WDX{index:04d}",
            type_code,
            status,
            rng.choice([45, 90, 180, 250]),
            rng.choice([8, 12, 20, 32]),
            round(rng.uniform(2.0, 12.0), 1),
            type_code,
            rng.choice(["A", "A", "A", "B"]),
        ])
    return RECORDS_PER_VESSEL
