import math
import random
from datetime import timedelta

import pytest
from hypothesis import given, settings, strategies as st

from maritime_intel.evalharness import extract_numbers
from maritime_intel.ingest import VesselCategory
from maritime_intel.oracle import (AnomalyThresholds, Category, PatternThresholds,
                                   aggregate_stats, answer_question, count_vessels,
                                   detect_anomalies, detect_patterns, haversine_nm,
                                   lower_median, movement_summary, predict_position,
                                   signed_angle_delta)
from maritime_intel.store import BoundingBox
from testutil import T0, context, rec, track

EARTH_RADIUS_M = 6_371_000.0


def dead_reckon_by_vectors(lat, lon, bearing_deg, distance_m):
    """Independent projection through 3D unit-vector rotation."""
    phi, lam = math.radians(lat), math.radians(lon)
    theta = math.radians(bearing_deg)
    delta = distance_m / EARTH_RADIUS_M
    p = (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))
    north = (-math.sin(phi) * math.cos(lam), -math.sin(phi) * math.sin(lam), math.cos(phi))
    east = (-math.sin(lam), math.cos(lam), 0.0)
    d = tuple(north[i] * math.cos(theta) + east[i] * math.sin(theta) for i in range(3))
    p2 = tuple(p[i] * math.cos(delta) + d[i] * math.sin(delta) for i in range(3))
    lat2 = math.degrees(math.asin(max(-1.0, min(1.0, p2[2]))))
    lon2 = math.degrees(math.atan2(p2[1], p2[0]))
    return lat2, lon2


# --- trajectory ------------------------------------------------------------------

def test_predict_zero_elapsed_time():
    r = rec(lat=30.0, lon=-80.0, sog=10.0, cog=45.0)
    assert predict_position(r, 0) == (30.0, -80.0)


def test_predict_stationary_vessel():
    r = rec(sog=0.0, cog=170.0)
    assert predict_position(r, 6 * 3600) == (r.lat, r.lon)


def test_predict_one_nm_due_north():
    # 10 kn for 360 s = 1 nm; one nm north is one arc-minute of latitude
    r = rec(lat=30.0, lon=-80.0, sog=10.0, cog=0.0)
    lat, lon = predict_position(r, 360)
    expected_lat, expected_lon = dead_reckon_by_vectors(30.0, -80.0, 0.0, 1852.0)
    assert lat == pytest.approx(expected_lat, abs=1e-9)
    assert lon == pytest.approx(expected_lon, abs=1e-9)
    assert lat == pytest.approx(30.01667, abs=2e-4)
    assert lon == pytest.approx(-80.0, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.floats(-70, 70), st.floats(-179.9, 179.9), st.floats(0, 359.99),
       st.floats(0.1, 25.0), st.integers(1, 24 * 3600))
def test_predict_matches_independent_formulation(lat, lon, cog, sog, dt):
    r = rec(lat=lat, lon=lon, sog=sog, cog=cog)
    got = predict_position(r, dt)
    expected = dead_reckon_by_vectors(lat, lon, cog, sog * 1852.0 * dt / 3600.0)
    assert got[0] == pytest.approx(expected[0], abs=1e-7)
    # longitude wrap can legitimately differ by 360
    assert math.isclose((got[1] - expected[1]) % 360.0, 0.0, abs_tol=1e-7) or \
        math.isclose((got[1] - expected[1]) % 360.0, 360.0, abs_tol=1e-7)
    assert -90.0 <= got[0] <= 90.0 and -180.0 <= got[1] <= 180.0


@settings(max_examples=150, deadline=None)
@given(st.floats(-70, 70), st.floats(-179, 179), st.floats(0, 359.99),
       st.floats(0.5, 25.0), st.integers(60, 24 * 3600))
def test_predicted_distance_equals_sog_times_time(lat, lon, cog, sog, dt):
    r = rec(lat=lat, lon=lon, sog=sog, cog=cog)
    got = predict_position(r, dt)
    expected_m = sog * 1852.0 * dt / 3600.0
    actual_m = haversine_nm(lat, lon, got[0], got[1]) * 1852.0
    assert actual_m == pytest.approx(expected_m, rel=1e-6)


def test_predict_requires_kinematics_and_bounds():
    with pytest.raises(ValueError):
        predict_position(rec(sog=None), 60)
    with pytest.raises(ValueError):
        predict_position(rec(), -1)
    with pytest.raises(ValueError):
        predict_position(rec(), 25 * 3600)


# --- movement -----------------------------------------------------------------------

def test_movement_constant_track():
    t = track("367000009", [
        {"minutes": 0, "sog": 12.0, "cog": 90.0},
        {"minutes": 10, "sog": 12.0, "cog": 90.0},
        {"minutes": 20, "sog": 12.0, "cog": 90.0},
    ])
    s = movement_summary(t.records)
    assert s.mean_sog == 12.0
    assert s.max_sog == 12.0
    assert s.total_heading_change_deg == 0.0
    assert s.max_acceleration_kn_per_min == 0.0


def test_movement_heading_wraparound():
    t = track("367000009", [
        {"minutes": 0, "cog": 350.0},
        {"minutes": 10, "cog": 10.0},
    ])
    assert movement_summary(t.records).total_heading_change_deg == pytest.approx(20.0)


def test_movement_matches_brute_force_on_random_tracks():
    rng = random.Random(77)
    for _ in range(25):
        points = [{"minutes": i * rng.randint(2, 9),
                   "sog": round(rng.uniform(0, 20), 1),
                   "cog": round(rng.uniform(0, 359.9), 1)} for i in range(5)]
        # ensure strictly increasing time
        for i in range(1, 5):
            points[i]["minutes"] = points[i - 1]["minutes"] + rng.randint(2, 9)
        t = track("367000011", points)
        s = movement_summary(t.records)

        sogs = [p["sog"] for p in points]
        assert s.mean_sog == pytest.approx(sum(sogs) / 5)
        assert s.max_sog == max(sogs)
        expected_heading = 0.0
        expected_accel = 0.0
        for a, b in zip(points, points[1:]):
            d = (b["cog"] - a["cog"]) % 360.0
            expected_heading += min(d, 360.0 - d)
            dt_min = b["minutes"] - a["minutes"]
            expected_accel = max(expected_accel, abs(b["sog"] - a["sog"]) / dt_min)
        assert s.total_heading_change_deg == pytest.approx(expected_heading)
        assert s.max_acceleration_kn_per_min == pytest.approx(expected_accel)


def test_movement_requires_two_records():
    with pytest.raises(ValueError):
        movement_summary(track("367000001", [{"minutes": 0}]).records)


def test_signed_angle_delta_stays_minimal():
    assert signed_angle_delta(350.0, 10.0) == pytest.approx(20.0)
    assert signed_angle_delta(10.0, 350.0) == pytest.approx(-20.0)
    for a, b in [(0, 180), (90, 271), (5, 5)]:
        assert abs(signed_angle_delta(a, b)) <= 180.0


# --- counting --------------------------------------------------------------------------

def _mixed_context():
    tracks = [
        track("367000001", [{"minutes": 0, "category": VesselCategory.CARGO},
                            {"minutes": 10, "category": VesselCategory.CARGO}]),
        track("367000002", [{"minutes": 0, "lat": 31.0, "category": VesselCategory.TANKER}]),
        track("367000003", [{"minutes": 5, "lat": 32.0, "category": VesselCategory.CARGO}]),
        track("367000004", [{"minutes": 20, "lat": 29.0, "category": VesselCategory.FISHING}]),
    ]
    return context(tracks)


def test_count_matching_nothing():
    ctx = _mixed_context()
    assert count_vessels(ctx, category="military") == 0


def test_count_whole_context_equals_vessel_count():
    ctx = _mixed_context()
    assert count_vessels(ctx) == ctx.vessel_count


def test_count_filtered_equals_brute_force():
    ctx = _mixed_context()
    got = count_vessels(ctx, category="cargo")
    expected = len({t.mmsi for t in ctx.vessels
                    if any(r.vessel_category.value == "cargo" for r in t.records)})
    assert got == expected == 2


def test_count_respects_bbox_and_window():
    ctx = _mixed_context()
    bbox = BoundingBox(min_lat=30.5, min_lon=-90, max_lat=33, max_lon=-70)
    window = (T0, T0 + timedelta(minutes=6))
    got = count_vessels(ctx, bbox=bbox, window=window)
    expected = len({t.mmsi for t in ctx.vessels
                    if any(bbox.contains(r.lat, r.lon)
                           and window[0] <= r.timestamp < window[1]
                           for r in t.records)})
    assert got == expected == 2


# --- aggregate statistics -----------------------------------------------------------------

def test_aggregate_single_record():
    ctx = context([track("367000001", [{"minutes": 0, "sog": 7.0}])])
    stats = aggregate_stats(ctx)
    assert stats.mean_sog == stats.median_sog == stats.max_sog == 7.0


def test_lower_median_rule():
    assert lower_median([2, 4, 6, 8]) == 4
    assert lower_median([5]) == 5
    assert lower_median([3, 1, 2]) == 2


def test_aggregate_histograms_partition_records():
    ctx = _mixed_context()
    stats = aggregate_stats(ctx)
    assert sum(stats.category_histogram.values()) == stats.record_count
    assert sum(stats.status_histogram.values()) == stats.record_count
    assert stats.record_count == len(ctx.all_records())


def test_aggregate_matches_brute_force():
    rng = random.Random(3)
    tracks = [track(f"3670000{i:02d}",
                    [{"minutes": j * 5, "sog": round(rng.uniform(0, 20), 1)}
                     for j in range(rng.randint(1, 4))])
              for i in range(10)]
    ctx = context(tracks)
    stats = aggregate_stats(ctx)
    sogs = sorted(r.sog for t in tracks for r in t.records)
    assert stats.mean_sog == pytest.approx(sum(sogs) / len(sogs))
    assert stats.median_sog == sogs[(len(sogs) - 1) // 2]
    assert stats.max_sog == sogs[-1]


# --- patterns --------------------------------------------------------------------------

def _loiter_track(mmsi="367000021", minutes=45, sog=0.4):
    points = [{"minutes": m, "sog": sog, "cog": 10.0,
               "lat": 30.0 + 0.0001 * m, "lon": -80.0}
              for m in range(0, minutes + 1, 15)]
    return track(mmsi, points)


def _transit_track(mmsi="367000022", sog=15.0):
    points = [{"minutes": m, "sog": sog, "cog": 90.0,
               "lat": 30.0, "lon": -80.0 + 0.005 * m} for m in range(0, 46, 15)]
    return track(mmsi, points)


def test_stationary_vessel_is_loitering():
    hits = detect_patterns(context([_loiter_track()]))
    assert [(h.mmsi, h.pattern) for h in hits] == [("367000021", "loitering")]


def test_straight_fast_track_is_transit():
    hits = detect_patterns(context([_transit_track()]))
    assert [(h.mmsi, h.pattern) for h in hits] == [("367000022", "transit")]


def test_short_track_yields_no_patterns():
    t = track("367000023", [{"minutes": 0, "sog": 0.1}, {"minutes": 4, "sog": 0.1},
                            {"minutes": 9, "sog": 0.1}])
    assert detect_patterns(context([t])) == []


def test_circling_detected_within_window():
    # 30 degrees per 5 minutes -> full turn after 60 minutes
    points = [{"minutes": 5 * i, "sog": 4.0, "cog": (30.0 * i) % 360.0,
               "lat": 30.0 + 0.001 * i, "lon": -80.0} for i in range(14)]
    hits = detect_patterns(context([track("367000024", points)]))
    assert ("367000024", "circling") in [(h.mmsi, h.pattern) for h in hits]


def test_pattern_thresholds_are_monotone():
    base = PatternThresholds()
    loose = PatternThresholds(
        loiter_max_mean_sog_kn=base.loiter_max_mean_sog_kn * 2,
        loiter_min_minutes=base.loiter_min_minutes / 2,
        loiter_max_radius_nm=base.loiter_max_radius_nm * 2,
        transit_min_mean_sog_kn=base.transit_min_mean_sog_kn / 2,
        transit_max_cog_std_deg=base.transit_max_cog_std_deg * 2,
        transit_min_minutes=base.transit_min_minutes / 2,
        circle_min_total_deg=base.circle_min_total_deg / 2,
        circle_window_minutes=base.circle_window_minutes * 2,
    )
    rng = random.Random(41)
    tracks = []
    for i in range(12):
        style = rng.choice(["slow", "fast", "turny"])
        points = []
        cog = rng.uniform(0, 359)
        for j in range(rng.randint(2, 6)):
            if style == "slow":
                sog, step = rng.uniform(0, 2.0), 0.0003
            elif style == "fast":
                sog, step = rng.uniform(5, 18), 0.01
            else:
                sog, step = rng.uniform(2, 8), 0.004
                cog = (cog + rng.uniform(20, 80)) % 360
            points.append({"minutes": j * 12, "sog": round(sog, 1),
                           "cog": round(cog, 1),
                           "lat": 30.0 + step * j, "lon": -80.0 + step * j})
        tracks.append(track(f"3670001{i:02d}", points))
    ctx = context(tracks)
    strict_hits = {(h.mmsi, h.pattern) for h in detect_patterns(ctx, base)}
    loose_hits = {(h.mmsi, h.pattern) for h in detect_patterns(ctx, loose)}
    assert strict_hits <= loose_hits


# --- anomalies -------------------------------------------------------------------------

def test_cargo_speed_violation():
    t = track("367000031", [{"minutes": 0, "sog": 45.0},
                            {"minutes": 10, "sog": 45.0}])
    hits = detect_anomalies(context([t]))
    speeders = [h for h in hits if h.anomaly == "speed_violation"]
    assert speeders and speeders[0].evidence["cap_kn"] == 25.0


def test_impossible_jump():
    t = track("367000032", [
        {"minutes": 0, "lat": 30.0, "lon": -80.0, "sog": 10.0},
        {"minutes": 10, "lat": 31.0, "lon": -80.0, "sog": 10.0},  # 60 nm in 10 min
    ])
    hits = [h for h in detect_anomalies(context([t])) if h.anomaly == "impossible_jump"]
    assert len(hits) == 1
    assert hits[0].evidence["implied_speed_kn"] == pytest.approx(360.0, rel=0.01)


def test_dark_gap_requires_tight_cadence():
    # 2-minute cadence with one 7-hour hole -> dark gap
    points = ([{"minutes": 2 * i} for i in range(5)]
              + [{"minutes": 8 + 7 * 60 + 2 * i} for i in range(5)])
    hits = detect_anomalies(context([track("367000033", points)], hours=24))
    assert [h.anomaly for h in hits] == ["dark_gap"]
    # same hole but 30-minute cadence stays quiet
    sparse = ([{"minutes": 30 * i} for i in range(5)]
              + [{"minutes": 120 + 7 * 60 + 30 * i} for i in range(5)])
    assert detect_anomalies(context([track("367000034", sparse)], hours=24)) == []


def test_clean_context_has_no_anomalies():
    assert detect_anomalies(_mixed_context()) == []


def test_anomaly_thresholds_monotone():
    t = track("367000035", [{"minutes": 0, "sog": 22.0}, {"minutes": 10, "sog": 22.0}])
    strict = AnomalyThresholds(speed_caps_kn={"cargo": 20.0})
    loose = AnomalyThresholds(speed_caps_kn={"cargo": 25.0})
    ctx = context([t])
    assert {h.mmsi for h in detect_anomalies(ctx, loose)} <= \
        {h.mmsi for h in detect_anomalies(ctx, strict)}
    assert detect_anomalies(ctx, strict)


# --- canonical answers -------------------------------------------------------------------

@pytest.mark.parametrize("category,params", [
    (Category.TRAJECTORY, {"mmsi": "367000001", "minutes": 60}),
    (Category.MOVEMENT, {"mmsi": "367000001"}),
    (Category.COUNT, {"category": "cargo"}),
    (Category.COUNT, {}),
    (Category.DATA_ANALYSIS, {}),
    (Category.PATTERN, {}),
    (Category.ANOMALY, {}),
])
def test_answers_keep_narrative_and_values_in_sync(category, params):
    ctx = _mixed_context()
    answer = answer_question(ctx, category, params)
    answer.validate()
    narrative_values = [v for v, _ in extract_numbers(answer.narrative)]
    listed = [v.value for v in answer.numeric_values]
    assert sorted(narrative_values) == sorted(listed)
    assert answer.category == category
    assert answer.provenance


def test_answers_on_sampled_context(one_context):
    for category, params in [
        (Category.COUNT, {}),
        (Category.DATA_ANALYSIS, {}),
        (Category.PATTERN, {}),
        (Category.ANOMALY, {}),
    ]:
        answer_question(one_context, category, params).validate()
