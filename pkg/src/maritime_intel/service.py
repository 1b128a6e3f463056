"""Query service: natural-language constraints -> retrieval -> inference.

POST /query accepts {"question": ...}, extracts temporal and spatial
constraints with a deterministic rule-based parser, retrieves matching
records from the store, assembles a question-first prompt capped at 500
vessels, runs it through a chat-completions client (live or mock), and
streams the reply as newline-delimited JSON chunks.
"""
from __future__ import annotations

import json
import math
import random
import re
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterator

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .chat import ChatClient, ChatMessage, ChatRequest, TransportError
from .ingest import StatusCategory, VesselCategory, to_vessel_json
from .qagen import DATA_MARKER, QUESTIONS_MARKER, SINGLE_QUESTION_HEADER
from .sampler import Region, SamplingSettings
from .store import BoundingBox, RecordStore
from .util import derive_seed

MAX_VESSELS_PER_QUERY = 500

_REGION_PHRASES = {
    "east coast": Region.EAST_COAST,
    "west coast": Region.WEST_COAST,
    "gulf of mexico": Region.GULF_OF_MEXICO,
    "gulf": Region.GULF_OF_MEXICO,
    "great lakes": Region.GREAT_LAKES,
}

_STATUS_WORDS = {
    "underway": StatusCategory.UNDERWAY,
    "anchored": StatusCategory.ANCHORED,
    "at anchor": StatusCategory.ANCHORED,
    "moored": StatusCategory.MOORED,
    "aground": StatusCategory.AGROUND,
}

_DATE_RE = re.compile(r"\b(\d{4}-\d{2}-\d{2})\b")
_LAST_RE = re.compile(r"\blast\s+(\d+)\s+(hour|hours|day|days)\b", re.IGNORECASE)
_MMSI_RE = re.compile(r"\bmmsi\s+(\d{9})\b", re.IGNORECASE)
_BOX_RE = re.compile(
    r"\bbox\s+(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s+to\s+"
    r"(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\b", re.IGNORECASE)
_NEAR_RE = re.compile(r"\bnear\s+([A-Za-z][A-Za-z .]*)", re.IGNORECASE)


@dataclass
class QueryConstraints:
    raw_question: str
    window: tuple[datetime, datetime] | None = None
    bbox: BoundingBox | None = None
    region: Region | None = None
    vessel_category: VesselCategory | None = None
    status_category: StatusCategory | None = None
    mmsi: str | None = None

    def describe(self) -> dict:
        return {
            "window": [w.isoformat() for w in self.window] if self.window else None,
            "bbox": self.bbox.to_list() if self.bbox else None,
            "region": self.region.value if self.region else None,
            "vessel_category": self.vessel_category.value if self.vessel_category else None,
            "status_category": self.status_category.value if self.status_category else None,
            "mmsi": self.mmsi,
        }


class QueryRejected(ValueError):
    """The query resolved neither a time window nor any spatial constraint."""

    def __init__(self, missing: list[str]):
        super().__init__(f"query unresolvable; missing {', '.join(missing)}")
        self.missing = missing
        self.guidance = ("State a time (an ISO date like 2024-03-15, or 'last 6 hours') "
                         "and/or a place (a region name, 'near <port>', or "
                         "'box lat,lon to lat,lon').")


def parse_query(text: str, now: datetime | None = None,
                settings: SamplingSettings | None = None) -> QueryConstraints:
    """Extract constraints from a natural-language query.

    Recognizes ISO dates (one = that UTC day, two = a range), "last N
    hours/days" relative to `now`, region names, "near <port>" against the
    port list, explicit "box lat,lon to lat,lon" literals, vessel category
    and status words, and 9-digit MMSIs. Raises QueryRejected when neither
    time nor space resolves.
    """
    if not text or not text.strip():
        raise ValueError("empty query")
    settings = settings or SamplingSettings.from_config()
    lowered = text.lower()
    constraints = QueryConstraints(raw_question=text.strip())

    dates = _DATE_RE.findall(text)
    if dates:
        first = datetime.strptime(dates[0], "%Y-%m-%d").replace(tzinfo=timezone.utc)
        last = datetime.strptime(dates[-1], "%Y-%m-%d").replace(tzinfo=timezone.utc)
        constraints.window = (min(first, last), max(first, last) + timedelta(days=1))
    else:
        m = _LAST_RE.search(text)
        if m:
            if now is None:
                raise ValueError("relative time window needs a reference 'now'")
            amount = int(m.group(1))
            hours = amount * (24 if m.group(2).lower().startswith("day") else 1)
            constraints.window = (now - timedelta(hours=hours), now)

    for phrase, region in _REGION_PHRASES.items():
        if phrase in lowered:
            constraints.region = region
            constraints.bbox = settings.region_boxes[region]
            break

    box_match = _BOX_RE.search(text)
    if box_match:
        lat1, lon1, lat2, lon2 = (float(g) for g in box_match.groups())
        constraints.bbox = BoundingBox(min_lat=min(lat1, lat2), min_lon=min(lon1, lon2),
                                       max_lat=max(lat1, lat2), max_lon=max(lon1, lon2))
        constraints.region = None

    near = _NEAR_RE.search(text)
    if near and constraints.bbox is None:
        wanted = near.group(1).strip().lower()
        for port in settings.ports:
            if port.name.lower() in wanted or wanted.startswith(port.name.lower()):
                # 10 nm port radius as a lat/lon box (lon widened by latitude).
                dlat = settings.port_radius_nm / 60.0
                dlon = settings.port_radius_nm / (
                    60.0 * max(0.1, abs(math.cos(math.radians(port.lat)))))
                constraints.bbox = BoundingBox(port.lat - dlat, port.lon - dlon,
                                               port.lat + dlat, port.lon + dlon)
                break

    for category in VesselCategory:
        if category is VesselCategory.UNKNOWN:
            continue
        if re.search(rf"\b{category.value}\b", lowered):
            constraints.vessel_category = category
            break
    for phrase, status in _STATUS_WORDS.items():
        if phrase in lowered:
            constraints.status_category = status
            break
    mmsi_match = _MMSI_RE.search(text)
    if mmsi_match:
        constraints.mmsi = mmsi_match.group(1)

    if constraints.window is None and constraints.bbox is None and constraints.region is None:
        missing = ["time window", "spatial constraint (region, port, or box)"]
        raise QueryRejected(missing)
    return constraints


@dataclass
class AssembledQuery:
    prompt: str | None
    vessel_count: int
    total_matching: int
    truncated: bool
    record_count: int


def retrieve_and_assemble(constraints: QueryConstraints, store: RecordStore,
                          max_vessels: int = MAX_VESSELS_PER_QUERY,
                          seed: int = 29) -> AssembledQuery:
    """Fetch matching records and build the question-first prompt.

    More than max_vessels matches are cut down by the same deterministic
    seeded-sample rule the context sampler uses; the truncation is noted in
    the prompt itself. Zero matches produce no prompt (callers must not
    invoke inference).
    """
    start, end = constraints.window if constraints.window else (None, None)
    records = store.query(start=start, end=end, bbox=constraints.bbox,
                          mmsi=constraints.mmsi,
                          vessel_category=constraints.vessel_category,
                          status_category=constraints.status_category,
                          complete_position_only=True)
    tracks: dict[str, list] = {}
    for r in records:
        tracks.setdefault(r.mmsi, []).append(r)
    total = len(tracks)
    if total == 0:
        return AssembledQuery(prompt=None, vessel_count=0, total_matching=0,
                              truncated=False, record_count=0)
    mmsis = sorted(tracks)
    truncated = total > max_vessels
    if truncated:
        rng = random.Random(derive_seed(seed, "query-sample"))
        mmsis = sorted(rng.sample(mmsis, max_vessels))

    lines = [SINGLE_QUESTION_HEADER, "", QUESTIONS_MARKER,
             f"Q1. {constraints.raw_question}", ""]
    if truncated:
        lines.append(f"Note: showing {max_vessels} of {total} matching vessels.")
    lines.append(DATA_MARKER)
    n_records = 0
    for mmsi in mmsis:
        for record in tracks[mmsi]:
            lines.append(to_vessel_json(record))
            n_records += 1
    return AssembledQuery(prompt="\n".join(lines), vessel_count=len(mmsis),
                          total_matching=total, truncated=truncated,
                          record_count=n_records)


def _chunk(kind: str, payload) -> bytes:
    return (json.dumps({"type": kind, "payload": payload}) + "\n").encode("utf-8")


def create_app(store: RecordStore, client: ChatClient,
               settings: SamplingSettings | None = None,
               model: str = "maritime-intel-7b",
               max_vessels: int = MAX_VESSELS_PER_QUERY,
               now: datetime | None = None) -> FastAPI:
    """Build the HTTP app around a store and an inference client.

    `now` anchors relative time expressions; by default the newest stored
    timestamp is used so archival data stays queryable.
    """
    settings = settings or SamplingSettings.from_config()
    app = FastAPI(title="maritime-intel")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "records": store.count()}

    @app.post("/query")
    async def query(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "request body must be JSON"}, status_code=400)
        if not isinstance(body, dict) or not isinstance(body.get("question"), str) \
                or not body["question"].strip():
            return JSONResponse({"error": "body must be {\"question\": \"...\"}"},
                                status_code=400)

        anchor = now
        if anchor is None:
            span = store.time_span()
            anchor = span[1] if span else datetime.now(timezone.utc)
        try:
            constraints = parse_query(body["question"], now=anchor, settings=settings)
        except QueryRejected as exc:
            return JSONResponse({"error": "query_unresolvable", "missing": exc.missing,
                                 "guidance": exc.guidance}, status_code=422)

        assembled = retrieve_and_assemble(constraints, store, max_vessels=max_vessels)
        started = time.monotonic()

        def stream() -> Iterator[bytes]:
            yield _chunk("meta", {
                "constraints": constraints.describe(),
                "vessel_count": assembled.vessel_count,
                "total_matching": assembled.total_matching,
                "truncated": assembled.truncated,
                "no_data": assembled.vessel_count == 0,
            })
            answer = None
            if assembled.vessel_count > 0:
                chat_request = ChatRequest(
                    model=model,
                    messages=[ChatMessage("user", assembled.prompt)],
                    temperature=0.2,
                    metadata={"question": constraints.raw_question},
                )
                try:
                    answer = client.complete(chat_request)
                except TransportError as exc:
                    yield _chunk("error", {"message": str(exc)})
                    return
                for token in answer.split(" "):
                    yield _chunk("token", token)
            yield _chunk("done", {
                "elapsed_s": round(time.monotonic() - started, 6),
                "vessel_count": assembled.vessel_count,
                "answer": answer,
            })

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    return app
