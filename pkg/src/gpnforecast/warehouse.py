"""Raw file ingest, cleaning rules and the star-schema session warehouse."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import threading
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .features import FeatureError, calculated_distance, derive_measures, is_weekend
from .records import (MEASURES, RawSessionRecord, RejectReason, RejectRecord,
                      SessionFact)

log = logging.getLogger(__name__)

WAREHOUSE_VERSION = 1


class IngestError(OSError):
    pass


class SchemaError(ValueError):
    pass


class QueryError(ValueError):
    pass


# --------------------------------------------------------------------------
# raw file dialect

_STR, _GEO, _TS, _PING, _MEASURE, _OPT = "str", "geo", "ts", "ping", "measure", "opt"

RAW_COLUMNS: dict[str, str] = {
    "client_ip": _STR, "client_isp": _STR, "reg_country": _STR, "client_geo": _GEO,
    "server_id": _STR, "game_ip": _STR, "game_isp": _STR, "game_name": _STR,
    "game_geo": _GEO, "node_geo": _GEO,
    "session_start": _TS, "session_end": _TS,
    "internet_ping": _PING, "internet_flux": _MEASURE, "internet_loss": _MEASURE,
    "internet_spke": _MEASURE,
    "wtfast_ping": _PING, "wtfast_flux": _MEASURE, "wtfast_loss": _MEASURE,
    "wtfast_spke": _MEASURE,
    "bytes_up_tcp": _MEASURE, "bytes_up_udp": _MEASURE, "bytes_down_tcp": _MEASURE,
    "bytes_down_udp": _MEASURE,
    "socket_count_tcp": _MEASURE, "socket_count_udp": _MEASURE,
    "client_ip_count": _MEASURE, "game_ip_count": _MEASURE,
    "duration": _OPT, "bytes_per_second": _OPT,
}
OPTIONAL_COLUMNS = {"duration", "bytes_per_second", "bytes_total"}
# bytes_total is accepted for compatibility but always recomputed from its parts.
IGNORED_COLUMNS = {"bytes_total"}


def format_geo(geo) -> str:
    return "" if geo is None else f"{geo[0]!r};{geo[1]!r}"


def format_ts(ts: datetime | None) -> str:
    if ts is None:
        return ""
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_geo(text: str):
    if not text:
        return None
    lat_s, lon_s = text.split(";")
    lat, lon = float(lat_s), float(lon_s)
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"coordinate out of range: {text}")
    return (lat, lon)


def _parse_ts(text: str):
    if not text:
        return None
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_number(text: str, nonneg: bool):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    if nonneg and value < 0:
        raise ValueError(f"negative value {text!r}")
    return value


def _parse_row(row: dict[str, str]) -> dict:
    out = {}
    for col, kind in RAW_COLUMNS.items():
        text = (row.get(col) or "").strip()
        if kind == _STR:
            out[col] = text
        elif kind == _GEO:
            out[col] = _parse_geo(text)
        elif kind == _TS:
            out[col] = _parse_ts(text)
        elif kind == _PING:
            out[col] = _parse_number(text, nonneg=False) if text else None
        elif kind == _OPT:
            out[col] = _parse_number(text, nonneg=True) if text else None
        else:
            if not text:
                raise ValueError(f"{col} is empty")
            out[col] = _parse_number(text, nonneg=True)
    if out["session_start"] and out["session_end"] and out["session_end"] < out["session_start"]:
        raise ValueError("session_end precedes session_start")
    return out


def ingest_files(paths: Sequence[str | Path], delimiter: str = ","
                 ) -> tuple[list[RawSessionRecord], list[RejectRecord]]:
    """Read delimited raw session files into records, in file then row order.

    Rows that fail to parse become ``parse-error`` rejects. An unreadable file
    or a header with unknown (or missing required) columns aborts the ingest.
    """
    records: list[RawSessionRecord] = []
    rejects: list[RejectRecord] = []
    for path in paths:
        path = Path(path)
        try:
            fh = open(path, newline="", encoding="utf-8")
        except OSError as exc:
            raise IngestError(f"cannot read raw file {path}: {exc.strerror}") from exc
        with fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: missing header row") from None
            names = [h.strip().lower() for h in header]
            unknown = [h for h in names if h not in RAW_COLUMNS and h not in IGNORED_COLUMNS]
            if unknown:
                raise SchemaError(f"{path}: unknown column(s) {unknown}")
            missing = [c for c in RAW_COLUMNS if c not in names and c not in OPTIONAL_COLUMNS]
            if missing:
                raise SchemaError(f"{path}: missing required column(s) {missing}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                source = f"{path.name}:{lineno}"
                if len(row) != len(names):
                    rejects.append(RejectRecord(source, RejectReason.PARSE_ERROR,
                                                f"expected {len(names)} fields, got {len(row)}"))
                    continue
                try:
                    fields = _parse_row(dict(zip(names, row)))
                except ValueError as exc:
                    rejects.append(RejectRecord(source, RejectReason.PARSE_ERROR, str(exc)))
                    continue
                records.append(RawSessionRecord(**fields, source=source))
    return records, rejects


def write_raw_file(path: str | Path, records: Iterable[RawSessionRecord],
                   delimiter: str = ",", corrupt_rows: Iterable[int] = ()) -> None:
    """Write records in the ingest dialect (the inverse of ``ingest_files``).

    Rows whose index is in ``corrupt_rows`` get an unparseable ``wtfast_ping``.
    """
    cols = list(RAW_COLUMNS)
    corrupt = set(corrupt_rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(cols)
        for i, rec in enumerate(records):
            row = []
            for col in cols:
                value = getattr(rec, col)
                kind = RAW_COLUMNS[col]
                if kind == _GEO:
                    row.append(format_geo(value))
                elif kind == _TS:
                    row.append(format_ts(value))
                elif value is None:
                    row.append("")
                elif isinstance(value, float):
                    row.append(repr(value))
                else:
                    row.append(str(value))
            if i in corrupt:
                row[cols.index("wtfast_ping")] = "n/a"
            writer.writerow(row)


# --------------------------------------------------------------------------
# cleaning


def _duration(rec: RawSessionRecord):
    if rec.duration is not None:
        return rec.duration
    if rec.session_start is not None and rec.session_end is not None:
        return (rec.session_end - rec.session_start).total_seconds()
    return None


def clean(records: Iterable[RawSessionRecord]) -> tuple[list[SessionFact], list[RejectRecord]]:
    """Keep sessions with a positive GPN ping, a positive duration and all three geo points."""
    facts: list[SessionFact] = []
    rejects: list[RejectRecord] = []
    for rec in records:
        if rec.wtfast_ping is None:
            rejects.append(RejectRecord(rec.source, RejectReason.MISSING_PING))
            continue
        if not rec.wtfast_ping > 0:
            rejects.append(RejectRecord(rec.source, RejectReason.NONPOSITIVE_PING,
                                        f"wtfast_ping={rec.wtfast_ping}"))
            continue
        duration = _duration(rec)
        if rec.session_start is None or duration is None or not duration > 0:
            rejects.append(RejectRecord(rec.source, RejectReason.MISSING_DURATION))
            continue
        if rec.client_geo is None or rec.node_geo is None or rec.game_geo is None:
            rejects.append(RejectRecord(rec.source, RejectReason.MISSING_GEO))
            continue
        try:
            dist = calculated_distance(rec.client_geo, rec.node_geo, rec.game_geo)
        except FeatureError as exc:
            rejects.append(RejectRecord(rec.source, RejectReason.MISSING_GEO, str(exc)))
            continue
        end = rec.session_end or rec.session_start + timedelta(seconds=duration)
        fact = SessionFact(
            client_ip=rec.client_ip, client_isp=rec.client_isp, reg_country=rec.reg_country,
            client_geo=rec.client_geo, server_id=rec.server_id, game_ip=rec.game_ip,
            game_isp=rec.game_isp, game_name=rec.game_name, game_geo=rec.game_geo,
            node_geo=rec.node_geo, session_start=rec.session_start, session_end=end,
            internet_ping=rec.internet_ping, internet_flux=rec.internet_flux,
            internet_loss=rec.internet_loss, internet_spke=rec.internet_spke,
            wtfast_ping=rec.wtfast_ping, wtfast_flux=rec.wtfast_flux,
            wtfast_loss=rec.wtfast_loss, wtfast_spke=rec.wtfast_spke,
            bytes_up_tcp=rec.bytes_up_tcp, bytes_up_udp=rec.bytes_up_udp,
            bytes_down_tcp=rec.bytes_down_tcp, bytes_down_udp=rec.bytes_down_udp,
            socket_count_tcp=rec.socket_count_tcp, socket_count_udp=rec.socket_count_udp,
            client_ip_count=rec.client_ip_count, game_ip_count=rec.game_ip_count,
            duration=float(duration), calculated_distance=dist,
            bytes_per_second=rec.bytes_per_second, source=rec.source,
        )
        facts.append(derive_measures(fact))
    return facts, rejects


def write_rejects(path: str | Path, rejects: Iterable[RejectRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "reason", "detail"])
        for r in rejects:
            writer.writerow([r.source, r.reason.value, r.detail])


# --------------------------------------------------------------------------
# star schema

CLIENT_COLS = ["client_key", "client_ip", "client_isp", "reg_country", "client_lat", "client_lon"]
SERVER_COLS = ["server_key", "server_id", "game_ip", "game_isp", "game_name", "game_lat", "game_lon"]
_CAL_PARTS = ["day", "month", "year", "hour", "minute", "weekend"]
CALENDAR_COLS = (["calendar_key"] + [f"start_{p}" for p in _CAL_PARTS]
                 + [f"end_{p}" for p in _CAL_PARTS])
FACT_MEASURES = [m for m in MEASURES]
FACT_COLS = ["client_key", "server_key", "calendar_key", "node_lat", "node_lon"] + FACT_MEASURES
TABLES = {"client_dim": CLIENT_COLS, "server_dim": SERVER_COLS,
          "calendar_dim": CALENDAR_COLS, "session_fact": FACT_COLS}

# Filterable and groupable attributes of the joined view.
DIMENSIONS = ("game_name", "server_id", "game_isp", "client_ip", "client_isp", "reg_country",
              "start_year", "start_month", "start_day", "start_hour", "weekend")
ROLLUPS = ("count", "mean", "percentile")
_STRING_COLS = {"client_ip", "client_isp", "reg_country", "server_id", "game_ip", "game_isp",
                "game_name"}


def _calendar_key(ts: datetime) -> tuple:
    return (ts.day, ts.month, ts.year, ts.hour, ts.minute, is_weekend(ts))


class Warehouse:
    """In-memory star schema (client, server and calendar dimensions plus a session fact table).

    Loads are serialised by a lock; queries only read and may run concurrently.
    """

    def __init__(self, dedup: bool = False):
        self.dedup = dedup
        self._lock = threading.Lock()
        self._clients: dict[tuple, int] = {}
        self._servers: dict[tuple, int] = {}
        self._calendar: dict[tuple, int] = {}
        self._facts: list[tuple] = []
        self._fact_set: set[tuple] = set()
        self._view: pd.DataFrame | None = None

    @staticmethod
    def _key(table: dict, natural: tuple) -> int:
        key = table.get(natural)
        if key is None:
            key = len(table) + 1
            table[natural] = key
        return key

    def load(self, facts: Iterable[SessionFact]) -> int:
        """Append facts; returns how many fact rows were added."""
        added = 0
        with self._lock:
            for f in facts:
                ck = self._key(self._clients, (f.client_ip, f.client_isp, f.reg_country,
                                               f.client_geo[0], f.client_geo[1]))
                sk = self._key(self._servers, (f.server_id, f.game_ip, f.game_isp, f.game_name,
                                               f.game_geo[0], f.game_geo[1]))
                tk = self._key(self._calendar,
                               _calendar_key(f.session_start) + _calendar_key(f.session_end))
                row = (ck, sk, tk, f.node_geo[0], f.node_geo[1]) + tuple(
                    np.nan if getattr(f, m) is None else float(getattr(f, m)) for m in FACT_MEASURES)
                if self.dedup:
                    if row in self._fact_set:
                        continue
                    self._fact_set.add(row)
                self._facts.append(row)
                added += 1
            self._view = None
        return added

    # -- tables

    def table(self, name: str) -> pd.DataFrame:
        if name == "client_dim":
            rows = [(k,) + nat for nat, k in self._clients.items()]
        elif name == "server_dim":
            rows = [(k,) + nat for nat, k in self._servers.items()]
        elif name == "calendar_dim":
            rows = [(k,) + nat for nat, k in self._calendar.items()]
        elif name == "session_fact":
            rows = self._facts
        else:
            raise QueryError(f"unknown table {name!r}")
        return pd.DataFrame(rows, columns=TABLES[name])

    def __len__(self) -> int:
        return len(self._facts)

    def view(self) -> pd.DataFrame:
        """Fact table joined to its dimensions."""
        with self._lock:
            if self._view is None:
                fact = self.table("session_fact")
                view = (fact.merge(self.table("client_dim"), on="client_key", how="left")
                            .merge(self.table("server_dim"), on="server_key", how="left")
                            .merge(self.table("calendar_dim"), on="calendar_key", how="left"))
                view["weekend"] = view["start_weekend"]
                self._view = view
            return self._view

    def sessions(self) -> list[SessionFact]:
        """Facts rebuilt from the star schema, in load order.

        Timestamps come back at the calendar dimension's minute resolution.
        """
        clients = {k: nat for nat, k in self._clients.items()}
        servers = {k: nat for nat, k in self._servers.items()}
        calendar = {k: nat for nat, k in self._calendar.items()}
        out = []
        for row in self._facts:
            ck, sk, tk, nlat, nlon = row[:5]
            measures = dict(zip(FACT_MEASURES, row[5:]))
            c, s, t = clients[ck], servers[sk], calendar[tk]
            start = datetime(t[2], t[1], t[0], t[3], t[4], tzinfo=timezone.utc)
            end = datetime(t[8], t[7], t[6], t[9], t[10], tzinfo=timezone.utc)
            ping = measures.pop("internet_ping")
            out.append(SessionFact(
                client_ip=c[0], client_isp=c[1], reg_country=c[2], client_geo=(c[3], c[4]),
                server_id=s[0], game_ip=s[1], game_isp=s[2], game_name=s[3], game_geo=(s[4], s[5]),
                node_geo=(nlat, nlon), session_start=start, session_end=end,
                internet_ping=None if ping != ping else ping, **measures))
        return out

    # -- persistence

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"warehouse_version": WAREHOUSE_VERSION, "dedup": self.dedup, "tables": {}}
        for name in TABLES:
            path = directory / f"{name}.csv"
            self.table(name).to_csv(path, index=False, lineterminator="\n")
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            manifest["tables"][name] = {"file": path.name, "rows": len(self.table(name)),
                                        "sha256": digest}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return directory

    @classmethod
    def open(cls, directory: str | Path) -> "Warehouse":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("warehouse_version") != WAREHOUSE_VERSION:
            raise SchemaError(f"unsupported warehouse version {manifest.get('warehouse_version')!r}")
        wh = cls(dedup=manifest.get("dedup", False))
        frames = {}
        for name, cols in TABLES.items():
            df = pd.read_csv(directory / manifest["tables"][name]["file"],
                             keep_default_na=False, na_values=[""],
                             float_precision="round_trip",
                             dtype={c: str for c in _STRING_COLS.intersection(cols)})
            if list(df.columns) != cols:
                raise SchemaError(f"{name}: unexpected columns {list(df.columns)}")
            for col in _STRING_COLS.intersection(cols):
                df[col] = df[col].fillna("")
            frames[name] = df
        for name, target in (("client_dim", wh._clients), ("server_dim", wh._servers),
                             ("calendar_dim", wh._calendar)):
            for row in frames[name].itertuples(index=False):
                target[_native(row[1:])] = int(row[0])
        for row in frames["session_fact"].itertuples(index=False):
            row = _native(row)
            wh._facts.append(row)
            if wh.dedup:
                wh._fact_set.add(row)
        return wh


def _native(values) -> tuple:
    out = []
    for v in values:
        if isinstance(v, np.integer):
            out.append(int(v))
        elif isinstance(v, np.floating):
            out.append(float(v))
        else:
            out.append(v)
    return tuple(out)


def load(facts: Iterable[SessionFact], warehouse: Warehouse | None = None,
         dedup: bool = False) -> Warehouse:
    wh = warehouse if warehouse is not None else Warehouse(dedup=dedup)
    wh.load(facts)
    return wh


def query(wh: Warehouse, measure: str, rollup: str = "mean", percentile: float | None = None,
          game: str | None = None, country: str | None = None, hour: int | None = None,
          weekend: bool | None = None, date_from: date | None = None, date_to: date | None = None,
          group_by: Sequence[str] = ()) -> pd.DataFrame:
    """Filtered rollup of one measure, optionally grouped by dimension attributes.

    ``measure`` is any fact measure or ``weekend`` (the start-day weekend flag,
    whose mean is the weekend fraction). Date bounds are inclusive.
    """
    if measure not in FACT_MEASURES and measure != "weekend":
        raise QueryError(f"unknown measure {measure!r}")
    if rollup not in ROLLUPS:
        raise QueryError(f"unknown rollup {rollup!r}")
    if rollup == "percentile" and (percentile is None or not 0 <= percentile <= 100):
        raise QueryError("percentile rollup needs a percentile in [0, 100]")
    group_by = list(group_by)
    bad = [g for g in group_by if g not in DIMENSIONS]
    if bad:
        raise QueryError(f"unknown dimension(s) {bad}")

    df = wh.view()
    mask = np.ones(len(df), dtype=bool)
    if game is not None:
        mask &= (df["game_name"] == game).to_numpy()
    if country is not None:
        mask &= (df["reg_country"] == country).to_numpy()
    if hour is not None:
        mask &= (df["start_hour"] == hour).to_numpy()
    if weekend is not None:
        mask &= (df["weekend"] == int(weekend)).to_numpy()
    if date_from is not None or date_to is not None:
        days = pd.to_datetime(dict(year=df["start_year"], month=df["start_month"],
                                   day=df["start_day"])).dt.date
        if date_from is not None:
            mask &= (days >= date_from).to_numpy()
        if date_to is not None:
            mask &= (days <= date_to).to_numpy()
    sub = df.loc[mask, group_by + [measure]]

    def agg(values: pd.Series) -> float:
        vals = values.dropna().to_numpy(dtype=float)
        if rollup == "count":
            return float(len(vals))
        if len(vals) == 0:
            return float("nan")
        if rollup == "mean":
            return float(np.mean(vals))
        return float(np.percentile(vals, percentile))

    if not group_by:
        return pd.DataFrame({"value": [agg(sub[measure])], "n": [len(sub)]})
    rows = []
    for keys, grp in sub.groupby(group_by, sort=True):
        keys = keys if isinstance(keys, tuple) else (keys,)
        rows.append(tuple(keys) + (agg(grp[measure]), len(grp)))
    return pd.DataFrame(rows, columns=group_by + ["value", "n"])
