"""Synthetic session corpora whose marginals match reference feature percentiles.

Each numeric feature is drawn by pushing a uniform variate through a
piecewise-linear map on the square-root scale. The knots sit at the 25th,
75th, 85th and 95th percentiles and the maximum, plus a lower anchor at u = 0.
Internet ping and path distance share a Gaussian copula so ping grows with
distance; the GPN ping target is built from both with a periodic distance
effect and multiplicative log-normal noise.

All randomness comes from numpy's PCG64 generator. Rows are produced in
chunks of ``chunk_size`` and chunk ``c`` is seeded with
``SeedSequence(seed, spawn_key=(c,))``, so output does not depend on how
chunks are scheduled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .features import destination
from .genre_qoe import TYPE_SHARES, TypeMap
from .records import RawSessionRecord, RejectReason
from .warehouse import write_raw_file

QUANTILE_LEVELS = (0.25, 0.75, 0.85, 0.95, 1.0)

# p25, p75, p85, p95, max per feature, in the units the percentile table uses
# (bytes in MB, bytes per second in KB/s, distance in Mm, duration in s).
FEATURE_ANCHORS: dict[str, tuple[float, ...]] = {
    "INTERNET_PING": (65, 211, 256, 325, 500),
    "INTERNET_FLUX": (1, 7, 12, 27, 368),
    "INTERNET_LOSS": (0, 12, 32, 162, 25770),
    "INTERNET_SPKE": (0, 30, 72.6, 255, 13217),
    "BYTES_UP_TCP": (0.02, 2.47, 4.98, 12.31, 564.01),
    "BYTES_UP_UDP": (0, 6.25, 16.37, 52.54, 32226.17),
    "BYTES_DOWN_TCP": (0.06, 26.54, 52.14, 136.6, 63300.35),
    "BYTES_DOWN_UDP": (0, 22.70, 58.89, 181.1, 30650.83),
    "SOCKET_COUNT_TCP": (2, 23, 34, 184, 25405),
    "SOCKET_COUNT_UDP": (0, 8, 21, 90, 8449),
    "CLIENT_IP_COUNT": (1, 1, 1, 1, 17),
    "GAME_IP_COUNT": (2, 8, 15, 45, 2835),
    "BYTES_PER_SECOND": (1.59, 9.48, 12.13, 32.74, 11316.87),
    "CALCULATED_DISTANCE": (3.05, 12.15, 14.93, 19.84, 35.48),
    "DURATION": (2623, 15966, 26901.4, 43941.4, 662624),
}

# Value at u = 0. Zero unless the quantity has a natural floor.
LOWER_ANCHORS: dict[str, float] = {
    "INTERNET_PING": 5.0,
    "SOCKET_COUNT_TCP": 1.0,
    "CLIENT_IP_COUNT": 1.0,
    "GAME_IP_COUNT": 1.0,
    "DURATION": 60.0,
}

INTEGER_FEATURES = ("INTERNET_LOSS", "INTERNET_SPKE", "SOCKET_COUNT_TCP", "SOCKET_COUNT_UDP",
                    "CLIENT_IP_COUNT", "GAME_IP_COUNT", "DURATION")

WEEKEND_FRACTION = 0.482

# (city, country, lat, lon)
CITIES = (
    ("Vancouver", "CA", 49.28, -123.12), ("Toronto", "CA", 43.65, -79.38),
    ("Seattle", "US", 47.61, -122.33), ("Dallas", "US", 32.78, -96.80),
    ("New York", "US", 40.71, -74.01), ("Sao Paulo", "BR", -23.55, -46.63),
    ("Mexico City", "MX", 19.43, -99.13), ("London", "GB", 51.51, -0.13),
    ("Frankfurt", "DE", 50.11, 8.68), ("Paris", "FR", 48.86, 2.35),
    ("Warsaw", "PL", 52.23, 21.01), ("Moscow", "RU", 55.76, 37.62),
    ("Istanbul", "TR", 41.01, 28.98), ("Dubai", "AE", 25.20, 55.27),
    ("Mumbai", "IN", 19.08, 72.88), ("Singapore", "SG", 1.35, 103.82),
    ("Manila", "PH", 14.60, 120.98), ("Seoul", "KR", 37.57, 126.98),
    ("Tokyo", "JP", 35.68, 139.69), ("Sydney", "AU", -33.87, 151.21),
    ("Johannesburg", "ZA", -26.20, 28.05), ("Cairo", "EG", 30.04, 31.24),
)
ISPS = ("Telus", "Shaw", "Comcast", "Vodafone", "Orange", "NTT", "Singtel", "Rostelecom")
GAME_ISPS = ("Amazon", "Google Cloud", "Azure", "OVH", "Tencent Cloud")

MAX_LEG_KM = 19_900.0  # keeps every leg shorter than half a great circle


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n: int = 10_000
    seed: int = 20200701
    anchors: dict = field(default_factory=lambda: {k: list(v) for k, v in FEATURE_ANCHORS.items()})
    lower: dict = field(default_factory=lambda: dict(LOWER_ANCHORS))
    weekend_fraction: float = WEEKEND_FRACTION
    type_shares: dict = field(default_factory=lambda: dict(TYPE_SHARES))
    games_per_type: int = 3
    improvement: float = 0.8         # GPN ping as a fraction of internet ping
    distance_slope: float = 3.0      # ms of GPN ping per Mm of path
    ping_distance_rho: float = 0.6   # copula correlation, internet ping vs distance
    periodic_amplitude: float = 0.3  # relative size of the periodic distance effect
    periodic_length: float = 8.0     # Mm
    noise_sigma: float = 0.2         # sd of the log-normal ping noise
    ping_floor: float = 2.0          # ms
    start: str = "2020-07-01"
    end: str = "2020-10-31"
    n_clients: int | None = None
    n_servers: int = 400
    inject_rejects: float = 0.0      # fraction of rows that violate one cleaning rule
    chunk_size: int = 10_000

    def validate(self) -> None:
        if self.n < 0:
            raise SynthConfigError("n must be non-negative")
        for name, qs in self.anchors.items():
            if name not in FEATURE_ANCHORS:
                raise SynthConfigError(f"unknown feature {name!r}")
            if len(qs) != len(QUANTILE_LEVELS):
                raise SynthConfigError(f"{name}: expected {len(QUANTILE_LEVELS)} anchors")
            knots = [self.lower.get(name, 0.0)] + list(qs)
            if any(b < a for a, b in zip(knots, knots[1:])) or knots[0] < 0:
                raise SynthConfigError(f"{name}: quantile anchors must be non-decreasing and >= 0")
            if qs[-1] <= knots[0]:
                raise SynthConfigError(f"{name}: maximum must exceed the lower anchor")
        unknown = set(self.type_shares) - set(TYPE_SHARES)
        if unknown:
            raise SynthConfigError(f"unknown game types {sorted(unknown)}")
        if any(w < 0 for w in self.type_shares.values()) or sum(self.type_shares.values()) <= 0:
            raise SynthConfigError("type shares must be non-negative with a positive total")
        if not 0 <= self.weekend_fraction <= 1:
            raise SynthConfigError("weekend fraction must lie in [0, 1]")
        if not 0 <= self.inject_rejects < 1:
            raise SynthConfigError("inject_rejects must lie in [0, 1)")
        if not -1 < self.ping_distance_rho < 1:
            raise SynthConfigError("ping_distance_rho must lie in (-1, 1)")
        if self.anchors["CALCULATED_DISTANCE"][-1] > 2 * MAX_LEG_KM / 1000:
            raise SynthConfigError("maximum distance too large for two great-circle legs")
        if date.fromisoformat(self.end) < date.fromisoformat(self.start):
            raise SynthConfigError("end date precedes start date")
        if self.chunk_size <= 0 or self.games_per_type <= 0 or self.n_servers <= 0:
            raise SynthConfigError("chunk_size, games_per_type and n_servers must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def quantile_map(u: np.ndarray, anchors, lower: float = 0.0) -> np.ndarray:
    """Map uniforms to values, linear on the sqrt scale between anchors."""
    xs = np.array((0.0,) + QUANTILE_LEVELS)
    ys = np.sqrt(np.array((lower,) + tuple(anchors), dtype=float))
    return np.interp(u, xs, ys) ** 2


# --------------------------------------------------------------------------
# catalog


def catalog(config: SynthConfig) -> dict[str, list[str]]:
    """Game names per type. OTHER games are deliberately absent from the type map."""
    out = {}
    for tname in config.type_shares:
        if tname == "OTHER":
            out[tname] = [f"Indie Title {k + 1}" for k in range(config.games_per_type)]
        else:
            label = tname.title().replace(".", " ")
            out[tname] = [f"{label} Online {k + 1}" for k in range(config.games_per_type)]
    return out


def catalog_type_map(config: SynthConfig | None = None) -> TypeMap:
    config = config or SynthConfig()
    tm = TypeMap()
    for tname, games in catalog(config).items():
        if tname != "OTHER":
            for g in games:
                tm.add(g, tname)
    return tm


def allocate(shares: dict[str, float], n: int) -> dict[str, int]:
    """Largest-remainder apportionment of n rows to the given shares."""
    total = sum(shares.values())
    exact = {k: n * v / total for k, v in shares.items()}
    counts = {k: int(math.floor(v)) for k, v in exact.items()}
    leftover = n - sum(counts.values())
    order = sorted(shares, key=lambda k: (-(exact[k] - counts[k]), list(shares).index(k)))
    for k in order[:leftover]:
        counts[k] += 1
    return counts


# --------------------------------------------------------------------------
# generation


def _dates(config: SynthConfig) -> tuple[list[date], list[date]]:
    d0, d1 = date.fromisoformat(config.start), date.fromisoformat(config.end)
    days = [d0 + timedelta(days=i) for i in range((d1 - d0).days + 1)]
    weekend = [d for d in days if d.weekday() >= 4]
    weekday = [d for d in days if d.weekday() < 4]
    if not weekend or not weekday:
        raise SynthConfigError("date range must contain both weekend and weekday dates")
    return weekend, weekday


@dataclass
class _Population:
    client_city: np.ndarray
    client_geo: np.ndarray
    client_isp: np.ndarray
    server_isp: np.ndarray


def _population(config: SynthConfig) -> _Population:
    n_clients = config.n_clients or max(1, config.n // 4)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2**31,)))
    city = rng.integers(0, len(CITIES), n_clients)
    base = np.array([[CITIES[c][2], CITIES[c][3]] for c in city]).reshape(n_clients, 2)
    geo = base + rng.uniform(-0.5, 0.5, (n_clients, 2))
    return _Population(city, np.round(geo, 4), rng.integers(0, len(ISPS), n_clients),
                       rng.integers(0, len(GAME_ISPS), config.n_servers))


def _chunk(config: SynthConfig, pop: _Population, start: int, size: int, chunk_id: int,
           types: list[str], games: dict[str, list[str]], weekend_days, weekday_days):
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(chunk_id,)))
    names = list(FEATURE_ANCHORS)
    # One uniform per stratum of width 1/size: keeps empirical quantiles on their
    # anchors even where the map is steep (the p95 -> max segment).
    u = np.empty((size, len(names)))
    for j in range(len(names)):
        u[:, j] = (rng.permutation(size) + rng.random(size)) / size
    # Gaussian copula between path distance and internet ping, applied by
    # reordering the ping strata to follow the ranks of the correlated normal.
    jd, jp = names.index("CALCULATED_DISTANCE"), names.index("INTERNET_PING")
    z_dist = ndtri(u[:, jd])
    z_ping = (config.ping_distance_rho * z_dist
              + math.sqrt(1 - config.ping_distance_rho ** 2) * rng.standard_normal(size))
    ranks = np.argsort(np.argsort(z_ping, kind="stable"), kind="stable")
    u[:, jp] = np.sort(u[:, jp])[ranks]
    values = {}
    for j, name in enumerate(names):
        col = quantile_map(u[:, j], config.anchors[name], config.lower.get(name, 0.0))
        if name in INTEGER_FEATURES:
            col = np.rint(col)
        values[name] = col

    dist_mm = values["CALCULATED_DISTANCE"]
    ping = values["INTERNET_PING"]
    wave = 1.0 + config.periodic_amplitude * np.sin(2 * np.pi * dist_mm / config.periodic_length)
    noise = np.exp(config.noise_sigma * rng.standard_normal(size))
    wtfast = (config.improvement * ping + config.distance_slope * dist_mm) * wave * noise
    wtfast = np.maximum(wtfast, config.ping_floor)

    # Geometry: client -> node -> game legs whose lengths sum to the drawn distance.
    client_idx = rng.integers(0, len(pop.client_city), size)
    cgeo = pop.client_geo[client_idx]
    dist_km = dist_mm * 1000.0
    lo = np.maximum(0.1, 1 - MAX_LEG_KM / np.maximum(dist_km, 1e-9))
    hi = np.minimum(0.9, MAX_LEG_KM / np.maximum(dist_km, 1e-9))
    frac = lo + (hi - lo) * rng.random(size)
    nlat, nlon = destination(cgeo[:, 0], cgeo[:, 1], rng.uniform(0, 2 * np.pi, size), dist_km * frac)
    glat, glon = destination(nlat, nlon, rng.uniform(0, 2 * np.pi, size), dist_km * (1 - frac))

    weekend = rng.random(size) < config.weekend_fraction
    day_pick = rng.random(size)
    seconds = rng.integers(0, 86400, size)
    game_pick = rng.integers(0, config.games_per_type, size)
    server_idx = rng.integers(0, config.n_servers, size)
    scale = config.improvement

    rows = []
    for i in range(size):
        pool = weekend_days if weekend[i] else weekday_days
        day = pool[min(int(day_pick[i] * len(pool)), len(pool) - 1)]
        t0 = datetime(day.year, day.month, day.day, tzinfo=timezone.utc) + timedelta(seconds=int(seconds[i]))
        dur = float(values["DURATION"][i])
        c = int(client_idx[i])
        city = CITIES[int(pop.client_city[c])]
        gtype = types[start + i]
        s = int(server_idx[i])
        rows.append(RawSessionRecord(
            client_ip=f"10.{c // 65536 % 256}.{c // 256 % 256}.{c % 256}",
            client_isp=ISPS[int(pop.client_isp[c])],
            reg_country=city[1],
            client_geo=(float(cgeo[i, 0]), float(cgeo[i, 1])),
            server_id=f"srv-{s:04d}",
            game_ip=f"172.16.{s // 256}.{s % 256}",
            game_isp=GAME_ISPS[int(pop.server_isp[s])],
            game_name=games[gtype][int(game_pick[i])],
            game_geo=(round(float(glat[i]), 6), round(float(glon[i]), 6)),
            node_geo=(round(float(nlat[i]), 6), round(float(nlon[i]), 6)),
            session_start=t0,
            session_end=t0 + timedelta(seconds=dur),
            internet_ping=float(ping[i]),
            internet_flux=float(values["INTERNET_FLUX"][i]),
            internet_loss=float(values["INTERNET_LOSS"][i]),
            internet_spke=float(values["INTERNET_SPKE"][i]),
            wtfast_ping=float(wtfast[i]),
            wtfast_flux=float(values["INTERNET_FLUX"][i] * scale),
            wtfast_loss=float(np.rint(values["INTERNET_LOSS"][i] * scale)),
            wtfast_spke=float(np.rint(values["INTERNET_SPKE"][i] * scale)),
            bytes_up_tcp=float(values["BYTES_UP_TCP"][i]),
            bytes_up_udp=float(values["BYTES_UP_UDP"][i]),
            bytes_down_tcp=float(values["BYTES_DOWN_TCP"][i]),
            bytes_down_udp=float(values["BYTES_DOWN_UDP"][i]),
            socket_count_tcp=float(values["SOCKET_COUNT_TCP"][i]),
            socket_count_udp=float(values["SOCKET_COUNT_UDP"][i]),
            client_ip_count=float(values["CLIENT_IP_COUNT"][i]),
            game_ip_count=float(values["GAME_IP_COUNT"][i]),
            duration=dur,
            bytes_per_second=float(values["BYTES_PER_SECOND"][i]),
            source=f"synth:{start + i}",
        ))
    return rows


INJECTED_REASONS = (RejectReason.MISSING_PING, RejectReason.NONPOSITIVE_PING,
                    RejectReason.MISSING_DURATION, RejectReason.MISSING_GEO,
                    RejectReason.PARSE_ERROR)


def _inject(records: list[RawSessionRecord], config: SynthConfig) -> None:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2**31 + 1,)))
    k = int(round(config.inject_rejects * len(records)))
    picks = np.sort(rng.choice(len(records), size=k, replace=False)) if k else []
    for j, i in enumerate(picks):
        reason = INJECTED_REASONS[j % len(INJECTED_REASONS)]
        rec = records[int(i)]
        rec.source = f"{rec.source}:{reason.value}"
        if reason is RejectReason.MISSING_PING:
            rec.wtfast_ping = None
        elif reason is RejectReason.NONPOSITIVE_PING:
            rec.wtfast_ping = -abs(rec.wtfast_ping) if j % 2 else 0.0
        elif reason is RejectReason.MISSING_DURATION:
            rec.duration = None
            rec.session_end = None
        elif reason is RejectReason.MISSING_GEO:
            which = ("client_geo", "node_geo", "game_geo")[j % 3]
            setattr(rec, which, None)
        # PARSE_ERROR rows stay valid in memory; write_corpus corrupts their text.


def designated_reason(rec: RawSessionRecord) -> RejectReason | None:
    """Reject reason a synthetic row was built to trigger, if any."""
    tail = rec.source.rsplit(":", 1)[-1]
    try:
        return RejectReason(tail)
    except ValueError:
        return None


def generate(config: SynthConfig) -> list[RawSessionRecord]:
    config.validate()
    n = config.n
    if n == 0:
        return []
    counts = allocate(config.type_shares, n)
    types = [t for t in config.type_shares for _ in range(counts[t])]
    order_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2**31 + 2,)))
    types = [types[i] for i in order_rng.permutation(n)]
    games = catalog(config)
    weekend_days, weekday_days = _dates(config)
    pop = _population(config)
    records: list[RawSessionRecord] = []
    for chunk_id, start in enumerate(range(0, n, config.chunk_size)):
        size = min(config.chunk_size, n - start)
        records.extend(_chunk(config, pop, start, size, chunk_id, types, games,
                              weekend_days, weekday_days))
    if config.inject_rejects:
        _inject(records, config)
    return records


def write_corpus(path: str | Path, records: list[RawSessionRecord]) -> None:
    """Write a corpus in the raw ingest dialect, corrupting rows designated as parse errors."""
    corrupt = [i for i, r in enumerate(records) if designated_reason(r) is RejectReason.PARSE_ERROR]
    write_raw_file(path, records, corrupt_rows=corrupt)
