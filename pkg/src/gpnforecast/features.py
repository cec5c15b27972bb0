"""Feature engineering: derived measures, sqrt + min-max scaling, binning and indicators."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .genre_qoe import TYPE_VOCABULARY, TypeMap
from .records import SessionFact

EARTH_RADIUS_KM = 6371.0

# (column name, SessionFact attribute)
NUMERIC_FEATURES: tuple[tuple[str, str], ...] = (
    ("INTERNET_PING", "internet_ping"),
    ("INTERNET_FLUX", "internet_flux"),
    ("INTERNET_LOSS", "internet_loss"),
    ("INTERNET_SPKE", "internet_spke"),
    ("BYTES_UP_TCP", "bytes_up_tcp"),
    ("BYTES_UP_UDP", "bytes_up_udp"),
    ("BYTES_DOWN_TCP", "bytes_down_tcp"),
    ("BYTES_DOWN_UDP", "bytes_down_udp"),
    ("SOCKET_COUNT_TCP", "socket_count_tcp"),
    ("SOCKET_COUNT_UDP", "socket_count_udp"),
    ("CLIENT_IP_COUNT", "client_ip_count"),
    ("GAME_IP_COUNT", "game_ip_count"),
    ("BYTES_PER_SECOND", "bytes_per_second"),
    ("CALCULATED_DISTANCE", "calculated_distance"),
    ("DURATION", "duration"),
)
FEATURE_NAMES = tuple(name for name, _ in NUMERIC_FEATURES)
_ATTR = dict(NUMERIC_FEATURES)

# Count-like features with the heaviest skew get bin indicators.
DEFAULT_BINNED = ("INTERNET_LOSS", "INTERNET_SPKE", "SOCKET_COUNT_TCP",
                  "SOCKET_COUNT_UDP", "CLIENT_IP_COUNT", "GAME_IP_COUNT")
BIN_PERCENTILES = (25.0, 75.0, 85.0, 95.0)

WEEKEND = "WEEKEND"
TARGET_TRANSFORMS = ("identity", "log")
SCHEMA_VERSION = 1


class FeatureError(ValueError):
    pass


# --------------------------------------------------------------------------
# geography


def _check_point(point) -> tuple[float, float]:
    lat, lon = float(point[0]), float(point[1])
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise FeatureError(f"coordinate out of range: ({lat}, {lon})")
    return lat, lon


def haversine_km(a, b) -> float:
    lat1, lon1 = map(math.radians, _check_point(a))
    lat2, lon2 = map(math.radians, _check_point(b))
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def calculated_distance(client_geo, node_geo, game_geo) -> float:
    """Client -> node -> game path length in megameters."""
    return (haversine_km(client_geo, node_geo) + haversine_km(node_geo, game_geo)) / 1000.0


def destination(lat, lon, bearing, distance_km):
    """Point reached from (lat, lon) along ``bearing`` (radians) after ``distance_km``.

    Vectorised over numpy arrays; returns (lat, lon) in degrees.
    """
    phi1 = np.radians(lat)
    lam1 = np.radians(lon)
    delta = np.asarray(distance_km, dtype=float) / EARTH_RADIUS_KM
    sin_phi2 = np.sin(phi1) * np.cos(delta) + np.cos(phi1) * np.sin(delta) * np.cos(bearing)
    phi2 = np.arcsin(np.clip(sin_phi2, -1.0, 1.0))
    lam2 = lam1 + np.arctan2(np.sin(bearing) * np.sin(delta) * np.cos(phi1),
                             np.cos(delta) - np.sin(phi1) * sin_phi2)
    lon2 = (np.degrees(lam2) + 540.0) % 360.0 - 180.0
    return np.degrees(phi2), lon2


# --------------------------------------------------------------------------
# derived measures


def derive_measures(fact: SessionFact) -> SessionFact:
    """Fill ``bytes_total`` and, when not measured directly, ``bytes_per_second``."""
    if not fact.duration > 0:
        raise FeatureError(f"duration must be positive, got {fact.duration}")
    fact.bytes_total = (fact.bytes_up_tcp + fact.bytes_up_udp
                        + fact.bytes_down_tcp + fact.bytes_down_udp)
    if fact.bytes_per_second is None:
        fact.bytes_per_second = fact.bytes_total / fact.duration
    return fact


# --------------------------------------------------------------------------
# schema


@dataclass
class FeatureSchema:
    features: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    bin_edges: dict[str, tuple[float, ...]] = field(default_factory=dict)
    vocabulary: tuple[str, ...] = TYPE_VOCABULARY
    use_binning: bool = True
    use_select_list: bool = False
    select_list: tuple[str, ...] | None = None
    target_transform: str = "identity"
    reference: str = ""

    def __post_init__(self):
        if self.target_transform not in TARGET_TRANSFORMS:
            raise FeatureError(f"unknown target transform {self.target_transform!r}")
        for name, lo, hi in zip(self.features, self.mins, self.maxs):
            if lo > hi:
                raise FeatureError(f"{name}: fitted min {lo} exceeds max {hi}")

    @property
    def degenerate(self) -> tuple[str, ...]:
        return tuple(n for n, lo, hi in zip(self.features, self.mins, self.maxs) if lo == hi)

    @property
    def columns(self) -> tuple[str, ...]:
        cols = list(self.features)
        for name in self.features:
            if name in self.bin_edges:
                cols.extend(f"{name}.BIN{k}" for k in range(len(self.bin_edges[name]) + 1))
        cols.append(WEEKEND)
        cols.extend(self.vocabulary)
        return tuple(cols)

    def _fingerprint_payload(self) -> dict:
        # The target transform and select list are training choices: they do not
        # change what a matrix column means, so they stay out of the fingerprint.
        return {
            "version": SCHEMA_VERSION,
            "features": list(self.features),
            "mins": [repr(float(v)) for v in self.mins],
            "maxs": [repr(float(v)) for v in self.maxs],
            "bin_edges": {k: [repr(float(e)) for e in v] for k, v in sorted(self.bin_edges.items())},
            "vocabulary": list(self.vocabulary),
        }

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self._fingerprint_payload(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "fingerprint": self.fingerprint,
            "reference": self.reference,
            "target_transform": self.target_transform,
            "use_binning": self.use_binning,
            "use_select_list": self.use_select_list,
            "select_list": list(self.select_list) if self.select_list is not None else None,
            "features": [
                {"name": n, "min": lo, "max": hi, "degenerate": lo == hi,
                 "bin_edges": list(self.bin_edges[n]) if n in self.bin_edges else None}
                for n, lo, hi in zip(self.features, self.mins, self.maxs)
            ],
            "vocabulary": list(self.vocabulary),
            "columns": list(self.columns),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise FeatureError(f"unsupported schema version {doc.get('schema_version')!r}")
        feats = doc["features"]
        schema = cls(
            features=tuple(f["name"] for f in feats),
            mins=tuple(float(f["min"]) for f in feats),
            maxs=tuple(float(f["max"]) for f in feats),
            bin_edges={f["name"]: tuple(map(float, f["bin_edges"])) for f in feats if f["bin_edges"]},
            vocabulary=tuple(doc["vocabulary"]),
            use_binning=bool(doc["use_binning"]),
            use_select_list=bool(doc["use_select_list"]),
            select_list=tuple(doc["select_list"]) if doc.get("select_list") else None,
            target_transform=doc["target_transform"],
            reference=doc.get("reference", ""),
        )
        if "fingerprint" in doc and doc["fingerprint"] != schema.fingerprint:
            raise FeatureError("schema document fingerprint does not match its contents")
        return schema

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def raw_feature_matrix(facts: Sequence[SessionFact]) -> np.ndarray:
    """Untransformed numeric features, one column per NUMERIC_FEATURES entry (NaN if absent)."""
    out = np.empty((len(facts), len(NUMERIC_FEATURES)), dtype=float)
    for j, (_, attr) in enumerate(NUMERIC_FEATURES):
        col = [getattr(f, attr) for f in facts]
        out[:, j] = [np.nan if v is None else v for v in col]
    return out


def fit_schema(facts: Sequence[SessionFact], use_binning: bool = True,
               binned: Iterable[str] = DEFAULT_BINNED, target_transform: str = "identity",
               use_select_list: bool = False, select_list: Sequence[str] | None = None,
               reference: str = "") -> FeatureSchema:
    """Fit sqrt-scale min/max ranges (and bin edges) on a reference partition."""
    if len(facts) == 0:
        raise FeatureError("cannot fit a schema on an empty partition")
    raw = raw_feature_matrix(facts)
    if np.any(raw < 0):
        raise FeatureError("numeric features must be non-negative")
    root = np.sqrt(raw)
    mins, maxs = [], []
    for j in range(root.shape[1]):
        col = root[:, j]
        col = col[~np.isnan(col)]
        if col.size == 0:
            mins.append(0.0)
            maxs.append(0.0)
        else:
            mins.append(float(col.min()))
            maxs.append(float(col.max()))
    edges: dict[str, tuple[float, ...]] = {}
    if use_binning:
        for name in binned:
            if name not in FEATURE_NAMES:
                raise FeatureError(f"cannot bin unknown feature {name!r}")
            col = root[:, FEATURE_NAMES.index(name)]
            col = col[~np.isnan(col)]
            if col.size == 0:
                col = np.zeros(1)
            edges[name] = tuple(float(e) for e in np.percentile(col, BIN_PERCENTILES))
    return FeatureSchema(
        features=FEATURE_NAMES, mins=tuple(mins), maxs=tuple(maxs), bin_edges=edges,
        use_binning=use_binning, use_select_list=use_select_list,
        select_list=tuple(select_list) if select_list is not None else None,
        target_transform=target_transform, reference=reference,
    )


# --------------------------------------------------------------------------
# transform


@dataclass
class FeatureMatrix:
    columns: tuple[str, ...]
    X: np.ndarray
    ping: np.ndarray  # wtfast ping in ms
    fingerprint: str
    target_transform: str = "identity"
    game_types: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def target(self) -> np.ndarray:
        return target_values(self.ping, self.target_transform)

    def with_target(self, transform: str) -> "FeatureMatrix":
        if transform not in TARGET_TRANSFORMS:
            raise FeatureError(f"unknown target transform {transform!r}")
        return replace(self, target_transform=transform)

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        types = tuple(self.game_types[i] for i in idx) if self.game_types else ()
        return replace(self, X=self.X[idx], ping=self.ping[idx], game_types=types)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]


def target_values(ping: np.ndarray, transform: str) -> np.ndarray:
    ping = np.asarray(ping, dtype=float)
    if transform == "identity":
        return ping.copy()
    if transform == "log":
        if np.any(ping <= 0):
            raise FeatureError("log target needs strictly positive pings")
        return np.log(ping)
    raise FeatureError(f"unknown target transform {transform!r}")


def inverse_target(values: np.ndarray, transform: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if transform == "identity":
        return values.copy()
    if transform == "log":
        return np.exp(values)
    raise FeatureError(f"unknown target transform {transform!r}")


def scale_numeric(raw: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Square root, then min-max to [0, 1] with clamping. NaN cells become 0."""
    lo = np.asarray(schema.mins)
    hi = np.asarray(schema.maxs)
    span = hi - lo
    root = np.sqrt(raw)
    with np.errstate(invalid="ignore", divide="ignore"):
        cells = np.where(span > 0, (root - lo) / np.where(span > 0, span, 1.0), 0.0)
    cells = np.clip(cells, 0.0, 1.0)
    return np.nan_to_num(cells, nan=0.0)


def inverse_scale(cells: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    lo = np.asarray(schema.mins)
    hi = np.asarray(schema.maxs)
    return (lo + np.asarray(cells) * (hi - lo)) ** 2


def is_weekend(ts) -> int:
    return int(ts.weekday() >= 4)  # Friday, Saturday, Sunday


def transform(facts: Sequence[SessionFact], schema: FeatureSchema,
              type_map: TypeMap | None = None) -> FeatureMatrix:
    type_map = type_map or TypeMap()
    n = len(facts)
    raw = raw_feature_matrix(facts)
    blocks = [scale_numeric(raw, schema)]
    root = np.sqrt(raw)
    for j, name in enumerate(schema.features):
        if name not in schema.bin_edges:
            continue
        edges = np.asarray(schema.bin_edges[name])
        col = root[:, j]
        idx = np.searchsorted(edges, np.nan_to_num(col, nan=-np.inf), side="left")
        block = np.zeros((n, len(edges) + 1))
        block[np.arange(n), idx] = 1.0
        blocks.append(block)
    blocks.append(np.array([[is_weekend(f.session_start)] for f in facts], dtype=float).reshape(n, 1))
    vocab_index = {name: i for i, name in enumerate(schema.vocabulary)}
    other = vocab_index["OTHER"]
    types = []
    onehot = np.zeros((n, len(schema.vocabulary)))
    for i, f in enumerate(facts):
        name = type_map.classify(f.game_name).name
        k = vocab_index.get(name, other)
        onehot[i, k] = 1.0
        types.append(schema.vocabulary[k])
    blocks.append(onehot)
    X = np.hstack(blocks)
    ping = np.array([f.wtfast_ping for f in facts], dtype=float)
    return FeatureMatrix(schema.columns, X, ping, schema.fingerprint,
                         schema.target_transform, tuple(types))


def select_columns(matrix: FeatureMatrix, select_list: Sequence[str]) -> FeatureMatrix:
    missing = [c for c in select_list if c not in matrix.columns]
    if missing:
        raise FeatureError(f"unknown columns in select list: {missing}")
    if not select_list:
        raise FeatureError("select list is empty")
    idx = [matrix.columns.index(c) for c in select_list]
    return replace(matrix, columns=tuple(select_list), X=matrix.X[:, idx])
